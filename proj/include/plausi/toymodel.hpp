#pragma once

// A minimal trainable next-action model: mean-pooled token context, one tanh
// layer, masked verb/noun sub-vocabularies over the alternating token stream
// v1 n1 v2 n2 ... Gradients are hand-derived; training is single-threaded and
// bit-deterministic given the seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "plausi/constraints.hpp"
#include "plausi/corpus.hpp"
#include "plausi/counterfactual.hpp"
#include "plausi/embedding.hpp"
#include "plausi/losses.hpp"
#include "plausi/metrics.hpp"
#include "plausi/rng.hpp"

namespace plausi {

// Tokens: verb ids, then noun ids shifted by n_verbs, then BOS last.
struct ModelParams {
    int n_verbs = 0;
    int n_nouns = 0;
    int dim = 0;
    Vec token_table;     // n_tokens x dim
    Vec context_weight;  // dim x dim, row-major
    Vec output_weight;   // n_tokens x dim (logit k = row k . h)
    Vec pair_weight;     // plausibility head, dim x 2*dim
    Vec pair_bias;       // dim

    int n_tokens() const { return n_verbs + n_nouns + 1; }
    int bos_token() const { return n_verbs + n_nouns; }
    int verb_token(int verb_id) const { return verb_id; }
    int noun_token(int noun_id) const { return n_verbs + noun_id; }
};

inline ModelParams make_model(int n_verbs, int n_nouns, int dim, Rng& rng, double scale = 0.1) {
    if (n_verbs < 1 || n_nouns < 1) throw std::invalid_argument("make_model: empty vocabulary");
    if (dim < 2) throw std::invalid_argument("make_model: dim must be >= 2");
    ModelParams p;
    p.n_verbs = n_verbs;
    p.n_nouns = n_nouns;
    p.dim = dim;
    const std::size_t nt = static_cast<std::size_t>(p.n_tokens());
    const std::size_t d = static_cast<std::size_t>(dim);
    p.token_table.resize(nt * d);
    p.context_weight.resize(d * d);
    p.output_weight.resize(nt * d);
    p.pair_weight.resize(d * 2 * d);
    p.pair_bias.assign(d, 0.0);
    for (double& x : p.token_table) x = scale * rng.normal();
    for (double& x : p.context_weight) x = scale * rng.normal();
    for (double& x : p.output_weight) x = scale * rng.normal();
    for (double& x : p.pair_weight) x = scale * rng.normal();
    return p;
}

// The contrastive head sees action embeddings tied to the language-model
// token table: row(v,n) = (token(v) + token(noun n)) / 2. This is what routes
// plausibility gradients into the generation parameters.
inline EmbedderParams make_embedder(const ModelParams& p) {
    EmbedderParams e;
    e.n_verbs = p.n_verbs;
    e.n_nouns = p.n_nouns;
    e.dim = p.dim;
    e.action_table.resize(static_cast<std::size_t>(p.n_verbs) * p.n_nouns * p.dim);
    for (int v = 0; v < p.n_verbs; ++v) {
        const double* vrow = &p.token_table[static_cast<std::size_t>(p.verb_token(v)) * p.dim];
        for (int n = 0; n < p.n_nouns; ++n) {
            const double* nrow = &p.token_table[static_cast<std::size_t>(p.noun_token(n)) * p.dim];
            double* arow = &e.action_table[(static_cast<std::size_t>(v) * p.n_nouns + n) * p.dim];
            for (int k = 0; k < p.dim; ++k) arow[k] = 0.5 * (vrow[k] + nrow[k]);
        }
    }
    e.pair_weight = p.pair_weight;
    e.pair_bias = p.pair_bias;
    return e;
}

enum class Slot { verb, noun };

struct ForwardCache {
    Vec mean;  // context mean, dim
    Vec h;     // tanh hidden, dim
};

// Logits over the active sub-vocabulary: output_weight . tanh(context_weight
// . mean(token embeddings)). Verb slots decode verbs only, noun slots nouns.
inline Vec forward(const std::vector<int>& context_tokens, Slot slot, const ModelParams& p,
                   ForwardCache* cache = nullptr) {
    if (context_tokens.empty()) throw std::invalid_argument("forward: empty context");
    const int d = p.dim;
    Vec mean(static_cast<std::size_t>(d), 0.0);
    for (int tok : context_tokens) {
        if (tok < 0 || tok >= p.n_tokens()) throw std::out_of_range("forward: unknown token id");
        const double* row = &p.token_table[static_cast<std::size_t>(tok) * d];
        for (int k = 0; k < d; ++k) mean[static_cast<std::size_t>(k)] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(context_tokens.size());
    for (double& x : mean) x *= inv;

    Vec h(static_cast<std::size_t>(d));
    for (int o = 0; o < d; ++o) {
        const double* crow = &p.context_weight[static_cast<std::size_t>(o) * d];
        double pre = 0.0;
        for (int k = 0; k < d; ++k) pre += crow[k] * mean[static_cast<std::size_t>(k)];
        h[static_cast<std::size_t>(o)] = std::tanh(pre);
    }

    const int base = (slot == Slot::verb) ? 0 : p.n_verbs;
    const int width = (slot == Slot::verb) ? p.n_verbs : p.n_nouns;
    Vec logits(static_cast<std::size_t>(width));
    for (int k = 0; k < width; ++k) {
        const double* orow = &p.output_weight[static_cast<std::size_t>(base + k) * d];
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += orow[i] * h[static_cast<std::size_t>(i)];
        logits[static_cast<std::size_t>(k)] = s;
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->h = std::move(h);
    }
    return logits;
}

struct ModelGrad {
    Vec token_table;
    Vec context_weight;
    Vec output_weight;
    Vec pair_weight;
    Vec pair_bias;
};

inline ModelGrad zero_grad_like(const ModelParams& p) {
    return {Vec(p.token_table.size(), 0.0), Vec(p.context_weight.size(), 0.0),
            Vec(p.output_weight.size(), 0.0), Vec(p.pair_weight.size(), 0.0), Vec(p.pair_bias.size(), 0.0)};
}

// Backward through forward(): d_logits (times scale) into output weights,
// context weights, and the pooled context token rows.
inline void forward_backward(const std::vector<int>& context_tokens, Slot slot, const ModelParams& p,
                             const ForwardCache& cache, const Vec& d_logits, double scale, ModelGrad& grad) {
    const int d = p.dim;
    const int base = (slot == Slot::verb) ? 0 : p.n_verbs;
    Vec d_h(static_cast<std::size_t>(d), 0.0);
    for (std::size_t k = 0; k < d_logits.size(); ++k) {
        const double g = d_logits[k] * scale;
        if (g == 0.0) continue;
        const double* orow = &p.output_weight[(static_cast<std::size_t>(base) + k) * d];
        double* gorow = &grad.output_weight[(static_cast<std::size_t>(base) + k) * d];
        for (int i = 0; i < d; ++i) {
            gorow[i] += g * cache.h[static_cast<std::size_t>(i)];
            d_h[static_cast<std::size_t>(i)] += g * orow[i];
        }
    }
    Vec d_mean(static_cast<std::size_t>(d), 0.0);
    for (int o = 0; o < d; ++o) {
        const double y = cache.h[static_cast<std::size_t>(o)];
        const double dpre = d_h[static_cast<std::size_t>(o)] * (1.0 - y * y);
        if (dpre == 0.0) continue;
        const double* crow = &p.context_weight[static_cast<std::size_t>(o) * d];
        double* gcrow = &grad.context_weight[static_cast<std::size_t>(o) * d];
        for (int k = 0; k < d; ++k) {
            gcrow[k] += dpre * cache.mean[static_cast<std::size_t>(k)];
            d_mean[static_cast<std::size_t>(k)] += dpre * crow[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(context_tokens.size());
    for (int tok : context_tokens) {
        double* trow = &grad.token_table[static_cast<std::size_t>(tok) * d];
        for (int k = 0; k < d; ++k) trow[k] += d_mean[static_cast<std::size_t>(k)] * inv;
    }
}

enum class LossVariant { nll, rep, rep_focal };

inline std::string to_string(LossVariant v) {
    switch (v) {
        case LossVariant::nll: return "nll";
        case LossVariant::rep: return "rep";
        case LossVariant::rep_focal: return "rep_focal";
    }
    throw std::logic_error("unknown loss variant");
}

inline LossVariant parse_loss_variant(const std::string& s) {
    if (s == "nll") return LossVariant::nll;
    if (s == "rep") return LossVariant::rep;
    if (s == "rep_focal") return LossVariant::rep_focal;
    throw std::invalid_argument("unknown loss variant '" + s + "' (expected nll|rep|rep_focal)");
}

struct TrainConfig {
    int epochs = 40;
    double learning_rate = 0.1;
    int batch_size = 8;
    std::uint64_t seed = 1;
    double alpha = 0.5;
    double beta = 0.5;
    double tau = 0.3;
    double sigma_jitter = 0.1;
    LossVariant loss_variant = LossVariant::rep;
    bool use_plau = true;
    int horizon = 4;  // Z, actions per target
    int K = 5;        // candidates at evaluation time
    double mix = 0.5; // temporal-vs-verbnoun counterfactual ratio
    // model / windowing plumbing
    int dim = 16;
    int observation_len = 3;
    int gap = 0;
    int min_support = 1;
};

inline void validate_train_config(const TrainConfig& c) {
    if (c.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (!(c.learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
    if (c.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (c.alpha < 0.0 || c.beta < 0.0) throw std::invalid_argument("train: alpha/beta must be >= 0");
    if (!(c.tau > 0.0)) throw std::invalid_argument("train: tau must be > 0");
    if (!(c.sigma_jitter >= 0.0)) throw std::invalid_argument("train: sigma_jitter must be >= 0");
    if (c.horizon < 1 || c.K < 1) throw std::invalid_argument("train: horizon and K must be >= 1");
    if (c.mix < 0.0 || c.mix > 1.0) throw std::invalid_argument("train: mix must be in [0,1]");
    if (c.dim < 2) throw std::invalid_argument("train: dim must be >= 2");
    if (c.observation_len < 1 || c.gap < 0) throw std::invalid_argument("train: bad window");
    if (c.min_support < 1) throw std::invalid_argument("train: min_support must be >= 1");
}

struct EpochStats {
    int epoch = 0;
    double plau = 0.0;  // mean per plau-carrying example (0 when disabled)
    double rep = 0.0;   // mean generation loss per example
    double total = 0.0;
    double holdout_repetition = 0.0;
    double holdout_compliance = 0.0;  // followed fraction
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
    TemporalConstraintMatrix temp;
    VerbNounConstraintMatrix act;
    std::size_t train_windows = 0;
    std::size_t holdout_windows = 0;
    std::size_t cf_dropped = 0;
};

struct DecodeConfig {
    enum class Kind { greedy, topk, sample } kind = Kind::greedy;
    int k = 5;                 // top-k width for Kind::topk
    double temperature = 1.0;  // for topk/sample
};

namespace detail {

inline std::vector<int> stream_tokens(const ModelParams& p, const ActionSequence& prefix) {
    std::vector<int> tokens;
    tokens.reserve(1 + 2 * prefix.actions.size());
    tokens.push_back(p.bos_token());
    for (const Action& a : prefix.actions) {
        tokens.push_back(p.verb_token(a.verb_id));
        tokens.push_back(p.noun_token(a.noun_id));
    }
    return tokens;
}

inline std::vector<std::size_t> rank_desc(const Vec& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

inline int sample_index(const Vec& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;  // guard against rounding
}

}  // namespace detail

// K candidate continuations of Z actions each. Greedy decoding with K > 1
// branches on the K best first tokens, then continues greedily; top-k and
// full sampling draw from per-candidate RNG substreams.
inline std::vector<ActionSequence> generate(const ActionSequence& prefix, const ModelParams& p, int Z, int K,
                                            const DecodeConfig& decode, Rng& rng) {
    if (Z < 1 || K < 1) throw std::invalid_argument("generate: Z and K must be >= 1");
    if (decode.kind != DecodeConfig::Kind::greedy) {
        if (!(decode.temperature > 0.0)) throw std::invalid_argument("generate: temperature must be > 0");
        if (decode.kind == DecodeConfig::Kind::topk && decode.k < 1)
            throw std::invalid_argument("generate: top-k width must be >= 1");
    }
    const std::vector<int> base = detail::stream_tokens(p, prefix);

    std::vector<ActionSequence> out;
    out.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) {
        Rng crng = rng.fork(static_cast<std::uint64_t>(c));
        std::vector<int> context = base;
        ActionSequence seq;
        seq.id = prefix.id + "#" + std::to_string(c);
        Action pending{};
        for (int t = 0; t < 2 * Z; ++t) {
            const Slot slot = (t % 2 == 0) ? Slot::verb : Slot::noun;
            const Vec logits = forward(context, slot, p);
            int pick;
            switch (decode.kind) {
                case DecodeConfig::Kind::greedy: {
                    const auto order = detail::rank_desc(logits);
                    // branch candidates on their first token; clamp when K
                    // exceeds the sub-vocabulary
                    const std::size_t branch = (t == 0 && K > 1)
                                                   ? std::min(static_cast<std::size_t>(c), order.size() - 1)
                                                   : 0;
                    pick = static_cast<int>(order[branch]);
                    break;
                }
                case DecodeConfig::Kind::topk: {
                    const auto order = detail::rank_desc(logits);
                    const std::size_t width = std::min(static_cast<std::size_t>(decode.k), order.size());
                    Vec top(width);
                    for (std::size_t i = 0; i < width; ++i) top[i] = logits[order[i]] / decode.temperature;
                    const Vec probs = detail::softmax_row(top);
                    pick = static_cast<int>(order[static_cast<std::size_t>(detail::sample_index(probs, crng))]);
                    break;
                }
                case DecodeConfig::Kind::sample: {
                    Vec scaled(logits.size());
                    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / decode.temperature;
                    pick = detail::sample_index(detail::softmax_row(scaled), crng);
                    break;
                }
                default:
                    throw std::logic_error("generate: unknown decode kind");
            }
            if (slot == Slot::verb) {
                pending.verb_id = pick;
                context.push_back(p.verb_token(pick));
            } else {
                pending.noun_id = pick;
                context.push_back(p.noun_token(pick));
                seq.actions.push_back(pending);
            }
        }
        out.push_back(std::move(seq));
    }
    return out;
}

// One optimizer-step objective on a batch: beta * mean generation loss +
// alpha * contrastive plausibility loss, with its full hand-derived gradient
// (including the tied-embedding paths). Augmentation noise comes in
// explicitly, so the whole step is finite-difference checkable.
struct BatchItem {
    const WindowExample* example = nullptr;
    const ActionSequence* target_cf = nullptr;  // null: no plausibility term for this item
    const Vec* noise = nullptr;                 // additive jitter defining v_aug = v + noise
};

struct BatchOutcome {
    double rep_mean = 0.0;  // generation loss averaged over the batch
    double plau = 0.0;      // contrastive loss (mean over carrying items, 0 if none)
    std::size_t plau_count = 0;
    ModelGrad grad;
};

inline double batch_objective(const BatchOutcome& o, const TrainConfig& c) {
    return c.beta * o.rep_mean + c.alpha * o.plau;
}

inline BatchOutcome compute_batch(const ModelParams& params, const std::vector<BatchItem>& batch,
                                  const Vec& gammas, const TrainConfig& config) {
    if (batch.empty()) throw std::invalid_argument("compute_batch: empty batch");
    const int T = static_cast<int>(gammas.size());
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    BatchOutcome out;
    out.grad = zero_grad_like(params);
    const EmbedderParams embedder = make_embedder(params);
    std::vector<PlauExample> plau_batch;
    std::vector<const ActionSequence*> plau_prefixes;

    for (const BatchItem& item : batch) {
        const WindowExample& ex = *item.example;
        if (2 * static_cast<int>(ex.target.actions.size()) < T)
            throw std::invalid_argument("compute_batch: target shorter than the token schedule");
        std::vector<int> context = detail::stream_tokens(params, ex.prefix);

        std::vector<Vec> logits_rows;
        std::vector<int> targets;
        std::vector<ForwardCache> caches(static_cast<std::size_t>(T));
        std::vector<std::size_t> context_lens(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            const Slot slot = (t % 2 == 0) ? Slot::verb : Slot::noun;
            context_lens[static_cast<std::size_t>(t)] = context.size();
            logits_rows.push_back(forward(context, slot, params, &caches[static_cast<std::size_t>(t)]));
            const Action& a = ex.target.actions[static_cast<std::size_t>(t / 2)];
            if (slot == Slot::verb) {
                targets.push_back(a.verb_id);
                context.push_back(params.verb_token(a.verb_id));
            } else {
                targets.push_back(a.noun_id);
                context.push_back(params.noun_token(a.noun_id));
            }
        }

        const LossReport rep_report = (config.loss_variant == LossVariant::rep_focal)
                                          ? loss_rep_focal(logits_rows, targets, gammas)
                                          : loss_rep(logits_rows, targets, gammas);
        out.rep_mean += rep_report.value * inv_batch;

        std::size_t offset = 0;
        for (int t = 0; t < T; ++t) {
            const Slot slot = (t % 2 == 0) ? Slot::verb : Slot::noun;
            const std::size_t width = logits_rows[static_cast<std::size_t>(t)].size();
            Vec d_row(rep_report.gradient.begin() + static_cast<std::ptrdiff_t>(offset),
                      rep_report.gradient.begin() + static_cast<std::ptrdiff_t>(offset + width));
            const std::vector<int> ctx(
                context.begin(),
                context.begin() + static_cast<std::ptrdiff_t>(context_lens[static_cast<std::size_t>(t)]));
            forward_backward(ctx, slot, params, caches[static_cast<std::size_t>(t)], d_row,
                             config.beta * inv_batch, out.grad);
            offset += width;
        }

        if (item.target_cf) {
            if (!item.noise) throw std::logic_error("compute_batch: counterfactual without noise");
            PlauExample pe;
            pe.v = encode_prefix(ex.prefix, embedder);
            pe.v_aug = pe.v;
            for (std::size_t i = 0; i < pe.v_aug.size(); ++i) pe.v_aug[i] += (*item.noise)[i];
            pe.t = ex.target;
            pe.t_cf = *item.target_cf;
            plau_batch.push_back(std::move(pe));
            plau_prefixes.push_back(&ex.prefix);
        }
    }

    if (!plau_batch.empty()) {
        const PlauResult pr = loss_plau(plau_batch, embedder, config.tau);
        out.plau = pr.value;
        out.plau_count = plau_batch.size();

        for (std::size_t i = 0; i < pr.grad.pair_weight.size(); ++i)
            out.grad.pair_weight[i] += config.alpha * pr.grad.pair_weight[i];
        for (std::size_t i = 0; i < pr.grad.pair_bias.size(); ++i)
            out.grad.pair_bias[i] += config.alpha * pr.grad.pair_bias[i];

        // tied embeddings: an action row (v,n) feeds half into each token row
        for (int v = 0; v < params.n_verbs; ++v) {
            for (int n = 0; n < params.n_nouns; ++n) {
                const double* arow =
                    &pr.grad.action_table[(static_cast<std::size_t>(v) * params.n_nouns + n) * params.dim];
                double* vrow = &out.grad.token_table[static_cast<std::size_t>(params.verb_token(v)) * params.dim];
                double* nrow = &out.grad.token_table[static_cast<std::size_t>(params.noun_token(n)) * params.dim];
                for (int k = 0; k < params.dim; ++k) {
                    const double g = 0.5 * config.alpha * arow[k];
                    vrow[k] += g;
                    nrow[k] += g;
                }
            }
        }
        // gradient w.r.t. v and v_aug flows through the prefix mean
        for (std::size_t i = 0; i < plau_batch.size(); ++i) {
            const ActionSequence& prefix = *plau_prefixes[i];
            const double inv_len = 1.0 / static_cast<double>(prefix.actions.size());
            for (const Action& a : prefix.actions) {
                double* vrow =
                    &out.grad.token_table[static_cast<std::size_t>(params.verb_token(a.verb_id)) * params.dim];
                double* nrow =
                    &out.grad.token_table[static_cast<std::size_t>(params.noun_token(a.noun_id)) * params.dim];
                for (int k = 0; k < params.dim; ++k) {
                    const double g = 0.5 * config.alpha * inv_len *
                                     (pr.d_v[i][static_cast<std::size_t>(k)] +
                                      pr.d_v_aug[i][static_cast<std::size_t>(k)]);
                    vrow[k] += g;
                    nrow[k] += g;
                }
            }
        }
    }
    return out;
}

// SGD trainer. Mines constraints from the training split (first 80% of
// sequences), fixes one counterfactual per window up front, then per batch
// combines the teacher-forced generation loss (chosen variant, schedule over
// the 2Z-token stream) with the contrastive plausibility loss on fresh
// augmentations. Gradients are clipped to global norm 10.
inline TrainResult train(const Corpus& corpus, const TrainConfig& config) {
    validate_train_config(config);
    if (corpus.sequences.empty()) throw std::invalid_argument("train: empty corpus");

    const std::size_t n_hold = corpus.sequences.size() / 5;  // last 20% held out
    Corpus train_split{{corpus.sequences.begin(), corpus.sequences.end() - static_cast<std::ptrdiff_t>(n_hold)},
                       corpus.verb_vocab,
                       corpus.noun_vocab};
    Corpus hold_split{{corpus.sequences.end() - static_cast<std::ptrdiff_t>(n_hold), corpus.sequences.end()},
                      corpus.verb_vocab,
                      corpus.noun_vocab};

    TrainResult result;
    result.temp = mine_temporal(train_split, config.min_support);
    result.act = mine_verb_noun(train_split);

    const AnticipationWindow window{config.observation_len, config.gap, config.horizon};
    const WindowedExamples train_windows = window_examples(train_split, window);
    if (train_windows.examples.empty()) throw std::invalid_argument("train: no examples after windowing");
    const WindowedExamples hold_windows = window_examples(hold_split, window);
    result.train_windows = train_windows.examples.size();
    result.holdout_windows = hold_windows.examples.size();

    const Rng root(config.seed);
    Rng init_rng = root.fork("init");
    ModelParams params = make_model(corpus.n_verbs(), corpus.n_nouns(), config.dim, init_rng);

    // One fixed counterfactual target per window (examples where neither edit
    // family applies simply carry no plausibility term).
    std::vector<std::optional<ActionSequence>> target_cf(train_windows.examples.size());
    {
        Rng cf_rng = root.fork("cf");
        const std::uint64_t cf_base = cf_rng.next_u64();
        for (std::size_t k = 0; k < train_windows.examples.size(); ++k) {
            Rng ex_rng(derive_seed(cf_base, static_cast<std::uint64_t>(k)));
            const auto sample = sample_cf(train_windows.examples[k].target, result.temp, result.act, ex_rng, config.mix);
            if (sample) target_cf[k] = sample->counterfactual;
            else ++result.cf_dropped;
        }
    }

    const int T = 2 * config.horizon;
    Vec gammas;
    if (config.loss_variant == LossVariant::nll) gammas.assign(static_cast<std::size_t>(T), 1.0);
    else gammas = gamma_schedule(T).values;

    Rng aug_rng = root.fork("augment");
    const std::size_t n_examples = train_windows.examples.size();
    std::vector<std::size_t> order(n_examples);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng epoch_rng(derive_seed(derive_seed(config.seed, "epoch"), static_cast<std::uint64_t>(epoch)));
        epoch_rng.shuffle(order);

        double epoch_rep = 0.0, epoch_plau = 0.0;
        std::size_t plau_examples = 0;

        for (std::size_t begin = 0; begin < n_examples; begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(begin + static_cast<std::size_t>(config.batch_size), n_examples);
            std::vector<BatchItem> batch(end - begin);
            std::vector<Vec> noises(end - begin);
            for (std::size_t bi = begin; bi < end; ++bi) {
                const std::size_t k = order[bi];
                BatchItem& item = batch[bi - begin];
                item.example = &train_windows.examples[k];
                if (config.use_plau && target_cf[k]) {
                    noises[bi - begin] =
                        augment(Vec(static_cast<std::size_t>(config.dim), 0.0), aug_rng, config.sigma_jitter);
                    item.target_cf = &*target_cf[k];
                    item.noise = &noises[bi - begin];
                }
            }

            const BatchOutcome outcome = compute_batch(params, batch, gammas, config);
            epoch_rep += outcome.rep_mean * static_cast<double>(end - begin);
            epoch_plau += outcome.plau * static_cast<double>(outcome.plau_count);
            plau_examples += outcome.plau_count;

            // clip to global norm 10, then SGD step
            double norm_sq = 0.0;
            for (const Vec* g : {&outcome.grad.token_table, &outcome.grad.context_weight,
                                 &outcome.grad.output_weight, &outcome.grad.pair_weight, &outcome.grad.pair_bias})
                for (double x : *g) norm_sq += x * x;
            const double norm = std::sqrt(norm_sq);
            const double clip = (norm > 10.0) ? 10.0 / norm : 1.0;
            const double step = config.learning_rate * clip;
            auto apply = [step](Vec& param, const Vec& g) {
                for (std::size_t i = 0; i < param.size(); ++i) param[i] -= step * g[i];
            };
            apply(params.token_table, outcome.grad.token_table);
            apply(params.context_weight, outcome.grad.context_weight);
            apply(params.output_weight, outcome.grad.output_weight);
            apply(params.pair_weight, outcome.grad.pair_weight);
            apply(params.pair_bias, outcome.grad.pair_bias);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.rep = epoch_rep / static_cast<double>(n_examples);
        stats.plau = (plau_examples > 0) ? epoch_plau / static_cast<double>(plau_examples) : 0.0;
        stats.total = loss_total(stats.plau, stats.rep, config.alpha, config.beta);

        // greedy generations on the held-out windows (train windows when the
        // hold-out is too small to window)
        const auto& probe = hold_windows.examples.empty() ? train_windows.examples : hold_windows.examples;
        std::vector<ActionSequence> greedy;
        greedy.reserve(probe.size());
        Rng gen_rng(derive_seed(config.seed, "holdout"));
        for (const WindowExample& ex : probe)
            greedy.push_back(generate(ex.prefix, params, config.horizon, 1, DecodeConfig{}, gen_rng).front());
        stats.holdout_repetition = repetition_score(greedy);
        stats.holdout_compliance = compliance_rate(greedy, result.temp, result.act).followed_fraction();
        result.history.push_back(stats);
    }

    result.params = std::move(params);
    return result;
}

// Adapter exposing a trained model to evaluate(). Rankings break ties by
// lowest id; sub-vocabularies smaller than 5 pad with negative sentinels.
class ModelPredictor final : public Predictor {
public:
    ModelPredictor(const ModelParams& params, DecodeConfig decode, std::uint64_t seed)
        : params_(params), decode_(decode), seed_(seed) {}

    std::vector<ActionSequence> candidates(const ActionSequence& prefix, int horizon, int K) override {
        Rng rng(derive_seed(seed_, prefix.id));  // per-prefix stream: order-independent
        return generate(prefix, params_, horizon, K, decode_, rng);
    }

    Top5 top5_next(const ActionSequence& prefix) override {
        std::vector<int> context = detail::stream_tokens(params_, prefix);
        const Vec verb_probs = detail::softmax_row(forward(context, Slot::verb, params_));

        // joint p(v,n) = p(v) p(n|v); noun ranking uses the marginal
        Vec noun_marginal(static_cast<std::size_t>(params_.n_nouns), 0.0);
        Vec joint(static_cast<std::size_t>(params_.n_verbs) * params_.n_nouns, 0.0);
        for (int v = 0; v < params_.n_verbs; ++v) {
            context.push_back(params_.verb_token(v));
            const Vec noun_probs = detail::softmax_row(forward(context, Slot::noun, params_));
            context.pop_back();
            for (int n = 0; n < params_.n_nouns; ++n) {
                const double p = verb_probs[static_cast<std::size_t>(v)] * noun_probs[static_cast<std::size_t>(n)];
                joint[static_cast<std::size_t>(v) * params_.n_nouns + n] = p;
                noun_marginal[static_cast<std::size_t>(n)] += p;
            }
        }

        Top5 top;
        auto take5 = [](const Vec& scores, auto to_class) {
            std::vector<long long> out;
            const auto order = detail::rank_desc(scores);
            for (std::size_t r = 0; r < 5; ++r) {
                if (r < order.size()) out.push_back(to_class(order[r]));
                else out.push_back(-1 - static_cast<long long>(r));  // sentinel pad
            }
            return out;
        };
        top.verbs = take5(verb_probs, [](std::size_t i) { return static_cast<long long>(i); });
        top.nouns = take5(noun_marginal, [](std::size_t i) { return static_cast<long long>(i); });
        top.actions = take5(joint, [this](std::size_t i) {
            return action_class(Action{static_cast<int>(i) / params_.n_nouns,
                                       static_cast<int>(i) % params_.n_nouns});
        });
        return top;
    }

private:
    ModelParams params_;
    DecodeConfig decode_;
    std::uint64_t seed_;
};

// --- checkpoint / history serialization

inline void save_model(const ModelParams& p, const std::vector<std::string>& verb_vocab,
                       const std::vector<std::string>& noun_vocab, std::ostream& out) {
    nlohmann::ordered_json j;
    j["format"] = "plausi-model";
    j["version"] = 1;
    j["dim"] = p.dim;
    j["verb_vocab"] = verb_vocab;
    j["noun_vocab"] = noun_vocab;
    const int nt = p.n_tokens();
    j["token_table"] = tensor_json({nt, p.dim}, p.token_table);
    j["context_weight"] = tensor_json({p.dim, p.dim}, p.context_weight);
    j["output_weight"] = tensor_json({nt, p.dim}, p.output_weight);
    j["pair_weight"] = tensor_json({p.dim, 2 * p.dim}, p.pair_weight);
    j["pair_bias"] = tensor_json({p.dim}, p.pair_bias);
    out << j.dump() << "\n";
}

struct LoadedModel {
    ModelParams params;
    std::vector<std::string> verb_vocab;
    std::vector<std::string> noun_vocab;
};

inline LoadedModel load_model(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    if (j.value("format", "") != "plausi-model") throw std::runtime_error("checkpoint: not a model file");
    LoadedModel m;
    m.verb_vocab = j.at("verb_vocab").get<std::vector<std::string>>();
    m.noun_vocab = j.at("noun_vocab").get<std::vector<std::string>>();
    m.params.n_verbs = static_cast<int>(m.verb_vocab.size());
    m.params.n_nouns = static_cast<int>(m.noun_vocab.size());
    m.params.dim = j.at("dim").get<int>();
    const int nt = m.params.n_tokens();
    const int d = m.params.dim;
    m.params.token_table = tensor_from_json(j.at("token_table"), {nt, d});
    m.params.context_weight = tensor_from_json(j.at("context_weight"), {d, d});
    m.params.output_weight = tensor_from_json(j.at("output_weight"), {nt, d});
    m.params.pair_weight = tensor_from_json(j.at("pair_weight"), {d, 2 * d});
    m.params.pair_bias = tensor_from_json(j.at("pair_bias"), {d});
    return m;
}

// Re-index a corpus against a checkpoint's vocabulary (matching by string).
inline Corpus remap_corpus(const Corpus& corpus, const std::vector<std::string>& verb_vocab,
                           const std::vector<std::string>& noun_vocab) {
    std::unordered_map<std::string, int> verb_ids, noun_ids;
    for (std::size_t i = 0; i < verb_vocab.size(); ++i) verb_ids.emplace(verb_vocab[i], static_cast<int>(i));
    for (std::size_t i = 0; i < noun_vocab.size(); ++i) noun_ids.emplace(noun_vocab[i], static_cast<int>(i));
    Corpus out;
    out.verb_vocab = verb_vocab;
    out.noun_vocab = noun_vocab;
    for (const auto& seq : corpus.sequences) {
        ActionSequence mapped;
        mapped.id = seq.id;
        for (const Action& a : seq.actions) {
            const auto vit = verb_ids.find(corpus.verb_vocab.at(static_cast<std::size_t>(a.verb_id)));
            const auto nit = noun_ids.find(corpus.noun_vocab.at(static_cast<std::size_t>(a.noun_id)));
            if (vit == verb_ids.end() || nit == noun_ids.end())
                throw std::runtime_error("sequence '" + seq.id + "' uses a token unknown to the checkpoint");
            mapped.actions.push_back({vit->second, nit->second});
        }
        out.sequences.push_back(std::move(mapped));
    }
    return out;
}

inline void save_history(const std::vector<EpochStats>& history, std::ostream& out) {
    for (const EpochStats& s : history) {
        nlohmann::ordered_json j;
        j["step"] = s.epoch;
        j["plau"] = s.plau;
        j["rep"] = s.rep;
        j["total"] = s.total;
        j["holdout_repetition"] = s.holdout_repetition;
        j["holdout_compliance"] = s.holdout_compliance;
        out << j.dump() << "\n";
    }
}

}  // namespace plausi
