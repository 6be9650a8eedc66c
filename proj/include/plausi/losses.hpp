#pragma once

// Training objectives: the position-weighted repetition losses (linear-gamma
// and focal variants), the contrastive plausibility loss over counterfactual
// pairs, the gamma schedule, and the combined objective. All gradients are
// hand-derived; finite-difference tests pin them.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "plausi/corpus.hpp"
#include "plausi/embedding.hpp"

namespace plausi {

inline constexpr double kProbEps = 1e-12;

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Per-token penalty weights, strictly increasing from gamma_min to gamma_max.
struct GammaSchedule {
    Vec values;
    double gamma_min = 0.0;
    double gamma_max = 2.0;
};

// T linearly spaced values over [gamma_min, gamma_max] inclusive; T = 1
// returns just gamma_max (a single future token is the farthest one).
inline GammaSchedule gamma_schedule(int T, double gamma_min = 0.0, double gamma_max = 2.0) {
    if (T < 1) throw std::invalid_argument("gamma_schedule: T must be >= 1");
    if (!(gamma_min < gamma_max)) throw std::invalid_argument("gamma_schedule: gamma_min must be < gamma_max");
    GammaSchedule s;
    s.gamma_min = gamma_min;
    s.gamma_max = gamma_max;
    if (T == 1) {
        s.values = {gamma_max};
        return s;
    }
    s.values.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        s.values[static_cast<std::size_t>(t)] =
            gamma_min + (gamma_max - gamma_min) * static_cast<double>(t) / static_cast<double>(T - 1);
    s.values.front() = gamma_min;
    s.values.back() = gamma_max;
    return s;
}

struct LossReport {
    double value = 0.0;
    Vec per_term;
    Vec gradient;  // flat, layout documented per loss
};

namespace detail {

inline Vec softmax_row(const Vec& logits) {
    double mx = logits[0];
    for (double x : logits) {
        if (!std::isfinite(x)) throw std::invalid_argument("loss: non-finite logit");
        mx = std::max(mx, x);
    }
    Vec q(logits.size());
    double z = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        q[j] = std::exp(logits[j] - mx);
        z += q[j];
    }
    for (double& x : q) x /= z;
    return q;
}

inline void validate_rep_inputs(const std::vector<Vec>& logits, const std::vector<int>& targets,
                                const Vec& gammas) {
    if (logits.size() != targets.size() || logits.size() != gammas.size())
        throw std::invalid_argument("loss: logits/targets/gammas length mismatch");
    for (std::size_t t = 0; t < logits.size(); ++t) {
        if (logits[t].empty()) throw std::invalid_argument("loss: empty logit row");
        if (targets[t] < 0 || targets[t] >= static_cast<int>(logits[t].size()))
            throw std::invalid_argument("loss: target index out of range");
    }
}

}  // namespace detail

// Sum_t -gamma_t * log p_t with p_t the softmax probability of the target at
// step t. Gradient w.r.t. logits (rows concatenated in the flat vector):
// row t = gamma_t * (softmax(row t) - onehot(target_t)). Rows may have
// different widths (masked sub-vocabularies).
inline LossReport loss_rep(const std::vector<Vec>& logits, const std::vector<int>& targets, const Vec& gammas) {
    detail::validate_rep_inputs(logits, targets, gammas);
    LossReport report;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        const Vec q = detail::softmax_row(logits[t]);
        const double p = q[static_cast<std::size_t>(targets[t])];
        const double gamma = gammas[t];
        const double term = -gamma * std::log(std::max(p, kProbEps));
        report.per_term.push_back(term);
        report.value += term;
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double onehot = (static_cast<int>(j) == targets[t]) ? 1.0 : 0.0;
            report.gradient.push_back(gamma * (q[j] - onehot));
        }
    }
    return report;
}

inline LossReport loss_rep(const std::vector<Vec>& logits, const std::vector<int>& targets,
                           const GammaSchedule& schedule) {
    return loss_rep(logits, targets, schedule.values);
}

// Focal variant: Sum_t -(1 - p_t)^{gamma_t} * log p_t. The derivative w.r.t.
// p is gamma*u^{gamma-1}*log(p) - u^gamma/p with u = 1-p (product rule),
// chained through softmax as dL/dlogit_j = dL/dp * p * (onehot_j - q_j).
inline LossReport loss_rep_focal(const std::vector<Vec>& logits, const std::vector<int>& targets,
                                 const Vec& gammas) {
    detail::validate_rep_inputs(logits, targets, gammas);
    LossReport report;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        const Vec q = detail::softmax_row(logits[t]);
        const double p = q[static_cast<std::size_t>(targets[t])];
        const double gamma = gammas[t];
        const double u = 1.0 - p;
        const double logp = std::log(std::max(p, kProbEps));
        const double u_pow = (u <= 0.0) ? (gamma == 0.0 ? 1.0 : 0.0) : std::pow(u, gamma);
        const double term = -u_pow * logp;
        report.per_term.push_back(term);
        report.value += term;

        // dL/dp; the u <= 0 limit is 0 for gamma > 0 and -1/p for gamma = 0.
        double dLdp;
        if (u <= 0.0) {
            dLdp = (gamma == 0.0) ? -1.0 / std::max(p, kProbEps) : 0.0;
        } else {
            const double d_upow = (gamma == 0.0) ? 0.0 : gamma * std::pow(u, gamma - 1.0);
            dLdp = d_upow * logp - (p >= kProbEps ? u_pow / p : 0.0);
        }
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double onehot = (static_cast<int>(j) == targets[t]) ? 1.0 : 0.0;
            report.gradient.push_back(dLdp * p * (onehot - q[j]));
        }
    }
    return report;
}

inline LossReport loss_rep_focal(const std::vector<Vec>& logits, const std::vector<int>& targets,
                                 const GammaSchedule& schedule) {
    return loss_rep_focal(logits, targets, schedule.values);
}

struct ZScores {
    double z_pos = 0.0;
    double z_neg = 0.0;
    bool degenerate = false;  // some cosine saw a near-zero norm
};

// z_pos = sigmoid(sim(pair(v,t), pair(v_aug,t)) / tau),
// z_neg = sigmoid(sim(pair(v,t), pair(v,t_cf)) / tau).
inline ZScores z_scores(const Vec& v, const Vec& v_aug, const ActionSequence& t, const ActionSequence& t_cf,
                        const EmbedderParams& params, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("z_scores: tau must be > 0");
    const Vec e_vt = pair_embed(v, t, params);
    const Vec e_at = pair_embed(v_aug, t, params);
    const Vec e_vcf = pair_embed(v, t_cf, params);
    ZScores z;
    bool deg_pos = false, deg_neg = false;
    z.z_pos = stable_sigmoid(cosine_sim(e_vt, e_at, &deg_pos) / tau);
    z.z_neg = stable_sigmoid(cosine_sim(e_vt, e_vcf, &deg_neg) / tau);
    z.degenerate = deg_pos || deg_neg;
    return z;
}

struct PlauExample {
    Vec v;
    Vec v_aug;
    ActionSequence t;
    ActionSequence t_cf;
};

struct PlauResult {
    double value = 0.0;
    Vec per_term;               // per-example -log(z_pos) - log(1 - z_neg)
    EmbedderGrad grad;          // w.r.t. embedder parameters, already batch-averaged
    std::vector<Vec> d_v;       // per-example gradient w.r.t. the v input (batch-averaged)
    std::vector<Vec> d_v_aug;   // per-example gradient w.r.t. the v_aug input (batch-averaged)
    std::size_t degenerate_count = 0;
};

// Mean over the batch of -log(z_pos) - log(1 - z_neg). The similarity-level
// derivatives collapse to -(1 - z_pos)/tau and z_neg/tau, which stay finite
// even where the probability clamps bind; they flow back through cosine and
// the three pair embeddings.
inline PlauResult loss_plau(const std::vector<PlauExample>& batch, const EmbedderParams& params, double tau) {
    if (batch.empty()) throw std::invalid_argument("loss_plau: empty batch");
    if (!(tau > 0.0)) throw std::invalid_argument("loss_plau: tau must be > 0");

    PlauResult result;
    result.grad = zero_grad_like(params);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    for (const PlauExample& ex : batch) {
        PairEmbedCache cache_vt, cache_at, cache_vcf;
        const Vec e_vt = pair_embed(ex.v, ex.t, params, &cache_vt);
        const Vec e_at = pair_embed(ex.v_aug, ex.t, params, &cache_at);
        const Vec e_vcf = pair_embed(ex.v, ex.t_cf, params, &cache_vcf);

        bool deg_pos = false, deg_neg = false;
        const double s_pos = cosine_sim(e_vt, e_at, &deg_pos);
        const double s_neg = cosine_sim(e_vt, e_vcf, &deg_neg);
        if (deg_pos || deg_neg) ++result.degenerate_count;

        const double z_pos = stable_sigmoid(s_pos / tau);
        const double z_neg = stable_sigmoid(s_neg / tau);
        const double term = -std::log(std::clamp(z_pos, kProbEps, 1.0 - kProbEps)) -
                            std::log(1.0 - std::clamp(z_neg, kProbEps, 1.0 - kProbEps));
        result.per_term.push_back(term);
        result.value += term;

        const double d_s_pos = -(1.0 - z_pos) / tau * inv_b;
        const double d_s_neg = z_neg / tau * inv_b;

        Vec d_e_vt(e_vt.size(), 0.0), d_e_at(e_at.size(), 0.0), d_e_vcf(e_vcf.size(), 0.0);
        cosine_backward(e_vt, e_at, d_s_pos, d_e_vt, d_e_at);
        cosine_backward(e_vt, e_vcf, d_s_neg, d_e_vt, d_e_vcf);

        Vec d_v(ex.v.size(), 0.0), d_v_aug(ex.v_aug.size(), 0.0);
        pair_embed_backward(ex.t, params, cache_vt, d_e_vt, result.grad, d_v);
        pair_embed_backward(ex.t, params, cache_at, d_e_at, result.grad, d_v_aug);
        pair_embed_backward(ex.t_cf, params, cache_vcf, d_e_vcf, result.grad, d_v);
        result.d_v.push_back(std::move(d_v));
        result.d_v_aug.push_back(std::move(d_v_aug));
    }
    result.value *= inv_b;
    return result;
}

// Flattened view for gradient checking: [action_table, pair_weight, pair_bias].
inline LossReport to_report(const PlauResult& r) {
    LossReport report;
    report.value = r.value;
    report.per_term = r.per_term;
    report.gradient.reserve(r.grad.action_table.size() + r.grad.pair_weight.size() + r.grad.pair_bias.size());
    report.gradient.insert(report.gradient.end(), r.grad.action_table.begin(), r.grad.action_table.end());
    report.gradient.insert(report.gradient.end(), r.grad.pair_weight.begin(), r.grad.pair_weight.end());
    report.gradient.insert(report.gradient.end(), r.grad.pair_bias.begin(), r.grad.pair_bias.end());
    return report;
}

inline double loss_total(double lp, double lr, double alpha = 0.5, double beta = 0.5) {
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("loss_total: weights must be non-negative");
    return alpha * lp + beta * lr;
}

}  // namespace plausi
