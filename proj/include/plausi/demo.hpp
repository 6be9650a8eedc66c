#pragma once

// Self-contained synthetic experiment: builds a corpus from a random
// precedence DAG over verb-noun action types, trains the four ablation rows
// (plau+rep / plau+nll / rep / nll) across several seeds, and reports the
// seed-averaged metric grid. Everything derives from one root seed and the
// printed output is byte-stable.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "plausi/constraints.hpp"
#include "plausi/corpus.hpp"
#include "plausi/metrics.hpp"
#include "plausi/rng.hpp"
#include "plausi/toymodel.hpp"

namespace plausi {

struct DemoConfig {
    int n_verbs = 12;
    int n_nouns = 12;
    int n_action_types = 40;
    int n_sequences = 500;
    int min_len = 8;
    int max_len = 14;
    double compat_fraction = 0.30;  // share of verb-noun cells that are plausible
    double edge_prob = 0.35;        // precedence edge density among action types
    int n_seeds = 5;
    TrainConfig train;  // template; seed / loss_variant / use_plau set per row
};

// Sequences draw distinct action types and order them by a random topological
// sort of the precedence DAG, so ground truth has zero repetition and every
// DAG edge is an "always before" regularity the miner can find.
inline Corpus make_synthetic_corpus(std::uint64_t seed, const DemoConfig& cfg = {}) {
    const int cells = cfg.n_verbs * cfg.n_nouns;
    const int n_compat = static_cast<int>(cfg.compat_fraction * cells + 0.5);
    if (cfg.n_verbs < 1 || cfg.n_nouns < 1) throw std::invalid_argument("demo: empty vocabulary");
    if (cfg.n_action_types > n_compat || n_compat > cells)
        throw std::invalid_argument("demo: action types must fit inside the compatible cells");
    if (cfg.min_len < 1 || cfg.min_len > cfg.max_len || cfg.max_len > cfg.n_action_types)
        throw std::invalid_argument("demo: need min_len <= max_len <= n_action_types (distinct draws)");

    Rng rng(derive_seed(seed, "corpus"));
    Corpus corpus;
    for (int v = 0; v < cfg.n_verbs; ++v) corpus.verb_vocab.push_back("v" + std::to_string(v));
    for (int n = 0; n < cfg.n_nouns; ++n) corpus.noun_vocab.push_back("n" + std::to_string(n));

    // compatible cells, then the action types actually used
    std::vector<int> cell_order(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) cell_order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(cell_order);
    std::vector<Action> types;
    for (int t = 0; t < cfg.n_action_types; ++t) {
        const int cell = cell_order[static_cast<std::size_t>(t)];
        types.push_back({cell / cfg.n_nouns, cell % cfg.n_nouns});
    }

    // random priorities; edges only run from lower to higher priority
    const int T = cfg.n_action_types;
    std::vector<int> priority(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) priority[static_cast<std::size_t>(i)] = i;
    rng.shuffle(priority);
    std::vector<char> edge(static_cast<std::size_t>(T) * T, 0);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j)
            if (priority[static_cast<std::size_t>(i)] < priority[static_cast<std::size_t>(j)] &&
                rng.coin(cfg.edge_prob))
                edge[static_cast<std::size_t>(i) * T + j] = 1;

    std::vector<int> type_order(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) type_order[static_cast<std::size_t>(i)] = i;

    for (int s = 0; s < cfg.n_sequences; ++s) {
        const int len = cfg.min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                          cfg.max_len - cfg.min_len + 1)));
        rng.shuffle(type_order);
        std::vector<int> chosen(type_order.begin(), type_order.begin() + len);
        std::sort(chosen.begin(), chosen.end());  // fixed scan order for determinism

        ActionSequence seq;
        seq.id = "seq" + std::to_string(s);
        std::vector<char> placed(static_cast<std::size_t>(T), 0);
        for (int step = 0; step < len; ++step) {
            std::vector<int> ready;
            for (int t : chosen) {
                if (placed[static_cast<std::size_t>(t)]) continue;
                bool blocked = false;
                for (int u : chosen)
                    if (!placed[static_cast<std::size_t>(u)] && edge[static_cast<std::size_t>(u) * T + t]) {
                        blocked = true;
                        break;
                    }
                if (!blocked) ready.push_back(t);
            }
            const int pick = ready[rng.index(ready.size())];
            placed[static_cast<std::size_t>(pick)] = 1;
            seq.actions.push_back(types[static_cast<std::size_t>(pick)]);
        }
        corpus.sequences.push_back(std::move(seq));
    }
    return corpus;
}

struct DemoRow {
    std::string label;
    bool use_plau = false;
    LossVariant variant = LossVariant::nll;
    EvalReport mean;  // seed-averaged metrics on the held-out split
};

struct DemoResult {
    Corpus corpus;
    std::size_t holdout_sequences = 0;
    std::vector<DemoRow> rows;  // plau+rep, plau+nll, rep, nll
};

// Train and evaluate the four ablation rows, each averaged over n_seeds runs.
// Matched rows share per-seed training seeds (same init, same shuffles), so
// row differences isolate the loss ingredients.
inline DemoResult run_demo(std::uint64_t seed, const DemoConfig& cfg = {}) {
    if (cfg.n_seeds < 1) throw std::invalid_argument("demo: n_seeds must be >= 1");
    DemoResult result;
    result.corpus = make_synthetic_corpus(seed, cfg);

    const std::size_t n_hold = result.corpus.sequences.size() / 5;  // mirrors train()'s split
    Corpus hold_split{{result.corpus.sequences.end() - static_cast<std::ptrdiff_t>(n_hold),
                       result.corpus.sequences.end()},
                      result.corpus.verb_vocab,
                      result.corpus.noun_vocab};
    result.holdout_sequences = hold_split.sequences.size();

    const AnticipationWindow window{cfg.train.observation_len, cfg.train.gap, cfg.train.horizon};
    struct RowSpec {
        const char* label;
        bool use_plau;
        LossVariant variant;
    };
    const RowSpec specs[4] = {{"plau+rep", true, LossVariant::rep},
                              {"plau+nll", true, LossVariant::nll},
                              {"rep", false, LossVariant::rep},
                              {"nll", false, LossVariant::nll}};

    for (const RowSpec& spec : specs) {
        DemoRow row;
        row.label = spec.label;
        row.use_plau = spec.use_plau;
        row.variant = spec.variant;

        for (int s = 0; s < cfg.n_seeds; ++s) {
            TrainConfig tc = cfg.train;
            tc.use_plau = spec.use_plau;
            tc.loss_variant = spec.variant;
            tc.seed = derive_seed(derive_seed(seed, "ablation"), static_cast<std::uint64_t>(s));
            const TrainResult trained = train(result.corpus, tc);

            ModelPredictor predictor(trained.params, DecodeConfig{}, derive_seed(tc.seed, "eval"));
            const EvalReport r = evaluate(predictor, hold_split, trained.temp, trained.act, window, tc.K);
            row.mean.ed_verb += r.ed_verb;
            row.mean.ed_noun += r.ed_noun;
            row.mean.top5_verb += r.top5_verb;
            row.mean.top5_noun += r.top5_noun;
            row.mean.top5_action += r.top5_action;
            row.mean.repetition += r.repetition;
            row.mean.bleu_score += r.bleu_score;
            row.mean.compliance_followed += r.compliance_followed;
            row.mean.compliance_checked += r.compliance_checked;
        }
        const double inv = 1.0 / static_cast<double>(cfg.n_seeds);
        row.mean.ed_verb *= inv;
        row.mean.ed_noun *= inv;
        row.mean.top5_verb *= inv;
        row.mean.top5_noun *= inv;
        row.mean.top5_action *= inv;
        row.mean.repetition *= inv;
        row.mean.bleu_score *= inv;
        row.mean.compliance_followed *= inv;
        row.mean.compliance_checked *= inv;
        result.rows.push_back(std::move(row));
    }
    return result;
}

inline void print_demo(const DemoResult& result, std::ostream& out) {
    const Corpus& c = result.corpus;
    std::size_t total_actions = 0;
    for (const auto& seq : c.sequences) total_actions += seq.actions.size();
    out << "synthetic corpus: " << c.sequences.size() << " sequences, " << total_actions << " actions, "
        << c.verb_vocab.size() << " verbs, " << c.noun_vocab.size() << " nouns\n";
    out << "held-out sequences: " << result.holdout_sequences << "\n\n";

    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %8s %8s %7s %7s %7s %7s %7s %8s", "row", "ed_verb", "ed_noun",
                  "top5_v", "top5_n", "top5_a", "repeat", "bleu", "comply");
    out << line << "\n";
    for (const DemoRow& row : result.rows) {
        const EvalReport& m = row.mean;
        std::snprintf(line, sizeof(line), "%-10s %8.3f %8.3f %7.2f %7.2f %7.2f %7.3f %7.2f %8.4f",
                      row.label.c_str(), m.ed_verb, m.ed_noun, m.top5_verb, m.top5_noun, m.top5_action,
                      m.repetition, m.bleu_score, m.compliance_fraction());
        out << line << "\n";
    }
}

}  // namespace plausi
