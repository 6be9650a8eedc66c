#pragma once

// Evaluation suite: unrestricted Damerau-Levenshtein distance, normalized
// minimum edit distance over candidate sets, class-mean top-5 recall,
// repetition score, BLEU, and the aggregate report.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "plausi/constraints.hpp"
#include "plausi/corpus.hpp"

namespace plausi {

// True (unrestricted) Damerau-Levenshtein distance: insertion, deletion,
// substitution, and transposition of adjacent tokens, where transposed
// blocks may be edited again (("CA","ABC") -> 2, not the restricted 3).
// Full DP with a last-occurrence table.
inline std::size_t damerau_levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t la = a.size(), lb = b.size();
    if (la == 0) return lb;
    if (lb == 0) return la;

    const std::size_t inf = la + lb;  // exceeds any possible distance
    std::vector<std::size_t> d((la + 2) * (lb + 2), 0);
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (lb + 2) + j]; };

    at(0, 0) = inf;
    for (std::size_t i = 0; i <= la; ++i) {
        at(i + 1, 0) = inf;
        at(i + 1, 1) = i;
    }
    for (std::size_t j = 0; j <= lb; ++j) {
        at(0, j + 1) = inf;
        at(1, j + 1) = j;
    }

    std::unordered_map<int, std::size_t> last_row;  // token -> last 1-based row seen in a
    for (std::size_t i = 1; i <= la; ++i) {
        std::size_t last_col = 0;  // last 1-based column in b matching a[i-1]
        for (std::size_t j = 1; j <= lb; ++j) {
            const auto it = last_row.find(b[j - 1]);
            const std::size_t k = (it == last_row.end()) ? 0 : it->second;
            const std::size_t l = last_col;
            std::size_t cost = 1;
            if (a[i - 1] == b[j - 1]) {
                cost = 0;
                last_col = j;
            }
            at(i + 1, j + 1) = std::min({
                at(i, j) + cost,                          // substitute / match
                at(i + 1, j) + 1,                         // insert
                at(i, j + 1) + 1,                         // delete
                at(k, l) + (i - k - 1) + 1 + (j - l - 1)  // transpose spanning edits
            });
        }
        last_row[a[i - 1]] = i;
    }
    return at(la + 1, lb + 1);
}

inline std::size_t damerau_levenshtein(std::string_view a, std::string_view b) {
    std::vector<int> va(a.begin(), a.end()), vb(b.begin(), b.end());
    return damerau_levenshtein(va, vb);
}

struct EdPair {
    double ed_verb = 0.0;
    double ed_noun = 0.0;
};

// Minimum over candidates of the Z-normalized edit distance, verb and noun
// streams scored independently (the minima may come from different
// candidates). Sequences are truncated to their first Z actions.
inline EdPair ed_at_zk(const std::vector<ActionSequence>& candidates, const ActionSequence& truth, int Z = 20) {
    if (candidates.empty()) throw std::invalid_argument("ed_at_zk: empty candidate set");
    if (Z < 1) throw std::invalid_argument("ed_at_zk: Z must be >= 1");

    auto stream = [Z](const ActionSequence& seq, bool verbs) {
        std::vector<int> out;
        const std::size_t n = std::min(seq.actions.size(), static_cast<std::size_t>(Z));
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(verbs ? seq.actions[i].verb_id : seq.actions[i].noun_id);
        return out;
    };
    const std::vector<int> truth_v = stream(truth, true), truth_n = stream(truth, false);

    EdPair best{1e300, 1e300};
    for (const auto& cand : candidates) {
        const double ev = static_cast<double>(damerau_levenshtein(stream(cand, true), truth_v)) / Z;
        const double en = static_cast<double>(damerau_levenshtein(stream(cand, false), truth_n)) / Z;
        best.ed_verb = std::min(best.ed_verb, ev);
        best.ed_noun = std::min(best.ed_noun, en);
    }
    return best;
}

// Recall averaged per CLASS, not per instance: for each class with at least
// one instance, the fraction of its instances whose top-5 contains it; the
// mean of those fractions, as a percentage.
inline double class_mean_top5_recall(const std::vector<std::vector<long long>>& ranked_preds,
                                     const std::vector<long long>& truths) {
    if (truths.empty()) throw std::invalid_argument("class_mean_top5_recall: empty truths");
    if (ranked_preds.size() != truths.size())
        throw std::invalid_argument("class_mean_top5_recall: predictions/truths length mismatch");

    std::map<long long, std::pair<long long, long long>> per_class;  // class -> (hits, instances)
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto& top = ranked_preds[i];
        if (top.size() < 5) throw std::invalid_argument("class_mean_top5_recall: prediction list shorter than 5");
        std::unordered_set<long long> seen;
        bool hit = false;
        for (std::size_t r = 0; r < 5; ++r) {
            if (!seen.insert(top[r]).second)
                throw std::invalid_argument("class_mean_top5_recall: duplicate entry in a top-5 list");
            hit = hit || (top[r] == truths[i]);
        }
        auto&[hits, count] = per_class[truths[i]];
        hits += hit ? 1 : 0;
        ++count;
    }
    double sum = 0.0;
    for (const auto& [cls, hc] : per_class) sum += static_cast<double>(hc.first) / static_cast<double>(hc.second);
    return 100.0 * sum / static_cast<double>(per_class.size());
}

// Mean over sequences of (length - number of distinct actions).
inline double repetition_score(const std::vector<ActionSequence>& seqs) {
    if (seqs.empty()) throw std::invalid_argument("repetition_score: empty sequence list");
    double total = 0.0;
    for (const auto& seq : seqs) {
        std::unordered_set<std::uint64_t> distinct;
        for (const Action& a : seq.actions) distinct.insert(action_key(a));
        total += static_cast<double>(seq.actions.size() - distinct.size());
    }
    return total / static_cast<double>(seqs.size());
}

// Sentence-level BLEU in [0,100]: geometric mean of clipped n-gram precisions
// (n = 1..max_n; a zero or undefined precision is smoothed to 1e-9) times the
// brevity penalty exp(1 - |ref|/|pred|) when the prediction is shorter.
inline double bleu(const std::vector<int>& pred, const std::vector<int>& ref, int max_n = 4) {
    if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
    if (pred.empty()) return 0.0;

    constexpr double smoothing = 1e-9;
    auto ngram_counts = [](const std::vector<int>& tokens, int n) {
        std::map<std::vector<int>, int> counts;
        if (static_cast<int>(tokens.size()) >= n)
            for (std::size_t i = 0; i + n <= tokens.size(); ++i)
                ++counts[std::vector<int>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)];
        return counts;
    };

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto pred_counts = ngram_counts(pred, n);
        const auto ref_counts = ngram_counts(ref, n);
        long long matches = 0, total = 0;
        for (const auto& [gram, count] : pred_counts) {
            total += count;
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matches += std::min(count, it->second);
        }
        const double precision = (matches > 0 && total > 0)
                                     ? static_cast<double>(matches) / static_cast<double>(total)
                                     : smoothing;
        log_sum += std::log(precision);
    }
    const double brevity = (pred.size() < ref.size())
                               ? std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size()))
                               : 1.0;
    return 100.0 * brevity * std::exp(log_sum / max_n);
}

struct EvalReport {
    double ed_verb = 0.0;
    double ed_noun = 0.0;
    double top5_verb = 0.0;
    double top5_noun = 0.0;
    double top5_action = 0.0;
    double repetition = 0.0;
    double bleu_score = 0.0;
    double compliance_followed = 0.0;
    double compliance_checked = 0.0;

    double compliance_fraction() const {
        return compliance_checked > 0.0 ? compliance_followed / compliance_checked : 1.0;
    }
};

// Ranked next-action predictions: the top-5 lists may pad with negative
// sentinel ids when a sub-vocabulary has fewer than 5 classes (sentinels are
// distinct and never match a truth).
struct Top5 {
    std::vector<long long> verbs;
    std::vector<long long> nouns;
    std::vector<long long> actions;  // encoded (verb, noun) keys
};

// What evaluate() needs from a model; kept abstract so tests can inject an
// oracle that echoes ground truth.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::vector<ActionSequence> candidates(const ActionSequence& prefix, int horizon, int K) = 0;
    virtual Top5 top5_next(const ActionSequence& prefix) = 0;
};

inline long long action_class(const Action& a) { return static_cast<long long>(action_key(a)); }

// Runs the predictor over every window of the split and aggregates the full
// metric suite. Edit distance takes the best of K candidates; repetition,
// BLEU, and compliance are scored on candidate 0 (the greedy continuation);
// top-5 recall is scored on the first target action.
inline EvalReport evaluate(Predictor& predictor, const Corpus& split, const TemporalConstraintMatrix& temp,
                           const VerbNounConstraintMatrix& act, const AnticipationWindow& window, int K = 5) {
    if (K < 1) throw std::invalid_argument("evaluate: K must be >= 1");
    const WindowedExamples windows = window_examples(split, window);
    if (windows.examples.empty()) throw std::invalid_argument("evaluate: split yields no examples");

    EvalReport report;
    std::vector<std::vector<long long>> pred_verbs, pred_nouns, pred_actions;
    std::vector<long long> true_verbs, true_nouns, true_actions;
    std::vector<ActionSequence> greedy;
    double bleu_sum = 0.0;

    const int n_verbs = split.n_verbs();
    for (const WindowExample& ex : windows.examples) {
        const auto cands = predictor.candidates(ex.prefix, window.horizon, K);
        if (cands.empty()) throw std::runtime_error("evaluate: predictor returned no candidates");
        const EdPair ed = ed_at_zk(cands, ex.target, window.horizon);
        report.ed_verb += ed.ed_verb;
        report.ed_noun += ed.ed_noun;

        const Top5 top = predictor.top5_next(ex.prefix);
        pred_verbs.push_back(top.verbs);
        pred_nouns.push_back(top.nouns);
        pred_actions.push_back(top.actions);
        const Action& next = ex.target.actions.front();
        true_verbs.push_back(next.verb_id);
        true_nouns.push_back(next.noun_id);
        true_actions.push_back(action_class(next));

        // interleave verb and offset noun ids so both streams count for BLEU
        std::vector<int> pred_tokens, ref_tokens;
        for (const Action& a : cands.front().actions) {
            pred_tokens.push_back(a.verb_id);
            pred_tokens.push_back(n_verbs + a.noun_id);
        }
        for (const Action& a : ex.target.actions) {
            ref_tokens.push_back(a.verb_id);
            ref_tokens.push_back(n_verbs + a.noun_id);
        }
        bleu_sum += bleu(pred_tokens, ref_tokens);
        greedy.push_back(cands.front());
    }

    const double n = static_cast<double>(windows.examples.size());
    report.ed_verb /= n;
    report.ed_noun /= n;
    report.top5_verb = class_mean_top5_recall(pred_verbs, true_verbs);
    report.top5_noun = class_mean_top5_recall(pred_nouns, true_nouns);
    report.top5_action = class_mean_top5_recall(pred_actions, true_actions);
    report.repetition = repetition_score(greedy);
    report.bleu_score = bleu_sum / n;
    const ComplianceStats compliance = compliance_rate(greedy, temp, act);
    report.compliance_followed = compliance.avg_followed;
    report.compliance_checked = compliance.avg_checked;
    return report;
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["ed_verb"] = r.ed_verb;
    j["ed_noun"] = r.ed_noun;
    j["top5_verb"] = r.top5_verb;
    j["top5_noun"] = r.top5_noun;
    j["top5_action"] = r.top5_action;
    j["repetition"] = r.repetition;
    j["bleu"] = r.bleu_score;
    j["compliance_followed"] = r.compliance_followed;
    j["compliance_checked"] = r.compliance_checked;
    j["compliance_fraction"] = r.compliance_fraction();
    return j;
}

inline void print_report(const EvalReport& r, std::ostream& out) {
    char line[96];
    auto row = [&](const char* name, double value, const char* fmt) {
        std::snprintf(line, sizeof(line), fmt, name, value);
        out << line << "\n";
    };
    row("ED verb", r.ed_verb, "%-22s %8.3f");
    row("ED noun", r.ed_noun, "%-22s %8.3f");
    row("Top-5 recall verb %", r.top5_verb, "%-22s %8.2f");
    row("Top-5 recall noun %", r.top5_noun, "%-22s %8.2f");
    row("Top-5 recall action %", r.top5_action, "%-22s %8.2f");
    row("Repetition score", r.repetition, "%-22s %8.3f");
    row("BLEU", r.bleu_score, "%-22s %8.2f");
    row("Constraints followed", r.compliance_followed, "%-22s %8.2f");
    row("Constraints checked", r.compliance_checked, "%-22s %8.2f");
    row("Compliance fraction", r.compliance_fraction(), "%-22s %8.4f");
}

}  // namespace plausi
