#pragma once

// Counterfactual sequence generation: a single temporal swap or verb/noun
// substitution that makes a ground-truth sequence violate a mined constraint.

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "plausi/constraints.hpp"
#include "plausi/corpus.hpp"
#include "plausi/rng.hpp"

namespace plausi {

struct TemporalSwap {
    int pos_i = 0, pos_j = 0;  // pos_i < pos_j
};
struct VerbSwap {
    int pos = 0;
    int new_verb = 0;
};
struct NounSwap {
    int pos = 0;
    int new_noun = 0;
};
using CfEdit = std::variant<TemporalSwap, VerbSwap, NounSwap>;

struct CounterfactualSample {
    ActionSequence original;
    ActionSequence counterfactual;
    CfEdit edit;
};

// Swap one uniformly chosen position pair whose action types stand in the
// before-relation, breaking that precedence constraint.
inline std::optional<CounterfactualSample> temporal_cf(const ActionSequence& seq,
                                                       const TemporalConstraintMatrix& temp, Rng& rng) {
    const int len = static_cast<int>(seq.actions.size());
    if (len < 2) throw std::invalid_argument("temporal_cf: sequence shorter than 2");

    std::vector<std::pair<int, int>> eligible;
    for (int i = 0; i < len; ++i)
        for (int j = i + 1; j < len; ++j)
            if (temp.relation(seq.actions[i], seq.actions[j]) == 1) eligible.emplace_back(i, j);
    if (eligible.empty()) return std::nullopt;

    const auto [i, j] = eligible[rng.index(eligible.size())];
    CounterfactualSample sample{seq, seq, TemporalSwap{i, j}};
    std::swap(sample.counterfactual.actions[i], sample.counterfactual.actions[j]);
    return sample;
}

// Replace the verb or the noun of one action with an implausible partner.
// Side is chosen by fair coin, falls back to the other side, and every
// position is tried at most once (in random order).
inline std::optional<CounterfactualSample> verbnoun_cf(const ActionSequence& seq,
                                                       const VerbNounConstraintMatrix& act, Rng& rng) {
    const int len = static_cast<int>(seq.actions.size());
    if (len < 1) throw std::invalid_argument("verbnoun_cf: empty sequence");

    std::vector<int> order(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);

    for (int pos : order) {
        const Action a = seq.actions[static_cast<std::size_t>(pos)];
        const bool verb_first = rng.coin(0.5);
        for (int attempt = 0; attempt < 2; ++attempt) {
            const bool verb_side = (attempt == 0) ? verb_first : !verb_first;
            std::vector<int> candidates;
            if (verb_side) {
                for (int v = 0; v < act.n_verbs; ++v)
                    if (v != a.verb_id && act.entry(v, a.noun_id) == 1) candidates.push_back(v);
            } else {
                for (int d = 0; d < act.n_nouns; ++d)
                    if (d != a.noun_id && act.entry(a.verb_id, d) == 1) candidates.push_back(d);
            }
            if (candidates.empty()) continue;
            const int pick = candidates[rng.index(candidates.size())];
            CounterfactualSample sample{seq, seq, VerbSwap{}};
            if (verb_side) {
                sample.counterfactual.actions[static_cast<std::size_t>(pos)].verb_id = pick;
                sample.edit = VerbSwap{pos, pick};
            } else {
                sample.counterfactual.actions[static_cast<std::size_t>(pos)].noun_id = pick;
                sample.edit = NounSwap{pos, pick};
            }
            return sample;
        }
    }
    return std::nullopt;
}

// One counterfactual for a target: with probability mix try the temporal
// edit first, otherwise the verb-noun edit first, falling back to the other
// family when the first does not apply (targets shorter than 2 actions have
// no temporal option).
inline std::optional<CounterfactualSample> sample_cf(const ActionSequence& target,
                                                     const TemporalConstraintMatrix& temp,
                                                     const VerbNounConstraintMatrix& act, Rng& rng, double mix) {
    auto try_temporal = [&]() -> std::optional<CounterfactualSample> {
        if (target.actions.size() < 2) return std::nullopt;
        return temporal_cf(target, temp, rng);
    };
    std::optional<CounterfactualSample> sample;
    if (rng.coin(mix)) {
        sample = try_temporal();
        if (!sample) sample = verbnoun_cf(target, act, rng);
    } else {
        sample = verbnoun_cf(target, act, rng);
        if (!sample) sample = try_temporal();
    }
    return sample;
}

struct CfDataset {
    struct Item {
        ActionSequence prefix;
        ActionSequence target;
        ActionSequence target_cf;
        CfEdit edit;
    };
    std::vector<Item> items;
    std::size_t dropped = 0;  // examples where neither edit family applied
    std::size_t n_temporal = 0;
    std::size_t n_verb = 0;
    std::size_t n_noun = 0;
};

// One counterfactual per example via sample_cf; examples where both edit
// families fail are dropped and counted. Each example gets its own derived
// RNG stream, so the output is independent of evaluation order.
inline CfDataset build_cf_dataset(const std::vector<WindowExample>& examples,
                                  const TemporalConstraintMatrix& temp, const VerbNounConstraintMatrix& act,
                                  Rng& rng, double mix = 0.5) {
    if (mix < 0.0 || mix > 1.0) throw std::invalid_argument("build_cf_dataset: mix must be in [0,1]");
    const std::uint64_t base = rng.next_u64();

    CfDataset out;
    for (std::size_t k = 0; k < examples.size(); ++k) {
        Rng ex_rng(derive_seed(base, static_cast<std::uint64_t>(k)));
        std::optional<CounterfactualSample> sample = sample_cf(examples[k].target, temp, act, ex_rng, mix);
        if (!sample) {
            ++out.dropped;
            continue;
        }
        if (std::holds_alternative<TemporalSwap>(sample->edit)) ++out.n_temporal;
        else if (std::holds_alternative<VerbSwap>(sample->edit)) ++out.n_verb;
        else ++out.n_noun;
        out.items.push_back({examples[k].prefix, sample->original, std::move(sample->counterfactual), sample->edit});
    }
    return out;
}

// JSONL dump, one {"id", "prefix", "target", "target_cf", "edit"} per item.
// Actions are written as [verb, noun] string pairs resolved via the corpus
// vocabulary; this is a report format, not a training input.
inline void save_cf_dataset(const CfDataset& ds, const Corpus& corpus, std::ostream& out) {
    auto actions_json = [&](const ActionSequence& seq) {
        auto arr = nlohmann::ordered_json::array();
        for (const Action& a : seq.actions)
            arr.push_back({corpus.verb_vocab.at(a.verb_id), corpus.noun_vocab.at(a.noun_id)});
        return arr;
    };
    for (const auto& item : ds.items) {
        nlohmann::ordered_json rec;
        rec["id"] = item.target.id;
        rec["prefix"] = actions_json(item.prefix);
        rec["target"] = actions_json(item.target);
        rec["target_cf"] = actions_json(item.target_cf);
        nlohmann::ordered_json edit;
        if (const auto* ts = std::get_if<TemporalSwap>(&item.edit)) {
            edit["kind"] = "temporal_swap";
            edit["pos_i"] = ts->pos_i;
            edit["pos_j"] = ts->pos_j;
        } else if (const auto* vs = std::get_if<VerbSwap>(&item.edit)) {
            edit["kind"] = "verb_swap";
            edit["pos"] = vs->pos;
            edit["new_verb"] = corpus.verb_vocab.at(vs->new_verb);
        } else {
            const auto& ns = std::get<NounSwap>(item.edit);
            edit["kind"] = "noun_swap";
            edit["pos"] = ns.pos;
            edit["new_noun"] = corpus.noun_vocab.at(ns.new_noun);
        }
        rec["edit"] = edit;
        out << rec.dump() << "\n";
    }
}

}  // namespace plausi
