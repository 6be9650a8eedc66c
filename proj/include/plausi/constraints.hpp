#pragma once

// Mining of precedence ("always before") and verb-noun implausibility
// constraints from a corpus, plus violation checking and compliance stats.

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "plausi/corpus.hpp"

namespace plausi {

inline std::uint64_t action_key(const Action& a) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a.verb_id)) << 32) |
           static_cast<std::uint32_t>(a.noun_id);
}

// Precedence relation over observed action types (distinct verb-noun pairs).
// entry(i,j) = +1 means type i always precedes type j in every sequence where
// both occur; -1 the reverse; 0 unconstrained. Antisymmetric, zero diagonal.
struct TemporalConstraintMatrix {
    std::vector<Action> types;  // type_id -> action, first-appearance order
    std::unordered_map<std::uint64_t, int> type_ids;
    int min_support = 1;
    std::vector<std::int8_t> entries;  // n*n row-major
    std::vector<int> support;          // co-occurring sequence counts, n*n

    int n_actions() const { return static_cast<int>(types.size()); }

    int type_of(const Action& a) const {
        auto it = type_ids.find(action_key(a));
        return it == type_ids.end() ? -1 : it->second;
    }

    int entry(int i, int j) const {
        const int n = n_actions();
        if (i < 0 || i >= n || j < 0 || j >= n) throw std::out_of_range("temporal matrix index out of range");
        return entries[static_cast<std::size_t>(i) * n + j];
    }

    int support_of(int i, int j) const {
        const int n = n_actions();
        if (i < 0 || i >= n || j < 0 || j >= n) throw std::out_of_range("temporal matrix index out of range");
        return support[static_cast<std::size_t>(i) * n + j];
    }

    // Relation between two actions; types never seen at mining time carry no
    // constraint, so they resolve to 0 rather than an error.
    int relation(const Action& a, const Action& b) const {
        const int i = type_of(a), j = type_of(b);
        if (i < 0 || j < 0) return 0;
        return entry(i, j);
    }

    std::size_t nonzero_count() const {
        std::size_t c = 0;
        for (std::int8_t e : entries) c += (e != 0);
        return c;
    }
};

// Binary implausibility over the full verb x noun cross-product:
// entry(v,n) = 1 iff the pair was never observed as an action.
struct VerbNounConstraintMatrix {
    int n_verbs = 0;
    int n_nouns = 0;
    std::vector<std::int8_t> entries;  // n_verbs*n_nouns row-major

    int entry(int verb_id, int noun_id) const {
        if (verb_id < 0 || verb_id >= n_verbs || noun_id < 0 || noun_id >= n_nouns)
            throw std::out_of_range("verb-noun matrix index out of range");
        return entries[static_cast<std::size_t>(verb_id) * n_nouns + noun_id];
    }

    std::size_t nonzero_count() const {
        std::size_t c = 0;
        for (std::int8_t e : entries) c += (e != 0);
        return c;
    }
};

// For each unordered pair of action types co-occurring in >= min_support
// sequences, asserts +1/-1 only when every occurrence of one type precedes
// every occurrence of the other in every co-occurring sequence.
inline TemporalConstraintMatrix mine_temporal(const Corpus& corpus, int min_support = 1) {
    if (corpus.sequences.empty()) throw std::invalid_argument("mine_temporal: empty corpus");
    if (min_support < 1) throw std::invalid_argument("mine_temporal: min_support must be >= 1");

    TemporalConstraintMatrix m;
    m.min_support = min_support;
    for (const auto& seq : corpus.sequences)
        for (const Action& a : seq.actions)
            if (m.type_ids.emplace(action_key(a), m.n_actions()).second) m.types.push_back(a);

    const int n = m.n_actions();
    struct PairEvidence {
        int count = 0;
        bool lo_before_hi = true;  // all occurrences of min(i,j) before all of max(i,j)
        bool hi_before_lo = true;
    };
    std::unordered_map<std::uint64_t, PairEvidence> evidence;  // key = lo*n + hi

    std::vector<int> first_pos(static_cast<std::size_t>(n), -1), last_pos(static_cast<std::size_t>(n), -1);
    std::vector<int> present;
    for (const auto& seq : corpus.sequences) {
        for (int t : present) first_pos[t] = -1;
        present.clear();
        for (int p = 0; p < static_cast<int>(seq.actions.size()); ++p) {
            const int t = m.type_of(seq.actions[p]);
            if (first_pos[t] < 0) {
                first_pos[t] = p;
                present.push_back(t);
            }
            last_pos[t] = p;
        }
        for (std::size_t a = 0; a < present.size(); ++a) {
            for (std::size_t b = a + 1; b < present.size(); ++b) {
                int lo = present[a], hi = present[b];
                if (lo > hi) std::swap(lo, hi);
                auto& ev = evidence[static_cast<std::uint64_t>(lo) * n + hi];
                ++ev.count;
                if (!(last_pos[lo] < first_pos[hi])) ev.lo_before_hi = false;
                if (!(last_pos[hi] < first_pos[lo])) ev.hi_before_lo = false;
            }
        }
    }

    m.entries.assign(static_cast<std::size_t>(n) * n, 0);
    m.support.assign(static_cast<std::size_t>(n) * n, 0);
    for (const auto& [key, ev] : evidence) {
        const int lo = static_cast<int>(key / n), hi = static_cast<int>(key % n);
        m.support[static_cast<std::size_t>(lo) * n + hi] = ev.count;
        m.support[static_cast<std::size_t>(hi) * n + lo] = ev.count;
        if (ev.count < min_support) continue;
        int value = 0;
        if (ev.lo_before_hi && !ev.hi_before_lo) value = 1;
        else if (ev.hi_before_lo && !ev.lo_before_hi) value = -1;
        m.entries[static_cast<std::size_t>(lo) * n + hi] = static_cast<std::int8_t>(value);
        m.entries[static_cast<std::size_t>(hi) * n + lo] = static_cast<std::int8_t>(-value);
    }
    return m;
}

inline VerbNounConstraintMatrix mine_verb_noun(const Corpus& corpus) {
    if (corpus.sequences.empty()) throw std::invalid_argument("mine_verb_noun: empty corpus");
    VerbNounConstraintMatrix m;
    m.n_verbs = corpus.n_verbs();
    m.n_nouns = corpus.n_nouns();
    m.entries.assign(static_cast<std::size_t>(m.n_verbs) * m.n_nouns, 1);
    for (const auto& seq : corpus.sequences)
        for (const Action& a : seq.actions)
            m.entries[static_cast<std::size_t>(a.verb_id) * m.n_nouns + a.noun_id] = 0;
    return m;
}

struct ViolationReport {
    std::vector<std::pair<int, int>> temporal_violations;  // position pairs, i < j
    std::vector<int> verbnoun_violations;                  // positions
    long constraints_checked = 0;
    long constraints_followed = 0;
};

// A constraint is checked wherever a nonzero matrix entry applies: for every
// position pair (i<j) whose types carry a nonzero temporal relation, and at
// every position whose (verb, noun) cell is flagged implausible (zero cells
// carry no constraint). followed = checked - violated.
inline ViolationReport check_sequence(const ActionSequence& seq, const TemporalConstraintMatrix& temp,
                                      const VerbNounConstraintMatrix& act) {
    ViolationReport report;
    const int len = static_cast<int>(seq.actions.size());
    for (int i = 0; i < len; ++i) {
        for (int j = i + 1; j < len; ++j) {
            const int rel = temp.relation(seq.actions[i], seq.actions[j]);
            if (rel == 0) continue;
            ++report.constraints_checked;
            if (rel == -1) report.temporal_violations.emplace_back(i, j);
        }
    }
    for (int i = 0; i < len; ++i) {
        if (act.entry(seq.actions[i].verb_id, seq.actions[i].noun_id) != 1) continue;
        ++report.constraints_checked;
        report.verbnoun_violations.push_back(i);
    }
    report.constraints_followed = report.constraints_checked -
                                  static_cast<long>(report.temporal_violations.size()) -
                                  static_cast<long>(report.verbnoun_violations.size());
    return report;
}

struct ComplianceStats {
    double avg_followed = 0.0;
    double avg_checked = 0.0;

    double followed_fraction() const { return avg_checked > 0.0 ? avg_followed / avg_checked : 1.0; }
};

inline ComplianceStats compliance_rate(const std::vector<ActionSequence>& seqs,
                                       const TemporalConstraintMatrix& temp,
                                       const VerbNounConstraintMatrix& act) {
    if (seqs.empty()) throw std::invalid_argument("compliance_rate: empty sequence list");
    ComplianceStats stats;
    for (const auto& seq : seqs) {
        const ViolationReport r = check_sequence(seq, temp, act);
        stats.avg_followed += static_cast<double>(r.constraints_followed);
        stats.avg_checked += static_cast<double>(r.constraints_checked);
    }
    stats.avg_followed /= static_cast<double>(seqs.size());
    stats.avg_checked /= static_cast<double>(seqs.size());
    return stats;
}

// --- line-based serialization (both matrices in one stream, round-trip stable)

inline void save_matrices(const TemporalConstraintMatrix& temp, const VerbNounConstraintMatrix& act,
                          std::ostream& out) {
    const int n = temp.n_actions();
    out << "temporal " << act.n_verbs << " " << act.n_nouns << " " << n << " " << temp.min_support << "\n";
    for (const Action& a : temp.types) out << a.verb_id << " " << a.noun_id << "\n";
    std::size_t nz = temp.nonzero_count();
    out << "entries " << nz << "\n";
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (temp.entry(i, j) != 0)
                out << i << " " << j << " " << temp.entry(i, j) << " " << temp.support_of(i, j) << "\n";
    out << "verbnoun " << act.nonzero_count() << "\n";
    for (int v = 0; v < act.n_verbs; ++v)
        for (int d = 0; d < act.n_nouns; ++d)
            if (act.entry(v, d) != 0) out << v << " " << d << " 1 0\n";
}

inline std::pair<TemporalConstraintMatrix, VerbNounConstraintMatrix> load_matrices(std::istream& in) {
    auto fail = [](const std::string& what) -> void { throw std::runtime_error("constraint file: " + what); };

    std::string tag;
    TemporalConstraintMatrix temp;
    VerbNounConstraintMatrix act;
    int n_types = 0;
    if (!(in >> tag) || tag != "temporal") fail("expected 'temporal' header");
    if (!(in >> act.n_verbs >> act.n_nouns >> n_types >> temp.min_support)) fail("bad temporal header");
    for (int t = 0; t < n_types; ++t) {
        Action a;
        if (!(in >> a.verb_id >> a.noun_id)) fail("bad type record");
        temp.type_ids.emplace(action_key(a), t);
        temp.types.push_back(a);
    }
    temp.entries.assign(static_cast<std::size_t>(n_types) * n_types, 0);
    temp.support.assign(static_cast<std::size_t>(n_types) * n_types, 0);
    std::size_t n_entries = 0;
    if (!(in >> tag >> n_entries) || tag != "entries") fail("expected 'entries' section");
    for (std::size_t k = 0; k < n_entries; ++k) {
        int i, j, value, sup;
        if (!(in >> i >> j >> value >> sup)) fail("bad entry record");
        if (i < 0 || i >= n_types || j < 0 || j >= n_types || value < -1 || value > 1) fail("entry out of range");
        temp.entries[static_cast<std::size_t>(i) * n_types + j] = static_cast<std::int8_t>(value);
        temp.support[static_cast<std::size_t>(i) * n_types + j] = sup;
    }
    std::size_t n_vn = 0;
    if (!(in >> tag >> n_vn) || tag != "verbnoun") fail("expected 'verbnoun' section");
    act.entries.assign(static_cast<std::size_t>(act.n_verbs) * act.n_nouns, 0);
    for (std::size_t k = 0; k < n_vn; ++k) {
        int v, d, value, sup;
        if (!(in >> v >> d >> value >> sup)) fail("bad verb-noun record");
        if (v < 0 || v >= act.n_verbs || d < 0 || d >= act.n_nouns || value != 1) fail("verb-noun record out of range");
        act.entries[static_cast<std::size_t>(v) * act.n_nouns + d] = 1;
    }
    return {std::move(temp), std::move(act)};
}

}  // namespace plausi
