#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "plausi/constraints.hpp"
#include "plausi/rng.hpp"

using namespace plausi;

namespace {

// Tiny corpus builder: actions given as (verb_id, noun_id) pairs over a
// generous fixed vocabulary.
Corpus tiny(std::vector<std::vector<std::pair<int, int>>> seqs) {
    Corpus c;
    c.verb_vocab = {"v0", "v1", "v2", "v3"};
    c.noun_vocab = {"n0", "n1", "n2", "n3"};
    int k = 0;
    for (const auto& s : seqs) {
        ActionSequence seq;
        seq.id = "s" + std::to_string(k++);
        for (auto [v, n] : s) seq.actions.push_back({v, n});
        c.sequences.push_back(std::move(seq));
    }
    return c;
}

}  // namespace

TEST_CASE("temporal mining pins", "[constraints]") {
    // three types A=(0,0) B=(1,1) C=(2,2)
    SECTION("consistent order in every co-occurrence becomes +1/-1") {
        const Corpus c = tiny({{{0, 0}, {1, 1}, {2, 2}}, {{0, 0}, {2, 2}}});
        const auto m = mine_temporal(c, 1);
        CHECK(m.n_actions() == 3);
        CHECK(m.relation({0, 0}, {1, 1}) == 1);
        CHECK(m.relation({1, 1}, {0, 0}) == -1);
        CHECK(m.relation({0, 0}, {2, 2}) == 1);
        CHECK(m.relation({1, 1}, {2, 2}) == 1);
    }
    SECTION("conflicting orders cancel") {
        const Corpus c = tiny({{{0, 0}, {1, 1}}, {{1, 1}, {0, 0}}});
        const auto m = mine_temporal(c, 1);
        CHECK(m.relation({0, 0}, {1, 1}) == 0);
    }
    SECTION("support below the threshold yields no constraint") {
        const Corpus c = tiny({{{0, 0}, {1, 1}}});
        CHECK(mine_temporal(c, 1).relation({0, 0}, {1, 1}) == 1);
        CHECK(mine_temporal(c, 2).relation({0, 0}, {1, 1}) == 0);
    }
    SECTION("repeats must all respect the order") {
        // A B A: some A after B, so neither direction is universal
        const Corpus c = tiny({{{0, 0}, {1, 1}, {0, 0}}});
        CHECK(mine_temporal(c, 1).relation({0, 0}, {1, 1}) == 0);
    }
    SECTION("unknown types relate as 0") {
        const Corpus c = tiny({{{0, 0}, {1, 1}}});
        const auto m = mine_temporal(c, 1);
        CHECK(m.relation({3, 3}, {0, 0}) == 0);
        CHECK(m.type_of({3, 3}) == -1);
    }
}

TEST_CASE("temporal matrix is antisymmetric with zero diagonal", "[constraints]") {
    Rng rng(1234);
    for (int it = 0; it < 60; ++it) {
        const Corpus c = oracles::random_corpus(rng);
        const auto m = mine_temporal(c, 1 + static_cast<int>(rng.below(3)));
        for (int i = 0; i < m.n_actions(); ++i) {
            CHECK(m.entry(i, i) == 0);
            for (int j = 0; j < m.n_actions(); ++j) CHECK(m.entry(i, j) == -m.entry(j, i));
        }
    }
}

TEST_CASE("mining matches the brute-force oracle", "[constraints]") {
    Rng rng(555);
    for (int it = 0; it < 200; ++it) {
        const Corpus c = oracles::random_corpus(rng, 6, 8, 6);
        const int min_support = 1 + static_cast<int>(rng.below(3));
        const auto m = mine_temporal(c, min_support);
        const auto types = oracles::distinct_actions(c);

        REQUIRE(m.n_actions() == static_cast<int>(types.size()));
        for (const Action& a : types) {
            for (const Action& b : types) {
                const auto expect = oracles::temporal_relation_oracle(c, min_support, a, b);
                CHECK(m.relation(a, b) == expect.value);
                if (!(a == b)) CHECK(m.support_of(m.type_of(a), m.type_of(b)) == expect.support);
            }
        }

        const auto vn = mine_verb_noun(c);
        for (int v = 0; v < c.n_verbs(); ++v)
            for (int n = 0; n < c.n_nouns(); ++n)
                CHECK(vn.entry(v, n) == oracles::verbnoun_entry_oracle(c, v, n));
    }
}

TEST_CASE("verb-noun mining pins", "[constraints]") {
    SECTION("unseen combinations of seen tokens are implausible") {
        const Corpus c = tiny({{{0, 0}, {1, 1}}});
        const auto vn = mine_verb_noun(c);
        CHECK(vn.entry(0, 0) == 0);
        CHECK(vn.entry(1, 1) == 0);
        CHECK(vn.entry(0, 1) == 1);
        CHECK(vn.entry(1, 0) == 1);
        // the matrix spans the whole vocabulary cross-product
        CHECK(vn.n_verbs == 4);
        CHECK(vn.n_nouns == 4);
        CHECK(vn.entry(3, 3) == 1);
    }
    SECTION("a corpus covering every cell has no implausible pairs") {
        Corpus c = tiny({{{0, 0}, {0, 1}, {1, 0}, {1, 1}}});
        c.verb_vocab = {"v0", "v1"};
        c.noun_vocab = {"n0", "n1"};
        CHECK(mine_verb_noun(c).nonzero_count() == 0);
    }
}

TEST_CASE("violation checking", "[constraints]") {
    const Corpus c = tiny({{{0, 0}, {1, 1}}, {{0, 0}, {2, 2}}});
    const auto temp = mine_temporal(c, 1);
    const auto act = mine_verb_noun(c);

    SECTION("in-order pair is followed") {
        const ViolationReport r = check_sequence({"x", {{0, 0}, {1, 1}}}, temp, act);
        CHECK(r.constraints_checked == 1);
        CHECK(r.temporal_violations.empty());
        CHECK(r.verbnoun_violations.empty());
        CHECK(r.constraints_followed == 1);
    }
    SECTION("reversed pair violates") {
        const ViolationReport r = check_sequence({"x", {{1, 1}, {0, 0}}}, temp, act);
        CHECK(r.constraints_checked == 1);
        REQUIRE(r.temporal_violations.size() == 1);
        CHECK(r.temporal_violations[0] == std::pair<int, int>{0, 1});
        CHECK(r.constraints_followed == 0);
    }
    SECTION("implausible verb-noun cells are counted per position") {
        const ViolationReport r = check_sequence({"x", {{0, 1}}}, temp, act);
        CHECK(r.constraints_checked == 1);
        REQUIRE(r.verbnoun_violations.size() == 1);
        CHECK(r.verbnoun_violations[0] == 0);
    }
    SECTION("positions with observed pairs and unrelated types check nothing") {
        const ViolationReport r = check_sequence({"x", {{1, 1}, {2, 2}}}, temp, act);
        CHECK(r.constraints_checked == 0);
        CHECK(r.constraints_followed == 0);
    }
    SECTION("out-of-range ids throw") {
        CHECK_THROWS_AS(check_sequence({"x", {{9, 0}}}, temp, act), std::out_of_range);
    }
    SECTION("training sequences never violate their own constraints") {
        Rng rng(777);
        for (int it = 0; it < 50; ++it) {
            const Corpus rc = oracles::random_corpus(rng);
            const auto rtemp = mine_temporal(rc, 1);
            const auto ract = mine_verb_noun(rc);
            for (const auto& seq : rc.sequences) {
                const ViolationReport r = check_sequence(seq, rtemp, ract);
                CHECK(r.temporal_violations.empty());
                CHECK(r.verbnoun_violations.empty());
                CHECK(r.constraints_followed == r.constraints_checked);
            }
        }
    }
}

TEST_CASE("compliance aggregates followed and checked counts", "[constraints]") {
    const Corpus c = tiny({{{0, 0}, {1, 1}}, {{0, 0}, {2, 2}}});
    const auto temp = mine_temporal(c, 1);
    const auto act = mine_verb_noun(c);

    const ActionSequence follows{"a", {{0, 0}, {1, 1}}};
    const ActionSequence breaks{"b", {{1, 1}, {0, 0}}};
    const ComplianceStats stats = compliance_rate({follows, breaks}, temp, act);
    CHECK(stats.avg_followed == 0.5);
    CHECK(stats.avg_checked == 1.0);
    CHECK(stats.followed_fraction() == 0.5);

    SECTION("no applicable constraints means vacuous full compliance") {
        const ComplianceStats none = compliance_rate({{"c", {{1, 1}, {2, 2}}}}, temp, act);
        CHECK(none.avg_checked == 0.0);
        CHECK(none.avg_followed == 0.0);
        CHECK(none.followed_fraction() == 1.0);
    }
}

TEST_CASE("matrices survive the text format round trip", "[constraints]") {
    Rng rng(4321);
    for (int it = 0; it < 40; ++it) {
        const Corpus c = oracles::random_corpus(rng);
        const auto temp = mine_temporal(c, 1 + static_cast<int>(rng.below(2)));
        const auto act = mine_verb_noun(c);

        std::ostringstream out;
        save_matrices(temp, act, out);
        std::istringstream in(out.str());
        const auto [temp2, act2] = load_matrices(in);

        REQUIRE(temp2.n_actions() == temp.n_actions());
        CHECK(temp2.min_support == temp.min_support);
        for (int i = 0; i < temp.n_actions(); ++i) {
            CHECK(temp2.types[static_cast<std::size_t>(i)] == temp.types[static_cast<std::size_t>(i)]);
            for (int j = 0; j < temp.n_actions(); ++j) {
                CHECK(temp2.entry(i, j) == temp.entry(i, j));
                if (temp.entry(i, j) != 0) CHECK(temp2.support_of(i, j) == temp.support_of(i, j));
            }
        }
        CHECK(act2.n_verbs == act.n_verbs);
        CHECK(act2.n_nouns == act.n_nouns);
        CHECK(act2.entries == act.entries);
    }

    SECTION("corrupt input is rejected") {
        std::istringstream bad("nonsense 1 2 3\n");
        CHECK_THROWS_AS(load_matrices(bad), std::runtime_error);
    }
}
