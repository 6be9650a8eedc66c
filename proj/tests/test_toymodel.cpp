#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "plausi/toymodel.hpp"

using namespace plausi;

namespace {

Corpus three_step() {
    Corpus c;
    c.verb_vocab = {"v0", "v1", "v2"};
    c.noun_vocab = {"n0", "n1"};
    c.sequences = {{"s0", {{0, 0}, {1, 1}, {2, 0}}}};
    return c;
}

Vec flatten_model(const ModelParams& p) {
    Vec theta = p.token_table;
    theta.insert(theta.end(), p.context_weight.begin(), p.context_weight.end());
    theta.insert(theta.end(), p.output_weight.begin(), p.output_weight.end());
    theta.insert(theta.end(), p.pair_weight.begin(), p.pair_weight.end());
    theta.insert(theta.end(), p.pair_bias.begin(), p.pair_bias.end());
    return theta;
}

ModelParams unflatten_model(const Vec& theta, const ModelParams& shape) {
    ModelParams p = shape;
    std::size_t o = 0;
    for (Vec* part : {&p.token_table, &p.context_weight, &p.output_weight, &p.pair_weight, &p.pair_bias})
        for (double& x : *part) x = theta[o++];
    return p;
}

Vec flatten_grad(const ModelGrad& g) {
    Vec flat = g.token_table;
    flat.insert(flat.end(), g.context_weight.begin(), g.context_weight.end());
    flat.insert(flat.end(), g.output_weight.begin(), g.output_weight.end());
    flat.insert(flat.end(), g.pair_weight.begin(), g.pair_weight.end());
    flat.insert(flat.end(), g.pair_bias.begin(), g.pair_bias.end());
    return flat;
}

}  // namespace

TEST_CASE("forward masks the decoding sub-vocabulary", "[toymodel]") {
    Rng rng(17);
    ModelParams p = make_model(3, 2, 4, rng);
    const std::vector<int> context{p.bos_token(), p.verb_token(0), p.noun_token(1)};

    CHECK(forward(context, Slot::verb, p).size() == 3);
    CHECK(forward(context, Slot::noun, p).size() == 2);

    SECTION("zero parameters score everything evenly") {
        ModelParams zero = p;
        for (Vec* part : {&zero.token_table, &zero.context_weight, &zero.output_weight})
            std::fill(part->begin(), part->end(), 0.0);
        for (double logit : forward(context, Slot::verb, zero)) CHECK(logit == 0.0);
    }
    SECTION("bad inputs throw") {
        CHECK_THROWS_AS(forward({}, Slot::verb, p), std::invalid_argument);
        CHECK_THROWS_AS(forward({99}, Slot::verb, p), std::out_of_range);
    }
    SECTION("the same context always scores the same") {
        CHECK(forward(context, Slot::verb, p) == forward(context, Slot::verb, p));
    }
}

TEST_CASE("the contrastive head shares the token geometry", "[toymodel]") {
    Rng rng(18);
    ModelParams p = make_model(3, 2, 4, rng);
    const EmbedderParams e = make_embedder(p);

    CHECK(e.pair_weight == p.pair_weight);
    CHECK(e.pair_bias == p.pair_bias);
    for (int v = 0; v < 3; ++v) {
        for (int n = 0; n < 2; ++n) {
            const double* arow = &e.action_table[e.action_row(v, n)];
            const double* vrow = &p.token_table[static_cast<std::size_t>(p.verb_token(v)) * p.dim];
            const double* nrow = &p.token_table[static_cast<std::size_t>(p.noun_token(n)) * p.dim];
            for (int k = 0; k < p.dim; ++k)
                CHECK_THAT(arow[k], Catch::Matchers::WithinULP(0.5 * (vrow[k] + nrow[k]), 2));
        }
    }
}

TEST_CASE("the full training-step gradient matches finite differences", "[toymodel]") {
    // this is the one place the tied-embedding chain (plausibility gradients
    // flowing into token rows) is exercised end to end
    Rng rng(19);
    ModelParams p = make_model(2, 2, 3, rng, 0.4);

    WindowExample ex1;
    ex1.prefix = {"p1", {{0, 0}, {1, 1}}};
    ex1.target = {"t1", {{1, 0}, {0, 1}}};
    WindowExample ex2;
    ex2.prefix = {"p2", {{1, 0}}};
    ex2.target = {"t2", {{0, 0}, {1, 1}}};

    ActionSequence cf1 = ex1.target;
    std::swap(cf1.actions[0], cf1.actions[1]);
    Vec noise(3);
    for (double& x : noise) x = 0.3 * rng.normal();

    TrainConfig config;
    config.alpha = 0.5;
    config.beta = 0.5;
    config.tau = 0.7;
    config.horizon = 2;
    config.dim = 3;

    const Vec gammas = gamma_schedule(4).values;

    for (const LossVariant variant : {LossVariant::rep, LossVariant::rep_focal, LossVariant::nll}) {
        config.loss_variant = variant;
        std::vector<BatchItem> batch(2);
        batch[0].example = &ex1;
        batch[0].target_cf = &cf1;
        batch[0].noise = &noise;
        batch[1].example = &ex2;  // no plausibility term on this one

        const BatchOutcome outcome = compute_batch(p, batch, gammas, config);
        CHECK(outcome.plau_count == 1);

        const auto fd = oracles::central_fd(
            [&](const Vec& theta) {
                return batch_objective(compute_batch(unflatten_model(theta, p), batch, gammas, config), config);
            },
            flatten_model(p), 1e-4);
        CHECK(oracles::max_rel_err(flatten_grad(outcome.grad), fd) < 1e-5);
    }

    SECTION("validation") {
        std::vector<BatchItem> missing_noise(1);
        missing_noise[0].example = &ex1;
        missing_noise[0].target_cf = &cf1;
        CHECK_THROWS_AS(compute_batch(p, missing_noise, gammas, config), std::logic_error);
        CHECK_THROWS_AS(compute_batch(p, {}, gammas, config), std::invalid_argument);

        WindowExample short_target;
        short_target.prefix = ex1.prefix;
        short_target.target = {"t", {{0, 0}}};
        std::vector<BatchItem> short_batch(1);
        short_batch[0].example = &short_target;
        CHECK_THROWS_AS(compute_batch(p, short_batch, gammas, config), std::invalid_argument);
    }
}

TEST_CASE("greedy decoding branches candidates on the first token", "[toymodel]") {
    Rng rng(20);
    ModelParams p = make_model(3, 2, 4, rng);
    const ActionSequence prefix{"pfx", {{0, 0}}};

    SECTION("shapes") {
        Rng gen(1);
        const auto cands = generate(prefix, p, 3, 2, DecodeConfig{}, gen);
        REQUIRE(cands.size() == 2);
        for (const auto& c : cands) CHECK(c.actions.size() == 3);
    }
    SECTION("first verbs differ across candidates, then decoding is greedy") {
        Rng gen(1);
        const auto cands = generate(prefix, p, 2, 3, DecodeConfig{}, gen);
        REQUIRE(cands.size() == 3);
        CHECK(cands[0].actions[0].verb_id != cands[1].actions[0].verb_id);
        CHECK(cands[1].actions[0].verb_id != cands[2].actions[0].verb_id);
    }
    SECTION("greedy is rng-independent") {
        Rng g1(1), g2(999);
        CHECK(generate(prefix, p, 3, 2, DecodeConfig{}, g1) == generate(prefix, p, 3, 2, DecodeConfig{}, g2));
    }
    SECTION("top-1 sampling equals the greedy continuation") {
        Rng g1(5), g2(5);
        DecodeConfig topk;
        topk.kind = DecodeConfig::Kind::topk;
        topk.k = 1;
        CHECK(generate(prefix, p, 3, 1, topk, g1) == generate(prefix, p, 3, 1, DecodeConfig{}, g2));
    }
    SECTION("sampling reproduces under the same seed") {
        DecodeConfig sample;
        sample.kind = DecodeConfig::Kind::sample;
        sample.temperature = 1.3;
        Rng g1(6), g2(6);
        CHECK(generate(prefix, p, 4, 3, sample, g1) == generate(prefix, p, 4, 3, sample, g2));
    }
    SECTION("validation") {
        Rng gen(1);
        CHECK_THROWS_AS(generate(prefix, p, 0, 1, DecodeConfig{}, gen), std::invalid_argument);
        DecodeConfig bad;
        bad.kind = DecodeConfig::Kind::sample;
        bad.temperature = 0.0;
        CHECK_THROWS_AS(generate(prefix, p, 1, 1, bad, gen), std::invalid_argument);
    }
}

TEST_CASE("training mechanics", "[toymodel]") {
    const Corpus corpus = three_step();
    TrainConfig config;
    config.epochs = 3;
    config.learning_rate = 0.1;
    config.dim = 4;
    config.observation_len = 1;
    config.horizon = 2;
    config.use_plau = true;
    config.loss_variant = LossVariant::rep;
    config.seed = 11;

    SECTION("zero learning rate keeps the initialization") {
        TrainConfig frozen = config;
        frozen.learning_rate = 0.0;
        const TrainResult r = train(corpus, frozen);

        const Rng root(frozen.seed);
        Rng init = root.fork("init");
        const ModelParams fresh = make_model(corpus.n_verbs(), corpus.n_nouns(), frozen.dim, init);
        CHECK(r.params.token_table == fresh.token_table);
        CHECK(r.params.context_weight == fresh.context_weight);
        CHECK(r.params.output_weight == fresh.output_weight);
        CHECK(r.params.pair_weight == fresh.pair_weight);
        CHECK(r.params.pair_bias == fresh.pair_bias);
    }
    SECTION("training is bit-deterministic in the seed") {
        const TrainResult a = train(corpus, config);
        const TrainResult b = train(corpus, config);
        CHECK(a.params.token_table == b.params.token_table);
        CHECK(a.params.output_weight == b.params.output_weight);
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t e = 0; e < a.history.size(); ++e) {
            CHECK(a.history[e].rep == b.history[e].rep);
            CHECK(a.history[e].plau == b.history[e].plau);
            CHECK(a.history[e].holdout_repetition == b.history[e].holdout_repetition);
        }

        TrainConfig other = config;
        other.seed = 12;
        const TrainResult c = train(corpus, other);
        CHECK(a.params.token_table != c.params.token_table);
    }
    SECTION("history carries one entry per epoch with a finite combined loss") {
        const TrainResult r = train(corpus, config);
        REQUIRE(r.history.size() == 3);
        for (const EpochStats& s : r.history) {
            CHECK(std::isfinite(s.total));
            CHECK(s.total == loss_total(s.plau, s.rep, config.alpha, config.beta));
        }
        CHECK(r.train_windows == 1);
        CHECK(r.holdout_windows == 0);
    }
    SECTION("single-example nll training descends monotonically") {
        TrainConfig slow = config;
        slow.loss_variant = LossVariant::nll;
        slow.use_plau = false;
        slow.learning_rate = 0.05;
        slow.epochs = 200;
        const TrainResult r = train(corpus, slow);
        for (std::size_t e = 1; e < r.history.size(); ++e)
            CHECK(r.history[e].rep <= r.history[e - 1].rep + 1e-9);
    }
    SECTION("enough epochs overfit the single example") {
        TrainConfig hard = config;
        hard.loss_variant = LossVariant::nll;
        hard.use_plau = false;
        hard.learning_rate = 0.3;
        hard.epochs = 300;
        const TrainResult r = train(corpus, hard);

        Rng gen(1);
        const auto cands =
            generate(ActionSequence{"q", {{0, 0}}}, r.params, 2, 1, DecodeConfig{}, gen);
        REQUIRE(cands.size() == 1);
        CHECK(cands[0].actions == std::vector<Action>{{1, 1}, {2, 0}});
    }
    SECTION("empty corpora and corpora too short to window are rejected") {
        CHECK_THROWS_AS(train(Corpus{}, config), std::invalid_argument);
        TrainConfig wide = config;
        wide.observation_len = 10;
        CHECK_THROWS_AS(train(corpus, wide), std::invalid_argument);
    }
}

TEST_CASE("predictor adapter", "[toymodel]") {
    Rng rng(23);
    ModelParams p = make_model(3, 2, 4, rng);
    ModelPredictor predictor(p, DecodeConfig{}, 7);
    const ActionSequence prefix{"pfx", {{0, 0}, {1, 1}}};

    SECTION("candidate shape and per-prefix determinism") {
        const auto a = predictor.candidates(prefix, 3, 4);
        REQUIRE(a.size() == 4);
        for (const auto& c : a) CHECK(c.actions.size() == 3);
        CHECK(a == predictor.candidates(prefix, 3, 4));  // repeat calls agree
    }
    SECTION("top-5 lists are padded to five distinct entries") {
        const Top5 top = predictor.top5_next(prefix);
        for (const auto* list : {&top.verbs, &top.nouns, &top.actions}) {
            REQUIRE(list->size() == 5);
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = i + 1; j < 5; ++j) CHECK((*list)[i] != (*list)[j]);
        }
        // three verbs, two nouns: the tails must be sentinels
        CHECK(top.verbs[4] < 0);
        CHECK(top.nouns[2] < 0);
        // six joint actions fill all five real slots
        for (long long a : top.actions) CHECK(a >= 0);
    }
}

TEST_CASE("checkpoints round-trip bitwise", "[toymodel]") {
    Rng rng(29);
    ModelParams p = make_model(3, 2, 5, rng);
    const std::vector<std::string> verbs{"crack", "whisk", "cook"};
    const std::vector<std::string> nouns{"egg", "pan"};

    std::ostringstream out;
    save_model(p, verbs, nouns, out);
    std::istringstream in(out.str());
    const LoadedModel m = load_model(in);

    CHECK(m.verb_vocab == verbs);
    CHECK(m.noun_vocab == nouns);
    CHECK(m.params.dim == 5);
    CHECK(m.params.token_table == p.token_table);
    CHECK(m.params.context_weight == p.context_weight);
    CHECK(m.params.output_weight == p.output_weight);
    CHECK(m.params.pair_weight == p.pair_weight);
    CHECK(m.params.pair_bias == p.pair_bias);

    SECTION("foreign json is rejected") {
        std::istringstream junk(R"({"format": "something-else"})");
        CHECK_THROWS_AS(load_model(junk), std::runtime_error);
        std::istringstream garbage("not json at all");
        CHECK_THROWS_AS(load_model(garbage), std::runtime_error);
    }
}

TEST_CASE("corpora remap onto checkpoint vocabularies by name", "[toymodel]") {
    Corpus c;
    c.verb_vocab = {"whisk", "crack"};
    c.noun_vocab = {"egg"};
    c.sequences = {{"s", {{0, 0}, {1, 0}}}};

    const Corpus mapped = remap_corpus(c, {"crack", "whisk"}, {"egg"});
    CHECK(mapped.sequences[0].actions == std::vector<Action>{{1, 0}, {0, 0}});
    CHECK(mapped.verb_vocab == std::vector<std::string>{"crack", "whisk"});

    CHECK_THROWS_AS(remap_corpus(c, {"crack"}, {"egg"}), std::runtime_error);
}

TEST_CASE("history serializes one json line per epoch", "[toymodel]") {
    std::vector<EpochStats> history(2);
    history[0] = {0, 1.5, 2.5, 2.0, 0.25, 0.875};
    history[1] = {1, 1.0, 2.0, 1.5, 0.0, 1.0};

    std::ostringstream out;
    save_history(history, out);
    std::istringstream in(out.str());
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("step").get<int>() == n);
        CHECK(j.contains("plau"));
        CHECK(j.contains("rep"));
        CHECK(j.contains("total"));
        CHECK(j.contains("holdout_repetition"));
        CHECK(j.contains("holdout_compliance"));
        ++n;
    }
    CHECK(n == 2);
}
