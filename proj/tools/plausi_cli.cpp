// Command-line front end: ingest | mine | cfgen | train | eval | demo.
// Global flags --config/--seed/--out; JSON config supplies defaults and
// explicit flags win. Exit codes: 0 ok, 1 runtime failure, 2 usage/config.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plausi/constraints.hpp"
#include "plausi/corpus.hpp"
#include "plausi/counterfactual.hpp"
#include "plausi/demo.hpp"
#include "plausi/metrics.hpp"
#include "plausi/rng.hpp"
#include "plausi/toymodel.hpp"

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        nlohmann::json j;
        in >> j;
        if (!j.is_object()) throw ConfigError("config root must be a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

// Records flag-or-config bindings; config fills in only where the flag was
// not given on the command line.
class Overrides {
public:
    template <typename T>
    void bind(CLI::Option* opt, const char* key, T& ref) {
        fns_.push_back([opt, key, &ref](const nlohmann::json& cfg) {
            if (opt->count() == 0 && cfg.contains(key)) {
                try {
                    ref = cfg.at(key).get<T>();
                } catch (const nlohmann::json::exception&) {
                    throw ConfigError(std::string("config: bad value for key '") + key + "'");
                }
            }
        });
    }
    void apply(const nlohmann::json& cfg) {
        for (auto& f : fns_) f(cfg);
    }

private:
    std::vector<std::function<void(const nlohmann::json&)>> fns_;
};

std::ifstream open_input(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing required ") + what + " path");
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " file: " + path);
    return in;
}

std::ofstream open_output(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing required ") + what + " output path (--out)");
    std::ofstream out(path);
    if (!out) throw ConfigError(std::string("cannot open ") + what + " output file: " + path);
    return out;
}

// Config-value validation errors must exit 2, not 1.
template <typename F>
auto checked_config(F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::string count_noun(std::size_t n, const char* singular, const char* plural) {
    return std::to_string(n) + " " + (n == 1 ? singular : plural);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace plausi;

    CLI::App app{"plausibility toolkit: constraint mining, counterfactuals, training losses, evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    std::uint64_t seed = 1;
    app.add_option("--config", config_path, "JSON config file; explicit flags override its values");
    auto* opt_seed = app.add_option("--seed", seed, "root seed for all randomness");
    auto* opt_out = app.add_option("--out", out_path, "output path");

    Overrides overrides;
    overrides.bind(opt_seed, "seed", seed);
    overrides.bind(opt_out, "out", out_path);

    // shared option state
    std::string corpus_path, matrices_path, checkpoint_path, history_path;
    TrainConfig tc;
    std::string loss_variant_name = to_string(tc.loss_variant);
    int min_support = 1;
    double mix = 0.5;
    int demo_seeds = 5;

    auto bind_window = [&](CLI::App* cmd) {
        overrides.bind(cmd->add_option("--observation-len", tc.observation_len, "prefix length in actions"),
                       "observation_len", tc.observation_len);
        overrides.bind(cmd->add_option("--gap", tc.gap, "actions skipped between prefix and target"), "gap", tc.gap);
        overrides.bind(cmd->add_option("--horizon", tc.horizon, "actions to predict (Z)"), "horizon", tc.horizon);
    };
    auto bind_corpus = [&](CLI::App* cmd) {
        overrides.bind(cmd->add_option("--corpus", corpus_path, "corpus JSONL path"), "corpus", corpus_path);
    };

    CLI::App* cmd_ingest = app.add_subcommand("ingest", "parse a corpus and report its shape");
    cmd_ingest->fallthrough();
    bind_corpus(cmd_ingest);

    CLI::App* cmd_mine = app.add_subcommand("mine", "mine temporal and verb-noun constraints");
    cmd_mine->fallthrough();
    bind_corpus(cmd_mine);
    overrides.bind(cmd_mine->add_option("--min-support", min_support, "required co-occurring sequences"),
                   "min_support", min_support);

    CLI::App* cmd_cfgen = app.add_subcommand("cfgen", "generate the counterfactual dataset");
    cmd_cfgen->fallthrough();
    bind_corpus(cmd_cfgen);
    overrides.bind(cmd_cfgen->add_option("--matrices", matrices_path, "mined constraint file"), "matrices",
                   matrices_path);
    overrides.bind(cmd_cfgen->add_option("--mix", mix, "probability of trying the temporal edit first"), "mix", mix);
    bind_window(cmd_cfgen);

    CLI::App* cmd_train = app.add_subcommand("train", "train the toy model; writes checkpoint + history");
    cmd_train->fallthrough();
    bind_corpus(cmd_train);
    overrides.bind(cmd_train->add_option("--epochs", tc.epochs, "training epochs"), "epochs", tc.epochs);
    overrides.bind(cmd_train->add_option("--learning-rate", tc.learning_rate, "SGD step size"), "learning_rate",
                   tc.learning_rate);
    overrides.bind(cmd_train->add_option("--batch-size", tc.batch_size, "examples per SGD step"), "batch_size",
                   tc.batch_size);
    overrides.bind(cmd_train->add_option("--alpha", tc.alpha, "plausibility loss weight"), "alpha", tc.alpha);
    overrides.bind(cmd_train->add_option("--beta", tc.beta, "generation loss weight"), "beta", tc.beta);
    overrides.bind(cmd_train->add_option("--tau", tc.tau, "similarity temperature"), "tau", tc.tau);
    overrides.bind(cmd_train->add_option("--sigma", tc.sigma_jitter, "augmentation noise scale"), "sigma_jitter",
                   tc.sigma_jitter);
    overrides.bind(cmd_train->add_option("--loss-variant", loss_variant_name, "nll | rep | rep_focal"),
                   "loss_variant", loss_variant_name);
    overrides.bind(cmd_train->add_flag("--use-plau,!--no-plau", tc.use_plau, "toggle the plausibility loss"),
                   "use_plau", tc.use_plau);
    overrides.bind(cmd_train->add_option("--mix", tc.mix, "counterfactual family mix"), "mix", tc.mix);
    overrides.bind(cmd_train->add_option("--dim", tc.dim, "embedding width"), "dim", tc.dim);
    overrides.bind(cmd_train->add_option("--min-support", tc.min_support, "mining support threshold"),
                   "min_support", tc.min_support);
    overrides.bind(cmd_train->add_option("--history", history_path, "history JSONL path"), "history", history_path);
    bind_window(cmd_train);

    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
    cmd_eval->fallthrough();
    bind_corpus(cmd_eval);
    overrides.bind(cmd_eval->add_option("--checkpoint", checkpoint_path, "model checkpoint path"), "checkpoint",
                   checkpoint_path);
    overrides.bind(cmd_eval->add_option("--matrices", matrices_path, "mined constraint file"), "matrices",
                   matrices_path);
    overrides.bind(cmd_eval->add_option("-K,--candidates", tc.K, "candidate sequences per example"), "K", tc.K);
    bind_window(cmd_eval);

    CLI::App* cmd_demo = app.add_subcommand("demo", "synthetic end-to-end ablation experiment");
    cmd_demo->fallthrough();
    overrides.bind(cmd_demo->add_option("--seeds", demo_seeds, "training seeds to average over"), "n_seeds",
                   demo_seeds);
    overrides.bind(cmd_demo->add_option("--epochs", tc.epochs, "training epochs per run"), "epochs", tc.epochs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const nlohmann::json cfg = load_config(config_path);
        overrides.apply(cfg);
        tc.seed = seed;
        tc.loss_variant = checked_config([&] { return parse_loss_variant(loss_variant_name); });

        if (app.got_subcommand(cmd_ingest)) {
            auto in = open_input(corpus_path, "corpus");
            const Corpus corpus = parse_corpus(in);
            validate_corpus(corpus);
            std::cout << count_noun(corpus.sequences.size(), "sequence", "sequences") << ", "
                      << count_noun(corpus.verb_vocab.size(), "verb", "verbs") << ", "
                      << count_noun(corpus.noun_vocab.size(), "noun", "nouns") << "\n";
            std::map<std::size_t, std::size_t> histogram;
            for (const auto& seq : corpus.sequences) ++histogram[seq.actions.size()];
            std::cout << "length histogram:\n";
            for (const auto& [len, count] : histogram) std::cout << "  " << len << ": " << count << "\n";
            if (!out_path.empty()) {
                auto out = open_output(out_path, "corpus");
                serialize_corpus(corpus, out);
            }
            return 0;
        }

        if (app.got_subcommand(cmd_mine)) {
            auto in = open_input(corpus_path, "corpus");
            const Corpus corpus = parse_corpus(in);
            validate_corpus(corpus);
            const TemporalConstraintMatrix temp = checked_config([&] { return mine_temporal(corpus, min_support); });
            const VerbNounConstraintMatrix act = mine_verb_noun(corpus);
            auto out = open_output(out_path, "matrices");
            save_matrices(temp, act, out);
            std::cout << "action types: " << temp.n_actions() << "\n";
            std::cout << "temporal nonzero entries: " << temp.nonzero_count() << "\n";
            std::cout << "verb-noun implausible pairs: " << act.nonzero_count() << "\n";
            return 0;
        }

        if (app.got_subcommand(cmd_cfgen)) {
            auto in = open_input(corpus_path, "corpus");
            const Corpus corpus = parse_corpus(in);
            validate_corpus(corpus);
            auto min = open_input(matrices_path, "matrices");
            const auto [temp, act] = load_matrices(min);
            const AnticipationWindow window{tc.observation_len, tc.gap, tc.horizon};
            checked_config([&] { validate_window(window); return 0; });
            const WindowedExamples windows = window_examples(corpus, window);
            Rng rng(derive_seed(seed, "cfgen"));
            const CfDataset ds = checked_config([&] { return build_cf_dataset(windows.examples, temp, act, rng, mix); });
            auto out = open_output(out_path, "counterfactual dataset");
            save_cf_dataset(ds, corpus, out);
            std::cout << "cf samples: " << ds.items.size() << " (temporal " << ds.n_temporal << ", verb "
                      << ds.n_verb << ", noun " << ds.n_noun << "), dropped " << ds.dropped << "\n";
            return 0;
        }

        if (app.got_subcommand(cmd_train)) {
            auto in = open_input(corpus_path, "corpus");
            const Corpus corpus = parse_corpus(in);
            validate_corpus(corpus);
            checked_config([&] { validate_train_config(tc); return 0; });
            const TrainResult result = train(corpus, tc);
            auto out = open_output(out_path, "checkpoint");
            save_model(result.params, corpus.verb_vocab, corpus.noun_vocab, out);
            const std::string hist_path = history_path.empty() ? out_path + ".history.jsonl" : history_path;
            auto hout = open_output(hist_path, "history");
            save_history(result.history, hout);
            const EpochStats& last = result.history.back();
            char line[160];
            std::snprintf(line, sizeof(line),
                          "final: plau %.4f rep %.4f total %.4f holdout_repetition %.3f holdout_compliance %.4f",
                          last.plau, last.rep, last.total, last.holdout_repetition, last.holdout_compliance);
            std::cout << "trained " << tc.epochs << " epochs on " << result.train_windows << " windows"
                      << " (holdout windows: " << result.holdout_windows << ", cf dropped: " << result.cf_dropped
                      << ")\n"
                      << line << "\n";
            return 0;
        }

        if (app.got_subcommand(cmd_eval)) {
            auto cin_ = open_input(checkpoint_path, "checkpoint");
            const LoadedModel model = load_model(cin_);
            auto min = open_input(matrices_path, "matrices");
            const auto [temp, act] = load_matrices(min);
            auto in = open_input(corpus_path, "corpus");
            const Corpus raw = parse_corpus(in);
            validate_corpus(raw);
            const Corpus corpus = remap_corpus(raw, model.verb_vocab, model.noun_vocab);
            const AnticipationWindow window{tc.observation_len, tc.gap, tc.horizon};
            checked_config([&] { validate_window(window); return 0; });
            ModelPredictor predictor(model.params, DecodeConfig{}, derive_seed(seed, "eval"));
            const EvalReport report = checked_config([&] { return evaluate(predictor, corpus, temp, act, window, tc.K); });
            print_report(report, std::cout);
            if (!out_path.empty()) {
                auto out = open_output(out_path, "report");
                out << report_json(report).dump(2) << "\n";
            }
            return 0;
        }

        if (app.got_subcommand(cmd_demo)) {
            DemoConfig dc;
            dc.n_seeds = demo_seeds;
            dc.train = tc;
            checked_config([&] { validate_train_config(dc.train); return 0; });
            const DemoResult result = run_demo(seed, dc);
            print_demo(result, std::cout);
            if (!out_path.empty()) {
                auto out = open_output(out_path, "demo report");
                print_demo(result, out);
            }
            return 0;
        }

        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
