#pragma once

// Action-sequence corpus: JSONL parsing, validation, serialization, and
// prefix/target windowing for anticipation examples.

#include <cstddef>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace plausi {

struct Action {
    int verb_id = 0;
    int noun_id = 0;
    bool operator==(const Action&) const = default;
};

struct ActionSequence {
    std::string id;
    std::vector<Action> actions;
    bool operator==(const ActionSequence&) const = default;
};

struct Corpus {
    std::vector<ActionSequence> sequences;
    std::vector<std::string> verb_vocab;  // first-appearance order
    std::vector<std::string> noun_vocab;
    bool operator==(const Corpus&) const = default;

    int n_verbs() const { return static_cast<int>(verb_vocab.size()); }
    int n_nouns() const { return static_cast<int>(noun_vocab.size()); }
};

// Windowing parameters, all in counts of actions. horizon is the number of
// future actions to predict; gap is the unobserved stretch between the end
// of the prefix and the first target action.
struct AnticipationWindow {
    int observation_len = 1;
    int gap = 0;
    int horizon = 1;
};

inline void validate_window(const AnticipationWindow& w) {
    if (w.observation_len < 1) throw std::invalid_argument("observation_len must be >= 1");
    if (w.gap < 0) throw std::invalid_argument("gap must be >= 0");
    if (w.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
}

inline void validate_corpus(const Corpus& corpus) {
    auto check_vocab = [](const std::vector<std::string>& vocab, const char* which) {
        std::unordered_map<std::string, int> seen;
        for (const auto& s : vocab) {
            if (s.empty()) throw std::invalid_argument(std::string(which) + " vocabulary has an empty entry");
            if (!seen.emplace(s, 0).second)
                throw std::invalid_argument(std::string(which) + " vocabulary has duplicate entry '" + s + "'");
        }
    };
    check_vocab(corpus.verb_vocab, "verb");
    check_vocab(corpus.noun_vocab, "noun");
    for (const auto& seq : corpus.sequences) {
        if (seq.actions.empty())
            throw std::invalid_argument("sequence '" + seq.id + "' is empty");
        for (const Action& a : seq.actions) {
            if (a.verb_id < 0 || a.verb_id >= corpus.n_verbs() || a.noun_id < 0 || a.noun_id >= corpus.n_nouns())
                throw std::invalid_argument("sequence '" + seq.id + "' references an out-of-vocabulary action");
        }
    }
}

// Parse line-delimited JSON records {"id": string, "actions": [[verb, noun], ...]}.
// Vocabulary ids are assigned in first-appearance order; sequence order is kept.
inline Corpus parse_corpus(std::istream& in) {
    Corpus corpus;
    std::unordered_map<std::string, int> verb_ids, noun_ids;
    auto intern = [](std::unordered_map<std::string, int>& ids, std::vector<std::string>& vocab,
                     const std::string& s) {
        auto [it, inserted] = ids.emplace(s, static_cast<int>(vocab.size()));
        if (inserted) vocab.push_back(s);
        return it->second;
    };

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";

        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(where + "malformed JSON: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
            throw std::runtime_error(where + "record must be an object with a string \"id\"");
        if (!rec.contains("actions") || !rec["actions"].is_array())
            throw std::runtime_error(where + "record must have an \"actions\" array");
        if (rec["actions"].empty())
            throw std::runtime_error(where + "empty action list");

        ActionSequence seq;
        seq.id = rec["id"].get<std::string>();
        for (const auto& entry : rec["actions"]) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() || !entry[1].is_string())
                throw std::runtime_error(where + "action entry is not a 2-element array of strings");
            seq.actions.push_back({intern(verb_ids, corpus.verb_vocab, entry[0].get<std::string>()),
                                   intern(noun_ids, corpus.noun_vocab, entry[1].get<std::string>())});
        }
        corpus.sequences.push_back(std::move(seq));
    }
    return corpus;
}

// Inverse of parse_corpus: one JSON object per line, keys in {id, actions} order.
inline void serialize_corpus(const Corpus& corpus, std::ostream& out) {
    for (const auto& seq : corpus.sequences) {
        nlohmann::ordered_json rec;
        rec["id"] = seq.id;
        auto& actions = rec["actions"] = nlohmann::ordered_json::array();
        for (const Action& a : seq.actions)
            actions.push_back({corpus.verb_vocab.at(a.verb_id), corpus.noun_vocab.at(a.noun_id)});
        out << rec.dump() << "\n";
    }
}

struct WindowExample {
    ActionSequence prefix;
    ActionSequence target;
};

struct WindowedExamples {
    std::vector<WindowExample> examples;
    std::size_t skipped_sequences = 0;  // sequences too short to yield any example
};

// Stride-1 sliding windows: one example per stopping point i with
// prefix = actions[i, i+obs) and target = actions[i+obs+gap, i+obs+gap+horizon).
inline WindowedExamples window_examples(const Corpus& corpus, const AnticipationWindow& w) {
    validate_window(w);
    WindowedExamples out;
    const std::size_t need =
        static_cast<std::size_t>(w.observation_len) + static_cast<std::size_t>(w.gap) + static_cast<std::size_t>(w.horizon);
    for (const auto& seq : corpus.sequences) {
        if (seq.actions.size() < need) {
            ++out.skipped_sequences;
            continue;
        }
        const std::size_t stops = seq.actions.size() - need + 1;
        for (std::size_t i = 0; i < stops; ++i) {
            WindowExample ex;
            const std::string ex_id = seq.id + "@" + std::to_string(i);
            ex.prefix.id = ex_id;
            ex.prefix.actions.assign(seq.actions.begin() + static_cast<std::ptrdiff_t>(i),
                                     seq.actions.begin() + static_cast<std::ptrdiff_t>(i + w.observation_len));
            const std::size_t t0 = i + static_cast<std::size_t>(w.observation_len) + static_cast<std::size_t>(w.gap);
            ex.target.id = ex_id;
            ex.target.actions.assign(seq.actions.begin() + static_cast<std::ptrdiff_t>(t0),
                                     seq.actions.begin() + static_cast<std::ptrdiff_t>(t0 + w.horizon));
            out.examples.push_back(std::move(ex));
        }
    }
    return out;
}

inline std::string action_label(const Corpus& corpus, const Action& a) {
    return corpus.verb_vocab.at(a.verb_id) + " " + corpus.noun_vocab.at(a.noun_id);
}

}  // namespace plausi
