#pragma once

// Shared fixture builders: temporary directories, delimited-file writers and
// the synthetic corpora the training tests overfit on.

#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "esnli/corpus.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("esnli_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    f << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// --- synthetic corpora ------------------------------------------------------

using esnli::corpus::ExampleRecord;
using esnli::corpus::Label;
using esnli::corpus::Sentence;

inline ExampleRecord make_record(std::string pair_id, Label label, std::string premise,
                                 std::string hypothesis, std::vector<std::string> explanations,
                                 std::set<std::size_t> ph = {}, std::set<std::size_t> hh = {}) {
    ExampleRecord r;
    r.pair_id = std::move(pair_id);
    r.label = label;
    r.premise = Sentence::of(std::move(premise));
    r.hypothesis = Sentence::of(std::move(hypothesis));
    for (auto& e : explanations) r.explanations.push_back(Sentence::of(std::move(e)));
    r.premise_highlights = std::move(ph);
    r.hypothesis_highlights = std::move(hh);
    return r;
}

// Deterministic NLI-style corpus with a learnable premise/hypothesis -> label
// mapping and short patterned explanations. Highlights satisfy R3-R5.
inline std::vector<ExampleRecord> toy_corpus(std::size_t n, unsigned seed = 7) {
    static const std::vector<std::string> subjects = {"man", "woman", "dog", "cat", "boy",
                                                      "girl", "bird", "child", "runner", "artist"};
    static const std::vector<std::string> actions = {"runs", "sleeps", "jumps", "sings", "walks",
                                                     "swims", "paints", "reads", "eats", "plays"};
    static const std::vector<std::string> places = {"park", "street", "house", "field", "beach"};

    std::mt19937 rng(seed);
    std::vector<ExampleRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& subj = subjects[rng() % subjects.size()];
        const std::string& act = actions[rng() % actions.size()];
        const std::string& place = places[rng() % places.size()];
        Label label = static_cast<Label>(i % 3);
        std::string premise = "the " + subj + " " + act + " in the " + place;
        std::string hypothesis, expl;
        std::set<std::size_t> ph, hh;
        switch (label) {
            case Label::entailment: {
                hypothesis = "a " + subj + " is in the " + place;
                expl = act + " in the " + place + " means being in the " + place;
                ph = {1, 2};
                hh = {1};
                break;
            }
            case Label::neutral: {
                const std::string& act2 = actions[(rng() % actions.size())];
                hypothesis = "the " + subj + " likes to " + (act2 == act ? "rest" : act2);
                expl = "not every " + subj + " that " + act + " likes that";
                hh = {3, 4};
                break;
            }
            case Label::contradiction: {
                std::string act2 = actions[rng() % actions.size()];
                if (act2 == act) act2 = act == "sleeps" ? "runs" : "sleeps";
                hypothesis = "the " + subj + " " + act2 + " now";
                expl = "the " + subj + " cannot " + act + " and " + act2 + " at once";
                ph = {1, 2};
                hh = {2};
                break;
            }
        }
        out.push_back(make_record("toy" + std::to_string(i), label, premise, hypothesis, {expl}, ph, hh));
    }
    return out;
}

// Corpus whose explanations carry one class-revealing keyword each; trivially
// separable by an explanation-only classifier.
inline std::vector<ExampleRecord> keyword_corpus(std::size_t n, unsigned seed = 11) {
    static const char* keywords[3] = {"definitely", "possibly", "never"};
    static const std::vector<std::string> fillers = {
        "the person in the scene", "someone outdoors", "a group of people",
        "the animal nearby", "a small child"};
    std::mt19937 rng(seed);
    std::vector<ExampleRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        Label label = static_cast<Label>(i % 3);
        const std::string& fill = fillers[rng() % fillers.size()];
        std::string expl = fill + " " + keywords[static_cast<int>(label)] + " matches the claim";
        out.push_back(make_record("kw" + std::to_string(i), label, "a premise sentence",
                                  "a hypothesis sentence", {expl}, {0}, {0}));
    }
    return out;
}

// Render records as an e-SNLI-shaped CSV (quoted fields, word-position
// highlight indices derived from the token sets).
inline std::string to_esnli_csv(const std::vector<ExampleRecord>& records) {
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q.push_back(c);
        }
        return q + "\"";
    };
    // toy sentences have one token per whitespace word, so token indices are
    // word indices already
    std::string csv =
        "pairID,gold_label,Sentence1,Sentence2,Explanation_1,Sentence1_Highlighted_1,Sentence2_Highlighted_1\n";
    for (const auto& r : records) {
        csv += quote(r.pair_id) + "," + esnli::corpus::label_name(r.label) + "," + quote(r.premise.raw) +
               "," + quote(r.hypothesis.raw) + "," + quote(r.explanations.at(0).raw) + "," +
               quote(esnli::corpus::join_indices(r.premise_highlights)) + "," +
               quote(esnli::corpus::join_indices(r.hypothesis_highlights)) + "\n";
    }
    return csv;
}

}  // namespace fixtures
