#pragma once

// Dataset ingestion: delimited-file parsing into validated records, the
// shared vocabulary, and padded batches. Parsing never silently drops rows;
// anything structurally unusable comes back in a rejects list with a reason.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "esnli/tensor.hpp"

namespace esnli::corpus {

enum class Label { entailment = 0, neutral = 1, contradiction = 2 };

inline const char* label_name(Label l) {
    switch (l) {
        case Label::entailment: return "entailment";
        case Label::neutral: return "neutral";
        default: return "contradiction";
    }
}

inline std::optional<Label> parse_label(std::string_view s) {
    std::string t;
    for (char c : s) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "entailment") return Label::entailment;
    if (t == "neutral") return Label::neutral;
    if (t == "contradiction") return Label::contradiction;
    return std::nullopt;
}

// --- tokenization -----------------------------------------------------------
// Lowercase, punctuation characters split off as single-character tokens,
// then whitespace split. Bytes outside ASCII pass through untouched.

inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) s.push_back(' ');
        s += tokens[i];
    }
    return s;
}

// --- delimited file reading ----------------------------------------------------
// Quoted-field aware (RFC-4180 style): fields may be wrapped in double quotes,
// embedded quotes doubled, delimiters and newlines allowed inside quotes.

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find_column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }

    std::size_t column(const std::string& name) const {
        auto c = find_column(name);
        if (!c) throw std::runtime_error("missing column '" + name + "' in header");
        return *c;
    }
};

inline Table read_delimited(std::istream& in, char delimiter) {
    Table table;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false, any = false, row_started = false;

    auto end_field = [&] {
        record.push_back(field);
        field.clear();
    };
    auto end_record = [&] {
        end_field();
        if (!any) {
            table.header = std::move(record);
            any = true;
        } else {
            table.rows.push_back(std::move(record));
        }
        record = {};
        row_started = false;
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        row_started = true;
        if (c == '"' && field.empty()) {
            in_quotes = true;
        } else if (c == delimiter) {
            end_field();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            end_record();
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) throw std::runtime_error("unterminated quoted field");
    if (row_started || !field.empty() || !record.empty()) end_record();
    return table;
}

inline Table read_delimited_file(const std::string& path, char delimiter) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read '" + path + "'");
    return read_delimited(f, delimiter);
}

// --- records -------------------------------------------------------------------

struct Sentence {
    std::string raw;
    std::vector<std::string> tokens;

    static Sentence of(std::string text) {
        Sentence s;
        // embedded tabs/newlines would break the canonical tab-separated form
        for (char& c : text)
            if (c == '\t' || c == '\n' || c == '\r') c = ' ';
        s.raw = std::move(text);
        s.tokens = tokenize(s.raw);
        return s;
    }

    bool operator==(const Sentence&) const = default;
};

struct ExampleRecord {
    std::string pair_id;
    Sentence premise;
    Sentence hypothesis;
    Label label = Label::neutral;
    std::vector<Sentence> explanations;        // 1 (train) or 3 (val/test)
    std::set<std::size_t> premise_highlights;  // token indices
    std::set<std::size_t> hypothesis_highlights;

    bool operator==(const ExampleRecord&) const = default;
};

struct Reject {
    std::size_t row = 0;  // 1-based data row
    std::string pair_id;
    std::string reason;  // invalid-label, out-of-bounds-highlight, bad-highlight, missing-field
    std::string message;
};

struct ParseResult {
    std::vector<ExampleRecord> records;
    std::vector<Reject> rejects;
};

// How numeric highlight values are interpreted: indices into the raw
// whitespace words of the sentence (the e-SNLI convention), or directly into
// our token sequence (the canonical serialization).
enum class HighlightIndexing { words, tokens };

struct Schema {
    char delimiter = ',';
    HighlightIndexing highlight_indexing = HighlightIndexing::words;
    // logical field → column name; explanation_2/3 and highlight columns optional
    std::map<std::string, std::string> columns;

    static Schema esnli() {
        Schema s;
        s.columns = {{"pair_id", "pairID"},
                     {"label", "gold_label"},
                     {"premise", "Sentence1"},
                     {"hypothesis", "Sentence2"},
                     {"explanation_1", "Explanation_1"},
                     {"explanation_2", "Explanation_2"},
                     {"explanation_3", "Explanation_3"},
                     {"premise_highlights", "Sentence1_Highlighted_1"},
                     {"hypothesis_highlights", "Sentence2_Highlighted_1"}};
        return s;
    }
};

namespace detail {

// Accepts "3,5,7", "{}", empty, or an asterisk-marked copy of the sentence.
// Returns word positions, or nullopt with `err` set.
inline std::optional<std::vector<std::size_t>> highlight_words(const std::string& value, std::string& err) {
    std::vector<std::size_t> out;
    std::string v = value;
    if (v == "{}" || v.empty()) return out;
    if (v.find('*') != std::string::npos) {
        std::istringstream ss(v);
        std::string w;
        std::size_t idx = 0;
        for (; ss >> w; ++idx)
            if (w.size() >= 2 && w.front() == '*' && w.back() == '*') out.push_back(idx);
        return out;
    }
    std::istringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        for (char c : part)
            if (!std::isdigit(static_cast<unsigned char>(c))) {
                err = "unparseable highlight value '" + value + "'";
                return std::nullopt;
            }
        out.push_back(static_cast<std::size_t>(std::stoul(part)));
    }
    return out;
}

// Map word positions to token indices under our tokenization.
inline std::optional<std::set<std::size_t>> words_to_token_indices(const Sentence& s,
                                                                   const std::vector<std::size_t>& words,
                                                                   std::string& err) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // token range per raw word
    std::istringstream ss(s.raw);
    std::string w;
    std::size_t tok = 0;
    while (ss >> w) {
        std::size_t n = tokenize(w).size();
        spans.emplace_back(tok, tok + n);
        tok += n;
    }
    std::set<std::size_t> out;
    for (std::size_t widx : words) {
        if (widx >= spans.size()) {
            err = "highlight index " + std::to_string(widx) + " out of bounds (sentence has " +
                  std::to_string(spans.size()) + " words)";
            return std::nullopt;
        }
        for (std::size_t t = spans[widx].first; t < spans[widx].second; ++t) out.insert(t);
    }
    return out;
}

inline std::optional<std::set<std::size_t>> parse_highlights(const Sentence& s, const std::string& value,
                                                             HighlightIndexing mode, std::string& err) {
    auto words = highlight_words(value, err);
    if (!words) return std::nullopt;
    if (mode == HighlightIndexing::words) return words_to_token_indices(s, *words, err);
    std::set<std::size_t> out;
    for (std::size_t t : *words) {
        if (t >= s.tokens.size()) {
            err = "highlight token index " + std::to_string(t) + " out of bounds (sentence has " +
                  std::to_string(s.tokens.size()) + " tokens)";
            return std::nullopt;
        }
        out.insert(t);
    }
    return out;
}

}  // namespace detail

inline ParseResult parse_table(const Table& table, const Schema& schema) {
    // optional fields (extra explanations, highlights) may be mapped but
    // absent from a particular file's header
    auto col_of = [&](const std::string& field) -> std::optional<std::size_t> {
        auto it = schema.columns.find(field);
        if (it == schema.columns.end()) return std::nullopt;
        return table.find_column(it->second);
    };

    auto require = [&](const std::string& field) {
        auto it = schema.columns.find(field);
        if (it == schema.columns.end())
            throw std::runtime_error("schema does not map required field '" + field + "'");
        return table.column(it->second);
    };

    const std::size_t c_pair = require("pair_id");
    const std::size_t c_label = require("label");
    const std::size_t c_prem = require("premise");
    const std::size_t c_hyp = require("hypothesis");
    const std::size_t c_expl1 = require("explanation_1");
    const auto c_expl2 = col_of("explanation_2");
    const auto c_expl3 = col_of("explanation_3");
    const auto c_ph = col_of("premise_highlights");
    const auto c_hh = col_of("hypothesis_highlights");

    ParseResult result;
    std::unordered_set<std::string> seen_ids;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        auto get = [&](std::size_t c) -> std::string {
            return c < row.size() ? row[c] : std::string();
        };

        ExampleRecord rec;
        rec.pair_id = get(c_pair);
        if (rec.pair_id.empty()) rec.pair_id = "row" + std::to_string(i + 1);
        if (!seen_ids.insert(rec.pair_id).second)
            throw std::runtime_error("duplicate pair_id '" + rec.pair_id + "' at data row " +
                                     std::to_string(i + 1));

        auto label = parse_label(get(c_label));
        if (!label) {
            result.rejects.push_back({i + 1, rec.pair_id, "invalid-label",
                                      "label '" + get(c_label) + "' is not one of the three classes"});
            continue;
        }
        rec.label = *label;
        rec.premise = Sentence::of(get(c_prem));
        rec.hypothesis = Sentence::of(get(c_hyp));

        rec.explanations.push_back(Sentence::of(get(c_expl1)));
        for (const auto& c : {c_expl2, c_expl3})
            if (c && !get(*c).empty()) rec.explanations.push_back(Sentence::of(get(*c)));

        bool rejected = false;
        auto read_highlights = [&](const std::optional<std::size_t>& c, const Sentence& s,
                                   std::set<std::size_t>& out) {
            if (!c || rejected) return;
            std::string err;
            auto h = detail::parse_highlights(s, get(*c), schema.highlight_indexing, err);
            if (!h) {
                result.rejects.push_back(
                    {i + 1, rec.pair_id,
                     err.find("out of bounds") != std::string::npos ? "out-of-bounds-highlight" : "bad-highlight",
                     err});
                rejected = true;
                return;
            }
            out = std::move(*h);
        };
        read_highlights(c_ph, rec.premise, rec.premise_highlights);
        read_highlights(c_hh, rec.hypothesis, rec.hypothesis_highlights);
        if (rejected) continue;

        result.records.push_back(std::move(rec));
    }
    return result;
}

inline ParseResult parse_dataset(const std::string& path, const Schema& schema) {
    return parse_table(read_delimited_file(path, schema.delimiter), schema);
}

// --- canonical serialization ------------------------------------------------------
// Tab-separated, fixed column order, highlight sets as comma-joined token
// indices. parse_canonical() round-trips accepted records exactly.

inline const std::vector<std::string>& canonical_columns() {
    static const std::vector<std::string> cols = {
        "pair_id",      "label",         "premise",        "hypothesis",
        "explanation_1", "explanation_2", "explanation_3", "premise_highlights",
        "hypothesis_highlights"};
    return cols;
}

inline std::string join_indices(const std::set<std::size_t>& s) {
    std::string out;
    for (std::size_t v : s) {
        if (!out.empty()) out.push_back(',');
        out += std::to_string(v);
    }
    return out;
}

inline std::string serialize_record(const ExampleRecord& r) {
    std::ostringstream os;
    os << r.pair_id << '\t' << label_name(r.label) << '\t' << r.premise.raw << '\t' << r.hypothesis.raw;
    for (std::size_t i = 0; i < 3; ++i)
        os << '\t' << (i < r.explanations.size() ? r.explanations[i].raw : "");
    os << '\t' << join_indices(r.premise_highlights) << '\t' << join_indices(r.hypothesis_highlights);
    return os.str();
}

inline std::string serialize_records(const std::vector<ExampleRecord>& records) {
    std::ostringstream os;
    const auto& cols = canonical_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "\t" : "") << cols[i];
    os << '\n';
    for (const auto& r : records) os << serialize_record(r) << '\n';
    return os.str();
}

inline Schema canonical_schema() {
    Schema s;
    s.delimiter = '\t';
    s.highlight_indexing = HighlightIndexing::tokens;
    for (const auto& c : canonical_columns()) s.columns[c] = c;
    return s;
}

inline ParseResult parse_canonical(const std::string& path) {
    return parse_dataset(path, canonical_schema());
}

// --- vocabulary ----------------------------------------------------------------------

struct Special {
    static constexpr int pad = 0;
    static constexpr int unk = 1;
    static constexpr int sos = 2;
    static constexpr int eos = 3;
    static constexpr int entailment = 4;
    static constexpr int neutral = 5;
    static constexpr int contradiction = 6;
    static constexpr int count = 7;
};

inline int label_token_id(Label l) { return Special::entailment + static_cast<int>(l); }

class Vocabulary {
public:
    Vocabulary() = default;

    // Frequencies are counted over premises, hypotheses and all explanations of
    // the given records; tokens below `threshold` fall to <unk>. Ids are
    // assigned frequency-descending, ties lexicographic.
    static Vocabulary build(const std::vector<const std::vector<ExampleRecord>*>& splits,
                            std::size_t threshold) {
        if (threshold < 1) throw std::invalid_argument("Vocabulary: threshold must be >= 1");
        std::map<std::string, std::size_t> freq;
        std::size_t total = 0;
        for (const auto* records : splits)
            for (const auto& r : *records) {
                auto count = [&](const std::vector<std::string>& toks) {
                    for (const auto& t : toks) ++freq[t], ++total;
                };
                count(r.premise.tokens);
                count(r.hypothesis.tokens);
                for (const auto& e : r.explanations) count(e.tokens);
            }
        if (total == 0) throw std::runtime_error("Vocabulary: empty corpus");

        Vocabulary v;
        v.threshold_ = threshold;
        v.freq_ = freq;
        std::vector<std::pair<std::string, std::size_t>> kept;
        for (const auto& [tok, n] : freq)
            if (n >= threshold && v.token_to_id_.count(tok) == 0) kept.emplace_back(tok, n);
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (auto& [tok, n] : kept) {
            int id = static_cast<int>(v.id_to_token_.size());
            v.token_to_id_.emplace(tok, id);
            v.id_to_token_.push_back(tok);
        }
        return v;
    }

    static Vocabulary build(const std::vector<ExampleRecord>& records, std::size_t threshold) {
        return build(std::vector<const std::vector<ExampleRecord>*>{&records}, threshold);
    }

    int id(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? Special::unk : it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
            throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " out of range");
        return id_to_token_[static_cast<std::size_t>(id)];
    }

    std::vector<int> encode(const std::vector<std::string>& tokens) const {
        std::vector<int> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(id(t));
        return ids;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> tokens;
        tokens.reserve(ids.size());
        for (int i : ids) tokens.push_back(token(i));
        return tokens;
    }

    std::size_t size() const { return id_to_token_.size(); }
    std::size_t non_special_size() const { return id_to_token_.size() - Special::count; }
    std::size_t threshold() const { return threshold_; }
    const std::map<std::string, std::size_t>& frequencies() const { return freq_; }

    std::string serialize() const {
        std::ostringstream os;
        os << "#esnli-vocab\tv1\tthreshold=" << threshold_ << '\n';
        for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
            auto f = freq_.find(id_to_token_[i]);
            os << i << '\t' << id_to_token_[i] << '\t' << (f == freq_.end() ? 0 : f->second) << '\n';
        }
        return os.str();
    }

    static Vocabulary deserialize(std::istream& in) {
        Vocabulary v;
        std::string line;
        if (!std::getline(in, line) || line.rfind("#esnli-vocab", 0) != 0)
            throw std::runtime_error("vocabulary file: bad header");
        auto tpos = line.rfind("threshold=");
        if (tpos != std::string::npos) v.threshold_ = std::stoul(line.substr(tpos + 10));
        v.id_to_token_.clear();
        v.token_to_id_.clear();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string id_s, tok, freq_s;
            std::getline(ls, id_s, '\t');
            std::getline(ls, tok, '\t');
            std::getline(ls, freq_s, '\t');
            int id = std::stoi(id_s);
            if (id != static_cast<int>(v.id_to_token_.size()))
                throw std::runtime_error("vocabulary file: non-contiguous ids");
            v.id_to_token_.push_back(tok);
            if (id >= Special::count) v.token_to_id_.emplace(tok, id);
            if (!freq_s.empty()) v.freq_[tok] = std::stoul(freq_s);
        }
        if (v.id_to_token_.size() < Special::count) throw std::runtime_error("vocabulary file: missing specials");
        return v;
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot read vocabulary '" + path + "'");
        return deserialize(f);
    }

private:
    Vocabulary(std::nullptr_t) {}

    std::size_t threshold_ = 1;
    std::map<std::string, std::size_t> freq_;
    std::unordered_map<std::string, int> token_to_id_ = {
        // label words double as the conditioning tokens, so they live in the
        // reserved range
        {"entailment", Special::entailment},
        {"neutral", Special::neutral},
        {"contradiction", Special::contradiction}};
    std::vector<std::string> id_to_token_ = {"<pad>", "<unk>", "<sos>", "<eos>",
                                             "entailment", "neutral", "contradiction"};
};

// --- batches ---------------------------------------------------------------------

struct IdMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<int> ids;  // row-major, PAD beyond each row's true length
    std::vector<std::size_t> lengths;

    int at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }

    // ids of column c, one per row (PAD where c >= length)
    std::vector<int> column(std::size_t c) const {
        std::vector<int> out(rows);
        for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
        return out;
    }
};

inline IdMatrix pad_sequences(const std::vector<std::vector<int>>& seqs) {
    IdMatrix m;
    m.rows = seqs.size();
    for (const auto& s : seqs) m.cols = std::max(m.cols, s.size());
    m.ids.assign(m.rows * m.cols, Special::pad);
    for (std::size_t r = 0; r < seqs.size(); ++r) {
        m.lengths.push_back(seqs[r].size());
        std::copy(seqs[r].begin(), seqs[r].end(), m.ids.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
    }
    return m;
}

struct Batch {
    IdMatrix premise;
    IdMatrix hypothesis;
    IdMatrix explanation;  // first explanation of each record, no SOS/EOS
    std::vector<Label> labels;
    std::vector<std::string> pair_ids;

    std::size_t size() const { return labels.size(); }
};

inline std::vector<Batch> make_batches(const std::vector<ExampleRecord>& records, std::size_t batch_size,
                                       const Vocabulary& vocab) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    std::vector<Batch> batches;
    for (std::size_t begin = 0; begin < records.size(); begin += batch_size) {
        std::size_t end = std::min(records.size(), begin + batch_size);
        Batch b;
        std::vector<std::vector<int>> prem, hyp, expl;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& r = records[i];
            prem.push_back(vocab.encode(r.premise.tokens));
            hyp.push_back(vocab.encode(r.hypothesis.tokens));
            expl.push_back(r.explanations.empty() ? std::vector<int>{}
                                                  : vocab.encode(r.explanations[0].tokens));
            b.labels.push_back(r.label);
            b.pair_ids.push_back(r.pair_id);
        }
        b.premise = pad_sequences(prem);
        b.hypothesis = pad_sequences(hyp);
        b.explanation = pad_sequences(expl);
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace esnli::corpus
