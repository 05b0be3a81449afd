#pragma once

// Dataset quality machinery: Levenshtein matching against uninformative
// explanation templates, per-record constraint validation (rules R1–R7), and
// k/n partial correctness scoring kept in exact rational arithmetic.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "esnli/corpus.hpp"

namespace esnli::quality {

using corpus::ExampleRecord;
using corpus::Label;

// --- edit distance -----------------------------------------------------------

// Unit-cost Levenshtein distance (insert / delete / substitute).
template <class Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
    const std::size_t m = a.size(), n = b.size();
    if (m == 0) return n;
    if (n == 0) return m;
    std::vector<std::size_t> prev(n + 1), cur(n + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= m; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= n; ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

// Lower bound |len(a)−len(b)| lets callers skip hopeless candidates.
inline std::size_t edit_distance_lower_bound(std::size_t la, std::size_t lb) {
    return la > lb ? la - lb : lb - la;
}

// --- templates -----------------------------------------------------------------

enum class TemplateScope { any, entailment, neutral, contradiction };

struct Template {
    std::string pattern;  // uses <premise> / <hypothesis> placeholders
    TemplateScope scope = TemplateScope::any;
};

struct TemplateSet {
    std::vector<Template> templates;

    bool applies(std::size_t i, Label label) const {
        TemplateScope s = templates[i].scope;
        return s == TemplateScope::any || static_cast<int>(s) - 1 == static_cast<int>(label);
    }
};

// The shipped defaults: uninformative-explanation patterns grouped by the
// label they were observed on.
inline const TemplateSet& default_templates() {
    static const TemplateSet set = [] {
        TemplateSet s;
        auto add = [&](TemplateScope scope, std::initializer_list<const char*> pats) {
            for (const char* p : pats) s.templates.push_back({p, scope});
        };
        add(TemplateScope::any,
            {"<premise>", "<hypothesis>", "<hypothesis> <premise>", "<premise> <hypothesis>",
             "Sentence 1 states <premise>. Sentence 2 is stating <hypothesis>",
             "Sentence 2 states <hypothesis>. Sentence 1 is stating <premise>",
             "There is <hypothesis>", "There is <premise>"});
        add(TemplateScope::entailment,
            {"<premise> implies <hypothesis>", "If <premise> then <hypothesis>",
             "<premise> would imply <hypothesis>", "<hypothesis> is a rephrasing of <premise>",
             "<premise> is a rephrasing of <hypothesis>", "In both sentences <hypothesis>",
             "<premise> would be <hypothesis>", "<premise> can also be said as <hypothesis>",
             "<hypothesis> can also be said as <premise>",
             "<hypothesis> is a less specific rephrasing of <premise>", "This clarifies that <hypothesis>",
             "If <premise> it means <hypothesis>", "<hypothesis> in both sentences", "<hypothesis> in both",
             "<hypothesis> is same as <premise>", "<premise> is same as <hypothesis>",
             "<premise> is a synonym of <hypothesis>", "<hypothesis> is a synonym of <premise>"});
        add(TemplateScope::neutral,
            {"Just because <premise> doesn't mean <hypothesis>", "Cannot infer the <hypothesis>",
             "One cannot assume <hypothesis>", "One cannot infer that <hypothesis>",
             "Cannot assume <hypothesis>", "<premise> does not mean <hypothesis>",
             "We don't know that <hypothesis>", "The fact that <premise> doesn't mean <hypothesis>",
             "The fact that <premise> does not imply <hypothesis>",
             "The fact that <premise> does not always mean <hypothesis>",
             "The fact that <premise> doesn't always imply<hypothesis>"});
        add(TemplateScope::contradiction,
            {"In sentence 1 <premise> while in sentence 2 <hypothesis>",
             "It can either be <premise> or <hypothesis>", "It cannot be <hypothesis> if <premise>",
             "Either <premise> or <hypothesis>", "Either <hypothesis> or <premise>",
             "<premise> and other <hypothesis>", "<hypothesis> and other <premise>",
             "<hypothesis> after <premise>", "<premise> is not the same as <hypothesis>",
             "<hypothesis> is not the same as <premise>", "<premise> is contradictory to <hypothesis>",
             "<hypothesis> is contradictory to <premise>", "<premise> contradicts <hypothesis>",
             "<hypothesis> contradicts <premise>", "<premise> cannot also be <hypothesis>",
             "<hypothesis> cannot also be <premise>", "either <premise> or <hypothesis>",
             "either <premise> or <hypothesis> not both at the same time",
             "<premise> or <hypothesis> not both at the same time"});
        return s;
    }();
    return set;
}

// Template files: one pattern per line under [general] / [entailment] /
// [neutral] / [contradiction] headers. Blank lines and #-comments ignored.
inline TemplateSet parse_templates(std::istream& in) {
    TemplateSet set;
    TemplateScope scope = TemplateScope::any;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        std::size_t start = line.find_first_not_of(' ');
        if (start == std::string::npos || line[start] == '#') continue;
        std::string body = line.substr(start);
        if (body.front() == '[') {
            if (body == "[general]") scope = TemplateScope::any;
            else if (body == "[entailment]") scope = TemplateScope::entailment;
            else if (body == "[neutral]") scope = TemplateScope::neutral;
            else if (body == "[contradiction]") scope = TemplateScope::contradiction;
            else throw std::runtime_error("template file: unknown section " + body);
            continue;
        }
        if (body.find("<premise>") == std::string::npos && body.find("<hypothesis>") == std::string::npos)
            throw std::runtime_error("template file: pattern without placeholder: " + body);
        set.templates.push_back({body, scope});
    }
    return set;
}

inline TemplateSet load_templates(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read template file '" + path + "'");
    return parse_templates(f);
}

inline std::string serialize_templates(const TemplateSet& set) {
    std::ostringstream os;
    const char* headers[] = {"[general]", "[entailment]", "[neutral]", "[contradiction]"};
    for (int s = 0; s < 4; ++s) {
        os << headers[s] << '\n';
        for (const auto& t : set.templates)
            if (static_cast<int>(t.scope) == s) os << t.pattern << '\n';
        os << '\n';
    }
    return os.str();
}

// --- template matching ------------------------------------------------------------

// Normalization before distance computation: lowercase, collapse whitespace
// runs, strip terminal sentence punctuation.
inline std::string normalize_for_match(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    while (!out.empty() && (out.back() == '.' || out.back() == '!' || out.back() == '?')) {
        out.pop_back();
        while (!out.empty() && out.back() == ' ') out.pop_back();
    }
    return out;
}

inline void replace_all(std::string& s, std::string_view what, std::string_view with) {
    std::size_t pos = 0;
    while ((pos = s.find(what, pos)) != std::string::npos) {
        s.replace(pos, what.size(), with);
        pos += with.size();
    }
}

inline std::string instantiate_template(const Template& t, std::string_view premise,
                                        std::string_view hypothesis) {
    std::string s = t.pattern;
    replace_all(s, "<premise>", normalize_for_match(premise));
    replace_all(s, "<hypothesis>", normalize_for_match(hypothesis));
    return normalize_for_match(s);
}

struct TemplateMatch {
    std::size_t template_index = 0;
    std::size_t distance = 0;
};

enum class DistanceUnit { characters, tokens };

constexpr std::size_t kTemplateDistanceThreshold = 10;

// Minimum-distance template whose instantiated, normalized form is within
// `threshold` (strict) of the explanation; nullopt when none is.
inline std::optional<TemplateMatch> match_template(std::string_view explanation, std::string_view premise,
                                                   std::string_view hypothesis, const TemplateSet& templates,
                                                   std::size_t threshold = kTemplateDistanceThreshold,
                                                   std::optional<Label> label = std::nullopt,
                                                   DistanceUnit unit = DistanceUnit::characters) {
    const std::string expl = normalize_for_match(explanation);
    const std::vector<std::string> expl_tokens =
        unit == DistanceUnit::tokens ? corpus::tokenize(expl) : std::vector<std::string>{};
    std::optional<TemplateMatch> best;
    for (std::size_t i = 0; i < templates.templates.size(); ++i) {
        if (label && !templates.applies(i, *label)) continue;
        std::string inst = instantiate_template(templates.templates[i], premise, hypothesis);
        std::size_t limit = best ? std::min(best->distance, threshold) : threshold;
        std::size_t d;
        if (unit == DistanceUnit::characters) {
            if (edit_distance_lower_bound(expl.size(), inst.size()) >= limit) continue;
            d = edit_distance(expl, inst);
        } else {
            auto inst_tokens = corpus::tokenize(inst);
            if (edit_distance_lower_bound(expl_tokens.size(), inst_tokens.size()) >= limit) continue;
            d = edit_distance(expl_tokens, inst_tokens);
        }
        if (d < threshold && (!best || d < best->distance)) best = TemplateMatch{i, d};
    }
    return best;
}

// --- filtering ----------------------------------------------------------------------

struct FilterOutcome {
    std::vector<ExampleRecord> kept;
    std::vector<ExampleRecord> flagged;
    std::vector<TemplateMatch> matches;          // parallel to flagged
    std::size_t flagged_per_label[3] = {0, 0, 0};
    std::size_t kept_per_label[3] = {0, 0, 0};
};

// Flags records whose first explanation matches an uninformative template.
// Label-scoped templates are only tried against records of that label.
inline FilterOutcome filter_uninformative(const std::vector<ExampleRecord>& records,
                                          const TemplateSet& templates = default_templates(),
                                          std::size_t threshold = kTemplateDistanceThreshold,
                                          DistanceUnit unit = DistanceUnit::characters) {
    FilterOutcome out;
    for (const auto& r : records) {
        std::optional<TemplateMatch> m;
        if (!r.explanations.empty())
            m = match_template(r.explanations[0].raw, r.premise.raw, r.hypothesis.raw, templates, threshold,
                               r.label, unit);
        if (m) {
            out.flagged.push_back(r);
            out.matches.push_back(*m);
            ++out.flagged_per_label[static_cast<int>(r.label)];
        } else {
            out.kept.push_back(r);
            ++out.kept_per_label[static_cast<int>(r.label)];
        }
    }
    return out;
}

// --- record validation ----------------------------------------------------------------

enum class Rule {
    R1_min_tokens = 1,        // explanation has >= 3 tokens
    R2_not_a_copy,            // explanation is not a verbatim copy of premise/hypothesis
    R3_entailment_premise,    // entailment: >= 1 premise token highlighted
    R4_contradiction_both,    // contradiction: >= 1 highlighted token in both sentences
    R5_neutral_hypothesis_only,  // neutral: highlights only in the hypothesis
    R6_highlight_coverage,    // >= fraction of highlighted tokens appear in the explanation
    R7_uses_other_words,      // explanation uses >= 1 non-highlighted token
};

inline const char* rule_id(Rule r) {
    switch (r) {
        case Rule::R1_min_tokens: return "R1";
        case Rule::R2_not_a_copy: return "R2";
        case Rule::R3_entailment_premise: return "R3";
        case Rule::R4_contradiction_both: return "R4";
        case Rule::R5_neutral_hypothesis_only: return "R5";
        case Rule::R6_highlight_coverage: return "R6";
        default: return "R7";
    }
}

struct Violation {
    std::string record_id;
    Rule rule;
    std::string message;
};

struct Fraction {
    std::size_t num = 1, den = 2;
};

// Applies the seven submission rules to a record's first explanation.
inline std::vector<Violation> validate_record(const ExampleRecord& r, Fraction required_highlight_fraction = {1, 2}) {
    std::vector<Violation> out;
    auto violate = [&](Rule rule, std::string msg) { out.push_back({r.pair_id, rule, std::move(msg)}); };

    const corpus::Sentence empty_sentence;
    const corpus::Sentence& expl = r.explanations.empty() ? empty_sentence : r.explanations[0];

    if (expl.tokens.size() < 3)
        violate(Rule::R1_min_tokens,
                "explanation has " + std::to_string(expl.tokens.size()) + " tokens, need at least 3");

    const std::string ne = normalize_for_match(expl.raw);
    if (!ne.empty() &&
        (ne == normalize_for_match(r.premise.raw) || ne == normalize_for_match(r.hypothesis.raw)))
        violate(Rule::R2_not_a_copy, "explanation is a copy of the premise or hypothesis");

    switch (r.label) {
        case Label::entailment:
            if (r.premise_highlights.empty())
                violate(Rule::R3_entailment_premise, "entailment requires a highlighted premise token");
            break;
        case Label::contradiction:
            if (r.premise_highlights.empty() || r.hypothesis_highlights.empty())
                violate(Rule::R4_contradiction_both,
                        "contradiction requires highlights in both premise and hypothesis");
            break;
        case Label::neutral:
            if (!r.premise_highlights.empty())
                violate(Rule::R5_neutral_hypothesis_only, "neutral allows highlights only in the hypothesis");
            break;
    }

    std::vector<std::string> highlighted;
    for (std::size_t i : r.premise_highlights)
        if (i < r.premise.tokens.size()) highlighted.push_back(r.premise.tokens[i]);
    for (std::size_t i : r.hypothesis_highlights)
        if (i < r.hypothesis.tokens.size()) highlighted.push_back(r.hypothesis.tokens[i]);

    std::unordered_set<std::string> expl_tokens(expl.tokens.begin(), expl.tokens.end());
    if (!highlighted.empty()) {
        std::size_t used = 0;
        for (const auto& t : highlighted)
            if (expl_tokens.count(t)) ++used;
        // used/|highlighted| >= num/den, in integers
        if (used * required_highlight_fraction.den < highlighted.size() * required_highlight_fraction.num)
            violate(Rule::R6_highlight_coverage,
                    "only " + std::to_string(used) + " of " + std::to_string(highlighted.size()) +
                        " highlighted tokens appear in the explanation");
    }

    std::unordered_set<std::string> highlight_set(highlighted.begin(), highlighted.end());
    bool uses_other = false;
    for (const auto& t : expl.tokens)
        if (!highlight_set.count(t)) {
            uses_other = true;
            break;
        }
    if (!uses_other)
        violate(Rule::R7_uses_other_words, "explanation uses no words beyond the highlighted ones");

    return out;
}

// --- partial scoring --------------------------------------------------------------------

// Exact non-negative rational, kept reduced.
struct Rational {
    long long num = 0;
    long long den = 1;

    Rational() = default;
    Rational(long long n, long long d) : num(n), den(d) {
        if (den == 0) throw std::invalid_argument("Rational: zero denominator");
        if (den < 0) { num = -num; den = -den; }
        reduce();
    }

    void reduce() {
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    Rational operator+(const Rational& o) const { return Rational(num * o.den + o.num * den, den * o.den); }
    Rational operator/(long long k) const { return Rational(num, den * k); }
    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
    bool operator<(const Rational& o) const { return num * o.den < o.num * den; }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

struct PartialScore {
    std::size_t mentioned = 0;  // k
    std::size_t required = 1;   // n

    Rational value() const {
        return Rational(static_cast<long long>(mentioned), static_cast<long long>(required));
    }
};

inline PartialScore partial_score(std::size_t mentioned, std::size_t required) {
    if (required == 0) throw std::invalid_argument("partial_score: required count must be >= 1");
    if (mentioned > required)
        throw std::invalid_argument("partial_score: mentioned (" + std::to_string(mentioned) +
                                    ") exceeds required (" + std::to_string(required) + ")");
    return {mentioned, required};
}

// --- correctness bookkeeping ----------------------------------------------------------------

struct ScoredPrediction {
    Label predicted;
    Label gold;
    PartialScore score;
};

struct CorrectnessReport {
    std::size_t window = 0;
    std::size_t correct_labels = 0;
    Rational label_accuracy;                    // correct/window
    std::optional<Rational> explanation_score;  // mean k/n over the correct-label subset
};

// Label accuracy over the first `window` items plus the mean partial score
// restricted to items in the window whose predicted label is correct. The
// mean is undefined (not zero) when that subset is empty.
inline CorrectnessReport correctness_report(const std::vector<ScoredPrediction>& scored, std::size_t window) {
    if (window > scored.size())
        throw std::invalid_argument("correctness_report: window exceeds available examples");
    if (window == 0) throw std::invalid_argument("correctness_report: empty window");
    CorrectnessReport rep;
    rep.window = window;
    Rational sum;
    for (std::size_t i = 0; i < window; ++i) {
        if (scored[i].predicted == scored[i].gold) {
            ++rep.correct_labels;
            sum = sum + scored[i].score.value();
        }
    }
    rep.label_accuracy = Rational(static_cast<long long>(rep.correct_labels), static_cast<long long>(window));
    if (rep.correct_labels > 0)
        rep.explanation_score = sum / static_cast<long long>(rep.correct_labels);
    return rep;
}

}  // namespace esnli::quality
