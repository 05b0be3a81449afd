#include "doctest.h"

#include <sstream>
#include <string>

#include "esnli/quality.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace esnli::quality;
using esnli::corpus::ExampleRecord;
using esnli::corpus::Label;

TEST_CASE("edit distance basics") {
    CHECK(edit_distance(std::string("kitten"), std::string("sitting")) == 3);
    CHECK(edit_distance(std::string("same text"), std::string("same text")) == 0);
    CHECK(edit_distance(std::string(""), std::string("abc")) == 3);
    CHECK(edit_distance(std::string("abc"), std::string("")) == 3);
}

TEST_CASE("edit distance equals the recursive oracle exhaustively (lengths <= 4)") {
    std::vector<std::string> all{""};
    for (int len = 1; len <= 4; ++len) {
        std::size_t start = 0;
        std::vector<std::string> next(all);
        for (const auto& s : all)
            if (s.size() == static_cast<std::size_t>(len - 1))
                for (char c : {'a', 'b', 'c'}) next.push_back(s + c);
        all = std::move(next);
        (void)start;
    }
    for (const auto& a : all)
        for (const auto& b : all) CHECK(edit_distance(a, b) == oracles::lev_recursive(a, b));
}

TEST_CASE("edit distance is symmetric and satisfies the triangle inequality") {
    esnli::Rng rng(17);
    auto random_string = [&] {
        std::string s;
        std::size_t len = rng.index(9);
        for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.index(4)));
        return s;
    };
    for (int trial = 0; trial < 200; ++trial) {
        std::string a = random_string(), b = random_string(), c = random_string();
        CHECK(edit_distance(a, b) == edit_distance(b, a));
        CHECK(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
    }
}

TEST_CASE("default template set reproduces the shipped list") {
    const TemplateSet& set = default_templates();
    std::size_t per_scope[4] = {0, 0, 0, 0};
    for (const auto& t : set.templates) ++per_scope[static_cast<int>(t.scope)];
    CHECK(per_scope[0] == 8);   // general
    CHECK(per_scope[1] == 18);  // entailment
    CHECK(per_scope[2] == 11);  // neutral
    CHECK(per_scope[3] == 19);  // contradiction
    for (const auto& t : set.templates)
        CHECK((t.pattern.find("<premise>") != std::string::npos ||
               t.pattern.find("<hypothesis>") != std::string::npos));
}

TEST_CASE("template file round trip") {
    std::string text = serialize_templates(default_templates());
    std::istringstream in(text);
    TemplateSet parsed = parse_templates(in);
    REQUIRE(parsed.templates.size() == default_templates().templates.size());
    // section ordering groups by scope; compare as multisets of (pattern, scope)
    auto key = [](const Template& t) { return std::to_string(static_cast<int>(t.scope)) + "|" + t.pattern; };
    std::vector<std::string> a, b;
    for (const auto& t : parsed.templates) a.push_back(key(t));
    for (const auto& t : default_templates().templates) b.push_back(key(t));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
}

TEST_CASE("exact template instances match at distance zero") {
    std::string premise = "A man holds a stick.";
    std::string hypothesis = "An adult is empty-handed.";
    std::string expl = "Just because A man holds a stick doesn't mean An adult is empty-handed";
    auto m = match_template(expl, premise, hypothesis, default_templates(), 10, Label::neutral);
    REQUIRE(m.has_value());
    CHECK(m->distance == 0);
    CHECK(default_templates().templates[m->template_index].pattern ==
          "Just because <premise> doesn't mean <hypothesis>");
}

TEST_CASE("premise copied verbatim matches the bare premise template") {
    std::string premise = "Two dogs play in the snow.";
    auto m = match_template(premise, premise, "Some hypothesis.", default_templates());
    REQUIRE(m.has_value());
    CHECK(m->distance == 0);
    CHECK(default_templates().templates[m->template_index].pattern == "<premise>");
}

TEST_CASE("informative explanations stay unmatched") {
    std::string premise = "A man in an orange vest leans over a pickup truck.";
    std::string hypothesis = "A man is touching a truck.";
    std::string expl = "Leaning over the vehicle requires contact with its surface.";
    // ground-truth distances via the oracle
    const TemplateSet& set = default_templates();
    for (std::size_t i = 0; i < set.templates.size(); ++i) {
        std::string inst = instantiate_template(set.templates[i], premise, hypothesis);
        CHECK(oracles::lev_recursive(normalize_for_match(expl), inst) >= kTemplateDistanceThreshold);
    }
    CHECK_FALSE(match_template(expl, premise, hypothesis, set).has_value());
}

TEST_CASE("filter flags seeded template instances and nothing else") {
    auto informative = fixtures::toy_corpus(89);
    // verify the fixture really is far from every applicable template
    for (const auto& r : informative) {
        const TemplateSet& set = default_templates();
        for (std::size_t i = 0; i < set.templates.size(); ++i) {
            if (!set.applies(i, r.label)) continue;
            std::string inst = instantiate_template(set.templates[i], r.premise.raw, r.hypothesis.raw);
            CHECK(edit_distance(normalize_for_match(r.explanations[0].raw), inst) >=
                  kTemplateDistanceThreshold);
        }
    }

    // seed 11 records (11%) with exact template instances
    std::vector<ExampleRecord> corpus = informative;
    const char* patterns[3] = {"<premise> implies <hypothesis>",
                               "Just because <premise> doesn't mean <hypothesis>",
                               "It can either be <premise> or <hypothesis>"};
    std::set<std::string> seeded_ids;
    for (int i = 0; i < 11; ++i) {
        ExampleRecord r = informative[static_cast<std::size_t>(i * 7) % informative.size()];
        r.pair_id = "tmpl" + std::to_string(i);
        Template t{patterns[static_cast<int>(r.label)],
                   static_cast<TemplateScope>(static_cast<int>(r.label) + 1)};
        std::string inst = t.pattern;
        replace_all(inst, "<premise>", r.premise.raw);
        replace_all(inst, "<hypothesis>", r.hypothesis.raw);
        r.explanations[0] = esnli::corpus::Sentence::of(inst);
        corpus.push_back(r);
        seeded_ids.insert(r.pair_id);
    }

    FilterOutcome out = filter_uninformative(corpus);
    CHECK(out.flagged.size() == 11);
    CHECK(out.kept.size() == 89);
    for (const auto& r : out.flagged) CHECK(seeded_ids.count(r.pair_id) == 1);

    // idempotence: filtering the kept list flags nothing
    FilterOutcome again = filter_uninformative(out.kept);
    CHECK(again.flagged.empty());
    CHECK(again.kept.size() == out.kept.size());
}

TEST_CASE("filter on empty and all-informative corpora") {
    FilterOutcome empty = filter_uninformative({});
    CHECK(empty.kept.empty());
    CHECK(empty.flagged.empty());

    auto informative = fixtures::toy_corpus(10);
    FilterOutcome all = filter_uninformative(informative);
    CHECK(all.flagged.empty());
    CHECK(all.kept.size() == informative.size());
}

namespace {

std::vector<Rule> rules_of(const std::vector<Violation>& vs) {
    std::vector<Rule> out;
    for (const auto& v : vs) out.push_back(v.rule);
    return out;
}

}  // namespace

TEST_CASE("validator rule fixtures") {
    using fixtures::make_record;

    SUBCASE("R1 only: short explanation") {
        auto r = make_record("r1", Label::entailment, "a short story", "a story", {"too short"}, {1}, {});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R1_min_tokens});
    }
    SUBCASE("R2 only: verbatim copy") {
        auto r = make_record("r2", Label::entailment, "the sun is bright", "light exists",
                             {"the sun is bright"}, {1}, {});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R2_not_a_copy});
    }
    SUBCASE("R3 only: entailment without premise highlight") {
        auto r = make_record("r3", Label::entailment, "a man walks home", "a person walks",
                             {"a man is a person"}, {}, {1});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R3_entailment_premise});
    }
    SUBCASE("R4 only: contradiction highlighted on one side") {
        auto r = make_record("r4", Label::contradiction, "the cat sleeps", "the cat runs",
                             {"sleeps is not running at all"}, {2}, {});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R4_contradiction_both});
    }
    SUBCASE("R5 only: neutral with premise highlight") {
        auto r = make_record("r5", Label::neutral, "a red ball", "a toy for kids",
                             {"red is a color here"}, {1}, {});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R5_neutral_hypothesis_only});
    }
    SUBCASE("R6 only: highlights unused in the explanation") {
        auto r = make_record("r6", Label::entailment, "cats sleep often", "felines rest",
                             {"felines like to nap"}, {0, 1}, {});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R6_highlight_coverage});
    }
    SUBCASE("R7 only: nothing beyond highlighted words") {
        auto r = make_record("r7", Label::entailment, "dogs run", "dogs move",
                             {"dogs run dogs run dogs"}, {0, 1}, {});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R7_uses_other_words});
    }
    SUBCASE("two-token copy of hypothesis violates R1 and R2") {
        auto r = make_record("r12", Label::entailment, "here we go", "is here", {"is here"}, {0}, {});
        CHECK(rules_of(validate_record(r)) == std::vector<Rule>{Rule::R1_min_tokens, Rule::R2_not_a_copy});
    }
    SUBCASE("clean records per label pass") {
        auto e = make_record("ce", Label::entailment, "a man walks home", "a person walks",
                             {"a man walks so a person walks"}, {1, 2}, {2});
        auto n = make_record("cn", Label::neutral, "a man walks", "the man is tired",
                             {"walking does not imply being tired"}, {}, {3});
        auto c = make_record("cc", Label::contradiction, "the cat sleeps now", "the cat runs now",
                             {"sleeps means it cannot be running"}, {2}, {2});
        CHECK(validate_record(e).empty());
        CHECK(validate_record(n).empty());
        CHECK(validate_record(c).empty());
    }
}

TEST_CASE("partial score is an exact rational") {
    PartialScore s = partial_score(2, 3);
    CHECK(s.value() == Rational(2, 3));
    CHECK(partial_score(0, 5).value() == Rational(0, 1));
    CHECK(partial_score(4, 4).value() == Rational(1, 1));
    CHECK_THROWS_AS(partial_score(4, 3), std::invalid_argument);
    CHECK_THROWS_AS(partial_score(0, 0), std::invalid_argument);
}

TEST_CASE("partial score is monotone in k and antitone in n") {
    for (std::size_t n = 1; n <= 8; ++n)
        for (std::size_t k = 0; k + 1 <= n; ++k)
            CHECK(partial_score(k, n).value() < partial_score(k + 1, n).value());
    for (std::size_t n = 2; n <= 8; ++n)
        for (std::size_t k = 1; k < n; ++k)
            CHECK(partial_score(k, n).value() < partial_score(k, n - 1).value());
}

TEST_CASE("correctness report reproduces the window bookkeeping") {
    // 100 examples, 80 correct labels whose scores average exactly 0.3468
    std::vector<ScoredPrediction> scored;
    for (int i = 0; i < 100; ++i) {
        bool correct = i < 80;
        scored.push_back({correct ? Label::entailment : Label::neutral, Label::entailment,
                          partial_score(correct ? 3468 : 0, 10000)});
    }
    CorrectnessReport rep = correctness_report(scored, 100);
    CHECK(rep.correct_labels == 80);
    CHECK(rep.label_accuracy == Rational(4, 5));
    REQUIRE(rep.explanation_score.has_value());
    CHECK(*rep.explanation_score == Rational(867, 2500));
    CHECK(rep.explanation_score->value() == doctest::Approx(0.3468).epsilon(1e-12));
}

TEST_CASE("correctness report flags an empty correct subset as undefined") {
    std::vector<ScoredPrediction> scored(10, {Label::neutral, Label::contradiction, partial_score(1, 1)});
    CorrectnessReport rep = correctness_report(scored, 10);
    CHECK(rep.label_accuracy == Rational(0, 1));
    CHECK_FALSE(rep.explanation_score.has_value());
}

TEST_CASE("correctness report with perfect predictions") {
    std::vector<ScoredPrediction> scored(8, {Label::entailment, Label::entailment, partial_score(2, 2)});
    CorrectnessReport rep = correctness_report(scored, 8);
    CHECK(rep.label_accuracy == Rational(1, 1));
    REQUIRE(rep.explanation_score.has_value());
    CHECK(*rep.explanation_score == Rational(1, 1));
}

TEST_CASE("correctness report validates the window") {
    std::vector<ScoredPrediction> scored(3, {Label::entailment, Label::entailment, partial_score(1, 2)});
    CHECK_THROWS_AS(correctness_report(scored, 4), std::invalid_argument);
    CHECK_THROWS_AS(correctness_report(scored, 0), std::invalid_argument);
}
