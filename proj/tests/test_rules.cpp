#include <catch2/catch_amalgamated.hpp>

#include "rulex/rules.hpp"

using namespace rulex;

namespace {

Dataset text_dataset(const std::vector<std::string>& texts) {
    Dataset ds(texts.size(), 1);
    ds.set_texts(texts);
    return ds;
}

Rule regex_rule(int id, int label, const std::string& pattern) {
    Rule r;
    r.id = id;
    r.label = label;
    r.kind = MatcherKind::Regex;
    r.pattern = pattern;
    return r;
}

}  // namespace

TEST_CASE("regex rule fires only when the pattern matches") {
    Dataset ds = text_dataset({"Great News! here is your guaranteed \xc2\xa31000 CASH prize",
                               "a guaranteed gift awaits"});
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 1, ".* guaranteed gift .*"));
    const CoverageMatrix cov = apply_rules(rules, ds);
    CHECK_FALSE(cov.covers(0, 0));  // "guaranteed" and "gift" not adjacent
    CHECK(cov.covers(1, 0));
}

TEST_CASE("empty rule set gives empty coverage") {
    Dataset ds = text_dataset({"anything"});
    const CoverageMatrix cov = apply_rules(RuleSet{}, ds);
    CHECK(cov.pair_count() == 0);
}

TEST_CASE("tabular clause conjunction") {
    Dataset ds(1, 1);
    ds.add_numeric_column("age", {25.0});
    ds.add_numeric_column("education-num", {10.0});
    Rule r;
    r.id = 0;
    r.label = 1;
    r.kind = MatcherKind::Tabular;
    r.clauses = {{"age", Comparator::Le, 30.0, "", false},
                 {"education-num", Comparator::Le, 12.0, "", false}};
    RuleSet rules;
    rules.rules.push_back(r);
    CHECK(apply_rules(rules, ds).covers(0, 0));

    r.clauses[0].threshold = 20.0;  // age 25 > 20 fails the <=
    RuleSet strict;
    strict.rules.push_back(r);
    CHECK_FALSE(apply_rules(strict, ds).covers(0, 0));
}

TEST_CASE("clause on an unknown column is rejected") {
    Dataset ds(1, 1);
    ds.add_numeric_column("age", {25.0});
    Rule r;
    r.id = 0;
    r.kind = MatcherKind::Tabular;
    r.clauses = {{"height", Comparator::Gt, 1.0, "", false}};
    RuleSet rules;
    rules.rules.push_back(r);
    REQUIRE_THROWS_WITH(apply_rules(rules, ds), Catch::Matchers::ContainsSubstring("height"));
}

TEST_CASE("bad regex is rejected at matcher build with rule id and pattern") {
    RuleSet rules;
    rules.rules.push_back(regex_rule(3, 0, "(unclosed"));
    REQUIRE_THROWS_WITH(RuleMatcher(rules), Catch::Matchers::ContainsSubstring("rule 3") &&
                                                Catch::Matchers::ContainsSubstring("(unclosed"));
}

TEST_CASE("word list matches on tokenized lowercased text") {
    Dataset ds = text_dataset({"CALL now!!", "no trigger words here"});
    Rule r;
    r.id = 0;
    r.label = 1;
    r.kind = MatcherKind::WordList;
    r.words = {"call", "ringtone"};
    RuleSet rules;
    rules.rules.push_back(r);
    const CoverageMatrix cov = apply_rules(rules, ds);
    CHECK(cov.covers(0, 0));
    CHECK_FALSE(cov.covers(1, 0));
}

TEST_CASE("exemplar validation") {
    Dataset ds = text_dataset({"alpha"});
    ds.set_gold_label(0, 1);
    ds.set_exemplar_rule(0, 2);
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 0, "zzz"));
    rules.rules.push_back(regex_rule(1, 0, "zzz"));
    rules.rules.push_back(regex_rule(2, 1, "alpha"));

    SECTION("covered with matching label: clean report") {
        const auto issues = validate_exemplars(ds, rules, apply_rules(rules, ds));
        CHECK(issues.empty());
    }
    SECTION("rule does not cover its exemplar") {
        rules.rules[2].pattern = "nomatch";
        const auto issues = validate_exemplars(ds, rules, apply_rules(rules, ds));
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].describe().find("uncovered exemplar") != std::string::npos);
    }
    SECTION("label mismatch") {
        rules.rules[2].label = 0;
        const auto issues = validate_exemplars(ds, rules, apply_rules(rules, ds));
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].describe().find("label mismatch") != std::string::npos);
    }
}

TEST_CASE("coverage stats on the three-instance fixture") {
    // instances 0,1,2 all unlabeled-split; rules r0 (label 0), r1 (label 1);
    // firings {(0,0),(0,1),(1,0)}; gold labels all 0
    Dataset ds(3, 1);
    for (int i = 0; i < 3; ++i) {
        ds.set_split(i, Split::U);
        ds.set_gold_label(i, 0);
    }
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 0, ""));
    rules.rules.push_back(regex_rule(1, 1, ""));
    CoverageMatrix cov(3, 2);
    cov.add(0, 0);
    cov.add(0, 1);
    cov.add(1, 0);

    const CoverageStats s = coverage_stats(cov, ds, rules);
    CHECK(s.percent_cover == Catch::Approx(100.0 * 2.0 / 3.0).margin(1e-12));
    CHECK(s.percent_conflict == Catch::Approx(50.0).margin(1e-12));
    CHECK(s.avg_cover_size == Catch::Approx(1.5).margin(1e-12));
    CHECK(s.rules_per_covered_instance == Catch::Approx(1.5).margin(1e-12));
    // firings: (0,0) correct, (0,1) wrong, (1,0) correct
    CHECK(s.micro_precision == Catch::Approx(100.0 * 2.0 / 3.0).margin(1e-12));
}

TEST_CASE("single always-correct rule: full cover, no conflict, perfect precision") {
    Dataset ds = text_dataset({"a", "a b"});
    for (int i = 0; i < 2; ++i) {
        ds.set_split(i, Split::U);
        ds.set_gold_label(i, 1);
    }
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 1, "a"));
    const CoverageStats s = coverage_stats(apply_rules(rules, ds), ds, rules);
    CHECK(s.percent_cover == 100.0);
    CHECK(s.percent_conflict == 0.0);
    CHECK(s.micro_precision == 100.0);
}

TEST_CASE("coverage stats reject an empty unlabeled split") {
    Dataset ds(2, 1);
    ds.set_split(0, Split::L);
    ds.set_split(1, Split::Test);
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 0, ""));
    REQUIRE_THROWS_AS(coverage_stats(CoverageMatrix(2, 1), ds, rules), std::invalid_argument);
}

TEST_CASE("majority vote") {
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 0, ""));
    rules.rules.push_back(regex_rule(1, 0, ""));
    rules.rules.push_back(regex_rule(2, 1, ""));
    CoverageMatrix cov(3, 3);
    cov.add(0, 0);
    cov.add(0, 1);
    cov.add(0, 2);  // labels [0,0,1] -> 0
    cov.add(1, 1);
    cov.add(1, 2);  // labels [0,1] tie

    CHECK(majority_vote(0, cov, rules) == 0);
    CHECK(majority_vote(1, cov, rules) == 0);                      // tie -> lowest class id
    CHECK(majority_vote(1, cov, rules, std::optional<int>(1)) == 1);  // tie -> default class
    CHECK(majority_vote(1, cov, rules, std::optional<int>(5)) == 0);  // default not among winners
    CHECK(majority_vote(2, cov, rules) == kAbstain);
}

TEST_CASE("transpose consistency of the coverage matrix") {
    CoverageMatrix cov(4, 3);
    cov.add(0, 0);
    cov.add(0, 2);
    cov.add(3, 1);
    cov.add(3, 1);  // duplicate insert ignored
    std::size_t by_rule = 0, by_instance = 0;
    for (std::size_t j = 0; j < cov.n_rules(); ++j) by_rule += cov.cover_set(static_cast<int>(j)).size();
    for (std::size_t i = 0; i < cov.n_instances(); ++i) by_instance += cov.rules_on(static_cast<int>(i)).size();
    CHECK(by_rule == cov.pair_count());
    CHECK(by_instance == cov.pair_count());
    CHECK(cov.pair_count() == 3);
}

TEST_CASE("apply_rules is idempotent") {
    Dataset ds = text_dataset({"call me", "see you"});
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 1, "call"));
    CHECK(apply_rules(rules, ds) == apply_rules(rules, ds));
}

TEST_CASE("rule filtering") {
    Dataset ds(4, 1);
    for (int i = 0; i < 4; ++i) {
        ds.set_split(i, Split::U);
        ds.set_gold_label(i, 0);
    }
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 0, ""));  // will be precise
    rules.rules.push_back(regex_rule(1, 1, ""));  // always wrong here
    CoverageMatrix cov(4, 2);
    // rule 0: 19/20-style high precision -> here 1.0 on 2 firings
    cov.add(0, 0);
    cov.add(1, 0);
    // rule 1: 0.5 precision (one gold 1 instance)
    ds.set_gold_label(2, 1);
    cov.add(2, 1);
    cov.add(3, 1);

    SECTION("precision-above keeps the low-precision rule") {
        FilterCriterion crit{FilterCriterion::PrecisionAbove, 0.9, {}};
        const FilteredRules f = filter_rules(rules, cov, ds, crit);
        REQUIRE(f.kept.size() == 1);
        CHECK(f.kept.at(0).label == 1);
        CHECK(f.kept.at(0).id == 0);  // renumbered densely
        CHECK(f.removed_ids == std::vector<int>{0});
        CHECK(f.kept_original_ids == std::vector<int>{1});
    }
    SECTION("id list removal") {
        FilterCriterion crit{FilterCriterion::IdList, 0.0, {0, 1}};
        CHECK(filter_rules(rules, cov, ds, crit).kept.size() == 0);
    }
}

TEST_CASE("rule JSON round-trip is exact") {
    RuleSet rules;
    rules.rules.push_back(regex_rule(0, 1, "free (entry|pass)"));
    Rule w;
    w.id = 1;
    w.label = 0;
    w.kind = MatcherKind::WordList;
    w.words = {"hello", "thanks"};
    w.exemplar_instances = {7};
    rules.rules.push_back(w);
    Rule t;
    t.id = 2;
    t.label = 1;
    t.kind = MatcherKind::Tabular;
    t.clauses = {{"capital-gain", Comparator::Gt, 6849.0, "", false},
                 {"marital-status", Comparator::Eq, 0.0, "never-married", true}};
    rules.rules.push_back(t);

    const nlohmann::json j = to_json(rules);
    const RuleSet back = rules_from_json(j);
    CHECK(to_json(back) == j);
    REQUIRE(back.size() == 3);
    CHECK(back.at(0).pattern == "free (entry|pass)");
    CHECK(back.at(1).words == w.words);
    CHECK(back.at(2).clauses[0].threshold == 6849.0);
    CHECK(back.at(2).clauses[1].category == "never-married");
}

TEST_CASE("non-dense rule ids are rejected on load") {
    nlohmann::json j = nlohmann::json::array();
    j.push_back({{"id", 0}, {"label", 0}, {"kind", "regex"}, {"pattern", "a"}});
    j.push_back({{"id", 2}, {"label", 0}, {"kind", "regex"}, {"pattern", "b"}});
    REQUIRE_THROWS_AS(rules_from_json(j), std::invalid_argument);
}
