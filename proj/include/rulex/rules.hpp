// Labeling rules, coverage computation, exemplar validation and rule-set
// statistics. A rule fires on an instance and asserts its class label;
// an exemplar is a labeled instance the rule was generalized from.
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "rulex/dataset.hpp"

namespace rulex {

enum class MatcherKind { Regex, WordList, Tabular };

enum class Comparator { Eq, Le, Gt };

// One conjunct of a tabular rule, e.g. age <= 30 or color = red.
struct TabularClause {
    std::string feature;
    Comparator cmp = Comparator::Eq;
    double threshold = 0.0;       // for Le / Gt
    std::string category;         // for Eq on categorical columns
    bool categorical = false;
};

struct Rule {
    int id = 0;
    int label = 0;
    MatcherKind kind = MatcherKind::Regex;
    std::string pattern;                  // Regex
    std::vector<std::string> words;       // WordList
    std::vector<TabularClause> clauses;   // Tabular
    std::vector<int> exemplar_instances;
};

struct RuleSet {
    std::vector<Rule> rules;
    std::size_t size() const { return rules.size(); }
    const Rule& at(std::size_t j) const { return rules.at(j); }
};

// Sparse instance-by-rule firing relation. Per-rule cover lists and
// per-instance rule lists are maintained together and kept transposed.
class CoverageMatrix {
public:
    CoverageMatrix() = default;
    CoverageMatrix(std::size_t n_instances, std::size_t n_rules)
        : by_rule_(n_rules), by_instance_(n_instances) {}

    void add(int instance, int rule) {
        if (pairs_.insert({instance, rule}).second) {
            by_rule_[rule].push_back(instance);
            by_instance_[instance].push_back(rule);
        }
    }

    bool covers(int instance, int rule) const { return pairs_.count({instance, rule}) > 0; }
    const std::vector<int>& cover_set(int rule) const { return by_rule_.at(rule); }
    const std::vector<int>& rules_on(int instance) const { return by_instance_.at(instance); }
    std::size_t pair_count() const { return pairs_.size(); }
    std::size_t n_instances() const { return by_instance_.size(); }
    std::size_t n_rules() const { return by_rule_.size(); }

    // Canonical ordering so equality and serialization are deterministic.
    std::vector<std::pair<int, int>> sorted_pairs() const {
        std::vector<std::pair<int, int>> v(pairs_.begin(), pairs_.end());
        std::sort(v.begin(), v.end());
        return v;
    }

    bool operator==(const CoverageMatrix& o) const { return pairs_ == o.pairs_; }

private:
    std::set<std::pair<int, int>> pairs_;
    std::vector<std::vector<int>> by_rule_;
    std::vector<std::vector<int>> by_instance_;
};

namespace detail {

// lowercase, split on non-alphanumerics
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline bool clause_holds(const TabularClause& c, const Dataset& ds, int instance) {
    if (c.categorical) {
        return ds.categorical_value(instance, c.feature) == c.category;
    }
    const double v = ds.numeric_value(instance, c.feature);
    switch (c.cmp) {
        case Comparator::Eq: return v == c.threshold;
        case Comparator::Le: return v <= c.threshold;
        case Comparator::Gt: return v > c.threshold;
    }
    return false;
}

}  // namespace detail

// Compiled matcher; regexes are ECMAScript dialect (no backreferences used
// by the shipped rule files), compiled once per rule.
class RuleMatcher {
public:
    explicit RuleMatcher(const RuleSet& rules) : rules_(&rules) {
        regexes_.resize(rules.size());
        word_sets_.resize(rules.size());
        for (std::size_t j = 0; j < rules.size(); ++j) {
            const Rule& r = rules.at(j);
            if (r.kind == MatcherKind::Regex) {
                try {
                    regexes_[j] = std::regex(r.pattern, std::regex::ECMAScript);
                } catch (const std::regex_error& e) {
                    throw std::invalid_argument("rule " + std::to_string(r.id) +
                                                ": bad regex '" + r.pattern + "': " + e.what());
                }
            } else if (r.kind == MatcherKind::WordList) {
                for (const auto& w : r.words)
                    for (const auto& tok : detail::tokenize(w)) word_sets_[j].insert(tok);
            }
        }
    }

    bool fires(std::size_t j, const Dataset& ds, int instance) const {
        const Rule& r = rules_->at(j);
        switch (r.kind) {
            case MatcherKind::Regex:
                return std::regex_search(ds.text(instance), regexes_[j]);
            case MatcherKind::WordList: {
                for (const auto& tok : detail::tokenize(ds.text(instance)))
                    if (word_sets_[j].count(tok)) return true;
                return false;
            }
            case MatcherKind::Tabular: {
                for (const auto& c : r.clauses)
                    if (!detail::clause_holds(c, ds, instance)) return false;
                return !r.clauses.empty();
            }
        }
        return false;
    }

private:
    const RuleSet* rules_;
    std::vector<std::regex> regexes_;
    std::vector<std::unordered_set<std::string>> word_sets_;
};

// Applies every rule to every instance. Pure function of (rules, dataset);
// tabular clauses are validated against the schema up front.
inline CoverageMatrix apply_rules(const RuleSet& rules, const Dataset& ds) {
    for (const Rule& r : rules.rules)
        for (const TabularClause& c : r.clauses)
            if (!ds.has_column(c.feature))
                throw std::invalid_argument("rule " + std::to_string(r.id) +
                                            ": unknown feature '" + c.feature + "'");
    RuleMatcher matcher(rules);
    CoverageMatrix cov(ds.size(), rules.size());
    for (int i = 0; i < static_cast<int>(ds.size()); ++i)
        for (std::size_t j = 0; j < rules.size(); ++j)
            if (matcher.fires(j, ds, i)) cov.add(i, static_cast<int>(j));
    return cov;
}

struct ExemplarIssue {
    int instance = 0;
    int rule = 0;
    enum Kind { Uncovered, LabelMismatch } kind = Uncovered;
    std::string describe() const {
        std::ostringstream os;
        os << (kind == Uncovered ? "uncovered exemplar" : "label mismatch")
           << ": instance " << instance << ", rule " << rule;
        return os.str();
    }
};

// Every exemplar must be covered by its rule and share its label.
// Reports issues, never throws.
inline std::vector<ExemplarIssue> validate_exemplars(const Dataset& ds,
                                                     const RuleSet& rules,
                                                     const CoverageMatrix& cov) {
    std::vector<ExemplarIssue> issues;
    for (int i = 0; i < static_cast<int>(ds.size()); ++i) {
        const auto link = ds.exemplar_rule(i);
        if (!link) continue;
        const int j = *link;
        if (!cov.covers(i, j)) issues.push_back({i, j, ExemplarIssue::Uncovered});
        const auto lbl = ds.gold_label(i);
        if (lbl && *lbl != rules.at(j).label)
            issues.push_back({i, j, ExemplarIssue::LabelMismatch});
    }
    return issues;
}

struct CoverageStats {
    double percent_cover = 0.0;            // covered fraction of U, in percent
    double micro_precision = 0.0;          // over firings with gold labels, in percent
    double percent_conflict = 0.0;         // conflicting among covered, in percent
    double avg_cover_size = 0.0;           // mean |H_j ∩ U|
    double rules_per_covered_instance = 0.0;
};

// Statistics over the unlabeled split; precision/conflict use gold labels
// where present (synthetic truth or test annotations).
inline CoverageStats coverage_stats(const CoverageMatrix& cov, const Dataset& ds,
                                    const RuleSet& rules) {
    std::vector<int> u_instances;
    for (int i = 0; i < static_cast<int>(ds.size()); ++i)
        if (ds.split(i) == Split::U) u_instances.push_back(i);
    if (u_instances.empty()) throw std::invalid_argument("coverage_stats: empty U split");

    std::size_t covered = 0, conflicted = 0, multi = 0;
    std::size_t firings_checked = 0, firings_correct = 0, total_rules_on_covered = 0;
    for (int i : u_instances) {
        const auto& js = cov.rules_on(i);
        if (js.empty()) continue;
        ++covered;
        total_rules_on_covered += js.size();
        std::set<int> labels;
        for (int j : js) labels.insert(rules.at(j).label);
        if (js.size() >= 2) ++multi;
        if (labels.size() >= 2) ++conflicted;
        if (const auto gold = ds.gold_label(i)) {
            for (int j : js) {
                ++firings_checked;
                if (rules.at(j).label == *gold) ++firings_correct;
            }
        }
    }
    std::size_t cover_sum = 0;
    for (std::size_t j = 0; j < rules.size(); ++j) {
        for (int i : cov.cover_set(static_cast<int>(j)))
            if (ds.split(i) == Split::U) ++cover_sum;
    }
    CoverageStats s;
    s.percent_cover = 100.0 * static_cast<double>(covered) / static_cast<double>(u_instances.size());
    s.percent_conflict = covered ? 100.0 * static_cast<double>(conflicted) / static_cast<double>(covered) : 0.0;
    s.avg_cover_size = rules.size() ? static_cast<double>(cover_sum) / static_cast<double>(rules.size()) : 0.0;
    s.rules_per_covered_instance =
        covered ? static_cast<double>(total_rules_on_covered) / static_cast<double>(covered) : 0.0;
    s.micro_precision =
        firings_checked ? 100.0 * static_cast<double>(firings_correct) / static_cast<double>(firings_checked) : 0.0;
    return s;
}

inline constexpr int kAbstain = -1;

// Plurality label among rules firing on the instance; ties go to the
// configured default class, else to the lowest class id. Uncovered
// instances abstain.
inline int majority_vote(int instance, const CoverageMatrix& cov, const RuleSet& rules,
                         std::optional<int> default_class = std::nullopt) {
    const auto& js = cov.rules_on(instance);
    if (js.empty()) return kAbstain;
    std::map<int, int> counts;
    for (int j : js) ++counts[rules.at(j).label];
    int best_count = 0;
    for (const auto& [lbl, c] : counts) best_count = std::max(best_count, c);
    std::vector<int> winners;
    for (const auto& [lbl, c] : counts)
        if (c == best_count) winners.push_back(lbl);
    if (winners.size() == 1) return winners.front();
    if (default_class &&
        std::find(winners.begin(), winners.end(), *default_class) != winners.end())
        return *default_class;
    return *std::min_element(winners.begin(), winners.end());
}

// Per-rule precision over instances with gold labels.
inline std::vector<double> rule_precisions(const CoverageMatrix& cov, const Dataset& ds,
                                           const RuleSet& rules) {
    std::vector<double> prec(rules.size(), 0.0);
    for (std::size_t j = 0; j < rules.size(); ++j) {
        std::size_t total = 0, correct = 0;
        for (int i : cov.cover_set(static_cast<int>(j))) {
            const auto gold = ds.gold_label(i);
            if (!gold) continue;
            ++total;
            if (*gold == rules.at(j).label) ++correct;
        }
        prec[j] = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    }
    return prec;
}

struct FilterCriterion {
    enum Kind { PrecisionAbove, IdList } kind = IdList;
    double threshold = 0.0;       // PrecisionAbove: remove rules with precision > threshold
    std::vector<int> ids;         // IdList: remove these rule ids
};

struct FilteredRules {
    RuleSet kept;                 // surviving rules, ids renumbered densely
    std::vector<int> removed_ids; // original ids dropped
    std::vector<int> kept_original_ids;
};

// Removes rules per the criterion and renumbers the survivors. The caller
// re-applies the reduced set to rebuild coverage.
inline FilteredRules filter_rules(const RuleSet& rules, const CoverageMatrix& cov,
                                  const Dataset& ds, const FilterCriterion& crit) {
    std::vector<bool> remove(rules.size(), false);
    if (crit.kind == FilterCriterion::PrecisionAbove) {
        const auto prec = rule_precisions(cov, ds, rules);
        for (std::size_t j = 0; j < rules.size(); ++j)
            if (prec[j] > crit.threshold) remove[j] = true;
    } else {
        for (int id : crit.ids)
            for (std::size_t j = 0; j < rules.size(); ++j)
                if (rules.at(j).id == id) remove[j] = true;
    }
    FilteredRules out;
    for (std::size_t j = 0; j < rules.size(); ++j) {
        if (remove[j]) {
            out.removed_ids.push_back(rules.at(j).id);
            continue;
        }
        Rule r = rules.at(j);
        out.kept_original_ids.push_back(r.id);
        r.id = static_cast<int>(out.kept.rules.size());
        out.kept.rules.push_back(std::move(r));
    }
    return out;
}

// ---- JSON round-trip for rule files ----

inline nlohmann::json to_json(const RuleSet& rules) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Rule& r : rules.rules) {
        nlohmann::json o;
        o["id"] = r.id;
        o["label"] = r.label;
        switch (r.kind) {
            case MatcherKind::Regex:
                o["kind"] = "regex";
                o["pattern"] = r.pattern;
                break;
            case MatcherKind::WordList:
                o["kind"] = "wordlist";
                o["words"] = r.words;
                break;
            case MatcherKind::Tabular: {
                o["kind"] = "tabular";
                nlohmann::json cls = nlohmann::json::array();
                for (const auto& c : r.clauses) {
                    nlohmann::json co;
                    co["feature"] = c.feature;
                    co["cmp"] = c.cmp == Comparator::Eq ? "=" : (c.cmp == Comparator::Le ? "<=" : ">");
                    if (c.categorical)
                        co["value"] = c.category;
                    else
                        co["value"] = c.threshold;
                    cls.push_back(co);
                }
                o["clauses"] = cls;
                break;
            }
        }
        o["exemplar_instance_ids"] = r.exemplar_instances;
        arr.push_back(o);
    }
    return arr;
}

inline RuleSet rules_from_json(const nlohmann::json& arr) {
    RuleSet rules;
    for (const auto& o : arr) {
        Rule r;
        r.id = o.at("id").get<int>();
        r.label = o.at("label").get<int>();
        const std::string kind = o.at("kind").get<std::string>();
        if (kind == "regex") {
            r.kind = MatcherKind::Regex;
            r.pattern = o.at("pattern").get<std::string>();
        } else if (kind == "wordlist") {
            r.kind = MatcherKind::WordList;
            r.words = o.at("words").get<std::vector<std::string>>();
        } else if (kind == "tabular") {
            r.kind = MatcherKind::Tabular;
            for (const auto& co : o.at("clauses")) {
                TabularClause c;
                c.feature = co.at("feature").get<std::string>();
                const std::string cmp = co.at("cmp").get<std::string>();
                c.cmp = cmp == "=" ? Comparator::Eq : (cmp == "<=" ? Comparator::Le : Comparator::Gt);
                if (co.at("value").is_string()) {
                    c.categorical = true;
                    c.category = co.at("value").get<std::string>();
                } else {
                    c.threshold = co.at("value").get<double>();
                }
                r.clauses.push_back(std::move(c));
            }
        } else {
            throw std::invalid_argument("unknown rule kind '" + kind + "'");
        }
        if (o.contains("exemplar_instance_ids"))
            r.exemplar_instances = o.at("exemplar_instance_ids").get<std::vector<int>>();
        rules.rules.push_back(std::move(r));
    }
    // ids must be dense and unique
    std::vector<bool> seen(rules.size(), false);
    for (const Rule& r : rules.rules) {
        if (r.id < 0 || r.id >= static_cast<int>(rules.size()) || seen[r.id])
            throw std::invalid_argument("rule ids must be dense and unique, bad id " +
                                        std::to_string(r.id));
        seen[r.id] = true;
    }
    std::sort(rules.rules.begin(), rules.rules.end(),
              [](const Rule& a, const Rule& b) { return a.id < b.id; });
    return rules;
}

}  // namespace rulex
