// Prediction-time machinery: soft-voting joint inference over the
// classifier and the denoised rules, standard metrics, and the rule
// denoising diagnostics.
#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rulex/dataset.hpp"
#include "rulex/losses.hpp"
#include "rulex/nets.hpp"
#include "rulex/rules.hpp"

namespace rulex::eval {

// Classifier distribution rows for the given instances, eval mode.
inline std::vector<std::vector<double>> classifier_proba(const nets::ModelParams& params,
                                                         const Dataset& ds,
                                                         const std::vector<int>& ids) {
    if (ids.empty()) return {};
    ad::Tape tape;
    nets::BoundMlp net = nets::bind(tape, params.classifier);
    std::vector<double> rows;
    rows.reserve(ids.size() * ds.dim());
    for (int i : ids) {
        const auto r = ds.feature_row(i);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    ad::Tensor x = tape.leaf({ids.size(), ds.dim()}, rows);
    ad::Tensor proba = nets::classify_proba(tape, net, params.config, x);
    const std::size_t k = params.config.num_classes;
    std::vector<std::vector<double>> out(ids.size(), std::vector<double>(k));
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < k; ++c) out[r][c] = proba.value(r, c);
    return out;
}

// P(r_j=1|x) for explicit (instance, rule) pairs, eval mode.
inline std::vector<double> rule_proba_pairs(const nets::ModelParams& params, const Dataset& ds,
                                            const std::vector<int>& instances,
                                            const std::vector<std::size_t>& rule_ids) {
    if (instances.empty()) return {};
    ad::Tape tape;
    nets::BoundMlp net = nets::bind(tape, params.rulenet);
    std::vector<double> rows;
    rows.reserve(instances.size() * ds.dim());
    for (int i : instances) {
        const auto r = ds.feature_row(i);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    ad::Tensor x = tape.leaf({instances.size(), ds.dim()}, rows);
    ad::Tensor p = nets::rule_proba(tape, net, params.config, x, rule_ids);
    std::vector<double> out(instances.size());
    for (std::size_t r = 0; r < instances.size(); ++r) out[r] = p.value(r, 0);
    return out;
}

struct InferenceResult {
    std::vector<double> p_theta;       // classifier distribution over classes
    std::vector<int> active_rules;     // covering rules trusted above 1/2
    std::vector<double> scores;        // per-class soft-vote score
    int predicted = 0;
};

// Soft voting: active rules add their trust to the asserted class and their
// distrust to every other class, averaged over the active set. Falls back
// to the classifier alone when no covering rule is trusted; argmax ties go
// to the lowest class id.
inline InferenceResult joint_infer(const nets::ModelParams& params, const Dataset& ds,
                                   const CoverageMatrix& cov, const RuleSet& rules,
                                   int instance) {
    InferenceResult res;
    res.p_theta = classifier_proba(params, ds, {instance}).front();
    const std::size_t k = params.config.num_classes;
    res.scores = res.p_theta;

    const auto& covering = cov.rules_on(instance);
    if (!covering.empty()) {
        std::vector<int> pi(covering.size(), instance);
        std::vector<std::size_t> pj(covering.begin(), covering.end());
        const auto trust = rule_proba_pairs(params, ds, pi, pj);
        std::vector<double> vote(k, 0.0);
        std::size_t active = 0;
        for (std::size_t t = 0; t < covering.size(); ++t) {
            if (!(trust[t] > 0.5)) continue;
            ++active;
            res.active_rules.push_back(covering[t]);
            const std::size_t lbl = static_cast<std::size_t>(rules.at(pj[t]).label);
            for (std::size_t y = 0; y < k; ++y)
                vote[y] += y == lbl ? trust[t] : 1.0 - trust[t];
        }
        if (active > 0)
            for (std::size_t y = 0; y < k; ++y)
                res.scores[y] += vote[y] / static_cast<double>(active);
    }
    res.predicted = static_cast<int>(
        std::max_element(res.scores.begin(), res.scores.end()) - res.scores.begin());
    return res;
}

// argmax of P(y|x) with lowest-id tie break.
inline std::vector<int> predict_classifier(const nets::ModelParams& params, const Dataset& ds,
                                           const std::vector<int>& ids) {
    const auto proba = classifier_proba(params, ds, ids);
    std::vector<int> preds(ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r)
        preds[r] = static_cast<int>(
            std::max_element(proba[r].begin(), proba[r].end()) - proba[r].begin());
    return preds;
}

inline std::vector<int> predict_joint(const nets::ModelParams& params, const Dataset& ds,
                                      const CoverageMatrix& cov, const RuleSet& rules,
                                      const std::vector<int>& ids) {
    std::vector<int> preds(ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r)
        preds[r] = joint_infer(params, ds, cov, rules, ids[r]).predicted;
    return preds;
}

enum class Metric { Accuracy, F1Binary, F1Macro };

inline Metric metric_from_name(const std::string& s) {
    if (s == "accuracy") return Metric::Accuracy;
    if (s == "f1_binary") return Metric::F1Binary;
    if (s == "f1_macro") return Metric::F1Macro;
    throw std::invalid_argument("unknown metric '" + s + "'");
}

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Accuracy: return "accuracy";
        case Metric::F1Binary: return "f1_binary";
        case Metric::F1Macro: return "f1_macro";
    }
    return "?";
}

inline double f1_of_class(const std::vector<int>& preds, const std::vector<int>& gold, int cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == cls && gold[i] == cls) ++tp;
        else if (preds[i] == cls) ++fp;
        else if (gold[i] == cls) ++fn;
    }
    if (tp == 0) return 0.0;
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * p * r / (p + r);
}

inline double metrics(const std::vector<int>& preds, const std::vector<int>& gold, Metric kind,
                      int positive_class = 1) {
    if (preds.empty() || preds.size() != gold.size())
        throw std::invalid_argument("metrics: empty or mismatched prediction set");
    switch (kind) {
        case Metric::Accuracy: {
            std::size_t hit = 0;
            for (std::size_t i = 0; i < preds.size(); ++i)
                if (preds[i] == gold[i]) ++hit;
            return static_cast<double>(hit) / static_cast<double>(preds.size());
        }
        case Metric::F1Binary:
            return f1_of_class(preds, gold, positive_class);
        case Metric::F1Macro: {
            int k = 0;
            for (int g : gold) k = std::max(k, g + 1);
            for (int p : preds) k = std::max(k, p + 1);
            double acc = 0.0;
            for (int c = 0; c < k; ++c) acc += f1_of_class(preds, gold, c);
            return acc / static_cast<double>(k);
        }
    }
    return 0.0;
}

struct RuleDiagnostics {
    int rule_id = 0;
    std::size_t firings = 0;
    std::size_t suppressed = 0;
    std::optional<double> orig_precision;      // empty if no firings
    std::optional<double> denoised_precision;  // empty if everything suppressed
    double suppressed_frac = 0.0;
};

struct DiagnosticsReport {
    std::vector<RuleDiagnostics> per_rule;
    std::optional<double> orig_precision;
    std::optional<double> denoised_precision;
    double suppressed_frac = 0.0;
};

// Precision of rule firings before and after dropping firings the rule
// network distrusts (P(r=1|x) <= 0.5), on gold-labeled instances of the
// given split.
inline DiagnosticsReport denoise_diagnostics(const nets::ModelParams& params, const Dataset& ds,
                                             const CoverageMatrix& cov, const RuleSet& rules,
                                             Split split = Split::Test) {
    DiagnosticsReport rep;
    std::size_t tot = 0, tot_sup = 0, tot_correct = 0, tot_kept = 0, tot_kept_correct = 0;
    for (std::size_t j = 0; j < rules.size(); ++j) {
        RuleDiagnostics d;
        d.rule_id = rules.at(j).id;
        std::vector<int> instances;
        for (int i : cov.cover_set(static_cast<int>(j)))
            if (ds.split(i) == split && ds.gold_label(i)) instances.push_back(i);
        if (!instances.empty()) {
            const std::vector<std::size_t> pj(instances.size(), j);
            const auto trust = rule_proba_pairs(params, ds, instances, pj);
            std::size_t correct = 0, kept = 0, kept_correct = 0;
            for (std::size_t t = 0; t < instances.size(); ++t) {
                const bool right = *ds.gold_label(instances[t]) == rules.at(j).label;
                if (right) ++correct;
                if (trust[t] > 0.5) {
                    ++kept;
                    if (right) ++kept_correct;
                }
            }
            d.firings = instances.size();
            d.suppressed = instances.size() - kept;
            d.orig_precision = static_cast<double>(correct) / static_cast<double>(d.firings);
            if (kept > 0)
                d.denoised_precision = static_cast<double>(kept_correct) / static_cast<double>(kept);
            d.suppressed_frac = static_cast<double>(d.suppressed) / static_cast<double>(d.firings);
            tot += d.firings;
            tot_sup += d.suppressed;
            tot_correct += correct;
            tot_kept += kept;
            tot_kept_correct += kept_correct;
        }
        rep.per_rule.push_back(d);
    }
    if (tot > 0) {
        rep.orig_precision = static_cast<double>(tot_correct) / static_cast<double>(tot);
        rep.suppressed_frac = static_cast<double>(tot_sup) / static_cast<double>(tot);
        if (tot_kept > 0)
            rep.denoised_precision = static_cast<double>(tot_kept_correct) / static_cast<double>(tot_kept);
    }
    return rep;
}

}  // namespace rulex::eval
