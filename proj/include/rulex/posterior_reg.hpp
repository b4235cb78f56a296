// Teacher-student alternating trainer: the teacher projects the model's
// joint over (label, rule-trust vector) towards the rule constraints,
// giving closed-form marginals; the student fits both networks to those
// marginals. Also carries a brute-force joint table used as a test oracle.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rulex/autodiff.hpp"
#include "rulex/eval.hpp"
#include "rulex/losses.hpp"

namespace rulex::pr {

inline constexpr double kLogFloor = 1e-300;

// Corrected marginals for one instance: q_y over classes, q_r1[t] for the
// t-th covering rule.
struct Marginals {
    std::vector<double> q_y;
    std::vector<double> q_r1;
};

namespace detail {
inline double log_clamped(double v) { return std::log(std::max(v, kLogFloor)); }
}  // namespace detail

// Brute-force joint over (y, r-vector): entry proportional to
// P(y) * prod_j P(r_j) * exp(-lambda * [y != l_j and r_j = 1]).
// Table layout: [y * 2^m + bitmask], bit t of the mask is rule t's value.
inline std::vector<double> q_joint_oracle(const std::vector<double>& p_theta,
                                          const std::vector<double>& p_phi1,
                                          const std::vector<int>& rule_labels, double lambda) {
    const std::size_t k = p_theta.size(), m = p_phi1.size();
    if (rule_labels.size() != m) throw std::invalid_argument("one label per covering rule");
    if (m > 12) throw std::invalid_argument("q_joint_oracle: too many covering rules (>12)");
    std::vector<double> table(k << m, 0.0);
    double z = 0.0;
    for (std::size_t y = 0; y < k; ++y)
        for (std::size_t bits = 0; bits < (1u << m); ++bits) {
            double w = p_theta[y];
            for (std::size_t t = 0; t < m; ++t) {
                const bool rj = (bits >> t) & 1u;
                w *= rj ? p_phi1[t] : 1.0 - p_phi1[t];
                if (rj && static_cast<int>(y) != rule_labels[t]) w *= std::exp(-lambda);
            }
            table[(y << m) + bits] = w;
            z += w;
        }
    if (!(z > 0.0)) throw std::invalid_argument("q_joint_oracle: degenerate distribution");
    for (double& v : table) v /= z;
    return table;
}

// Closed-form marginals, linear in the number of covering rules. Computed
// in log space with max subtraction.
inline Marginals q_marginals(const std::vector<double>& p_theta,
                             const std::vector<double>& p_phi1,
                             const std::vector<int>& rule_labels, double lambda) {
    const std::size_t k = p_theta.size(), m = p_phi1.size();
    if (rule_labels.size() != m) throw std::invalid_argument("one label per covering rule");
    const double decay = std::max(std::exp(-lambda), kLogFloor);

    // logw(y) = log P(y) + sum_j log(P1_j e^{-lambda [y != l_j]} + P0_j)
    std::vector<double> logw(k);
    for (std::size_t y = 0; y < k; ++y) {
        double acc = detail::log_clamped(p_theta[y]);
        for (std::size_t t = 0; t < m; ++t) {
            const double e = static_cast<int>(y) != rule_labels[t] ? decay : 1.0;
            acc += detail::log_clamped(p_phi1[t] * e + (1.0 - p_phi1[t]));
        }
        logw[y] = acc;
    }
    double mx = logw[0];
    for (double v : logw) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logw) z += std::exp(v - mx);
    const double logz = mx + std::log(z);

    Marginals out;
    out.q_y.resize(k);
    for (std::size_t y = 0; y < k; ++y) out.q_y[y] = std::exp(logw[y] - logz);

    // Q(r_t=1) = sum_y exp(logw(y) - logz) * P1_t e^{-lambda [y != l_t]}
    //                                      / (P1_t e^{-lambda [y != l_t]} + P0_t)
    out.q_r1.resize(m);
    for (std::size_t t = 0; t < m; ++t) {
        double acc = 0.0;
        for (std::size_t y = 0; y < k; ++y) {
            const double e = static_cast<int>(y) != rule_labels[t] ? decay : 1.0;
            const double num = p_phi1[t] * e;
            const double den = num + (1.0 - p_phi1[t]);
            if (den > 0.0) acc += out.q_y[y] * num / den;
        }
        out.q_r1[t] = acc;
    }
    return out;
}

inline std::vector<double> q_marginal_y(const std::vector<double>& p_theta,
                                        const std::vector<double>& p_phi1,
                                        const std::vector<int>& rule_labels, double lambda) {
    return q_marginals(p_theta, p_phi1, rule_labels, lambda).q_y;
}

inline double q_marginal_r(const std::vector<double>& p_theta, const std::vector<double>& p_phi1,
                           const std::vector<int>& rule_labels, double lambda, std::size_t t) {
    if (t >= p_phi1.size())
        throw std::invalid_argument("q_marginal_r: rule index " + std::to_string(t) +
                                    " does not cover this instance");
    return q_marginals(p_theta, p_phi1, rule_labels, lambda).q_r1[t];
}

inline std::vector<double> marginal_y_of_table(const std::vector<double>& table, std::size_t k,
                                               std::size_t m) {
    std::vector<double> out(k, 0.0);
    for (std::size_t y = 0; y < k; ++y)
        for (std::size_t bits = 0; bits < (1u << m); ++bits) out[y] += table[(y << m) + bits];
    return out;
}

inline double marginal_r_of_table(const std::vector<double>& table, std::size_t k, std::size_t m,
                                  std::size_t t) {
    double acc = 0.0;
    for (std::size_t y = 0; y < k; ++y)
        for (std::size_t bits = 0; bits < (1u << m); ++bits)
            if ((bits >> t) & 1u) acc += table[(y << m) + bits];
    return acc;
}

// Frozen teacher targets for the unlabeled rows of a batch.
struct BatchTargets {
    std::vector<int> u_ids;
    std::vector<std::vector<double>> q_y;    // per u row
    std::vector<std::vector<double>> q_r1;   // per u row, per covering rule
};

// Computes Q from the current parameters in eval mode; the result is a
// constant during the subsequent gradient step.
inline BatchTargets compute_targets(const nets::ModelParams& params, const Dataset& ds,
                                    const RuleSet& rules, const CoverageMatrix& cov,
                                    const std::vector<int>& u_ids, double lambda) {
    BatchTargets targets;
    targets.u_ids = u_ids;
    if (u_ids.empty()) return targets;
    const auto proba = eval::classifier_proba(params, ds, u_ids);
    std::vector<int> pair_instance;
    std::vector<std::size_t> pair_rule;
    for (int i : u_ids)
        for (int j : cov.rules_on(i)) {
            pair_instance.push_back(i);
            pair_rule.push_back(static_cast<std::size_t>(j));
        }
    const auto trust = eval::rule_proba_pairs(params, ds, pair_instance, pair_rule);
    std::size_t at = 0;
    for (std::size_t r = 0; r < u_ids.size(); ++r) {
        const auto& covering = cov.rules_on(u_ids[r]);
        std::vector<double> p_phi1;
        std::vector<int> labels;
        for (int j : covering) {
            p_phi1.push_back(trust[at++]);
            labels.push_back(rules.at(static_cast<std::size_t>(j)).label);
        }
        Marginals m = q_marginals(proba[r], p_phi1, labels, lambda);
        targets.q_y.push_back(std::move(m.q_y));
        targets.q_r1.push_back(std::move(m.q_r1));
    }
    return targets;
}

// Student objective: the two labeled-data likelihood terms plus
// gamma-weighted expected log-likelihood of the frozen Q targets on the
// unlabeled rows (both the label term and the rule-trust term).
inline ad::Tensor pr_update_objective(losses::LossContext& ctx, const losses::Batch& batch,
                                      const BatchTargets& targets, double gamma, double q,
                                      losses::GceForm form = losses::GceForm::Zhang,
                                      bool exemplar_term = true) {
    ad::Tensor loss = ad::add(losses::ll_theta(ctx, batch.l_ids),
                              losses::ll_phi(ctx, batch.l_ids, q, form, exemplar_term));
    if (gamma <= 0.0 || targets.u_ids.empty()) return loss;

    // -gamma * sum_x sum_y Q(y|x) log P(y|x)
    ad::Tensor proba = nets::classify_proba(ctx.tape, ctx.classifier, ctx.cfg,
                                            losses::detail::feature_leaf(ctx, targets.u_ids),
                                            ctx.mode, ctx.rng);
    const std::size_t k = ctx.cfg.num_classes;
    std::vector<double> qm(targets.u_ids.size() * k);
    for (std::size_t r = 0; r < targets.u_ids.size(); ++r)
        for (std::size_t y = 0; y < k; ++y) qm[r * k + y] = targets.q_y[r][y];
    ad::Tensor logp = ad::log(ad::clamp(proba, losses::kProbFloor, 1.0));
    ad::Tensor y_term = ad::sum(ad::mul(logp, ctx.tape.leaf({targets.u_ids.size(), k}, qm)));
    loss = ad::add(loss, ad::affine(y_term, -gamma));

    // -gamma * sum_x sum_j [Q(r=1) log P(1) + Q(r=0) log P(0)]
    std::vector<int> pair_instance;
    std::vector<std::size_t> pair_rule;
    std::vector<double> q1;
    for (std::size_t r = 0; r < targets.u_ids.size(); ++r) {
        const auto& covering = ctx.cov.rules_on(targets.u_ids[r]);
        for (std::size_t t = 0; t < covering.size(); ++t) {
            pair_instance.push_back(targets.u_ids[r]);
            pair_rule.push_back(static_cast<std::size_t>(covering[t]));
            q1.push_back(targets.q_r1[r][t]);
        }
    }
    if (!pair_instance.empty()) {
        ad::Tensor p1 = nets::rule_proba(ctx.tape, ctx.rulenet, ctx.cfg,
                                         losses::detail::feature_leaf(ctx, pair_instance),
                                         pair_rule, ctx.mode, ctx.rng);
        std::vector<double> q0(q1.size());
        for (std::size_t t = 0; t < q1.size(); ++t) q0[t] = 1.0 - q1[t];
        const ad::Shape s{q1.size(), 1};
        ad::Tensor log_p1 = ad::log(ad::clamp(p1, losses::kProbFloor, 1.0));
        ad::Tensor log_p0 = ad::log(ad::clamp(ad::affine(p1, -1.0, 1.0), losses::kProbFloor, 1.0));
        ad::Tensor r_term = ad::add(ad::sum(ad::mul(log_p1, ctx.tape.leaf(s, q1))),
                                    ad::sum(ad::mul(log_p0, ctx.tape.leaf(s, q0))));
        loss = ad::add(loss, ad::affine(r_term, -gamma));
    }
    return loss;
}

}  // namespace rulex::pr
