// Training objectives. The classifier is fit on labeled instances; the rule
// network on exemplar / disagreement / agreement evidence; covered unlabeled
// instances enter through either an implication term tying rule trust to
// the classifier, or majority-vote pseudo-labels for the baselines.
#pragma once

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "rulex/autodiff.hpp"
#include "rulex/dataset.hpp"
#include "rulex/nets.hpp"
#include "rulex/rules.hpp"

namespace rulex::losses {

inline constexpr double kProbFloor = 1e-7;

enum class GceForm { Zhang, Literal };

// Gauge for silently skipped empty labeled batches.
inline std::atomic<std::size_t>& empty_l_batch_count() {
    static std::atomic<std::size_t> counter{0};
    return counter;
}

struct Batch {
    std::vector<int> l_ids;  // labeled instances in the batch
    std::vector<int> u_ids;  // unlabeled instances in the batch
};

// Everything a loss needs to run both networks on the tape.
struct LossContext {
    ad::Tape& tape;
    const Dataset& ds;
    const RuleSet& rules;
    const CoverageMatrix& cov;
    const nets::ModelConfig& cfg;
    const nets::BoundMlp& classifier;
    const nets::BoundMlp& rulenet;
    nets::Mode mode = nets::Mode::Eval;
    std::mt19937_64* rng = nullptr;
};

namespace detail {

inline ad::Tensor feature_leaf(LossContext& ctx, const std::vector<int>& ids) {
    std::vector<double> rows;
    rows.reserve(ids.size() * ctx.ds.dim());
    for (int i : ids) {
        const auto r = ctx.ds.feature_row(i);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    return ctx.tape.leaf({ids.size(), ctx.ds.dim()}, rows);
}

// -sum(log(clamp(p))) for a column of probabilities.
inline ad::Tensor neg_log_sum(ad::Tape& tape, const ad::Tensor& p) {
    return ad::affine(ad::sum(ad::log(ad::clamp(p, kProbFloor, 1.0))), -1.0);
}

}  // namespace detail

// Scalar generalized cross entropy against a positive target.
// Zhang form (1 - p^q)/q; the literal variant (1 - p)^q / q is kept as a
// config switch. Both reduce to 1-p at q=1.
inline double generalized_xent(double p, double q, GceForm form = GceForm::Zhang) {
    if (!(q > 0.0) || q > 1.0) throw std::invalid_argument("generalized_xent: q must be in (0,1]");
    if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("generalized_xent: p must be in (0,1]");
    if (form == GceForm::Zhang) return (1.0 - std::pow(p, q)) / q;
    return std::pow(1.0 - p, q) / q;
}

// Tensor version: sum of GXENT over a (n,1) column of probabilities.
inline ad::Tensor generalized_xent_sum(ad::Tape& tape, const ad::Tensor& p, double q,
                                       GceForm form) {
    if (!(q > 0.0) || q > 1.0) throw std::invalid_argument("generalized_xent: q must be in (0,1]");
    if (form == GceForm::Zhang) {
        // (1 - p^q)/q summed
        ad::Tensor pc = ad::clamp(p, kProbFloor, 1.0);
        return ad::affine(ad::sum(ad::pow(pc, q)), -1.0 / q,
                          static_cast<double>(p.rows()) / q);
    }
    // (1-p)^q/q summed
    ad::Tensor one_minus = ad::clamp(ad::affine(p, -1.0, 1.0), kProbFloor, 1.0);
    return ad::affine(ad::sum(ad::pow(one_minus, q)), 1.0 / q);
}

// Negative log-likelihood of the gold labels on the labeled part of a batch.
inline ad::Tensor ll_theta(LossContext& ctx, const std::vector<int>& l_ids) {
    if (l_ids.empty()) {
        ++empty_l_batch_count();
        return ad::scalar(ctx.tape, 0.0);
    }
    ad::Tensor proba = nets::classify_proba(ctx.tape, ctx.classifier, ctx.cfg,
                                            detail::feature_leaf(ctx, l_ids), ctx.mode, ctx.rng);
    std::vector<std::size_t> labels;
    for (int i : l_ids) {
        const auto l = ctx.ds.gold_label(i);
        if (!l) throw std::invalid_argument("ll_theta: instance " + std::to_string(i) + " has no label");
        labels.push_back(static_cast<std::size_t>(*l));
    }
    return detail::neg_log_sum(ctx.tape, ad::gather_cols(proba, labels));
}

// Rule-network likelihood over the labeled batch. Three kinds of evidence
// per (labeled instance i, covering rule j):
//   exemplar (e_i = j):       hard positive, -log P(1)
//   label disagreement:       hard negative, -log P(0)
//   label agreement (not an exemplar pair): soft positive via GXENT
inline ad::Tensor ll_phi(LossContext& ctx, const std::vector<int>& l_ids, double q,
                         GceForm form = GceForm::Zhang, bool exemplar_term = true) {
    struct Pairs {
        std::vector<int> instances;
        std::vector<std::size_t> rules;
    } exemplars, disagree, agree;
    for (int i : l_ids) {
        const auto label = ctx.ds.gold_label(i);
        if (!label) continue;
        const auto exemplar_of = ctx.ds.exemplar_rule(i);
        if (exemplar_term && exemplar_of) {
            exemplars.instances.push_back(i);
            exemplars.rules.push_back(static_cast<std::size_t>(*exemplar_of));
        }
        for (int j : ctx.cov.rules_on(i)) {
            const int rule_label = ctx.rules.at(static_cast<std::size_t>(j)).label;
            if (rule_label != *label) {
                disagree.instances.push_back(i);
                disagree.rules.push_back(static_cast<std::size_t>(j));
            } else if (!exemplar_of || *exemplar_of != j) {
                // exemplar pairs already carry the hard log term above
                agree.instances.push_back(i);
                agree.rules.push_back(static_cast<std::size_t>(j));
            }
        }
    }
    const auto rule_p1 = [&](const Pairs& p) {
        return nets::rule_proba(ctx.tape, ctx.rulenet, ctx.cfg,
                                detail::feature_leaf(ctx, p.instances), p.rules, ctx.mode,
                                ctx.rng);
    };
    ad::Tensor loss = ad::scalar(ctx.tape, 0.0);
    if (!exemplars.instances.empty())
        loss = ad::add(loss, detail::neg_log_sum(ctx.tape, rule_p1(exemplars)));
    if (!disagree.instances.empty())
        loss = ad::add(loss,
                       detail::neg_log_sum(ctx.tape, ad::affine(rule_p1(disagree), -1.0, 1.0)));
    if (!agree.instances.empty())
        loss = ad::add(loss, generalized_xent_sum(ctx.tape, rule_p1(agree), q, form));
    return loss;
}

// Soft penalty over covered unlabeled pairs: -log(1 - P_r (1 - P_y(l_j))).
// Zero when the rule is fully suppressed, and -log P_y(l_j) when fully
// trusted; flat in the classifier wherever the rule is suppressed.
inline ad::Tensor implication_loss(LossContext& ctx, const std::vector<int>& u_ids) {
    std::vector<int> pair_instance;
    std::vector<std::size_t> pair_rule, pair_label;
    for (int i : u_ids)
        for (int j : ctx.cov.rules_on(i)) {
            pair_instance.push_back(i);
            pair_rule.push_back(static_cast<std::size_t>(j));
            pair_label.push_back(static_cast<std::size_t>(ctx.rules.at(static_cast<std::size_t>(j)).label));
        }
    if (pair_instance.empty()) return ad::scalar(ctx.tape, 0.0);

    ad::Tensor features = detail::feature_leaf(ctx, pair_instance);
    ad::Tensor p_r = nets::rule_proba(ctx.tape, ctx.rulenet, ctx.cfg, features, pair_rule,
                                      ctx.mode, ctx.rng);
    ad::Tensor proba = nets::classify_proba(ctx.tape, ctx.classifier, ctx.cfg, features,
                                            ctx.mode, ctx.rng);
    ad::Tensor p_y = ad::gather_cols(proba, pair_label);
    // 1 - p_r (1 - p_y)
    ad::Tensor inner = ad::affine(ad::mul(p_r, ad::affine(p_y, -1.0, 1.0)), -1.0, 1.0);
    return detail::neg_log_sum(ctx.tape, inner);
}

// Combined objective: classifier likelihood + rule-network likelihood +
// gamma-weighted implication over covered unlabeled instances.
inline ad::Tensor imply_objective(LossContext& ctx, const Batch& batch, double gamma, double q,
                                  GceForm form = GceForm::Zhang, bool exemplar_term = true) {
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    ad::Tensor loss = ad::add(ll_theta(ctx, batch.l_ids),
                              ll_phi(ctx, batch.l_ids, q, form, exemplar_term));
    if (gamma > 0.0)
        loss = ad::add(loss, ad::affine(implication_loss(ctx, batch.u_ids), gamma));
    return loss;
}

namespace detail {
// -gamma * sum log P(maj label | x) over covered (non-abstaining) U rows;
// returns the pseudo-label column instead when gxent_q is set, for the
// noise-tolerant variant.
inline std::pair<std::vector<int>, std::vector<std::size_t>> majority_pairs(
    const std::vector<int>& u_ids, const std::vector<int>& majority_labels) {
    std::vector<int> ids;
    std::vector<std::size_t> labels;
    for (int i : u_ids) {
        const int y = majority_labels[static_cast<std::size_t>(i)];
        if (y < 0) continue;  // abstained
        ids.push_back(i);
        labels.push_back(static_cast<std::size_t>(y));
    }
    return {ids, labels};
}
}  // namespace detail

// Cross entropy on L plus gamma-weighted cross entropy on majority-labeled
// covered U instances.
inline ad::Tensor lumaj_objective(LossContext& ctx, const Batch& batch, double gamma,
                                  const std::vector<int>& majority_labels) {
    ad::Tensor loss = ll_theta(ctx, batch.l_ids);
    const auto [ids, labels] = detail::majority_pairs(batch.u_ids, majority_labels);
    if (!ids.empty() && gamma > 0.0) {
        ad::Tensor proba = nets::classify_proba(ctx.tape, ctx.classifier, ctx.cfg,
                                                detail::feature_leaf(ctx, ids), ctx.mode, ctx.rng);
        loss = ad::add(loss, ad::affine(detail::neg_log_sum(ctx.tape, ad::gather_cols(proba, labels)), gamma));
    }
    return loss;
}

// As above but with the noise-tolerant GXENT on the pseudo-labeled part.
inline ad::Tensor noise_tolerant_objective(LossContext& ctx, const Batch& batch, double gamma,
                                           double q, const std::vector<int>& majority_labels,
                                           GceForm form = GceForm::Zhang) {
    ad::Tensor loss = ll_theta(ctx, batch.l_ids);
    const auto [ids, labels] = detail::majority_pairs(batch.u_ids, majority_labels);
    if (!ids.empty() && gamma > 0.0) {
        ad::Tensor proba = nets::classify_proba(ctx.tape, ctx.classifier, ctx.cfg,
                                                detail::feature_leaf(ctx, ids), ctx.mode, ctx.rng);
        ad::Tensor p_y = ad::gather_cols(proba, labels);
        loss = ad::add(loss, ad::affine(generalized_xent_sum(ctx.tape, p_y, q, form), gamma));
    }
    return loss;
}

}  // namespace rulex::losses
