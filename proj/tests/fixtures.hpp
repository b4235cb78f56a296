// Shared test fixtures: small random supervision problems with consistent
// exemplar links, plus a finite-difference gradient oracle for any objective
// expressed as a function of the flat parameter vector.
#pragma once

#include <functional>
#include <random>
#include <vector>

#include "rulex/dataio.hpp"
#include "rulex/losses.hpp"
#include "rulex/nets.hpp"
#include "rulex/rules.hpp"

namespace testfix {

struct Problem {
    rulex::Dataset ds;
    rulex::RuleSet rules;
    rulex::CoverageMatrix cov;
    rulex::nets::ModelConfig mc;
    rulex::nets::ModelParams params;
    rulex::losses::Batch batch;
    std::vector<int> majority_labels;
};

// Random small problem: d<=8 features, K<=4 classes, m<=4 rules, a handful
// of labeled and unlabeled instances, random coverage, exemplar links that
// pass validation.
inline Problem random_problem(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    const std::size_t d = pick(2, 8), k = pick(2, 4), m = pick(1, 4);
    const std::size_t n_l = pick(2, 5), n_u = pick(2, 6);
    const std::size_t n = n_l + n_u;

    Problem p;
    p.ds = rulex::Dataset(n, d);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int i = 0; i < static_cast<int>(n); ++i)
        for (std::size_t j = 0; j < d; ++j) p.ds.feature(i, j) = unif(rng);

    for (std::size_t j = 0; j < m; ++j) {
        rulex::Rule r;
        r.id = static_cast<int>(j);
        r.label = static_cast<int>(pick(0, k - 1));
        p.rules.rules.push_back(r);
    }

    p.cov = rulex::CoverageMatrix(n, m);
    for (int i = 0; i < static_cast<int>(n); ++i) {
        const bool labeled = i < static_cast<int>(n_l);
        p.ds.set_split(i, labeled ? rulex::Split::L : rulex::Split::U);
        if (labeled) {
            p.ds.set_gold_label(i, static_cast<int>(pick(0, k - 1)));
            p.batch.l_ids.push_back(i);
        } else {
            p.batch.u_ids.push_back(i);
        }
        for (std::size_t j = 0; j < m; ++j)
            if (pick(0, 1)) p.cov.add(i, static_cast<int>(j));
    }
    // one exemplar per labeled instance where some rule can legally own it
    for (int i : p.batch.l_ids) {
        if (pick(0, 1) == 0) continue;
        const int j = static_cast<int>(pick(0, m - 1));
        p.cov.add(i, j);
        p.ds.set_gold_label(i, p.rules.at(static_cast<std::size_t>(j)).label);
        p.ds.set_exemplar_rule(i, j);
    }
    p.majority_labels.resize(n);
    for (int i = 0; i < static_cast<int>(n); ++i)
        p.majority_labels[static_cast<std::size_t>(i)] = rulex::majority_vote(i, p.cov, p.rules);

    p.mc.feature_dim = d;
    p.mc.num_classes = k;
    p.mc.num_rules = m;
    p.mc.classifier_hidden = {pick(2, 8)};
    p.mc.rulenet_hidden = {pick(2, 8)};
    p.mc.dropout_keep = 1.0;  // gradient oracles run without dropout
    p.params = rulex::nets::init_params(p.mc, seed);
    return p;
}

// Loss as a function of the flat parameter vector; the builder constructs
// the objective on the given tape/context.
using Objective = std::function<rulex::ad::Tensor(rulex::losses::LossContext&)>;

inline double eval_loss(Problem& p, const std::vector<double>& flat, const Objective& make,
                        std::vector<double>* grads_out = nullptr) {
    rulex::nets::unflatten(p.params, flat);
    rulex::ad::Tape tape;
    rulex::nets::BoundMlp classifier = rulex::nets::bind(tape, p.params.classifier);
    rulex::nets::BoundMlp rulenet = rulex::nets::bind(tape, p.params.rulenet);
    rulex::losses::LossContext ctx{tape,    p.ds, p.rules,    p.cov,
                                   p.mc,    classifier, rulenet,
                                   rulex::nets::Mode::Eval, nullptr};
    rulex::ad::Tensor loss = make(ctx);
    if (grads_out) {
        tape.backward(loss);
        *grads_out = rulex::nets::collect_grads(classifier, rulenet);
    }
    return loss.scalar();
}

// Max relative error between backprop gradients and central differences.
inline double max_grad_rel_error(Problem& p, const Objective& make, double h = 1e-5) {
    const std::vector<double> flat0 = rulex::nets::flatten(p.params);
    std::vector<double> analytic;
    eval_loss(p, flat0, make, &analytic);
    double worst = 0.0;
    for (std::size_t i = 0; i < flat0.size(); ++i) {
        std::vector<double> flat = flat0;
        flat[i] += h;
        const double up = eval_loss(p, flat, make);
        flat[i] -= 2.0 * h;
        const double down = eval_loss(p, flat, make);
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(fd - analytic[i]) /
                           std::max({std::abs(fd), std::abs(analytic[i]), 1e-5});
        worst = std::max(worst, rel);
    }
    rulex::nets::unflatten(p.params, flat0);
    return worst;
}

}  // namespace testfix
