// Mini-batch training loop shared by every method: Adam updates, seeded
// shuffling, validation-based early stopping, and multi-seed replication.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulex/eval.hpp"
#include "rulex/losses.hpp"
#include "rulex/posterior_reg.hpp"
#include "rulex/rules.hpp"

namespace rulex::train {

enum class Method { OnlyL, LUMaj, NoiseTolerant, ImplyLoss, PosteriorReg };

inline Method method_from_name(const std::string& s) {
    if (s == "only_l") return Method::OnlyL;
    if (s == "l_u_maj") return Method::LUMaj;
    if (s == "noise_tolerant") return Method::NoiseTolerant;
    if (s == "implyloss") return Method::ImplyLoss;
    if (s == "posterior_reg") return Method::PosteriorReg;
    throw std::invalid_argument("unknown method '" + s + "'");
}

inline std::string method_name(Method m) {
    switch (m) {
        case Method::OnlyL: return "only_l";
        case Method::LUMaj: return "l_u_maj";
        case Method::NoiseTolerant: return "noise_tolerant";
        case Method::ImplyLoss: return "implyloss";
        case Method::PosteriorReg: return "posterior_reg";
    }
    return "?";
}

inline bool trains_rulenet(Method m) {
    return m == Method::ImplyLoss || m == Method::PosteriorReg;
}

struct TrainConfig {
    Method method = Method::ImplyLoss;
    double gamma = 0.1;
    double q = 0.6;
    double lambda = 1.0;   // posterior_reg constraint weight
    double alpha = 10.0;   // posterior_reg likelihood weight; U weight is 1/alpha
    double learning_rate = 0.0003;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    eval::Metric metric = eval::Metric::Accuracy;
    int positive_class = 1;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    double dropout_keep = 0.8;
    bool rulenet_dropout = true;
    losses::GceForm gce_form = losses::GceForm::Zhang;
    bool exemplar_term = true;
    std::vector<std::size_t> classifier_hidden = {512, 512};
    std::vector<std::size_t> rulenet_hidden = {512, 512};
    bool joint_inference_eval = true;   // soft rule voting at final evaluation
    bool joint_inference_valid = false; // same voting for early-stopping validation
    std::optional<int> default_class;   // majority-vote tie break
};

struct TrainHistory {
    std::vector<double> train_loss;  // mean batch loss per epoch
    std::vector<double> val_metric;
    std::size_t best_epoch = 0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    nets::ModelParams params;  // best-validation checkpoint
    TrainHistory history;
};

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
    std::vector<double> m, v;
    std::size_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

inline nets::ModelConfig model_config(const Dataset& ds, const RuleSet& rules,
                                      const TrainConfig& cfg) {
    nets::ModelConfig mc;
    mc.feature_dim = ds.dim();
    mc.num_classes = static_cast<std::size_t>(std::max(ds.num_classes(), 2));
    for (const Rule& r : rules.rules)
        mc.num_classes = std::max(mc.num_classes, static_cast<std::size_t>(r.label + 1));
    mc.num_rules = std::max<std::size_t>(rules.size(), 1);
    mc.classifier_hidden = cfg.classifier_hidden;
    mc.rulenet_hidden = cfg.rulenet_hidden;
    mc.dropout_keep = cfg.dropout_keep;
    mc.rulenet_dropout = cfg.rulenet_dropout;
    return mc;
}

// Per-epoch batches: the labeled and unlabeled pools are shuffled together
// so every batch mixes them roughly in proportion. Methods that ignore U
// batch over L alone.
inline std::vector<losses::Batch> make_batches(const Dataset& ds, Method method,
                                               std::size_t batch_size, std::mt19937_64& rng) {
    struct Tagged {
        int id;
        bool labeled;
    };
    std::vector<Tagged> pool;
    for (int i : ds.instances_in(Split::L)) pool.push_back({i, true});
    if (method != Method::OnlyL)
        for (int i : ds.instances_in(Split::U)) pool.push_back({i, false});
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<losses::Batch> batches;
    for (std::size_t at = 0; at < pool.size(); at += batch_size) {
        losses::Batch b;
        for (std::size_t t = at; t < std::min(at + batch_size, pool.size()); ++t)
            (pool[t].labeled ? b.l_ids : b.u_ids).push_back(pool[t].id);
        batches.push_back(std::move(b));
    }
    return batches;
}

// One seed's run: max_epochs of Adam with early stopping on the validation
// metric (classifier-only predictions keep validation cheap;
// joint_inference_valid switches to the full voting used at test time).
// Deterministic given (config, data, seed).
inline TrainResult train(const Dataset& ds, const RuleSet& rules, const CoverageMatrix& cov,
                         const TrainConfig& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto issues = validate_exemplars(ds, rules, cov);
    if (!issues.empty())
        throw std::invalid_argument("exemplar validation failed: " + issues.front().describe());
    const std::vector<int> valid_ids = ds.instances_in(Split::Validation);
    if (valid_ids.empty()) throw std::invalid_argument("validation split is empty");
    std::vector<int> valid_gold;
    for (int i : valid_ids) {
        const auto g = ds.gold_label(i);
        if (!g) throw std::invalid_argument("validation instance " + std::to_string(i) + " has no label");
        valid_gold.push_back(*g);
    }

    std::vector<int> majority_labels;
    if (cfg.method == Method::LUMaj || cfg.method == Method::NoiseTolerant) {
        majority_labels.resize(ds.size());
        for (int i = 0; i < static_cast<int>(ds.size()); ++i)
            majority_labels[static_cast<std::size_t>(i)] =
                majority_vote(i, cov, rules, cfg.default_class);
    }

    const nets::ModelConfig mc = model_config(ds, rules, cfg);
    nets::ModelParams params = nets::init_params(mc, seed);
    std::vector<double> flat = nets::flatten(params);
    AdamState adam(flat.size());
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

    TrainResult result;
    result.params = params;
    double best_metric = -1.0;
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto batches = make_batches(ds, cfg.method, cfg.batch_size, rng);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            // posterior_reg freezes teacher targets from the current params
            pr::BatchTargets targets;
            if (cfg.method == Method::PosteriorReg)
                targets = pr::compute_targets(params, ds, rules, cov, batches[b].u_ids,
                                              cfg.lambda);

            ad::Tape tape;
            nets::BoundMlp classifier = nets::bind(tape, params.classifier);
            nets::BoundMlp rulenet = nets::bind(tape, params.rulenet);
            losses::LossContext ctx{tape,       ds,      rules,
                                    cov,        mc,      classifier,
                                    rulenet,    nets::Mode::Train, &rng};
            ad::Tensor loss;
            switch (cfg.method) {
                case Method::OnlyL:
                    loss = losses::ll_theta(ctx, batches[b].l_ids);
                    break;
                case Method::LUMaj:
                    loss = losses::lumaj_objective(ctx, batches[b], cfg.gamma, majority_labels);
                    break;
                case Method::NoiseTolerant:
                    loss = losses::noise_tolerant_objective(ctx, batches[b], cfg.gamma, cfg.q,
                                                            majority_labels, cfg.gce_form);
                    break;
                case Method::ImplyLoss:
                    loss = losses::imply_objective(ctx, batches[b], cfg.gamma, cfg.q,
                                                   cfg.gce_form, cfg.exemplar_term);
                    break;
                case Method::PosteriorReg:
                    loss = pr::pr_update_objective(ctx, batches[b], targets, 1.0 / cfg.alpha,
                                                   cfg.q, cfg.gce_form, cfg.exemplar_term);
                    break;
            }
            const double loss_value = loss.scalar();
            if (std::isnan(loss_value) || std::isinf(loss_value))
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(b));
            loss_sum += loss_value;
            tape.backward(loss);
            adam_step(flat, nets::collect_grads(classifier, rulenet), adam, cfg.learning_rate);
            nets::unflatten(params, flat);
        }
        result.history.train_loss.push_back(batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size()));

        const auto preds = cfg.joint_inference_valid && trains_rulenet(cfg.method)
                               ? eval::predict_joint(params, ds, cov, rules, valid_ids)
                               : eval::predict_classifier(params, ds, valid_ids);
        const double metric = eval::metrics(preds, valid_gold, cfg.metric, cfg.positive_class);
        result.history.val_metric.push_back(metric);
        if (metric > best_metric) {
            best_metric = metric;
            result.params = params;
            result.history.best_epoch = epoch;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= cfg.patience) {
            break;
        }
    }
    result.history.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// Test-split score of a trained model; methods that learn rule trust vote
// jointly with the denoised rules when the config says so.
inline double test_metric(const nets::ModelParams& params, const Dataset& ds,
                          const RuleSet& rules, const CoverageMatrix& cov,
                          const TrainConfig& cfg) {
    const std::vector<int> test_ids = ds.instances_in(Split::Test);
    if (test_ids.empty()) throw std::invalid_argument("test split is empty");
    std::vector<int> gold;
    for (int i : test_ids) gold.push_back(*ds.gold_label(i));
    const bool joint = cfg.joint_inference_eval && trains_rulenet(cfg.method);
    const auto preds = joint ? eval::predict_joint(params, ds, cov, rules, test_ids)
                             : eval::predict_classifier(params, ds, test_ids);
    return eval::metrics(preds, gold, cfg.metric, cfg.positive_class);
}

struct ReplicateRow {
    std::uint64_t seed = 0;
    double value = 0.0;
};

struct ReplicateSummary {
    std::vector<ReplicateRow> rows;
    double mean = 0.0;
    double stddev = 0.0;  // population std (divisor n)
    bool single_seed = false;
};

inline ReplicateSummary summarize(const std::vector<ReplicateRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("replicate: no seeds");
    ReplicateSummary s;
    s.rows = rows;
    s.single_seed = rows.size() == 1;
    for (const auto& r : rows) s.mean += r.value;
    s.mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const auto& r : rows) var += (r.value - s.mean) * (r.value - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(rows.size()));
    return s;
}

// Trains one model per seed and reports mean/std of the test metric.
inline ReplicateSummary replicate(const Dataset& ds, const RuleSet& rules,
                                  const CoverageMatrix& cov, const TrainConfig& cfg) {
    std::vector<ReplicateRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        const TrainResult r = train(ds, rules, cov, cfg, seed);
        rows.push_back({seed, test_metric(r.params, ds, rules, cov, cfg)});
    }
    return summarize(rows);
}

}  // namespace rulex::train
