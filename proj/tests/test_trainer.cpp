#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "rulex/config.hpp"
#include "rulex/experiments.hpp"
#include "rulex/trainer.hpp"

using namespace rulex;

namespace {

// Small synthetic problem a trainer can finish quickly.
io::SyntheticTask tiny_task(double beta = 2.0) {
    io::SyntheticConfig cfg;
    cfg.n_labeled = 24;
    cfg.n_unlabeled = 60;
    cfg.n_valid = 30;
    cfg.n_test = 40;
    cfg.n_rules = 3;
    cfg.beta = beta;
    return io::gen_synthetic_2d(cfg, 0);
}

train::TrainConfig tiny_config(train::Method method) {
    train::TrainConfig cfg;
    cfg.method = method;
    cfg.max_epochs = 4;
    cfg.patience = 4;
    cfg.batch_size = 16;
    cfg.classifier_hidden = {8};
    cfg.rulenet_hidden = {8};
    cfg.dropout_keep = 1.0;
    cfg.seeds = {0, 1};
    return cfg;
}

}  // namespace

TEST_CASE("adam updates") {
    SECTION("first step moves by roughly the learning rate under unit gradient") {
        std::vector<double> params = {0.0};
        train::AdamState st(1);
        train::adam_step(params, {1.0}, st, 0.1);
        CHECK(params[0] == Catch::Approx(-0.1).margin(1e-8));
    }
    SECTION("zero gradient leaves parameters unchanged") {
        std::vector<double> params = {3.0, -2.0};
        train::AdamState st(2);
        train::adam_step(params, {0.0, 0.0}, st, 0.1);
        CHECK(params == std::vector<double>{3.0, -2.0});
    }
    SECTION("coordinates update independently") {
        std::vector<double> params = {0.0, 0.0};
        train::AdamState st(2);
        train::adam_step(params, {1.0, 0.0}, st, 0.1);
        CHECK(params[0] != 0.0);
        CHECK(params[1] == 0.0);
    }
    SECTION("size mismatch rejected") {
        std::vector<double> params = {0.0};
        train::AdamState st(1);
        REQUIRE_THROWS_AS(train::adam_step(params, {1.0, 2.0}, st, 0.1), std::invalid_argument);
    }
}

TEST_CASE("replicate summary statistics") {
    SECTION("hand-checked mean and population std") {
        const auto s = train::summarize({{0, 80.0}, {1, 82.0}});
        CHECK(s.mean == Catch::Approx(81.0).margin(1e-12));
        CHECK(s.stddev == Catch::Approx(1.0).margin(1e-12));
        CHECK_FALSE(s.single_seed);
    }
    SECTION("identical values give zero std") {
        CHECK(train::summarize({{0, 5.0}, {1, 5.0}, {2, 5.0}}).stddev == 0.0);
    }
    SECTION("single seed flagged") {
        const auto s = train::summarize({{0, 7.0}});
        CHECK(s.stddev == 0.0);
        CHECK(s.single_seed);
    }
    SECTION("no seeds rejected") {
        REQUIRE_THROWS_AS(train::summarize({}), std::invalid_argument);
    }
}

TEST_CASE("training is seed-deterministic") {
    const io::SyntheticTask t = tiny_task();
    const CoverageMatrix cov = apply_rules(t.rules, t.dataset);
    const train::TrainConfig cfg = tiny_config(train::Method::ImplyLoss);
    const auto a = train::train(t.dataset, t.rules, cov, cfg, 0);
    const auto b = train::train(t.dataset, t.rules, cov, cfg, 0);
    CHECK(nets::flatten(a.params) == nets::flatten(b.params));
    CHECK(a.history.train_loss == b.history.train_loss);
    CHECK(a.history.val_metric == b.history.val_metric);

    const auto c = train::train(t.dataset, t.rules, cov, cfg, 1);
    CHECK(nets::flatten(a.params) != nets::flatten(c.params));
}

TEST_CASE("best checkpoint matches the max validation metric") {
    const io::SyntheticTask t = tiny_task();
    const CoverageMatrix cov = apply_rules(t.rules, t.dataset);
    train::TrainConfig cfg = tiny_config(train::Method::OnlyL);
    cfg.max_epochs = 6;
    const auto r = train::train(t.dataset, t.rules, cov, cfg, 0);
    REQUIRE(!r.history.val_metric.empty());
    double best = r.history.val_metric[0];
    for (double v : r.history.val_metric) best = std::max(best, v);
    CHECK(r.history.val_metric[r.history.best_epoch] == best);
}

TEST_CASE("only_l ignores the rules entirely") {
    const io::SyntheticTask t = tiny_task();
    const CoverageMatrix cov = apply_rules(t.rules, t.dataset);
    const train::TrainConfig cfg = tiny_config(train::Method::OnlyL);
    const auto with_rules = train::train(t.dataset, t.rules, cov, cfg, 0);

    // strip all exemplar links and rules
    Dataset bare = t.dataset;
    for (int i = 0; i < static_cast<int>(bare.size()); ++i) bare.set_exemplar_rule(i, -1);
    const RuleSet no_rules;
    const CoverageMatrix no_cov(bare.size(), 0);
    const auto without = train::train(bare, no_rules, no_cov, cfg, 0);
    // same classifier trajectory: the rule set only pads the unused rule net
    for (std::size_t l = 0; l < with_rules.params.classifier.layers.size(); ++l) {
        CHECK(with_rules.params.classifier.layers[l].weight ==
              without.params.classifier.layers[l].weight);
        CHECK(with_rules.params.classifier.layers[l].bias ==
              without.params.classifier.layers[l].bias);
    }
}

TEST_CASE("posterior_reg with lambda=0, gamma=0 follows the implyloss gamma=0 trajectory") {
    const io::SyntheticTask t = tiny_task();
    const CoverageMatrix cov = apply_rules(t.rules, t.dataset);
    train::TrainConfig a = tiny_config(train::Method::ImplyLoss);
    a.gamma = 0.0;
    train::TrainConfig b = tiny_config(train::Method::PosteriorReg);
    b.lambda = 0.0;
    b.alpha = std::numeric_limits<double>::infinity();  // U weight 1/alpha = 0 exactly
    const auto ra = train::train(t.dataset, t.rules, cov, a, 0);
    const auto rb = train::train(t.dataset, t.rules, cov, b, 0);
    REQUIRE(ra.history.train_loss.size() == rb.history.train_loss.size());
    for (std::size_t e = 0; e < ra.history.train_loss.size(); ++e)
        CHECK(std::abs(ra.history.train_loss[e] - rb.history.train_loss[e]) <= 1e-10);
    const auto fa = nets::flatten(ra.params), fb = nets::flatten(rb.params);
    for (std::size_t i = 0; i < fa.size(); ++i)
        CHECK(std::abs(fa[i] - fb[i]) <= 1e-10);
}

TEST_CASE("training rejects invalid setups") {
    const io::SyntheticTask t = tiny_task();
    const CoverageMatrix cov = apply_rules(t.rules, t.dataset);
    const train::TrainConfig cfg = tiny_config(train::Method::ImplyLoss);

    SECTION("broken exemplar link") {
        Dataset bad = t.dataset;
        // flip the gold label of some exemplar: label mismatch
        for (int i = 0; i < static_cast<int>(bad.size()); ++i) {
            if (!bad.exemplar_rule(i)) continue;
            bad.set_gold_label(i, 1 - *bad.gold_label(i));
            break;
        }
        REQUIRE_THROWS_WITH(train::train(bad, t.rules, cov, cfg, 0),
                            Catch::Matchers::ContainsSubstring("exemplar"));
    }
    SECTION("missing validation split") {
        Dataset bad = t.dataset;
        for (int i = 0; i < static_cast<int>(bad.size()); ++i)
            if (bad.split(i) == Split::Validation) bad.set_split(i, Split::U);
        REQUIRE_THROWS_WITH(train::train(bad, t.rules, cov, cfg, 0),
                            Catch::Matchers::ContainsSubstring("validation"));
    }
    SECTION("unknown method name") {
        REQUIRE_THROWS_AS(train::method_from_name("mystery"), std::invalid_argument);
    }
}

TEST_CASE("only_l training loss is non-increasing on the convex logistic case") {
    const io::SyntheticTask t = tiny_task();
    const CoverageMatrix cov = apply_rules(t.rules, t.dataset);
    train::TrainConfig cfg = tiny_config(train::Method::OnlyL);
    cfg.classifier_hidden = {};  // logistic regression: convex in the parameters
    cfg.max_epochs = 8;
    cfg.batch_size = 1000;  // full-batch so epoch losses are comparable
    const auto r = train::train(t.dataset, t.rules, cov, cfg, 0);
    for (std::size_t e = 1; e < r.history.train_loss.size(); ++e)
        CHECK(r.history.train_loss[e] <= r.history.train_loss[e - 1] + 1e-6);
}

TEST_CASE("config file round-trip and key validation") {
    train::TrainConfig cfg;
    cfg.method = train::Method::PosteriorReg;
    cfg.gamma = 0.25;
    cfg.seeds = {3, 5};
    cfg.classifier_hidden = {16, 16};
    cfg.metric = eval::Metric::F1Binary;
    cfg.default_class = 1;
    const std::string text = config::serialize(cfg);
    std::istringstream in(text);
    train::TrainConfig back;
    for (const auto& [k, v] : config::parse_kv(in)) config::apply_key(back, k, v);
    CHECK(config::serialize(back) == text);

    REQUIRE_THROWS_WITH([] {
        train::TrainConfig c;
        config::apply_key(c, "not_a_key", "1");
    }(),
                        Catch::Matchers::ContainsSubstring("not_a_key"));
    REQUIRE_THROWS_WITH([] {
        train::TrainConfig c;
        config::apply_key(c, "gamma", "abc");
    }(),
                        Catch::Matchers::ContainsSubstring("gamma"));
}

TEST_CASE("presets set the documented hyperparameters") {
    train::TrainConfig cfg;
    config::apply_preset(cfg, "question-implyloss");
    CHECK(cfg.method == train::Method::ImplyLoss);
    CHECK(cfg.gamma == 0.1);
    CHECK(cfg.learning_rate == 0.0003);
    CHECK(cfg.batch_size == 32);

    config::apply_preset(cfg, "census-implyloss");
    CHECK(cfg.classifier_hidden == std::vector<std::size_t>{256, 256});

    config::apply_preset(cfg, "youtube-implyloss");
    CHECK(cfg.classifier_hidden.empty());
    CHECK(cfg.rulenet_hidden == std::vector<std::size_t>{32});

    config::apply_preset(cfg, "sms-implyloss");
    CHECK(cfg.metric == eval::Metric::F1Binary);

    REQUIRE_THROWS_AS(config::apply_preset(cfg, "nonexistent-preset"), std::invalid_argument);
}

TEST_CASE("labeled-size sweep demotes trailing labeled instances") {
    const io::SyntheticTask t = tiny_task();
    const Dataset reduced = experiments::with_labeled_size(t.dataset, 10);
    CHECK(reduced.instances_in(Split::L).size() == 10);
    CHECK(reduced.instances_in(Split::U).size() ==
          t.dataset.instances_in(Split::U).size() + (24 - 10));
    REQUIRE_THROWS_AS(experiments::with_labeled_size(t.dataset, 1000), std::invalid_argument);
}

TEST_CASE("rule-precision sweep removing every rule degenerates to only_l") {
    const io::SyntheticTask t = tiny_task();
    const CoverageMatrix cov = apply_rules(t.rules, t.dataset);
    FilterCriterion crit{FilterCriterion::PrecisionAbove, -1.0, {}};  // removes all
    const FilteredRules f = filter_rules(t.rules, cov, t.dataset, crit);
    CHECK(f.kept.size() == 0);
    const Dataset remapped = experiments::remap_exemplars(t.dataset, f);
    for (int i = 0; i < static_cast<int>(remapped.size()); ++i)
        CHECK_FALSE(remapped.exemplar_rule(i));

    train::TrainConfig cfg = tiny_config(train::Method::ImplyLoss);
    cfg.seeds = {0};
    const auto rows = experiments::sweep(experiments::SweepKind::RulePrecision, {-1.0},
                                         t.dataset, t.rules, cov, cfg);
    cfg.method = train::Method::OnlyL;
    const CoverageMatrix empty_cov(remapped.size(), 0);
    const auto only_l = train::replicate(remapped, f.kept, empty_cov, cfg);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].summary.mean == Catch::Approx(only_l.mean).margin(1e-12));
}
