// Command-line front end: synth-gen, stats, validate, train, eval,
// diagnose, sweep. Every run writes a manifest with the resolved
// configuration so results can be reproduced byte-for-byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rulex/config.hpp"
#include "rulex/dataio.hpp"
#include "rulex/eval.hpp"
#include "rulex/experiments.hpp"
#include "rulex/trainer.hpp"

namespace fs = std::filesystem;
using namespace rulex;

namespace {

constexpr const char* kVersion = "rulex 1.0.0";

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

struct LoadedData {
    Dataset ds;
    RuleSet rules;
    CoverageMatrix cov;
};

LoadedData load_data_dir(const std::string& dir) {
    LoadedData d;
    const io::Matrix m = io::load_features(dir + "/features.txt");
    d.ds = Dataset(m.rows, m.cols);
    d.ds.set_features(m.data, m.cols);
    if (fs::exists(dir + "/labels.txt")) io::load_labels_into(dir + "/labels.txt", d.ds);
    if (fs::exists(dir + "/split.txt")) io::load_split_into(dir + "/split.txt", d.ds);
    if (fs::exists(dir + "/exemplars.txt")) io::load_exemplars_into(dir + "/exemplars.txt", d.ds);
    if (fs::exists(dir + "/texts.txt")) {
        std::ifstream in(dir + "/texts.txt");
        std::vector<std::string> texts;
        std::string line;
        while (std::getline(in, line)) texts.push_back(line);
        d.ds.set_texts(std::move(texts));
    }
    if (fs::exists(dir + "/columns.json")) {
        // raw tabular columns for clause rules:
        // [{"name":..., "categorical":bool, "values":[...]}]
        std::ifstream in(dir + "/columns.json");
        nlohmann::json cols;
        in >> cols;
        for (const auto& c : cols) {
            const std::string name = c.at("name").get<std::string>();
            if (c.at("categorical").get<bool>())
                d.ds.add_categorical_column(name, c.at("values").get<std::vector<std::string>>());
            else
                d.ds.add_numeric_column(name, c.at("values").get<std::vector<double>>());
        }
    }
    if (fs::exists(dir + "/rules.json")) {
        std::ifstream in(dir + "/rules.json");
        nlohmann::json arr;
        in >> arr;
        d.rules = rules_from_json(arr);
    }
    if (fs::exists(dir + "/coverage.txt"))
        d.cov = io::load_coverage(dir + "/coverage.txt", d.ds.size(), d.rules.size());
    else
        d.cov = apply_rules(d.rules, d.ds);
    return d;
}

void prepare_out_dir(const std::string& out, bool force, const std::string& primary_output) {
    fs::create_directories(out);
    if (!force && fs::exists(out + "/" + primary_output))
        throw std::runtime_error(out + "/" + primary_output +
                                 " already exists; pass --force to overwrite");
}

void write_manifest(const std::string& out, const train::TrainConfig& cfg,
                    const std::string& verb, const std::string& data_dir) {
    std::ofstream mf(out + "/manifest.txt");
    mf << "version=" << kVersion << "\n";
    mf << "verb=" << verb << "\n";
    mf << "data=" << data_dir << "\n";
    mf << config::serialize(cfg);
}

int run_synth_gen(std::uint64_t seed, const io::SyntheticConfig& scfg, const std::string& out,
                  bool force) {
    prepare_out_dir(out, force, "features.txt");
    const io::SyntheticTask task = io::gen_synthetic_2d(scfg, seed);
    const std::size_t n = task.dataset.size();

    io::Matrix m;
    m.rows = n;
    m.cols = task.dataset.dim();
    m.data = task.dataset.feature_matrix();
    io::save_features(out + "/features.txt", m);

    std::vector<std::pair<int, int>> labels, exemplars;
    {
        std::ofstream sp(out + "/split.txt");
        for (int i = 0; i < static_cast<int>(n); ++i) {
            sp << i << " " << split_name(task.dataset.split(i)) << "\n";
            if (const auto l = task.dataset.gold_label(i)) labels.push_back({i, *l});
            if (const auto e = task.dataset.exemplar_rule(i)) exemplars.push_back({i, *e});
        }
    }
    io::save_int_pairs(out + "/labels.txt", labels);
    io::save_int_pairs(out + "/exemplars.txt", exemplars);
    const CoverageMatrix cov = apply_rules(task.rules, task.dataset);
    io::save_coverage(out + "/coverage.txt", cov);
    {
        std::ofstream rf(out + "/rules.json");
        rf << to_json(task.rules).dump(2) << "\n";
    }
    {
        // columns.json lets the tabular matchers re-derive coverage
        nlohmann::json cols = nlohmann::json::array();
        for (const std::string& name : {std::string("x0"), std::string("x1")}) {
            nlohmann::json c;
            c["name"] = name;
            c["categorical"] = false;
            std::vector<double> vals(n);
            for (std::size_t i = 0; i < n; ++i)
                vals[i] = task.dataset.numeric_value(static_cast<int>(i), name);
            c["values"] = vals;
            cols.push_back(c);
        }
        std::ofstream cf(out + "/columns.json");
        cf << cols.dump() << "\n";
    }
    {
        std::ofstream tf(out + "/truth.txt");
        tf << "boundary x0+x1>0\n";
        for (const auto& [i, j] : task.truth.true_coverage) tf << i << " " << j << "\n";
    }
    std::cout << "wrote synthetic task (" << n << " instances, " << task.rules.size()
              << " rules) to " << out << "\n";
    return 0;
}

int run_stats(const std::string& data_dir) {
    const LoadedData d = load_data_dir(data_dir);
    const CoverageStats s = coverage_stats(d.cov, d.ds, d.rules);
    std::cout << "#Rules " << d.rules.size() << "\n";
    std::cout << "%Cover " << fmt1(s.percent_cover) << "\n";
    std::cout << "Precision " << fmt1(s.micro_precision) << "\n";
    std::cout << "%Conflict " << fmt1(s.percent_conflict) << "\n";
    std::cout << "Avg|H_j| " << fmt1(s.avg_cover_size) << "\n";
    std::cout << "RulesPerInstance " << fmt1(s.rules_per_covered_instance) << "\n";
    return 0;
}

int run_validate(const std::string& data_dir, const std::string& out) {
    const LoadedData d = load_data_dir(data_dir);
    const auto issues = validate_exemplars(d.ds, d.rules, d.cov);
    if (!out.empty()) {
        fs::create_directories(out);
        std::ofstream rf(out + "/validation_report.txt");
        for (const auto& issue : issues) rf << issue.describe() << "\n";
    }
    if (issues.empty()) {
        std::cout << "exemplar links valid\n";
        return 0;
    }
    std::cerr << issues.size() << " exemplar issue(s)";
    if (!out.empty()) std::cerr << "; report at " << out << "/validation_report.txt";
    std::cerr << "\n";
    return 3;
}

std::vector<train::ReplicateRow> train_seeds(const LoadedData& d, const train::TrainConfig& cfg,
                                             unsigned jobs, const std::string& out) {
    std::vector<train::ReplicateRow> rows(cfg.seeds.size());
    std::vector<nets::ModelParams> models(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= cfg.seeds.size()) break;
            const train::TrainResult r = train::train(d.ds, d.rules, d.cov, cfg, cfg.seeds[k]);
            rows[k] = {cfg.seeds[k], train::test_metric(r.params, d.ds, d.rules, d.cov, cfg)};
            models[k] = r.params;
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (!out.empty())
        for (std::size_t k = 0; k < cfg.seeds.size(); ++k)
            nets::save_checkpoint(out + "/model_seed" + std::to_string(cfg.seeds[k]) + ".ckpt",
                                  models[k]);
    return rows;
}

int run_train(const std::string& data_dir, const train::TrainConfig& cfg, const std::string& out,
              bool force, unsigned jobs) {
    const LoadedData d = load_data_dir(data_dir);
    prepare_out_dir(out, force, "results.csv");
    write_manifest(out, cfg, "train", data_dir);
    const auto rows = train_seeds(d, cfg, jobs, out);
    const train::ReplicateSummary summary = train::summarize(rows);
    {
        std::ofstream rf(out + "/results.csv");
        rf << "method,seed,metric,value\n";
        for (const auto& r : rows)
            rf << train::method_name(cfg.method) << "," << r.seed << ","
               << eval::metric_name(cfg.metric) << "," << fmt(r.value) << "\n";
    }
    if (summary.single_seed)
        std::cerr << "warning: single seed, reported std is 0\n";
    std::cout << train::method_name(cfg.method) << " " << eval::metric_name(cfg.metric)
              << " mean " << fmt(summary.mean) << " std " << fmt(summary.stddev) << " over "
              << rows.size() << " seed(s)\n";
    return 0;
}

int run_eval(const std::string& data_dir, const std::string& checkpoint,
             const train::TrainConfig& cfg) {
    const LoadedData d = load_data_dir(data_dir);
    const nets::ModelParams params = nets::load_checkpoint(checkpoint);
    const double value = train::test_metric(params, d.ds, d.rules, d.cov, cfg);
    std::cout << eval::metric_name(cfg.metric) << " " << fmt(value) << "\n";
    return 0;
}

int run_diagnose(const std::string& data_dir, const std::string& checkpoint,
                 const std::string& out, bool force) {
    const LoadedData d = load_data_dir(data_dir);
    const nets::ModelParams params = nets::load_checkpoint(checkpoint);
    const eval::DiagnosticsReport rep =
        eval::denoise_diagnostics(params, d.ds, d.cov, d.rules, Split::Test);
    prepare_out_dir(out, force, "diagnostics.csv");
    std::ofstream df(out + "/diagnostics.csv");
    df << "rule_id,orig_precision,denoised_precision,suppressed_frac\n";
    const auto opt = [&](const std::optional<double>& v) {
        return v ? fmt(*v) : std::string("undefined");
    };
    for (const auto& r : rep.per_rule)
        df << r.rule_id << "," << opt(r.orig_precision) << "," << opt(r.denoised_precision)
           << "," << fmt(r.suppressed_frac) << "\n";
    std::cout << "orig_precision " << opt(rep.orig_precision) << " denoised_precision "
              << opt(rep.denoised_precision) << " suppressed_frac " << fmt(rep.suppressed_frac)
              << "\n";
    return 0;
}

int run_sweep(const std::string& data_dir, const train::TrainConfig& cfg,
              const std::string& experiment, const std::vector<double>& grid,
              const std::string& out, bool force) {
    const LoadedData d = load_data_dir(data_dir);
    experiments::SweepKind kind;
    if (experiment == "labeled_size") kind = experiments::SweepKind::LabeledSize;
    else if (experiment == "rule_precision") kind = experiments::SweepKind::RulePrecision;
    else throw std::runtime_error("unknown experiment '" + experiment + "'");
    prepare_out_dir(out, force, "sweep.csv");
    write_manifest(out, cfg, "sweep", data_dir);
    const auto rows = experiments::sweep(kind, grid, d.ds, d.rules, d.cov, cfg);
    std::ofstream sf(out + "/sweep.csv");
    sf << "experiment,grid_value,method,metric,mean,std\n";
    for (const auto& r : rows)
        sf << experiment << "," << fmt(r.grid_value) << "," << train::method_name(cfg.method)
           << "," << eval::metric_name(cfg.metric) << "," << fmt(r.summary.mean) << ","
           << fmt(r.summary.stddev) << "\n";
    std::cout << "wrote " << rows.size() << " grid rows to " << out << "/sweep.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train classifiers from labeling rules coupled with exemplars"};
    app.require_subcommand(1);

    std::string data_dir, out_dir, config_path, preset, checkpoint;
    bool force = false;
    unsigned jobs = 1;

    // train-config overrides, only applied when the flag is given
    std::string method_opt, metric_opt, gce_form_opt;
    double gamma_opt = 0, q_opt = 0, lambda_opt = 0, alpha_opt = 0, lr_opt = 0;
    std::size_t bs_opt = 0, epochs_opt = 0, patience_opt = 0, seeds_opt = 0;
    bool no_exemplar_term = false;
    std::string hidden_opt, rulenet_hidden_opt;

    const auto add_common = [&](CLI::App* sub, bool with_train_flags) {
        sub->add_option("--data", data_dir, "dataset directory")->required();
        if (!with_train_flags) return;
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--preset", preset, "named hyperparameter preset, e.g. question-implyloss");
        sub->add_option("--method", method_opt,
                        "only_l | l_u_maj | noise_tolerant | implyloss | posterior_reg");
        sub->add_option("--gamma", gamma_opt)->check(CLI::NonNegativeNumber);
        sub->add_option("--q", q_opt);
        sub->add_option("--lambda", lambda_opt);
        sub->add_option("--alpha", alpha_opt);
        sub->add_option("--lr", lr_opt);
        sub->add_option("--batch-size", bs_opt);
        sub->add_option("--epochs", epochs_opt);
        sub->add_option("--patience", patience_opt);
        sub->add_option("--seeds", seeds_opt, "number of seeds (0..n-1)");
        sub->add_option("--metric", metric_opt, "accuracy | f1_binary | f1_macro");
        sub->add_option("--gce-form", gce_form_opt, "zhang | literal");
        sub->add_flag("--no-exemplar-term", no_exemplar_term,
                      "drop the exemplar likelihood term (ablation)");
        sub->add_option("--hidden", hidden_opt, "classifier hidden widths, comma separated");
        sub->add_option("--rulenet-hidden", rulenet_hidden_opt);
        sub->add_option("--jobs", jobs, "seed worker pool size");
    };

    auto* synth = app.add_subcommand("synth-gen", "generate the planted 2-D synthetic task");
    std::uint64_t synth_seed = 0;
    io::SyntheticConfig scfg;
    synth->add_option("--seed", synth_seed);
    synth->add_option("--out", out_dir)->required();
    synth->add_option("--n-labeled", scfg.n_labeled);
    synth->add_option("--n-unlabeled", scfg.n_unlabeled);
    synth->add_option("--n-valid", scfg.n_valid);
    synth->add_option("--n-test", scfg.n_test);
    synth->add_option("--n-rules", scfg.n_rules);
    synth->add_option("--beta", scfg.beta, "box over-generalization factor");
    synth->add_flag("--force", force);

    auto* stats = app.add_subcommand("stats", "rule-set coverage statistics");
    add_common(stats, false);

    auto* validate = app.add_subcommand("validate", "check exemplar-rule links");
    add_common(validate, false);
    validate->add_option("--out", out_dir);

    auto* trainc = app.add_subcommand("train", "train one method over several seeds");
    add_common(trainc, true);
    trainc->add_option("--out", out_dir)->required();
    trainc->add_flag("--force", force);

    auto* evalc = app.add_subcommand("eval", "score a checkpoint on the test split");
    add_common(evalc, true);
    evalc->add_option("--checkpoint", checkpoint)->required();

    auto* diag = app.add_subcommand("diagnose", "rule denoising diagnostics for a checkpoint");
    add_common(diag, false);
    diag->add_option("--checkpoint", checkpoint)->required();
    diag->add_option("--out", out_dir)->required();
    diag->add_flag("--force", force);

    auto* sweepc = app.add_subcommand("sweep", "grid experiment");
    add_common(sweepc, true);
    std::string experiment;
    std::vector<double> grid;
    sweepc->add_option("--experiment", experiment, "labeled_size | rule_precision")->required();
    sweepc->add_option("--grid", grid, "grid values")->required();
    sweepc->add_option("--out", out_dir)->required();
    sweepc->add_flag("--force", force);

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* active = app.get_subcommands().front();
        const auto given = [&](const std::string& name) {
            const CLI::Option* opt = active->get_option_no_throw(name);
            return opt != nullptr && opt->count() > 0;
        };
        train::TrainConfig cfg;
        try {
            if (!config_path.empty()) cfg = config::load_config(config_path);
            if (!preset.empty()) config::apply_preset(cfg, preset);
            if (!method_opt.empty()) cfg.method = train::method_from_name(method_opt);
            if (given("--gamma")) cfg.gamma = gamma_opt;
            if (given("--q")) cfg.q = q_opt;
            if (given("--lambda")) cfg.lambda = lambda_opt;
            if (given("--alpha")) cfg.alpha = alpha_opt;
            if (given("--lr")) cfg.learning_rate = lr_opt;
            if (given("--batch-size")) cfg.batch_size = bs_opt;
            if (given("--epochs")) cfg.max_epochs = epochs_opt;
            if (given("--patience")) cfg.patience = patience_opt;
            if (seeds_opt != 0) {
                cfg.seeds.clear();
                for (std::uint64_t s = 0; s < seeds_opt; ++s) cfg.seeds.push_back(s);
            }
            if (!metric_opt.empty()) cfg.metric = eval::metric_from_name(metric_opt);
            if (!gce_form_opt.empty())
                config::apply_key(cfg, "gce_form", gce_form_opt);
            if (no_exemplar_term) cfg.exemplar_term = false;
            if (!hidden_opt.empty()) config::apply_key(cfg, "classifier_hidden", hidden_opt);
            if (!rulenet_hidden_opt.empty())
                config::apply_key(cfg, "rulenet_hidden", rulenet_hidden_opt);
        } catch (const std::invalid_argument& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 2;
        }

        if (synth->parsed()) return run_synth_gen(synth_seed, scfg, out_dir, force);
        if (stats->parsed()) return run_stats(data_dir);
        if (validate->parsed()) return run_validate(data_dir, out_dir);
        if (trainc->parsed()) return run_train(data_dir, cfg, out_dir, force, jobs);
        if (evalc->parsed()) return run_eval(data_dir, checkpoint, cfg);
        if (diag->parsed()) return run_diagnose(data_dir, checkpoint, out_dir, force);
        if (sweepc->parsed()) return run_sweep(data_dir, cfg, experiment, grid, out_dir, force);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
