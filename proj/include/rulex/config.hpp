// Flat key=value config files for TrainConfig, plus the run manifest that
// makes any output directory re-runnable bit-for-bit.
#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulex/trainer.hpp"

namespace rulex::config {

inline std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::map<std::string, std::string> parse_kv(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line without '=': " + line);
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        const auto trim = [](std::string& s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
        };
        trim(key);
        trim(value);
        kv[key] = value;
    }
    return kv;
}

inline void apply_key(train::TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto bad = [&]() -> std::invalid_argument {
        return std::invalid_argument("config key '" + key + "': bad value '" + value + "'");
    };
    const auto num = [&](const std::string& tok, auto parse) {
        try {
            std::size_t used = 0;
            const auto v = parse(tok, &used);
            if (used != tok.size()) throw bad();
            return v;
        } catch (const std::exception&) {
            throw bad();
        }
    };
    const auto to_d = [&](const std::string& s) {
        return num(s, [](const std::string& t, std::size_t* u) { return std::stod(t, u); });
    };
    const auto to_u = [&](const std::string& s) {
        return num(s, [](const std::string& t, std::size_t* u) { return std::stoul(t, u); });
    };
    const auto to_ull = [&](const std::string& s) {
        return num(s, [](const std::string& t, std::size_t* u) { return std::stoull(t, u); });
    };
    const auto to_i = [&](const std::string& s) {
        return num(s, [](const std::string& t, std::size_t* u) { return std::stoi(t, u); });
    };
    const auto widths = [&]() {
        std::vector<std::size_t> w;
        for (const auto& tok : split_commas(value)) w.push_back(to_u(tok));
        return w;
    };
    const auto as_bool = [&]() {
        if (value == "1" || value == "true" || value == "yes") return true;
        if (value == "0" || value == "false" || value == "no") return false;
        throw std::invalid_argument("config key '" + key + "': bad boolean '" + value + "'");
    };
    if (key == "method") cfg.method = train::method_from_name(value);
    else if (key == "gamma") cfg.gamma = to_d(value);
    else if (key == "q") cfg.q = to_d(value);
    else if (key == "lambda") cfg.lambda = to_d(value);
    else if (key == "alpha") cfg.alpha = to_d(value);
    else if (key == "learning_rate" || key == "lr") cfg.learning_rate = to_d(value);
    else if (key == "batch_size") cfg.batch_size = to_u(value);
    else if (key == "max_epochs" || key == "epochs") cfg.max_epochs = to_u(value);
    else if (key == "patience") cfg.patience = to_u(value);
    else if (key == "metric") cfg.metric = eval::metric_from_name(value);
    else if (key == "positive_class") cfg.positive_class = to_i(value);
    else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& tok : split_commas(value)) cfg.seeds.push_back(to_ull(tok));
        if (cfg.seeds.empty()) throw bad();
    } else if (key == "num_seeds") {
        cfg.seeds.clear();
        for (std::uint64_t s = 0; s < to_ull(value); ++s) cfg.seeds.push_back(s);
    }
    else if (key == "dropout_keep") cfg.dropout_keep = to_d(value);
    else if (key == "rulenet_dropout") cfg.rulenet_dropout = as_bool();
    else if (key == "gce_form") {
        if (value == "zhang") cfg.gce_form = losses::GceForm::Zhang;
        else if (value == "literal") cfg.gce_form = losses::GceForm::Literal;
        else throw bad();
    }
    else if (key == "exemplar_term") cfg.exemplar_term = as_bool();
    else if (key == "classifier_hidden") cfg.classifier_hidden = widths();
    else if (key == "rulenet_hidden") cfg.rulenet_hidden = widths();
    else if (key == "joint_inference_eval") cfg.joint_inference_eval = as_bool();
    else if (key == "joint_inference_valid") cfg.joint_inference_valid = as_bool();
    else if (key == "default_class") cfg.default_class = to_i(value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

inline train::TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    train::TrainConfig cfg;
    for (const auto& [k, v] : parse_kv(in)) apply_key(cfg, k, v);
    return cfg;
}

inline std::string serialize(const train::TrainConfig& cfg) {
    std::ostringstream out;
    const auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    const auto join = [](const auto& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(v[i]);
        }
        return s;
    };
    out << "method=" << train::method_name(cfg.method) << "\n";
    out << "gamma=" << num(cfg.gamma) << "\n";
    out << "q=" << num(cfg.q) << "\n";
    out << "lambda=" << num(cfg.lambda) << "\n";
    out << "alpha=" << num(cfg.alpha) << "\n";
    out << "learning_rate=" << num(cfg.learning_rate) << "\n";
    out << "batch_size=" << cfg.batch_size << "\n";
    out << "max_epochs=" << cfg.max_epochs << "\n";
    out << "patience=" << cfg.patience << "\n";
    out << "metric=" << eval::metric_name(cfg.metric) << "\n";
    out << "positive_class=" << cfg.positive_class << "\n";
    out << "seeds=" << join(cfg.seeds) << "\n";
    out << "dropout_keep=" << num(cfg.dropout_keep) << "\n";
    out << "rulenet_dropout=" << (cfg.rulenet_dropout ? 1 : 0) << "\n";
    out << "gce_form=" << (cfg.gce_form == losses::GceForm::Zhang ? "zhang" : "literal") << "\n";
    out << "exemplar_term=" << (cfg.exemplar_term ? 1 : 0) << "\n";
    out << "classifier_hidden=" << join(cfg.classifier_hidden) << "\n";
    out << "rulenet_hidden=" << join(cfg.rulenet_hidden) << "\n";
    out << "joint_inference_eval=" << (cfg.joint_inference_eval ? 1 : 0) << "\n";
    out << "joint_inference_valid=" << (cfg.joint_inference_valid ? 1 : 0) << "\n";
    if (cfg.default_class) out << "default_class=" << *cfg.default_class << "\n";
    return out.str();
}

// Named hyperparameter presets (method-specific settings per dataset).
inline void apply_preset(train::TrainConfig& cfg, const std::string& name) {
    struct Preset {
        train::Method method;
        double gamma, q, lr;
        std::size_t bs;
    };
    static const std::map<std::string, Preset> presets = {
        {"question-implyloss", {train::Method::ImplyLoss, 0.1, 0.6, 0.0003, 32}},
        {"question-noise-tolerant", {train::Method::NoiseTolerant, 0.001, 0.9, 0.0003, 32}},
        {"question-posterior-reg", {train::Method::PosteriorReg, 0.001, 0.6, 0.0003, 32}},
        {"question-l-u-maj", {train::Method::LUMaj, 0.001, 0.6, 0.0003, 32}},
        {"question-only-l", {train::Method::OnlyL, 0.0, 0.6, 0.0003, 16}},
        {"mitr-implyloss", {train::Method::ImplyLoss, 0.1, 0.6, 0.0003, 64}},
        {"mitr-noise-tolerant", {train::Method::NoiseTolerant, 0.01, 0.6, 0.0003, 64}},
        {"mitr-posterior-reg", {train::Method::PosteriorReg, 0.01, 0.6, 0.0003, 64}},
        {"mitr-l-u-maj", {train::Method::LUMaj, 0.01, 0.6, 0.0003, 64}},
        {"mitr-only-l", {train::Method::OnlyL, 0.0, 0.6, 0.0003, 32}},
        {"youtube-implyloss", {train::Method::ImplyLoss, 0.2, 0.6, 0.0003, 32}},
        {"youtube-noise-tolerant", {train::Method::NoiseTolerant, 0.003, 0.6, 0.0003, 32}},
        {"youtube-posterior-reg", {train::Method::PosteriorReg, 0.1, 0.6, 0.0003, 32}},
        {"youtube-l-u-maj", {train::Method::LUMaj, 0.003, 0.6, 0.0003, 32}},
        {"youtube-only-l", {train::Method::OnlyL, 0.0, 0.6, 0.0003, 16}},
        {"sms-implyloss", {train::Method::ImplyLoss, 0.3, 0.6, 0.0001, 32}},
        {"sms-noise-tolerant", {train::Method::NoiseTolerant, 0.1, 0.6, 0.0001, 32}},
        {"sms-posterior-reg", {train::Method::PosteriorReg, 0.001, 0.6, 0.0001, 32}},
        {"sms-l-u-maj", {train::Method::LUMaj, 0.1, 0.1, 0.0001, 32}},
        {"sms-only-l", {train::Method::OnlyL, 0.0, 0.6, 0.0001, 16}},
        {"census-implyloss", {train::Method::ImplyLoss, 0.1, 0.6, 0.0003, 64}},
        {"census-noise-tolerant", {train::Method::NoiseTolerant, 0.5, 0.1, 0.0001, 64}},
        {"census-posterior-reg", {train::Method::PosteriorReg, 0.001, 0.6, 0.0003, 64}},
        {"census-l-u-maj", {train::Method::LUMaj, 0.5, 0.5, 0.0003, 64}},
        {"census-only-l", {train::Method::OnlyL, 0.0, 0.6, 0.0003, 16}},
    };
    const auto it = presets.find(name);
    if (it == presets.end()) throw std::invalid_argument("unknown preset '" + name + "'");
    cfg.method = it->second.method;
    cfg.gamma = it->second.gamma;
    cfg.q = it->second.q;
    cfg.learning_rate = it->second.lr;
    cfg.batch_size = it->second.bs;
    // dataset-wide architecture defaults
    if (name.rfind("census", 0) == 0) {
        cfg.classifier_hidden = {256, 256};
        cfg.rulenet_hidden = {256, 256};
    } else if (name.rfind("youtube", 0) == 0) {
        cfg.classifier_hidden = {};     // logistic-regression classifier
        cfg.rulenet_hidden = {32};      // single narrow hidden layer
        cfg.metric = eval::Metric::Accuracy;
    }
    if (name.rfind("sms", 0) == 0) cfg.metric = eval::Metric::F1Binary;
    if (name.rfind("mitr", 0) == 0) cfg.metric = eval::Metric::F1Macro;
}

}  // namespace rulex::config
