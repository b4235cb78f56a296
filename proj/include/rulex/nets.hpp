// The two coupled networks: a classifier over K classes and a rule network
// shared across all rules that scores whether a rule's firing should be
// trusted on an instance. Both are plain MLPs with ReLU hidden layers.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulex/autodiff.hpp"

namespace rulex::nets {

struct Layer {
    std::size_t in = 0, out = 0;
    std::vector<double> weight;  // in x out, row-major
    std::vector<double> bias;    // out
};

struct Mlp {
    std::vector<Layer> layers;
    std::size_t input_dim() const { return layers.front().in; }
    std::size_t output_dim() const { return layers.back().out; }
};

// Scaled-uniform initialization, bound sqrt(6/(fan_in+fan_out)).
inline Mlp init_mlp(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
    if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least [in, out] widths");
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Layer layer;
        layer.in = widths[l];
        layer.out = widths[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        std::uniform_real_distribution<double> u(-bound, bound);
        layer.weight.resize(layer.in * layer.out);
        for (double& w : layer.weight) w = u(rng);
        layer.bias.assign(layer.out, 0.0);
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

struct ModelConfig {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::size_t num_rules = 0;
    std::vector<std::size_t> classifier_hidden = {512, 512};
    std::vector<std::size_t> rulenet_hidden = {512, 512};
    double dropout_keep = 0.8;
    bool rulenet_dropout = true;
};

struct ModelParams {
    ModelConfig config;
    std::uint64_t seed = 0;
    Mlp classifier;  // [d, hidden..., K]
    Mlp rulenet;     // [d+m, hidden..., 1]
};

inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p;
    p.config = cfg;
    p.seed = seed;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> cw = {cfg.feature_dim};
    cw.insert(cw.end(), cfg.classifier_hidden.begin(), cfg.classifier_hidden.end());
    cw.push_back(cfg.num_classes);
    p.classifier = init_mlp(cw, rng);
    std::vector<std::size_t> rw = {cfg.feature_dim + cfg.num_rules};
    rw.insert(rw.end(), cfg.rulenet_hidden.begin(), cfg.rulenet_hidden.end());
    rw.push_back(1);
    p.rulenet = init_mlp(rw, rng);
    return p;
}

// Tape-bound view of an MLP: leaf tensors whose gradients an optimizer
// reads back after backward().
struct BoundMlp {
    std::vector<ad::Tensor> weights;
    std::vector<ad::Tensor> biases;
};

inline BoundMlp bind(ad::Tape& tape, const Mlp& mlp) {
    BoundMlp b;
    for (const Layer& l : mlp.layers) {
        b.weights.push_back(tape.leaf({l.in, l.out}, l.weight));
        b.biases.push_back(tape.leaf({1, l.out}, l.bias));
    }
    return b;
}

enum class Mode { Train, Eval };

// Inverted dropout on a hidden activation: multiply by 0 or 1/keep.
inline ad::Tensor dropout(ad::Tape& tape, const ad::Tensor& x, double keep,
                          std::mt19937_64& rng) {
    std::bernoulli_distribution bern(keep);
    std::vector<double> mask(x.shape().size());
    for (double& m : mask) m = bern(rng) ? 1.0 / keep : 0.0;
    return ad::mul(x, tape.leaf(x.shape(), mask));
}

// Shared hidden stack: (linear -> ReLU -> optional dropout)* then linear.
inline ad::Tensor mlp_logits(ad::Tape& tape, const BoundMlp& net, ad::Tensor h,
                             Mode mode, double keep, bool use_dropout, std::mt19937_64* rng) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        h = ad::add_bias(ad::matmul(h, net.weights[l]), net.biases[l]);
        if (l + 1 < net.weights.size()) {
            h = ad::relu(h);
            if (mode == Mode::Train && use_dropout && keep < 1.0) {
                if (!rng) throw std::logic_error("train-mode dropout needs an RNG");
                h = dropout(tape, h, keep, *rng);
            }
        }
    }
    return h;
}

// P(y|x) for a batch: rows are distributions over the classes.
inline ad::Tensor classify_proba(ad::Tape& tape, const BoundMlp& net, const ModelConfig& cfg,
                                 const ad::Tensor& x, Mode mode = Mode::Eval,
                                 std::mt19937_64* rng = nullptr) {
    if (x.cols() != cfg.feature_dim)
        ad::fail("classify: feature width " + std::to_string(x.cols()) + " != " +
                 std::to_string(cfg.feature_dim));
    return ad::softmax_rows(mlp_logits(tape, net, x, mode, cfg.dropout_keep, true, rng));
}

// P(r_j=1|x) for a batch of (instance, rule) pairs. Row i of x pairs with
// rule_ids[i]; the rule id enters as a one-hot block appended to x.
inline ad::Tensor rule_proba(ad::Tape& tape, const BoundMlp& net, const ModelConfig& cfg,
                             const ad::Tensor& x, const std::vector<std::size_t>& rule_ids,
                             Mode mode = Mode::Eval, std::mt19937_64* rng = nullptr) {
    if (rule_ids.size() != x.rows()) ad::fail("rule_proba: one rule id per row required");
    for (std::size_t j : rule_ids)
        if (j >= cfg.num_rules)
            ad::fail("rule id " + std::to_string(j) + " >= rule count " +
                     std::to_string(cfg.num_rules));
    std::vector<double> onehot(x.rows() * cfg.num_rules, 0.0);
    for (std::size_t i = 0; i < rule_ids.size(); ++i)
        onehot[i * cfg.num_rules + rule_ids[i]] = 1.0;
    ad::Tensor input = ad::concat_cols(x, tape.leaf({x.rows(), cfg.num_rules}, onehot));
    return ad::sigmoid(
        mlp_logits(tape, net, input, mode, cfg.dropout_keep, cfg.rulenet_dropout, rng));
}

// ---- gradient plumbing ----

inline void zero_grads(BoundMlp& b) {
    for (auto& t : b.weights) std::fill(t.node().grad.begin(), t.node().grad.end(), 0.0);
    for (auto& t : b.biases) std::fill(t.node().grad.begin(), t.node().grad.end(), 0.0);
}

inline std::vector<double> flatten(const ModelParams& p) {
    std::vector<double> out;
    for (const Mlp* mlp : {&p.classifier, &p.rulenet})
        for (const Layer& l : mlp->layers) {
            out.insert(out.end(), l.weight.begin(), l.weight.end());
            out.insert(out.end(), l.bias.begin(), l.bias.end());
        }
    return out;
}

inline void unflatten(ModelParams& p, const std::vector<double>& flat) {
    std::size_t at = 0;
    for (Mlp* mlp : {&p.classifier, &p.rulenet})
        for (Layer& l : mlp->layers) {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), l.weight.size(), l.weight.begin());
            at += l.weight.size();
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), l.bias.size(), l.bias.begin());
            at += l.bias.size();
        }
    if (at != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

// Gradients in the same order as flatten(); bound nets must come from the
// same ModelParams.
inline std::vector<double> collect_grads(const BoundMlp& classifier, const BoundMlp& rulenet) {
    std::vector<double> out;
    for (const BoundMlp* b : {&classifier, &rulenet})
        for (std::size_t l = 0; l < b->weights.size(); ++l) {
            const auto& gw = b->weights[l].node().grad;
            out.insert(out.end(), gw.begin(), gw.end());
            const auto& gb = b->biases[l].node().grad;
            out.insert(out.end(), gb.begin(), gb.end());
        }
    return out;
}

// ---- checkpoint files: text header + flat row-major parameter list ----

inline void save_checkpoint(const std::string& path, const ModelParams& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "rulex-checkpoint 1\n";
    out << "seed " << p.seed << "\n";
    out << "feature_dim " << p.config.feature_dim << " num_classes " << p.config.num_classes
        << " num_rules " << p.config.num_rules << "\n";
    out << "classifier_hidden";
    for (std::size_t h : p.config.classifier_hidden) out << " " << h;
    out << "\nrulenet_hidden";
    for (std::size_t h : p.config.rulenet_hidden) out << " " << h;
    out << "\ndropout_keep " << p.config.dropout_keep << " rulenet_dropout "
        << (p.config.rulenet_dropout ? 1 : 0) << "\n";
    char buf[64];
    for (double v : flatten(p)) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << "\n";
    }
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "rulex-checkpoint" || version != 1)
        throw std::runtime_error(path + ": not a checkpoint file");
    ModelConfig cfg;
    std::uint64_t seed = 0;
    std::string key;
    in >> key >> seed;
    in >> key >> cfg.feature_dim >> key >> cfg.num_classes >> key >> cfg.num_rules;
    in >> key;  // classifier_hidden
    cfg.classifier_hidden.clear();
    std::string line;
    std::getline(in, line);
    {
        std::istringstream is(line);
        std::size_t h;
        while (is >> h) cfg.classifier_hidden.push_back(h);
    }
    in >> key;  // rulenet_hidden
    cfg.rulenet_hidden.clear();
    std::getline(in, line);
    {
        std::istringstream is(line);
        std::size_t h;
        while (is >> h) cfg.rulenet_hidden.push_back(h);
    }
    int rd = 1;
    in >> key >> cfg.dropout_keep >> key >> rd;
    cfg.rulenet_dropout = rd != 0;
    ModelParams p = init_params(cfg, seed);
    std::vector<double> flat = flatten(p);
    for (double& v : flat)
        if (!(in >> v)) throw std::runtime_error(path + ": truncated parameter list");
    unflatten(p, flat);
    return p;
}

}  // namespace rulex::nets
