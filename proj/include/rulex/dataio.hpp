// Plain-text dataset files, bag-of-words and tabular featurization, and the
// planted 2-D synthetic task used by the acceptance experiments.
//
// File formats (all whitespace-separated text):
//   features.txt   "N d" header, then N rows of d floats
//   labels.txt     "instance_id class_id" per line
//   split.txt      "instance_id {L|U|valid|test}" per line
//   coverage.txt   "instance_id rule_id" per line (sparse firings)
//   exemplars.txt  "instance_id rule_id" per line
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulex/dataset.hpp"
#include "rulex/rules.hpp"

namespace rulex::io {

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t line,
                                    const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

inline double parse_double(const std::string& tok, const std::string& path, std::size_t line) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        parse_fail(path, line, "non-numeric token '" + tok + "'");
    }
    if (pos != tok.size()) parse_fail(path, line, "non-numeric token '" + tok + "'");
    return v;
}

struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;  // row-major
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline Matrix load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) parse_fail(path, 1, "missing 'N d' header");
    std::istringstream hdr(line);
    long long n = -1, d = -1;
    if (!(hdr >> n >> d) || n < 0 || d <= 0) parse_fail(path, 1, "bad 'N d' header");
    Matrix m;
    m.rows = static_cast<std::size_t>(n);
    m.cols = static_cast<std::size_t>(d);
    m.data.reserve(m.rows * m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        if (!std::getline(in, line)) parse_fail(path, r + 2, "expected a feature row");
        std::istringstream row(line);
        std::string tok;
        std::size_t count = 0;
        while (row >> tok) {
            m.data.push_back(parse_double(tok, path, r + 2));
            ++count;
        }
        if (count != m.cols)
            parse_fail(path, r + 2, "expected " + std::to_string(m.cols) + " values, got " +
                                        std::to_string(count));
    }
    return m;
}

// %.17g keeps save->load bit-exact for doubles.
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void save_features(const std::string& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << m.rows << " " << m.cols << "\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (c) out << " ";
            out << fmt_double(m.at(r, c));
        }
        out << "\n";
    }
}

inline std::vector<std::pair<int, int>> load_int_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<int, int>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        long long a, b;
        if (!(is >> a >> b)) parse_fail(path, lineno, "expected two integers");
        out.push_back({static_cast<int>(a), static_cast<int>(b)});
    }
    return out;
}

inline void save_int_pairs(const std::string& path, const std::vector<std::pair<int, int>>& v) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& [a, b] : v) out << a << " " << b << "\n";
}

inline void load_labels_into(const std::string& path, Dataset& ds) {
    for (const auto& [i, lbl] : load_int_pairs(path)) ds.set_gold_label(i, lbl);
}

inline void load_exemplars_into(const std::string& path, Dataset& ds) {
    for (const auto& [i, j] : load_int_pairs(path)) ds.set_exemplar_rule(i, j);
}

inline void load_split_into(const std::string& path, Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        long long i;
        std::string tag;
        if (!(is >> i >> tag)) parse_fail(path, lineno, "expected 'instance_id split'");
        ds.set_split(static_cast<int>(i), split_from_name(tag));
    }
}

inline CoverageMatrix load_coverage(const std::string& path, std::size_t n_instances,
                                    std::size_t n_rules) {
    CoverageMatrix cov(n_instances, n_rules);
    for (const auto& [i, j] : load_int_pairs(path)) cov.add(i, j);
    return cov;
}

inline void save_coverage(const std::string& path, const CoverageMatrix& cov) {
    save_int_pairs(path, cov.sorted_pairs());
}

// ---- bag-of-words featurization ----

struct BowVocab {
    std::vector<std::string> grams;  // uni- and bi-grams, selection order
};

namespace detail {
inline std::vector<std::string> grams_of(const std::string& text) {
    const auto toks = rulex::detail::tokenize(text);
    std::vector<std::string> grams = toks;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) grams.push_back(toks[i] + " " + toks[i + 1]);
    return grams;
}
}  // namespace detail

// Vocabulary of the most frequent uni+bi-grams; ties broken lexically so
// the result is deterministic. Train texts must come from L∪U only.
inline BowVocab build_bow_vocab(const std::vector<std::string>& train_texts,
                                std::size_t vocab_size) {
    if (train_texts.empty()) throw std::invalid_argument("empty corpus");
    if (vocab_size == 0) throw std::invalid_argument("vocab_size must be positive");
    std::map<std::string, std::size_t> counts;
    for (const auto& t : train_texts)
        for (const auto& g : detail::grams_of(t)) ++counts[g];
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    BowVocab v;
    for (std::size_t i = 0; i < sorted.size() && i < vocab_size; ++i)
        v.grams.push_back(sorted[i].first);
    return v;
}

// Few-hot 0/1 rows; grams unseen at vocab-build time contribute nothing.
inline Matrix featurize_bow(const std::vector<std::string>& texts, const BowVocab& vocab) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < vocab.grams.size(); ++i) index[vocab.grams[i]] = i;
    Matrix m;
    m.rows = texts.size();
    m.cols = vocab.grams.size();
    m.data.assign(m.rows * m.cols, 0.0);
    for (std::size_t r = 0; r < texts.size(); ++r)
        for (const auto& g : detail::grams_of(texts[r])) {
            auto it = index.find(g);
            if (it != index.end()) m.data[r * m.cols + it->second] = 1.0;
        }
    return m;
}

inline void save_bow_vocab(const std::string& path, const BowVocab& v) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& g : v.grams) out << g << "\n";
}

inline BowVocab load_bow_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    BowVocab v;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) v.grams.push_back(line);
    return v;
}

// ---- tabular featurization ----

struct ColumnSpec {
    std::string name;
    bool categorical = false;
};

struct RecordTable {
    std::vector<ColumnSpec> schema;
    std::vector<std::vector<std::string>> rows;  // raw cell strings
};

struct TabularStats {
    // per real column: (mean, std); per categorical column: category list
    std::vector<std::pair<double, double>> moments;
    std::vector<std::vector<std::string>> categories;
};

// Means/stds and category sets from the given (train) row subset only.
inline TabularStats fit_tabular(const RecordTable& table, const std::vector<std::size_t>& train_rows) {
    TabularStats st;
    st.moments.resize(table.schema.size(), {0.0, 1.0});
    st.categories.resize(table.schema.size());
    for (std::size_t c = 0; c < table.schema.size(); ++c) {
        if (table.schema[c].categorical) {
            std::vector<std::string> cats;
            for (std::size_t r : train_rows) cats.push_back(table.rows[r][c]);
            std::sort(cats.begin(), cats.end());
            cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
            st.categories[c] = std::move(cats);
        } else {
            double sum = 0.0, sumsq = 0.0;
            for (std::size_t r : train_rows) {
                const double v = parse_double(table.rows[r][c], "column '" + table.schema[c].name + "'", r + 1);
                sum += v;
                sumsq += v * v;
            }
            const double n = static_cast<double>(train_rows.size());
            const double mean = n > 0 ? sum / n : 0.0;
            const double var = n > 0 ? std::max(0.0, sumsq / n - mean * mean) : 0.0;
            const double sd = std::sqrt(var);
            st.moments[c] = {mean, sd > 1e-12 ? sd : 1.0};
        }
    }
    return st;
}

// Categoricals one-hot over the fitted category sets (unknown category maps
// to an all-zero block); reals z-scored with the fitted moments.
inline Matrix featurize_tabular(const RecordTable& table, const TabularStats& st) {
    std::size_t width = 0;
    for (std::size_t c = 0; c < table.schema.size(); ++c)
        width += table.schema[c].categorical ? st.categories[c].size() : 1;
    Matrix m;
    m.rows = table.rows.size();
    m.cols = width;
    m.data.assign(m.rows * m.cols, 0.0);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::size_t off = 0;
        for (std::size_t c = 0; c < table.schema.size(); ++c) {
            if (table.schema[c].categorical) {
                const auto& cats = st.categories[c];
                auto it = std::lower_bound(cats.begin(), cats.end(), table.rows[r][c]);
                if (it != cats.end() && *it == table.rows[r][c])
                    m.data[r * m.cols + off + static_cast<std::size_t>(it - cats.begin())] = 1.0;
                off += cats.size();
            } else {
                const double v = parse_double(table.rows[r][c], "column '" + table.schema[c].name + "'", r + 1);
                const auto& [mean, sd] = st.moments[c];
                m.data[r * m.cols + off] = (v - mean) / sd;
                off += 1;
            }
        }
    }
    return m;
}

// ---- planted 2-D synthetic task ----

struct SyntheticConfig {
    std::size_t n_labeled = 40;
    std::size_t n_unlabeled = 2000;
    std::size_t n_valid = 200;
    std::size_t n_test = 500;
    std::size_t n_rules = 4;
    double beta = 2.0;  // box over-generalization factor, >= 1
};

struct SyntheticTruth {
    // class 1 iff x0 + x1 > 0 (diagonal boundary)
    std::vector<std::pair<int, int>> true_coverage;  // (instance, rule) with r*_ji = 1

    bool planted(int instance, int rule) const {
        return std::binary_search(true_coverage.begin(), true_coverage.end(),
                                  std::make_pair(instance, rule));
    }
};

struct SyntheticTask {
    Dataset dataset;
    RuleSet rules;
    SyntheticTruth truth;
};

// Uniform points in [-1,1]^2, class 1 iff x0 + x1 > 0. Each rule is an
// axis-aligned box centered on a labeled exemplar near the boundary; its
// side is sized to stay on the correct side at beta=1 and grows
// quadratically with beta, so beta>1 pushes it well across the boundary.
// The planted true-coverage bit is "inside the box AND on the correct
// side".
inline SyntheticTask gen_synthetic_2d(const SyntheticConfig& cfg, std::uint64_t seed) {
    if (cfg.beta < 1.0) throw std::invalid_argument("beta must be >= 1");
    if (cfg.n_rules > cfg.n_labeled)
        throw std::invalid_argument("more rules than labeled instances is infeasible");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    SyntheticTask task;
    const auto side = [](double x0, double x1) { return x0 + x1 > 0.0 ? 1 : 0; };

    const std::size_t n = cfg.n_labeled + cfg.n_unlabeled + cfg.n_valid + cfg.n_test;
    std::vector<double> xs(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[2 * i] = unif(rng);
        xs[2 * i + 1] = unif(rng);
    }

    Dataset ds(n, 2);
    ds.set_features(xs, 2);
    std::vector<double> col0(n), col1(n);
    for (std::size_t i = 0; i < n; ++i) {
        col0[i] = xs[2 * i];
        col1[i] = xs[2 * i + 1];
    }
    ds.add_numeric_column("x0", col0);
    ds.add_numeric_column("x1", col1);

    std::size_t at = 0;
    for (std::size_t k = 0; k < cfg.n_labeled; ++k, ++at) ds.set_split(static_cast<int>(at), Split::L);
    for (std::size_t k = 0; k < cfg.n_unlabeled; ++k, ++at) ds.set_split(static_cast<int>(at), Split::U);
    for (std::size_t k = 0; k < cfg.n_valid; ++k, ++at) ds.set_split(static_cast<int>(at), Split::Validation);
    for (std::size_t k = 0; k < cfg.n_test; ++k, ++at) ds.set_split(static_cast<int>(at), Split::Test);

    // gold labels everywhere; labels are synthetic truth, so U carries them
    // too (training touches labels only on the L split, evaluation on
    // valid/test; U gold supports rule-precision statistics)
    for (std::size_t i = 0; i < n; ++i)
        ds.set_gold_label(static_cast<int>(i), side(col0[i], col1[i]));

    // exemplars: L points at a moderate distance from the boundary,
    // alternating sides for class balance
    const auto boundary_dist = [&](int i) {
        return std::abs(col0[i] + col1[i]) / std::sqrt(2.0);
    };
    std::vector<int> pool;
    for (int i = 0; i < static_cast<int>(cfg.n_labeled); ++i)
        if (boundary_dist(i) > 0.12 && boundary_dist(i) < 0.3) pool.push_back(i);
    // spread the exemplars along the boundary so the boxes cover distinct
    // stretches of it: walk evenly spaced targets of the boundary-parallel
    // coordinate, preferring the side that keeps the classes balanced
    const auto along = [&](int i) { return (col0[i] - col1[i]) / std::sqrt(2.0); };
    std::sort(pool.begin(), pool.end(), [&](int a, int b) { return along(a) < along(b); });
    std::vector<int> exemplars;
    int want_side = 0;
    for (std::size_t j = 0; j < cfg.n_rules && !pool.empty(); ++j) {
        const double target =
            -1.0 + 2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(cfg.n_rules);
        std::ptrdiff_t best = -1;
        double best_cost = 0.0;
        for (std::size_t p = 0; p < pool.size(); ++p) {
            const double cost = std::abs(along(pool[p]) - target) +
                                (side(col0[pool[p]], col1[pool[p]]) == want_side ? 0.0 : 1.0);
            if (best < 0 || cost < best_cost) {
                best = static_cast<std::ptrdiff_t>(p);
                best_cost = cost;
            }
        }
        exemplars.push_back(pool[static_cast<std::size_t>(best)]);
        pool.erase(pool.begin() + best);
        want_side = 1 - want_side;
    }
    if (exemplars.size() < cfg.n_rules)
        throw std::invalid_argument("could not place " + std::to_string(cfg.n_rules) +
                                    " exemplars; labeled set too small or too close to the boundary");

    for (std::size_t j = 0; j < cfg.n_rules; ++j) {
        const int e = exemplars[j];
        // largest half-side keeping the box on the correct side at beta=1
        const double safe = boundary_dist(e) / std::sqrt(2.0) * 0.9;
        const double half = safe * cfg.beta * cfg.beta;
        Rule r;
        r.id = static_cast<int>(j);
        r.label = side(col0[e], col1[e]);
        r.kind = MatcherKind::Tabular;
        r.clauses = {
            {"x0", Comparator::Gt, col0[e] - half, "", false},
            {"x0", Comparator::Le, col0[e] + half, "", false},
            {"x1", Comparator::Gt, col1[e] - half, "", false},
            {"x1", Comparator::Le, col1[e] + half, "", false},
        };
        r.exemplar_instances = {e};
        task.rules.rules.push_back(std::move(r));
        ds.set_exemplar_rule(e, static_cast<int>(j));
    }

    const CoverageMatrix cov = apply_rules(task.rules, ds);
    for (const auto& [i, j] : cov.sorted_pairs())
        if (side(col0[i], col1[i]) == task.rules.at(static_cast<std::size_t>(j)).label)
            task.truth.true_coverage.push_back({i, j});

    task.dataset = std::move(ds);
    return task;
}

// True label of any synthetic instance (U included), from the boundary.
inline int synthetic_true_label(const SyntheticTruth&, const Dataset& ds, int i) {
    return ds.feature(i, 0) + ds.feature(i, 1) > 0.0 ? 1 : 0;
}

}  // namespace rulex::io
