// Instance store: dense feature matrix plus optional raw text, raw tabular
// columns, gold labels, exemplar links and split tags.
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace rulex {

enum class Split { L, U, Validation, Test };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::L: return "L";
        case Split::U: return "U";
        case Split::Validation: return "valid";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split split_from_name(const std::string& s) {
    if (s == "L") return Split::L;
    if (s == "U") return Split::U;
    if (s == "valid") return Split::Validation;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split tag '" + s + "'");
}

class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t n, std::size_t d)
        : n_(n), d_(d), features_(n * d, 0.0), labels_(n, -1), exemplar_(n, -1),
          splits_(n, Split::U) {}

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }

    double feature(int i, std::size_t j) const { return features_[i * d_ + j]; }
    double& feature(int i, std::size_t j) { return features_[i * d_ + j]; }
    const std::vector<double>& feature_matrix() const { return features_; }
    std::vector<double> feature_row(int i) const {
        return {features_.begin() + i * d_, features_.begin() + (i + 1) * d_};
    }

    void set_features(std::vector<double> m, std::size_t d) {
        if (m.size() != n_ * d) throw std::invalid_argument("feature matrix size mismatch");
        features_ = std::move(m);
        d_ = d;
    }

    std::optional<int> gold_label(int i) const {
        return labels_[i] >= 0 ? std::optional<int>(labels_[i]) : std::nullopt;
    }
    void set_gold_label(int i, int label) { labels_[i] = label; }

    std::optional<int> exemplar_rule(int i) const {
        return exemplar_[i] >= 0 ? std::optional<int>(exemplar_[i]) : std::nullopt;
    }
    void set_exemplar_rule(int i, int rule) { exemplar_[i] = rule; }

    Split split(int i) const { return splits_[i]; }
    void set_split(int i, Split s) { splits_[i] = s; }

    std::vector<int> instances_in(Split s) const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(n_); ++i)
            if (splits_[i] == s) out.push_back(i);
        return out;
    }

    // Raw text (for regex / word-list rules)
    bool has_texts() const { return !texts_.empty(); }
    const std::string& text(int i) const {
        if (texts_.empty()) throw std::logic_error("dataset carries no raw text");
        return texts_[i];
    }
    void set_texts(std::vector<std::string> t) {
        if (t.size() != n_) throw std::invalid_argument("text count mismatch");
        texts_ = std::move(t);
    }

    // Raw tabular columns (for clause rules)
    void add_numeric_column(const std::string& name, std::vector<double> values) {
        if (values.size() != n_) throw std::invalid_argument("column length mismatch");
        column_index_[name] = {false, num_columns_.size()};
        num_columns_.push_back(std::move(values));
    }
    void add_categorical_column(const std::string& name, std::vector<std::string> values) {
        if (values.size() != n_) throw std::invalid_argument("column length mismatch");
        column_index_[name] = {true, cat_columns_.size()};
        cat_columns_.push_back(std::move(values));
    }
    bool has_column(const std::string& name) const { return column_index_.count(name) > 0; }
    double numeric_value(int i, const std::string& name) const {
        const auto& [is_cat, idx] = column_index_.at(name);
        if (is_cat) throw std::invalid_argument("column '" + name + "' is categorical");
        return num_columns_[idx][i];
    }
    const std::string& categorical_value(int i, const std::string& name) const {
        const auto& [is_cat, idx] = column_index_.at(name);
        if (!is_cat) throw std::invalid_argument("column '" + name + "' is numeric");
        return cat_columns_[idx][i];
    }

    int num_classes() const {
        int k = 0;
        for (int l : labels_) k = std::max(k, l + 1);
        return k;
    }

private:
    std::size_t n_ = 0, d_ = 0;
    std::vector<double> features_;       // row-major N x d
    std::vector<int> labels_;            // -1 = unlabeled
    std::vector<int> exemplar_;          // -1 = no link
    std::vector<Split> splits_;
    std::vector<std::string> texts_;
    std::unordered_map<std::string, std::pair<bool, std::size_t>> column_index_;
    std::vector<std::vector<double>> num_columns_;
    std::vector<std::vector<std::string>> cat_columns_;
};

}  // namespace rulex
