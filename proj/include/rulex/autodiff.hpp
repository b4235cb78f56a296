// Reverse-mode automatic differentiation over dense 64-bit matrices.
// Just enough primitives for small MLPs and the training objectives in
// losses.hpp: matmul, bias add, ReLU, row softmax, sigmoid, log, pow,
// concat, gather, sum, affine. Single-threaded per Tape.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rulex::ad {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool operator==(const Shape&) const = default;
    std::size_t size() const { return rows * cols; }
    std::string str() const {
        return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
    }
};

class Tape;

// A node in the computation record. Value and gradient share the shape;
// the gradient accumulates across backward() calls until zero_grad().
struct Node {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void(Node&)> backprop;  // empty for leaves

    explicit Node(Shape s) : shape(s), val(s.size(), 0.0), grad(s.size(), 0.0) {}

    double& at(std::size_t r, std::size_t c) { return val[r * shape.cols + c]; }
    double at(std::size_t r, std::size_t c) const { return val[r * shape.cols + c]; }
    double& gat(std::size_t r, std::size_t c) { return grad[r * shape.cols + c]; }
};

// Handle to a node owned by a Tape.
class Tensor {
public:
    Tensor() = default;
    Tensor(Tape* tape, std::size_t idx) : tape_(tape), idx_(idx) {}

    Node& node() const;
    Shape shape() const { return node().shape; }
    std::size_t rows() const { return node().shape.rows; }
    std::size_t cols() const { return node().shape.cols; }
    const std::vector<double>& values() const { return node().val; }
    const std::vector<double>& gradient() const { return node().grad; }
    double value(std::size_t r = 0, std::size_t c = 0) const { return node().at(r, c); }
    double scalar() const;
    bool valid() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    std::size_t index() const { return idx_; }

private:
    Tape* tape_ = nullptr;
    std::size_t idx_ = 0;
};

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::invalid_argument(msg);
}

// Ordered record of nodes; construction order is the topological order.
class Tape {
public:
    Tensor leaf(Shape s, const std::vector<double>& values) {
        if (values.size() != s.size()) fail("leaf: value count does not match shape " + s.str());
        Tensor t = make(s);
        t.node().val = values;
        return t;
    }

    Tensor leaf(Shape s) { return make(s); }

    Tensor make(Shape s) {
        nodes_.push_back(std::make_unique<Node>(s));
        return Tensor(this, nodes_.size() - 1);
    }

    Node& node(std::size_t idx) { return *nodes_[idx]; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss)=1 and sweeps the record in reverse.
    // Gradients accumulate; callers reset leaves between steps.
    void backward(const Tensor& scalar_loss) {
        if (nodes_.empty()) fail("backward: empty computation record");
        if (scalar_loss.shape() != Shape{1, 1}) {
            fail("backward: loss must be scalar, got " + scalar_loss.shape().str());
        }
        // Sweep on zeroed adjoints so repeated calls add a fresh pass
        // instead of re-propagating what earlier calls accumulated.
        std::vector<std::vector<double>> stash(scalar_loss.index() + 1);
        for (std::size_t i = 0; i <= scalar_loss.index(); ++i) {
            stash[i] = std::move(nodes_[i]->grad);
            nodes_[i]->grad.assign(stash[i].size(), 0.0);
        }
        scalar_loss.node().grad[0] = 1.0;
        for (std::size_t i = scalar_loss.index() + 1; i-- > 0;) {
            Node& n = *nodes_[i];
            if (n.backprop) n.backprop(n);
        }
        for (std::size_t i = 0; i <= scalar_loss.index(); ++i) {
            Node& n = *nodes_[i];
            for (std::size_t k = 0; k < n.grad.size(); ++k) n.grad[k] += stash[i][k];
        }
    }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

inline Node& Tensor::node() const { return tape_->node(idx_); }
inline double Tensor::scalar() const {
    if (shape() != Shape{1, 1}) fail("scalar() on tensor of shape " + shape().str());
    return node().val[0];
}

namespace detail {
inline Tape& same_tape(const Tensor& a, const Tensor& b) {
    if (a.tape() != b.tape()) fail("operands belong to different tapes");
    return *a.tape();
}
}  // namespace detail

// C = A * B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.cols() != b.rows()) {
        fail("matmul: inner dimensions differ, " + a.shape().str() + " vs " + b.shape().str());
    }
    Tensor c = t.make({a.rows(), b.cols()});
    Node &na = a.node(), &nb = b.node(), &nc = c.node();
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = na.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) nc.at(i, j) += av * nb.at(p, j);
        }
    nc.backprop = [&na, &nb, n, k, m](Node& out) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += out.gat(i, j) * nb.at(p, j);
                na.gat(i, p) += acc;
            }
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += na.at(i, p) * out.gat(i, j);
                nb.gat(p, j) += acc;
            }
    };
    return c;
}

// Adds a (1,m) bias row to every row of x.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    Tape& t = detail::same_tape(x, bias);
    if (bias.rows() != 1 || bias.cols() != x.cols()) {
        fail("add_bias: bias " + bias.shape().str() + " does not broadcast over " + x.shape().str());
    }
    Tensor y = t.make(x.shape());
    Node &nx = x.node(), &nb = bias.node(), &ny = y.node();
    for (std::size_t i = 0; i < nx.shape.rows; ++i)
        for (std::size_t j = 0; j < nx.shape.cols; ++j) ny.at(i, j) = nx.at(i, j) + nb.at(0, j);
    ny.backprop = [&nx, &nb](Node& out) {
        for (std::size_t i = 0; i < out.shape.rows; ++i)
            for (std::size_t j = 0; j < out.shape.cols; ++j) {
                nx.gat(i, j) += out.gat(i, j);
                nb.gat(0, j) += out.gat(i, j);
            }
    };
    return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.shape() != b.shape()) fail("add: shapes differ, " + a.shape().str() + " vs " + b.shape().str());
    Tensor y = t.make(a.shape());
    Node &na = a.node(), &nb = b.node(), &ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = na.val[i] + nb.val[i];
    ny.backprop = [&na, &nb](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            na.grad[i] += out.grad[i];
            nb.grad[i] += out.grad[i];
        }
    };
    return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.shape() != b.shape()) fail("mul: shapes differ, " + a.shape().str() + " vs " + b.shape().str());
    Tensor y = t.make(a.shape());
    Node &na = a.node(), &nb = b.node(), &ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = na.val[i] * nb.val[i];
    ny.backprop = [&na, &nb](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            na.grad[i] += out.grad[i] * nb.val[i];
            nb.grad[i] += out.grad[i] * na.val[i];
        }
    };
    return y;
}

// y = scale * x + shift, elementwise with scalar coefficients.
inline Tensor affine(const Tensor& x, double scale, double shift = 0.0) {
    Tensor y = x.tape()->make(x.shape());
    Node &nx = x.node(), &ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = scale * nx.val[i] + shift;
    ny.backprop = [&nx, scale](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) nx.grad[i] += scale * out.grad[i];
    };
    return y;
}

inline Tensor relu(const Tensor& x) {
    Tensor y = x.tape()->make(x.shape());
    Node &nx = x.node(), &ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = nx.val[i] > 0.0 ? nx.val[i] : 0.0;
    ny.backprop = [&nx](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            if (nx.val[i] > 0.0) nx.grad[i] += out.grad[i];
    };
    return y;
}

inline Tensor sigmoid(const Tensor& x) {
    Tensor y = x.tape()->make(x.shape());
    Node &nx = x.node(), &ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i) {
        const double v = nx.val[i];
        ny.val[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    ny.backprop = [&nx, &ny](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            nx.grad[i] += out.grad[i] * ny.val[i] * (1.0 - ny.val[i]);
    };
    return y;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
    Tensor y = x.tape()->make(x.shape());
    Node &nx = x.node(), &ny = y.node();
    const std::size_t n = nx.shape.rows, m = nx.shape.cols;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = nx.at(i, 0);
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, nx.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) z += std::exp(nx.at(i, j) - mx);
        for (std::size_t j = 0; j < m; ++j) ny.at(i, j) = std::exp(nx.at(i, j) - mx) / z;
    }
    ny.backprop = [&nx, &ny, n, m](Node& out) {
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += out.gat(i, j) * ny.at(i, j);
            for (std::size_t j = 0; j < m; ++j)
                nx.gat(i, j) += ny.at(i, j) * (out.gat(i, j) - dot);
        }
    };
    return y;
}

// Natural log; rejects non-positive input, clamping is the caller's job.
inline Tensor log(const Tensor& x) {
    Node& nx = x.node();
    for (std::size_t i = 0; i < nx.val.size(); ++i)
        if (!(nx.val[i] > 0.0)) {
            fail("log: non-positive value " + std::to_string(nx.val[i]) +
                 " at flat index " + std::to_string(i) + "; clamp first");
        }
    Tensor y = x.tape()->make(x.shape());
    Node& ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = std::log(nx.val[i]);
    ny.backprop = [&nx](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) nx.grad[i] += out.grad[i] / nx.val[i];
    };
    return y;
}

// Elementwise x^q for positive x.
inline Tensor pow(const Tensor& x, double q) {
    Node& nx = x.node();
    for (std::size_t i = 0; i < nx.val.size(); ++i)
        if (!(nx.val[i] > 0.0)) fail("pow: non-positive base " + std::to_string(nx.val[i]));
    Tensor y = x.tape()->make(x.shape());
    Node& ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = std::pow(nx.val[i], q);
    ny.backprop = [&nx, q](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            nx.grad[i] += out.grad[i] * q * std::pow(nx.val[i], q - 1.0);
    };
    return y;
}

// Clamp to [lo, hi]; gradient passes through strictly inside the interval.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
    Tensor y = x.tape()->make(x.shape());
    Node &nx = x.node(), &ny = y.node();
    for (std::size_t i = 0; i < ny.val.size(); ++i)
        ny.val[i] = std::min(hi, std::max(lo, nx.val[i]));
    ny.backprop = [&nx, lo, hi](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            if (nx.val[i] > lo && nx.val[i] < hi) nx.grad[i] += out.grad[i];
    };
    return y;
}

// [A | B] side by side.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.rows() != b.rows()) fail("concat_cols: row counts differ");
    Tensor y = t.make({a.rows(), a.cols() + b.cols()});
    Node &na = a.node(), &nb = b.node(), &ny = y.node();
    const std::size_t ca = na.shape.cols, cb = nb.shape.cols;
    for (std::size_t i = 0; i < ny.shape.rows; ++i) {
        for (std::size_t j = 0; j < ca; ++j) ny.at(i, j) = na.at(i, j);
        for (std::size_t j = 0; j < cb; ++j) ny.at(i, ca + j) = nb.at(i, j);
    }
    ny.backprop = [&na, &nb, ca, cb](Node& out) {
        for (std::size_t i = 0; i < out.shape.rows; ++i) {
            for (std::size_t j = 0; j < ca; ++j) na.gat(i, j) += out.gat(i, j);
            for (std::size_t j = 0; j < cb; ++j) nb.gat(i, j) += out.gat(i, ca + j);
        }
    };
    return y;
}

// Selects rows by index (with repetition allowed); gradient scatter-adds.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    Node& nx = x.node();
    for (std::size_t r : rows)
        if (r >= nx.shape.rows) fail("gather_rows: index " + std::to_string(r) + " out of range");
    Tensor y = x.tape()->make({rows.size(), x.cols()});
    Node& ny = y.node();
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < nx.shape.cols; ++j) ny.at(i, j) = nx.at(rows[i], j);
    ny.backprop = [&nx, rows](Node& out) {
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < out.shape.cols; ++j)
                nx.gat(rows[i], j) += out.gat(i, j);
    };
    return y;
}

// Picks one element per row: y_i = x[i, cols[i]]. Output is (n,1).
inline Tensor gather_cols(const Tensor& x, const std::vector<std::size_t>& cols) {
    Node& nx = x.node();
    if (cols.size() != nx.shape.rows) fail("gather_cols: one index per row required");
    for (std::size_t c : cols)
        if (c >= nx.shape.cols) fail("gather_cols: column " + std::to_string(c) + " out of range");
    Tensor y = x.tape()->make({cols.size(), 1});
    Node& ny = y.node();
    for (std::size_t i = 0; i < cols.size(); ++i) ny.at(i, 0) = nx.at(i, cols[i]);
    ny.backprop = [&nx, cols](Node& out) {
        for (std::size_t i = 0; i < cols.size(); ++i) nx.gat(i, cols[i]) += out.gat(i, 0);
    };
    return y;
}

// Sum of all elements -> (1,1).
inline Tensor sum(const Tensor& x) {
    Tensor y = x.tape()->make({1, 1});
    Node &nx = x.node(), &ny = y.node();
    double acc = 0.0;
    for (double v : nx.val) acc += v;
    ny.val[0] = acc;
    ny.backprop = [&nx](Node& out) {
        for (double& g : nx.grad) g += out.grad[0];
    };
    return y;
}

inline Tensor scalar(Tape& t, double v) { return t.leaf({1, 1}, {v}); }

inline Tensor constant(Tape& t, Shape s, const std::vector<double>& values) {
    return t.leaf(s, values);
}

}  // namespace rulex::ad
