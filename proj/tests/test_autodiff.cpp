#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rulex/autodiff.hpp"

using namespace rulex;

TEST_CASE("relu forward") {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({1, 2}, {-1.0, 2.0});
    ad::Tensor y = ad::relu(x);
    CHECK(y.value(0, 0) == 0.0);
    CHECK(y.value(0, 1) == 2.0);
}

TEST_CASE("softmax symmetry and normalization") {
    ad::Tape tape;
    ad::Tensor y = ad::softmax_rows(tape.leaf({1, 3}, {0.0, 0.0, 0.0}));
    CHECK(y.value(0, 0) == Catch::Approx(1.0 / 3.0).margin(1e-15));
    CHECK(y.value(0, 1) == Catch::Approx(1.0 / 3.0).margin(1e-15));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> vals(4 * 6);
    for (double& v : vals) v = u(rng);
    ad::Tensor s = ad::softmax_rows(tape.leaf({4, 6}, vals));
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 6; ++c) total += s.value(r, c);
        CHECK(total == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("sigmoid scalar value") {
    // 1/(1+e^{-0.8473}) = 0.69997...
    ad::Tape tape;
    ad::Tensor y = ad::sigmoid(tape.leaf({1, 1}, {0.8473}));
    CHECK(y.value() == Catch::Approx(0.7000).margin(1e-4));
    CHECK(y.value() > 0.0);
    CHECK(y.value() < 1.0);
}

TEST_CASE("shape mismatch names both shapes") {
    ad::Tape tape;
    ad::Tensor a = tape.leaf({2, 3});
    ad::Tensor b = tape.leaf({2, 3});
    REQUIRE_THROWS_WITH(ad::matmul(a, b),
                        Catch::Matchers::ContainsSubstring("(2x3)") &&
                            Catch::Matchers::ContainsSubstring("(2x3)"));
}

TEST_CASE("log rejects non-positive input") {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({1, 2}, {0.5, 0.0});
    REQUIRE_THROWS_AS(ad::log(x), std::invalid_argument);
}

TEST_CASE("backward of sum gives all-ones gradient") {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({2, 3}, {1, 2, 3, 4, 5, 6});
    tape.backward(ad::sum(x));
    for (double g : x.gradient()) CHECK(g == 1.0);
}

TEST_CASE("backward of sum of squares") {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({1, 1}, {3.0});
    tape.backward(ad::sum(ad::mul(x, x)));
    CHECK(x.gradient()[0] == 6.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({2, 2}, {1, 2, 3, 4});
    REQUIRE_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("gradient accumulates across backward calls") {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({1, 1}, {2.0});
    ad::Tensor loss = ad::sum(ad::affine(x, 3.0));
    tape.backward(loss);
    tape.backward(loss);
    CHECK(x.gradient()[0] == 6.0);
}

namespace {

// Finite-difference oracle for a 5 -> 8 -> 3 MLP with softmax cross entropy.
struct MlpFixture {
    std::vector<double> w1, b1, w2, b2, input;
    std::vector<std::size_t> labels;
    static constexpr std::size_t n = 4, d = 5, h = 8, k = 3;

    explicit MlpFixture(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const auto fill = [&](std::vector<double>& v, std::size_t size) {
            v.resize(size);
            for (double& x : v) x = u(rng);
        };
        fill(w1, d * h);
        fill(b1, h);
        fill(w2, h * k);
        fill(b2, k);
        fill(input, n * d);
        std::uniform_int_distribution<std::size_t> lbl(0, k - 1);
        labels.resize(n);
        for (auto& l : labels) l = lbl(rng);
    }

    double loss_at(const std::vector<const std::vector<double>*>& params,
                   std::vector<std::vector<double>>* grads_out = nullptr) const {
        ad::Tape tape;
        ad::Tensor tw1 = tape.leaf({d, h}, *params[0]);
        ad::Tensor tb1 = tape.leaf({1, h}, *params[1]);
        ad::Tensor tw2 = tape.leaf({h, k}, *params[2]);
        ad::Tensor tb2 = tape.leaf({1, k}, *params[3]);
        ad::Tensor x = tape.leaf({n, d}, input);
        ad::Tensor hid = ad::relu(ad::add_bias(ad::matmul(x, tw1), tb1));
        ad::Tensor proba = ad::softmax_rows(ad::add_bias(ad::matmul(hid, tw2), tb2));
        ad::Tensor loss =
            ad::affine(ad::sum(ad::log(ad::clamp(ad::gather_cols(proba, labels), 1e-12, 1.0))), -1.0);
        if (grads_out) {
            tape.backward(loss);
            *grads_out = {tw1.gradient(), tb1.gradient(), tw2.gradient(), tb2.gradient()};
        }
        return loss.scalar();
    }
};

}  // namespace

TEST_CASE("MLP gradient matches central finite differences") {
    const MlpFixture fx(42);
    std::vector<std::vector<double>> params = {fx.w1, fx.b1, fx.w2, fx.b2};
    std::vector<const std::vector<double>*> view;
    for (const auto& p : params) view.push_back(&p);

    std::vector<std::vector<double>> grads;
    fx.loss_at(view, &grads);

    const double h = 1e-5;
    double max_rel_err = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            std::vector<double> bumped = params[p];
            bumped[i] += h;
            std::vector<const std::vector<double>*> vp = view;
            vp[p] = &bumped;
            const double up = fx.loss_at(vp);
            bumped[i] -= 2.0 * h;
            const double down = fx.loss_at(vp);
            const double fd = (up - down) / (2.0 * h);
            const double an = grads[p][i];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    CHECK(max_rel_err < 1e-4);
}

TEST_CASE("determinism: identical inputs yield bit-identical results") {
    const MlpFixture fx(7);
    std::vector<std::vector<double>> params = {fx.w1, fx.b1, fx.w2, fx.b2};
    std::vector<const std::vector<double>*> view;
    for (const auto& p : params) view.push_back(&p);
    std::vector<std::vector<double>> g1, g2;
    const double l1 = fx.loss_at(view, &g1);
    const double l2 = fx.loss_at(view, &g2);
    CHECK(l1 == l2);
    for (std::size_t p = 0; p < 4; ++p) CHECK(g1[p] == g2[p]);
}

TEST_CASE("gather and concat gradients scatter correctly") {
    ad::Tape tape;
    ad::Tensor a = tape.leaf({2, 2}, {1, 2, 3, 4});
    ad::Tensor b = tape.leaf({2, 1}, {5, 6});
    ad::Tensor cat = ad::concat_cols(a, b);
    ad::Tensor picked = ad::gather_rows(cat, {1, 1, 0});
    tape.backward(ad::sum(picked));
    CHECK(a.gradient() == std::vector<double>{1, 1, 2, 2});
    CHECK(b.gradient() == std::vector<double>{1, 2});
}
