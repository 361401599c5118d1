#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "greeneyes/tensor.hpp"

using namespace greeneyes;

namespace {

// Deterministic value generator for property-style sweeps.
std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace

TEST_CASE("tensor creation and layout") {
    Tensor t = Tensor::create({2, 2}, {1, 2, 3, 4});
    CHECK(t.at(1, 0) == 3.0);  // row-major
    CHECK(t.at(0, 1) == 2.0);

    Tensor z = Tensor::create({3}, {0, 0, 0});
    CHECK(z.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(z[i] == 0.0);

    CHECK_THROWS_AS(Tensor::create({2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::create({2}, {1.0, std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Tensor::create({2}, {1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("unary maps") {
    CHECK(tanh(Tensor::scalar(0)).item() == 0.0);
    CHECK(sigmoid(Tensor::scalar(0)).item() == 0.5);
    CHECK(exp(Tensor::scalar(0)).item() == 1.0);
    CHECK(relu(Tensor::scalar(-3)).item() == 0.0);
    CHECK(relu(Tensor::scalar(2)).item() == 2.0);
    CHECK(neg(Tensor::scalar(2)).item() == -2.0);

    // exp beyond double range is an error, not Inf
    CHECK_THROWS_AS(exp(Tensor::scalar(1000.0)), std::runtime_error);
}

TEST_CASE("exp(tanh(x)) stays within [1/e, e] for any finite x") {
    // dense sampling over a wide range, plus the extremes
    std::vector<double> xs;
    for (double x = -1e6; x <= 1e6; x += 9999.0) xs.push_back(x);
    for (double x = -10; x <= 10; x += 0.01) xs.push_back(x);
    const double lo = std::exp(-1.0), hi = std::exp(1.0);
    for (double x : xs) {
        double y = exp(tanh(Tensor::scalar(x))).item();
        CHECK(y >= lo);
        CHECK(y <= hi);
    }
}

TEST_CASE("binary operations and broadcasting") {
    Tensor a = Tensor::create({2}, {1, 2});
    Tensor b = Tensor::create({2}, {3, 4});
    Tensor s = add(a, b);
    CHECK(s[0] == 4.0);
    CHECK(s[1] == 6.0);

    Tensor m = Tensor::create({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor zeroed = mul(m, Tensor::scalar(0));
    for (std::size_t i = 0; i < 6; ++i) CHECK(zeroed[i] == 0.0);

    // per-channel row vector against (T x C)
    Tensor rows = add(m, Tensor::create({3}, {10, 20, 30}));
    CHECK(rows.at(0, 0) == 11.0);
    CHECK(rows.at(1, 2) == 36.0);

    CHECK_THROWS_AS(div(Tensor::create({3}, {1, 2, 3}), Tensor::create({3}, {1, 0, 1})),
                    std::runtime_error);
    CHECK_THROWS_AS(add(Tensor::create({2}, {1, 2}), Tensor::create({3}, {1, 2, 3})),
                    std::invalid_argument);
}

TEST_CASE("matmul") {
    Tensor a = Tensor::create({1, 2}, {1, 2});
    Tensor b = Tensor::create({2, 1}, {3, 4});
    CHECK(matmul(a, b).item() == 11.0);  // hand-evaluated dot product

    Tensor sq = Tensor::create({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::create({2, 2}, {1, 0, 0, 1});
    Tensor prod = matmul(sq, eye);
    for (std::size_t i = 0; i < 4; ++i) CHECK(prod[i] == sq[i]);

    Tensor bad = Tensor::create({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(matmul(bad, bad), std::invalid_argument);
}

TEST_CASE("reductions") {
    CHECK(reduce_mean(Tensor::create({3}, {1, 2, 3})).item() == 2.0);
    CHECK(reduce_sum(Tensor::zeros({4})).item() == 0.0);
    CHECK(reduce_max(Tensor::create({3}, {-1, 5, 2})).item() == 5.0);

    Tensor m = Tensor::create({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor col_means = reduce_mean(m, 0);
    REQUIRE(col_means.shape() == Shape{3});
    CHECK(col_means[0] == 2.5);
    CHECK(col_means[2] == 4.5);
    Tensor row_sums = reduce_sum(m, 1);
    REQUIRE(row_sums.shape() == Shape{2});
    CHECK(row_sums[0] == 6.0);
    CHECK(row_sums[1] == 15.0);

    CHECK_THROWS_AS(reduce_sum(m, 2), std::invalid_argument);
}

TEST_CASE("softmax properties") {
    Tensor two = softmax(Tensor::create({2}, {0, 0}), 0);
    CHECK(two[0] == Catch::Approx(0.5).margin(1e-15));
    CHECK(two[1] == Catch::Approx(0.5).margin(1e-15));

    // direct formula oracle
    Tensor x = Tensor::create({3}, {1, 2, 3});
    Tensor sm = softmax(x, 0);
    double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::abs(sm[i] - std::exp(x[i]) / denom) < 1e-12);

    // sums to one and shift-invariant, random property sweep
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng() % 8;
        auto vals = random_values(rng, n, -5, 5);
        Tensor v = Tensor::create({n}, vals);
        Tensor s = softmax(v, 0);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += s[i];
        CHECK(std::abs(sum - 1.0) < 1e-12);

        double c = random_values(rng, 1, -3, 3)[0];
        for (auto& val : vals) val += c;
        Tensor shifted = softmax(Tensor::create({n}, vals), 0);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(shifted[i] - s[i]) < 1e-12);
    }

    // per-row softmax on rank 2
    Tensor m = Tensor::create({2, 2}, {0, 0, 1, 1});
    Tensor sm2 = softmax(m, 1);
    CHECK(sm2.at(0, 0) == Catch::Approx(0.5).margin(1e-15));
    CHECK(sm2.at(1, 1) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("backward on simple graphs") {
    SECTION("f(x) = x^2 at x=3 gives 6") {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::create({1}, {3}, true);
        Tensor loss = mul(x, x);
        Gradients g = tape.backward(loss);
        CHECK(g.at(x).item() == 6.0);
    }

    SECTION("f(x) = tanh(x) at 0 gives 1") {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::create({1}, {0}, true);
        Gradients g = tape.backward(tanh(x));
        CHECK(g.at(x).item() == 1.0);
    }

    SECTION("sum gradient is ones") {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::create({4}, {1, 2, 3, 4}, true);
        Gradients g = tape.backward(reduce_sum(x));
        for (std::size_t i = 0; i < 4; ++i) CHECK(g.at(x)[i] == 1.0);
    }

    SECTION("leaf off the loss path gets zero gradient") {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::create({1}, {2}, true);
        Tensor unused = Tensor::create({2}, {5, 6}, true);
        Gradients g = tape.backward(mul(x, x));
        CHECK(g.at(unused)[0] == 0.0);
        CHECK(g.at(unused)[1] == 0.0);
    }

    SECTION("loss must be scalar") {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::create({2}, {1, 2}, true);
        CHECK_THROWS_AS(tape.backward(mul(x, x)), std::invalid_argument);
    }
}

TEST_CASE("backward is linear in the loss") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto vals = random_values(rng, 6);
        auto run = [&](int which) {
            Tape tape;
            TapeScope scope(tape);
            Tensor x = Tensor::create({6}, vals, true);
            Tensor l1 = reduce_sum(mul(x, x));
            Tensor l2 = reduce_sum(sigmoid(x));
            Tensor loss = which == 0 ? l1 : which == 1 ? l2 : add(l1, l2);
            return tape.backward(loss).at(x);
        };
        Tensor g1 = run(0), g2 = run(1), gsum = run(2);
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(std::abs(gsum[i] - (g1[i] + g2[i])) < 1e-12);
    }
}

TEST_CASE("forward results are deterministic") {
    std::mt19937_64 rng(13);
    auto vals = random_values(rng, 12);
    Tensor x = Tensor::create({3, 4}, vals);
    Tensor w = Tensor::create({4, 3}, random_values(rng, 12));
    auto once = [&] { return softmax(matmul(tanh(x), sigmoid(w)), 1); };
    Tensor a = once(), b = once();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bit identical
}

TEST_CASE("grad_check on elementwise and composite graphs") {
    std::mt19937_64 rng(17);

    SECTION("sum is exact") {
        Tensor x = Tensor::create({5}, random_values(rng, 5));
        double err = grad_check([](const Tensor& t) { return reduce_sum(t); }, x);
        CHECK(err < 1e-9);
    }

    SECTION("sum of sigmoid") {
        Tensor x = Tensor::create({8}, random_values(rng, 8));
        double err = grad_check([](const Tensor& t) { return reduce_sum(sigmoid(t)); }, x);
        CHECK(err < 1e-6);
    }

    SECTION("every unary kind") {
        for (UnaryKind kind : {UnaryKind::Tanh, UnaryKind::Sigmoid, UnaryKind::Exp, UnaryKind::Relu,
                               UnaryKind::Neg}) {
            Tensor x = Tensor::create({6}, random_values(rng, 6, 0.1, 1.0));  // relu kink avoided
            double err = grad_check(
                [kind](const Tensor& t) { return reduce_sum(unary_map(kind, t)); }, x);
            CHECK(err < 1e-4);
        }
    }

    SECTION("every binary kind with broadcasting shapes") {
        Tensor other_full = Tensor::create({2, 3}, random_values(rng, 6, 0.5, 1.5));
        Tensor other_scalar = Tensor::create({1}, random_values(rng, 1, 0.5, 1.5));
        Tensor other_row = Tensor::create({3}, random_values(rng, 3, 0.5, 1.5));
        for (BinaryKind kind : {BinaryKind::Add, BinaryKind::Sub, BinaryKind::Mul, BinaryKind::Div}) {
            for (const Tensor* other : {&other_full, &other_scalar, &other_row}) {
                Tensor x = Tensor::create({2, 3}, random_values(rng, 6, 0.5, 1.5));
                // gradient w.r.t. the left operand
                double err = grad_check(
                    [kind, other](const Tensor& t) { return reduce_sum(binary_op(kind, t, *other)); }, x);
                CHECK(err < 1e-4);
                // gradient w.r.t. the right operand (broadcast side)
                Tensor rhs = Tensor::create(other->shape(), other->data());
                Tensor lhs = Tensor::create({2, 3}, random_values(rng, 6, 0.5, 1.5));
                err = grad_check(
                    [kind, &lhs](const Tensor& t) { return reduce_sum(binary_op(kind, lhs, t)); }, rhs);
                CHECK(err < 1e-4);
            }
        }
    }

    SECTION("matmul both sides") {
        Tensor a = Tensor::create({3, 4}, random_values(rng, 12));
        Tensor b = Tensor::create({4, 2}, random_values(rng, 8));
        double err_a = grad_check(
            [&b](const Tensor& t) { return reduce_sum(matmul(t, b)); }, a);
        double err_b = grad_check(
            [&a](const Tensor& t) { return reduce_sum(mul(matmul(a, t), matmul(a, t))); }, b);
        CHECK(err_a < 1e-6);
        CHECK(err_b < 1e-6);
    }

    SECTION("reductions and softmax") {
        Tensor x = Tensor::create({3, 4}, random_values(rng, 12));
        for (auto axis : {std::optional<std::size_t>{}, std::optional<std::size_t>{0},
                          std::optional<std::size_t>{1}}) {
            double err = grad_check(
                [axis](const Tensor& t) { return reduce_sum(mul(reduce_mean(t, axis), reduce_mean(t, axis))); },
                x);
            CHECK(err < 1e-4);
            err = grad_check(
                [axis](const Tensor& t) { return reduce_sum(mul(reduce_max(t, axis), reduce_max(t, axis))); },
                x);
            CHECK(err < 1e-4);
        }
        double err = grad_check(
            [](const Tensor& t) {
                Tensor s = softmax(t, 1);
                return reduce_sum(mul(s, s));
            },
            x);
        CHECK(err < 1e-4);
    }

    SECTION("structural ops") {
        Tensor x = Tensor::create({3, 4}, random_values(rng, 12));
        double err = grad_check(
            [](const Tensor& t) {
                Tensor r = reshape(t, {4, 3});
                Tensor tr = transpose(r);
                Tensor row = take_row(tr, 1);
                Tensor rev = reverse_time(tr);
                Tensor both = concat(row, take_row(rev, 0));
                return reduce_sum(mul(both, both));
            },
            x);
        CHECK(err < 1e-4);

        Tensor w = Tensor::create({3}, random_values(rng, 3));
        err = grad_check(
            [&w](const Tensor& t) { return reduce_sum(scale_rows(t, w)); }, x);
        CHECK(err < 1e-4);
        Tensor x2 = Tensor::create({3, 4}, random_values(rng, 12));
        err = grad_check(
            [&x2](const Tensor& t) { return reduce_sum(mul(scale_rows(x2, t), scale_rows(x2, t))); }, w);
        CHECK(err < 1e-4);
    }

    SECTION("random five-op composite graph matches finite differences") {
        for (int trial = 0; trial < 10; ++trial) {
            Tensor x = Tensor::create({4}, random_values(rng, 4));
            double err = grad_check(
                [](const Tensor& t) {
                    Tensor a = tanh(t);
                    Tensor b = sigmoid(add(a, t));
                    Tensor c = mul(b, a);
                    Tensor d = exp(reduce_mean(c));
                    return mul(d, d);
                },
                x);
            CHECK(err < 1e-6);
        }
    }
}

TEST_CASE("watching the same tensor twice reuses the leaf") {
    Tape tape;
    TapeScope scope(tape);
    Tensor x = Tensor::create({1}, {2}, true);
    Tensor x_again = x;
    tape.watch(x_again);
    CHECK(x_again.node() == x.node());
    Gradients g = tape.backward(add(mul(x, x), x_again));
    CHECK(g.at(x).item() == 5.0);  // d(x^2 + x) = 2x + 1
}
