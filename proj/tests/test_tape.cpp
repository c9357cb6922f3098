#include "doctest.h"
#include "eow/tape.hpp"

#include <cmath>

using namespace eow;

namespace {

Array randn(std::vector<int> shape, Rng& rng) { return Array::randn(std::move(shape), rng); }

}  // namespace

TEST_CASE("matmul forward: hand example, identity, zero") {
    Tape t;
    const Var a = t.leaf(Array({2, 2}, {1, 2, 3, 4}));
    const Var b = t.leaf(Array({2, 2}, {0, 1, 1, 0}));
    const Var c = matmul(t, a, b);
    CHECK(t.value(c)[0] == 2);
    CHECK(t.value(c)[1] == 1);
    CHECK(t.value(c)[2] == 4);
    CHECK(t.value(c)[3] == 3);

    const Var eye = t.leaf(Array({2, 2}, {1, 0, 0, 1}));
    const Var id = matmul(t, eye, a);
    for (int i = 0; i < 4; ++i) CHECK(t.value(id)[std::size_t(i)] == t.value(a)[std::size_t(i)]);

    const Var zero = t.leaf(Array::zeros({2, 3}));
    const Var az = matmul(t, a, zero);
    for (std::size_t i = 0; i < 6; ++i) CHECK(t.value(az)[i] == 0.0);

    CHECK_THROWS_AS(matmul(t, a, t.leaf(Array::zeros({3, 2}))), ShapeError);
}

TEST_CASE("elementwise forward basics") {
    Tape t;
    const Var r = relu(t, t.leaf(Array({3}, {-1, 0, 2})));
    CHECK(t.value(r)[0] == 0);
    CHECK(t.value(r)[1] == 0);
    CHECK(t.value(r)[2] == 2);

    const Var s = add(t, t.leaf(Array({2}, {1, 2})), t.leaf(Array({2}, {3, 4})));
    CHECK(t.value(s)[0] == 4);
    CHECK(t.value(s)[1] == 6);

    const Var x = t.leaf(Array({4}, {0.3, 1.7, -0.2, 5.0}));
    const Var roundtrip = log_op(t, exp_op(t, x));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(t.value(roundtrip)[i] == doctest::Approx(t.value(x)[i]).epsilon(1e-14));

    CHECK_THROWS_AS(log_op(t, t.leaf(Array({2}, {1.0, 0.0}))), NumericalError);
    CHECK_THROWS_AS(add(t, t.leaf(Array({2}, {1, 2})), t.leaf(Array({3}, {1, 2, 3}))), ShapeError);
}

TEST_CASE("log_softmax: direct evaluation, shift invariance, normalization") {
    Tape t;
    const Var v = log_softmax(t, t.leaf(Array({3}, {0, 1, 2})));
    // logsumexp(0,1,2) = log(1 + e + e^2)
    const double lse = std::log(1.0 + std::exp(1.0) + std::exp(2.0));
    CHECK(t.value(v)[0] == doctest::Approx(0.0 - lse).epsilon(1e-15));
    CHECK(t.value(v)[1] == doctest::Approx(1.0 - lse).epsilon(1e-15));
    CHECK(t.value(v)[2] == doctest::Approx(2.0 - lse).epsilon(1e-15));

    // uniform logits, width 4 -> each entry ln(1/4)
    const Var u = log_softmax(t, t.leaf(Array({4}, {0.7, 0.7, 0.7, 0.7})));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(t.value(u)[i] == doctest::Approx(std::log(0.25)).epsilon(1e-15));

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Array logits = Array::randn({5}, rng, 3.0);
        Tape t2;
        const Var a = log_softmax(t2, t2.leaf(logits));
        Array shifted = logits;
        const double c = rng.normal() * 10.0;
        for (std::size_t i = 0; i < shifted.numel(); ++i) shifted.data()[i] += c;
        const Var b = log_softmax(t2, t2.leaf(shifted));
        double mass = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(std::abs(t2.value(a)[i] - t2.value(b)[i]) < 1e-12);
            mass += std::exp(t2.value(a)[i]);
        }
        CHECK(std::abs(mass - 1.0) < 1e-12);
    }
}

TEST_CASE("backward: sum gives ones, relu is flat left of zero") {
    Tape t;
    const Var x = t.leaf(Array({4}, {1.5, -2.0, 0.0, 3.0}));
    const Gradients g = backward(t, sum(t, x));
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.wrt(x)[i] == 1.0);

    Tape t2;
    const Var y = t2.leaf(Array({3}, {-1.0, 0.0, 2.0}));
    const Gradients g2 = backward(t2, sum(t2, relu(t2, y)));
    CHECK(g2.wrt(y)[0] == 0.0);  // x < 0: flat
    CHECK(g2.wrt(y)[1] == 0.0);  // subgradient at 0 pinned to 0
    CHECK(g2.wrt(y)[2] == 1.0);

    CHECK_THROWS_AS(backward(t, x), ShapeError);  // non-scalar root
}

TEST_CASE("gradient of root w.r.t. itself is 1") {
    Tape t;
    const Var x = t.leaf(Array::scalar(3.0));
    const Var y = mul(t, x, x);
    const Gradients g = backward(t, y);
    CHECK(g.wrt(y).scalar_value() == 1.0);
    CHECK(g.wrt(x).scalar_value() == 6.0);
}

// Property: every primitive op's backward matches central finite differences
// at random points, >= 20 seeds.
TEST_CASE("primitive gradients vs finite differences") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const Array x0 = randn({6}, rng);

        struct Case {
            const char* name;
            std::function<Var(Tape&, Var)> build;
        };
        const std::vector<Case> cases = {
            {"relu+mul", [](Tape& t, Var x) { return sum(t, mul(t, relu(t, x), x)); }},
            {"exp", [](Tape& t, Var x) { return sum(t, exp_op(t, x)); }},
            {"log(exp+1)",
             [](Tape& t, Var x) {
                 Var one = t.leaf(Array::scalar(1.0));
                 return sum(t, log_op(t, add(t, exp_op(t, x), one)));
             }},
            {"log_softmax",
             [](Tape& t, Var x) {
                 Var ls = log_softmax(t, x);
                 return sum(t, mul(t, ls, ls));
             }},
            {"logsumexp_cols", [](Tape& t, Var x) { return sum(t, logsumexp_cols(t, x, 6)); }},
            {"mean+scale", [](Tape& t, Var x) { return scale(t, mean(t, mul(t, x, x)), 2.5); }},
            {"negate", [](Tape& t, Var x) { return sum(t, mul(t, negate(t, x), x)); }},
            {"weighted_sum",
             [](Tape& t, Var x) {
                 return weighted_sum(t, mul(t, x, x), {0.1, -0.4, 2.0, 0.0, 1.0, -1.5});
             }},
        };

        for (const auto& c : cases) {
            Tape t;
            const Var x = t.leaf(x0);
            const Var root = c.build(t, x);
            const Gradients g = backward(t, root);
            const auto f = [&](const Array& probe) {
                Tape ft;
                const Var fx = ft.leaf(probe);
                return ft.value(c.build(ft, fx)).scalar_value();
            };
            const double err = finite_diff_max_rel_error(f, x0, g.wrt(x), 1e-5);
            INFO(c.name << " seed " << seed);
            CHECK(err < 1e-4);
        }

        // matmul + add_rows + gather + sum_cols through a 2-layer graph
        const Array w0 = randn({6, 5}, rng);
        const Array b0 = randn({5}, rng);
        const Array xb = randn({2, 6}, rng);
        Tape t;
        const Var xm = t.leaf(xb);
        const Var w = t.leaf(w0);
        const Var b = t.leaf(b0);
        const auto net = [&](Tape& tt, Var xx, Var ww, Var bb) {
            Var h = relu(tt, add_rows(tt, matmul(tt, xx, ww), bb));
            Var picked = gather_cols(tt, h, {1, 3});
            Var cols = sum_cols(tt, h, 3);
            return mean(tt, add(tt, picked, cols));
        };
        const Var root = net(t, xm, w, b);
        const Gradients g = backward(t, root);
        const auto f_w = [&](const Array& probe) {
            Tape ft;
            return ft.value(net(ft, ft.leaf(t.value(xm)), ft.leaf(probe), ft.leaf(b0)))
                .scalar_value();
        };
        CHECK(finite_diff_max_rel_error(f_w, w0, g.wrt(w), 1e-5) < 1e-4);
        const auto f_x = [&](const Array& probe) {
            Tape ft;
            return ft.value(net(ft, ft.leaf(probe), ft.leaf(w0), ft.leaf(b0))).scalar_value();
        };
        CHECK(finite_diff_max_rel_error(f_x, t.value(xm), g.wrt(xm), 1e-5) < 1e-4);
    }
}

TEST_CASE("finite_diff_check sanity: quadratic, constant") {
    // f(x) = x^2 at x = 3: analytic 2x
    const auto f = [](const Array& x) { return x[0] * x[0]; };
    CHECK(finite_diff_max_rel_error(f, Array::scalar(3.0), Array::scalar(6.0), 1e-5) < 1e-8);

    const auto consts = [](const Array&) { return 42.0; };
    CHECK(finite_diff_max_rel_error(consts, Array::scalar(1.0), Array::scalar(0.0), 1e-5) == 0.0);
}

TEST_CASE("tape replay is deterministic (bit-identical)") {
    auto run = [] {
        Rng rng(77);
        Tape t;
        const Var x = t.leaf(Array::randn({4, 6}, rng));
        const Var w = t.leaf(Array::randn({6, 3}, rng));
        const Var y = log_softmax(t, matmul(t, relu(t, x), w));
        const Gradients g = backward(t, mean(t, y));
        std::vector<double> out(t.value(y).data(), t.value(y).data() + t.value(y).numel());
        out.insert(out.end(), g.wrt(w).data(), g.wrt(w).data() + g.wrt(w).numel());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("non-finite op output raises NumericalError") {
    Tape t;
    // exp overflow -> Inf is an error state
    CHECK_THROWS_AS(exp_op(t, t.leaf(Array::scalar(1e4))), NumericalError);
}

TEST_CASE("tape truncate drops the suffix") {
    Tape t;
    const Var a = t.leaf(Array::scalar(1.0));
    const std::size_t mark = t.size();
    add(t, a, a);
    CHECK(t.size() == 2);
    t.truncate(mark);
    CHECK(t.size() == 1);
}
