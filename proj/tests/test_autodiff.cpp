#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "docqa/autodiff.hpp"
#include "docqa/gradcheck.hpp"

using namespace docqa::ad;
using Catch::Approx;

namespace {

std::mt19937_64 rng(20240811);

Tensor<double> rand_tensor(int r, int c, double lo = -2.0, double hi = 2.0) {
    Tensor<double> t(r, c);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

// Keeps coordinates away from zero so relu/max kinks do not sit inside the
// finite-difference window.
Tensor<double> rand_tensor_off_zero(int r, int c) {
    Tensor<double> t = rand_tensor(r, c);
    for (auto& v : t.data) {
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    }
    return t;
}

// Random linear functional of op(x) makes the objective scalar while probing
// the whole Jacobian.
template <typename OpFn>
double check_op(OpFn op, const Tensor<double>& point) {
    Tensor<double> r;
    bool have_r = false;
    auto f = [&](Tape<double>& tape, Var<double> x) {
        Var<double> y = op(tape, x);
        if (!have_r) {
            r = rand_tensor(y.rows(), y.cols(), -1.0, 1.0);
            have_r = true;
        }
        return sum_all(mul(y, tape.constant(r)));
    };
    return grad_check(f, point);
}

}  // namespace

TEST_CASE("softmax_rows forward examples") {
    Tape<double> t;
    auto x = t.input(Tensor<double>(1, 3, {0, 0, 0}));
    auto p = softmax_rows(x);
    for (int j = 0; j < 3; ++j) CHECK(p.val().at(0, j) == Approx(1.0 / 3));

    auto big = t.input(Tensor<double>(1, 2, {1000, 1001}));
    auto q = softmax_rows(big);
    CHECK(std::isfinite(q.val().at(0, 0)));
    CHECK(q.val().at(0, 0) == Approx(0.2689414).epsilon(1e-5));
    CHECK(q.val().at(0, 1) == Approx(0.7310586).epsilon(1e-5));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    for (int it = 0; it < 200; ++it) {
        Tensor<double> x = rand_tensor(3, 7, -5, 5);
        Tape<double> t;
        auto p = softmax_rows(t.input(x));
        for (int i = 0; i < 3; ++i) {
            double s = 0;
            for (int j = 0; j < 7; ++j) s += p.val().at(i, j);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
        double c = (it % 2 == 0) ? 13.5 : -42.25;
        Tensor<double> shifted = x;
        for (auto& v : shifted.data) v += c;
        auto p2 = softmax_rows(t.input(shifted));
        for (std::size_t i = 0; i < p.val().data.size(); ++i) {
            CHECK(std::abs(p.val().data[i] - p2.val().data[i]) < 1e-12);
        }
    }
}

TEST_CASE("masked softmax conventions") {
    Tape<double> t;
    Tensor<double> mask(2, 3, {0, 1, 1, 0, 0, 0});
    auto p = softmax_rows(t.input(Tensor<double>(2, 3, {5, 1, 1, 9, 9, 9})), &mask);
    CHECK(p.val().at(0, 0) == 0.0);
    CHECK(p.val().at(0, 1) == Approx(0.5));
    CHECK(p.val().at(0, 2) == Approx(0.5));
    // fully masked row is all zeros
    for (int j = 0; j < 3; ++j) CHECK(p.val().at(1, j) == 0.0);
}

TEST_CASE("relu backward at the example point") {
    Tape<double> t;
    auto x = t.input(Tensor<double>(1, 2, {-1, 2}));
    auto y = sum_all(relu(x));
    t.backward(y);
    CHECK(x.grad().at(0, 0) == 0.0);
    CHECK(x.grad().at(0, 1) == 1.0);
}

TEST_CASE("grad_check closed-form example") {
    auto f = [](Tape<double>& t, Var<double> x) { return sum_all(mul(x, x)); };
    Tensor<double> p(3, 1, {1, 2, 3});
    CHECK(grad_check(f, p) < 1e-8);

    Tape<double> t;
    auto x = t.input(p);
    auto y = sum_all(mul(x, x));
    t.backward(y);
    CHECK(x.grad().at(0, 0) == Approx(2));
    CHECK(x.grad().at(1, 0) == Approx(4));
    CHECK(x.grad().at(2, 0) == Approx(6));
}

TEST_CASE("grad_check softmax-then-pick") {
    auto f = [](Tape<double>& t, Var<double> x) {
        auto p = softmax_rows(reshape(x, 1, 5));
        return sum_all(gather_rows(reshape(p, 5, 1), {2}));
    };
    CHECK(grad_check(f, rand_tensor(5, 1)) < 1e-6);
}

TEST_CASE("grad_check constant function") {
    auto f = [](Tape<double>& t, Var<double> x) { return t.input(Tensor<double>::scalar(3.0)); };
    CHECK(grad_check(f, rand_tensor(4, 1)) == 0.0);
}

TEST_CASE("shape mismatches raise with both shapes") {
    Tape<double> t;
    auto a = t.input(rand_tensor(2, 3));
    auto b = t.input(rand_tensor(4, 5));
    CHECK_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("[2x3]") &&
                                        Catch::Matchers::ContainsSubstring("[4x5]"));
    CHECK_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("[2x3]") &&
                                     Catch::Matchers::ContainsSubstring("[4x5]"));
}

TEST_CASE("every primitive passes grad_check at random points") {
    const int kPoints = 100;
    const double kTol = 1e-5;

    SECTION("matmul") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                auto a = reshape(slice_rows(x, 0, 6), 2, 3);
                auto b = reshape(slice_rows(x, 6, 18), 3, 4);
                return matmul(a, b);
            };
            CHECK(check_op(op, rand_tensor(18, 1)) < kTol);
        }
    }
    SECTION("add/sub/mul") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                auto a = reshape(slice_rows(x, 0, 6), 2, 3);
                auto b = reshape(slice_rows(x, 6, 12), 2, 3);
                return add(sub(a, b), mul(a, b));
            };
            CHECK(check_op(op, rand_tensor(12, 1)) < kTol);
        }
    }
    SECTION("row/col broadcasts") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                auto m = reshape(slice_rows(x, 0, 6), 2, 3);
                auto v = reshape(slice_rows(x, 6, 9), 1, 3);
                auto u = reshape(slice_rows(x, 9, 11), 2, 1);
                return add_colvec(mul_rowvec(add_rowvec(m, v), v), u);
            };
            CHECK(check_op(op, rand_tensor(11, 1)) < kTol);
        }
    }
    SECTION("unary activations") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                return add(tanh_op(x), add(sigmoid(x), softplus(x)));
            };
            CHECK(check_op(op, rand_tensor(3, 4)) < kTol);
            auto oprelu = [](Tape<double>& t, Var<double> x) { return relu(x); };
            CHECK(check_op(oprelu, rand_tensor_off_zero(3, 4)) < kTol);
        }
    }
    SECTION("exp and log") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) { return exp_op(x); };
            CHECK(check_op(op, rand_tensor(2, 3)) < kTol);
            auto oplog = [](Tape<double>& t, Var<double> x) { return log_op(x); };
            CHECK(check_op(oplog, rand_tensor(2, 3, 0.5, 3.0)) < kTol);
        }
    }
    SECTION("concat and slices") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                auto a = reshape(slice_rows(x, 0, 6), 2, 3);
                auto b = reshape(slice_rows(x, 6, 12), 2, 3);
                auto rows = concat_rows<double>({a, b});  // [4x3]
                auto cols = concat_cols<double>({a, b});  // [2x6]
                auto v1 = sum_all(mul(reverse_rows(rows), rows));
                auto v2 = sum_all(mul(slice_cols(cols, 1, 5), slice_cols(cols, 0, 4)));
                auto v3 = sum_all(slice_rows(rows, 1, 3));
                return add(add(v1, v2), v3);
            };
            CHECK(check_op(op, rand_tensor(12, 1)) < kTol);
        }
    }
    SECTION("transpose/reshape/scale") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                return scale(transpose(reshape(x, 3, 4)), 2.5);
            };
            CHECK(check_op(op, rand_tensor(12, 1)) < kTol);
        }
    }
    SECTION("max_over_axis") {
        for (int i = 0; i < kPoints; ++i) {
            auto op0 = [](Tape<double>& t, Var<double> x) { return max_over_axis(x, 0); };
            auto op1 = [](Tape<double>& t, Var<double> x) { return max_over_axis(x, 1); };
            CHECK(check_op(op0, rand_tensor(4, 3)) < kTol);
            CHECK(check_op(op1, rand_tensor(4, 3)) < kTol);
        }
    }
    SECTION("softmax_rows") {
        Tensor<double> mask(3, 4);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) mask.at(i, j) = (i == j) ? 0.0 : 1.0;
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) { return softmax_rows(x); };
            CHECK(check_op(op, rand_tensor(3, 4)) < kTol);
            auto opm = [&mask](Tape<double>& t, Var<double> x) { return softmax_rows(x, &mask); };
            CHECK(check_op(opm, rand_tensor(3, 4)) < kTol);
        }
    }
    SECTION("logsumexp and sum_all") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                return add(logsumexp(x), sum_all(x));
            };
            CHECK(check_op(op, rand_tensor(5, 1, -8, 8)) < kTol);
        }
    }
    SECTION("gather_rows") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) {
                return gather_rows(x, {0, 2, 2, 1});
            };
            CHECK(check_op(op, rand_tensor(4, 3)) < kTol);
        }
    }
    SECTION("im2col_1d") {
        for (int i = 0; i < kPoints; ++i) {
            auto op = [](Tape<double>& t, Var<double> x) { return im2col_1d(x, 3); };
            CHECK(check_op(op, rand_tensor(5, 2)) < kTol);
            // shorter than the window: zero padded
            CHECK(check_op(op, rand_tensor(2, 2)) < kTol);
        }
    }
}

TEST_CASE("logsumexp is stable for large inputs") {
    Tape<double> t;
    auto x = t.input(Tensor<double>(3, 1, {1000, 1001, 999}));
    auto y = logsumexp(x);
    CHECK(std::isfinite(y.val().item()));
    CHECK(y.val().item() == Approx(1001 + std::log(std::exp(-1.0) + 1 + std::exp(-2.0))));
}

TEST_CASE("parameters accumulate gradients across tapes") {
    Param<double> w("w", Tensor<double>(2, 1, {1.0, -1.0}));
    for (int rep = 0; rep < 2; ++rep) {
        Tape<double> t;
        auto v = t.use(w);
        CHECK(t.use(w).id() == v.id());  // memoized
        auto loss = sum_all(mul(v, v));
        t.backward(loss);
        t.accumulate_param_grads();
    }
    CHECK(w.grad.at(0, 0) == Approx(4.0));   // 2 * 2x at x=1
    CHECK(w.grad.at(1, 0) == Approx(-4.0));

    // grad-disabled tapes leave parameters untouched
    w.zero_grad();
    Tape<double> ev(/*grad_enabled=*/false);
    auto v = ev.use(w);
    CHECK(v.val().at(0, 0) == 1.0);
    CHECK(w.grad.at(0, 0) == 0.0);
}
