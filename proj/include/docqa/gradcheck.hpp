#pragma once

// Central finite-difference verification of tape gradients. Runs in
// double precision; the relative-error denominator is clamped at 1 so
// near-zero gradients are compared absolutely.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "docqa/autodiff.hpp"

namespace docqa::ad {

namespace detail {

// Central difference around one coordinate. A suspiciously large error is
// re-measured with a 16x smaller step and the smaller of the two is kept:
// a genuine gradient bug is step-size independent, while a piecewise
// boundary (relu kink, max-pool tie) inside the difference window is not.
template <typename Eval1D>
double central_difference_error(Eval1D eval, double x, double analytic, double eps,
                                const std::string& where) {
    auto measure = [&](double h) {
        double fp = eval(x + h);
        double fm = eval(x - h);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::runtime_error("grad_check: non-finite output perturbing " + where);
        }
        double numeric = (fp - fm) / (2 * h);
        return std::abs(analytic - numeric) /
               std::max({1.0, std::abs(analytic), std::abs(numeric)});
    };
    double err = measure(eps);
    if (err > 1e-7) err = std::min(err, measure(eps / 16.0));
    return err;
}

}  // namespace detail

// F: (Tape<double>&, Var<double>) -> Var<double> scalar.
// Returns the max over coordinates of |analytic - numeric| /
// max(1, |analytic|, |numeric|).
template <typename F>
double grad_check(F f, const Tensor<double>& point, double eps = 1e-5) {
    if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");

    Tensor<double> analytic;
    {
        Tape<double> tape;
        Var<double> x = tape.input(point);
        Var<double> y = f(tape, x);
        double y0 = y.val().item();
        if (!std::isfinite(y0)) {
            throw std::runtime_error("grad_check: non-finite output at base point");
        }
        tape.backward(y);
        analytic = x.grad();
    }

    auto eval = [&](const Tensor<double>& p) {
        Tape<double> tape(/*grad_enabled=*/false);
        Var<double> x = tape.input(p);
        double v = f(tape, x).val().item();
        return v;
    };

    double max_err = 0.0;
    Tensor<double> p = point;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        double a = analytic.data[i];
        double err = detail::central_difference_error(
            [&](double v) {
                double orig = p.data[i];
                p.data[i] = v;
                double out = eval(p);
                p.data[i] = orig;
                return out;
            },
            p.data[i], a, eps, "coordinate " + std::to_string(i));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

// Finite-difference check against parameter gradients. `build` runs the
// forward pass on a fresh tape (pulling weights in via tape.use) and
// returns the scalar output; every coordinate of every listed parameter is
// perturbed centrally.
template <typename BuildFn>
double grad_check_params(BuildFn build, const std::vector<Param<double>*>& params,
                         double eps = 1e-5) {
    for (Param<double>* p : params) p->zero_grad();
    {
        Tape<double> tape;
        Var<double> y = build(tape);
        if (!std::isfinite(y.val().item())) {
            throw std::runtime_error("grad_check_params: non-finite output at base point");
        }
        tape.backward(y);
        tape.accumulate_param_grads();
    }

    auto eval = [&]() {
        Tape<double> tape(/*grad_enabled=*/false);
        return build(tape).val().item();
    };

    double max_err = 0.0;
    for (Param<double>* p : params) {
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            double a = p->trainable ? p->grad.data[i] : 0.0;
            double err = detail::central_difference_error(
                [&](double v) {
                    double orig = p->value.data[i];
                    p->value.data[i] = v;
                    double out = eval();
                    p->value.data[i] = orig;
                    return out;
                },
                p->value.data[i], a, eps, p->name + "[" + std::to_string(i) + "]");
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace docqa::ad
