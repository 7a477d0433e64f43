#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "emodyn/tensor.hpp"

namespace testutil {

/// Max relative error between tape gradients and central finite differences
/// over every entry of every parameter. `loss_fn` must rebuild the graph on
/// each call and return a scalar.
inline double grad_check(std::vector<emodyn::Tensor> params,
                         const std::function<emodyn::Tensor()>& loss_fn,
                         double h = 1e-5) {
    using emodyn::Tensor;
    std::vector<std::vector<double>> analytic;
    {
        emodyn::Tape tape;
        for (Tensor& p : params) {
            p.set_requires_grad(true);
            p.zero_grad();
        }
        Tensor loss = loss_fn();
        tape.backward(loss);
        for (Tensor& p : params) analytic.push_back(p.grad());
    }
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& values = params[pi].values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double keep = values[i];
            values[i] = keep + h;
            const double up = loss_fn().item();
            values[i] = keep - h;
            const double down = loss_fn().item();
            values[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[pi][i];
            const double rel = std::abs(a - fd) /
                               std::max({1.0, std::abs(a), std::abs(fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

inline emodyn::Tensor uniform_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    emodyn::Tensor t(std::move(shape));
    for (double& v : t.values()) v = dist(rng);
    return t;
}

/// Scalar probe: fixed-weight sum of all entries, so every output
/// coordinate contributes to the checked gradient. Seeded internally so
/// repeated calls (finite differencing re-runs the graph) use the same
/// weights.
inline emodyn::Tensor probe(const emodyn::Tensor& x, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    if (x.rank() == 1) return emodyn::dot(x, uniform_tensor({x.size()}, rng));
    emodyn::Tensor total;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        emodyn::Tensor term =
            emodyn::dot(emodyn::take_row(x, i), uniform_tensor({x.cols()}, rng));
        total = total.defined() ? emodyn::add(total, term) : term;
    }
    return total;
}

}  // namespace testutil
