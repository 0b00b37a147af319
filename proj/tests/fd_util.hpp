#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "recsm/graph.hpp"
#include "recsm/tensor.hpp"

namespace recsm::testutil {

// Central finite-difference check of a scalar-valued graph builder against
// analytic gradients w.r.t. every coordinate of every input tensor.
// Returns the max relative error.
template <class BuildFn>
double fd_check(std::vector<Tensor> inputs, BuildFn build, double h = 1e-6) {
    std::vector<Tensor> grads;
    grads.reserve(inputs.size());
    for (const auto& t : inputs) grads.push_back(Tensor::zeros(t.shape()));

    {
        Graph g;
        std::vector<Graph::Var> vars;
        for (size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.param(inputs[i], &grads[i]));
        Graph::Var loss = build(g, vars);
        g.backward(loss);
    }

    auto eval = [&](const std::vector<Tensor>& in) {
        Graph g;
        std::vector<Graph::Var> vars;
        for (const auto& t : in) vars.push_back(g.input(t));
        return g.val(build(g, vars))[0];
    };

    double max_rel = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        for (std::int64_t j = 0; j < inputs[i].size(); ++j) {
            const double orig = inputs[i][j];
            inputs[i][j] = orig + h;
            const double fp = eval(inputs);
            inputs[i][j] = orig - h;
            const double fm = eval(inputs);
            inputs[i][j] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = grads[i][j];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
            max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
        }
    }
    return max_rel;
}

// Same as fd_check but probes only a random subset of coordinates; used
// where a full sweep would be too slow.
template <class BuildFn>
double fd_check_subset(std::vector<Tensor> inputs, BuildFn build, int probes, std::uint64_t seed,
                       double h = 1e-6) {
    std::vector<Tensor> grads;
    grads.reserve(inputs.size());
    for (const auto& t : inputs) grads.push_back(Tensor::zeros(t.shape()));
    {
        Graph g;
        std::vector<Graph::Var> vars;
        for (size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.param(inputs[i], &grads[i]));
        g.backward(build(g, vars));
    }
    auto eval = [&](const std::vector<Tensor>& in) {
        Graph g;
        std::vector<Graph::Var> vars;
        for (const auto& t : in) vars.push_back(g.input(t));
        return g.val(build(g, vars))[0];
    };
    std::mt19937_64 rng(seed);
    double max_rel = 0.0;
    for (int k = 0; k < probes; ++k) {
        const size_t i = rng() % inputs.size();
        const std::int64_t j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(inputs[i].size()));
        const double orig = inputs[i][j];
        inputs[i][j] = orig + h;
        const double fp = eval(inputs);
        inputs[i][j] = orig - h;
        const double fm = eval(inputs);
        inputs[i][j] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = grads[i][j];
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
        max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
    }
    return max_rel;
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

// Reduces any tensor to a scalar with fixed quasi-random weights so every
// output coordinate influences the checked loss.
inline Graph::Var weighted_sum(Graph& g, Graph::Var x) {
    const Tensor& v = g.val(x);
    Tensor w(v.shape());
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.7 * std::sin(0.37 * static_cast<double>(i + 1));
    return g.sum(g.mul(x, g.input(w)));
}

}  // namespace recsm::testutil
