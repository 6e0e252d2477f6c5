#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "bner/rng.hpp"
#include "bner/tensor.hpp"

namespace bner::testutil {

inline TensorPtr random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                               double hi = 1.0, bool requires_grad = true) {
    auto t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences against the analytic backward pass. `build`
// must rebuild the graph from the leaves' current data and return a scalar;
// it is the test's independent oracle hook (the graph is reconstructed from
// scratch for every perturbed evaluation).
inline double fd_max_rel_err(const std::vector<TensorPtr>& leaves,
                             const std::function<TensorPtr(Graph&)>& build, double eps = 1e-5,
                             double denom_floor = 1e-2) {
    Graph g;
    auto loss = build(g);
    g.backward(loss);

    double worst = 0.0;
    for (const auto& leaf : leaves) {
        const auto& analytic = g.leaf_grad(leaf);
        for (int i = 0; i < leaf->size(); ++i) {
            double a = analytic.empty() ? 0.0 : analytic[static_cast<std::size_t>(i)];
            double saved = leaf->at(i);
            leaf->at(i) = saved + eps;
            Graph gp;
            double up = build(gp)->at(0);
            leaf->at(i) = saved - eps;
            Graph gm;
            double down = build(gm)->at(0);
            leaf->at(i) = saved;
            double numeric = (up - down) / (2.0 * eps);
            double err = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), denom_floor});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// Fixed projection weights: drawn once per test case so that every rebuilt
// graph reduces the op output to the same scalar.
inline std::vector<double> random_weights(int n, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    return w;
}

}  // namespace bner::testutil
