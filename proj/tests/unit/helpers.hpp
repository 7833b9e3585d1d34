#pragma once

#include <cmath>
#include <functional>

#include "goalplan/mlp.hpp"

namespace testutil {

using goalplan::Mlp;
using goalplan::Vec;

// Central finite differences over all flattened parameters.
inline Vec fd_gradient(Mlp& net, const std::function<double()>& loss, double h = 1e-5) {
    Vec theta = net.flatten_params();
    Vec grad(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Vec tp = theta;
        tp(i) += h;
        net.set_params(tp);
        double up = loss();
        tp(i) -= 2 * h;
        net.set_params(tp);
        double down = loss();
        grad(i) = (up - down) / (2 * h);
    }
    net.set_params(theta);
    return grad;
}

inline double max_rel_error(const Vec& analytic, const Vec& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        double denom = std::max(std::abs(analytic(i)) + std::abs(numeric(i)), 1e-4);
        worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
    }
    return worst;
}

inline Vec flatten_grads(const Mlp::Grads& g) {
    long n = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) n += g.weights[l].size() + g.biases[l].size();
    Vec flat(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        const auto& w = g.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) flat(k++) = w(r, c);
        for (Eigen::Index i = 0; i < g.biases[l].size(); ++i) flat(k++) = g.biases[l](i);
    }
    return flat;
}

}  // namespace testutil
