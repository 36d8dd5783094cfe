#pragma once

#include <random>

#include "sympdyn/body.hpp"
#include "sympdyn/common.hpp"

// Shared oracles for the test suites: finite differences and seeded vectors.

namespace testutil {

using sympdyn::ConvexBody;
using sympdyn::Mat;
using sympdyn::Vec;

inline Vec random_vec(std::mt19937_64& rng, int dim, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
    return v;
}

inline Vec random_unit(std::mt19937_64& rng, int dim) {
    Vec v = random_vec(rng, dim);
    return v / v.norm();
}

/// Central finite-difference gradient of H.
inline Vec fd_gradient(const ConvexBody& body, const Vec& z, double h = 1e-6) {
    Vec g(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Vec zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        g[i] = (body.value(zp) - body.value(zm)) / (2.0 * h);
    }
    return g;
}

/// Central finite-difference Hessian of H from analytic gradients.
inline Mat fd_hessian(const ConvexBody& body, const Vec& z, double h = 1e-6) {
    const Eigen::Index d = z.size();
    Mat H(d, d);
    Vec gp(d), gm(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        Vec zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        body.value_grad(zp, gp);
        body.value_grad(zm, gm);
        H.col(i) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

}  // namespace testutil
