#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sympdyn/body.hpp"
#include "sympdyn/characteristics.hpp"
#include "sympdyn/common.hpp"
#include "sympdyn/core.hpp"

// Quantitative invariants: Williamson spectrum, EHZ capacity, Viterbo ratio,
// Santalo product, Brunn-Minkowski equality diagnostics.

namespace sympdyn {

struct WilliamsonSpectrum {
    std::vector<double> coefficients;  // ascending, positive
};

struct WilliamsonDiagonalization {
    WilliamsonSpectrum spectrum;
    Mat congruence;  // symplectic S with S^T A S = diag(a_i, a_i) interleaved
};

/// Symplectic canonical form of an SPD quadratic Hamiltonian: S^T A S =
/// sum a_i (p_i^2 + q_i^2) with symplectic S. Built from the spectral
/// decomposition of the antisymmetric A^{1/2} J A^{1/2}, with the symplectic
/// basis assembled pairwise from the Hermitian eigenvectors of i K.
inline WilliamsonDiagonalization williamson_diagonalize(const Mat& A) {
    const int d = static_cast<int>(A.rows());
    check_even_dim(d, "williamson");
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * A.cwiseAbs().maxCoeff())
        throw ValidationError("williamson: matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> esA(A);
    if (esA.eigenvalues().minCoeff() <= 0.0)
        throw ValidationError("williamson: matrix must be positive definite");
    Mat sqrtA = esA.operatorSqrt();
    Mat inv_sqrtA = esA.operatorInverseSqrt();
    Mat K = sqrtA * standard_J(d) * sqrtA;

    Eigen::MatrixXcd iK(d, d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) iK(r, c) = std::complex<double>(0.0, K(r, c));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(iK);

    const int n = d / 2;
    WilliamsonDiagonalization out;
    out.spectrum.coefficients.resize(static_cast<size_t>(n));
    Mat O(d, d);
    Vec scale(d);
    const double sqrt2 = std::sqrt(2.0);
    for (int j = 0; j < n; ++j) {
        const int idx = n + j;  // positive eigenvalues, ascending
        double a = es.eigenvalues()[idx];
        out.spectrum.coefficients[static_cast<size_t>(j)] = a;
        Eigen::VectorXcd w = es.eigenvectors().col(idx);
        O.col(2 * j) = sqrt2 * w.real();
        O.col(2 * j + 1) = sqrt2 * w.imag();
        scale[2 * j] = std::sqrt(a);
        scale[2 * j + 1] = std::sqrt(a);
    }
    out.congruence = inv_sqrtA * O * scale.asDiagonal();
    return out;
}

inline WilliamsonSpectrum williamson(const Mat& A) {
    return williamson_diagonalize(A).spectrum;
}

struct SymplecticBallVerdict {
    bool is_ball = false;
    WilliamsonSpectrum spectrum;
    std::optional<AffineSymplecticMap> witness;  // S^T A S ~ a I
    double witness_residual = 0.0;
};

/// True iff all Williamson coefficients agree to `tol` (relative); the witness
/// is the symplectic congruence carrying A to its canonical multiple of I.
inline SymplecticBallVerdict is_symplectic_ball(const Mat& A, double tol) {
    WilliamsonDiagonalization wd = williamson_diagonalize(A);
    SymplecticBallVerdict v;
    v.spectrum = wd.spectrum;
    double amin = wd.spectrum.coefficients.front();
    double amax = wd.spectrum.coefficients.back();
    v.is_ball = (amax / amin - 1.0) <= tol;
    if (v.is_ball) {
        double a = 0.0;
        for (double ai : wd.spectrum.coefficients) a += ai;
        a /= static_cast<double>(wd.spectrum.coefficients.size());
        Mat canon = wd.congruence.transpose() * A * wd.congruence;
        v.witness_residual =
            (canon - a * Mat::Identity(A.rows(), A.cols())).cwiseAbs().maxCoeff();
        v.witness = AffineSymplecticMap(wd.congruence, Vec::Zero(A.rows()));
    }
    return v;
}

enum class CapacityMethod { Auto, WilliamsonClosedForm, MinActionSampled };

struct EhzOptions {
    CapacityMethod method = CapacityMethod::Auto;
    int n_starts = 32;           // random starts on top of the block-axis starts
    std::uint64_t seed = 0;
    FlowOptions flow;            // horizon bounds how long a period can be found
};

struct EhzResult {
    double value = 0.0;
    std::string method_used;
    int closed_orbits_found = 0;
    bool upper_bound_only = false;
};

/// EHZ capacity. Ellipsoids: pi / max a_i in closed form. Otherwise the
/// minimum action over the closed characteristics found by a survey seeded
/// with the coordinate block circles plus random starts; an upper bound.
inline EhzResult ehz_capacity(const ConvexBody& body, const EhzOptions& opt = {}) {
    auto quad = body.as_quadratic();
    const bool closed_form =
        opt.method == CapacityMethod::WilliamsonClosedForm ||
        (opt.method == CapacityMethod::Auto && quad.has_value());
    if (closed_form) {
        if (!quad)
            throw ValidationError("ehz_capacity: closed form requires an ellipsoid body");
        WilliamsonSpectrum sp = williamson(quad->first);
        return {3.14159265358979323846 / sp.coefficients.back(), "williamson_closed_form", 0,
                false};
    }
    const int d = body.dim();
    const int n_axis = d / 2;
    const int total = n_axis + opt.n_starts;
    std::vector<std::optional<double>> actions(static_cast<size_t>(total));
    parallel_for(total, [&](int i) {
        Vec dir(d);
        if (i < n_axis) {
            dir.setZero();
            dir[2 * i] = 1.0;
        } else {
            std::mt19937_64 rng(derive_seed(opt.seed, 0xe423u, static_cast<std::uint64_t>(i)));
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int k = 0; k < d; ++k) dir[k] = gauss(rng);
        }
        try {
            Characteristic ch = flow(body, boundary_point(body, dir), opt.flow);
            if (ch.closed && ch.action) actions[static_cast<size_t>(i)] = std::abs(*ch.action);
        } catch (const std::exception&) {
            // isolated start failure; leaves no action
        }
    });
    EhzResult res;
    res.method_used = "min_action_sampled";
    res.upper_bound_only = true;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : actions)
        if (a) {
            ++res.closed_orbits_found;
            best = std::min(best, *a);
        }
    if (res.closed_orbits_found == 0)
        throw NumericalError("ehz_capacity: no closed characteristic detected within horizon for " +
                             body.describe());
    res.value = best;
    return res;
}

struct CapacityReport {
    VolumeEstimate volume;
    double c_ehz = 0.0;
    std::string method;
    int closed_orbits_found = 0;
    bool capacity_is_upper_bound = false;
    double viterbo_ratio = 0.0;  // vol * n! / c^n
    bool viterbo_violation = false;
    std::optional<double> santalo_product;
    std::optional<std::vector<double>> spectrum;
};

struct ReportOptions {
    EhzOptions ehz;
    MonteCarloOptions monte_carlo;
    bool with_santalo = true;
};

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

inline double santalo_product(const ConvexBody& body, const MonteCarloOptions& mc = {});

/// Volume, capacity, Viterbo ratio and friends in one record. Closed forms
/// for ellipsoids; Monte Carlo volume + sampled capacity otherwise.
inline CapacityReport viterbo_report(const ConvexBody& body, const ReportOptions& opt = {}) {
    CapacityReport rep;
    const int n = body.dim() / 2;
    auto quad = body.as_quadratic();
    rep.volume = quad ? volume_closed_form(body) : volume_monte_carlo(body, opt.monte_carlo);
    EhzResult c = ehz_capacity(body, opt.ehz);
    rep.c_ehz = c.value;
    rep.method = c.method_used;
    rep.closed_orbits_found = c.closed_orbits_found;
    rep.capacity_is_upper_bound = c.upper_bound_only;
    rep.viterbo_ratio = rep.volume.value * factorial(n) / ipow(rep.c_ehz, n);
    if (quad) rep.spectrum = williamson(quad->first).coefficients;
    if (opt.with_santalo && body.centrally_symmetric() && body.center().norm() <= 1e-10)
        rep.santalo_product = santalo_product(body, opt.monte_carlo);
    // The Viterbo inequality is a conjecture: report violations loudly, never
    // assert them away.
    double rel_tol = 3.0 * (rep.volume.std_error / std::max(rep.volume.value, 1e-300) + 1e-9);
    if (rep.viterbo_ratio < 1.0 - rel_tol) {
        rep.viterbo_violation = true;
        std::cerr << "[sympdyn] WARNING: Viterbo ratio " << rep.viterbo_ratio << " < 1 for "
                  << body.describe() << " beyond combined tolerance " << rel_tol << "\n";
    }
    return rep;
}

/// vol(K) * vol(K^polar) for centered bodies; (pi^n/n!)^2 at ellipsoids.
inline double santalo_product(const ConvexBody& body, const MonteCarloOptions& mc) {
    if (body.center().norm() > 1e-10)
        throw ValidationError("santalo_product: body must be centered");
    if (auto quad = body.as_quadratic()) {
        Mat Ainv = quad->first.llt().solve(Mat::Identity(body.dim(), body.dim()));
        return ellipsoid_volume(quad->first) * ellipsoid_volume(Ainv);
    }
    ConvexBody polar = polar_body(body, /*symplectic=*/false);
    MonteCarloOptions mc2 = mc;
    mc2.seed = splitmix64(mc.seed ^ 0x5a17a10ULL);
    return volume_monte_carlo(body, mc).value * volume_monte_carlo(polar, mc2).value;
}

struct BrunnMinkowskiGap {
    double gap = 0.0;    // vol(K-K)^{1/2n} - 2 vol(K)^{1/2n}
    double noise = 0.0;  // one standard error of `gap` under the volume method
    VolumeEstimate vol_body;
    VolumeEstimate vol_difference;
};

/// Brunn-Minkowski equality defect of K vs -K; ~0 iff K is centrally
/// symmetric, strictly positive otherwise.
inline BrunnMinkowskiGap brunn_minkowski_gap(const ConvexBody& body,
                                             const MonteCarloOptions& mc = {}) {
    const int d = body.dim();
    BrunnMinkowskiGap out;
    ConvexBody diff = minkowski_difference(body);
    if (body.as_quadratic()) {
        out.vol_body = volume_closed_form(body);
        out.vol_difference = volume_closed_form(diff);
    } else {
        MonteCarloOptions mc2 = mc;
        mc2.seed = splitmix64(mc.seed ^ 0xd1ffULL);
        out.vol_body = volume_monte_carlo(body, mc);
        out.vol_difference = volume_monte_carlo(diff, mc2);
    }
    const double inv = 1.0 / static_cast<double>(d);
    auto root = [&](double v) { return std::pow(v, inv); };
    out.gap = root(out.vol_difference.value) - 2.0 * root(out.vol_body.value);
    auto droot = [&](const VolumeEstimate& v) {
        return v.std_error * inv * std::pow(v.value, inv - 1.0);
    };
    out.noise = std::sqrt(droot(out.vol_difference) * droot(out.vol_difference) +
                          4.0 * droot(out.vol_body) * droot(out.vol_body));
    return out;
}

}  // namespace sympdyn
