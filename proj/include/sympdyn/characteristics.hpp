#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sympdyn/body.hpp"
#include "sympdyn/common.hpp"
#include "sympdyn/core.hpp"

// Characteristic flow dz/dt = J grad H(z) on {H = 1}: integration, closed
// orbit detection, actions, planarity and ellipse-shape analysis.

namespace sympdyn {

struct FlowOptions {
    double dt = 0.0;                 // 0: dt_factor * expected_min_period
    double dt_factor = 1.25e-4;
    double t_max = 0.0;              // 0: horizon_periods * expected_min_period
    double horizon_periods = 50.0;
    double closure_tol = 1e-7;       // position tolerance at the section return
    double local_error_tol = 1e-9;   // step-doubling estimate bound
    bool detect_closure = true;
};

struct Characteristic {
    std::string body_id;
    std::vector<Vec> samples;  // on {H = 1}; if closed, last ~ first
    double timestep = 0.0;
    bool closed = false;
    std::optional<double> period;
    std::optional<double> action;
    Vec start;
    double max_energy_drift = 0.0;  // max |H - 1| before re-projection
    bool truncated = false;         // stopped at t_max without closing
};

struct PlaneFit {
    Vec center;
    Vec basis1, basis2;  // orthonormal
    double residual = 0.0;  // RMS distance to the affine plane
};

enum class PlanarityVerdict { Planar, Indeterminate, NonPlanar };

inline constexpr double kPlanarResidualFactor = 1e-6;
inline constexpr double kNonPlanarResidualFactor = 1e-3;

struct EllipseFit {
    PlaneFit plane;
    // A x^2 + B xy + C y^2 + D x + E y + F = 0 in plane coordinates, |coef| = 1.
    std::array<double, 6> conic{};
    double residual = 0.0;  // RMS algebraic residual on scale-normalized coords
    std::pair<double, double> semi_axes{0.0, 0.0};  // major, minor
    double area = 0.0;
    bool accepted = false;  // residual below the ellipse threshold
};

inline constexpr double kEllipseResidualThreshold = 1e-4;

namespace detail {

inline double flow_dt(const ConvexBody& body, const FlowOptions& opt) {
    if (opt.dt > 0.0) return opt.dt;
    return opt.dt_factor * body.expected_min_period();
}

inline double flow_t_max(const ConvexBody& body, const FlowOptions& opt) {
    if (opt.t_max > 0.0) return opt.t_max;
    return opt.horizon_periods * body.expected_min_period();
}

// One classical RK4 step of dz/dt = J grad H, writing into `out`.
struct Rk4Workspace {
    Vec g, k1, k2, k3, k4, tmp;
};

inline void flow_velocity(const ConvexBody& body, const Vec& z, Vec& g, Vec& out) {
    body.value_grad(z, g);
    apply_J_into(g, out);
}

inline void rk4_step(const ConvexBody& body, const Vec& z, double dt, Rk4Workspace& w, Vec& out) {
    flow_velocity(body, z, w.g, w.k1);
    w.tmp = z + (0.5 * dt) * w.k1;
    flow_velocity(body, w.tmp, w.g, w.k2);
    w.tmp = z + (0.5 * dt) * w.k2;
    flow_velocity(body, w.tmp, w.g, w.k3);
    w.tmp = z + dt * w.k3;
    flow_velocity(body, w.tmp, w.g, w.k4);
    out = z + (dt / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
}

// Radial projection onto {H = 1}; exact for 2-homogeneous H.
inline double project_to_level(const ConvexBody& body, const Vec& center, Vec& z) {
    double H = body.value(z);
    z = center + (z - center) / std::sqrt(H);
    return H;
}

// Cubic Hermite value at parameter s in [0, 1] with endpoint derivatives
// given per unit of the step h.
inline double hermite(double s, double f0, double d0, double f1, double d1, double h) {
    double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * f0 + (s3 - 2 * s2 + s) * h * d0 +
           (-2 * s3 + 3 * s2) * f1 + (s3 - s2) * h * d1;
}

// Upward crossings of the section through z0 with normal v0_hat.
class ClosureDetector {
public:
    ClosureDetector(Vec z0, const Vec& v0, double tol)
        : z0_(std::move(z0)), v0_hat_(v0 / v0.norm()), tol_(tol) {}

    /// Feed the sample at time t; returns the refined (period, crossing point)
    /// when the orbit has returned to within tol of the start.
    std::optional<std::pair<double, Vec>> feed(double t, const Vec& z, const Vec& v) {
        double s = (z - z0_).dot(v0_hat_);
        double ds = v.dot(v0_hat_);
        std::optional<std::pair<double, Vec>> hit;
        if (has_prev_ && s_prev_ < 0.0 && s >= 0.0 && ds > 0.0) {
            double h = t - t_prev_;
            double theta = refine_crossing(h, s, ds);
            Vec zc(z.size());
            for (Eigen::Index i = 0; i < z.size(); ++i)
                zc[i] = hermite(theta, z_prev_[i], v_prev_[i], z[i], v[i], h);
            if ((zc - z0_).norm() <= tol_) hit = std::make_pair(t_prev_ + theta * h, zc);
        }
        has_prev_ = true;
        t_prev_ = t;
        s_prev_ = s;
        ds_prev_ = ds;
        z_prev_ = z;
        v_prev_ = v;
        return hit;
    }

private:
    double refine_crossing(double h, double s1, double ds1) const {
        // Root of the Hermite cubic of s(t) on [0, 1]; bisection with a
        // Newton polish, bracketed by s_prev < 0 <= s1.
        double lo = 0.0, hi = 1.0;
        auto f = [&](double x) { return hermite(x, s_prev_, ds_prev_, s1, ds1, h); };
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (lo + hi);
            (f(mid) < 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    Vec z0_, v0_hat_;
    double tol_;
    bool has_prev_ = false;
    double t_prev_ = 0.0, s_prev_ = 0.0, ds_prev_ = 0.0;
    Vec z_prev_, v_prev_;
};

}  // namespace detail

struct ClosureResult {
    bool closed = false;
    std::optional<double> period;
    double best_return_distance = std::numeric_limits<double>::infinity();
};

/// Integrates the characteristic flow from z0 (radially projected onto the
/// boundary) until closure or t_max. RK4 with per-step radial renormalization
/// and a step-doubling local error estimate; a step is retried with halved dt
/// up to 10 times before failing.
inline Characteristic flow(const ConvexBody& body, const Vec& z0_in, const FlowOptions& opt = {}) {
    const Vec center = body.center();
    Vec z0 = z0_in;
    {
        double H0 = body.value(z0);
        if (std::abs(H0 - 1.0) > 1e-6)
            throw ValidationError("flow: start must lie within 1e-6 of {H=1}, |H-1| = " +
                                  std::to_string(std::abs(H0 - 1.0)));
        z0 = center + (z0 - center) / std::sqrt(H0);
    }
    const double dt = detail::flow_dt(body, opt);
    const double t_max = detail::flow_t_max(body, opt);
    if (!(dt > 0.0)) throw ValidationError("flow: dt must be positive");

    Characteristic ch;
    ch.body_id = body.describe();
    ch.timestep = dt;
    ch.start = z0;
    ch.samples.reserve(static_cast<size_t>(t_max / dt) + 2);
    ch.samples.push_back(z0);

    detail::Rk4Workspace w;
    Vec g, v0, v, z = z0, z_full, z_half;
    detail::flow_velocity(body, z0, g, v0);
    detail::ClosureDetector detector(z0, v0, opt.closure_tol);
    detector.feed(0.0, z0, v0);

    double t = 0.0;
    while (t < t_max) {
        double h = std::min(dt, t_max - t);
        bool accepted = false;
        for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
            detail::rk4_step(body, z, h, w, z_full);
            detail::rk4_step(body, z, 0.5 * h, w, z_half);
            double Hmid = body.value(z_half);
            z_half = center + (z_half - center) / std::sqrt(Hmid);
            detail::rk4_step(body, z_half, 0.5 * h, w, z_half);
            double err = (z_full - z_half).norm();
            if (err <= opt.local_error_tol * std::max(1.0, z.norm())) {
                double Hpre = body.value(z_half);
                ch.max_energy_drift = std::max(ch.max_energy_drift, std::abs(Hpre - 1.0));
                z = center + (z_half - center) / std::sqrt(Hpre);
                accepted = true;
            } else {
                h *= 0.5;
            }
        }
        if (!accepted)
            throw NumericalError("flow: step rejected 10 times at t = " + std::to_string(t) +
                                 " for " + body.describe());
        t += h;
        ch.samples.push_back(z);
        if (opt.detect_closure) {
            detail::flow_velocity(body, z, g, v);
            if (auto hit = detector.feed(t, z, v)) {
                if (hit->first > 10.0 * dt) {
                    ch.closed = true;
                    ch.period = hit->first;
                    ch.samples.back() = hit->second;  // replace by the refined crossing
                    break;
                }
            }
        }
    }
    ch.truncated = !ch.closed;
    if (ch.closed) {
        std::vector<Vec> verts(ch.samples.begin(), ch.samples.end() - 1);
        ch.action = curve_action(ClosedPolyline(std::move(verts)));
    }
    return ch;
}

inline Characteristic flow(const ConvexBody& body, const Vec& z0, double t_max, double dt) {
    FlowOptions opt;
    opt.t_max = t_max;
    opt.dt = dt;
    return flow(body, z0, opt);
}

/// Post-hoc closure detection on a sampled orbit (velocities recomputed from
/// the body). tol = +infinity degenerates to the first section return.
inline ClosureResult detect_closure(const ConvexBody& body, const std::vector<Vec>& samples,
                                    double dt, double tol) {
    if (samples.size() < 10)
        throw ValidationError("detect_closure: need at least 10 samples");
    Vec g, v0, v;
    detail::flow_velocity(body, samples.front(), g, v0);
    detail::ClosureDetector detector(samples.front(), v0, tol);
    ClosureResult res;
    for (size_t k = 0; k < samples.size(); ++k) {
        detail::flow_velocity(body, samples[k], g, v);
        double t = static_cast<double>(k) * dt;
        if (k > samples.size() / 2)
            res.best_return_distance =
                std::min(res.best_return_distance, (samples[k] - samples.front()).norm());
        if (auto hit = detector.feed(t, samples[k], v)) {
            if (hit->first > 10.0 * dt) {
                res.closed = true;
                res.period = hit->first;
                return res;
            }
        }
    }
    return res;
}

/// Action of a closed characteristic: cyclic vertex trapezoid of the sample
/// polyline with the duplicated endpoint identified.
inline double action_of(const Characteristic& ch) {
    if (!ch.closed) throw ValidationError("action_of: characteristic is not closed");
    std::vector<Vec> verts = ch.samples;
    while (verts.size() > 3 && (verts.back() - verts.front()).norm() <= 10.0 * 1e-7)
        verts.pop_back();
    return curve_action(ClosedPolyline(std::move(verts)));
}

/// Best-fit affine 2-plane by SVD of the centered sample matrix.
inline PlaneFit fit_plane(const std::vector<Vec>& samples) {
    if (samples.size() < 4) throw ValidationError("fit_plane: need at least 4 samples");
    const Eigen::Index d = samples.front().size();
    Vec mean = Vec::Zero(d);
    for (const Vec& z : samples) mean += z;
    mean /= static_cast<double>(samples.size());
    Mat X(static_cast<Eigen::Index>(samples.size()), d);
    for (size_t k = 0; k < samples.size(); ++k) X.row(static_cast<Eigen::Index>(k)) = (samples[k] - mean).transpose();
    Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() < 2 || sv[1] <= 1e-12 * std::max(1.0, sv[0]))
        throw ValidationError("fit_plane: samples are rank-deficient (no unique 2-plane)");
    PlaneFit fit;
    fit.center = mean;
    fit.basis1 = svd.matrixV().col(0);
    fit.basis2 = svd.matrixV().col(1);
    double out_of_plane = 0.0;
    for (Eigen::Index i = 2; i < sv.size(); ++i) out_of_plane += sv[i] * sv[i];
    fit.residual = std::sqrt(out_of_plane / static_cast<double>(samples.size()));
    return fit;
}

inline double sample_diameter(const std::vector<Vec>& samples, const Vec& center) {
    double r = 0.0;
    for (const Vec& z : samples) r = std::max(r, (z - center).norm());
    return 2.0 * r;
}

inline PlanarityVerdict planarity_verdict(double residual, double diameter) {
    if (residual <= kPlanarResidualFactor * diameter) return PlanarityVerdict::Planar;
    if (residual >= kNonPlanarResidualFactor * diameter) return PlanarityVerdict::NonPlanar;
    return PlanarityVerdict::Indeterminate;
}

/// Least-squares algebraic conic through the in-plane sample coordinates,
/// with the unit-norm coefficient constraint.
inline EllipseFit fit_ellipse(const std::vector<Vec>& samples, const PlaneFit& plane) {
    if (samples.size() < 6) throw ValidationError("fit_ellipse: need at least 6 samples");
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    Mat xy(n, 2);
    for (Eigen::Index k = 0; k < n; ++k) {
        Vec dz = samples[static_cast<size_t>(k)] - plane.center;
        xy(k, 0) = dz.dot(plane.basis1);
        xy(k, 1) = dz.dot(plane.basis2);
    }
    double scale = std::sqrt(xy.squaredNorm() / static_cast<double>(n));
    if (scale <= 0.0) throw ValidationError("fit_ellipse: degenerate samples");
    Mat D(n, 6);
    for (Eigen::Index k = 0; k < n; ++k) {
        double x = xy(k, 0) / scale, y = xy(k, 1) / scale;
        D.row(k) << x * x, x * y, y * y, x, y, 1.0;
    }
    Eigen::JacobiSVD<Mat> svd(D, Eigen::ComputeThinV);
    Eigen::Matrix<double, 6, 1> c = svd.matrixV().col(5);
    EllipseFit fit;
    fit.plane = plane;
    fit.residual = svd.singularValues()[5] / std::sqrt(static_cast<double>(n));
    if (c[0] + c[2] < 0.0) c = -c;
    double disc = c[0] * c[2] - 0.25 * c[1] * c[1];
    if (disc <= 0.0)
        throw NumericalError("fit_ellipse: fitted conic is not an ellipse (discriminant " +
                             std::to_string(disc) + ")");
    // Back to unscaled plane coordinates, then re-normalize.
    Eigen::Matrix<double, 6, 1> cu;
    cu << c[0] / (scale * scale), c[1] / (scale * scale), c[2] / (scale * scale), c[3] / scale,
        c[4] / scale, c[5];
    cu /= cu.norm();
    for (int i = 0; i < 6; ++i) fit.conic[static_cast<size_t>(i)] = cu[i];

    Eigen::Matrix2d Q;
    Q << cu[0], 0.5 * cu[1], 0.5 * cu[1], cu[2];
    Eigen::Vector2d b(0.5 * cu[3], 0.5 * cu[4]);
    Eigen::Vector2d cxy = -Q.ldlt().solve(b);
    // conic(x) = (x - c)^T Q (x - c) + V with V = F - c^T Q c.
    double V = cu[5] - cxy.dot(Q * cxy);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Q);
    double l0 = es.eigenvalues()[0], l1 = es.eigenvalues()[1];
    if (!(V < 0.0) || l0 <= 0.0)
        throw NumericalError("fit_ellipse: conic has no real elliptic locus");
    double a_major = std::sqrt(-V / l0), a_minor = std::sqrt(-V / l1);
    if (a_major < a_minor) std::swap(a_major, a_minor);
    fit.semi_axes = {a_major, a_minor};
    fit.area = 3.14159265358979323846 * a_major * a_minor;
    fit.accepted = fit.residual <= kEllipseResidualThreshold;
    return fit;
}

inline EllipseFit fit_ellipse(const Characteristic& ch, const PlaneFit& plane) {
    return fit_ellipse(ch.samples, plane);
}

// --- survey -----------------------------------------------------------------

struct OrbitRecord {
    int index = 0;
    bool closed = false;
    std::optional<double> period;
    std::optional<double> action;
    double planarity_residual = 0.0;
    double diameter = 0.0;
    PlanarityVerdict planarity = PlanarityVerdict::Indeterminate;
    std::optional<double> ellipse_residual;
    bool ellipse_ok = false;
    std::string error;  // nonempty when the orbit failed
};

struct CharacteristicSurvey {
    std::vector<OrbitRecord> records;
    int n_closed = 0;
    int n_planar = 0;
    int n_nonplanar = 0;
    int n_indeterminate = 0;
    bool all_closed_sampled = false;
    bool all_planar_sampled = false;
    double action_spread = 0.0;  // max - min over closed orbits
    double min_action = std::numeric_limits<double>::infinity();
    double max_action = -std::numeric_limits<double>::infinity();
};

struct SurveyOptions {
    FlowOptions flow;
    bool fit_ellipses = true;
};

/// Flows from uniformly random boundary directions and aggregates closure,
/// periods, actions, planarity and ellipse diagnostics. Deterministic per
/// seed and independent of the worker count.
inline CharacteristicSurvey survey(const ConvexBody& body, int n_starts, std::uint64_t seed,
                                   const SurveyOptions& opt = {}) {
    if (n_starts < 1) throw ValidationError("survey: need n_starts >= 1");
    CharacteristicSurvey out;
    out.records.resize(static_cast<size_t>(n_starts));
    const int d = body.dim();
    parallel_for(n_starts, [&](int i) {
        OrbitRecord& rec = out.records[static_cast<size_t>(i)];
        rec.index = i;
        std::mt19937_64 rng(derive_seed(seed, 0x54a8u, static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vec dir(d);
        for (int k = 0; k < d; ++k) dir[k] = gauss(rng);
        try {
            Vec z0 = boundary_point(body, dir);
            Characteristic ch = flow(body, z0, opt.flow);
            rec.closed = ch.closed;
            rec.period = ch.period;
            rec.action = ch.action;
            PlaneFit pf = fit_plane(ch.samples);
            rec.planarity_residual = pf.residual;
            rec.diameter = sample_diameter(ch.samples, pf.center);
            rec.planarity = planarity_verdict(pf.residual, rec.diameter);
            if (opt.fit_ellipses && ch.closed && rec.planarity == PlanarityVerdict::Planar) {
                try {
                    EllipseFit ef = fit_ellipse(ch.samples, pf);
                    rec.ellipse_residual = ef.residual;
                    rec.ellipse_ok = ef.accepted;
                } catch (const NumericalError&) {
                    rec.ellipse_ok = false;
                }
            }
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
    });
    bool all_closed = true, all_planar = true;
    for (const OrbitRecord& rec : out.records) {
        if (rec.closed) {
            ++out.n_closed;
            if (rec.action) {
                out.min_action = std::min(out.min_action, *rec.action);
                out.max_action = std::max(out.max_action, *rec.action);
            }
        } else {
            all_closed = false;
        }
        switch (rec.planarity) {
            case PlanarityVerdict::Planar: ++out.n_planar; break;
            case PlanarityVerdict::NonPlanar: ++out.n_nonplanar; all_planar = false; break;
            case PlanarityVerdict::Indeterminate: ++out.n_indeterminate; all_planar = false; break;
        }
    }
    out.all_closed_sampled = all_closed;
    out.all_planar_sampled = all_planar;
    out.action_spread = (out.n_closed > 0) ? out.max_action - out.min_action : 0.0;
    return out;
}

}  // namespace sympdyn
