#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sympdyn/common.hpp"
#include "sympdyn/core.hpp"

// Smooth strongly convex bodies represented by 2-homogeneous defining
// Hamiltonians H with analytic gradient and Hessian; the boundary is {H = 1}.

namespace sympdyn {

struct HamiltonianEval {
    double value = 0.0;
    Vec gradient;
    Mat hessian;
    bool hessian_degenerate = false;
};

/// h(u) for a unit direction u, with the boundary point attaining it.
struct SupportEval {
    Vec direction;  // unit
    double value = 0.0;
    Vec maximizer;
};

struct BoundaryFrame {
    Vec point;
    Vec normal;    // unit outward
    Vec char_dir;  // J(normal)
};

enum class BodyKind { Ellipsoid, SmoothedPolydisc, Transformed, Polar, MinkowskiDifference, SkewedBall };

namespace detail {

class BodyKernel {
public:
    virtual ~BodyKernel() = default;
    virtual BodyKind kind() const = 0;
    virtual int dim() const = 0;
    virtual Vec center() const = 0;
    virtual std::string describe() const = 0;
    virtual bool centrally_symmetric() const = 0;

    virtual double value(const Vec& z) const = 0;
    virtual double value_grad(const Vec& z, Vec& grad) const = 0;
    virtual HamiltonianEval eval(const Vec& z) const = 0;

    /// (A, center) when the body is an ellipsoid {z : (z-c)^T A (z-c) <= 1},
    /// resolving Transformed chains.
    virtual std::optional<std::pair<Mat, Vec>> as_quadratic() const { return std::nullopt; }
    virtual std::optional<SupportEval> support_closed_form(const Vec& /*unit_u*/) const {
        return std::nullopt;
    }
    /// Shortest characteristic period scale, used for flow step defaults.
    virtual double expected_min_period() const { return 3.14159265358979323846; }
};

inline double max_flow_frequency(const Mat& A) {
    // Eigenvalues of J A are +- i a_i for SPD A; the linearized flow
    // dz/dt = 2 J A z rotates at angular speeds 2 a_i.
    Mat JA = standard_J(static_cast<int>(A.rows())) * A;
    Eigen::EigenSolver<Mat> es(JA, /*computeEigenvectors=*/false);
    return es.eigenvalues().imag().cwiseAbs().maxCoeff();
}

class EllipsoidKernel final : public BodyKernel {
public:
    EllipsoidKernel(Mat A, Vec center) : A_(std::move(A)), center_(std::move(center)) {
        const int d = static_cast<int>(center_.size());
        check_even_dim(d, "Ellipsoid");
        if (A_.rows() != d || A_.cols() != d)
            throw ValidationError("Ellipsoid: matrix must be 2n x 2n");
        if ((A_ - A_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * A_.cwiseAbs().maxCoeff())
            throw ValidationError("Ellipsoid: matrix must be symmetric");
        A_ = 0.5 * (A_ + A_.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(A_);
        if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
            throw ValidationError("Ellipsoid: matrix must be positive definite");
        Ainv_ = es.operatorInverseSqrt() * es.operatorInverseSqrt();
        max_freq_ = max_flow_frequency(A_);
    }

    BodyKind kind() const override { return BodyKind::Ellipsoid; }
    int dim() const override { return static_cast<int>(center_.size()); }
    Vec center() const override { return center_; }
    std::string describe() const override {
        return "ellipsoid(dim=" + std::to_string(dim()) + ")";
    }
    bool centrally_symmetric() const override { return true; }
    const Mat& matrix() const { return A_; }
    const Mat& inverse_matrix() const { return Ainv_; }

    double value(const Vec& z) const override {
        Vec d = z - center_;
        return d.dot(A_ * d);
    }
    double value_grad(const Vec& z, Vec& grad) const override {
        Vec d = z - center_;
        grad.noalias() = 2.0 * (A_ * d);
        return 0.5 * grad.dot(d);
    }
    HamiltonianEval eval(const Vec& z) const override {
        HamiltonianEval e;
        Vec d = z - center_;
        e.gradient.noalias() = 2.0 * (A_ * d);
        e.value = 0.5 * e.gradient.dot(d);
        e.hessian = 2.0 * A_;
        return e;
    }
    std::optional<std::pair<Mat, Vec>> as_quadratic() const override {
        return std::make_pair(A_, center_);
    }
    std::optional<SupportEval> support_closed_form(const Vec& u) const override {
        SupportEval s;
        s.direction = u;
        Vec Ainv_u = Ainv_ * u;
        double root = std::sqrt(u.dot(Ainv_u));
        s.value = center_.dot(u) + root;
        s.maximizer = center_ + Ainv_u / root;
        return s;
    }
    double expected_min_period() const override {
        return 3.14159265358979323846 / max_freq_;
    }

private:
    Mat A_, Ainv_;
    Vec center_;
    double max_freq_ = 1.0;
};

// H = (sum_i (rho_i / r_i^2)^m)^(1/m) with rho_i = p_i^2 + q_i^2 about the
// center. 2-homogeneous for every m >= 1; approaches the polydisc gauge as
// m -> infinity. Tangential curvature degenerates where a block vanishes.
class SmoothedPolydiscKernel final : public BodyKernel {
public:
    SmoothedPolydiscKernel(int m, std::vector<double> radii, Vec center)
        : m_(m), radii_(std::move(radii)), center_(std::move(center)) {
        const int d = static_cast<int>(center_.size());
        check_even_dim(d, "SmoothedPolydisc");
        if (m_ < 2) throw ValidationError("SmoothedPolydisc: exponent m must be >= 2");
        if (static_cast<int>(radii_.size()) != d / 2)
            throw ValidationError("SmoothedPolydisc: need one radius per block");
        for (double r : radii_)
            if (!(r > 0.0)) throw ValidationError("SmoothedPolydisc: radii must be positive");
    }

    BodyKind kind() const override { return BodyKind::SmoothedPolydisc; }
    int dim() const override { return static_cast<int>(center_.size()); }
    Vec center() const override { return center_; }
    std::string describe() const override {
        return "smoothed-polydisc(m=" + std::to_string(m_) + ")";
    }
    bool centrally_symmetric() const override { return true; }
    int exponent() const { return m_; }
    const std::vector<double>& radii() const { return radii_; }

    double value(const Vec& z) const override {
        double S = 0.0;
        for (int j = 0; j < dim() / 2; ++j) S += ipow(block_u(z, j), m_);
        return std::pow(S, 1.0 / m_);
    }
    double value_grad(const Vec& z, Vec& grad) const override {
        const int n = dim() / 2;
        grad.resize(dim());
        double S = 0.0;
        for (int j = 0; j < n; ++j) {
            double u = block_u(z, j);
            S += ipow(u, m_);
            double g = 2.0 * ipow(u, m_ - 1) / (radii_[j] * radii_[j]);
            grad[2 * j] = g * (z[2 * j] - center_[2 * j]);
            grad[2 * j + 1] = g * (z[2 * j + 1] - center_[2 * j + 1]);
        }
        double H = std::pow(S, 1.0 / m_);
        grad *= std::pow(S, 1.0 / m_ - 1.0);
        return H;
    }
    HamiltonianEval eval(const Vec& z) const override {
        const int n = dim() / 2;
        const int d = dim();
        HamiltonianEval e;
        Vec zt = z - center_;
        double S = 0.0;
        Vec v = Vec::Zero(d);   // grad = S^{1/m-1} v
        Mat Dv = Mat::Zero(d, d);
        double umin = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            double rj2 = radii_[j] * radii_[j];
            double u = (zt[2 * j] * zt[2 * j] + zt[2 * j + 1] * zt[2 * j + 1]) / rj2;
            umin = std::min(umin, u);
            S += ipow(u, m_);
            double g = 2.0 * ipow(u, m_ - 1) / rj2;
            v[2 * j] = g * zt[2 * j];
            v[2 * j + 1] = g * zt[2 * j + 1];
            Dv(2 * j, 2 * j) += g;
            Dv(2 * j + 1, 2 * j + 1) += g;
            double h = 4.0 * (m_ - 1) * ipow(u, m_ - 2) / (rj2 * rj2);
            Dv(2 * j, 2 * j) += h * zt[2 * j] * zt[2 * j];
            Dv(2 * j, 2 * j + 1) += h * zt[2 * j] * zt[2 * j + 1];
            Dv(2 * j + 1, 2 * j) += h * zt[2 * j + 1] * zt[2 * j];
            Dv(2 * j + 1, 2 * j + 1) += h * zt[2 * j + 1] * zt[2 * j + 1];
        }
        e.value = std::pow(S, 1.0 / m_);
        double s1 = std::pow(S, 1.0 / m_ - 1.0);
        e.gradient = s1 * v;
        e.hessian = s1 * Dv - (m_ - 1) * std::pow(S, 1.0 / m_ - 2.0) * (v * v.transpose());
        e.hessian_degenerate = (m_ > 2) && (umin <= 1e-8 * e.value);
        return e;
    }
    double expected_min_period() const override {
        double rmin2 = radii_[0] * radii_[0];
        for (double r : radii_) rmin2 = std::min(rmin2, r * r);
        return 3.14159265358979323846 * rmin2;
    }

private:
    double block_u(const Vec& z, int j) const {
        double dp = z[2 * j] - center_[2 * j];
        double dq = z[2 * j + 1] - center_[2 * j + 1];
        return (dp * dp + dq * dq) / (radii_[j] * radii_[j]);
    }

    int m_;
    std::vector<double> radii_;
    Vec center_;
};

class TransformedKernel final : public BodyKernel {
public:
    TransformedKernel(std::shared_ptr<const BodyKernel> base, AffineSymplecticMap map)
        : base_(std::move(base)), map_(std::move(map)), inv_(map_.inverse()) {
        if (base_->dim() != map_.dim())
            throw ValidationError("Transformed: map dimension does not match body");
    }

    BodyKind kind() const override { return BodyKind::Transformed; }
    int dim() const override { return base_->dim(); }
    Vec center() const override { return map_.apply(base_->center()); }
    std::string describe() const override { return "transformed(" + base_->describe() + ")"; }
    bool centrally_symmetric() const override { return base_->centrally_symmetric(); }
    const AffineSymplecticMap& map() const { return map_; }
    const BodyKernel& base() const { return *base_; }

    double value(const Vec& z) const override { return base_->value(inv_.apply(z)); }
    double value_grad(const Vec& z, Vec& grad) const override {
        Vec gbase;
        double H = base_->value_grad(inv_.apply(z), gbase);
        grad.noalias() = inv_.linear().transpose() * gbase;
        return H;
    }
    HamiltonianEval eval(const Vec& z) const override {
        HamiltonianEval b = base_->eval(inv_.apply(z));
        HamiltonianEval e;
        e.value = b.value;
        e.gradient.noalias() = inv_.linear().transpose() * b.gradient;
        e.hessian = inv_.linear().transpose() * b.hessian * inv_.linear();
        e.hessian_degenerate = b.hessian_degenerate;
        return e;
    }
    std::optional<std::pair<Mat, Vec>> as_quadratic() const override {
        auto q = base_->as_quadratic();
        if (!q) return std::nullopt;
        Mat A = inv_.linear().transpose() * q->first * inv_.linear();
        return std::make_pair(0.5 * (A + A.transpose()), map_.apply(q->second));
    }
    std::optional<SupportEval> support_closed_form(const Vec& u) const override {
        // h_{MK+t}(u) = h_K(M^T u) + <t, u>, maximizer mapped forward.
        Vec w = map_.linear().transpose() * u;
        double wn = w.norm();
        auto base_support = base_->support_closed_form(w / wn);
        if (!base_support) return std::nullopt;
        SupportEval s;
        s.direction = u;
        s.value = wn * base_support->value + map_.translation().dot(u);
        s.maximizer = map_.apply(base_support->maximizer);
        return s;
    }
    double expected_min_period() const override { return base_->expected_min_period(); }

private:
    std::shared_ptr<const BodyKernel> base_;
    AffineSymplecticMap map_;
    AffineSymplecticMap inv_;
};

inline SupportEval kernel_support(const BodyKernel& k, const Vec& direction);

// H(y) = h_B(y)^2, the squared gauge of the polar of a centered symmetric B.
class PolarKernel final : public BodyKernel {
public:
    explicit PolarKernel(std::shared_ptr<const BodyKernel> base) : base_(std::move(base)) {
        if (!base_->centrally_symmetric() || base_->center().norm() > 1e-10)
            throw ValidationError("polar: body must be centrally symmetric about the origin");
    }

    BodyKind kind() const override { return BodyKind::Polar; }
    int dim() const override { return base_->dim(); }
    Vec center() const override { return Vec::Zero(dim()); }
    std::string describe() const override { return "polar(" + base_->describe() + ")"; }
    bool centrally_symmetric() const override { return true; }
    const BodyKernel& base() const { return *base_; }

    double value(const Vec& y) const override {
        double yn = y.norm();
        if (yn == 0.0) return 0.0;
        SupportEval s = kernel_support(*base_, y);
        double h = yn * s.value;
        return h * h;
    }
    double value_grad(const Vec& y, Vec& grad) const override {
        double yn = y.norm();
        SupportEval s = kernel_support(*base_, y);
        double h = yn * s.value;
        grad = 2.0 * h * s.maximizer;
        return h * h;
    }
    HamiltonianEval eval(const Vec& y) const override {
        HamiltonianEval e;
        double yn = y.norm();
        SupportEval s = kernel_support(*base_, y);
        double h = yn * s.value;
        e.value = h * h;
        e.gradient = 2.0 * h * s.maximizer;
        Mat hess_h = support_hessian(*base_, y, h, s.maximizer);
        e.hessian = 2.0 * (s.maximizer * s.maximizer.transpose()) + 2.0 * h * hess_h;
        return e;
    }

    /// Hessian of the support function of `b` at y (y != 0), via implicit
    /// differentiation of the first-order conditions at the maximizer.
    static Mat support_hessian(const BodyKernel& b, const Vec& y, double h, const Vec& maximizer) {
        HamiltonianEval be = b.eval(maximizer);
        const int d = b.dim();
        // Regularize: the body Hessian may be near-singular at flat boundary
        // spots, where the support Hessian genuinely blows up.
        Mat Wreg = be.hessian + (1e-12 * std::abs(be.hessian.trace()) / d) * Mat::Identity(d, d);
        Eigen::LDLT<Mat> W(Wreg);
        Mat Winv_id = W.solve(Mat::Identity(d, d));
        Vec Wy = W.solve(y);
        return (2.0 / h) * (Winv_id - (Wy * Wy.transpose()) / y.dot(Wy));
    }

private:
    std::shared_ptr<const BodyKernel> base_;
};

// K - K through the inf-convolution of gauges:
//   gauge_D(z) = min_x max(g(x), g(x - z)),  g = sqrt(H_base about the center),
// solved as the smooth system theta grad g(x) + (1-theta) grad g(x-z) = 0,
// g(x) = g(x-z). The translation of the base cancels in the difference.
class MinkowskiDifferenceKernel final : public BodyKernel {
public:
    explicit MinkowskiDifferenceKernel(std::shared_ptr<const BodyKernel> base)
        : base_(std::move(base)) {}

    BodyKind kind() const override { return BodyKind::MinkowskiDifference; }
    int dim() const override { return base_->dim(); }
    Vec center() const override { return Vec::Zero(dim()); }
    std::string describe() const override {
        return "minkowski-difference(" + base_->describe() + ")";
    }
    bool centrally_symmetric() const override { return true; }

    double value(const Vec& z) const override {
        if (z.norm() == 0.0) return 0.0;
        Saddle s = solve(z);
        return s.t * s.t;
    }
    double value_grad(const Vec& z, Vec& grad) const override {
        Saddle s = solve(z);
        grad = (2.0 * s.t * s.theta) * s.grad_g1;
        return s.t * s.t;
    }
    HamiltonianEval eval(const Vec& z) const override {
        Saddle s = solve(z);
        HamiltonianEval e;
        e.value = s.t * s.t;
        Vec p = s.theta * s.grad_g1;  // gradient of gauge_D
        e.gradient = 2.0 * s.t * p;
        // Implicit differentiation of the saddle system in z.
        const int d = dim();
        Mat M(d + 1, d + 1);
        M.topLeftCorner(d, d) = s.theta * s.G1 + (1.0 - s.theta) * s.G2;
        M.block(0, d, d, 1) = s.grad_g1 - s.grad_g2;
        M.block(d, 0, 1, d) = (s.grad_g1 - s.grad_g2).transpose();
        M(d, d) = 0.0;
        Mat rhs(d + 1, d);
        rhs.topRows(d) = (1.0 - s.theta) * s.G2;
        rhs.bottomRows(1) = -s.grad_g2.transpose();
        Mat sol = M.colPivHouseholderQr().solve(rhs);
        Mat Dx = sol.topRows(d);
        Vec Dtheta = sol.bottomRows(1).transpose();
        Mat hess_gauge = s.theta * s.G1 * Dx + s.grad_g1 * Dtheta.transpose();
        hess_gauge = 0.5 * (hess_gauge + hess_gauge.transpose()).eval();
        e.hessian = 2.0 * (p * p.transpose()) + 2.0 * s.t * hess_gauge;
        return e;
    }

private:
    struct GaugeEval {
        double g = 0.0;
        Vec grad;
        Mat hess;
    };
    GaugeEval gauge_eval(const Vec& w) const {
        HamiltonianEval e = base_->eval(base_->center() + w);
        GaugeEval out;
        out.g = std::sqrt(e.value);
        out.grad = e.gradient / (2.0 * out.g);
        out.hess = e.hessian / (2.0 * out.g) -
                   (e.gradient * e.gradient.transpose()) / (4.0 * e.value * out.g);
        return out;
    }

    struct Saddle {
        Vec x;
        double theta = 0.5;
        double t = 0.0;  // common gauge value
        Vec grad_g1, grad_g2;
        Mat G1, G2;
    };

    Saddle solve(const Vec& z) const {
        const int d = dim();
        Vec x = 0.5 * z;
        double theta = 0.5;
        GaugeEval e1 = gauge_eval(x), e2 = gauge_eval(x - z);
        auto resid = [&](const GaugeEval& a, const GaugeEval& b, double th, Vec& F) {
            F.resize(d + 1);
            F.head(d) = th * a.grad + (1.0 - th) * b.grad;
            F[d] = a.g - b.g;
        };
        Vec F(d + 1), Fn(d + 1);
        resid(e1, e2, theta, F);
        for (int it = 0; it < 60; ++it) {
            if (F.norm() <= 1e-12) break;
            Mat M(d + 1, d + 1);
            M.topLeftCorner(d, d) = theta * e1.hess + (1.0 - theta) * e2.hess;
            M.block(0, d, d, 1) = e1.grad - e2.grad;
            M.block(d, 0, 1, d) = (e1.grad - e2.grad).transpose();
            M(d, d) = 0.0;
            Vec step = M.colPivHouseholderQr().solve(-F);
            double alpha = 1.0;
            bool moved = false;
            for (int bt = 0; bt < 40; ++bt, alpha *= 0.5) {
                Vec xn = x + alpha * step.head(d);
                double thn = theta + alpha * step[d];
                if (thn <= 1e-9 || thn >= 1.0 - 1e-9) continue;
                GaugeEval a = gauge_eval(xn), b = gauge_eval(xn - z);
                resid(a, b, thn, Fn);
                if (Fn.norm() <= (1.0 - 0.25 * alpha) * F.norm()) {
                    x = xn;
                    theta = thn;
                    e1 = std::move(a);
                    e2 = std::move(b);
                    F = Fn;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        if (F.norm() > 1e-8)
            throw NumericalError("minkowski_difference: saddle solve stalled at |F| = " +
                                 std::to_string(F.norm()) + " for " + base_->describe());
        Saddle s;
        s.x = x;
        s.theta = theta;
        s.t = 0.5 * (e1.g + e2.g);
        s.grad_g1 = e1.grad;
        s.grad_g2 = e2.grad;
        s.G1 = e1.hess;
        s.G2 = e2.hess;
        return s;
    }

    std::shared_ptr<const BodyKernel> base_;
};

// Gauge |z| + eps <u, z>^3 / |z|^2 about the center: a genuinely asymmetric
// smooth strongly convex perturbation of the ball for small eps.
class SkewedBallKernel final : public BodyKernel {
public:
    SkewedBallKernel(Vec direction, double eps, Vec center)
        : u_(std::move(direction)), eps_(eps), center_(std::move(center)) {
        check_even_dim(static_cast<int>(center_.size()), "SkewedBall");
        if (u_.size() != center_.size())
            throw ValidationError("SkewedBall: direction dimension mismatch");
        double n = u_.norm();
        if (n == 0.0) throw ValidationError("SkewedBall: zero direction");
        u_ /= n;
        if (std::abs(eps_) >= 0.3)
            throw ValidationError("SkewedBall: |eps| must be < 0.3 to keep convexity");
    }

    BodyKind kind() const override { return BodyKind::SkewedBall; }
    int dim() const override { return static_cast<int>(center_.size()); }
    Vec center() const override { return center_; }
    std::string describe() const override { return "skewed-ball(eps=" + std::to_string(eps_) + ")"; }
    bool centrally_symmetric() const override { return false; }

    double value(const Vec& z) const override {
        Vec zt = z - center_;
        double g = gauge(zt);
        return g * g;
    }
    double value_grad(const Vec& z, Vec& grad) const override {
        Vec zt = z - center_;
        double r = zt.norm();
        double a = u_.dot(zt);
        double rho = r * r;
        double g = r + eps_ * a * a * a / rho;
        grad = zt / r + eps_ * (3.0 * a * a / rho) * u_ - eps_ * (2.0 * a * a * a / (rho * rho)) * zt;
        grad *= 2.0 * g;
        return g * g;
    }
    HamiltonianEval eval(const Vec& z) const override {
        HamiltonianEval e;
        Vec zt = z - center_;
        double r = zt.norm();
        double a = u_.dot(zt);
        double rho = r * r;
        double g = r + eps_ * a * a * a / rho;
        Vec dg = zt / r + eps_ * (3.0 * a * a / rho) * u_ -
                 eps_ * (2.0 * a * a * a / (rho * rho)) * zt;
        Mat I = Mat::Identity(dim(), dim());
        Mat hess_t = (6.0 * a / rho) * (u_ * u_.transpose()) -
                     (6.0 * a * a / (rho * rho)) *
                         (u_ * zt.transpose() + zt * u_.transpose()) -
                     (2.0 * a * a * a / (rho * rho)) * I +
                     (8.0 * a * a * a / (rho * rho * rho)) * (zt * zt.transpose());
        Mat hess_g = (I - (zt / r) * (zt / r).transpose()) / r + eps_ * hess_t;
        e.value = g * g;
        e.gradient = 2.0 * g * dg;
        e.hessian = 2.0 * (dg * dg.transpose()) + 2.0 * g * hess_g;
        return e;
    }
    double expected_min_period() const override { return 1.5; }

private:
    double gauge(const Vec& zt) const {
        double r = zt.norm();
        double a = u_.dot(zt);
        return r + eps_ * a * a * a / (r * r);
    }

    Vec u_;
    double eps_;
    Vec center_;
};

}  // namespace detail

/// Value-semantic handle to an immutable body.
class ConvexBody {
public:
    static ConvexBody ball(int dim) {
        return ellipsoid(Mat::Identity(dim, dim), Vec::Zero(dim));
    }
    static ConvexBody ellipsoid(Mat A, Vec center) {
        return ConvexBody(std::make_shared<detail::EllipsoidKernel>(std::move(A), std::move(center)));
    }
    static ConvexBody ellipsoid(Mat A) {
        Vec c = Vec::Zero(A.rows());
        return ellipsoid(std::move(A), std::move(c));
    }
    /// Ellipsoid with block-diagonal H = sum a_i (p_i^2 + q_i^2).
    static ConvexBody ellipsoid_diag(const std::vector<double>& a, Vec center) {
        const int d = 2 * static_cast<int>(a.size());
        Mat A = Mat::Zero(d, d);
        for (size_t i = 0; i < a.size(); ++i) {
            A(2 * i, 2 * i) = a[i];
            A(2 * i + 1, 2 * i + 1) = a[i];
        }
        return ellipsoid(std::move(A), std::move(center));
    }
    static ConvexBody ellipsoid_diag(const std::vector<double>& a) {
        return ellipsoid_diag(a, Vec::Zero(2 * static_cast<int>(a.size())));
    }
    static ConvexBody smoothed_polydisc(int m, std::vector<double> radii, Vec center) {
        return ConvexBody(std::make_shared<detail::SmoothedPolydiscKernel>(m, std::move(radii),
                                                                           std::move(center)));
    }
    static ConvexBody smoothed_polydisc(int m, std::vector<double> radii) {
        Vec c = Vec::Zero(2 * static_cast<int>(radii.size()));
        return smoothed_polydisc(m, std::move(radii), std::move(c));
    }
    static ConvexBody transformed(const ConvexBody& base, AffineSymplecticMap map) {
        return ConvexBody(std::make_shared<detail::TransformedKernel>(base.kernel_, std::move(map)));
    }
    static ConvexBody skewed_ball(int dim, Vec direction, double eps) {
        return ConvexBody(std::make_shared<detail::SkewedBallKernel>(std::move(direction), eps,
                                                                     Vec::Zero(dim)));
    }

    BodyKind kind() const { return kernel_->kind(); }
    int dim() const { return kernel_->dim(); }
    Vec center() const { return kernel_->center(); }
    std::string describe() const { return kernel_->describe(); }
    bool centrally_symmetric() const { return kernel_->centrally_symmetric(); }
    std::optional<std::pair<Mat, Vec>> as_quadratic() const { return kernel_->as_quadratic(); }

    double value(const Vec& z) const { return kernel_->value(z); }
    double value_grad(const Vec& z, Vec& grad) const { return kernel_->value_grad(z, grad); }
    double expected_min_period() const { return kernel_->expected_min_period(); }

    const detail::BodyKernel& kernel() const { return *kernel_; }
    std::shared_ptr<const detail::BodyKernel> kernel_ptr() const { return kernel_; }

private:
    explicit ConvexBody(std::shared_ptr<const detail::BodyKernel> k) : kernel_(std::move(k)) {}
    friend ConvexBody polar_body(const ConvexBody&, bool);
    friend ConvexBody minkowski_difference(const ConvexBody&);

    std::shared_ptr<const detail::BodyKernel> kernel_;
};

inline HamiltonianEval evaluate_H(const ConvexBody& body, const Vec& z) {
    return body.kernel().eval(z);
}

/// center + d / sqrt(H(center + d)): the radial point of {H = 1} along d.
inline Vec boundary_point(const ConvexBody& body, const Vec& direction) {
    if (direction.norm() == 0.0) throw ValidationError("boundary_point: zero direction");
    Vec c = body.center();
    Vec p = c + direction;
    double H = body.value(p);
    return c + direction / std::sqrt(H);
}

inline BoundaryFrame frame_at(const ConvexBody& body, const Vec& z) {
    Vec grad;
    double H = body.value_grad(z, grad);
    if (std::abs(H - 1.0) > 1e-8)
        throw ValidationError("frame_at: point is off the boundary, |H-1| = " +
                              std::to_string(std::abs(H - 1.0)));
    BoundaryFrame f;
    f.point = z;
    f.normal = grad / grad.norm();
    f.char_dir = apply_J(f.normal);
    return f;
}

namespace detail {

// Support via the unconstrained convex problem min_x H(c + x) - <u, x>:
// its stationary point satisfies grad H = u and rescales radially onto the
// boundary maximizer (H is 2-homogeneous and convex, so damped Newton with an
// Armijo line search converges globally).
inline SupportEval support_newton(const BodyKernel& k, const Vec& u) {
    const int d = k.dim();
    const Vec c = k.center();
    double best_res = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 4; ++restart) {
        Vec x = u;
        if (restart > 0) {
            std::mt19937_64 rng(derive_seed(0x5099u, 0, static_cast<std::uint64_t>(restart)));
            std::normal_distribution<double> gauss(0.0, 0.3);
            for (int i = 0; i < d; ++i) x[i] += gauss(rng);
        }
        x /= std::sqrt(k.value(c + x));
        {
            Vec g0;
            k.value_grad(c + x, g0);
            x /= g0.norm();  // scale so |grad H| ~ |u| = 1
        }
        HamiltonianEval e = k.eval(c + x);
        double psi = e.value - u.dot(x);
        double lambda = 0.0;  // Levenberg damping against untrustworthy Hessians
        for (int it = 0; it < 300; ++it) {
            Vec G = e.gradient - u;
            double res = G.norm();
            best_res = std::min(best_res, res);
            if (res <= 1e-12) break;
            double scale = std::abs(e.hessian.trace()) / d + 1e-12;
            bool moved = false;
            for (int damp = 0; damp < 10 && !moved; ++damp) {
                Mat H = e.hessian + (lambda * scale) * Mat::Identity(d, d);
                Vec step = -Eigen::LDLT<Mat>(H).solve(G);
                if (!step.allFinite() || step.dot(G) >= 0.0) step = -G / scale;
                double slope = G.dot(step);
                double alpha = 1.0;
                for (int bt = 0; bt < 40; ++bt, alpha *= 0.5) {
                    Vec xn = x + alpha * step;
                    double Hn = k.value(c + xn);
                    double psin = Hn - u.dot(xn);
                    if (std::isfinite(psin) && psin <= psi + 1e-4 * alpha * slope) {
                        x = xn;
                        psi = psin;
                        e = k.eval(c + x);
                        moved = true;
                        break;
                    }
                }
                if (!moved) lambda = (lambda == 0.0) ? 1e-8 : lambda * 100.0;
            }
            if (moved && lambda > 0.0) lambda *= 1e-2;
            if (!moved) break;
        }
        if ((e.gradient - u).norm() <= 1e-7 * std::max(1.0, e.gradient.norm())) {
            SupportEval s;
            s.direction = u;
            s.maximizer = c + x / std::sqrt(e.value);
            s.value = u.dot(s.maximizer);
            return s;
        }
    }
    throw NumericalError("support: Newton failed for " + k.describe() + ", best residual " +
                         std::to_string(best_res));
}

inline SupportEval kernel_support(const BodyKernel& k, const Vec& direction) {
    double n = direction.norm();
    if (n == 0.0) throw ValidationError("support: zero direction");
    Vec u = direction / n;
    if (auto s = k.support_closed_form(u)) return *s;
    return support_newton(k, u);
}

}  // namespace detail

/// Support function evaluation for the unit direction along `direction`.
inline SupportEval support(const ConvexBody& body, const Vec& direction) {
    return detail::kernel_support(body.kernel(), direction);
}

/// The generic-Newton route, regardless of closed forms. Used to cross-check
/// the identities the fast paths rely on.
inline SupportEval support_via_newton(const ConvexBody& body, const Vec& direction) {
    double n = direction.norm();
    if (n == 0.0) throw ValidationError("support: zero direction");
    return detail::support_newton(body.kernel(), direction / n);
}

/// K^polar (flag off) or K^omega = J K^polar (flag on) for centered
/// centrally symmetric bodies. Ellipsoids map to ellipsoids in closed form.
inline ConvexBody polar_body(const ConvexBody& body, bool symplectic) {
    if (body.center().norm() > 1e-10)
        throw ValidationError("polar_body: body must be centered at the origin");
    if (!body.centrally_symmetric())
        throw ValidationError("polar_body: body must be centrally symmetric");
    const int d = body.dim();
    if (auto q = body.as_quadratic()) {
        Mat Ainv = q->first.llt().solve(Mat::Identity(d, d));
        Ainv = 0.5 * (Ainv + Ainv.transpose());
        if (!symplectic) return ConvexBody::ellipsoid(std::move(Ainv), Vec::Zero(d));
        Mat J = standard_J(d);
        Mat As = J * Ainv * J.transpose();
        return ConvexBody::ellipsoid(0.5 * (As + As.transpose()), Vec::Zero(d));
    }
    ConvexBody polar{std::make_shared<detail::PolarKernel>(body.kernel_ptr())};
    if (!symplectic) return polar;
    return ConvexBody::transformed(polar, AffineSymplecticMap(standard_J(d), Vec::Zero(d)));
}

/// K - K = {x - y : x, y in K}. Centered 2K for ellipsoids; otherwise backed
/// by the inf-convolution gauge solve. Independent of translations of K.
inline ConvexBody minkowski_difference(const ConvexBody& body) {
    const int d = body.dim();
    if (auto q = body.as_quadratic())
        return ConvexBody::ellipsoid(0.25 * q->first, Vec::Zero(d));
    return ConvexBody{std::make_shared<detail::MinkowskiDifferenceKernel>(body.kernel_ptr())};
}

struct VolumeEstimate {
    double value = 0.0;
    double std_error = 0.0;  // zero for closed forms
};

struct MonteCarloOptions {
    long samples = 2'000'000;
    std::uint64_t seed = 0;
};

inline double ellipsoid_volume(const Mat& A) {
    const int n = static_cast<int>(A.rows()) / 2;
    double pi_n = 1.0, nfact = 1.0;
    for (int i = 1; i <= n; ++i) {
        pi_n *= 3.14159265358979323846;
        nfact *= i;
    }
    return pi_n / nfact / std::sqrt(A.determinant());
}

inline VolumeEstimate volume_closed_form(const ConvexBody& body) {
    auto q = body.as_quadratic();
    if (!q)
        throw ValidationError("volume: closed form is only available for ellipsoids, not " +
                              body.describe());
    return {ellipsoid_volume(q->first), 0.0};
}

/// Rejection sampling in the support-function bounding box. Sample streams are
/// split into fixed chunks so the estimate is independent of the worker count.
inline VolumeEstimate volume_monte_carlo(const ConvexBody& body, const MonteCarloOptions& opt) {
    if (opt.samples <= 0) throw ValidationError("volume: sample count must be positive");
    const int d = body.dim();
    Vec lo(d), hi(d);
    for (int i = 0; i < d; ++i) {
        Vec e = Vec::Zero(d);
        e[i] = 1.0;
        hi[i] = support(body, e).value;
        lo[i] = -support(body, -e).value;
    }
    double box_volume = 1.0;
    for (int i = 0; i < d; ++i) box_volume *= hi[i] - lo[i];

    const int chunks = 256;
    const long per_chunk = (opt.samples + chunks - 1) / chunks;
    std::vector<long> hits(chunks, 0);
    std::vector<long> tries(chunks, 0);
    parallel_for(chunks, [&](int chunk) {
        std::mt19937_64 rng(derive_seed(opt.seed, /*tag=*/0x7601u, chunk));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Vec z(d);
        long h = 0;
        for (long s = 0; s < per_chunk; ++s) {
            for (int i = 0; i < d; ++i) z[i] = lo[i] + (hi[i] - lo[i]) * unif(rng);
            if (body.value(z) <= 1.0) ++h;
        }
        hits[chunk] = h;
        tries[chunk] = per_chunk;
    });
    long total_hits = 0, total = 0;
    for (int i = 0; i < chunks; ++i) {
        total_hits += hits[i];
        total += tries[i];
    }
    double p = static_cast<double>(total_hits) / static_cast<double>(total);
    VolumeEstimate est;
    est.value = box_volume * p;
    est.std_error = box_volume * std::sqrt(std::max(p * (1.0 - p), 1e-300) / total);
    return est;
}

struct StrongConvexityReport {
    double min_tangential_eigenvalue = 0.0;  // scaled by 1 / |grad H|
    bool pass = false;
};

inline constexpr double kStrongConvexityEps = 1e-6;

/// Minimum eigenvalue of Hess H restricted to boundary tangent spaces,
/// scaled by 1/|grad H| (proportional to the second fundamental form).
/// Note: smoothed polydiscs with large m dip below the default eps near the
/// block circles (curvature degenerates there); the reported minimum stays
/// strictly positive for samples off those circles.
inline StrongConvexityReport strong_convexity_check(const ConvexBody& body, int n_samples,
                                                    std::uint64_t seed,
                                                    double eps = kStrongConvexityEps) {
    if (n_samples < 1) throw ValidationError("strong_convexity_check: need n_samples >= 1");
    const int d = body.dim();
    std::mt19937_64 rng(derive_seed(seed, 0x5c01u, 0));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double min_eig = std::numeric_limits<double>::infinity();
    for (int s = 0; s < n_samples; ++s) {
        Vec dir(d);
        for (int i = 0; i < d; ++i) dir[i] = gauss(rng);
        Vec z = boundary_point(body, dir);
        HamiltonianEval e = body.kernel().eval(z);
        Vec n = e.gradient / e.gradient.norm();
        // Orthonormal basis of the tangent hyperplane via Householder.
        Mat Q = Mat::Identity(d, d);
        Vec v = n;
        v[0] += (n[0] >= 0.0 ? 1.0 : -1.0);
        Q -= (2.0 / v.squaredNorm()) * (v * v.transpose());
        Mat T = Q.rightCols(d - 1);
        Mat restricted = T.transpose() * e.hessian * T;
        Eigen::SelfAdjointEigenSolver<Mat> es(restricted);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff() / e.gradient.norm());
    }
    return {min_eig, min_eig > eps};
}

}  // namespace sympdyn
