#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "sympdyn/common.hpp"

// Fixed symplectic conventions on R^{2n}. Coordinates are interleaved
// (p1, q1, ..., pn, qn); J acts blockwise as J e_{p_i} = e_{q_i},
// J e_{q_i} = -e_{p_i}; omega(u, v) = <J u, v> = sum dp_i ^ dq_i.

namespace sympdyn {

inline constexpr double kSymplecticMapTol = 1e-10;

/// J v in place-free form.
inline Vec apply_J(const Vec& v) {
    check_even_dim(static_cast<int>(v.size()), "apply_J");
    Vec out(v.size());
    for (Eigen::Index i = 0; i < v.size(); i += 2) {
        out[i] = -v[i + 1];
        out[i + 1] = v[i];
    }
    return out;
}

inline void apply_J_into(const Vec& v, Vec& out) {
    out.resize(v.size());
    for (Eigen::Index i = 0; i < v.size(); i += 2) {
        out[i] = -v[i + 1];
        out[i + 1] = v[i];
    }
}

/// The matrix of J (block-diagonal rotation blocks).
inline Mat standard_J(int dim) {
    check_even_dim(dim, "standard_J");
    Mat J = Mat::Zero(dim, dim);
    for (int i = 0; i < dim; i += 2) {
        J(i, i + 1) = -1.0;
        J(i + 1, i) = 1.0;
    }
    return J;
}

/// omega(u, v) = sum_i (u_{p_i} v_{q_i} - u_{q_i} v_{p_i}).
inline double omega(const Vec& u, const Vec& v) {
    if (u.size() != v.size())
        throw ValidationError("omega: dimension mismatch");
    check_even_dim(static_cast<int>(u.size()), "omega");
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); i += 2)
        s += u[i] * v[i + 1] - u[i + 1] * v[i];
    return s;
}

/// lambda_z(v) for lambda = (1/2) sum (p_i dq_i - q_i dp_i); equals omega(z, v)/2.
inline double liouville(const Vec& z, const Vec& v) { return 0.5 * omega(z, v); }

/// Cyclic list of vertices; consecutive vertices must be distinct.
struct ClosedPolyline {
    std::vector<Vec> vertices;

    explicit ClosedPolyline(std::vector<Vec> vs) : vertices(std::move(vs)) {
        if (vertices.size() < 3)
            throw ValidationError("ClosedPolyline: need at least 3 vertices");
        const Eigen::Index d = vertices.front().size();
        check_even_dim(static_cast<int>(d), "ClosedPolyline");
        for (size_t k = 0; k < vertices.size(); ++k) {
            if (vertices[k].size() != d)
                throw ValidationError("ClosedPolyline: inconsistent vertex dimensions");
            const Vec& next = vertices[(k + 1) % vertices.size()];
            if ((vertices[k] - next).norm() == 0.0)
                throw ValidationError("ClosedPolyline: consecutive vertices coincide");
        }
    }
};

/// Discrete action: the exact integral of lambda along the polygon edges,
/// (1/2) sum omega(z_k, z_{k+1}) cyclically. Orientation-sensitive, invariant
/// under affine symplectic maps of the vertex set.
inline double curve_action(const ClosedPolyline& c) {
    double s = 0.0;
    const size_t n = c.vertices.size();
    for (size_t k = 0; k < n; ++k)
        s += omega(c.vertices[k], c.vertices[(k + 1) % n]);
    return 0.5 * s;
}

/// z -> M z + t with M^T J M = J (checked at construction to 1e-10).
class AffineSymplecticMap {
public:
    AffineSymplecticMap(Mat linear, Vec translation)
        : linear_(std::move(linear)), translation_(std::move(translation)) {
        const int d = static_cast<int>(translation_.size());
        check_even_dim(d, "AffineSymplecticMap");
        if (linear_.rows() != d || linear_.cols() != d)
            throw ValidationError("AffineSymplecticMap: linear block must be 2n x 2n");
        Mat J = standard_J(d);
        double defect = (linear_.transpose() * J * linear_ - J).cwiseAbs().maxCoeff();
        if (!(defect <= kSymplecticMapTol))
            throw ValidationError("AffineSymplecticMap: M^T J M - J defect " +
                                  std::to_string(defect) + " exceeds 1e-10");
    }

    static AffineSymplecticMap identity(int dim) {
        return AffineSymplecticMap(Mat::Identity(dim, dim), Vec::Zero(dim));
    }

    int dim() const { return static_cast<int>(translation_.size()); }
    const Mat& linear() const { return linear_; }
    const Vec& translation() const { return translation_; }

    Vec apply(const Vec& z) const { return linear_ * z + translation_; }
    Vec apply_linear(const Vec& v) const { return linear_ * v; }

    /// Exact inverse via M^{-1} = -J M^T J.
    AffineSymplecticMap inverse() const {
        Mat J = standard_J(dim());
        Mat Minv = -J * linear_.transpose() * J;
        return AffineSymplecticMap(Minv, -(Minv * translation_));
    }

    /// this after other: z -> this(other(z)).
    AffineSymplecticMap compose(const AffineSymplecticMap& other) const {
        return AffineSymplecticMap(linear_ * other.linear_,
                                   linear_ * other.translation_ + translation_);
    }

private:
    Mat linear_;
    Vec translation_;
};

namespace detail {

// Elementary exactly-symplectic factors.

inline void apply_block_rotation(Mat& M, int block, double theta) {
    const int i = 2 * block;
    const double c = std::cos(theta), s = std::sin(theta);
    Mat rows = M.middleRows(i, 2);
    M.row(i) = c * rows.row(0) - s * rows.row(1);
    M.row(i + 1) = s * rows.row(0) + c * rows.row(1);
}

inline void apply_block_rescaling(Mat& M, int block, double c) {
    const int i = 2 * block;
    M.row(i) *= c;
    M.row(i + 1) /= c;
}

// Time-s flow of the quadratic Hamiltonian x_a x_b for coordinates a, b that
// are not an omega-conjugate (p_i, q_i) pair: x -> x + s (x_b J e_a + x_a J e_b).
inline void apply_shear(Mat& M, int a, int b, double s) {
    Vec Ja = Vec::Zero(M.rows());
    Vec Jb = Vec::Zero(M.rows());
    {
        Vec ea = Vec::Zero(M.rows());
        ea[a] = 1.0;
        apply_J_into(ea, Ja);
        Vec eb = Vec::Zero(M.rows());
        eb[b] = 1.0;
        apply_J_into(eb, Jb);
    }
    Mat rowA = M.row(a);
    Mat rowB = M.row(b);
    M += s * (Ja * rowB + Jb * rowA);
}

}  // namespace detail

/// Deterministic random affine symplectic map: a product of block rotations,
/// symplectic shears and block rescalings, plus a translation. spread = 0
/// yields the identity.
inline AffineSymplecticMap random_affine_symplectic(std::uint64_t seed, double spread,
                                                    int dim = 4) {
    check_even_dim(dim, "random_affine_symplectic");
    if (spread < 0.0) throw ValidationError("random_affine_symplectic: spread must be >= 0");
    const int n = dim / 2;
    std::mt19937_64 rng(splitmix64(seed ^ 0x51e9'd0a7'77f0'91c3ULL));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_int_distribution<int> pick_block(0, n - 1);
    std::uniform_int_distribution<int> pick_coord(0, dim - 1);
    std::uniform_int_distribution<int> pick_kind(0, 2);

    Mat M = Mat::Identity(dim, dim);
    const int factors = 4 * n;
    for (int k = 0; k < factors; ++k) {
        switch (pick_kind(rng)) {
            case 0:
                detail::apply_block_rotation(M, pick_block(rng), spread * unit(rng) * 3.14159);
                break;
            case 1:
                detail::apply_block_rescaling(M, pick_block(rng), std::exp(spread * unit(rng)));
                break;
            default: {
                int a = pick_coord(rng);
                int b = pick_coord(rng);
                if (a / 2 == b / 2 && a != b) b = a;  // avoid the conjugate pair
                detail::apply_shear(M, a, b, spread * unit(rng));
                break;
            }
        }
    }
    Vec t(dim);
    for (int i = 0; i < dim; ++i) t[i] = spread * unit(rng);
    return AffineSymplecticMap(std::move(M), std::move(t));
}

}  // namespace sympdyn
