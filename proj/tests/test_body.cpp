#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "sympdyn/body.hpp"
#include "test_util.hpp"

using namespace sympdyn;
using testutil::fd_gradient;
using testutil::fd_hessian;
using testutil::random_unit;
using testutil::random_vec;

namespace {
constexpr double pi = std::numbers::pi;
Vec unit(int dim, int i) {
    Vec e = Vec::Zero(dim);
    e[i] = 1.0;
    return e;
}
}  // namespace

TEST_CASE("evaluate_H closed forms") {
    auto ball = ConvexBody::ball(4);
    auto e = evaluate_H(ball, unit(4, 0));
    CHECK(e.value == Catch::Approx(1.0));
    CHECK((e.gradient - 2.0 * unit(4, 0)).norm() < 1e-14);
    CHECK((e.hessian - 2.0 * Mat::Identity(4, 4)).norm() < 1e-14);

    // H = p1^2 + q1^2 + 2 p2^2 + 2 q2^2 at e_{p2}
    auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
    auto e2 = evaluate_H(ell, unit(4, 2));
    CHECK(e2.value == Catch::Approx(2.0));
    CHECK((e2.gradient - 4.0 * unit(4, 2)).norm() < 1e-14);
}

TEST_CASE("gradients and Hessians match finite differences") {
    std::mt19937_64 rng(31);
    auto check_body = [&](const ConvexBody& body, double tol_grad, double tol_hess) {
        for (int trial = 0; trial < 8; ++trial) {
            Vec z = random_vec(rng, body.dim());
            if (z.norm() < 0.3) z *= 0.6 / z.norm();
            auto e = evaluate_H(body, z);
            Vec g_fd = fd_gradient(body, z);
            CHECK((e.gradient - g_fd).norm() <= tol_grad * std::max(1.0, g_fd.norm()));
            Mat h_fd = fd_hessian(body, z);
            CHECK((e.hessian - h_fd).cwiseAbs().maxCoeff() <=
                  tol_hess * std::max(1.0, h_fd.cwiseAbs().maxCoeff()));
        }
    };
    check_body(ConvexBody::smoothed_polydisc(8, {1.0, 1.0}), 1e-6, 1e-5);
    check_body(ConvexBody::ellipsoid_diag({1.0, 3.0}), 1e-6, 1e-6);
    check_body(ConvexBody::skewed_ball(4, unit(4, 0) + 0.5 * unit(4, 3), 0.15), 1e-6, 1e-5);
    check_body(ConvexBody::transformed(ConvexBody::ellipsoid_diag({1.0, 2.0}),
                                       random_affine_symplectic(4, 0.5, 4)),
               1e-6, 1e-6);
}

TEST_CASE("Euler identity for 2-homogeneous H") {
    std::mt19937_64 rng(37);
    std::vector<ConvexBody> bodies = {
        ConvexBody::ball(4),
        ConvexBody::smoothed_polydisc(16, {1.0, 0.7}),
        ConvexBody::skewed_ball(4, unit(4, 1), 0.1),
        ConvexBody::transformed(ConvexBody::ball(4), random_affine_symplectic(8, 0.6, 4)),
    };
    for (const auto& body : bodies) {
        Vec c = body.center();
        for (int trial = 0; trial < 50; ++trial) {
            Vec z = random_vec(rng, 4);
            if ((z - c).norm() < 0.3) z = c + (z - c) * 0.5 / std::max((z - c).norm(), 1e-9);
            Vec g;
            double H = body.value_grad(z, g);
            CHECK(g.dot(z - c) == Catch::Approx(2.0 * H).epsilon(1e-9));
        }
    }
}

TEST_CASE("smoothed polydisc flags degenerate Hessian points") {
    auto pd = ConvexBody::smoothed_polydisc(8, {1.0, 1.0});
    Vec axis = unit(4, 0);  // block 2 vanishes there
    auto e = evaluate_H(pd, axis);
    CHECK(e.hessian_degenerate);
    Vec generic(4);
    generic << 0.8, 0.1, 0.5, -0.4;
    CHECK_FALSE(evaluate_H(pd, generic).hessian_degenerate);
    // m = 2 stays regular at axis points
    CHECK_FALSE(evaluate_H(ConvexBody::smoothed_polydisc(2, {1.0, 1.0}), axis).hessian_degenerate);
}

TEST_CASE("boundary_point") {
    auto ball = ConvexBody::ball(4);
    CHECK((boundary_point(ball, unit(4, 3)) - unit(4, 3)).norm() < 1e-14);
    auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
    CHECK((boundary_point(ell, unit(4, 2)) - unit(4, 2) / std::sqrt(2.0)).norm() < 1e-14);
    CHECK_THROWS_AS(boundary_point(ball, Vec::Zero(4)), ValidationError);

    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        Vec d = random_vec(rng, 4);
        Vec z = boundary_point(ell, d);
        CHECK(std::abs(ell.value(z) - 1.0) <= 1e-12);
    }
    // commutes with transforms applied to direction preimages
    auto map = random_affine_symplectic(77, 0.6, 4);
    auto moved = ConvexBody::transformed(ell, map);
    for (int trial = 0; trial < 10; ++trial) {
        Vec d = random_vec(rng, 4);
        Vec lhs = map.apply(boundary_point(ell, d));
        Vec rhs = boundary_point(moved, map.apply_linear(d));
        CHECK((lhs - rhs).norm() < 1e-10);
    }
}

TEST_CASE("frame_at") {
    auto ball = ConvexBody::ball(4);
    auto f = frame_at(ball, unit(4, 0));
    CHECK((f.normal - unit(4, 0)).norm() < 1e-14);
    CHECK((f.char_dir - unit(4, 1)).norm() < 1e-14);

    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        Vec z = random_unit(rng, 4);
        auto fr = frame_at(ball, z);
        CHECK((fr.char_dir - apply_J(z)).norm() < 1e-12);
        CHECK(std::abs(fr.normal.dot(fr.char_dir)) < 1e-14);
    }
    auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
    auto f2 = frame_at(ell, unit(4, 2) / std::sqrt(2.0));
    CHECK((f2.normal - unit(4, 2)).norm() < 1e-12);
    CHECK((f2.char_dir - unit(4, 3)).norm() < 1e-12);
    CHECK_THROWS_AS(frame_at(ball, 1.01 * unit(4, 0)), ValidationError);
}

TEST_CASE("support closed forms and Newton agree") {
    auto ball = ConvexBody::ball(4);
    CHECK(support(ball, unit(4, 0)).value == Catch::Approx(1.0));
    auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
    CHECK(support(ell, unit(4, 2)).value == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 15; ++trial) {
        Vec u = random_unit(rng, 4);
        auto closed = support(ell, u);
        auto newton = support_via_newton(ell, u);
        CHECK(newton.value == Catch::Approx(closed.value).epsilon(1e-10));
        CHECK(closed.value == Catch::Approx(u.dot(closed.maximizer)).epsilon(1e-12));
        // dominance over random boundary samples
        for (int s = 0; s < 10; ++s) {
            Vec x = boundary_point(ell, random_vec(rng, 4));
            CHECK(u.dot(x) <= closed.value + 1e-10);
        }
    }
}

TEST_CASE("support of transformed bodies: identity route vs Newton route") {
    std::mt19937_64 rng(53);
    auto base = ConvexBody::smoothed_polydisc(8, {1.0, 0.8});
    auto map = random_affine_symplectic(5, 0.5, 4);
    auto moved = ConvexBody::transformed(base, map);
    for (int trial = 0; trial < 10; ++trial) {
        Vec u = random_unit(rng, 4);
        double fast = support(moved, u).value;
        double generic = support_via_newton(moved, u).value;
        double identity = map.linear().transpose().eval().operator*(u).norm() *
                              support(base, map.linear().transpose() * u).value +
                          map.translation().dot(u);
        CHECK(fast == Catch::Approx(generic).margin(1e-8));
        CHECK(fast == Catch::Approx(identity).margin(1e-10));
    }
}

TEST_CASE("support duality for centered ellipsoids") {
    std::mt19937_64 rng(59);
    auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
    auto polar = polar_body(ell, false);
    for (int trial = 0; trial < 20; ++trial) {
        Vec u = random_unit(rng, 4);
        CHECK(support(polar, u).value ==
              Catch::Approx(std::sqrt(ell.value(u))).epsilon(1e-9));
    }
}

TEST_CASE("polar bodies") {
    auto ball = ConvexBody::ball(4);
    for (bool symplectic : {false, true}) {
        auto p = polar_body(ball, symplectic);
        auto q = p.as_quadratic();
        REQUIRE(q.has_value());
        CHECK((q->first - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
    }
    auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
    auto q = polar_body(ell, false).as_quadratic();
    REQUIRE(q.has_value());
    Mat expected = Mat::Zero(4, 4);
    expected.diagonal() << 1.0, 1.0, 0.5, 0.5;
    CHECK((q->first - expected).cwiseAbs().maxCoeff() < 1e-12);

    Vec off = 0.3 * unit(4, 0);
    CHECK_THROWS_AS(polar_body(ConvexBody::ellipsoid(Mat::Identity(4, 4), off), false),
                    ValidationError);
    CHECK_THROWS_AS(polar_body(ConvexBody::skewed_ball(4, unit(4, 0), 0.1), false),
                    ValidationError);
}

TEST_CASE("double symplectic polar recovers -K") {
    std::mt19937_64 rng(61);
    SECTION("ellipsoid, closed forms") {
        auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
        auto pp = polar_body(polar_body(ell, true), true);
        for (int trial = 0; trial < 30; ++trial) {
            Vec u = random_unit(rng, 4);
            CHECK(support(pp, u).value == Catch::Approx(support(ell, -u).value).margin(1e-10));
        }
    }
    SECTION("smoothed polydisc, generic route") {
        auto pd = ConvexBody::smoothed_polydisc(8, {1.0, 1.0});
        auto pp = polar_body(polar_body(pd, true), true);
        for (int trial = 0; trial < 8; ++trial) {
            Vec u = random_unit(rng, 4);
            CHECK(support(pp, u).value == Catch::Approx(support(pd, -u).value).margin(1e-8));
        }
    }
}

TEST_CASE("minkowski difference") {
    SECTION("centered ellipsoid doubles") {
        auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
        auto diff = minkowski_difference(ell);
        std::mt19937_64 rng(67);
        for (int trial = 0; trial < 20; ++trial) {
            Vec u = random_unit(rng, 4);
            CHECK(support(diff, u).value ==
                  Catch::Approx(2.0 * support(ell, u).value).epsilon(1e-12));
        }
        CHECK(volume_closed_form(diff).value ==
              Catch::Approx(16.0 * volume_closed_form(ell).value).epsilon(1e-12));
    }
    SECTION("translation independence") {
        Mat A = Mat::Identity(4, 4);
        auto centered = minkowski_difference(ConvexBody::ellipsoid(A, Vec::Zero(4)));
        auto moved = minkowski_difference(ConvexBody::ellipsoid(A, 0.4 * unit(4, 1)));
        std::mt19937_64 rng(71);
        for (int trial = 0; trial < 10; ++trial) {
            Vec u = random_unit(rng, 4);
            CHECK(support(moved, u).value ==
                  Catch::Approx(support(centered, u).value).epsilon(1e-12));
        }
    }
    SECTION("support additivity through the generic route") {
        auto pd = ConvexBody::smoothed_polydisc(8, {1.0, 1.0});
        auto diff = minkowski_difference(pd);
        std::mt19937_64 rng(73);
        for (int trial = 0; trial < 6; ++trial) {
            Vec u = random_unit(rng, 4);
            double sum = support(pd, u).value + support(pd, -u).value;
            CHECK(support(diff, u).value == Catch::Approx(sum).margin(1e-8));
        }
    }
}

TEST_CASE("volume closed forms") {
    CHECK(volume_closed_form(ConvexBody::ball(4)).value ==
          Catch::Approx(pi * pi / 2.0).epsilon(1e-13));
    CHECK(volume_closed_form(ConvexBody::ellipsoid_diag({1.0, 2.0})).value ==
          Catch::Approx(pi * pi / 4.0).epsilon(1e-13));
    CHECK_THROWS_AS(volume_closed_form(ConvexBody::smoothed_polydisc(8, {1.0, 1.0})),
                    ValidationError);
    auto moved = ConvexBody::transformed(ConvexBody::ellipsoid_diag({1.0, 2.0}),
                                         random_affine_symplectic(12, 0.7, 4));
    CHECK(volume_closed_form(moved).value == Catch::Approx(pi * pi / 4.0).epsilon(1e-9));
}

TEST_CASE("Monte Carlo volume") {
    auto pd = ConvexBody::smoothed_polydisc(16, {1.0, 1.0});
    MonteCarloOptions opt;
    opt.samples = 200'000;
    opt.seed = 5;
    auto est = volume_monte_carlo(pd, opt);

    SECTION("agrees with the 10x-sample reference within 3 sigma") {
        MonteCarloOptions big = opt;
        big.samples = 2'000'000;
        big.seed = 9;
        auto ref = volume_monte_carlo(pd, big);
        double sigma = std::hypot(est.std_error, ref.std_error);
        CHECK(std::abs(est.value - ref.value) <= 3.0 * sigma);
    }
    SECTION("agrees with the superellipse area formula") {
        double m = 16.0;
        double area01 = std::tgamma(1.0 + 1.0 / m) * std::tgamma(1.0 + 1.0 / m) /
                        std::tgamma(1.0 + 2.0 / m);
        double truth = pi * pi * area01;
        CHECK(std::abs(est.value - truth) <= 4.0 * est.std_error);
    }
    SECTION("independent of worker count") {
        set_thread_budget(1);
        auto a = volume_monte_carlo(pd, opt);
        set_thread_budget(4);
        auto b = volume_monte_carlo(pd, opt);
        set_thread_budget(0);
        CHECK(a.value == b.value);
        CHECK(a.std_error == b.std_error);
    }
    SECTION("ball estimate brackets the closed form") {
        auto ball = ConvexBody::ball(4);
        MonteCarloOptions o2;
        o2.samples = 400'000;
        o2.seed = 21;
        auto e2 = volume_monte_carlo(ball, o2);
        CHECK(std::abs(e2.value - pi * pi / 2.0) <= 4.0 * e2.std_error);
    }
}

TEST_CASE("strong convexity check") {
    auto ball_report = strong_convexity_check(ConvexBody::ball(4), 50, 1);
    CHECK(ball_report.pass);
    CHECK(ball_report.min_tangential_eigenvalue == Catch::Approx(1.0).epsilon(1e-9));

    // Curvature of the m=8 polydisc stays strictly positive but dips far below
    // the default eps near the block circles.
    auto pd_report = strong_convexity_check(ConvexBody::smoothed_polydisc(8, {1.0, 1.0}), 100, 2);
    CHECK(pd_report.min_tangential_eigenvalue > 0.0);
    CHECK(strong_convexity_check(ConvexBody::smoothed_polydisc(8, {1.0, 1.0}), 100, 2, 0.0).pass);
    CHECK(strong_convexity_check(ConvexBody::skewed_ball(4, unit(4, 0), 0.15), 100, 3).pass);

    Mat degenerate = Mat::Identity(4, 4);
    degenerate(3, 3) = 0.0;
    CHECK_THROWS_AS(ConvexBody::ellipsoid(degenerate, Vec::Zero(4)), ValidationError);
}

TEST_CASE("volume of symplectic images is preserved") {
    auto ell = ConvexBody::ellipsoid_diag({1.0, 2.0});
    for (std::uint64_t seed : {3u, 14u}) {
        auto moved = ConvexBody::transformed(ell, random_affine_symplectic(seed, 0.8, 4));
        CHECK(volume_closed_form(moved).value ==
              Catch::Approx(volume_closed_form(ell).value).epsilon(1e-9));
    }
}
