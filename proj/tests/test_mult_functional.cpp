#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rbmflow/mult_functional.hpp"
#include "rbmflow/parallel.hpp"

using namespace rbmflow;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

ExcursionRecord excursion(const Vector& from, const Vector& to, double ell) {
    ExcursionRecord r;
    r.start_point = from;
    r.end_point = to;
    r.jump = (to - from).norm();
    r.local_time = ell;
    return r;
}

ExcursionSkeleton skeleton(const Vector& x0, std::vector<ExcursionRecord> recs, double final_ell) {
    ExcursionSkeleton sk;
    sk.first_contact_step = 0;
    sk.first_contact_point = x0;
    sk.records = std::move(recs);
    sk.final_local_time = final_ell;
    return sk;
}

ExcursionSkeleton disk_skeleton(std::uint64_t seed, double r = 1.0, double h = 1e-4) {
    const auto disk = make_ball(2);
    RbmOptions o;
    o.step = h;
    o.local_time = r;
    const RbmPath p = simulate_path(disk, Vector::Zero(2), o, seed, 0);
    return extract_excursions(p, disk, default_boundary_tol(h));
}

}  // namespace

TEST(AssembleA, NoQualifyingExcursionIsSingleFactor) {
    const auto disk = make_ball(2);
    const Vector x0 = vec({0.6, 0.8});
    const auto sk = skeleton(x0, {excursion(x0, vec({-0.6, 0.8}), 0.3)}, 2.0);
    const double r = 1.5;
    // Unit circle, inward normal: curvature 1 along t = (-x2, x1).
    const Vector t = vec({-0.8, 0.6});
    const Matrix expected = std::exp(r) * t * t.transpose();
    EXPECT_LE(operator_norm(assemble_A(sk, disk, r, 5.0) - expected), 1e-12);
    const auto rd = rank_diagnostics(assemble_A(sk, disk, r, 5.0), disk, x0);
    EXPECT_NEAR(rd.singular_values(0), std::exp(r), 1e-12);
    EXPECT_NEAR(rd.singular_values(1), 0.0, 1e-12);
    EXPECT_EQ(rd.rank, 1);
    EXPECT_LE(rd.kernel_angle, 1e-12);
}

TEST(AssembleA, SphereFixtureMatchesHandProduct) {
    const auto sphere = make_ball(3);
    const Vector x0 = vec({1, 0, 0});
    const Vector x1 = vec({0, 1, 0});
    const Vector x2 = vec({0, 0, 1});
    const auto sk = skeleton(x0, {excursion(x0, x1, 0.25), excursion(x1, x2, 0.6)}, 1.0);
    // On the unit sphere S(x) = pi_x, so exp(l S(x)) pi_x = e^l (I - x x^T).
    const auto factor = [](const Vector& x, double l) {
        Matrix m = Matrix::Identity(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) -= x(i) * x(j);
        return Matrix(std::exp(l) * m);
    };
    const Matrix oracle = factor(x2, 0.4) * factor(x1, 0.35) * factor(x0, 0.25);
    EXPECT_LE(operator_norm(assemble_A(sk, sphere, 1.0, 0.1) - oracle), 1e-12);
    EXPECT_LE((assemble_A(sk, sphere, 1.0, 0.1) * normal(sphere, x0)).norm(), 1e-15);
    EXPECT_EQ(factor_count(sk, 1.0, 0.1), 2u);
    EXPECT_EQ(factor_count(sk, 0.5, 0.1), 1u);
}

TEST(AssembleA, RequiresLocalTimeCoverage) {
    const auto disk = make_ball(2);
    const auto sk = skeleton(vec({1, 0}), {}, 0.5);
    EXPECT_THROW(assemble_A(sk, disk, 1.0, 0.1), LocalTimeNotReached);
    ExcursionSkeleton untouched;
    untouched.final_local_time = 2.0;
    EXPECT_THROW(assemble_A(untouched, disk, 1.0, 0.1), NoBoundaryContact);
}

TEST(AssembleA, OrthogonalTangentsCollapseRank) {
    const auto disk = make_ball(2);
    const Vector x = vec({1, 0});
    const Vector y = vec({0, 1});
    const auto sk = skeleton(x, {excursion(x, y, 0.5)}, 1.0);
    const Matrix a = assemble_A(sk, disk, 1.0, 0.1);
    const auto rd = rank_diagnostics(a, disk, x);
    EXPECT_LT(rd.rank, 1);
    EXPECT_LE(rd.singular_values(0), 1e-12);
}

TEST(AssembleA, PathProperties) {
    const auto disk = make_ball(2);
    const double growth = 1.0;  // largest curvature of the unit circle
    const auto results = parallel_map(20, 0, [&](std::size_t i) { return disk_skeleton(400 + i); });
    for (const auto& sk : results) {
        const Vector n0 = normal(disk, sk.first_point());
        for (int j = 2; j <= 9; ++j) {
            const Matrix a = assemble_A(sk, disk, 1.0, std::ldexp(1.0, -j));
            EXPECT_LE((a * n0).norm(), 1e-14);
            EXPECT_LE(operator_norm(a), std::exp(growth * 1.0) * (1.0 + 1e-12));
            EXPECT_LE(rank_diagnostics(a, disk, sk.first_point()).kernel_angle, 1e-6);
        }
        for (double r1 : {0.1, 0.37, 0.5, 0.9}) {
            for (double eps : {0.25, 0.03, 0.004}) {
                EXPECT_LE(split_multiplicativity(sk, disk, 1.0, r1, eps).residual, 1e-10);
            }
        }
    }
}

TEST(Multiplicativity, ExcursionAtSplitPoint) {
    const auto disk = make_ball(2);
    const double a = 0.4;
    const auto p = [](double angle) { return vec({std::cos(angle), std::sin(angle)}); };
    const auto sk = skeleton(p(0), {excursion(p(0), p(a), 0.2), excursion(p(a), p(2 * a), 0.5),
                                     excursion(p(2 * a), p(3 * a), 0.8)},
                             1.0);
    for (double r1 : {0.0, 0.2, 0.5, 0.65, 1.0}) {
        EXPECT_LE(split_multiplicativity(sk, disk, 1.0, r1, 0.1).residual, 1e-12) << r1;
    }
}

TEST(LogDrop, SplitsAtThreshold) {
    const auto disk = make_ball(2);
    const Vector x0 = vec({1, 0});
    const Vector x1 = vec({std::cos(0.1), std::sin(0.1)});
    const Vector x2 = vec({0, 1});
    const auto small = skeleton(x0, {excursion(x0, x1, 0.3)}, 1.0);
    const auto rep = projection_log_drop(small, disk, 1.0, 0.01, 0.5);
    EXPECT_TRUE(rep.large.empty());
    EXPECT_NEAR(rep.quadratic_sum, (x1 - x0).squaredNorm(), 1e-15);

    // A gap of exactly rho1 is large.
    const auto tie = skeleton(x0, {excursion(x0, x1, 0.3), excursion(x1, x2, 0.6)}, 1.0);
    const double rho1 = (x2 - x1).norm();
    const auto tied = projection_log_drop(tie, disk, 1.0, 0.01, rho1);
    ASSERT_EQ(tied.large.size(), 1u);
    EXPECT_EQ(tied.large[0].index, 1u);
    // Tangent lines at angles 0.1 and pi/2 meet at angle pi/2 - 0.1.
    EXPECT_NEAR(tied.large[0].log_drop, std::log(std::cos(std::numbers::pi / 2 - 0.1)), 1e-12);
    EXPECT_NEAR(tied.quadratic_sum, (x1 - x0).squaredNorm(), 1e-15);
}

TEST(Ladder, ReportStructure) {
    const auto disk = make_ball(2);
    const auto sk = disk_skeleton(77);
    const auto rep = epsilon_ladder(sk, disk, 1.0, 3, 9);
    ASSERT_EQ(rep.rungs.size(), 7u);
    EXPECT_EQ(rep.gap_pairs(), 5u);
    for (std::size_t i = 0; i < rep.rungs.size(); ++i) {
        const auto& rung = rep.rungs[i];
        EXPECT_EQ(rung.eps, std::ldexp(1.0, -rung.j));
        EXPECT_LE(rung.singular_values(1), 1e-12);
        if (i > 0) {
            EXPECT_LT(rung.eps, rep.rungs[i - 1].eps);
            EXPECT_GE(rung.count, rep.rungs[i - 1].count);
        }
        if (i + 1 < rep.rungs.size()) {
            EXPECT_NEAR(rung.gap, operator_norm(rep.rungs[i + 1].a - rung.a), 1e-15);
        }
    }
    EXPECT_TRUE(std::isnan(rep.rungs.back().gap));
    EXPECT_EQ(rep.slope_negative, rep.slope < 0);
    EXPECT_THROW(epsilon_ladder(sk, disk, 1.0, 5, 4), Error);
}

TEST(Ladder, FitSlope) {
    EXPECT_NEAR(fit_slope({1, 2, 3, 4}, {3, 1, -1, -3}), -2.0, 1e-15);
    EXPECT_TRUE(std::isnan(fit_slope({1}, {1})));
}

TEST(Counterexample, TrajectoryLayout) {
    const auto parabola = std::make_shared<const Hypersurface>(make_parabola(1.0));
    const auto g = oscillating_parabola(parabola, 4, 1.0);
    EXPECT_EQ(g.size(), 65u);
    EXPECT_EQ(g(0.0), vec({0.25, 0.0625}));
    EXPECT_EQ(g(1.5 / 64), vec({-0.25, 0.0625}));
    EXPECT_EQ(g(63.5 / 64), vec({-0.25, 0.0625}));
    EXPECT_EQ(g(1.0), vec({0.25, 0.0625}));
    EXPECT_THROW(oscillating_parabola(parabola, 3, 1.0), Error);
    EXPECT_THROW(oscillating_parabola(parabola, 0, 1.0), Error);
}

TEST(Counterexample, PairContraction) {
    const auto parabola = make_parabola(1.0);
    for (int j : {2, 4, 8}) {
        const double q = 4.0 / (j * j);
        const Vector x = vec({1.0 / j, 1.0 / (j * j)});
        const Vector y = vec({-1.0 / j, 1.0 / (j * j)});
        EXPECT_NEAR(tangent_gain(parabola, x, y), std::abs(1 - q) / (1 + q), 1e-12);
    }
    EXPECT_NEAR(tangent_gain(parabola, vec({0.25, 0.0625}), vec({-0.25, 0.0625})), 0.6, 1e-12);
}

TEST(Counterexample, UnitParabolaTable) {
    const auto up = counterexample_parabola({4, 6, 8, 10, 12, 14, 16}, 1.0, 1.0);
    EXPECT_NEAR(up.limit, std::exp(2.0), 1e-12);
    EXPECT_TRUE(up.nonincreasing);
    EXPECT_LE(up.slope, -1.0);
    EXPECT_LT(up.rows.back().magnitude, 1e-40);

    const auto down = counterexample_parabola({4, 6, 8}, 1.0, -1.0);
    EXPECT_NEAR(down.limit, std::exp(-2.0), 1e-12);
    EXPECT_GE(down.limit, 0.1);
}

TEST(Counterexample, ScaledParabolaContractsSlowly) {
    // Per-pair gain (1 - 4c^2/j^2)/(1 + 4c^2/j^2), squared over j^3/2 pairs:
    // log|v_j(1)| is close to -8 c^2 j.
    const auto t = counterexample_parabola({4, 8, 12, 16}, 0.25);
    EXPECT_NEAR(t.limit, std::exp(0.5), 1e-12);
    EXPECT_TRUE(t.nonincreasing);
    EXPECT_NEAR(t.slope, -0.5, 0.05);
}
