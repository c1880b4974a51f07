#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rbmflow/parallel.hpp"
#include "rbmflow/rbm.hpp"

using namespace rbmflow;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

RbmOptions by_time(double h, double horizon) {
    RbmOptions o;
    o.step = h;
    o.horizon = horizon;
    return o;
}

RbmOptions by_local_time(double h, double r) {
    RbmOptions o;
    o.step = h;
    o.local_time = r;
    return o;
}

// Path built by hand: flat states with explicit local time and flags.
RbmPath fixture(const std::vector<Vector>& states, const std::vector<double>& ell,
                const std::vector<int>& flags, double h) {
    RbmPath p;
    p.dim = static_cast<int>(states.front().size());
    p.step = h;
    p.steps = states.size() - 1;
    for (const auto& s : states) p.coords.insert(p.coords.end(), s.data(), s.data() + s.size());
    p.local_time = ell;
    for (int f : flags) p.projected.push_back(static_cast<std::uint8_t>(f));
    p.final_state = states.back();
    p.final_local_time = ell.back();
    return p;
}

}  // namespace

TEST(Rbm, ZeroStepPathStaysAtStart) {
    const auto disk = make_ball(2);
    const Vector x0 = vec({0.3, -0.2});
    const RbmPath p = simulate_path(disk, x0, by_time(1e-4, 0.0), 1, 0);
    EXPECT_EQ(p.steps, 0u);
    EXPECT_EQ(p.final_state, x0);
    EXPECT_EQ(p.final_local_time, 0.0);
    EXPECT_EQ(p.local_time.size(), 1u);
}

TEST(Rbm, RejectsLargeStepsAndOutsideStarts) {
    const auto disk = make_ball(2);
    EXPECT_THROW(simulate_path(disk, vec({0, 0}), by_time(0.02, 1.0), 1, 0), StepTooLarge);
    EXPECT_NO_THROW(simulate_path(disk, vec({0, 0}), by_time(0.01, 0.05), 1, 0));
    EXPECT_THROW(simulate_path(disk, vec({1.5, 0}), by_time(1e-3, 1.0), 1, 0), Error);
    EXPECT_THROW(simulate_path(disk, vec({0, 0}), by_time(0.0, 1.0), 1, 0), Error);
}

TEST(Rbm, CenterStartedPathsAreMostlyInterior) {
    const auto disk = make_ball(2);
    RbmOptions o = by_time(1e-4, 1.0);
    o.record = false;
    const auto stats = parallel_map(1000, 0, [&](std::size_t i) {
        const RbmPath p = simulate_path(disk, Vector::Zero(2), o, 3, static_cast<std::uint32_t>(i));
        return std::pair{p.final_local_time, static_cast<double>(p.projection_steps) / p.steps};
    });
    int finite = 0;
    double worst_fraction = 0.0;
    for (const auto& [ell, frac] : stats) {
        if (std::isfinite(ell) && ell < 10.0) ++finite;
        worst_fraction = std::max(worst_fraction, frac);
    }
    EXPECT_GE(finite, 990);
    EXPECT_LT(worst_fraction, 0.05);
}

TEST(Rbm, DiscreteSkorokhodConsistency) {
    const auto ellipse = make_ellipsoid({1.0, 0.7});
    const double h = 1e-4;
    const RbmPath p = simulate_path(ellipse, Vector::Zero(2), by_time(h, 2.0), 5, 2);
    const CounterRng rng(5, 2);
    std::vector<double> xi(2);
    std::size_t projected = 0;
    for (std::size_t k = 0; k < p.steps; ++k) {
        rng.normals(k, xi);
        const Vector push = p.state(k + 1) - p.state(k) - std::sqrt(h) * Eigen::Map<const Vector>(xi.data(), 2);
        const double dl = p.local_time[k + 1] - p.local_time[k];
        if (p.projected[k + 1]) {
            ++projected;
            const Vector n = normal_field(ellipse, p.state(k + 1));
            EXPECT_LE((push - push.dot(n) * n).norm(), 1e-8);
            EXPECT_NEAR(push.norm(), dl, 1e-12);
            EXPECT_GT(push.dot(n), 0.0);  // pushed along the inward normal
        } else {
            EXPECT_LE(push.norm(), 1e-14);
            EXPECT_EQ(dl, 0.0);
        }
    }
    EXPECT_GT(projected, 0u);
}

TEST(Rbm, SeedDeterminism) {
    const auto disk = make_ball(2);
    const auto o = by_time(1e-3, 0.5);
    const RbmPath a = simulate_path(disk, Vector::Zero(2), o, 9, 4);
    const RbmPath b = simulate_path(disk, Vector::Zero(2), o, 9, 4);
    const RbmPath c = simulate_path(disk, Vector::Zero(2), o, 9, 5);
    EXPECT_EQ(a.coords, b.coords);
    EXPECT_EQ(a.local_time, b.local_time);
    EXPECT_NE(a.coords, c.coords);

    auto run = [&](unsigned threads) {
        return parallel_map(16, threads, [&](std::size_t i) {
            return simulate_path(disk, Vector::Zero(2), o, 9, static_cast<std::uint32_t>(i)).final_local_time;
        });
    };
    EXPECT_EQ(run(1), run(4));
}

TEST(Rbm, UniformStartSampler) {
    const auto disk = make_ball(2);
    int inner = 0;
    Vector mean = Vector::Zero(2);
    const int count = 20000;
    for (int i = 0; i < count; ++i) {
        const Vector p = uniform_point_in_domain(disk, 4, static_cast<std::uint32_t>(i));
        ASSERT_LT(p.norm(), 1.0);
        if (p.norm() < 0.5) ++inner;
        mean += p / count;
    }
    EXPECT_NEAR(static_cast<double>(inner) / count, 0.25, 0.015);
    EXPECT_LT(mean.norm(), 0.02);
}

TEST(Rbm, RevuzIdentityCoarse) {
    // Uniform start in the unit disk: E[L_1] = |boundary| / (2 |D|) = 1.
    const auto disk = make_ball(2);
    RbmOptions o = by_time(4e-4, 1.0);
    o.record = false;
    const std::size_t replicas = 2000;
    const auto ells = parallel_map(replicas, 0, [&](std::size_t i) {
        const auto id = static_cast<std::uint32_t>(i);
        return simulate_path(disk, uniform_point_in_domain(disk, 21, id), o, 21, id).final_local_time;
    });
    double mean = 0.0;
    for (double l : ells) mean += l / replicas;
    EXPECT_NEAR(mean, 1.0, 0.08);
}

TEST(Rbm, LocalTimeStopRule) {
    const auto disk = make_ball(2);
    const RbmPath p = simulate_path(disk, Vector::Zero(2), by_local_time(1e-4, 0.5), 6, 0);
    ASSERT_TRUE(p.target_step.has_value());
    EXPECT_EQ(*p.target_step, p.steps);
    EXPECT_GE(p.final_local_time, 0.5);
    EXPECT_LT(p.local_time[p.steps - 1], 0.5);
}

TEST(Excursions, InteriorPathHasEmptySkeleton) {
    const auto disk = make_ball(2);
    const RbmPath p = simulate_path(disk, Vector::Zero(2), by_time(1e-4, 0.01), 2, 0);
    ASSERT_EQ(p.projection_steps, 0u);
    const auto sk = extract_excursions(p, disk, 0.0);
    EXPECT_TRUE(sk.records.empty());
    EXPECT_FALSE(sk.touched());
    EXPECT_THROW(sk.first_point(), NoBoundaryContact);
    EXPECT_THROW(inverse_local_time(p, 0.0), LocalTimeNotReached);
}

TEST(Excursions, HandcraftedLoop) {
    const auto disk = make_ball(2);
    const auto p = fixture({vec({0.5, 0}), vec({1, 0}), vec({0.3, 0.3}), vec({0, 0.5}), vec({0, 1}), vec({0, 1})},
                           {0, 0.1, 0.1, 0.1, 0.3, 0.4}, {0, 1, 0, 0, 1, 1}, 0.01);
    for (double tol : {0.0, 0.05}) {
        const auto sk = extract_excursions(p, disk, tol);
        ASSERT_EQ(sk.records.size(), 1u);
        const auto& rec = sk.records.front();
        EXPECT_EQ(rec.start_step, 1u);
        EXPECT_EQ(rec.end_step, 4u);
        EXPECT_DOUBLE_EQ(rec.start, 0.01);
        EXPECT_DOUBLE_EQ(rec.end, 0.04);
        EXPECT_EQ(rec.start_point, vec({1, 0}));
        EXPECT_EQ(rec.end_point, vec({0, 1}));
        EXPECT_DOUBLE_EQ(rec.jump, std::sqrt(2.0));
        EXPECT_DOUBLE_EQ(rec.local_time, 0.1);
        EXPECT_DOUBLE_EQ(sk.first_contact_time(), 0.01);
    }
    // A wide contact layer swallows the loop.
    EXPECT_TRUE(extract_excursions(p, disk, 0.6).records.empty());
}

TEST(Excursions, NearBoundaryContactUsesFootPoint) {
    const auto disk = make_ball(2);
    const auto p = fixture({vec({0, 0}), vec({0.99, 0}), vec({0, 0}), vec({0, -0.995})}, {0, 0, 0, 0},
                           {0, 0, 0, 0}, 0.01);
    const auto sk = extract_excursions(p, disk, 0.02);
    ASSERT_EQ(sk.records.size(), 1u);
    EXPECT_NEAR((sk.records[0].start_point - vec({1, 0})).norm(), 0.0, 1e-15);
    EXPECT_NEAR((sk.records[0].end_point - vec({0, -1})).norm(), 0.0, 1e-15);
}

TEST(Excursions, PropertiesOnSimulatedPaths) {
    const auto disk = make_ball(2);
    const double diameter = disk.domain()->diameter;
    const double h = 1e-4;
    const auto skeletons = parallel_map(100, 0, [&](std::size_t i) {
        const RbmPath p = simulate_path(disk, Vector::Zero(2), by_local_time(h, 1.0), 31,
                                        static_cast<std::uint32_t>(i));
        // Monotone inverse local time.
        double prev = inverse_local_time(p, 0.0);
        for (double t = 0.05; t <= 1.0; t += 0.05) {
            const double s = inverse_local_time(p, t);
            EXPECT_LE(prev, s);
            prev = s;
        }
        EXPECT_DOUBLE_EQ(inverse_local_time(p, 0.0),
                         extract_excursions(p, disk, 0.0).first_contact_time());
        EXPECT_THROW(inverse_local_time(p, p.final_local_time + 0.1), LocalTimeNotReached);
        return extract_excursions(p, disk, default_boundary_tol(h));
    });
    std::vector<std::size_t> counts;
    for (const auto& sk : skeletons) {
        double last_ell = -1.0;
        for (const auto& rec : sk.records) {
            EXPECT_LE(rec.jump, diameter + 1e-12);
            EXPECT_GE(rec.end_step, rec.start_step + 2);
            EXPECT_LE(last_ell, rec.local_time);
            EXPECT_NEAR(rec.start_point.norm(), 1.0, 1e-12);
            EXPECT_NEAR(rec.end_point.norm(), 1.0, 1e-12);
            last_ell = rec.local_time;
        }
        ASSERT_TRUE(sk.sigma.has_value());
        std::size_t prev = 0;
        for (int j = 1; j <= 7; ++j) {
            const std::size_t n = count_large_excursions(sk, std::ldexp(1.0, -j), 1.0);
            EXPECT_GE(n, prev);
            prev = n;
        }
        counts.push_back(count_large_excursions(sk, 0.25, 1.0));
    }
    // Light tail of N_eps at fixed eps.
    double mean = 0.0;
    for (auto c : counts) mean += static_cast<double>(c) / counts.size();
    const auto tail = [&](double a) {
        return std::count_if(counts.begin(), counts.end(), [&](std::size_t c) { return c >= a; }) /
               static_cast<double>(counts.size());
    };
    EXPECT_GT(mean, 0.5);
    EXPECT_LE(tail(3.0 * mean), 0.05);
    EXPECT_LE(tail(4.0 * mean), tail(2.0 * mean));
}

TEST(Excursions, DefaultToleranceFormula) {
    EXPECT_NEAR(default_boundary_tol(1e-4), 2.0 * 0.01 * std::log(1e4), 1e-15);
    EXPECT_EQ(default_boundary_tol(1.0), 0.0);
}

TEST(RbmCsv, PathAndSkeletonHeaders) {
    const auto disk = make_ball(2);
    const auto p = fixture({vec({0.5, 0}), vec({1, 0}), vec({0.3, 0.3}), vec({0, 1})}, {0, 0.1, 0.1, 0.2},
                           {0, 1, 0, 1}, 0.01);
    std::ostringstream path_csv, sk_csv;
    write_path_csv(path_csv, p);
    write_skeleton_csv(sk_csv, extract_excursions(p, disk, 0.0), 2);
    const std::string a = path_csv.str();
    const std::string b = sk_csv.str();
    EXPECT_EQ(a.substr(0, a.find('\n')), "step,t,x_1,x_2,L,contact");
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 5);
    EXPECT_EQ(b.substr(0, b.find('\n')), "s,u,e0_1,e0_2,eend_1,eend_2,jump,ell");
    EXPECT_EQ(std::count(b.begin(), b.end(), '\n'), 2);
}
