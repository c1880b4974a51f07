#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rbmflow/errors.hpp"
#include "rbmflow/flow_ode.hpp"
#include "rbmflow/geometry.hpp"
#include "rbmflow/linalg.hpp"
#include "rbmflow/nbv.hpp"
#include "rbmflow/rbm.hpp"

namespace rbmflow {

/// One factor of the ordered product: exp(length S(x)) pi_x.
struct SkeletonFactor {
    Vector point;
    double length = 0.0;
};

namespace detail {

inline Matrix factor_matrix(const Hypersurface& surface, const Vector& x, double length) {
    const ShapeOperator s = shape_operator(surface, x);
    return SymmetricExp(s.matrix)(length) * projector_from_normal(s.normal);
}

inline Matrix ordered_product(const Hypersurface& surface, const std::vector<SkeletonFactor>& factors) {
    const int n = surface.dim();
    Matrix a = Matrix::Identity(n, n);
    for (const auto& f : factors) a = factor_matrix(surface, f.point, f.length) * a;
    return a;
}

inline void require_local_time(const ExcursionSkeleton& sk, double r) {
    if (sk.final_local_time < r) {
        throw LocalTimeNotReached("skeleton covers local time " + std::to_string(sk.final_local_time) +
                                  ", need " + std::to_string(r));
    }
}

}  // namespace detail

/// Factors of A over the local-time window [from, to): the first factor sits
/// at `start` and each excursion with jump >= eps and start local time in
/// [from, to) opens a new factor at its end point.
inline std::vector<SkeletonFactor> skeleton_factors(const ExcursionSkeleton& sk, const Vector& start,
                                                    double from, double to, double eps) {
    std::vector<SkeletonFactor> out;
    Vector point = start;
    double ell = from;
    for (const auto& rec : sk.records) {
        if (rec.local_time < from) continue;
        if (!(rec.local_time < to)) break;
        if (rec.jump < eps) continue;
        out.push_back({point, rec.local_time - ell});
        point = rec.end_point;
        ell = rec.local_time;
    }
    out.push_back({point, to - ell});
    return out;
}

/// A_{r,eps} = exp(dl_m S(x_m)) pi_{x_m} ... exp(dl_0 S(x_0)) pi_{x_0}, with
/// x_0 the first hit point, x_k the end points of the excursions of size at
/// least eps started before local time r, and dl_k the local-time gaps.
inline Matrix assemble_A(const ExcursionSkeleton& sk, const Hypersurface& surface, double r, double eps) {
    detail::require_local_time(sk, r);
    return detail::ordered_product(surface, skeleton_factors(sk, sk.first_point(), 0.0, r, eps));
}

/// Excursion count entering A_{r,eps}.
inline std::size_t factor_count(const ExcursionSkeleton& sk, double r, double eps) {
    return count_large_excursions(sk, eps, r);
}

struct MultiplicativityCheck {
    Matrix whole;
    Matrix first;   // over [0, r1)
    Matrix second;  // over [r1, r), leading projection at the state reached by r1
    double residual = 0.0;  // |whole - second first| in operator norm
};

/// Splits the local-time horizon at r1 and compares A_{r,eps} with the
/// product of the two sub-skeleton functionals.
inline MultiplicativityCheck split_multiplicativity(const ExcursionSkeleton& sk, const Hypersurface& surface,
                                                    double r, double r1, double eps) {
    detail::require_local_time(sk, r);
    if (!(r1 >= 0.0 && r1 <= r)) throw Error("split point must lie in [0, r]");
    MultiplicativityCheck out;
    const Vector& x0 = sk.first_point();
    out.whole = detail::ordered_product(surface, skeleton_factors(sk, x0, 0.0, r, eps));
    const auto head = skeleton_factors(sk, x0, 0.0, r1, eps);
    out.first = detail::ordered_product(surface, head);
    out.second = detail::ordered_product(surface, skeleton_factors(sk, head.back().point, r1, r, eps));
    out.residual = operator_norm(out.whole - out.second * out.first);
    return out;
}

struct RankDiagnostics {
    Vector singular_values;  // descending
    int rank = 0;            // count above 1e-8 sigma_max
    double kernel_angle = 0.0;  // radians between the smallest right singular vector and n(x0)
};

inline RankDiagnostics rank_diagnostics(const Matrix& a, const Hypersurface& surface, const Vector& x0) {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
    RankDiagnostics out;
    out.singular_values = svd.singularValues();
    const double top = out.singular_values.size() ? out.singular_values(0) : 0.0;
    for (Eigen::Index i = 0; i < out.singular_values.size(); ++i) {
        if (out.singular_values(i) > 1e-8 * top) ++out.rank;
    }
    const Vector kernel = svd.matrixV().col(a.cols() - 1);
    const Vector n = normal_field(surface, x0);
    const double along = std::abs(kernel.dot(n));
    out.kernel_angle = std::atan2((kernel - kernel.dot(n) * n).norm(), along);
    return out;
}

/// Default split threshold: half the inverse of the largest curvature.
inline double default_split_threshold(const Hypersurface& surface) {
    if (surface.domain() && surface.domain()->max_curvature > 0) {
        return 0.5 / surface.domain()->max_curvature;
    }
    return 0.5;
}

struct LargeGap {
    std::size_t index = 0;   // pair (x_index, x_index+1)
    double distance = 0.0;
    double log_drop = 0.0;   // log of the smallest gain of pi_{x_{k+1}} on T_{x_k}
};

struct LogDropReport {
    double quadratic_sum = 0.0;  // sum of |x_k - x_{k+1}|^2 over pairs closer than rho1
    std::vector<LargeGap> large;
};

/// Smallest |pi_y z| over unit tangent vectors z at x.
inline double tangent_gain(const Hypersurface& surface, const Vector& x, const Vector& y) {
    const Vector nx = normal_field(surface, x);
    const Matrix basis = projector_from_normal(nx);
    Eigen::JacobiSVD<Matrix> svd(basis, Eigen::ComputeFullU);
    const Matrix tangent = svd.matrixU().leftCols(surface.dim() - 1);
    const Matrix image = projector_from_normal(normal_field(surface, y)) * tangent;
    return Eigen::JacobiSVD<Matrix>(image).singularValues().minCoeff();
}

/// Splits consecutive factor points at rho1: pairs closer than rho1 feed the
/// quadratic sum, pairs at distance >= rho1 are listed with their log drop.
inline LogDropReport projection_log_drop(const ExcursionSkeleton& sk, const Hypersurface& surface,
                                         double r, double eps, double rho1) {
    const auto factors = skeleton_factors(sk, sk.first_point(), 0.0, r, eps);
    LogDropReport out;
    for (std::size_t k = 0; k + 1 < factors.size(); ++k) {
        const double d = (factors[k + 1].point - factors[k].point).norm();
        if (d < rho1) {
            out.quadratic_sum += d * d;
        } else {
            out.large.push_back({k, d, std::log(tangent_gain(surface, factors[k].point, factors[k + 1].point))});
        }
    }
    return out;
}

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    return den == 0 ? std::numeric_limits<double>::quiet_NaN() : (n * sxy - sx * sy) / den;
}

struct LadderRung {
    int j = 0;
    double eps = 0.0;
    std::size_t count = 0;  // m_j
    Matrix a;
    Vector singular_values;
    double gap = std::numeric_limits<double>::quiet_NaN();  // |A_{j+1} - A_j|, NaN on the last rung
    double quadratic_sum = 0.0;
};

struct EpsilonLadderReport {
    double r = 0.0;
    Vector x0;
    std::vector<LadderRung> rungs;
    double slope = std::numeric_limits<double>::quiet_NaN();
    bool slope_negative = false;

    /// Consecutive gap pairs (g_j, g_{j+1}) with g_{j+1} < g_j.
    std::size_t decreasing_pairs() const {
        std::size_t count = 0;
        for (std::size_t i = 0; i + 2 < rungs.size(); ++i) {
            if (rungs[i + 1].gap < rungs[i].gap) ++count;
        }
        return count;
    }
    std::size_t gap_pairs() const { return rungs.size() > 2 ? rungs.size() - 2 : 0; }
    const LadderRung& finest() const { return rungs.back(); }
};

/// Nested-filter ladder eps_j = 2^-j, j in [j_min, j_max], on one skeleton.
/// The slope is the least-squares fit of log gap against j with the first
/// gap dropped; zero gaps are left out of the fit.
inline EpsilonLadderReport epsilon_ladder(const ExcursionSkeleton& sk, const Hypersurface& surface, double r,
                                          int j_min, int j_max, std::optional<double> rho1 = std::nullopt) {
    if (j_max < j_min) throw Error("empty ladder range");
    detail::require_local_time(sk, r);
    const double split = rho1.value_or(default_split_threshold(surface));
    EpsilonLadderReport out;
    out.r = r;
    out.x0 = sk.first_point();
    for (int j = j_min; j <= j_max; ++j) {
        LadderRung rung;
        rung.j = j;
        rung.eps = std::ldexp(1.0, -j);
        rung.count = factor_count(sk, r, rung.eps);
        rung.a = assemble_A(sk, surface, r, rung.eps);
        rung.singular_values = singular_values(rung.a);
        rung.quadratic_sum = projection_log_drop(sk, surface, r, rung.eps, split).quadratic_sum;
        out.rungs.push_back(std::move(rung));
    }
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i + 1 < out.rungs.size(); ++i) {
        out.rungs[i].gap = operator_norm(out.rungs[i + 1].a - out.rungs[i].a);
        if (i > 0 && out.rungs[i].gap > 0) {
            xs.push_back(out.rungs[i].j);
            ys.push_back(std::log(out.rungs[i].gap));
        }
    }
    out.slope = fit_slope(xs, ys);
    out.slope_negative = out.slope < 0;
    return out;
}

/// The oscillating parabola trajectory: x_j = (1/j, c/j^2) on
/// [2k/j^3, (2k+1)/j^3), its mirror y_j on the odd cells, x_j at t = 1.
inline FiniteTrajectory oscillating_parabola(const SurfacePtr& parabola, int j, double c) {
    if (j < 2 || j % 2 != 0) throw Error("oscillation index must be even and at least 2");
    const auto cells = static_cast<std::size_t>(j) * j * j;
    const double width = 1.0 / static_cast<double>(cells);
    Vector x(2), y(2);
    x << 1.0 / j, c / (static_cast<double>(j) * j);
    y << -1.0 / j, c / (static_cast<double>(j) * j);
    std::vector<double> times;
    std::vector<Vector> values;
    times.reserve(cells + 1);
    values.reserve(cells + 1);
    for (std::size_t i = 0; i < cells; ++i) {
        times.push_back(static_cast<double>(i) * width);
        values.push_back(i % 2 == 0 ? x : y);
    }
    times.push_back(1.0);
    values.push_back(x);
    return FiniteTrajectory(parabola, 1.0, std::move(times), std::move(values));
}

struct CounterexampleRow {
    int j = 0;
    double magnitude = 0.0;  // |v_j(1)|
};

struct CounterexampleTable {
    double scale = 0.0;
    double orientation = 1.0;
    std::vector<CounterexampleRow> rows;
    double limit = 0.0;   // |exp(S(0)) pi_0 e_1| for the constant trajectory
    double slope = 0.0;   // least-squares slope of log|v_j(1)| against j
    bool nonincreasing = true;
};

/// |v_j(1)| for the oscillating trajectories with v_0 = pi_{x_j} e_1, and
/// the constant-trajectory value at the vertex.
inline CounterexampleTable counterexample_parabola(const std::vector<int>& js, double c,
                                                   double orientation = 1.0) {
    const auto parabola = std::make_shared<const Hypersurface>(make_parabola(c, orientation));
    CounterexampleTable out;
    out.scale = c;
    out.orientation = orientation;
    const Vector e1 = Vector::Unit(2, 0);
    std::vector<double> xs, ys;
    for (int j : js) {
        const FiniteTrajectory gamma = oscillating_parabola(parabola, j, c);
        const Vector v0 = projector_from_normal(normal(*parabola, gamma(0.0))) * e1;
        const double mag = solve_finite(gamma, v0)(1.0).norm();
        if (!out.rows.empty() && mag > out.rows.back().magnitude) out.nonincreasing = false;
        out.rows.push_back({j, mag});
        xs.push_back(j);
        ys.push_back(std::log(mag));
    }
    const Vector origin = Vector::Zero(2);
    const FiniteTrajectory constant(parabola, 1.0, {0.0}, {origin});
    out.limit = solve_finite(constant, e1)(1.0).norm();
    out.slope = fit_slope(xs, ys);
    return out;
}

}  // namespace rbmflow
