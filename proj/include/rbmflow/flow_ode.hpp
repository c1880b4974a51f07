#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <vector>

#include "rbmflow/errors.hpp"
#include "rbmflow/geometry.hpp"
#include "rbmflow/linalg.hpp"
#include "rbmflow/nbv.hpp"

namespace rbmflow {

/// Per-piece data of a finite trajectory: the value x_k, its normal and
/// tangent projection, and the eigendecomposition of S(x_k).
struct TrajectoryPiece {
    double start = 0.0;
    double length = 0.0;  // t_{k+1} - t_k, or T - t_m for the last piece
    Vector point;
    Vector normal;
    Matrix projector;
    SymmetricExp flow;  // t -> exp(t S(x_k))
};

namespace detail {

inline std::vector<TrajectoryPiece> build_pieces(const FiniteTrajectory& gamma) {
    if (!gamma.surface()) throw InvalidTrajectory("flow needs a trajectory on a surface");
    const auto& surface = *gamma.surface();
    std::vector<TrajectoryPiece> pieces;
    pieces.reserve(gamma.size());
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        const double start = gamma.times()[k];
        const double end = k + 1 < gamma.size() ? gamma.times()[k + 1] : gamma.horizon();
        const ShapeOperator s = shape_operator(surface, gamma.values()[k]);
        pieces.push_back({start, end - start, gamma.values()[k], s.normal,
                          projector_from_normal(s.normal), SymmetricExp(s.matrix)});
    }
    return pieces;
}

}  // namespace detail

/// Matrix path A(t) with v(t) = A(t) v_0 for every v_0 in R^n:
/// A(t) = exp((t - t_k) S_k) pi_k exp(l_{k-1} S_{k-1}) ... pi_0.
/// Prefix products A(t_k) are cached at the breakpoints.
class SolutionOperator {
public:
    explicit SolutionOperator(FiniteTrajectory gamma)
        : gamma_(std::move(gamma)), pieces_(detail::build_pieces(gamma_)) {
        prefix_.reserve(pieces_.size());
        prefix_.push_back(pieces_.front().projector);
        for (std::size_t k = 1; k < pieces_.size(); ++k) {
            const auto& prev = pieces_[k - 1];
            prefix_.push_back(pieces_[k].projector * (prev.flow(prev.length) * prefix_[k - 1]));
        }
    }

    const FiniteTrajectory& trajectory() const { return gamma_; }
    const std::vector<TrajectoryPiece>& pieces() const { return pieces_; }
    double horizon() const { return gamma_.horizon(); }
    int dim() const { return gamma_.dim(); }

    /// A(t_k).
    const Matrix& at_breakpoint(std::size_t k) const { return prefix_[k]; }

    Matrix operator()(double t) const {
        const std::size_t k = gamma_.index_at(t);
        return pieces_[k].flow(t - pieces_[k].start) * prefix_[k];
    }

    /// A(t-); equals A(t) away from breakpoints.
    Matrix left_limit(double t) const {
        const std::size_t k = gamma_.index_at(t);
        if (k == 0 || pieces_[k].start != t) return (*this)(t);
        const auto& prev = pieces_[k - 1];
        return prev.flow(prev.length) * prefix_[k - 1];
    }

private:
    FiniteTrajectory gamma_;
    std::vector<TrajectoryPiece> pieces_;
    std::vector<Matrix> prefix_;
};

inline SolutionOperator solution_operator(const FiniteTrajectory& gamma) {
    return SolutionOperator(gamma);
}

/// Solution of the flow ODE along a finite trajectory from a tangent
/// initial vector; the values v(t_k) are cached.
class FlowSolution {
public:
    FlowSolution(FiniteTrajectory gamma, Vector v0)
        : gamma_(std::move(gamma)), pieces_(detail::build_pieces(gamma_)), v0_(std::move(v0)) {
        if (v0_.size() != gamma_.dim()) throw NotTangent("initial vector has the wrong dimension");
        const double defect = std::abs(v0_.dot(pieces_.front().normal));
        if (defect > 1e-8 * v0_.norm()) {
            throw NotTangent("initial vector is not tangent at gamma(0) (normal component " +
                             std::to_string(defect) + ")");
        }
        nodes_.reserve(pieces_.size());
        nodes_.push_back(v0_);
        for (std::size_t k = 1; k < pieces_.size(); ++k) {
            const auto& prev = pieces_[k - 1];
            nodes_.push_back(pieces_[k].projector * prev.flow.apply(prev.length, nodes_[k - 1]));
        }
    }

    const FiniteTrajectory& trajectory() const { return gamma_; }
    const std::vector<TrajectoryPiece>& pieces() const { return pieces_; }
    const Vector& initial() const { return v0_; }
    double horizon() const { return gamma_.horizon(); }

    /// v(t_k).
    const Vector& at_breakpoint(std::size_t k) const { return nodes_[k]; }

    Vector operator()(double t) const {
        const std::size_t k = gamma_.index_at(t);
        return pieces_[k].flow.apply(t - pieces_[k].start, nodes_[k]);
    }

    Vector left_limit(double t) const {
        const std::size_t k = gamma_.index_at(t);
        if (k == 0 || pieces_[k].start != t) return (*this)(t);
        const auto& prev = pieces_[k - 1];
        return prev.flow.apply(prev.length, nodes_[k - 1]);
    }

private:
    FiniteTrajectory gamma_;
    std::vector<TrajectoryPiece> pieces_;
    Vector v0_;
    std::vector<Vector> nodes_;
};

inline FlowSolution solve_finite(const FiniteTrajectory& gamma, const Vector& v0) {
    return FlowSolution(gamma, v0);
}

/// Largest positive eigenvalue of S over the trajectory's values; the
/// growth rate in |v(t)| <= exp(K t)|v_0|.
inline double growth_rate(const FiniteTrajectory& gamma) {
    double k = 0.0;
    for (const auto& piece : detail::build_pieces(gamma)) {
        if (piece.flow.eigenvalues().size() > 0) k = std::max(k, piece.flow.eigenvalues().maxCoeff());
    }
    return k;
}

struct OdeResidual {
    double derivative = 0.0;  // sup |v' - S v| / (1 + |v|) by central differences
    double jump = 0.0;        // sup |v(t_i) - pi_i v(t_i-)|
    double tangency = 0.0;    // sup |<v(t), n(gamma(t))>| / (1 + |v|)
    double max() const { return std::max({derivative, jump, tangency}); }
};

/// Residuals of the ODE in its three parts: the smooth equation between
/// breakpoints, the projection rule at breakpoints and tangency.
inline OdeResidual ode_residual(const FlowSolution& sol, double fd_step = 1e-4,
                                int samples_per_piece = 16) {
    OdeResidual out;
    const auto& pieces = sol.pieces();
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        const auto& piece = pieces[k];
        const Matrix s = piece.flow.eigenvectors() * piece.flow.eigenvalues().asDiagonal() *
                         piece.flow.eigenvectors().transpose();
        if (k > 0) {
            const Vector expected = piece.projector * sol.left_limit(piece.start);
            out.jump = std::max(out.jump, (sol.at_breakpoint(k) - expected).norm());
        }
        const Vector at_start = sol(piece.start);
        out.tangency = std::max(out.tangency,
                                std::abs(at_start.dot(piece.normal)) / (1.0 + at_start.norm()));
        const double h = std::min(fd_step, piece.length / 4.0);
        if (!(h > 1e-7)) continue;
        for (int i = 0; i < samples_per_piece; ++i) {
            const double frac = (static_cast<double>(i) + 0.5) / static_cast<double>(samples_per_piece);
            const double t = piece.start + h + frac * (piece.length - 2.0 * h);
            const Vector v = sol(t);
            const Vector dv = (sol(t + h) - sol(t - h)) / (2.0 * h);
            const double scale = 1.0 + v.norm();
            out.derivative = std::max(out.derivative, (dv - s * v).norm() / scale);
            out.tangency = std::max(out.tangency, std::abs(v.dot(piece.normal)) / scale);
        }
    }
    return out;
}

namespace detail {

/// Evaluation times for sup-norm comparisons: every cut, points just
/// before each cut (left limits), interior samples and the horizon.
inline std::vector<double> comparison_times(std::vector<double> cuts, double horizon,
                                            int interior) {
    cuts.push_back(0.0);
    cuts.push_back(horizon);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<double> out;
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        out.push_back(cuts[i]);
        if (i + 1 == cuts.size()) break;
        const double a = cuts[i];
        const double b = cuts[i + 1];
        for (int j = 1; j <= interior; ++j) {
            out.push_back(a + (b - a) * static_cast<double>(j) / static_cast<double>(interior + 1));
        }
        out.push_back(b - 1e-12 * (b - a));
    }
    return out;
}

}  // namespace detail

struct GapReport {
    double sup_difference = 0.0;
    double bound_rhs = 0.0;
};

/// sup |v - v~| for solutions from the same v_0 along two trajectories with
/// a common origin, and C (1 + |dgamma| + |dgamma~|) |gamma - gamma~| |v_0|.
inline GapReport stability_gap(const FiniteTrajectory& gamma, const FiniteTrajectory& other,
                               const Vector& v0, double constant, int interior = 4) {
    if (gamma.values().front() != other.values().front()) {
        throw OriginMismatch("trajectories start at different points");
    }
    if (gamma.horizon() != other.horizon()) throw HorizonMismatch("trajectories have different horizons");
    const FlowSolution v(gamma, v0);
    const FlowSolution w(other, v0);
    GapReport out;
    for (double t : detail::comparison_times(merged_breakpoints(gamma, other), gamma.horizon(), interior)) {
        out.sup_difference = std::max(out.sup_difference, (v(t) - w(t)).norm());
    }
    out.bound_rhs = constant * (1.0 + total_variation(gamma) + total_variation(other)) *
                    sup_distance(gamma, other) * v0.norm();
    return out;
}

/// The trajectory with breakpoints moved to lambda(t_i), so that
/// it evaluated at lambda(t) equals gamma(t).
inline FiniteTrajectory reparametrize(const FiniteTrajectory& gamma, const TimeChange& lambda) {
    if (lambda.horizon() != gamma.horizon()) throw HorizonMismatch("time change has a different horizon");
    std::vector<double> times;
    times.reserve(gamma.size());
    for (double t : gamma.times()) times.push_back(lambda(t));
    return FiniteTrajectory(gamma.surface(), gamma.horizon(), std::move(times), gamma.values());
}

/// sup_t |v(t) - v~(lambda(t))| where v~ solves along the reparametrized
/// trajectory, and the bound C |lambda - id| |v_0|.
inline GapReport reparametrization_gap(const FiniteTrajectory& gamma, const TimeChange& lambda,
                                       const Vector& v0, double constant, int interior = 8) {
    const FiniteTrajectory moved = reparametrize(gamma, lambda);
    const FlowSolution v(gamma, v0);
    const FlowSolution w(moved, v0);
    std::vector<double> cuts = gamma.times();
    for (double k : lambda.domain_knots()) cuts.push_back(k);
    GapReport out;
    for (double t : detail::comparison_times(std::move(cuts), gamma.horizon(), interior)) {
        out.sup_difference = std::max(out.sup_difference, (v(t) - w(lambda(t))).norm());
    }
    out.bound_rhs = constant * lambda.sup_deviation() * v0.norm();
    return out;
}

struct LimitSolution {
    std::vector<double> epsilons;
    std::vector<FiniteTrajectory> approximations;
    std::vector<double> gaps;  // sup-gap between consecutive rungs
    FlowSolution finest;
};

/// Solves along finite approximations of a sampled path for a decreasing
/// ladder of tolerances and checks that the solutions settle. The finest
/// rung is returned as the limit candidate.
inline LimitSolution limit_solution(const SampledNbvFunction& gamma, const SurfacePtr& surface,
                                    const std::vector<double>& ladder, const Vector& v0,
                                    double slack = 1.5) {
    if (ladder.empty()) throw Error("limit_solution needs a nonempty ladder");
    for (std::size_t i = 1; i < ladder.size(); ++i) {
        if (!(ladder[i] < ladder[i - 1])) throw Error("ladder must be strictly decreasing");
    }
    std::vector<FiniteTrajectory> approx;
    std::vector<FlowSolution> sols;
    for (double eps : ladder) {
        approx.push_back(finite_approximation(gamma, eps, surface));
        sols.emplace_back(approx.back(), v0);
    }
    std::vector<double> gaps;
    for (std::size_t j = 1; j < sols.size(); ++j) {
        double gap = 0.0;
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            const double t = gamma.time(i);
            gap = std::max(gap, (sols[j](t) - sols[j - 1](t)).norm());
        }
        gaps.push_back(gap);
    }
    for (std::size_t j = 1; j < gaps.size(); ++j) {
        if (gaps[j] > slack * gaps[j - 1]) {
            throw NotCauchy("rung gaps grow from " + std::to_string(gaps[j - 1]) + " to " +
                            std::to_string(gaps[j]));
        }
    }
    FlowSolution finest = sols.back();
    return {ladder, std::move(approx), std::move(gaps), std::move(finest)};
}

struct SkorokhodStability {
    double operator_distance = 0.0;  // max(sup |A - A~ o lambda|, |lambda - id|)
    double path_distance = 0.0;      // d_S(gamma, gamma~)
    double ratio() const { return path_distance > 0 ? operator_distance / path_distance : 0.0; }
};

/// Skorokhod distance of the solution operators under the time change that
/// realizes the distance of the driving trajectories.
inline SkorokhodStability stability_skorokhod(const FiniteTrajectory& gamma,
                                              const FiniteTrajectory& other, int interior = 4) {
    if (gamma.values().front() != other.values().front()) {
        throw OriginMismatch("trajectories start at different points");
    }
    const SkorokhodResult align = skorokhod_distance(gamma, other);
    const SolutionOperator a(gamma);
    const SolutionOperator b(other);
    std::vector<double> cuts = gamma.times();
    for (double s : other.times()) cuts.push_back(align.witness.inverse(s));
    double worst = 0.0;
    for (double t : detail::comparison_times(std::move(cuts), gamma.horizon(), interior)) {
        worst = std::max(worst, operator_norm(a(t) - b(align.witness(t))));
    }
    return {std::max(worst, align.witness.sup_deviation()), align.bound};
}

/// CSV rows "t,a_11,a_12,...,a_nn" (row-major) at the given times.
inline void write_operator_csv(std::ostream& out, const SolutionOperator& op,
                               const std::vector<double>& times) {
    const int n = op.dim();
    out << "t";
    for (int i = 1; i <= n; ++i) {
        for (int j = 1; j <= n; ++j) out << ",a_" << i << '_' << j;
    }
    out << '\n';
    out.precision(17);
    for (double t : times) {
        const Matrix m = op(t);
        out << t;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) out << ',' << m(i, j);
        }
        out << '\n';
    }
}

}  // namespace rbmflow
