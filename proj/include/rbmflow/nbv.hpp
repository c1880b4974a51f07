#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbmflow/errors.hpp"
#include "rbmflow/geometry.hpp"
#include "rbmflow/linalg.hpp"

namespace rbmflow {

// ---------------------------------------------------------------------------
// Finite trajectories

/// Piecewise-constant right-continuous path with finitely many values:
/// value x_i on [t_i, t_{i+1}), and x_m at every t >= t_m including T.
class FiniteTrajectory {
public:
    FiniteTrajectory(SurfacePtr surface, double horizon, std::vector<double> times,
                     std::vector<Vector> values)
        : surface_(std::move(surface)),
          horizon_(horizon),
          times_(std::move(times)),
          values_(std::move(values)) {
        if (!(horizon_ > 0)) throw InvalidTrajectory("horizon must be positive");
        if (times_.empty() || times_.size() != values_.size()) {
            throw InvalidTrajectory("need one value per breakpoint and at least one breakpoint");
        }
        if (times_.front() != 0.0) throw InvalidTrajectory("first breakpoint must be 0");
        for (std::size_t i = 1; i < times_.size(); ++i) {
            if (!(times_[i] > times_[i - 1])) {
                throw InvalidTrajectory("breakpoints must be strictly increasing");
            }
        }
        if (times_.back() > horizon_) throw InvalidTrajectory("breakpoint beyond the horizon");
        const auto dim = values_.front().size();
        for (const auto& x : values_) {
            if (x.size() != dim) throw InvalidTrajectory("inconsistent value dimensions");
            if (surface_ && !surface_->on_surface(x)) {
                throw PointOffSurface("trajectory value is off " + surface_->name());
            }
        }
    }

    /// Constant trajectory.
    static FiniteTrajectory constant(SurfacePtr surface, double horizon, Vector x) {
        return FiniteTrajectory(std::move(surface), horizon, {0.0}, {std::move(x)});
    }

    const SurfacePtr& surface() const { return surface_; }
    double horizon() const { return horizon_; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<Vector>& values() const { return values_; }
    std::size_t size() const { return times_.size(); }
    int dim() const { return static_cast<int>(values_.front().size()); }

    /// Largest k with t_k <= t.
    std::size_t index_at(double t) const {
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        return it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    }

    const Vector& operator()(double t) const { return values_[index_at(t)]; }

    /// Same path with an extra (redundant) breakpoint at t.
    FiniteTrajectory with_breakpoint(double t) const {
        if (!(t > 0 && t <= horizon_)) throw InvalidTrajectory("breakpoint outside (0, T]");
        const std::size_t k = index_at(t);
        if (times_[k] == t) return *this;
        auto times = times_;
        auto values = values_;
        times.insert(times.begin() + static_cast<long>(k) + 1, t);
        values.insert(values.begin() + static_cast<long>(k) + 1, values_[k]);
        return FiniteTrajectory(surface_, horizon_, std::move(times), std::move(values));
    }

private:
    SurfacePtr surface_;
    double horizon_;
    std::vector<double> times_;
    std::vector<Vector> values_;
};

/// Total variation: sum of jump sizes |x_i - x_{i-1}|. The initial point is
/// not counted as a jump from the origin.
inline double total_variation(const FiniteTrajectory& gamma) {
    double tv = 0.0;
    const auto& v = gamma.values();
    for (std::size_t i = 1; i < v.size(); ++i) tv += (v[i] - v[i - 1]).norm();
    return tv;
}

/// Sorted union of the breakpoints of two trajectories.
inline std::vector<double> merged_breakpoints(const FiniteTrajectory& a, const FiniteTrajectory& b) {
    std::vector<double> out;
    std::merge(a.times().begin(), a.times().end(), b.times().begin(), b.times().end(),
               std::back_inserter(out));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// sup_t |a(t) - b(t)|, exact for piecewise-constant paths.
inline double sup_distance(const FiniteTrajectory& a, const FiniteTrajectory& b) {
    if (a.horizon() != b.horizon()) throw HorizonMismatch("trajectories have different horizons");
    double worst = (a(a.horizon()) - b(b.horizon())).norm();
    for (double t : merged_breakpoints(a, b)) worst = std::max(worst, (a(t) - b(t)).norm());
    return worst;
}

// ---------------------------------------------------------------------------
// Sampled NBV functions

/// Function sampled on a uniform grid t_i = i h, i = 0..N, h = T/N, read as
/// the right-continuous step function equal to values[i] on [t_i, t_{i+1}).
/// Grid indices listed in `declared_jumps` are genuine discontinuities;
/// other increments are samples of a continuous stretch.
class SampledNbvFunction {
public:
    SampledNbvFunction(double horizon, std::vector<Vector> values,
                       std::vector<std::size_t> declared_jumps = {})
        : horizon_(horizon), values_(std::move(values)), jumps_(std::move(declared_jumps)) {
        if (!(horizon_ > 0)) throw Error("horizon must be positive");
        if (values_.size() < 2) throw Error("need at least two grid points");
        std::sort(jumps_.begin(), jumps_.end());
        jumps_.erase(std::unique(jumps_.begin(), jumps_.end()), jumps_.end());
        for (auto j : jumps_) {
            if (j >= values_.size()) throw Error("declared jump outside the grid");
        }
    }

    static SampledNbvFunction scalar(double horizon, const std::vector<double>& samples,
                                     std::vector<std::size_t> declared_jumps = {}) {
        std::vector<Vector> values;
        values.reserve(samples.size());
        for (double s : samples) values.push_back(Vector::Constant(1, s));
        return SampledNbvFunction(horizon, std::move(values), std::move(declared_jumps));
    }

    /// Samples a finite trajectory on a uniform grid with `intervals` cells;
    /// every breakpoint is declared as a jump.
    static SampledNbvFunction from_trajectory(const FiniteTrajectory& gamma, std::size_t intervals) {
        const double h = gamma.horizon() / static_cast<double>(intervals);
        std::vector<Vector> values;
        std::vector<std::size_t> jumps;
        values.reserve(intervals + 1);
        for (std::size_t i = 0; i <= intervals; ++i) {
            const double t = i == intervals ? gamma.horizon() : static_cast<double>(i) * h;
            values.push_back(gamma(t));
            if (i > 0 && values[i] != values[i - 1]) jumps.push_back(i);
        }
        return SampledNbvFunction(gamma.horizon(), std::move(values), std::move(jumps));
    }

    double horizon() const { return horizon_; }
    std::size_t intervals() const { return values_.size() - 1; }
    std::size_t size() const { return values_.size(); }
    double step() const { return horizon_ / static_cast<double>(intervals()); }
    double time(std::size_t i) const {
        return i == intervals() ? horizon_ : static_cast<double>(i) * step();
    }
    int dim() const { return static_cast<int>(values_.front().size()); }

    const std::vector<Vector>& values() const { return values_; }
    const Vector& value(std::size_t i) const { return values_[i]; }
    const std::vector<std::size_t>& declared_jumps() const { return jumps_; }
    bool is_declared_jump(std::size_t i) const {
        return std::binary_search(jumps_.begin(), jumps_.end(), i);
    }

    /// u(t_i-); zero before time 0.
    Vector left_limit(std::size_t i) const {
        return i == 0 ? Vector::Zero(values_.front().size()) : values_[i - 1];
    }
    /// Delta_{t_i}(u) = u(t_i) - u(t_i-); Delta_0(u) = u(0).
    Vector jump(std::size_t i) const { return values_[i] - left_limit(i); }

    /// Index of the grid cell containing t (t = T maps to N).
    std::size_t index_at(double t) const {
        if (t >= horizon_) return intervals();
        if (t <= 0) return 0;
        const double x = t / step();
        auto k = static_cast<std::size_t>(std::floor(x + 1e-9));
        return std::min(k, intervals());
    }
    const Vector& operator()(double t) const { return values_[index_at(t)]; }

    /// Sum of |u(t_i) - u(t_{i-1})| over the grid; nondecreasing under
    /// refinement.
    double grid_total_variation() const {
        double tv = 0.0;
        for (std::size_t i = 1; i < values_.size(); ++i) tv += (values_[i] - values_[i - 1]).norm();
        return tv;
    }

private:
    double horizon_;
    std::vector<Vector> values_;
    std::vector<std::size_t> jumps_;
};

enum class Endpoints { OpenClosed, ClosedClosed, OpenOpen, ClosedOpen };
enum class Integrand { Value, LeftLimit };

namespace detail {

inline void require_same_grid(const SampledNbvFunction& u, const SampledNbvFunction& v) {
    if (u.horizon() != v.horizon() || u.size() != v.size() || u.dim() != v.dim()) {
        throw GridMismatch("sampled functions do not share a grid");
    }
}

/// Whether grid time t_i lies in the interval with the given endpoints.
inline bool in_interval(const SampledNbvFunction& f, std::size_t i, double a, double b,
                        Endpoints ends) {
    const double x = static_cast<double>(i);
    const double xa = a / f.step();
    const double xb = b / f.step();
    constexpr double tol = 1e-9;
    const bool after_a = (ends == Endpoints::ClosedClosed || ends == Endpoints::ClosedOpen)
                             ? x >= xa - tol
                             : x > xa + tol;
    const bool before_b = (ends == Endpoints::ClosedClosed || ends == Endpoints::OpenClosed)
                              ? x <= xb + tol
                              : x < xb - tol;
    return after_a && before_b;
}

}  // namespace detail

/// Integral of <u, dv> over an interval. dv is purely atomic on the grid;
/// the atom at t_i carries Delta_{t_i}(v) and is credited when t_i belongs
/// to the interval under the endpoint convention.
inline double stieltjes_integral(const SampledNbvFunction& u, const SampledNbvFunction& v,
                                 double a, double b, Endpoints ends = Endpoints::OpenClosed,
                                 Integrand integrand = Integrand::Value) {
    detail::require_same_grid(u, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!detail::in_interval(v, i, a, b, ends)) continue;
        const Vector w = integrand == Integrand::Value ? u.value(i) : u.left_limit(i);
        sum += w.dot(v.jump(i));
    }
    return sum;
}

/// |int_(a,b] u dv + int_(a,b] v_- du - (u(b)v(b) - u(a)v(a))|.
inline double integration_by_parts_residual(const SampledNbvFunction& u,
                                            const SampledNbvFunction& v, double a, double b) {
    const double lhs = stieltjes_integral(u, v, a, b) +
                       stieltjes_integral(v, u, a, b, Endpoints::OpenClosed, Integrand::LeftLimit);
    const double rhs = u(b).dot(v(b)) - u(a).dot(v(a));
    return std::abs(lhs - rhs);
}

/// Largest atom-wise discrepancy between d(uv) and the three product-rule
/// forms u dv + v_- du, u_- dv + v du, u dv + v du - sum Delta(u)Delta(v).
inline double product_rule_residual(const SampledNbvFunction& u, const SampledNbvFunction& v) {
    detail::require_same_grid(u, v);
    double worst = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const Vector du = u.jump(i);
        const Vector dv = v.jump(i);
        const Vector ul = u.left_limit(i);
        const Vector vl = v.left_limit(i);
        const double duv = u.value(i).dot(v.value(i)) - ul.dot(vl);
        const double first = u.value(i).dot(dv) + vl.dot(du);
        const double second = ul.dot(dv) + v.value(i).dot(du);
        const double third = u.value(i).dot(dv) + v.value(i).dot(du) - du.dot(dv);
        worst = std::max({worst, std::abs(duv - first), std::abs(duv - second),
                          std::abs(duv - third)});
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Uniform approximation by finite trajectories

/// Finite trajectory within sup-distance eps of the sampled path, with total
/// variation not exceeding the path's grid total variation.
///
/// Greedy cover: from an anchor a, the right window runs until the first
/// sample j with |gamma_j - gamma_a| >= eps, or until T. The separator b is
/// the start of the left window of j, i.e. of the samples within eps/2 of
/// gamma(j-), and the approximation holds gamma(a) on [a, b), gamma(b) on
/// [b, j). The last anchor is T, so the approximation ends at gamma(T).
inline FiniteTrajectory finite_approximation(const SampledNbvFunction& gamma, double eps,
                                             SurfacePtr surface = nullptr) {
    if (!(eps > 0)) throw Error("finite_approximation requires eps > 0");
    const auto& g = gamma.values();
    const std::size_t last = gamma.intervals();
    for (std::size_t k = 1; k <= last; ++k) {
        if (!gamma.is_declared_jump(k) && (g[k] - g[k - 1]).norm() >= 0.5 * eps) {
            throw OscillationNotResolved("grid increment at t=" + std::to_string(gamma.time(k)) +
                                         " exceeds eps/2 without a declared jump");
        }
    }
    std::vector<std::size_t> anchors{0};
    std::size_t a = 0;
    while (a < last) {
        std::size_t j = a + 1;
        while (j <= last && (g[j] - g[a]).norm() < eps) ++j;
        // The horizon is always the final anchor.
        j = std::min(j, last);
        std::size_t b = j - 1;
        while (b - 1 > a && (g[b - 1] - g[j - 1]).norm() < 0.5 * eps) --b;
        if (b > a) anchors.push_back(b);
        anchors.push_back(j);
        a = j;
    }
    std::vector<double> times;
    std::vector<Vector> values;
    for (auto idx : anchors) {
        if (!values.empty() && g[idx] == values.back()) continue;
        times.push_back(gamma.time(idx));
        values.push_back(g[idx]);
    }
    return FiniteTrajectory(std::move(surface), gamma.horizon(), std::move(times), std::move(values));
}

/// Sup-distance between a sampled path and a finite trajectory on the grid.
inline double grid_sup_distance(const SampledNbvFunction& gamma, const FiniteTrajectory& approx) {
    double worst = 0.0;
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        worst = std::max(worst, (gamma.value(i) - approx(gamma.time(i))).norm());
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Time changes and the Skorokhod distance

/// Increasing piecewise-linear bijection of [0, T] through the given knots.
class TimeChange {
public:
    TimeChange(double horizon, std::vector<double> domain, std::vector<double> image)
        : horizon_(horizon), domain_(std::move(domain)), image_(std::move(image)) {
        if (domain_.size() != image_.size() || domain_.size() < 2) {
            throw Error("time change needs matching knot lists with at least two knots");
        }
        if (domain_.front() != 0.0 || image_.front() != 0.0 || domain_.back() != horizon_ ||
            image_.back() != horizon_) {
            throw Error("time change must fix 0 and T");
        }
        for (std::size_t i = 1; i < domain_.size(); ++i) {
            if (!(domain_[i] > domain_[i - 1]) || !(image_[i] > image_[i - 1])) {
                throw Error("time change knots must be strictly increasing");
            }
        }
    }

    static TimeChange identity(double horizon) { return TimeChange(horizon, {0.0, horizon}, {0.0, horizon}); }

    /// Knots shifted by delta at the interior points, clamped to stay a
    /// bijection.
    static TimeChange shifted(double horizon, const std::vector<double>& knots, double delta) {
        std::vector<double> d{0.0}, im{0.0};
        for (double k : knots) {
            if (k <= 0 || k >= horizon) continue;
            const double target = k + delta;
            if (target <= im.back() || target >= horizon || k <= d.back()) continue;
            d.push_back(k);
            im.push_back(target);
        }
        d.push_back(horizon);
        im.push_back(horizon);
        return TimeChange(horizon, std::move(d), std::move(im));
    }

    double horizon() const { return horizon_; }
    const std::vector<double>& domain_knots() const { return domain_; }
    const std::vector<double>& image_knots() const { return image_; }

    double operator()(double t) const { return interpolate(domain_, image_, t); }
    double inverse(double s) const { return interpolate(image_, domain_, s); }

    /// sup |lambda(t) - t|, attained at a knot.
    double sup_deviation() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < domain_.size(); ++i) {
            worst = std::max(worst, std::abs(image_[i] - domain_[i]));
        }
        return worst;
    }

private:
    static double interpolate(const std::vector<double>& from, const std::vector<double>& to,
                              double t) {
        if (t <= from.front()) return to.front();
        if (t >= from.back()) return to.back();
        const auto it = std::upper_bound(from.begin(), from.end(), t);
        const auto k = static_cast<std::size_t>(it - from.begin()) - 1;
        if (from[k] == t) return to[k];
        const double w = (t - from[k]) / (from[k + 1] - from[k]);
        return to[k] + w * (to[k + 1] - to[k]);
    }

    double horizon_;
    std::vector<double> domain_;
    std::vector<double> image_;
};

/// gamma o lambda as a finite trajectory; its breakpoints are
/// lambda^{-1}(s_j).
inline FiniteTrajectory compose(const FiniteTrajectory& gamma, const TimeChange& lambda) {
    std::vector<double> times;
    times.reserve(gamma.size());
    for (double s : gamma.times()) times.push_back(lambda.inverse(s));
    times.front() = 0.0;
    return FiniteTrajectory(gamma.surface(), gamma.horizon(), std::move(times), gamma.values());
}

/// max(sup |gamma - other o lambda|, sup |lambda - id|), evaluated exactly.
inline double skorokhod_objective(const FiniteTrajectory& gamma, const FiniteTrajectory& other,
                                  const TimeChange& lambda) {
    const double horizon = gamma.horizon();
    std::vector<double> cuts = gamma.times();
    for (double s : other.times()) cuts.push_back(lambda.inverse(s));
    cuts.push_back(horizon);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double worst = (gamma(horizon) - other(horizon)).norm();
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        worst = std::max(worst, (gamma(mid) - other(lambda(mid))).norm());
    }
    return std::max(worst, lambda.sup_deviation());
}

struct SkorokhodResult {
    double distance = 0.0;  // optimal value of the jump-alignment program
    double bound = 0.0;     // objective attained by the witness
    TimeChange witness;
};

namespace detail {

enum class Move : std::uint8_t { None, AdvanceFirst, AdvanceSecond, AdvanceBoth };

/// Distance from t to the closed interval [lo, hi].
inline double distance_to(double t, double lo, double hi) {
    if (t < lo) return lo - t;
    if (t > hi) return t - hi;
    return 0.0;
}

/// Spreads free knot coordinates lying between fixed anchors so the
/// sequence becomes strictly increasing. `fixed[i]` marks anchors.
inline void separate_free_knots(std::vector<double>& z, const std::vector<bool>& fixed,
                                double horizon) {
    std::size_t left = 0;
    while (left + 1 < z.size()) {
        std::size_t right = left + 1;
        while (!fixed[right]) ++right;
        const std::size_t run = right - left - 1;
        if (run > 0) {
            const double lo = z[left];
            const double hi = z[right];
            const double eta = std::min(1e-12 * horizon, (hi - lo) / (2.0 * static_cast<double>(run + 1)));
            for (std::size_t k = 1; k <= run; ++k) {
                const double floor_k = lo + static_cast<double>(k) * eta;
                const double ceil_k = hi - static_cast<double>(run + 1 - k) * eta;
                z[left + k] = std::clamp(z[left + k], floor_k, ceil_k);
            }
        }
        left = right;
    }
}

}  // namespace detail

/// Skorokhod distance between two finite trajectories.
///
/// Every increasing bijection induces an interleaving of the two jump
/// sequences (jumps may also coincide). The optimal cost of an interleaving
/// is the largest of the value gaps |x_a - y_b| over the visited state pairs
/// and of each jump's distance to the window into which it must be mapped.
/// A bottleneck dynamic program over the (m+1) x (p+1) state grid finds the
/// best interleaving; a strictly increasing piecewise-linear witness is
/// rebuilt from it.
inline SkorokhodResult skorokhod_distance(const FiniteTrajectory& gamma,
                                          const FiniteTrajectory& other) {
    using detail::Move;
    if (gamma.horizon() != other.horizon()) {
        throw HorizonMismatch("Skorokhod distance needs a common horizon");
    }
    const double horizon = gamma.horizon();
    const auto& t = gamma.times();
    const auto& s = other.times();
    const auto& x = gamma.values();
    const auto& y = other.values();
    const std::size_t m = t.size() - 1;
    const std::size_t p = s.size() - 1;
    const double inf = std::numeric_limits<double>::infinity();
    auto t_next = [&](std::size_t a) { return a + 1 <= m ? t[a + 1] : horizon; };
    auto s_next = [&](std::size_t b) { return b + 1 <= p ? s[b + 1] : horizon; };

    // Cost of jumping gamma from a to a+1 while other stays in b.
    auto first_cost = [&](std::size_t a, std::size_t b) {
        const double tj = t[a + 1];
        if (tj == horizon) return (b == p && s[p] < horizon) ? 0.0 : inf;
        if (s[b] >= horizon) return inf;
        return detail::distance_to(tj, s[b], s_next(b));
    };
    auto second_cost = [&](std::size_t a, std::size_t b) {
        const double sj = s[b + 1];
        if (sj == horizon) return (a == m && t[m] < horizon) ? 0.0 : inf;
        if (t[a] >= horizon) return inf;
        return detail::distance_to(sj, t[a], t_next(a));
    };
    auto both_cost = [&](std::size_t a, std::size_t b) {
        const double tj = t[a + 1];
        const double sj = s[b + 1];
        if ((tj == horizon) != (sj == horizon)) return inf;
        return std::abs(tj - sj);
    };

    const std::size_t cols = p + 1;
    std::vector<double> best((m + 1) * cols, inf);
    std::vector<Move> from((m + 1) * cols, Move::None);
    auto at = [cols](std::size_t a, std::size_t b) { return a * cols + b; };
    best[at(0, 0)] = (x[0] - y[0]).norm();
    for (std::size_t a = 0; a <= m; ++a) {
        for (std::size_t b = 0; b <= p; ++b) {
            if (a == 0 && b == 0) continue;
            double value = inf;
            Move move = Move::None;
            if (a > 0 && best[at(a - 1, b)] < inf) {
                const double c = std::max(best[at(a - 1, b)], first_cost(a - 1, b));
                if (c < value) { value = c; move = Move::AdvanceFirst; }
            }
            if (b > 0 && best[at(a, b - 1)] < inf) {
                const double c = std::max(best[at(a, b - 1)], second_cost(a, b - 1));
                if (c < value) { value = c; move = Move::AdvanceSecond; }
            }
            if (a > 0 && b > 0 && best[at(a - 1, b - 1)] < inf) {
                const double c = std::max(best[at(a - 1, b - 1)], both_cost(a - 1, b - 1));
                if (c <= value) { value = c; move = Move::AdvanceBoth; }
            }
            if (value < inf) value = std::max(value, (x[a] - y[b]).norm());
            best[at(a, b)] = value;
            from[at(a, b)] = move;
        }
    }
    const double optimum = best[at(m, p)];
    if (!(optimum < inf)) throw Error("no feasible alignment between trajectories");

    // Walk back to recover the interleaving.
    std::vector<std::pair<std::size_t, std::size_t>> path;
    std::vector<Move> moves;
    for (std::size_t a = m, b = p; a != 0 || b != 0;) {
        const Move mv = from[at(a, b)];
        moves.push_back(mv);
        if (mv == Move::AdvanceFirst) --a;
        else if (mv == Move::AdvanceSecond) --b;
        else { --a; --b; }
        path.emplace_back(a, b);
    }
    std::reverse(moves.begin(), moves.end());
    std::reverse(path.begin(), path.end());

    std::vector<double> dom{0.0}, img{0.0};
    std::vector<bool> dom_fixed{true}, img_fixed{true};
    for (std::size_t k = 0; k < moves.size(); ++k) {
        const auto [a, b] = path[k];
        switch (moves[k]) {
            case Move::AdvanceFirst:
                dom.push_back(t[a + 1]);
                img.push_back(t[a + 1] == horizon ? horizon
                                                  : std::clamp(t[a + 1], s[b], s_next(b)));
                dom_fixed.push_back(true);
                img_fixed.push_back(t[a + 1] == horizon);
                break;
            case Move::AdvanceSecond:
                img.push_back(s[b + 1]);
                dom.push_back(s[b + 1] == horizon ? horizon
                                                  : std::clamp(s[b + 1], t[a], t_next(a)));
                img_fixed.push_back(true);
                dom_fixed.push_back(s[b + 1] == horizon);
                break;
            default:
                dom.push_back(t[a + 1]);
                img.push_back(s[b + 1]);
                dom_fixed.push_back(true);
                img_fixed.push_back(true);
                break;
        }
    }
    if (dom.back() != horizon || img.back() != horizon) {
        dom.push_back(horizon);
        img.push_back(horizon);
        dom_fixed.push_back(true);
        img_fixed.push_back(true);
    }
    detail::separate_free_knots(dom, dom_fixed, horizon);
    detail::separate_free_knots(img, img_fixed, horizon);
    TimeChange witness(horizon, std::move(dom), std::move(img));
    const double bound = skorokhod_objective(gamma, other, witness);
    return {optimum, bound, std::move(witness)};
}

// ---------------------------------------------------------------------------
// Serialization

/// CSV with header "t,x_1,...,x_n" and one row per breakpoint. The horizon
/// is carried in a leading "# horizon=" comment line.
inline void write_trajectory_csv(std::ostream& out, const FiniteTrajectory& gamma) {
    out.precision(17);
    out << "# horizon=" << gamma.horizon() << '\n' << 't';
    for (int i = 1; i <= gamma.dim(); ++i) out << ",x_" << i;
    out << '\n';
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        out << gamma.times()[k];
        for (int i = 0; i < gamma.dim(); ++i) out << ',' << gamma.values()[k](i);
        out << '\n';
    }
}

inline FiniteTrajectory read_trajectory_csv(std::istream& in, SurfacePtr surface) {
    std::string line;
    double horizon = -1.0;
    std::vector<double> times;
    std::vector<Vector> values;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto pos = line.find("horizon=");
            if (pos != std::string::npos) horizon = std::stod(line.substr(pos + 8));
            continue;
        }
        if (!header) {
            header = true;
            continue;
        }
        std::vector<double> cells;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
        if (cells.size() < 2) throw InvalidTrajectory("trajectory row needs a time and coordinates");
        times.push_back(cells.front());
        values.push_back(Eigen::Map<const Vector>(cells.data() + 1, static_cast<long>(cells.size()) - 1));
    }
    if (horizon < 0) throw InvalidTrajectory("trajectory CSV lacks a horizon line");
    return FiniteTrajectory(std::move(surface), horizon, std::move(times), std::move(values));
}

}  // namespace rbmflow
