#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rbmflow/errors.hpp"
#include "rbmflow/geometry.hpp"
#include "rbmflow/linalg.hpp"
#include "rbmflow/philox.hpp"

namespace rbmflow {

struct RbmOptions {
    double step = 1e-4;
    double horizon = 1.0;                 // stop time when no local-time target is set
    std::optional<double> local_time;     // stop once L >= r
    double max_time = 200.0;              // give up on the local-time target after this
    double step_limit_factor = 0.01;      // h_max = factor / max_curvature^2
    bool record = true;                   // keep the full state and local-time ladder
    ProjectionOptions projection;
};

/// Euler-Skorokhod path: states X_k at t_k = k h, local time ladder L_k and
/// projection flags. Without recording only the final values are kept.
struct RbmPath {
    int dim = 0;
    double step = 0.0;
    std::uint64_t seed = 0;
    std::uint32_t replica = 0;
    std::size_t steps = 0;  // number of completed steps
    std::vector<double> coords;               // (steps + 1) * dim when recorded
    std::vector<double> local_time;           // steps + 1 when recorded
    std::vector<std::uint8_t> projected;      // steps + 1 when recorded; entry 0 is 0
    Vector final_state;
    double final_local_time = 0.0;
    std::size_t projection_steps = 0;
    std::optional<double> target;             // r when stopping by local time
    std::optional<std::size_t> target_step;   // first k with L_k >= r

    bool recorded() const { return !local_time.empty(); }
    double time(std::size_t k) const { return static_cast<double>(k) * step; }
    double end_time() const { return time(steps); }
    Eigen::Map<const Vector> state(std::size_t k) const {
        return Eigen::Map<const Vector>(coords.data() + k * static_cast<std::size_t>(dim), dim);
    }
};

/// Largest admissible step for a domain: factor / kappa^2, so that one
/// Gaussian increment stays well inside the curvature scale.
inline double max_step_for(const Hypersurface& domain, double factor) {
    if (!domain.domain()) return std::numeric_limits<double>::infinity();
    const double kappa = domain.domain()->max_curvature;
    return kappa > 0 ? factor / (kappa * kappa) : std::numeric_limits<double>::infinity();
}

/// Uniform point of the bounded domain by rejection from its bounding box.
inline Vector uniform_point_in_domain(const Hypersurface& domain, std::uint64_t seed,
                                      std::uint32_t replica) {
    if (!domain.domain()) throw Error(domain.name() + " does not bound a domain");
    const double r = domain.domain()->bounding_radius;
    const int n = domain.dim();
    const CounterRng rng(seed, replica);
    Vector p(n);
    for (std::uint64_t attempt = 0; attempt < 1000000; ++attempt) {
        for (int i = 0; i < n; i += 2) {
            const auto u = rng.uniforms(attempt, static_cast<std::uint32_t>(i / 2), RngPurpose::StartPoint);
            p(i) = r * (2.0 * u[0] - 1.0);
            if (i + 1 < n) p(i + 1) = r * (2.0 * u[1] - 1.0);
        }
        if (domain.level(p) < 0.0) return p;
    }
    throw Error("rejection sampling of a start point failed in " + domain.name());
}

/// Reflected Brownian motion by the projection scheme: propose
/// X' = X_k + sqrt(h) xi; keep it if it lies in the closed domain, otherwise
/// move to the nearest boundary point and add the push-back distance to L.
inline RbmPath simulate_path(const Hypersurface& domain, const Vector& start,
                             const RbmOptions& opt, std::uint64_t seed, std::uint32_t replica) {
    if (!(opt.step > 0)) throw Error("step must be positive");
    const double h_max = max_step_for(domain, opt.step_limit_factor);
    if (opt.step > h_max) {
        throw StepTooLarge("step " + std::to_string(opt.step) + " exceeds " + std::to_string(h_max) +
                           " for " + domain.name());
    }
    if (start.size() != domain.dim() || !domain.in_closure(start)) {
        throw Error("start point is outside the closed domain");
    }
    const int n = domain.dim();
    const double sqrt_h = std::sqrt(opt.step);
    std::size_t max_steps = 0;
    if (opt.local_time) {
        max_steps = static_cast<std::size_t>(std::ceil(opt.max_time / opt.step));
    } else {
        if (!(opt.horizon >= 0)) throw Error("horizon must be nonnegative");
        max_steps = static_cast<std::size_t>(std::llround(opt.horizon / opt.step));
    }

    RbmPath path;
    path.dim = n;
    path.step = opt.step;
    path.seed = seed;
    path.replica = replica;
    path.target = opt.local_time;
    const CounterRng rng(seed, replica);

    Vector x = start;
    Vector proposal(n);
    std::vector<double> xi(n);
    double ell = 0.0;
    auto record = [&](bool projected) {
        if (!opt.record) return;
        path.coords.insert(path.coords.end(), x.data(), x.data() + n);
        path.local_time.push_back(ell);
        path.projected.push_back(projected ? 1 : 0);
    };
    if (opt.record) {
        const std::size_t reserve = std::min<std::size_t>(max_steps + 1, 1u << 22);
        path.coords.reserve(reserve * n);
        path.local_time.reserve(reserve);
        path.projected.reserve(reserve);
    }
    record(false);
    if (opt.local_time && *opt.local_time <= 0.0) path.target_step = 0;

    std::size_t k = 0;
    while (k < max_steps && !path.target_step) {
        rng.normals(k, xi);
        for (int i = 0; i < n; ++i) proposal(i) = x(i) + sqrt_h * xi[i];
        bool projected = false;
        if (domain.level(proposal) <= 0.0) {
            x = proposal;
        } else {
            Vector y;
            try {
                y = closest_point(domain, proposal, opt.projection);
            } catch (const ProjectionDiverged& e) {
                throw ProjectionDiverged(std::string(e.what()) + " (replica " + std::to_string(replica) +
                                         ", step " + std::to_string(k) + ")");
            }
            ell += (proposal - y).norm();
            x = y;
            projected = true;
            ++path.projection_steps;
        }
        ++k;
        record(projected);
        if (opt.local_time && ell >= *opt.local_time) path.target_step = k;
    }
    path.steps = k;
    path.final_state = x;
    path.final_local_time = ell;
    return path;
}

/// sigma_t = inf{s : L_s >= t}, linearly interpolated inside the crossing
/// step. sigma_0 is the first contact (projection) time.
inline double inverse_local_time(const RbmPath& path, double level) {
    if (!path.recorded()) throw Error("inverse local time needs a recorded path");
    const auto& l = path.local_time;
    if (level <= 0.0) {
        for (std::size_t k = 1; k < path.projected.size(); ++k) {
            if (path.projected[k]) return path.time(k);
        }
        throw LocalTimeNotReached("path never reaches the boundary");
    }
    if (l.back() < level) {
        throw LocalTimeNotReached("local time " + std::to_string(level) + " not reached (final " +
                                  std::to_string(l.back()) + ")");
    }
    const auto it = std::lower_bound(l.begin(), l.end(), level);
    const auto k = static_cast<std::size_t>(it - l.begin());
    const double frac = (level - l[k - 1]) / (l[k] - l[k - 1]);
    return path.time(k - 1) + frac * path.step;
}

/// One excursion away from the boundary: it leaves the contact point at
/// step `start_step` and returns at `end_step`.
struct ExcursionRecord {
    std::size_t start_step = 0;
    std::size_t end_step = 0;
    double start = 0.0;
    double end = 0.0;
    Vector start_point;
    Vector end_point;
    double jump = 0.0;        // |end_point - start_point|
    double local_time = 0.0;  // L at the start contact
};

struct ExcursionSkeleton {
    std::vector<ExcursionRecord> records;
    std::optional<std::size_t> first_contact_step;
    std::optional<Vector> first_contact_point;
    double step = 0.0;
    std::optional<double> local_time_horizon;  // r
    std::optional<double> sigma;               // sigma_r
    double final_local_time = 0.0;

    bool touched() const { return first_contact_step.has_value(); }
    double first_contact_time() const {
        if (!first_contact_step) throw NoBoundaryContact("path never touches the boundary");
        return static_cast<double>(*first_contact_step) * step;
    }
    const Vector& first_point() const {
        if (!first_contact_point) throw NoBoundaryContact("path never touches the boundary");
        return *first_contact_point;
    }
};

/// Default contact tolerance 2 sqrt(h) log(1/h), the width of the discrete
/// overshoot layer.
inline double default_boundary_tol(double step) {
    return step < 1.0 ? 2.0 * std::sqrt(step) * std::log(1.0 / step) : 0.0;
}

/// Distance to the boundary, exact for closed-form surfaces and first order
/// |f| / |grad f| otherwise.
inline double boundary_distance(const Hypersurface& domain, const Vector& x) {
    if (domain.closest_point_map()) return (x - (*domain.closest_point_map())(x)).norm();
    const double g = domain.gradient(x).norm();
    return g > 0 ? std::abs(domain.level(x)) / g : std::numeric_limits<double>::infinity();
}

/// Excursion skeleton of a recorded path. A step is a boundary contact when
/// it was projected or lies within boundary_tol of the boundary; its contact
/// point is the nearest boundary point. Each maximal run of non-contact steps
/// between two contacts is one excursion. Consecutive contacts are boundary
/// occupation, not zero-lifetime excursions.
inline ExcursionSkeleton extract_excursions(const RbmPath& path, const Hypersurface& domain,
                                            double boundary_tol) {
    if (!path.recorded()) throw Error("excursion extraction needs a recorded path");
    ExcursionSkeleton out;
    out.step = path.step;
    out.local_time_horizon = path.target;
    out.final_local_time = path.final_local_time;
    if (path.target_step) out.sigma = inverse_local_time(path, *path.target);
    std::optional<std::size_t> last_contact;
    Vector last_point;
    for (std::size_t k = 0; k <= path.steps; ++k) {
        bool contact = path.projected[k] != 0;
        if (!contact && boundary_tol > 0) contact = boundary_distance(domain, path.state(k)) <= boundary_tol;
        if (!contact) continue;
        Vector point = path.state(k);
        if (!path.projected[k]) point = closest_point(domain, point);
        if (!out.first_contact_step) {
            out.first_contact_step = k;
            out.first_contact_point = point;
        }
        if (last_contact && k > *last_contact + 1) {
            ExcursionRecord rec;
            rec.start_step = *last_contact;
            rec.end_step = k;
            rec.start = path.time(*last_contact);
            rec.end = path.time(k);
            rec.start_point = last_point;
            rec.end_point = point;
            rec.jump = (rec.end_point - rec.start_point).norm();
            rec.local_time = path.local_time[*last_contact];
            out.records.push_back(std::move(rec));
        }
        last_contact = k;
        last_point = std::move(point);
    }
    return out;
}

/// Number of excursions with jump >= eps that start before local time r
/// (all of them when r is not given).
inline std::size_t count_large_excursions(const ExcursionSkeleton& sk, double eps,
                                          std::optional<double> r = std::nullopt) {
    std::size_t count = 0;
    for (const auto& rec : sk.records) {
        if (r && !(rec.local_time < *r)) break;
        if (rec.jump >= eps) ++count;
    }
    return count;
}

/// Path dump: "step,t,x_1..x_n,L,contact".
inline void write_path_csv(std::ostream& out, const RbmPath& path) {
    out.precision(17);
    out << "step,t";
    for (int i = 1; i <= path.dim; ++i) out << ",x_" << i;
    out << ",L,contact\n";
    for (std::size_t k = 0; k <= path.steps && path.recorded(); ++k) {
        out << k << ',' << path.time(k);
        const auto x = path.state(k);
        for (int i = 0; i < path.dim; ++i) out << ',' << x(i);
        out << ',' << path.local_time[k] << ',' << static_cast<int>(path.projected[k]) << '\n';
    }
}

/// Skeleton dump: "s,u,e0_1..e0_n,eend_1..eend_n,jump,ell".
inline void write_skeleton_csv(std::ostream& out, const ExcursionSkeleton& sk, int dim) {
    out.precision(17);
    out << "s,u";
    for (int i = 1; i <= dim; ++i) out << ",e0_" << i;
    for (int i = 1; i <= dim; ++i) out << ",eend_" << i;
    out << ",jump,ell\n";
    for (const auto& r : sk.records) {
        out << r.start << ',' << r.end;
        for (int i = 0; i < dim; ++i) out << ',' << r.start_point(i);
        for (int i = 0; i < dim; ++i) out << ',' << r.end_point(i);
        out << ',' << r.jump << ',' << r.local_time << '\n';
    }
}

}  // namespace rbmflow
