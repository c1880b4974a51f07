#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "rbmflow/errors.hpp"
#include "rbmflow/linalg.hpp"
#include "rbmflow/philox.hpp"

namespace rbmflow {

/// Metadata of the bounded region {level < 0}, when it is bounded.
struct DomainInfo {
    double bounding_radius = 0.0;  // the domain lies in the ball of this radius
    double diameter = 0.0;
    double max_curvature = 0.0;    // largest principal curvature of the boundary
    std::optional<double> volume;
    std::optional<double> boundary_measure;
};

/// Implicit C^2 hypersurface {level = 0} in R^n. The open domain D is the
/// negative set of the level function.
class Hypersurface {
public:
    using ScalarField = std::function<double(const Vector&)>;
    using VectorField = std::function<Vector(const Vector&)>;
    using MatrixField = std::function<Matrix(const Vector&)>;

    struct Fields {
        ScalarField level;
        VectorField gradient;
        MatrixField hessian;
    };

    Hypersurface(std::string name, int dim, Fields fields, double orientation,
                 double surface_tol = 1e-9)
        : name_(std::move(name)),
          dim_(dim),
          fields_(std::move(fields)),
          orientation_(orientation),
          surface_tol_(surface_tol) {
        if (dim_ < 2) throw Error("hypersurface dimension must be at least 2");
        if (orientation_ != 1.0 && orientation_ != -1.0) {
            throw Error("orientation must be +1 or -1");
        }
    }

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    double orientation() const { return orientation_; }
    double surface_tol() const { return surface_tol_; }

    double level(const Vector& x) const { return fields_.level(x); }
    Vector gradient(const Vector& x) const { return fields_.gradient(x); }
    Matrix hessian(const Vector& x) const { return fields_.hessian(x); }

    bool on_surface(const Vector& x) const { return std::abs(level(x)) <= surface_tol_; }
    bool in_closure(const Vector& x) const { return level(x) <= surface_tol_; }

    /// Closed-form nearest-point map, when the surface has one.
    const std::optional<VectorField>& closest_point_map() const { return closest_; }
    Hypersurface& with_closest_point(VectorField f) {
        closest_ = std::move(f);
        return *this;
    }

    const std::optional<DomainInfo>& domain() const { return domain_; }
    Hypersurface& with_domain(DomainInfo info) {
        domain_ = info;
        return *this;
    }

private:
    std::string name_;
    int dim_;
    Fields fields_;
    double orientation_;
    double surface_tol_;
    std::optional<VectorField> closest_;
    std::optional<DomainInfo> domain_;
};

using SurfacePtr = std::shared_ptr<const Hypersurface>;

/// Orthogonal projection onto the tangent space at a surface point.
struct TangentProjector {
    Vector base_point;
    Matrix matrix;
};

/// Shape operator (Weingarten map) at a surface point, extended to R^n by
/// S n = 0.
struct ShapeOperator {
    Vector base_point;
    Vector normal;
    Matrix matrix;
};

// ---------------------------------------------------------------------------
// Pointwise operations

namespace detail {

inline void require_on_surface(const Hypersurface& surface, const Vector& x) {
    if (x.size() != surface.dim()) {
        throw PointOffSurface("point dimension does not match surface " + surface.name());
    }
    if (!surface.on_surface(x)) {
        throw PointOffSurface("point is off " + surface.name() +
                              " (|level| = " + std::to_string(std::abs(surface.level(x))) + ")");
    }
}

}  // namespace detail

/// Oriented unit normal of the level-set extension, defined wherever the
/// gradient is nonzero. No on-surface check.
inline Vector normal_field(const Hypersurface& surface, const Vector& x) {
    const Vector g = surface.gradient(x);
    const double norm = g.norm();
    if (!(norm >= 1e-12)) throw DegenerateGradient("gradient vanishes on " + surface.name());
    return surface.orientation() * g / norm;
}

inline Vector normal(const Hypersurface& surface, const Vector& x) {
    detail::require_on_surface(surface, x);
    return normal_field(surface, x);
}

inline Matrix projector_from_normal(const Vector& n) {
    return Matrix::Identity(n.size(), n.size()) - n * n.transpose();
}

inline TangentProjector tangent_project(const Hypersurface& surface, const Vector& x) {
    return {x, projector_from_normal(normal(surface, x))};
}

/// S = -pi D(n) on the tangent space, from the analytic Jacobian of the
/// normalized gradient: D(n) = sigma (I - g g^T/|g|^2) H / |g|.
inline ShapeOperator shape_operator(const Hypersurface& surface, const Vector& x) {
    detail::require_on_surface(surface, x);
    const Vector g = surface.gradient(x);
    const double gnorm = g.norm();
    if (!(gnorm >= 1e-12)) throw DegenerateGradient("gradient vanishes on " + surface.name());
    const Vector n = surface.orientation() * g / gnorm;
    const Matrix pi = projector_from_normal(n);
    Matrix s = -(surface.orientation() / gnorm) * (pi * surface.hessian(x) * pi);
    s = symmetrize(s);
    // Exact S n = 0 after rounding.
    s = pi * s * pi;
    return {x, n, symmetrize(s)};
}

/// exp(tS) by symmetric eigendecomposition; the normal direction is an
/// eigenvector with eigenvalue 0 and is preserved.
inline Matrix exp_shape(const ShapeOperator& s, double t) {
    if (!(t >= 0.0)) throw Error("exp_shape requires t >= 0");
    return SymmetricExp(s.matrix)(t);
}

// ---------------------------------------------------------------------------
// Nearest-point projection

struct ProjectionOptions {
    int max_iterations = 50;
    double tolerance = -1.0;  // defaults to the surface tolerance
};

namespace detail {

/// Root of the level function along the normal line through p, by
/// bracketing and bisection.
inline std::optional<Vector> normal_line_closest(const Hypersurface& surface, const Vector& p,
                                                 int max_iter, double tol) {
    const Vector g = surface.gradient(p);
    const double gnorm = g.norm();
    if (!(gnorm >= 1e-12)) return std::nullopt;
    const Vector dir = g / gnorm;
    const double f0 = surface.level(p);
    if (std::abs(f0) <= tol) return p;
    // Move against the sign of f along the gradient direction.
    const double sign = f0 > 0 ? -1.0 : 1.0;
    double lo = 0.0;
    double hi = std::abs(f0) / gnorm;
    if (hi == 0.0) hi = 1e-8;
    int expansions = 0;
    while (surface.level(p + sign * hi * dir) * f0 > 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++expansions > 60) return std::nullopt;
    }
    Vector mid = p;
    for (int it = 0; it < 4 * max_iter; ++it) {
        const double s = 0.5 * (lo + hi);
        mid = p + sign * s * dir;
        const double fm = surface.level(mid);
        if (std::abs(fm) <= tol) return mid;
        if (fm * f0 > 0.0) lo = s;
        else hi = s;
    }
    return std::abs(surface.level(mid)) <= tol ? std::optional<Vector>(mid) : std::nullopt;
}

inline std::optional<Vector> newton_closest(const Hypersurface& surface, const Vector& p,
                                            int max_iter, double tol) {
    const int n = surface.dim();
    // Start from the foot of the normal line, which lies on the surface.
    Vector y = normal_line_closest(surface, p, max_iter, tol).value_or(p);
    Vector g = surface.gradient(y);
    double gg = g.squaredNorm();
    if (gg < 1e-24) return std::nullopt;
    double mu = (p - y).dot(g) / gg;

    auto residual = [&](const Vector& yy, double mm, Vector& res) {
        const Vector gy = surface.gradient(yy);
        res.resize(n + 1);
        res.head(n) = yy - p + mm * gy;
        res(n) = surface.level(yy);
        return res.norm();
    };

    Vector res;
    double rnorm = residual(y, mu, res);
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(res(n)) <= tol && res.head(n).norm() <= 1e-14 * (1.0 + p.norm())) return y;
        Matrix jac(n + 1, n + 1);
        g = surface.gradient(y);
        jac.topLeftCorner(n, n) = Matrix::Identity(n, n) + mu * surface.hessian(y);
        jac.topRightCorner(n, 1) = g;
        jac.bottomLeftCorner(1, n) = g.transpose();
        jac(n, n) = 0.0;
        const Vector step = jac.fullPivLu().solve(-res);
        if (!step.allFinite()) return std::nullopt;
        double damping = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            const Vector y_try = y + damping * step.head(n);
            const double mu_try = mu + damping * step(n);
            Vector res_try;
            const double r_try = residual(y_try, mu_try, res_try);
            if (std::isfinite(r_try) && r_try < (1.0 - 1e-4 * damping) * rnorm) {
                y = y_try;
                mu = mu_try;
                res = res_try;
                rnorm = r_try;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if (!accepted) break;
    }
    if (std::abs(res(n)) <= tol && res.head(n).norm() <= 1e-9 * (1.0 + p.norm())) return y;
    return std::nullopt;
}

}  // namespace detail

/// Nearest point of the surface to p: closed form when available, otherwise
/// damped Newton on the Lagrange system with a normal-line bisection
/// fallback.
inline Vector closest_point(const Hypersurface& surface, const Vector& p,
                            const ProjectionOptions& options = {}) {
    if (const auto& closed = surface.closest_point_map()) {
        Vector y = (*closed)(p);
        if (y.allFinite()) return y;
        throw ProjectionDiverged("closed-form projection failed on " + surface.name());
    }
    const double tol = options.tolerance > 0 ? options.tolerance : surface.surface_tol();
    if (auto y = detail::newton_closest(surface, p, options.max_iterations, tol)) return *y;
    if (auto y = detail::normal_line_closest(surface, p, options.max_iterations, tol)) return *y;
    throw ProjectionDiverged("nearest-point projection failed on " + surface.name());
}

// ---------------------------------------------------------------------------
// Built-in surfaces

inline double unit_ball_volume(int n) {
    return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

/// Sphere of radius r centered at the origin, inward normal; boundary of the
/// ball of radius r.
inline Hypersurface make_ball(int dim, double radius = 1.0) {
    if (!(radius > 0)) throw Error("ball radius must be positive");
    Hypersurface::Fields f{
        [radius](const Vector& x) { return x.squaredNorm() - radius * radius; },
        [](const Vector& x) { return Vector(2.0 * x); },
        [dim](const Vector&) { return Matrix(2.0 * Matrix::Identity(dim, dim)); }};
    Hypersurface s("ball(r=" + std::to_string(radius) + ")", dim, std::move(f), -1.0);
    s.with_closest_point([radius, dim](const Vector& p) {
        const double norm = p.norm();
        if (norm == 0.0) {
            Vector e = Vector::Zero(dim);
            e(0) = radius;
            return e;
        }
        return Vector(radius * p / norm);
    });
    const double vol = unit_ball_volume(dim) * std::pow(radius, dim);
    s.with_domain({radius, 2.0 * radius, 1.0 / radius, vol, dim * vol / radius});
    return s;
}

/// Axis-aligned ellipsoid sum x_i^2 / a_i^2 = 1, inward normal.
inline Hypersurface make_ellipsoid(std::vector<double> axes) {
    const int dim = static_cast<int>(axes.size());
    for (double a : axes) {
        if (!(a > 0)) throw Error("ellipsoid semi-axes must be positive");
    }
    Vector inv2(dim);
    for (int i = 0; i < dim; ++i) inv2(i) = 1.0 / (axes[i] * axes[i]);
    Hypersurface::Fields f{
        [inv2](const Vector& x) { return x.cwiseProduct(x).dot(inv2) - 1.0; },
        [inv2](const Vector& x) { return Vector(2.0 * x.cwiseProduct(inv2)); },
        [inv2](const Vector&) { return Matrix((2.0 * inv2).asDiagonal()); }};
    std::string name = "ellipsoid(";
    for (int i = 0; i < dim; ++i) name += (i ? "," : "") + std::to_string(axes[i]);
    name += ")";
    Hypersurface s(name, dim, std::move(f), -1.0);
    const double amax = *std::max_element(axes.begin(), axes.end());
    const double amin = *std::min_element(axes.begin(), axes.end());
    double vol = unit_ball_volume(dim);
    for (double a : axes) vol *= a;
    DomainInfo info{amax, 2.0 * amax, amax / (amin * amin), vol, std::nullopt};
    if (amax == amin) info.boundary_measure = dim * vol / amax;
    s.with_domain(info);
    return s;
}

/// Planar parabola x2 = c x1^2. Orientation +1 selects the normal pointing
/// toward increasing x2 ("upward").
inline Hypersurface make_parabola(double c = 0.25, double orientation = 1.0) {
    if (c == 0.0) throw Error("parabola scale must be nonzero");
    Hypersurface::Fields f{
        [c](const Vector& x) { return x(1) - c * x(0) * x(0); },
        [c](const Vector& x) {
            Vector g(2);
            g << -2.0 * c * x(0), 1.0;
            return g;
        },
        [c](const Vector&) {
            Matrix h = Matrix::Zero(2, 2);
            h(0, 0) = -2.0 * c;
            return h;
        }};
    return Hypersurface("parabola(c=" + std::to_string(c) + ")", 2, std::move(f), orientation);
}

/// Hyperplane x_n = 0 with normal e_n.
inline Hypersurface make_plane(int dim) {
    Hypersurface::Fields f{
        [dim](const Vector& x) { return x(dim - 1); },
        [dim](const Vector&) {
            Vector g = Vector::Zero(dim);
            g(dim - 1) = 1.0;
            return g;
        },
        [dim](const Vector&) { return Matrix(Matrix::Zero(dim, dim)); }};
    Hypersurface s("plane", dim, std::move(f), 1.0);
    s.with_closest_point([dim](const Vector& p) {
        Vector y = p;
        y(dim - 1) = 0.0;
        return y;
    });
    return s;
}

/// Builds a surface from a registry string: `ball(r=1)`, `ball(2)`,
/// `ellipsoid(2,1,1)`, `parabola(c=0.25)`, `parabola(1,down)`, `plane`.
/// `dim` is used by ball and plane.
inline Hypersurface surface_from_spec(const std::string& spec, int dim) {
    static const std::regex call(R"(^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$)");
    std::smatch m;
    if (!std::regex_match(spec, m, call)) throw Error("unparsable surface spec '" + spec + "'");
    const std::string name = m[1];
    std::vector<std::pair<std::string, std::string>> args;
    {
        const std::string body = m[2];
        std::size_t pos = 0;
        while (pos <= body.size() && !body.empty()) {
            const std::size_t comma = body.find(',', pos);
            std::string item = body.substr(pos, comma == std::string::npos ? std::string::npos
                                                                          : comma - pos);
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            if (item.empty()) throw Error("empty argument in surface spec '" + spec + "'");
            const std::size_t eq = item.find('=');
            if (eq == std::string::npos) args.emplace_back("", item);
            else args.emplace_back(item.substr(0, eq), item.substr(eq + 1));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    auto number = [&](const std::string& text) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != text.size()) throw Error("bad number '" + text + "' in surface spec '" + spec + "'");
        return v;
    };
    auto lookup = [&](const std::string& key, std::size_t position, double fallback) {
        for (const auto& [k, v] : args) {
            if (k == key) return number(v);
        }
        std::size_t positional = 0;
        for (const auto& [k, v] : args) {
            if (k.empty()) {
                if (positional == position && v != "up" && v != "down") return number(v);
                ++positional;
            }
        }
        return fallback;
    };
    if (name == "ball" || name == "sphere") return make_ball(dim, lookup("r", 0, 1.0));
    if (name == "plane") return make_plane(dim);
    if (name == "parabola") {
        double orientation = 1.0;
        for (const auto& [k, v] : args) {
            if (v == "down" || (k == "orientation" && v == "down")) orientation = -1.0;
        }
        return make_parabola(lookup("c", 0, 0.25), orientation);
    }
    if (name == "ellipsoid") {
        std::vector<double> axes;
        for (const auto& [k, v] : args) axes.push_back(number(v));
        if (axes.size() < 2) throw Error("ellipsoid needs at least two semi-axes");
        return make_ellipsoid(axes);
    }
    throw Error("unknown surface '" + name + "'");
}

// ---------------------------------------------------------------------------
// Sampling and constant calibration

/// Random points of M_R = M intersected with the closed ball of radius R,
/// obtained by projecting uniform box samples onto the surface.
inline std::vector<Vector> sample_surface(const Hypersurface& surface, double radius,
                                          std::size_t count, std::uint64_t seed) {
    const int n = surface.dim();
    const CounterRng rng(seed, 0);
    std::vector<Vector> points;
    points.reserve(count);
    const std::size_t max_attempts = 50 * count + 1000;
    std::vector<double> u(n);
    for (std::size_t attempt = 0; attempt < max_attempts && points.size() < count; ++attempt) {
        Vector p(n);
        for (int i = 0; i < n; i += 2) {
            const auto pair = rng.uniforms(attempt, static_cast<std::uint32_t>(i / 2),
                                           RngPurpose::Sampling);
            p(i) = radius * (2.0 * pair[0] - 1.0);
            if (i + 1 < n) p(i + 1) = radius * (2.0 * pair[1] - 1.0);
        }
        Vector y;
        try {
            y = closest_point(surface, p);
        } catch (const ProjectionDiverged&) {
            continue;
        }
        if (y.norm() <= radius && surface.on_surface(y)) points.push_back(std::move(y));
    }
    if (points.empty()) throw EmptySurfaceRegion("no surface points within radius " + std::to_string(radius));
    return points;
}

/// Sampled constant for the operator estimates on M_R and lengths in [0, T].
/// Each field is the supremum of the quotient controlling one inequality.
struct GlobalKEstimate {
    double K = 0.0;
    double projector_lipschitz = 0.0;   // ||pi_x - pi_y|| / |x - y|
    double shape_norm = 0.0;            // ||S(x)||
    double shape_lipschitz = 0.0;       // ||S(x) - S(y)|| / |x - y|
    double exp_growth = 0.0;            // log||e^{tS}|| / t
    double exp_lower = 0.0;             // -log(min stretch of e^{tS}) / t
    double exp_minus_identity = 0.0;    // ||e^{lS} - I|| / l, l in (0, T]
    double exp_lipschitz = 0.0;         // ||e^{lS(x)} - e^{lS(y)}|| / (l |x - y|)
    double normal_lipschitz = 0.0;      // |n(x) - n(y)| / |x - y|
    std::size_t points = 0;
    std::size_t pairs = 0;
};

/// Pairs used for Lipschitz quotients: consecutive sample points (far pairs)
/// and each point with a nearby surface point (near pairs).
inline std::vector<std::pair<Vector, Vector>> sample_surface_pairs(const Hypersurface& surface,
                                                                   const std::vector<Vector>& points,
                                                                   double radius,
                                                                   std::uint64_t seed) {
    std::vector<std::pair<Vector, Vector>> pairs;
    const CounterRng rng(seed, 1);
    const int n = surface.dim();
    std::vector<double> xi(n);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vector& x = points[i];
        if (i + 1 < points.size()) pairs.emplace_back(x, points[i + 1]);
        rng.normals(i, xi, RngPurpose::Sampling);
        const Vector dir = Eigen::Map<const Vector>(xi.data(), n);
        const double scale = 1e-2 * radius * (1.0 + static_cast<double>(i % 4));
        try {
            Vector y = closest_point(surface, x + scale * dir.normalized());
            if (y.norm() <= radius && (y - x).norm() > 0.0) pairs.emplace_back(x, std::move(y));
        } catch (const ProjectionDiverged&) {
        }
    }
    return pairs;
}

inline GlobalKEstimate lemma_globalK_constant(const Hypersurface& surface, double radius,
                                              double horizon, std::size_t samples = 2000,
                                              std::uint64_t seed = 7) {
    if (!(horizon > 0)) throw Error("horizon must be positive");
    const auto points = sample_surface(surface, radius, samples, seed);
    const auto pairs = sample_surface_pairs(surface, points, radius, seed + 1);
    GlobalKEstimate est;
    est.points = points.size();
    est.pairs = pairs.size();
    for (const auto& x : points) {
        const ShapeOperator s = shape_operator(surface, x);
        const SymmetricExp ex(s.matrix);
        const Vector& lambda = ex.eigenvalues();
        est.shape_norm = std::max(est.shape_norm, ex.spectral_radius());
        est.exp_growth = std::max(est.exp_growth, std::max(lambda.maxCoeff(), 0.0));
        est.exp_lower = std::max(est.exp_lower, std::max(-lambda.minCoeff(), 0.0));
        for (int i = 0; i < lambda.size(); ++i) {
            const double q = lambda(i) > 0 ? std::expm1(horizon * lambda(i)) / horizon
                                           : -lambda(i);
            est.exp_minus_identity = std::max(est.exp_minus_identity, q);
        }
    }
    const double lengths[] = {horizon / 8, horizon / 4, horizon / 2, horizon};
    for (const auto& [x, y] : pairs) {
        const double d = (x - y).norm();
        if (d == 0.0) continue;
        const Vector nx = normal(surface, x);
        const Vector ny = normal(surface, y);
        const ShapeOperator sx = shape_operator(surface, x);
        const ShapeOperator sy = shape_operator(surface, y);
        est.normal_lipschitz = std::max(est.normal_lipschitz, (nx - ny).norm() / d);
        est.projector_lipschitz = std::max(
            est.projector_lipschitz,
            operator_norm(projector_from_normal(nx) - projector_from_normal(ny)) / d);
        est.shape_lipschitz =
            std::max(est.shape_lipschitz, operator_norm(sx.matrix - sy.matrix) / d);
        const SymmetricExp ex(sx.matrix), ey(sy.matrix);
        for (double l : lengths) {
            est.exp_lipschitz =
                std::max(est.exp_lipschitz, operator_norm(ex(l) - ey(l)) / (l * d));
        }
    }
    est.K = std::max({est.projector_lipschitz, est.shape_norm, est.shape_lipschitz,
                      est.exp_growth, est.exp_lower, est.exp_minus_identity,
                      est.exp_lipschitz, est.normal_lipschitz});
    return est;
}

struct PipiCheck {
    bool holds = true;
    double lhs = 0.0;
    double rhs_factor = 0.0;  // |w-y||y-z| + |w-x||x-z|
    double ratio = 0.0;       // lhs / rhs_factor, 0 when both vanish
};

/// ||pi_z (pi_y - pi_x) pi_w|| against C (|w-y||y-z| + |w-x||x-z|).
inline PipiCheck pipi_pipi_bound_check(const Hypersurface& surface, const Vector& w,
                                       const Vector& x, const Vector& y, const Vector& z,
                                       double constant) {
    const Matrix pw = tangent_project(surface, w).matrix;
    const Matrix px = tangent_project(surface, x).matrix;
    const Matrix py = tangent_project(surface, y).matrix;
    const Matrix pz = tangent_project(surface, z).matrix;
    PipiCheck out;
    out.lhs = operator_norm(pz * (py - px) * pw);
    out.rhs_factor = (w - y).norm() * (y - z).norm() + (w - x).norm() * (x - z).norm();
    if (out.rhs_factor > 0.0) {
        out.ratio = out.lhs / out.rhs_factor;
    } else {
        out.ratio = out.lhs > 1e-14 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    out.holds = out.lhs <= constant * out.rhs_factor + 1e-14;
    return out;
}

/// Largest ratio of the four-projector estimate over random quadruples of
/// M_R; half of the quadruples are clustered so that short distances are
/// represented.
inline double calibrate_pipi_constant(const Hypersurface& surface, double radius,
                                      std::size_t quadruples, std::uint64_t seed) {
    const auto points = sample_surface(surface, radius, 4 * quadruples, seed);
    const auto near = sample_surface_pairs(surface, points, radius, seed + 3);
    double worst = 0.0;
    for (std::size_t q = 0; q + 3 < points.size(); q += 4) {
        const auto c = pipi_pipi_bound_check(surface, points[q], points[q + 1], points[q + 2],
                                             points[q + 3], 0.0);
        if (std::isfinite(c.ratio)) worst = std::max(worst, c.ratio);
    }
    for (std::size_t q = 0; q + 1 < near.size(); q += 2) {
        const auto& [a, b] = near[q];
        const auto& [c, d] = near[q + 1];
        const auto chk = pipi_pipi_bound_check(surface, a, b, c, d, 0.0);
        if (std::isfinite(chk.ratio)) worst = std::max(worst, chk.ratio);
    }
    return worst;
}

}  // namespace rbmflow
