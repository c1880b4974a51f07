#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rbmflow/config.hpp"
#include "rbmflow/flow_ode.hpp"
#include "rbmflow/mult_functional.hpp"
#include "rbmflow/parallel.hpp"
#include "rbmflow/rbm.hpp"

#ifndef RBMFLOW_VERSION
#define RBMFLOW_VERSION "0.1.0"
#endif

namespace rbmflow {

using Json = nlohmann::ordered_json;

struct Check {
    std::string name;
    double value = 0.0;
    std::string requirement;
    bool passed = false;
};

struct Table {
    std::string name;  // file stem
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    template <class... Cells>
    void add(const Cells&... cells) {
        rows.push_back({cell(cells)...});
    }
    static std::string cell(double v) { return format_number(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }
};

struct ExperimentReport {
    Json results = Json::object();
    std::vector<Table> tables;
    std::vector<Check> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }
    const Check* find(const std::string& name) const {
        for (const auto& c : checks) {
            if (c.name == name) return &c;
        }
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Shared helpers

inline double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t mid = xs.size() / 2;
    return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v(i)));
    return a;
}

inline Vector standard_normal(const CounterRng& rng, std::uint64_t id, int dim) {
    std::vector<double> z(dim);
    rng.normals(id, z, RngPurpose::Sampling);
    return Eigen::Map<const Vector>(z.data(), dim);
}

/// Random finite trajectory on [0, horizon]: `pieces` values obtained by
/// projecting Gaussian points onto the surface, knots jittered around a
/// uniform grid.
inline FiniteTrajectory random_trajectory(const SurfacePtr& s, const CounterRng& rng, std::uint64_t id,
                                          int pieces, double horizon = 1.0) {
    std::vector<double> times{0.0};
    for (int k = 1; k < pieces; ++k) {
        const auto u = rng.uniforms(id * 1000 + k, 7, RngPurpose::Sampling);
        times.push_back(horizon * (k + 0.4 * (u[0] - 0.5)) / pieces);
    }
    std::vector<Vector> values;
    for (int k = 0; k < pieces; ++k) values.push_back(closest_point(*s, standard_normal(rng, id * 1000 + k, s->dim())));
    return FiniteTrajectory(s, horizon, std::move(times), std::move(values));
}

inline Vector unit_tangent(const Hypersurface& s, const Vector& x, const Vector& z) {
    return (tangent_project(s, x).matrix * z).normalized();
}

/// Runs fn over replicas; any failure is reported with its replica index.
template <class Fn>
auto replica_map(std::size_t count, unsigned threads, Fn fn) {
    return parallel_map(count, threads, [&](std::size_t i) {
        try {
            return fn(i);
        } catch (const std::exception& e) {
            throw Error("replica " + std::to_string(i) + ": " + e.what());
        }
    });
}

inline Vector start_point(const ExperimentConfig& cfg, const Hypersurface& domain, std::uint32_t replica) {
    if (cfg.start == "uniform") return uniform_point_in_domain(domain, cfg.seed_value(), replica);
    if (cfg.start == "center") return Vector::Zero(domain.dim());
    Vector p(domain.dim());
    std::istringstream parts(cfg.start);
    std::string item;
    for (int i = 0; i < domain.dim() && std::getline(parts, item, ','); ++i) p(i) = std::stod(item);
    return p;
}

inline RbmOptions rbm_options(const ExperimentConfig& cfg, bool record) {
    RbmOptions o;
    o.step = cfg.step;
    o.horizon = cfg.horizon.value_or(0.0);
    o.local_time = cfg.local_time;
    o.max_time = cfg.max_time;
    o.step_limit_factor = cfg.step_limit_factor;
    o.record = record;
    return o;
}

inline void require_target(const RbmPath& p, std::uint32_t replica) {
    if (p.target && !p.target_step) {
        throw LocalTimeNotReached("replica " + std::to_string(replica) + " reached local time " +
                                  std::to_string(p.final_local_time) + " by the time limit");
    }
}

// ---------------------------------------------------------------------------
// deterministic-stability

inline ExperimentReport run_deterministic_stability(const ExperimentConfig& cfg, unsigned threads) {
    const auto s = std::make_shared<const Hypersurface>(surface_from_spec(cfg.surface, cfg.dim));
    const auto seed = cfg.seed_value();
    ExperimentReport rep;

    // One-value-per-piece perturbations of size delta 2^-i.
    struct LadderRow {
        std::vector<double> deltas, gaps;
    };
    const auto ladders = replica_map(cfg.pairs, threads, [&](std::size_t p) {
        const CounterRng rng(seed, static_cast<std::uint32_t>(p));
        const auto g = random_trajectory(s, rng, 0, cfg.pieces);
        const Vector v0 = unit_tangent(*s, g.values().front(), standard_normal(rng, 900, s->dim()));
        LadderRow row;
        for (int i = 0; i < cfg.rungs; ++i) {
            const double delta = std::ldexp(cfg.delta, -i);
            auto values = g.values();
            for (std::size_t k = 1; k < values.size(); ++k) {
                values[k] = closest_point(*s, values[k] + delta * standard_normal(rng, 500 + k, s->dim()));
            }
            const FiniteTrajectory h(s, g.horizon(), g.times(), values);
            row.deltas.push_back(delta);
            row.gaps.push_back(stability_gap(g, h, v0, 1.0).sup_difference);
        }
        return row;
    });
    Table ladder{"delta_ladder", {"pair", "rung", "delta", "gap", "ratio"}, {}};
    double ratio_min = std::numeric_limits<double>::infinity(), ratio_max = 0.0;
    for (std::size_t p = 0; p < ladders.size(); ++p) {
        for (std::size_t i = 0; i < ladders[p].gaps.size(); ++i) {
            double ratio = std::numeric_limits<double>::quiet_NaN();
            if (i > 0) {
                ratio = ladders[p].gaps[i] / ladders[p].gaps[i - 1];
                ratio_min = std::min(ratio_min, ratio);
                ratio_max = std::max(ratio_max, ratio);
            }
            ladder.add(p, static_cast<int>(i), ladders[p].deltas[i], ladders[p].gaps[i], ratio);
        }
    }

    // Skorokhod ratio: calibrate on one sample of pairs, verify on another.
    auto skorokhod_pair = [&](std::uint32_t stream, std::size_t p) {
        const CounterRng rng(seed, stream + static_cast<std::uint32_t>(p));
        const auto g = random_trajectory(s, rng, 1, cfg.pieces);
        const auto u = rng.uniforms(77, 0, RngPurpose::Sampling);
        const double size = 0.005 + 0.045 * u[0];
        const double shift = 0.02 * u[1] / cfg.pieces;
        auto times = g.times();
        auto values = g.values();
        for (std::size_t k = 1; k < times.size(); ++k) {
            const auto w = rng.uniforms(78 + k, 0, RngPurpose::Sampling);
            times[k] += shift * (2.0 * w[0] - 1.0);
            values[k] = closest_point(*s, values[k] + size * standard_normal(rng, 700 + k, s->dim()));
        }
        return stability_skorokhod(g, FiniteTrajectory(s, g.horizon(), times, values));
    };
    const auto calibration = replica_map(cfg.pairs, threads, [&](std::size_t p) { return skorokhod_pair(100000, p); });
    const auto verification = replica_map(cfg.pairs, threads, [&](std::size_t p) { return skorokhod_pair(200000, p); });
    Table sk{"skorokhod_pairs", {"set", "pair", "path_distance", "operator_distance", "ratio"}, {}};
    double constant = 0.0, worst = 0.0;
    for (std::size_t p = 0; p < calibration.size(); ++p) {
        constant = std::max(constant, calibration[p].ratio());
        sk.add("calibration", p, calibration[p].path_distance, calibration[p].operator_distance, calibration[p].ratio());
    }
    for (std::size_t p = 0; p < verification.size(); ++p) {
        worst = std::max(worst, verification[p].ratio());
        sk.add("verification", p, verification[p].path_distance, verification[p].operator_distance,
               verification[p].ratio());
    }

    const auto& t = cfg.tol;
    rep.checks.push_back({"halving_ratio_min", ratio_min, ">= " + format_number(t.ratio_low), ratio_min >= t.ratio_low});
    rep.checks.push_back({"halving_ratio_max", ratio_max, "<= " + format_number(t.ratio_high), ratio_max <= t.ratio_high});
    const double relative = constant > 0 ? worst / constant : std::numeric_limits<double>::infinity();
    rep.checks.push_back({"skorokhod_ratio_over_calibrated", relative, "<= " + format_number(t.skorokhod_slack),
                          relative <= t.skorokhod_slack});
    rep.results["halving_ratio_range"] = {number_or_null(ratio_min), number_or_null(ratio_max)};
    rep.results["calibrated_constant"] = constant;
    rep.results["verification_max_ratio"] = worst;
    rep.tables = {std::move(ladder), std::move(sk)};
    return rep;
}

// ---------------------------------------------------------------------------
// rbm-revuz

inline ExperimentReport run_rbm_revuz(const ExperimentConfig& cfg, unsigned threads) {
    const Hypersurface domain = surface_from_spec(cfg.surface, cfg.dim);
    const RbmOptions fast = rbm_options(cfg, false);
    struct Row {
        double ell;
        std::size_t projections, steps;
    };
    const auto rows = replica_map(cfg.replicas, threads, [&](std::size_t i) {
        const auto id = static_cast<std::uint32_t>(i);
        const RbmPath p = simulate_path(domain, start_point(cfg, domain, id), fast, cfg.seed_value(), id);
        return Row{p.final_local_time, p.projection_steps, p.steps};
    });
    ExperimentReport rep;
    Table table{"replicas", {"replica", "local_time", "projection_steps", "steps"}, {}};
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sum += rows[i].ell;
        sum2 += rows[i].ell * rows[i].ell;
        table.add(i, rows[i].ell, rows[i].projections, rows[i].steps);
    }
    const double n = static_cast<double>(rows.size());
    const double mean = sum / n;
    const double se = n > 1 ? std::sqrt(std::max(0.0, (sum2 - n * mean * mean) / (n - 1)) / n) : 0.0;
    rep.results["mean_local_time"] = mean;
    rep.results["standard_error"] = se;

    const auto& info = domain.domain();
    std::optional<double> expected;
    if (info && info->volume && info->boundary_measure) {
        expected = cfg.horizon.value_or(0.0) * *info->boundary_measure / (2.0 * *info->volume);
    }
    rep.results["expected"] = expected ? Json(*expected) : Json(nullptr);
    if (expected && *expected > 0 && cfg.start == "uniform") {
        const double rel = std::abs(mean / *expected - 1.0);
        rep.results["relative_error"] = rel;
        rep.checks.push_back({"revuz_relative_error", rel, "<= " + format_number(cfg.tol.revuz_rel),
                              rel <= cfg.tol.revuz_rel});
    } else {
        rep.results["relative_error"] = nullptr;
    }

    // Replica 0 again with the full record, for its excursion skeleton.
    const RbmPath first = simulate_path(domain, start_point(cfg, domain, 0), rbm_options(cfg, true), cfg.seed_value(), 0);
    const ExcursionSkeleton sk = extract_excursions(first, domain, cfg.effective_boundary_tol());
    rep.results["replica0_skeleton"] = {
        {"excursions", sk.records.size()},
        {"first_contact", sk.touched() ? Json(sk.first_contact_time()) : Json(nullptr)},
        {"local_time", first.final_local_time}};
    Table skeleton{"skeleton", {"s", "u"}, {}};
    for (int i = 1; i <= domain.dim(); ++i) skeleton.header.push_back("e0_" + std::to_string(i));
    for (int i = 1; i <= domain.dim(); ++i) skeleton.header.push_back("eend_" + std::to_string(i));
    skeleton.header.push_back("jump");
    skeleton.header.push_back("ell");
    for (const auto& r : sk.records) {
        std::vector<std::string> row{format_number(r.start), format_number(r.end)};
        for (int i = 0; i < domain.dim(); ++i) row.push_back(format_number(r.start_point(i)));
        for (int i = 0; i < domain.dim(); ++i) row.push_back(format_number(r.end_point(i)));
        row.push_back(format_number(r.jump));
        row.push_back(format_number(r.local_time));
        skeleton.rows.push_back(std::move(row));
    }
    rep.tables = {std::move(table), std::move(skeleton)};
    if (cfg.dump_path) {
        Table path{"path", {"step", "t"}, {}};
        for (int i = 1; i <= domain.dim(); ++i) path.header.push_back("x_" + std::to_string(i));
        path.header.push_back("L");
        path.header.push_back("contact");
        for (std::size_t k = 0; k <= first.steps; ++k) {
            std::vector<std::string> row{std::to_string(k), format_number(first.time(k))};
            for (int i = 0; i < domain.dim(); ++i) row.push_back(format_number(first.state(k)(i)));
            row.push_back(format_number(first.local_time[k]));
            row.push_back(std::to_string(first.projected[k]));
            path.rows.push_back(std::move(row));
        }
        rep.tables.push_back(std::move(path));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// excursion-scaling

inline ExperimentReport run_excursion_scaling(const ExperimentConfig& cfg, unsigned threads) {
    const Hypersurface domain = surface_from_spec(cfg.surface, cfg.dim);
    const double r = *cfg.local_time;
    const int rungs = cfg.j_max - cfg.j_min + 1;
    const auto counts = replica_map(cfg.replicas, threads, [&](std::size_t i) {
        const auto id = static_cast<std::uint32_t>(i);
        const RbmPath p = simulate_path(domain, start_point(cfg, domain, id), rbm_options(cfg, true), cfg.seed_value(), id);
        require_target(p, id);
        const ExcursionSkeleton sk = extract_excursions(p, domain, cfg.effective_boundary_tol());
        std::vector<std::size_t> c;
        for (int j = cfg.j_min; j <= cfg.j_max; ++j) c.push_back(count_large_excursions(sk, std::ldexp(1.0, -j), r));
        return c;
    });
    ExperimentReport rep;
    Table per{"counts", {"replica"}, {}};
    for (int j = cfg.j_min; j <= cfg.j_max; ++j) per.header.push_back("n_" + std::to_string(j));
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::vector<std::string> row{std::to_string(i)};
        for (auto c : counts[i]) row.push_back(std::to_string(c));
        per.rows.push_back(std::move(row));
    }
    Table summary{"summary", {"j", "eps", "mean", "standard_error"}, {}};
    std::vector<double> xs, ys;
    Json rungs_json = Json::array();
    const double n = static_cast<double>(counts.size());
    for (int k = 0; k < rungs; ++k) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& c : counts) {
            sum += static_cast<double>(c[k]);
            sum2 += static_cast<double>(c[k]) * static_cast<double>(c[k]);
        }
        const double mean = sum / n;
        const double se = n > 1 ? std::sqrt(std::max(0.0, (sum2 - n * mean * mean) / (n - 1)) / n) : 0.0;
        const int j = cfg.j_min + k;
        summary.add(j, std::ldexp(1.0, -j), mean, se);
        rungs_json.push_back({{"j", j}, {"eps", std::ldexp(1.0, -j)}, {"mean_count", mean}, {"standard_error", se}});
        if (mean > 0) {
            xs.push_back(j * std::log(2.0));
            ys.push_back(std::log(mean));
        }
    }
    const double slope = fit_slope(xs, ys);
    rep.results["rungs"] = std::move(rungs_json);
    rep.results["slope"] = number_or_null(slope);
    rep.checks.push_back({"count_slope", slope, "within 1 +- " + format_number(cfg.tol.scaling_slope),
                          std::abs(slope - 1.0) <= cfg.tol.scaling_slope});
    rep.tables = {std::move(per), std::move(summary)};
    return rep;
}

// ---------------------------------------------------------------------------
// epsilon-ladder

struct SeedLadder {
    EpsilonLadderReport ladder;
    RankDiagnostics rank;
    double multiplicativity = 0.0;  // worst split residual over the rungs
};

inline SeedLadder ladder_for_replica(const ExperimentConfig& cfg, const Hypersurface& domain, std::uint32_t id) {
    const RbmPath p = simulate_path(domain, start_point(cfg, domain, id), rbm_options(cfg, true), cfg.seed_value(), id);
    require_target(p, id);
    const ExcursionSkeleton sk = extract_excursions(p, domain, cfg.effective_boundary_tol());
    const double r = *cfg.local_time;
    SeedLadder out;
    out.ladder = epsilon_ladder(sk, domain, r, cfg.j_min, cfg.j_max, cfg.rho1);
    out.rank = rank_diagnostics(out.ladder.finest().a, domain, out.ladder.x0);
    for (const auto& rung : out.ladder.rungs) {
        out.multiplicativity = std::max(
            out.multiplicativity, split_multiplicativity(sk, domain, r, cfg.effective_split(), rung.eps).residual);
    }
    return out;
}

inline ExperimentReport run_epsilon_ladder(const ExperimentConfig& cfg, unsigned threads) {
    const Hypersurface domain = surface_from_spec(cfg.surface, cfg.dim);
    const int n = domain.dim();
    const auto seeds = replica_map(cfg.replicas, threads, [&](std::size_t i) {
        return ladder_for_replica(cfg, domain, static_cast<std::uint32_t>(i));
    });
    const std::size_t rungs = seeds.front().ladder.rungs.size();
    ExperimentReport rep;

    Table per{"ladder", {"replica", "j", "eps", "m_j", "gap"}, {}};
    for (int i = 1; i <= n; ++i) per.header.push_back("sv_" + std::to_string(i));
    per.header.push_back("quadratic_sum");
    Json seeds_json = Json::array();
    std::size_t ranked = 0, slope_flags = 0;
    double kernel_worst = 0.0, angle_worst = 0.0, mult_worst = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto& sl = seeds[s];
        Json rj = Json::array();
        for (const auto& rung : sl.ladder.rungs) {
            std::vector<std::string> row{std::to_string(s), std::to_string(rung.j), format_number(rung.eps),
                                         std::to_string(rung.count), format_number(rung.gap)};
            for (int i = 0; i < n; ++i) row.push_back(format_number(rung.singular_values(i)));
            row.push_back(format_number(rung.quadratic_sum));
            per.rows.push_back(std::move(row));
            rj.push_back({{"j", rung.j},
                          {"eps", rung.eps},
                          {"m_j", rung.count},
                          {"gap", number_or_null(rung.gap)},
                          {"singular_values", vector_json(rung.singular_values)},
                          {"quadratic_sum", rung.quadratic_sum}});
            const double top = rung.singular_values(0);
            kernel_worst = std::max(kernel_worst, top > 0 ? rung.singular_values(n - 1) / top : 0.0);
        }
        const double second_smallest = sl.rank.singular_values(n - 2);
        if (second_smallest > cfg.tol.rank_floor) ++ranked;
        if (!sl.ladder.slope_negative) ++slope_flags;
        angle_worst = std::max(angle_worst, sl.rank.kernel_angle);
        mult_worst = std::max(mult_worst, sl.multiplicativity);
        seeds_json.push_back({{"replica", s},
                              {"x0", vector_json(sl.ladder.x0)},
                              {"slope", number_or_null(sl.ladder.slope)},
                              {"slope_negative", sl.ladder.slope_negative},
                              {"rank", sl.rank.rank},
                              {"kernel_angle", sl.rank.kernel_angle},
                              {"multiplicativity_residual", sl.multiplicativity},
                              {"rungs", std::move(rj)}});
    }

    // Medians across seeds.
    Table summary{"ladder_summary", {"j", "eps", "median_m_j", "median_gap", "median_quadratic_sum"}, {}};
    Json rungs_json = Json::array();
    std::vector<double> med_gap(rungs), med_q(rungs);
    for (std::size_t k = 0; k < rungs; ++k) {
        std::vector<double> m, g, q;
        for (const auto& sl : seeds) {
            m.push_back(static_cast<double>(sl.ladder.rungs[k].count));
            g.push_back(sl.ladder.rungs[k].gap);
            q.push_back(sl.ladder.rungs[k].quadratic_sum);
        }
        const int j = seeds.front().ladder.rungs[k].j;
        med_gap[k] = k + 1 < rungs ? median(g) : std::numeric_limits<double>::quiet_NaN();
        med_q[k] = median(q);
        summary.add(j, std::ldexp(1.0, -j), median(m), med_gap[k], med_q[k]);
        rungs_json.push_back({{"j", j},
                              {"eps", std::ldexp(1.0, -j)},
                              {"m_j", median(m)},
                              {"gap", number_or_null(med_gap[k])},
                              {"quadratic_sum", med_q[k]}});
    }
    std::size_t decreasing = 0;
    const std::size_t pairs = rungs > 2 ? rungs - 2 : 0;
    for (std::size_t k = 0; k + 2 < rungs; ++k) {
        if (med_gap[k + 1] < med_gap[k]) ++decreasing;
    }
    std::vector<double> xs, ys;
    for (std::size_t k = 1; k + 1 < rungs; ++k) {
        if (med_gap[k] > 0) {
            xs.push_back(seeds.front().ladder.rungs[k].j);
            ys.push_back(std::log(med_gap[k]));
        }
    }
    const double slope = fit_slope(xs, ys);
    // Quadratic sums relative to the j = 4 rung (or the first rung above it).
    std::size_t ref = 0;
    while (ref + 1 < rungs && seeds.front().ladder.rungs[ref].j < 4) ++ref;
    double q_ratio = 0.0;
    for (std::size_t k = ref; k < rungs; ++k) q_ratio = std::max(q_ratio, med_q[ref] > 0 ? med_q[k] / med_q[ref] : 0.0);
    const double rank_frac = static_cast<double>(ranked) / static_cast<double>(seeds.size());

    const auto& t = cfg.tol;
    const int needed = t.ladder_decreasing.value_or(pairs > 0 ? static_cast<int>(pairs) - 1 : 0);
    rep.checks.push_back({"gaps_decreasing", static_cast<double>(decreasing),
                          ">= " + std::to_string(needed) + " of " + std::to_string(pairs),
                          static_cast<int>(decreasing) >= needed});
    rep.checks.push_back({"slope_negative", slope, "< 0", slope < 0});
    rep.checks.push_back({"kernel_singular_value", kernel_worst, "<= 1e-12 relative", kernel_worst <= 1e-12});
    rep.checks.push_back({"rank_fraction", rank_frac,
                          ">= " + format_number(t.rank_fraction) + " with sigma_{n-1} > " + format_number(t.rank_floor),
                          rank_frac >= t.rank_fraction});
    rep.checks.push_back({"multiplicativity", mult_worst, "<= " + format_number(t.multiplicativity),
                          mult_worst <= t.multiplicativity});
    rep.checks.push_back({"quadratic_sum_ratio", q_ratio, "<= " + format_number(t.quadratic_ratio),
                          q_ratio <= t.quadratic_ratio});

    rep.results["seeds"] = std::move(seeds_json);
    rep.results["rungs"] = std::move(rungs_json);
    rep.results["slope"] = number_or_null(slope);
    rep.results["seeds_with_nonnegative_slope"] = slope_flags;
    rep.results["rank_summary"] = {{"fraction_rank_n_minus_1", rank_frac},
                                   {"max_kernel_singular_value", kernel_worst},
                                   {"max_kernel_angle", angle_worst}};
    rep.results["multiplicativity_residual"] = mult_worst;
    rep.tables = {std::move(per), std::move(summary)};
    return rep;
}

// ---------------------------------------------------------------------------
// counterexample

inline ExperimentReport run_counterexample(const ExperimentConfig& cfg, unsigned) {
    const CounterexampleTable table = counterexample_parabola(cfg.js, cfg.scale, cfg.orientation);
    ExperimentReport rep;
    Table out{"counterexample", {"j", "magnitude", "log_magnitude"}, {}};
    Json rows = Json::array();
    for (const auto& r : table.rows) {
        out.add(r.j, r.magnitude, std::log(r.magnitude));
        rows.push_back({{"j", r.j}, {"magnitude", r.magnitude}});
    }
    rep.results["rows"] = std::move(rows);
    rep.results["limit"] = table.limit;
    rep.results["slope"] = number_or_null(table.slope);
    rep.results["nonincreasing"] = table.nonincreasing;
    const auto& t = cfg.tol;
    rep.checks.push_back({"log_slope", table.slope, "<= " + format_number(t.counterexample_slope),
                          table.slope <= t.counterexample_slope});
    rep.checks.push_back({"limit_magnitude", table.limit, ">= " + format_number(t.counterexample_limit),
                          table.limit >= t.counterexample_limit});
    rep.checks.push_back({"nonincreasing", table.nonincreasing ? 1.0 : 0.0, "== 1", table.nonincreasing});
    rep.tables = {std::move(out)};
    return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg, unsigned threads) {
    switch (cfg.kind) {
        case ExperimentKind::DeterministicStability: return run_deterministic_stability(cfg, threads);
        case ExperimentKind::RbmRevuz: return run_rbm_revuz(cfg, threads);
        case ExperimentKind::ExcursionScaling: return run_excursion_scaling(cfg, threads);
        case ExperimentKind::EpsilonLadder: return run_epsilon_ladder(cfg, threads);
        case ExperimentKind::Counterexample: return run_counterexample(cfg, threads);
    }
    throw Error("unknown experiment kind");
}

// ---------------------------------------------------------------------------
// Output

inline Json report_json(const ExperimentConfig& cfg, const ExperimentReport& rep) {
    Json doc;
    doc["rbmflow_version"] = RBMFLOW_VERSION;
    doc["experiment"] = kind_name(cfg.kind);
    Json echo = Json::object();
    for (const auto& [k, v] : cfg.echo()) echo[k] = v;
    doc["config_echo"] = std::move(echo);
    Json checks = Json::array();
    for (const auto& c : rep.checks) {
        checks.push_back({{"name", c.name}, {"value", number_or_null(c.value)}, {"requirement", c.requirement},
                          {"passed", c.passed}});
    }
    doc["checks"] = std::move(checks);
    doc["passed"] = rep.passed();
    doc["results"] = rep.results;
    return doc;
}

/// CSV with a "#" header block: library version and the config echo.
inline void write_table(std::ostream& out, const ExperimentConfig& cfg, const Table& table) {
    out << "# rbmflow " << RBMFLOW_VERSION << '\n';
    for (const auto& [k, v] : cfg.echo()) out << "# " << k << " = " << v << '\n';
    for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

/// Writes report.json and one CSV per table into `dir`; returns the paths.
inline std::vector<std::string> write_report(const std::string& dir, const ExperimentConfig& cfg,
                                             const ExperimentReport& rep) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> written;
    const fs::path json_path = fs::path(dir) / "report.json";
    {
        std::ofstream out(json_path);
        if (!out) throw Error("cannot write " + json_path.string());
        out << report_json(cfg, rep).dump(2) << '\n';
    }
    written.push_back(json_path.string());
    for (const auto& table : rep.tables) {
        const fs::path p = fs::path(dir) / (table.name + ".csv");
        std::ofstream out(p);
        if (!out) throw Error("cannot write " + p.string());
        write_table(out, cfg, table);
        written.push_back(p.string());
    }
    return written;
}

}  // namespace rbmflow
