#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "rbmflow/errors.hpp"
#include "rbmflow/geometry.hpp"

namespace rbmflow {

enum class ExperimentKind { DeterministicStability, RbmRevuz, ExcursionScaling, EpsilonLadder, Counterexample };

inline const std::vector<std::pair<std::string, ExperimentKind>>& experiment_kinds() {
    static const std::vector<std::pair<std::string, ExperimentKind>> kinds{
        {"deterministic-stability", ExperimentKind::DeterministicStability},
        {"rbm-revuz", ExperimentKind::RbmRevuz},
        {"excursion-scaling", ExperimentKind::ExcursionScaling},
        {"epsilon-ladder", ExperimentKind::EpsilonLadder},
        {"counterexample", ExperimentKind::Counterexample}};
    return kinds;
}

inline std::string kind_name(ExperimentKind k) {
    for (const auto& [name, kind] : experiment_kinds()) {
        if (kind == k) return name;
    }
    return "?";
}

/// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Check thresholds; each can be overridden in the [tolerances] section.
struct Tolerances {
    double revuz_rel = 0.05;
    double scaling_slope = 0.2;
    double ratio_low = 0.3;
    double ratio_high = 0.7;
    double skorokhod_slack = 2.0;
    std::optional<int> ladder_decreasing;  // default: all gap pairs but one
    double rank_fraction = 0.9;
    double rank_floor = 0.01;
    double multiplicativity = 1e-10;
    double quadratic_ratio = 3.0;
    double counterexample_slope = -1.0;
    double counterexample_limit = 0.1;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::RbmRevuz;
    std::optional<std::uint64_t> seed;
    int replicas = 1;
    std::optional<std::string> output;

    std::string surface = "ball(r=1)";
    int dim = 2;

    double step = 1e-4;
    std::optional<double> horizon;
    std::optional<double> local_time;
    std::string start = "center";  // center | uniform | comma-separated coordinates
    std::optional<double> boundary_tol;
    double step_limit_factor = 0.01;
    double max_time = 200.0;
    bool dump_path = false;

    int j_min = 3;
    int j_max = 10;
    std::optional<double> split;
    std::optional<double> rho1;

    int pieces = 10;
    int pairs = 50;
    int rungs = 4;
    double delta = 0.02;

    std::vector<int> js{4, 6, 8, 10, 12, 14, 16};
    double scale = 1.0;
    double orientation = 1.0;

    Tolerances tol;

    std::uint64_t seed_value() const { return seed.value_or(0); }
    double effective_boundary_tol() const;
    double effective_split() const { return split.value_or(local_time.value_or(1.0) / 2.0); }
    /// Effective settings in a fixed order, for report headers.
    std::vector<std::pair<std::string, std::string>> echo() const;
};

struct Diagnostic {
    int line = 0;  // 0 when the problem is not tied to a line
    std::string field;
    std::string message;

    std::string str(const std::string& file) const {
        std::ostringstream out;
        out << file;
        if (line > 0) out << ':' << line;
        out << ": " << (field.empty() ? "" : field + ": ") << message;
        return out.str();
    }
};

struct ParsedConfig {
    ExperimentConfig config;
    std::vector<Diagnostic> diagnostics;
    bool ok() const { return diagnostics.empty(); }
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"experiment", {"kind", "seed", "replicas", "output"}},
        {"domain", {"surface", "dim"}},
        {"simulation",
         {"step", "horizon", "local_time", "start", "boundary_tol", "step_limit_factor", "max_time", "dump_path"}},
        {"ladder", {"j_min", "j_max", "split", "rho1"}},
        {"stability", {"pieces", "pairs", "rungs", "delta"}},
        {"counterexample", {"j", "scale", "orientation"}},
        {"tolerances",
         {"revuz_rel", "scaling_slope", "ratio_low", "ratio_high", "skorokhod_slack", "ladder_decreasing",
          "rank_fraction", "rank_floor", "multiplicativity", "quadratic_ratio", "counterexample_slope",
          "counterexample_limit"}}};
    return schema;
}

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

/// Line number of every "section.key" in an INI text.
inline std::map<std::string, int> key_lines(const std::string& text) {
    std::map<std::string, int> out;
    std::istringstream in(text);
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty() || t[0] == ';' || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            out.emplace(section, number);
            continue;
        }
        const auto eq = t.find('=');
        if (eq != std::string::npos) out.emplace(section + "." + trim(t.substr(0, eq)), number);
    }
    return out;
}

template <class T>
std::optional<T> parse_number(const std::string& text) {
    T v{};
    const std::string t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty()) return std::nullopt;
    return v;
}

}  // namespace detail

inline double ExperimentConfig::effective_boundary_tol() const {
    if (boundary_tol) return *boundary_tol;
    return step < 1.0 ? 2.0 * std::sqrt(step) * std::log(1.0 / step) : 0.0;
}

inline std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
    std::vector<std::pair<std::string, std::string>> e;
    auto add = [&](const std::string& k, const std::string& v) { e.emplace_back(k, v); };
    auto num = [](double v) { return format_number(v); };
    add("experiment.kind", kind_name(kind));
    add("experiment.seed", std::to_string(seed_value()));
    add("experiment.replicas", std::to_string(replicas));
    switch (kind) {
        case ExperimentKind::Counterexample: {
            std::string list;
            for (std::size_t i = 0; i < js.size(); ++i) list += (i ? "," : "") + std::to_string(js[i]);
            add("counterexample.j", list);
            add("counterexample.scale", num(scale));
            add("counterexample.orientation", orientation > 0 ? "up" : "down");
            break;
        }
        case ExperimentKind::DeterministicStability:
            add("domain.surface", surface);
            add("domain.dim", std::to_string(dim));
            add("stability.pieces", std::to_string(pieces));
            add("stability.pairs", std::to_string(pairs));
            add("stability.rungs", std::to_string(rungs));
            add("stability.delta", num(delta));
            break;
        default:
            add("domain.surface", surface);
            add("domain.dim", std::to_string(dim));
            add("simulation.step", num(step));
            if (horizon) add("simulation.horizon", num(*horizon));
            if (local_time) add("simulation.local_time", num(*local_time));
            add("simulation.start", start);
            add("simulation.boundary_tol", num(effective_boundary_tol()));
            add("simulation.step_limit_factor", num(step_limit_factor));
            if (local_time) add("simulation.max_time", num(max_time));
            if (kind != ExperimentKind::RbmRevuz) {
                add("ladder.j_min", std::to_string(j_min));
                add("ladder.j_max", std::to_string(j_max));
            }
            if (kind == ExperimentKind::EpsilonLadder) {
                add("ladder.split", num(effective_split()));
                if (rho1) add("ladder.rho1", num(*rho1));
            }
            break;
    }
    return e;
}

/// Parses and checks an INI experiment description. Problems are collected
/// as diagnostics with line numbers instead of stopping at the first one.
inline ParsedConfig parse_config_text(const std::string& text) {
    namespace pt = boost::property_tree;
    ParsedConfig out;
    auto& cfg = out.config;
    auto& diags = out.diagnostics;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        diags.push_back({static_cast<int>(e.line()), "", e.message()});
        return out;
    }
    const auto lines = detail::key_lines(text);
    auto line_of = [&](const std::string& key) {
        const auto it = lines.find(key);
        return it == lines.end() ? 0 : it->second;
    };
    auto report = [&](const std::string& key, const std::string& message) {
        diags.push_back({line_of(key), key, message});
    };

    const auto& schema = detail::config_schema();
    for (const auto& [section, body] : tree) {
        const auto known = schema.find(section);
        if (known == schema.end()) {
            if (body.empty()) report(section, "key outside any section");
            else report(section, "unknown section");
            continue;
        }
        for (const auto& [key, value] : body) {
            if (!known->second.count(key)) report(section + "." + key, "unknown key");
        }
    }

    auto raw = [&](const std::string& key) -> std::optional<std::string> {
        const auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        return detail::trim(*v);
    };
    auto real = [&](const std::string& key, auto& target) {
        const auto text = raw(key);
        if (!text) return false;
        const auto v = detail::parse_number<double>(*text);
        if (!v || !std::isfinite(*v)) {
            report(key, "expected a number, got '" + *text + "'");
            return false;
        }
        target = *v;
        return true;
    };
    auto integer = [&](const std::string& key, auto& target) {
        const auto text = raw(key);
        if (!text) return false;
        const auto v = detail::parse_number<long long>(*text);
        if (!v) {
            report(key, "expected an integer, got '" + *text + "'");
            return false;
        }
        target = static_cast<std::remove_reference_t<decltype(target)>>(*v);
        if (static_cast<long long>(target) != *v) report(key, "integer out of range");
        return true;
    };

    // experiment
    if (const auto kind = raw("experiment.kind")) {
        bool found = false;
        for (const auto& [name, k] : experiment_kinds()) {
            if (*kind == name) {
                cfg.kind = k;
                found = true;
            }
        }
        if (!found) report("experiment.kind", "unknown experiment kind '" + *kind + "'");
    } else {
        diags.push_back({line_of("experiment"), "experiment.kind", "missing experiment kind"});
    }
    if (const auto text = raw("experiment.seed")) {
        const auto v = detail::parse_number<std::uint64_t>(*text);
        if (v) cfg.seed = *v;
        else report("experiment.seed", "expected a nonnegative integer, got '" + *text + "'");
    } else {
        diags.push_back({line_of("experiment"), "experiment.seed", "missing seed"});
    }
    if (integer("experiment.replicas", cfg.replicas) && cfg.replicas < 1) {
        report("experiment.replicas", "replica count must be at least 1");
    }
    if (const auto text = raw("experiment.output")) cfg.output = *text;

    // domain
    const bool stability = cfg.kind == ExperimentKind::DeterministicStability;
    if (stability) {
        cfg.surface = "ellipsoid(1.5,1,0.75)";
        cfg.dim = 3;
    }
    if (const auto text = raw("domain.surface")) cfg.surface = *text;
    if (integer("domain.dim", cfg.dim) && cfg.dim < 2) report("domain.dim", "dimension must be at least 2");
    if (cfg.kind != ExperimentKind::Counterexample && cfg.dim >= 2) {
        try {
            const Hypersurface s = surface_from_spec(cfg.surface, cfg.dim);
            if (s.dim() != cfg.dim) {
                report("domain.dim", "surface " + cfg.surface + " has dimension " + std::to_string(s.dim()));
            }
            if (!stability && !s.domain()) {
                report("domain.surface", "surface " + cfg.surface + " does not bound a domain");
            }
        } catch (const Error& e) {
            report("domain.surface", e.what());
        }
    }

    // simulation
    if (real("simulation.step", cfg.step) && !(cfg.step > 0)) report("simulation.step", "step must be positive");
    double value = 0.0;
    if (real("simulation.horizon", value)) {
        cfg.horizon = value;
        if (value < 0) report("simulation.horizon", "horizon must be nonnegative");
    }
    if (real("simulation.local_time", value)) {
        cfg.local_time = value;
        if (!(value > 0)) report("simulation.local_time", "local-time horizon must be positive");
    }
    if (const auto text = raw("simulation.start")) {
        cfg.start = *text;
        if (cfg.start != "center" && cfg.start != "uniform") {
            std::istringstream parts(cfg.start);
            std::string item;
            int count = 0;
            while (std::getline(parts, item, ',')) {
                ++count;
                if (!detail::parse_number<double>(item)) {
                    report("simulation.start", "expected center, uniform or coordinates, got '" + cfg.start + "'");
                    break;
                }
            }
            if (count != cfg.dim) report("simulation.start", "start point needs " + std::to_string(cfg.dim) + " coordinates");
        }
    }
    if (real("simulation.boundary_tol", value)) {
        cfg.boundary_tol = value;
        if (value < 0) report("simulation.boundary_tol", "tolerance must be nonnegative");
    }
    if (real("simulation.step_limit_factor", cfg.step_limit_factor) && !(cfg.step_limit_factor > 0)) {
        report("simulation.step_limit_factor", "factor must be positive");
    }
    if (real("simulation.max_time", cfg.max_time) && !(cfg.max_time > 0)) {
        report("simulation.max_time", "max_time must be positive");
    }
    if (const auto text = raw("simulation.dump_path")) {
        if (*text == "true" || *text == "1") cfg.dump_path = true;
        else if (*text == "false" || *text == "0") cfg.dump_path = false;
        else report("simulation.dump_path", "expected true or false");
    }

    // ladder
    integer("ladder.j_min", cfg.j_min);
    integer("ladder.j_max", cfg.j_max);
    if (real("ladder.split", value)) cfg.split = value;
    if (real("ladder.rho1", value)) {
        cfg.rho1 = value;
        if (!(value > 0)) report("ladder.rho1", "split threshold must be positive");
    }

    // stability
    if (integer("stability.pieces", cfg.pieces) && cfg.pieces < 2) report("stability.pieces", "need at least 2 pieces");
    if (integer("stability.pairs", cfg.pairs) && cfg.pairs < 1) report("stability.pairs", "need at least 1 pair");
    if (integer("stability.rungs", cfg.rungs) && cfg.rungs < 2) report("stability.rungs", "need at least 2 rungs");
    if (real("stability.delta", cfg.delta) && !(cfg.delta > 0)) report("stability.delta", "delta must be positive");

    // counterexample
    if (const auto text = raw("counterexample.j")) {
        cfg.js.clear();
        std::istringstream parts(*text);
        std::string item;
        while (std::getline(parts, item, ',')) {
            const auto v = detail::parse_number<int>(item);
            if (!v || *v < 2 || *v % 2 != 0) {
                report("counterexample.j", "entries must be even integers >= 2, got '" + detail::trim(item) + "'");
                break;
            }
            cfg.js.push_back(*v);
        }
        if (cfg.js.empty()) report("counterexample.j", "empty list");
    }
    if (real("counterexample.scale", cfg.scale) && cfg.scale == 0.0) {
        report("counterexample.scale", "scale must be nonzero");
    }
    if (const auto text = raw("counterexample.orientation")) {
        if (*text == "up" || *text == "1" || *text == "+1") cfg.orientation = 1.0;
        else if (*text == "down" || *text == "-1") cfg.orientation = -1.0;
        else report("counterexample.orientation", "expected up or down");
    }

    // tolerances
    auto& t = cfg.tol;
    real("tolerances.revuz_rel", t.revuz_rel);
    real("tolerances.scaling_slope", t.scaling_slope);
    real("tolerances.ratio_low", t.ratio_low);
    real("tolerances.ratio_high", t.ratio_high);
    real("tolerances.skorokhod_slack", t.skorokhod_slack);
    int decreasing = 0;
    if (integer("tolerances.ladder_decreasing", decreasing)) t.ladder_decreasing = decreasing;
    real("tolerances.rank_fraction", t.rank_fraction);
    real("tolerances.rank_floor", t.rank_floor);
    real("tolerances.multiplicativity", t.multiplicativity);
    real("tolerances.quadratic_ratio", t.quadratic_ratio);
    real("tolerances.counterexample_slope", t.counterexample_slope);
    real("tolerances.counterexample_limit", t.counterexample_limit);

    // kind-specific requirements
    switch (cfg.kind) {
        case ExperimentKind::RbmRevuz:
            if (!cfg.horizon) diags.push_back({line_of("simulation"), "simulation.horizon", "rbm-revuz needs a time horizon"});
            if (cfg.local_time) report("simulation.local_time", "rbm-revuz runs to a time horizon, not a local time");
            break;
        case ExperimentKind::ExcursionScaling:
        case ExperimentKind::EpsilonLadder:
            if (!cfg.local_time) {
                diags.push_back({line_of("simulation"), "simulation.local_time", cfg.kind == ExperimentKind::EpsilonLadder
                                                                             ? "epsilon-ladder needs a local-time horizon"
                                                                             : "excursion-scaling needs a local-time horizon"});
            }
            if (cfg.horizon) report("simulation.horizon", "this kind runs to a local-time horizon");
            if (cfg.j_max < cfg.j_min) report("ladder.j_max", "empty j-range");
            if (cfg.j_max - cfg.j_min < 1) report("ladder.j_max", "j-range needs at least two rungs");
            if (cfg.j_min < 0 || cfg.j_max > 40) report("ladder.j_min", "j-range must lie in [0, 40]");
            if (cfg.split && cfg.local_time && !(*cfg.split >= 0 && *cfg.split <= *cfg.local_time)) {
                report("ladder.split", "split must lie in [0, local_time]");
            }
            break;
        default:
            break;
    }
    if (t.ladder_decreasing && *t.ladder_decreasing < 0) report("tolerances.ladder_decreasing", "must be nonnegative");
    return out;
}

inline ParsedConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        ParsedConfig out;
        out.diagnostics.push_back({0, "", "cannot read config file"});
        return out;
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str());
}

}  // namespace rbmflow
