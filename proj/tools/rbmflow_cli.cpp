// rbmflow: experiment runner.
//
//   rbmflow run <config> [--threads N] [--out DIR] [--seed S]
//   rbmflow validate <config>
//
// RBMFLOW_OUT_DIR and RBMFLOW_THREADS supply defaults for --out and
// --threads. Exit codes: 0 success, 2 a stochastic check failed, 1 error.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rbmflow/experiment.hpp"

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

void print_diagnostics(const std::string& file, const std::vector<rbmflow::Diagnostic>& diags) {
    for (const auto& d : diags) std::cerr << d.str(file) << '\n';
}

int run_command(const std::string& file, std::optional<unsigned> threads_flag, std::optional<std::string> out_flag,
                std::optional<std::uint64_t> seed_flag) {
    using namespace rbmflow;
    ParsedConfig parsed = parse_config_file(file);
    if (seed_flag) {
        std::erase_if(parsed.diagnostics, [](const Diagnostic& d) { return d.field == "experiment.seed"; });
        parsed.config.seed = *seed_flag;
    }
    if (!parsed.ok()) {
        print_diagnostics(file, parsed.diagnostics);
        return 1;
    }
    const ExperimentConfig& cfg = parsed.config;

    unsigned threads = 0;
    if (threads_flag) {
        threads = *threads_flag;
    } else if (const auto t = env("RBMFLOW_THREADS")) {
        const auto v = detail::parse_number<unsigned>(*t);
        if (!v) {
            std::cerr << "RBMFLOW_THREADS: expected a nonnegative integer, got '" << *t << "'\n";
            return 1;
        }
        threads = *v;
    }
    std::string out_dir = "rbmflow-out/" + kind_name(cfg.kind);
    if (out_flag) out_dir = *out_flag;
    else if (const auto o = env("RBMFLOW_OUT_DIR")) out_dir = *o;
    else if (cfg.output) out_dir = *cfg.output;

    const auto start = std::chrono::steady_clock::now();
    const ExperimentReport rep = run_experiment(cfg, threads);
    const auto files = write_report(out_dir, cfg, rep);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::cout << kind_name(cfg.kind) << " (seed " << cfg.seed_value() << ")\n";
    for (const auto& c : rep.checks) {
        std::cout << "  " << (c.passed ? "PASS " : "FAIL ") << c.name << " = " << format_number(c.value) << "  ["
                  << c.requirement << "]\n";
    }
    for (const auto& f : files) std::cout << "  wrote " << f << '\n';
    std::cerr << "elapsed " << seconds << " s on " << resolve_threads(threads) << " thread(s)\n";
    return rep.passed() ? 0 : 2;
}

int validate_command(const std::string& file) {
    const auto parsed = rbmflow::parse_config_file(file);
    print_diagnostics(file, parsed.diagnostics);
    if (parsed.ok()) std::cout << file << ": ok\n";
    return parsed.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rbmflow experiment runner"};
    app.set_version_flag("--version", std::string("rbmflow ") + RBMFLOW_VERSION);
    app.require_subcommand(1);

    std::string run_file, validate_file;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "run an experiment and write its report");
    run->add_option("config", run_file, "experiment config (INI)")->required()->check(CLI::ExistingFile);
    run->add_option("--threads", threads, "worker threads (0 = all cores)");
    run->add_option("--out", out, "output directory");
    run->add_option("--seed", seed, "master seed, overrides the config");
    auto* validate = app.add_subcommand("validate", "check a config without running it");
    validate->add_option("config", validate_file, "experiment config (INI)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        if (*run) return run_command(run_file, threads, out, seed);
        return validate_command(validate_file);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
