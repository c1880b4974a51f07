#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbmflow/experiment.hpp"

using namespace rbmflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rbmflow_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + RBMFLOW_CLI_PATH + std::string(" ") + args +
                            " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool has_field(const ParsedConfig& p, const std::string& field) {
    for (const auto& d : p.diagnostics) {
        if (d.field == field) return true;
    }
    return false;
}

const std::string kLadder = R"([experiment]
kind = epsilon-ladder
seed = 5
replicas = 6

[simulation]
step = 1e-4
local_time = 0.5

[ladder]
j_min = 3
j_max = 7
)";

}  // namespace

TEST(Config, ValidFileHasNoDiagnostics) {
    const auto p = parse_config_file(std::string(RBMFLOW_CONFIG_DIR) + "/epsilon_ladder.ini");
    EXPECT_TRUE(p.ok());
    EXPECT_EQ(p.config.kind, ExperimentKind::EpsilonLadder);
    EXPECT_EQ(p.config.replicas, 50);
    EXPECT_EQ(p.config.j_min, 3);
    EXPECT_EQ(p.config.j_max, 10);
    EXPECT_DOUBLE_EQ(*p.config.local_time, 1.0);
    for (const char* name : {"stability", "revuz", "excursion_scaling", "counterexample", "smoke_rbm"}) {
        EXPECT_TRUE(parse_config_file(std::string(RBMFLOW_CONFIG_DIR) + "/" + name + ".ini").ok()) << name;
    }
}

TEST(Config, MissingSeedAndNegativeStep) {
    const auto p = parse_config_text("[experiment]\nkind = rbm-revuz\n\n[simulation]\nstep = -1e-3\nhorizon = 1\n");
    ASSERT_EQ(p.diagnostics.size(), 2u);
    EXPECT_TRUE(has_field(p, "experiment.seed"));
    EXPECT_TRUE(has_field(p, "simulation.step"));
    for (const auto& d : p.diagnostics) {
        if (d.field == "simulation.step") EXPECT_EQ(d.line, 5);
        if (d.field == "experiment.seed") EXPECT_EQ(d.line, 1);
    }
}

TEST(Config, FieldAndRangeDiagnostics) {
    const auto p = parse_config_text(
        "[experiment]\nkind = epsilon-ladder\nseed = x\nreplicas = 0\ncolour = red\n"
        "[simulation]\nlocal_time = 1\n[ladder]\nj_min = 9\nj_max = 4\n[nonsense]\na = 1\n");
    EXPECT_TRUE(has_field(p, "experiment.seed"));
    EXPECT_TRUE(has_field(p, "experiment.replicas"));
    EXPECT_TRUE(has_field(p, "experiment.colour"));
    EXPECT_TRUE(has_field(p, "ladder.j_max"));
    EXPECT_TRUE(has_field(p, "nonsense"));
    for (const auto& d : p.diagnostics) {
        if (d.field == "experiment.colour") EXPECT_EQ(d.line, 5);
        if (d.field == "experiment.replicas") EXPECT_EQ(d.line, 4);
    }

    EXPECT_TRUE(has_field(parse_config_text("[experiment]\nkind = rbm-revuz\nseed = 1\n"), "simulation.horizon"));
    EXPECT_TRUE(has_field(parse_config_text("[experiment]\nkind = walk\nseed = 1\n"), "experiment.kind"));
    EXPECT_TRUE(has_field(parse_config_text("[experiment]\nkind = rbm-revuz\nseed = 1\n[domain]\nsurface = torus\n"
                                            "[simulation]\nhorizon = 1\n"),
                          "domain.surface"));
    EXPECT_TRUE(has_field(parse_config_text("[experiment]\nkind = counterexample\nseed = 1\n"
                                            "[counterexample]\nj = 4,5\n"),
                          "counterexample.j"));
    EXPECT_TRUE(has_field(parse_config_text("[experiment]\nkind = rbm-revuz\nseed = 1\n[domain]\nsurface = parabola\n"
                                            "[simulation]\nhorizon = 1\n"),
                          "domain.surface"));
}

TEST(Config, SyntaxErrorReportsLine) {
    const auto p = parse_config_text("[experiment]\nkind = counterexample\nseed = 1\n[broken\n");
    ASSERT_EQ(p.diagnostics.size(), 1u);
    EXPECT_EQ(p.diagnostics[0].line, 4);
    EXPECT_NE(p.diagnostics[0].str("a.ini").find("a.ini:4: "), std::string::npos);
}

TEST(Config, EchoCarriesEffectiveSettings) {
    const auto p = parse_config_text(kLadder);
    ASSERT_TRUE(p.ok());
    const auto echo = p.config.echo();
    std::map<std::string, std::string> m(echo.begin(), echo.end());
    EXPECT_EQ(m.at("experiment.kind"), "epsilon-ladder");
    EXPECT_EQ(m.at("simulation.boundary_tol"), format_number(default_boundary_tol(1e-4)));
    EXPECT_EQ(m.at("ladder.split"), "0.25");
    EXPECT_EQ(m.count("simulation.horizon"), 0u);
}

TEST(Experiment, CounterexampleMatchesModule) {
    const auto p = parse_config_file(std::string(RBMFLOW_CONFIG_DIR) + "/counterexample.ini");
    ASSERT_TRUE(p.ok());
    const auto rep = run_experiment(p.config, 1);
    const auto direct = counterexample_parabola({4, 6, 8, 10, 12, 14, 16}, 1.0, 1.0);
    ASSERT_EQ(rep.tables.size(), 1u);
    ASSERT_EQ(rep.tables[0].rows.size(), direct.rows.size());
    for (std::size_t i = 0; i < direct.rows.size(); ++i) {
        EXPECT_EQ(rep.tables[0].rows[i][1], format_number(direct.rows[i].magnitude));
    }
    EXPECT_EQ(rep.results["limit"].get<double>(), direct.limit);
    EXPECT_TRUE(rep.passed());
}

TEST(Experiment, LadderReportShape) {
    const auto p = parse_config_text(kLadder);
    ASSERT_TRUE(p.ok());
    const auto rep = run_experiment(p.config, 2);
    ASSERT_EQ(rep.results["seeds"].size(), 6u);
    ASSERT_EQ(rep.results["rungs"].size(), 5u);
    EXPECT_EQ(rep.results["rungs"][0]["j"].get<int>(), 3);
    EXPECT_TRUE(rep.results["rungs"][4]["gap"].is_null());
    EXPECT_EQ(rep.results["seeds"][0]["rungs"][0]["singular_values"].size(), 2u);
    ASSERT_NE(rep.find("multiplicativity"), nullptr);
    EXPECT_TRUE(rep.find("multiplicativity")->passed);
    EXPECT_TRUE(rep.find("kernel_singular_value")->passed);
}

TEST(Cli, ZeroHorizonRunWritesEmptySkeleton) {
    const auto dir = scratch("zero");
    EXPECT_EQ(run_cli("run " + std::string(RBMFLOW_CONFIG_DIR) + "/smoke_rbm.ini --out " + dir.string()), 0);
    const std::string skeleton = slurp(dir / "skeleton.csv");
    EXPECT_NE(skeleton.find("# rbmflow " RBMFLOW_VERSION), std::string::npos);
    EXPECT_EQ(skeleton.substr(skeleton.rfind("s,u")), "s,u,e0_1,e0_2,eend_1,eend_2,jump,ell\n");
    const auto report = Json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(report["results"]["replica0_skeleton"]["excursions"].get<int>(), 0);
    EXPECT_EQ(report["config_echo"]["experiment.seed"], "1");
}

TEST(Cli, RerunsAreByteIdenticalAcrossThreadCounts) {
    const auto dir = scratch("det");
    const auto cfg = write_file(dir, "ladder.ini", kLadder);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --threads 1 --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --threads 3 --out " + (dir / "b").string()), 0);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + (dir / "c").string(), "RBMFLOW_THREADS=2"), 0);
    for (const char* f : {"report.json", "ladder.csv", "ladder_summary.csv"}) {
        const std::string a = slurp(dir / "a" / f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
        EXPECT_EQ(a, slurp(dir / "c" / f)) << f;
    }
}

TEST(Cli, SeedOverrideAndOutputEnvironment) {
    const auto dir = scratch("env");
    const auto cfg = write_file(dir, "ce.ini", "[experiment]\nkind = counterexample\n[counterexample]\nj = 4,6\n");
    EXPECT_EQ(run_cli("validate " + cfg.string()), 1);
    EXPECT_EQ(run_cli("run " + cfg.string() + " --out " + (dir / "x").string()), 1);
    EXPECT_EQ(run_cli("run " + cfg.string() + " --seed 3", "RBMFLOW_OUT_DIR=" + (dir / "env_out").string()), 0);
    const auto report = Json::parse(slurp(dir / "env_out" / "report.json"));
    EXPECT_EQ(report["config_echo"]["experiment.seed"], "3");
    // --out beats the environment.
    EXPECT_EQ(run_cli("run " + cfg.string() + " --seed 3 --out " + (dir / "flag").string(),
                      "RBMFLOW_OUT_DIR=" + (dir / "ignored").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "flag" / "report.json"));
    EXPECT_FALSE(fs::exists(dir / "ignored"));
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("codes");
    const auto failing = write_file(dir, "fail.ini",
                                    "[experiment]\nkind = counterexample\nseed = 1\n[counterexample]\nj = 4,6\n"
                                    "[tolerances]\ncounterexample_slope = -1000\n");
    EXPECT_EQ(run_cli("run " + failing.string() + " --out " + (dir / "f").string()), 2);
    const auto report = Json::parse(slurp(dir / "f" / "report.json"));
    EXPECT_FALSE(report["passed"].get<bool>());

    const auto bad = write_file(dir, "bad.ini", "[experiment]\nkind = rbm-revuz\nseed = 1\n[simulation]\nstep = -1\n");
    EXPECT_EQ(run_cli("validate " + bad.string()), 1);
    EXPECT_EQ(run_cli("run " + bad.string() + " --out " + (dir / "b").string()), 1);
    EXPECT_EQ(run_cli("validate " + std::string(RBMFLOW_CONFIG_DIR) + "/revuz.ini"), 0);
    EXPECT_EQ(run_cli("run " + (dir / "missing.ini").string()), 1);
    EXPECT_EQ(run_cli("frobnicate"), 1);

    // Step above the curvature limit is a hard error.
    const auto big = write_file(dir, "big.ini",
                                "[experiment]\nkind = rbm-revuz\nseed = 1\n[simulation]\nstep = 0.5\nhorizon = 1\n");
    EXPECT_EQ(run_cli("run " + big.string() + " --out " + (dir / "g").string()), 1);
}
