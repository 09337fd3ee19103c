#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nonadiab/run.hpp"

using namespace nonadiab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("nonadiab_run_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

RunConfig short_config(const std::string& kind, double k0, Method method, std::size_t n_traj = 40) {
    auto cfg = parse_config("[model]\nkind = " + kind + "\n[initial]\nk0 = " + format_number(k0) + "\n");
    cfg.method = method;
    cfg.n_traj = n_traj;
    return cfg;
}

// exit status of a CLI invocation
int cli(const std::string& args) {
    const std::string cmd = std::string(NONADIAB_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

}  // namespace

TEST(RunExact, SeriesMonotoneAndNormConserved) {
    const auto cfg = short_config("a", 25.0, Method::Exact);
    const auto r = run_exact(cfg);
    const auto t = r.series.numbers("t");
    const auto norm = r.series.numbers("norm");
    const auto p1 = r.series.numbers("pop1");
    const auto p2 = r.series.numbers("pop2");
    ASSERT_GT(t.size(), 100u);
    EXPECT_EQ(t.front(), 0.0);
    EXPECT_NEAR(t.back(), cfg.resolved_t_final(), 1e-9);
    for (std::size_t i = 1; i < t.size(); ++i) EXPECT_GT(t[i], t[i - 1]);
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_NEAR(norm[i], 1.0, 1e-10);
        EXPECT_NEAR(p1[i] + p2[i], norm[i], 1e-10);
    }
    EXPECT_LT(r.invariants.max_energy_drift, 1e-8);
    const auto& c = r.channels;
    EXPECT_NEAR(c.t1 + c.t2 + c.r1 + c.r2, 1.0, 1e-8);
}

TEST(RunExact, SnapshotsWritten) {
    auto cfg = short_config("a", 25.0, Method::Exact);
    cfg.t_final = 200.0;
    cfg.snapshot_times = {0.0, 100.0, 5000.0};
    const auto r = run_exact(cfg);
    ASSERT_EQ(r.files.size(), 2u);
    EXPECT_EQ(r.files[0].first, "snapshot_t0.csv");
    EXPECT_EQ(r.files[1].first, "snapshot_t100.csv");
    const auto& snap = r.files[1].second;
    EXPECT_EQ(snap.rows.size(), cfg.grid.points);
    EXPECT_EQ(snap.meta("t"), "100");
}

TEST(RunExact, EdgeContactAborts) {
    auto cfg = short_config("a", 25.0, Method::Exact);
    cfg.grid.r_min = -20.0;
    cfg.grid.r_max = 20.0;
    cfg.grid.points = 1024;
    cfg.t_final = 2500.0;
    EXPECT_THROW(run_exact(cfg), NumericalAbort);
}

TEST(RunTrajectories, SameSeedSameBytes) {
    for (Method m : {Method::Ctmqc, Method::Ehrenfest, Method::Tsh, Method::Mqc}) {
        auto cfg = short_config("c", 10.0, m);
        cfg.t_final = 600.0;
        cfg.snapshot_times = {300.0};
        WorkerPool pool(2);
        const auto a = scratch_dir("seed_a");
        const auto b = scratch_dir("seed_b");
        const auto names = write_run_outputs(a, run_method(cfg, m, pool));
        write_run_outputs(b, run_method(cfg, m, pool));
        for (const auto& n : names) EXPECT_EQ(slurp(a / n), slurp(b / n)) << to_string(m) << " " << n;
        fs::remove_all(a);
        fs::remove_all(b);
    }
}

TEST(RunTrajectories, ThreadCountDoesNotChangeBytes) {
    for (Method m : {Method::Ctmqc, Method::Tsh}) {
        auto cfg = short_config("c", 10.0, m, 64);
        cfg.t_final = 1500.0;
        cfg.snapshot_times = {1000.0};
        WorkerPool one(1);
        WorkerPool four(4);
        const auto a = scratch_dir("threads_1");
        const auto b = scratch_dir("threads_4");
        const auto names = write_run_outputs(a, run_method(cfg, m, one));
        write_run_outputs(b, run_method(cfg, m, four));
        for (const auto& n : names) EXPECT_EQ(slurp(a / n), slurp(b / n)) << to_string(m) << " " << n;
        fs::remove_all(a);
        fs::remove_all(b);
    }
}

TEST(RunTrajectories, SeedChangeStaysWithinSamplingNoise) {
    auto cfg = short_config("a", 25.0, Method::Ctmqc, 200);
    WorkerPool pool(4);
    const auto a = run_method(cfg, Method::Ctmqc, pool);
    cfg.seed = 99;
    const auto b = run_method(cfg, Method::Ctmqc, pool);
    EXPECT_NE(a.population[0], b.population[0]);
    EXPECT_LT(std::abs(a.population[0] - b.population[0]), 2.0 / std::sqrt(200.0));
}

TEST(RunTrajectories, SeriesColumnsAndInvariants) {
    auto cfg = short_config("a", 25.0, Method::Ctmqc, 50);
    WorkerPool pool(2);
    const auto r = run_method(cfg, Method::Ctmqc, pool);
    EXPECT_EQ(r.series.columns,
              (std::vector<std::string>{"t", "pop1", "pop2", "coherence", "gaugeResidualMax", "normDriftMax"}));
    EXPECT_EQ(r.series.meta("n_traj"), "50");
    EXPECT_EQ(r.series.meta("config_hash"), hex64(config_hash(cfg)));
    EXPECT_LT(r.invariants.max_norm_drift, 1e-8);
    EXPECT_LT(r.invariants.max_gauge_residual, 1e-10);
    // channels partition the mean electronic norm
    const auto& c = r.channels;
    EXPECT_LE(std::abs(c.t1 + c.t2 + c.r1 + c.r2 - 1.0), r.invariants.max_norm_drift + 1e-15);
}

TEST(Scan, ChannelsSumToOne) {
    auto cfg = short_config("a", 25.0, Method::Ctmqc, 40);
    cfg.scan_k0 = {20.0, 30.0};
    cfg.scan_methods = {Method::Exact, Method::Ctmqc, Method::Ehrenfest};
    WorkerPool pool(4);
    const auto rows = run_scan(cfg, pool);
    ASSERT_EQ(rows.size(), 6u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.status, "ok");
        EXPECT_NEAR(r.channels.t1 + r.channels.t2 + r.channels.r1 + r.channels.r2, 1.0, 1e-8)
            << r.k0 << " " << to_string(r.method);
    }
    const auto t = scan_table(cfg, rows);
    EXPECT_EQ(t.columns[0], "k0");
    EXPECT_EQ(t.rows[0][5], "exact");
    EXPECT_EQ(t.rows[0][6], "single_avoided");
}

TEST(Scan, FailedPointIsMarked) {
    auto cfg = short_config("a", 25.0, Method::Exact);
    cfg.grid.r_min = -20.0;
    cfg.grid.r_max = 20.0;
    cfg.grid.points = 1024;
    cfg.t_final = 2500.0;
    cfg.scan_k0 = {25.0};
    cfg.scan_methods = {Method::Exact};
    WorkerPool pool(1);
    const auto rows = run_scan(cfg, pool);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_NE(rows[0].status.find("failed"), std::string::npos);
    EXPECT_TRUE(std::isnan(rows[0].channels.t1));
}

TEST(Compare, IdenticalRunsGiveZeroDeltas) {
    auto cfg = short_config("a", 25.0, Method::Exact);
    cfg.t_final = 400.0;
    const auto a = scratch_dir("cmp_a");
    const auto b = scratch_dir("cmp_b");
    for (const auto& d : {a, b}) {
        ManifestRecord rec;
        rec.result = run_exact(cfg);
        rec.outputs = write_run_outputs(d, *rec.result);
        write_manifest(d, &cfg, rec);
    }
    const auto report = compare_runs({a, b});
    ASSERT_EQ(report.rows.size(), 2u);
    for (const auto& r : report.rows) {
        EXPECT_GT(r.samples, 100u);
        EXPECT_EQ(r.max_pop_delta, 0.0);
        EXPECT_EQ(r.max_coherence_delta, 0.0);
        for (double d : r.channel_delta) EXPECT_EQ(d, 0.0);
        EXPECT_FALSE(r.coherence_flag);
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Compare, ExactRunIsReference) {
    auto cfg = short_config("a", 25.0, Method::Exact, 20);
    cfg.t_final = 400.0;
    const auto e = scratch_dir("ref_exact");
    const auto c = scratch_dir("ref_ctmqc");
    WorkerPool pool(2);
    write_run_outputs(c, run_method(cfg, Method::Ctmqc, pool));
    write_run_outputs(e, run_method(cfg, Method::Exact, pool));
    const auto report = compare_runs({c, e});
    EXPECT_EQ(report.reference, e.string());
    EXPECT_EQ(report.rows[0].method, "ctmqc");
    EXPECT_GT(report.rows[0].samples, 100u);
    fs::remove_all(e);
    fs::remove_all(c);
}

TEST(Compare, EhrenfestCoherenceFlaggedOnModelC) {
    const auto cfg = short_config("c", 10.0, Method::Ehrenfest, 200);
    const auto e = scratch_dir("flag_exact");
    const auto m = scratch_dir("flag_ehrenfest");
    WorkerPool pool(2);
    write_run_outputs(e, run_method(cfg, Method::Exact, pool));
    write_run_outputs(m, run_method(cfg, Method::Ehrenfest, pool));
    const auto report = compare_runs({e, m});
    ASSERT_EQ(report.rows.size(), 2u);
    EXPECT_FALSE(report.rows[0].coherence_flag);
    EXPECT_TRUE(report.rows[1].coherence_flag) << report.rows[1].rms_coherence_delta;
    fs::remove_all(e);
    fs::remove_all(m);
}

TEST(Compare, MismatchedModelsRejected) {
    auto a_cfg = short_config("a", 25.0, Method::Exact);
    a_cfg.t_final = 100.0;
    auto b_cfg = short_config("b", 25.0, Method::Exact);
    b_cfg.t_final = 100.0;
    const auto a = scratch_dir("mm_a");
    const auto b = scratch_dir("mm_b");
    write_run_outputs(a, run_exact(a_cfg));
    write_run_outputs(b, run_exact(b_cfg));
    EXPECT_THROW(compare_runs({a, b}), ConfigError);
    EXPECT_THROW(compare_runs({a}), ConfigError);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Cli, RunWritesOutputsAndManifest) {
    const auto dir = scratch_dir("cli_run");
    {
        std::ofstream f(dir / "run.ini");
        f << "[model]\nkind = a\n[method]\nname = ctmqc\nt_final = 300\n[initial]\nk0 = 25\nn_traj = 20\n"
             "[output]\nsnapshot_times = 100\n";
    }
    EXPECT_EQ(cli("--threads 2 --out " + (dir / "out").string() + " run " + (dir / "run.ini").string()), 0);
    const auto m = manifest(dir / "out");
    EXPECT_EQ(m["status"], "ok");
    EXPECT_EQ(m["method"], "ctmqc");
    EXPECT_EQ(m["threads"], 2);
    EXPECT_TRUE(fs::exists(dir / "out" / "series.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "snapshot_t100.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "trajectories_t100.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "initial_conditions.csv"));
    fs::remove_all(dir);
}

TEST(Cli, SeedOverrideChangesHash) {
    const auto dir = scratch_dir("cli_seed");
    {
        std::ofstream f(dir / "run.ini");
        f << "[model]\nkind = a\n[method]\nname = ehrenfest\nt_final = 50\n[initial]\nk0 = 25\nn_traj = 5\n";
    }
    EXPECT_EQ(cli("--seed 7 --out " + (dir / "o").string() + " run " + (dir / "run.ini").string()), 0);
    const auto series = read_csv(dir / "o" / "series.csv");
    EXPECT_EQ(series.meta("seed"), "7");
    fs::remove_all(dir);
}

TEST(Cli, ConfigErrorExitsTwo) {
    const auto dir = scratch_dir("cli_cfg");
    {
        std::ofstream f(dir / "bad.ini");
        f << "[model]\nkind = a\n[method]\ndt = -1\n[initial]\nk0 = 25\n";
    }
    EXPECT_EQ(cli("--out " + (dir / "o").string() + " run " + (dir / "bad.ini").string()), 2);
    const auto m = manifest(dir / "o");
    EXPECT_EQ(m["status"], "config_error");
    EXPECT_NE(m["error"].get<std::string>().find("line 4"), std::string::npos);
    EXPECT_EQ(cli("run " + (dir / "missing.ini").string()), 2);
    EXPECT_EQ(cli("frobnicate"), 2);
    fs::remove_all(dir);
}

TEST(Cli, NumericalAbortExitsThreeWithManifest) {
    const auto dir = scratch_dir("cli_abort");
    {
        std::ofstream f(dir / "edge.ini");
        f << "[model]\nkind = a\n[method]\nname = exact\nt_final = 2500\ngrid_min = -20\ngrid_max = 20\n"
             "grid_points = 1024\n[initial]\nk0 = 25\n";
    }
    EXPECT_EQ(cli("--out " + (dir / "o").string() + " run " + (dir / "edge.ini").string()), 3);
    const auto m = manifest(dir / "o");
    EXPECT_EQ(m["status"], "numerical_abort");
    EXPECT_NE(m["error"].get<std::string>().find("edge"), std::string::npos);
    EXPECT_TRUE(m.contains("config"));
    fs::remove_all(dir);
}

TEST(Cli, ScanAndCompare) {
    const auto dir = scratch_dir("cli_scan");
    {
        std::ofstream f(dir / "scan.ini");
        f << "[model]\nkind = a\n[method]\nt_final = 300\n[initial]\nn_traj = 10\n[scan]\nk0 = 20, 30\n"
             "methods = exact, ehrenfest\n";
        std::ofstream g(dir / "b.ini");
        g << "[model]\nkind = b\n[method]\nname = exact\nt_final = 100\n[initial]\nk0 = 20\n";
        std::ofstream h(dir / "a.ini");
        h << "[model]\nkind = a\n[method]\nname = exact\nt_final = 100\n[initial]\nk0 = 20\n";
    }
    EXPECT_EQ(cli("--out " + (dir / "s").string() + " scan " + (dir / "scan.ini").string()), 0);
    const auto scan = read_csv(dir / "s" / "scan.csv");
    EXPECT_EQ(scan.rows.size(), 4u);
    EXPECT_EQ(cli("--out " + (dir / "a").string() + " run " + (dir / "a.ini").string()), 0);
    EXPECT_EQ(cli("--out " + (dir / "a2").string() + " run " + (dir / "a.ini").string()), 0);
    EXPECT_EQ(cli("--out " + (dir / "b").string() + " run " + (dir / "b.ini").string()), 0);
    EXPECT_EQ(cli("--out " + (dir / "c").string() + " compare " + (dir / "a").string() + " " + (dir / "a2").string()), 0);
    EXPECT_EQ(read_csv(dir / "c" / "compare.csv").rows.size(), 2u);
    EXPECT_EQ(cli("compare " + (dir / "a").string() + " " + (dir / "b").string()), 2);
    fs::remove_all(dir);
}
