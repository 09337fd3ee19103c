// Command-line front end: run, scan, compare.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nonadiab/run.hpp"

namespace fs = std::filesystem;
using namespace nonadiab;

namespace {

struct Common {
    std::size_t threads = 0;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig load_config(const std::string& path, const Common& common) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config '" + path + "'");
    std::ostringstream text;
    text << f.rdbuf();
    RunConfig cfg = parse_config(text.str());
    if (common.seed) cfg.seed = *common.seed;
    if (!common.out.empty()) cfg.out_dir = common.out;
    return cfg;
}

std::size_t thread_count(const Common& common) {
    return common.threads > 0 ? common.threads : threads_from_environment();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Runs `body`, mapping exceptions to exit codes and always leaving a manifest
// behind when an output directory is known.
template <class Body>
int guarded(const char* command, const std::optional<RunConfig>& cfg, std::size_t threads, Body&& body) {
    ManifestRecord rec;
    rec.command = command;
    rec.threads = threads;
    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    try {
        body(rec);
    } catch (const ConfigError& e) {
        rec.status = "config_error";
        rec.error = e.what();
        code = 2;
    } catch (const NumericalAbort& e) {
        rec.status = "numerical_abort";
        rec.error = e.what();
        code = 3;
    } catch (const std::exception& e) {
        rec.status = "error";
        rec.error = e.what();
        code = 1;
    }
    rec.wall_seconds = seconds_since(start);
    if (code != 0) std::cerr << "nonadiab " << command << ": " << rec.error << "\n";
    if (cfg) {
        try {
            write_manifest(cfg->out_dir, &*cfg, rec);
        } catch (const std::exception& e) {
            std::cerr << "nonadiab: manifest not written: " << e.what() << "\n";
            if (code == 0) code = 2;
        }
    }
    return code;
}

int cmd_run(const std::string& path, const Common& common) {
    std::optional<RunConfig> cfg;
    try {
        cfg = load_config(path, common);
    } catch (const ConfigError& e) {
        std::cerr << "nonadiab run: " << e.what() << "\n";
        if (!common.out.empty()) {
            ManifestRecord rec;
            rec.command = "run";
            rec.status = "config_error";
            rec.error = e.what();
            try { write_manifest(common.out, nullptr, rec); } catch (const std::exception&) {}
        }
        return 2;
    }
    const std::size_t threads = thread_count(common);
    return guarded("run", cfg, threads, [&](ManifestRecord& rec) {
        WorkerPool pool(threads);
        RunResult result = run_method(*cfg, cfg->method, pool);
        rec.outputs = write_run_outputs(cfg->out_dir, result);
        std::cout << to_string(result.method) << " " << to_string(cfg->model.kind) << " k0=" << format_number(cfg->k0)
                  << " t=" << format_number(result.final_time) << " pop1=" << format_number(result.population[0])
                  << " coherence=" << format_number(result.coherence) << "\n";
        rec.result = std::move(result);
    });
}

int cmd_scan(const std::string& path, const Common& common) {
    std::optional<RunConfig> cfg;
    try {
        cfg = load_config(path, common);
    } catch (const ConfigError& e) {
        std::cerr << "nonadiab scan: " << e.what() << "\n";
        return 2;
    }
    const std::size_t threads = thread_count(common);
    return guarded("scan", cfg, threads, [&](ManifestRecord& rec) {
        WorkerPool pool(threads);
        const auto rows = run_scan(*cfg, pool);
        fs::create_directories(cfg->out_dir);
        write_csv(fs::path(cfg->out_dir) / "scan.csv", scan_table(*cfg, rows));
        rec.outputs = {"scan.csv"};
        std::size_t failed = 0;
        for (const auto& r : rows) failed += r.status != "ok";
        if (failed) rec.error = std::to_string(failed) + " scan point(s) failed";
        std::cout << "scan " << to_string(cfg->model.kind) << ": " << rows.size() << " points, " << failed
                  << " failed\n";
    });
}

int cmd_compare(const std::vector<std::string>& dirs, const Common& common) {
    try {
        std::vector<fs::path> paths(dirs.begin(), dirs.end());
        const Table t = compare_table(compare_runs(paths));
        if (!common.out.empty()) {
            fs::create_directories(common.out);
            write_csv(fs::path(common.out) / "compare.csv", t);
        }
        for (std::size_t i = 0; i < t.columns.size(); ++i) std::cout << (i ? "," : "") << t.columns[i];
        std::cout << "\n";
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) std::cout << (i ? "," : "") << row[i];
            std::cout << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "nonadiab compare: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed quantum-classical nonadiabatic dynamics on 1D two-state models"};
    app.require_subcommand(1);
    Common common;
    std::uint64_t seed = 0;
    app.add_option("--threads", common.threads, "worker threads (default: NONADIAB_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--out", common.out, "output directory (overrides [output] dir)");

    std::string config_path;
    auto* run = app.add_subcommand("run", "run one method for a configuration");
    run->add_option("config", config_path, "configuration file")->required();
    run->fallthrough();
    auto* scan = app.add_subcommand("scan", "scan the [scan] k0 list for the [scan] methods");
    scan->add_option("config", config_path, "configuration file")->required();
    scan->fallthrough();
    std::vector<std::string> dirs;
    auto* compare = app.add_subcommand("compare", "compare run directories against the exact run");
    compare->add_option("dirs", dirs, "run directories")->required()->expected(2, -1);
    compare->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (*seed_opt) common.seed = seed;

    if (*run) return cmd_run(config_path, common);
    if (*scan) return cmd_scan(config_path, common);
    return cmd_compare(dirs, common);
}
