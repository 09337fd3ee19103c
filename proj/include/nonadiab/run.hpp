#pragma once

// Run orchestration: executes one method for a configuration, collects the
// series / snapshot tables, and writes them with a JSON manifest. Also the
// k0 scan and the cross-run comparison.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nonadiab/baselines.hpp"
#include "nonadiab/config.hpp"
#include "nonadiab/ctmqc.hpp"
#include "nonadiab/error.hpp"
#include "nonadiab/grid.hpp"
#include "nonadiab/io.hpp"
#include "nonadiab/observables.hpp"
#include "nonadiab/parallel.hpp"
#include "nonadiab/sampling.hpp"
#include "nonadiab/trajectory.hpp"

#ifndef NONADIAB_VERSION
#define NONADIAB_VERSION "unknown"
#endif

namespace nonadiab {

inline constexpr double kEdgeAbortProbability = 1e-8;

struct InvariantSummary {
    double max_norm_drift = 0.0;
    double max_energy_drift = 0.0;  // exact: relative; Ehrenfest: absolute hartree
    double max_gauge_residual = 0.0;
    std::size_t hops_accepted = 0;
    std::size_t hops_frustrated = 0;
};

struct RunResult {
    Method method = Method::Exact;
    Table series;
    std::vector<std::pair<std::string, Table>> files;  // extra outputs by file name
    ChannelProbabilities channels;
    std::array<double, 2> population{};
    double coherence = 0.0;
    double final_time = 0.0;
    std::size_t steps = 0;
    InvariantSummary invariants;
};

struct RunOptions {
    bool snapshots = true;  // false: series and final observables only (scans)
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> base_metadata(const RunConfig& cfg, Method method) {
    return {
        {"method", std::string(to_string(method))},
        {"model", std::string(to_string(cfg.model.kind))},
        {"k0", format_number(cfg.k0)},
        {"sigma", format_number(cfg.resolved_sigma())},
        {"dt", format_number(cfg.resolved_dt(method))},
        {"seed", std::to_string(cfg.seed)},
        {"n_traj", method == Method::Exact ? std::string("0") : std::to_string(cfg.resolved_n_traj(method))},
        {"config_hash", hex64(config_hash(cfg))},
    };
}

/// Step index of each requested snapshot time (rounded to the step grid).
inline std::vector<std::size_t> snapshot_steps(const RunConfig& cfg, Method method) {
    std::vector<std::size_t> out;
    const double dt = cfg.resolved_dt(method);
    const std::size_t steps = cfg.step_count(method);
    for (double t : cfg.snapshot_times) {
        const auto s = static_cast<std::size_t>(std::llround(t / dt));
        if (s <= steps) out.push_back(s);
    }
    std::ranges::sort(out);
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline std::string time_tag(double t) {
    return format_number(std::round(t * 1000.0) / 1000.0);
}

inline void validate_for_run(const RunConfig& cfg, Method method) {
    if (!(cfg.k0 > 0.0)) throw ConfigError("k0 must be > 0");
    if (!(cfg.resolved_dt(method) > 0.0)) throw ConfigError("dt must be > 0");
    if (!(cfg.resolved_t_final() > 0.0)) throw ConfigError("t_final must be > 0");
    if (method != Method::Exact && cfg.resolved_n_traj(method) < 1) throw ConfigError("n_traj must be >= 1");
}

}  // namespace detail

/// Exact split-operator reference.
inline RunResult run_exact(const RunConfig& cfg, const RunOptions& options = {}) {
    detail::validate_for_run(cfg, Method::Exact);
    RunResult result;
    result.method = Method::Exact;
    const double dt = cfg.resolved_dt(Method::Exact);
    const std::size_t steps = cfg.step_count(Method::Exact);
    const std::size_t stride = cfg.resolved_stride(Method::Exact);
    const auto snaps = options.snapshots ? detail::snapshot_steps(cfg, Method::Exact) : std::vector<std::size_t>{};

    GridPropagator prop(cfg.model, cfg.grid, dt, cfg.split_order);
    GridWavefunction psi = to_diabatic(init_gaussian_packet(cfg.grid, cfg.packet(), cfg.initial_state), prop.basis());
    const double e0 = prop.energy(psi);

    result.series.metadata = detail::base_metadata(cfg, Method::Exact);
    result.series.columns = {"t", "pop1", "pop2", "coherence", "energy", "norm"};
    auto next_snap = snaps.begin();

    const auto record = [&](std::size_t step) {
        const double t = static_cast<double>(step) * dt;
        const double edge = edge_probability(psi);
        if (edge > kEdgeAbortProbability) {
            throw NumericalAbort("packet reached the grid edge at t=" + format_number(t) + " (edge probability " +
                                 format_number(edge) + "); widen the grid or shorten t_final");
        }
        const GridWavefunction ad = to_adiabatic(psi, prop.basis());
        const ExactObservables obs = exact_observables(ad);
        const double energy = prop.energy(psi);
        const double norm = psi.norm();
        result.invariants.max_norm_drift = std::max(result.invariants.max_norm_drift, std::abs(norm - 1.0));
        result.invariants.max_energy_drift =
            std::max(result.invariants.max_energy_drift, std::abs((energy - e0) / e0));
        result.series.rows.push_back(
            (RowBuilder{} << t << obs.population[0] << obs.population[1] << obs.coherence << energy << norm).take());
        result.population = obs.population;
        result.coherence = obs.coherence;
        if (next_snap != snaps.end() && *next_snap == step) {
            ++next_snap;
            const auto gi = exact_tdpes_gi(ad, prop.basis());
            Table snap;
            snap.metadata = detail::base_metadata(cfg, Method::Exact);
            snap.metadata.emplace_back("t", format_number(t));
            snap.columns = {"R", "density", "boDensity1", "boDensity2", "tdpesGI", "mask", "eps1", "eps2"};
            for (std::size_t j = 0; j < cfg.grid.points; ++j) {
                const auto& p = prop.basis().points[j];
                snap.rows.push_back((RowBuilder{} << cfg.grid.position(j) << obs.density[j] << obs.bo_density[0][j]
                                                  << obs.bo_density[1][j] << gi.value[j] << int(gi.mask[j])
                                                  << p.energy[0] << p.energy[1])
                                        .take());
            }
            result.files.emplace_back("snapshot_t" + detail::time_tag(t) + ".csv", std::move(snap));
        }
        if (step == steps) result.channels = channel_probabilities(ad, cfg.r_split);
    };

    record(0);
    for (std::size_t s = 1; s <= steps; ++s) {
        prop.step(psi);
        const bool snap_due = next_snap != snaps.end() && *next_snap == s;
        if (s % stride == 0 || s == steps || snap_due) record(s);
    }
    result.steps = steps;
    result.final_time = static_cast<double>(steps) * dt;
    return result;
}

/// Initial trajectory states for a configuration.
inline std::vector<TrajectoryState<2>> initial_trajectories(const RunConfig& cfg, Method method,
                                                           const ModelElectronicStructure& provider,
                                                           InitialConditions* ic_out = nullptr) {
    const std::size_t n = cfg.resolved_n_traj(method);
    InitialConditions ic = cfg.sampling == Sampling::Wigner
                               ? sample_wigner(cfg.packet(), n, cfg.seed, cfg.initial_state)
                               : sample_fixed_momentum(cfg.packet(), n, cfg.seed, cfg.initial_state);
    std::vector<TrajectoryState<2>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(make_trajectory(provider, ic.positions[i], ic.momenta[i], ic.initial_state));
    }
    if (ic_out) *ic_out = std::move(ic);
    return out;
}

namespace detail {

template <class Ensemble>
RunResult run_ensemble(const RunConfig& cfg, Method method, Ensemble& ensemble, const InitialConditions& ic,
                       WorkerPool& pool, const RunOptions& options) {
    RunResult result;
    result.method = method;
    const double dt = cfg.resolved_dt(method);
    const std::size_t steps = cfg.step_count(method);
    const std::size_t stride = cfg.resolved_stride(method);
    const auto snaps = options.snapshots ? snapshot_steps(cfg, method) : std::vector<std::size_t>{};
    constexpr bool hopping = requires { ensemble.hop_states(); };

    result.series.metadata = base_metadata(cfg, method);
    result.series.columns = {"t", "pop1", "pop2", "coherence", "gaugeResidualMax", "normDriftMax"};
    auto next_snap = snaps.begin();

    const auto populations = [&] {
        if constexpr (hopping) {
            if (method == Method::Tsh) return surface_populations<2>(ensemble.hop_states());
        }
        return ensemble_populations<2>(ensemble.trajectories());
    };

    const auto record = [&](std::size_t step) {
        const double t = static_cast<double>(step) * dt;
        const auto& trajs = ensemble.trajectories();
        const std::span<const TrajectoryState<2>> view(trajs);
        const auto pop = populations();
        const double coherence = decoherence_indicator<2>(view);
        double norm_drift = 0.0;
        for (const auto& s : trajs) norm_drift = std::max(norm_drift, std::abs(s.norm() - 1.0));
        const double residual = ensemble.max_gauge_residual();
        result.invariants.max_norm_drift = std::max(result.invariants.max_norm_drift, norm_drift);
        result.invariants.max_gauge_residual = std::max(result.invariants.max_gauge_residual, residual);
        result.series.rows.push_back(
            (RowBuilder{} << t << pop[0] << pop[1] << coherence << residual << norm_drift).take());
        result.population = pop;
        result.coherence = coherence;

        if (next_snap != snaps.end() && *next_snap == step) {
            ++next_snap;
            const auto hist = density_histogram<2>(view, cfg.bin_width);
            Table h;
            h.metadata = base_metadata(cfg, method);
            h.metadata.emplace_back("t", format_number(t));
            h.metadata.emplace_back("bin_width", format_number(cfg.bin_width));
            h.columns = {"R", "chi2", "F1", "F2"};
            for (std::size_t b = 0; b < hist.center.size(); ++b) {
                h.rows.push_back((RowBuilder{} << hist.center[b] << hist.density[b] << hist.bo_density[0][b]
                                               << hist.bo_density[1][b])
                                     .take());
            }
            result.files.emplace_back("snapshot_t" + time_tag(t) + ".csv", std::move(h));
            Table tr;
            tr.metadata = base_metadata(cfg, method);
            tr.metadata.emplace_back("t", format_number(t));
            tr.columns = {"index", "R", "P", "rho11", "rho22", "eps0"};
            for (std::size_t i = 0; i < trajs.size(); ++i) {
                const auto& s = trajs[i];
                tr.rows.push_back((RowBuilder{} << i << s.position << s.momentum << s.population(0)
                                                << s.population(1) << trajectory_tdpes(s))
                                      .take());
            }
            result.files.emplace_back("trajectories_t" + time_tag(t) + ".csv", std::move(tr));
        }
        if (step == steps) {
            if constexpr (hopping) {
                if (method == Method::Tsh) {
                    result.channels = classify_channels<2>(view, std::span<const HopState>(ensemble.hop_states()),
                                                           cfg.r_split);
                    return;
                }
            }
            result.channels = classify_channels<2>(view, cfg.r_split);
        }
    };

    if (options.snapshots && cfg.write_initial) {
        Table t;
        t.metadata = base_metadata(cfg, method);
        t.metadata.emplace_back("sampling", std::string(to_string(cfg.sampling)));
        t.columns = {"index", "R", "P"};
        for (std::size_t i = 0; i < ic.size(); ++i) t.rows.push_back((RowBuilder{} << i << ic.positions[i] << ic.momenta[i]).take());
        result.files.emplace_back("initial_conditions.csv", std::move(t));
    }

    record(0);
    for (std::size_t s = 1; s <= steps; ++s) {
        ensemble.step(pool);
        const bool snap_due = next_snap != snaps.end() && *next_snap == s;
        if (s % stride == 0 || s == steps || snap_due) record(s);
    }

    if constexpr (hopping) {
        if (method == Method::Tsh) {
            Table log;
            log.metadata = base_metadata(cfg, method);
            log.columns = {"trajIndex", "step", "from", "to", "accepted"};
            const auto& hops = ensemble.hop_states();
            for (std::size_t i = 0; i < hops.size(); ++i) {
                for (const auto& h : hops[i].log) {
                    log.rows.push_back((RowBuilder{} << i << h.step << h.from + 1 << h.to + 1 << int(h.accepted)).take());
                    (h.accepted ? result.invariants.hops_accepted : result.invariants.hops_frustrated) += 1;
                }
            }
            if (options.snapshots) result.files.emplace_back("hops.csv", std::move(log));
        }
    }
    result.steps = steps;
    result.final_time = static_cast<double>(steps) * dt;
    return result;
}

}  // namespace detail

/// Trajectory-based run (CT-MQC or one of the independent baselines).
inline RunResult run_trajectories(const RunConfig& cfg, Method method, WorkerPool& pool,
                                  const RunOptions& options = {}) {
    if (method == Method::Exact) throw ConfigError("run_trajectories: exact is not a trajectory method");
    detail::validate_for_run(cfg, method);
    const ModelElectronicStructure provider{cfg.model};
    InitialConditions ic;
    auto trajs = initial_trajectories(cfg, method, provider, &ic);
    const double dt = cfg.resolved_dt(method);
    if (method == Method::Ctmqc) {
        CtmqcOptions opts;
        opts.dt = dt;
        opts.quantum_momentum.region = cfg.qm_region;
        opts.quantum_momentum.variance_scale = cfg.qm_variance_scale;
        CtmqcEnsemble<ModelElectronicStructure> ensemble(provider, std::move(trajs), opts);
        return detail::run_ensemble(cfg, method, ensemble, ic, pool, options);
    }
    const IndependentMethod kind = method == Method::Ehrenfest ? IndependentMethod::Ehrenfest
                                   : method == Method::Tsh     ? IndependentMethod::SurfaceHopping
                                                               : IndependentMethod::Mqc;
    IndependentEnsemble<ModelElectronicStructure> ensemble(provider, std::move(trajs), kind, dt, cfg.seed);
    return detail::run_ensemble(cfg, method, ensemble, ic, pool, options);
}

inline RunResult run_method(const RunConfig& cfg, Method method, WorkerPool& pool, const RunOptions& options = {}) {
    return method == Method::Exact ? run_exact(cfg, options) : run_trajectories(cfg, method, pool, options);
}

// ---------------------------------------------------------------- manifest

inline nlohmann::ordered_json channels_json(const ChannelProbabilities& c) {
    return {{"T1", c.t1}, {"T2", c.t2}, {"R1", c.r1}, {"R2", c.r2}, {"unsettled", c.unsettled}};
}

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["model"] = {{"kind", to_string(cfg.model.kind)},
                  {"a", cfg.model.params.a},
                  {"b", cfg.model.params.b},
                  {"c", cfg.model.params.c},
                  {"d", cfg.model.params.d},
                  {"e0", cfg.model.params.e0},
                  {"mass", cfg.model.mass}};
    j["method"] = to_string(cfg.method);
    j["k0"] = cfg.k0;
    j["sigma"] = cfg.k0 > 0.0 ? nlohmann::ordered_json(cfg.resolved_sigma()) : nlohmann::ordered_json(nullptr);
    j["center"] = cfg.center;
    j["seed"] = cfg.seed;
    j["sampling"] = to_string(cfg.sampling);
    j["qm_region"] = to_string(cfg.qm_region);
    j["text"] = serialize_config(cfg);
    j["hash"] = hex64(config_hash(cfg));
    return j;
}

struct ManifestRecord {
    std::string command;
    std::string status = "ok";  // ok | config_error | numerical_abort | error
    std::string error;
    double wall_seconds = 0.0;
    std::size_t threads = 1;
    std::optional<RunResult> result;
    std::vector<std::string> outputs;
};

inline void write_manifest(const std::filesystem::path& dir, const RunConfig* cfg, const ManifestRecord& rec) {
    nlohmann::ordered_json j;
    j["version"] = NONADIAB_VERSION;
    j["command"] = rec.command;
    j["status"] = rec.status;
    if (!rec.error.empty()) j["error"] = rec.error;
    j["wall_seconds"] = rec.wall_seconds;
    j["threads"] = rec.threads;
    if (cfg) j["config"] = config_json(*cfg);
    if (rec.result) {
        const auto& r = *rec.result;
        j["method"] = to_string(r.method);
        j["steps"] = r.steps;
        j["final_time"] = r.final_time;
        j["final_population"] = {r.population[0], r.population[1]};
        j["final_coherence"] = r.coherence;
        j["channels"] = channels_json(r.channels);
        j["invariants"] = {{"max_norm_drift", r.invariants.max_norm_drift},
                           {"max_energy_drift", r.invariants.max_energy_drift},
                           {"max_gauge_residual", r.invariants.max_gauge_residual},
                           {"hops_accepted", r.invariants.hops_accepted},
                           {"hops_frustrated", r.invariants.hops_frustrated}};
    }
    j["outputs"] = rec.outputs;
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw ConfigError("cannot write manifest in " + dir.string());
    f << j.dump(2) << "\n";
}

/// Writes the series and every extra table of a run; returns the file names.
inline std::vector<std::string> write_run_outputs(const std::filesystem::path& dir, const RunResult& result) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names{"series.csv"};
    write_csv(dir / "series.csv", result.series);
    for (const auto& [name, table] : result.files) {
        write_csv(dir / name, table);
        names.push_back(name);
    }
    return names;
}

// ---------------------------------------------------------------- scan

struct ScanRow {
    double k0 = 0.0;
    Method method = Method::Exact;
    ChannelProbabilities channels;
    std::string status = "ok";
};

/// Independent runs per (k0, method), concurrent at the run level. A failed
/// point is marked and the scan continues.
inline std::vector<ScanRow> run_scan(const RunConfig& cfg, WorkerPool& pool) {
    if (cfg.scan_k0.empty()) throw ConfigError("[scan] k0 list is empty");
    if (cfg.scan_methods.empty()) throw ConfigError("[scan] methods list is empty");
    std::vector<ScanRow> rows;
    for (double k0 : cfg.scan_k0)
        for (Method m : cfg.scan_methods) rows.push_back({k0, m, {}, "ok"});
    pool.run_tasks(rows.size(), [&](std::size_t i) {
        auto& row = rows[i];
        RunConfig point = cfg;
        point.k0 = row.k0;
        point.method = row.method;
        WorkerPool inner(1);
        try {
            row.channels = run_method(point, row.method, inner, RunOptions{false}).channels;
        } catch (const std::exception& e) {
            const double nan = std::nan("");
            row.channels = {nan, nan, nan, nan, false};
            row.status = std::string("failed: ") + e.what();
        }
    });
    return rows;
}

inline Table scan_table(const RunConfig& cfg, const std::vector<ScanRow>& rows) {
    Table t;
    t.metadata = {{"model", std::string(to_string(cfg.model.kind))},
                  {"seed", std::to_string(cfg.seed)},
                  {"sigma_rule", cfg.sigma ? std::string("fixed ") + format_number(*cfg.sigma)
                                           : format_number(cfg.sigma_rule) + "/k0"},
                  {"sampling", std::string(to_string(cfg.sampling))},
                  {"config_hash", hex64(config_hash(cfg))}};
    t.columns = {"k0", "T1", "T2", "R1", "R2", "method", "model", "unsettled", "status"};
    for (const auto& r : rows) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        t.rows.push_back((RowBuilder{} << r.k0 << r.channels.t1 << r.channels.t2 << r.channels.r1 << r.channels.r2
                                       << std::string(to_string(r.method)) << std::string(to_string(cfg.model.kind))
                                       << int(r.channels.unsettled) << status)
                             .take());
    }
    return t;
}

// ---------------------------------------------------------------- compare

struct CompareRow {
    std::string run;
    std::string method;
    std::size_t samples = 0;
    double max_pop_delta = 0.0;
    double rms_pop_delta = 0.0;
    double max_coherence_delta = 0.0;
    double rms_coherence_delta = 0.0;
    std::array<double, 4> channel_delta{};  // T1 T2 R1 R2, NaN if unavailable
    bool coherence_flag = false;            // RMS coherence delta above kCoherenceFlag
};

inline constexpr double kCoherenceFlag = 0.05;

struct CompareReport {
    std::string reference;
    std::vector<CompareRow> rows;
};

/// Aligns the series of several run directories on common sample times and
/// reports deltas against the reference run (the first exact run, else the
/// first directory).
inline CompareReport compare_runs(const std::vector<std::filesystem::path>& dirs) {
    if (dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
    struct Loaded {
        std::string name;
        Table series;
        nlohmann::json manifest;
    };
    std::vector<Loaded> runs;
    for (const auto& d : dirs) {
        Loaded l;
        l.name = d.string();
        l.series = read_csv(d / "series.csv");
        std::ifstream f(d / "manifest.json");
        if (f) l.manifest = nlohmann::json::parse(f, nullptr, false);
        runs.push_back(std::move(l));
    }
    std::size_t ref = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].series.meta("method") == "exact") {
            ref = i;
            break;
        }
    }
    const auto& reference = runs[ref];
    const std::string model = reference.series.meta("model");
    const auto ref_t = reference.series.numbers("t");
    const auto ref_pop = reference.series.numbers("pop1");
    const auto ref_coh = reference.series.numbers("coherence");

    const auto channel = [](const nlohmann::json& m, const char* key) {
        if (m.is_object() && m.contains("channels") && m["channels"].contains(key) && m["channels"][key].is_number()) {
            return m["channels"][key].get<double>();
        }
        return std::nan("");
    };

    CompareReport out;
    out.reference = reference.name;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        if (run.series.meta("model") != model) {
            throw ConfigError("incompatible runs: model '" + run.series.meta("model") + "' in " + run.name + " vs '" +
                              model + "' in " + reference.name);
        }
        const auto t = run.series.numbers("t");
        const auto pop = run.series.numbers("pop1");
        const auto coh = run.series.numbers("coherence");
        CompareRow row;
        row.run = run.name;
        row.method = run.series.meta("method");
        double sum_pop = 0.0;
        double sum_coh = 0.0;
        std::size_t a = 0;
        for (std::size_t b = 0; b < t.size(); ++b) {
            while (a < ref_t.size() && ref_t[a] < t[b] - 1e-6) ++a;
            if (a == ref_t.size()) break;
            if (std::abs(ref_t[a] - t[b]) > 1e-6) continue;
            const double dp = pop[b] - ref_pop[a];
            const double dc = coh[b] - ref_coh[a];
            row.max_pop_delta = std::max(row.max_pop_delta, std::abs(dp));
            row.max_coherence_delta = std::max(row.max_coherence_delta, std::abs(dc));
            sum_pop += dp * dp;
            sum_coh += dc * dc;
            ++row.samples;
        }
        if (row.samples == 0) {
            throw ConfigError("incompatible runs: no common sample times between " + run.name + " and " + reference.name);
        }
        row.rms_pop_delta = std::sqrt(sum_pop / static_cast<double>(row.samples));
        row.rms_coherence_delta = std::sqrt(sum_coh / static_cast<double>(row.samples));
        row.coherence_flag = row.rms_coherence_delta > kCoherenceFlag;
        const char* keys[] = {"T1", "T2", "R1", "R2"};
        for (std::size_t k = 0; k < 4; ++k) {
            row.channel_delta[k] = channel(run.manifest, keys[k]) - channel(reference.manifest, keys[k]);
        }
        out.rows.push_back(row);
    }
    return out;
}

inline Table compare_table(const CompareReport& report) {
    Table t;
    t.metadata = {{"reference", report.reference}};
    t.columns = {"run", "method", "samples", "maxPopDelta", "rmsPopDelta", "maxCoherenceDelta", "rmsCoherenceDelta",
                 "dT1", "dT2", "dR1", "dR2", "coherenceFlag"};
    for (const auto& r : report.rows) {
        t.rows.push_back((RowBuilder{} << r.run << r.method << r.samples << r.max_pop_delta << r.rms_pop_delta
                                       << r.max_coherence_delta << r.rms_coherence_delta << r.channel_delta[0]
                                       << r.channel_delta[1] << r.channel_delta[2] << r.channel_delta[3]
                                       << int(r.coherence_flag))
                             .take());
    }
    return t;
}

}  // namespace nonadiab
