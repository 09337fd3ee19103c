// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// line fails. Exact references are computed here, nothing is read from disk.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nonadiab/run.hpp"

using namespace nonadiab;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s  %s  [%s]\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::size_t pool_size() {
    if (std::getenv("NONADIAB_THREADS")) return threads_from_environment();
    return std::max(1u, std::thread::hardware_concurrency());
}

RunConfig config(const std::string& kind, double k0, const std::string& extra = "") {
    return parse_config("[model]\nkind = " + kind + "\n[initial]\nk0 = " + format_number(k0) + "\n" + extra);
}

double worst_norm = 0.0;
double worst_energy = 0.0;
std::string worst_energy_run;
std::size_t exact_runs = 0;

RunResult exact(const RunConfig& cfg, const RunOptions& options = {}) {
    auto r = run_exact(cfg, options);
    worst_norm = std::max(worst_norm, r.invariants.max_norm_drift);
    if (r.invariants.max_energy_drift > worst_energy) {
        worst_energy = r.invariants.max_energy_drift;
        worst_energy_run = std::string(to_string(cfg.model.kind)) + " k0=" + format_number(cfg.k0) +
                           " sigma_rule=" + format_number(cfg.sigma_rule);
    }
    ++exact_runs;
    return r;
}

const Table& file(const RunResult& r, const std::string& prefix) {
    for (const auto& [name, t] : r.files)
        if (name.rfind(prefix, 0) == 0) return t;
    throw std::runtime_error("no output " + prefix);
}

double value_at(const Table& series, const std::string& column, double t) {
    const auto ts = series.numbers("t");
    const auto v = series.numbers(column);
    std::size_t k = 0;
    while (k + 1 < ts.size() && ts[k] < t - 1e-9) ++k;
    return v[k];
}

double max_channel_delta(const ChannelProbabilities& a, const ChannelProbabilities& b) {
    return std::max({std::abs(a.t1 - b.t1), std::abs(a.t2 - b.t2), std::abs(a.r1 - b.r1), std::abs(a.r2 - b.r2)});
}

struct CoherenceShape {
    double peak = 0.0;
    double dip = 0.0;
    double revival = 0.0;
};

// global maximum, the minimum after it, and the maximum after that minimum
CoherenceShape coherence_shape(const Table& series) {
    const auto c = series.numbers("coherence");
    const auto ip = static_cast<std::size_t>(std::ranges::max_element(c) - c.begin());
    const auto id = static_cast<std::size_t>(std::min_element(c.begin() + static_cast<long>(ip), c.end()) - c.begin());
    CoherenceShape s;
    s.peak = c[ip];
    s.dip = c[id];
    s.revival = *std::max_element(c.begin() + static_cast<long>(id), c.end());
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------- invariants

double free_packet_error() {
    DiabaticModel model = DiabaticModel::defaults(ModelKind::ExtendedCoupling);
    model.params.b = 0.0;
    const Grid grid{-40.0, 40.0, 2048};
    const double k0 = 10.0;
    const double sigma = 1.5;
    const double rc = -5.0;
    const double t = 1000.0;
    GridPropagator prop(model, grid, 0.1);
    auto psi = to_diabatic(init_gaussian_packet(grid, PacketShape{rc, k0, sigma}, 0), prop.basis());
    for (int s = 0; s < 10000; ++s) prop.step(psi);
    const double m = model.mass;
    const double s2 = sigma * sigma * (1.0 + std::pow(t / (m * sigma * sigma), 2));
    const double mean = rc + k0 * t / m;
    double worst = 0.0;
    for (std::size_t j = 0; j < grid.points; ++j) {
        const double r = grid.position(j);
        const double expected = std::exp(-(r - mean) * (r - mean) / s2) / std::sqrt(std::numbers::pi * s2);
        const double got = std::norm(psi.amplitude[0][j]) + std::norm(psi.amplitude[1][j]);
        worst = std::max(worst, std::abs(got - expected));
    }
    return worst;
}

// ensemble population drift with the NACVs removed, superposed start
double uncoupled_population_drift(ModelKind kind, double center, WorkerPool& pool) {
    using Uncoupled = UncoupledElectronicStructure<ModelElectronicStructure>;
    const Uncoupled p{ModelElectronicStructure{DiabaticModel::defaults(kind)}};
    const auto ic = sample_wigner(PacketShape{center, 15.0, 0.8}, 200, 11);
    std::vector<TrajectoryState<2>> v;
    for (std::size_t i = 0; i < ic.size(); ++i) {
        auto s = make_trajectory(p, ic.positions[i], ic.momenta[i], 0);
        const double a = 0.3 + 0.4 * static_cast<double>(i) / static_cast<double>(ic.size());
        s.coeff = {cplx{std::sqrt(a), 0.0}, cplx{0.0, std::sqrt(1.0 - a)}};
        v.push_back(s);
    }
    CtmqcEnsemble<Uncoupled> e(p, v, CtmqcOptions{});
    const auto pop = [&] { return ensemble_populations<2>(std::span<const TrajectoryState<2>>(e.trajectories()))[0]; };
    const double p0 = pop();
    double worst = 0.0;
    for (int n = 0; n < 4000; ++n) {
        e.step(pool);
        worst = std::max(worst, std::abs(pop() - p0));
    }
    return worst;
}

bool ehrenfest_limit_bitwise(WorkerPool& pool) {
    const auto cfg = config("c", 10.0);
    const ModelElectronicStructure p{cfg.model};
    const auto v = initial_trajectories(cfg, Method::Ctmqc, p);
    CtmqcOptions off;
    off.decoherence = false;
    CtmqcEnsemble<ModelElectronicStructure> ct(p, v, off);
    IndependentEnsemble<ModelElectronicStructure> eh(p, v, IndependentMethod::Ehrenfest, 0.5);
    for (std::size_t n = 0; n < cfg.step_count(Method::Ctmqc); ++n) {
        ct.step(pool);
        eh.step(pool);
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& a = ct.trajectories()[i];
        const auto& b = eh.trajectories()[i];
        if (a.position != b.position || a.momentum != b.momentum || a.coeff != b.coeff) return false;
    }
    return true;
}

struct HopEnergy {
    double worst = 0.0;
    std::size_t accepted = 0;
};

// relative surface-energy jump over each accepted hop; the pre-hop state is
// the same step taken with couplings removed (the Verlet part never sees them)
HopEnergy hop_energy(const std::string& kind, double k0) {
    const auto cfg = config(kind, k0);
    const ModelElectronicStructure p{cfg.model};
    const UncoupledElectronicStructure<ModelElectronicStructure> frozen{p};
    auto small = cfg;
    small.n_traj = 500;
    auto v = initial_trajectories(small, Method::Tsh, p);
    std::vector<HopState> hops(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) hops[i].rng = make_stream(cfg.seed, i, StreamPurpose::Hopping);
    const double dt = cfg.resolved_dt(Method::Tsh);
    HopEnergy out;
    for (std::size_t n = 1; n <= cfg.step_count(Method::Tsh); ++n) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto copy = v[i];
            auto copy_hop = hops[i];
            const std::size_t logged = hops[i].log.size();
            fssh_step(v[i], hops[i], p, dt, n);
            if (hops[i].log.size() == logged || !hops[i].log.back().accepted) continue;
            const auto& rec = hops[i].log.back();
            fssh_step(copy, copy_hop, frozen, dt, n);
            const double before = surface_energy(copy, rec.from, p.mass());
            const double after = surface_energy(v[i], rec.to, p.mass());
            out.worst = std::max(out.worst, std::abs(after - before) / std::abs(before));
            ++out.accepted;
        }
    }
    return out;
}

bool thread_invariant(const RunConfig& cfg, Method m, std::size_t threads) {
    const auto a = fs::temp_directory_path() / "nonadiab_accept_t1";
    const auto b = fs::temp_directory_path() / "nonadiab_accept_tn";
    fs::remove_all(a);
    fs::remove_all(b);
    WorkerPool one(1);
    WorkerPool many(threads);
    const auto names = write_run_outputs(a, run_method(cfg, m, one));
    write_run_outputs(b, run_method(cfg, m, many));
    bool same = true;
    for (const auto& n : names) same = same && slurp(a / n) == slurp(b / n);
    fs::remove_all(a);
    fs::remove_all(b);
    return same;
}

// ---------------------------------------------------------------- scans

struct ScanOutcome {
    std::map<double, ChannelProbabilities> exact;
    std::map<double, ChannelProbabilities> ctmqc;
    bool failed_point = false;

    double deviation(double k0) const { return max_channel_delta(exact.at(k0), ctmqc.at(k0)); }
    double worst() const {
        double w = 0.0;
        for (const auto& [k, c] : exact) w = std::max(w, deviation(k));
        return w;
    }
};

ScanOutcome scan(const std::string& kind, std::vector<double> k0s, WorkerPool& pool, double sigma_rule = 20.0) {
    auto cfg = config(kind, k0s.front(), "[initial]\nsampling = fixed_momentum\n");
    cfg.sigma_rule = sigma_rule;
    cfg.scan_k0 = std::move(k0s);
    cfg.scan_methods = {Method::Ctmqc};
    ScanOutcome out;
    for (const auto& row : run_scan(cfg, pool)) {
        out.ctmqc[row.k0] = row.channels;
        out.failed_point = out.failed_point || row.status != "ok";
    }
    // the exact points run here so they count toward the exact-validity line
    for (double k0 : cfg.scan_k0) {
        auto point = cfg;
        point.k0 = k0;
        out.exact[k0] = exact(point, RunOptions{false}).channels;
    }
    return out;
}

std::string scan_detail(const ScanOutcome& s) {
    std::string d;
    for (const auto& [k, c] : s.exact) d += (d.empty() ? "" : " ") + ("k0=" + fmt(k) + ":" + fmt(s.deviation(k), 3));
    return d;
}

bool monotone(const std::vector<double>& v, int direction) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (direction * (v[i] - v[i - 1]) < 0.0) return false;
    return true;
}

int direction_of(const std::vector<double>& v) {
    if (monotone(v, 1)) return 1;
    if (monotone(v, -1)) return -1;
    return 0;
}

// ---------------------------------------------------------------- TDPES

double tdpes_rms(const RunResult& ex, const RunResult& ct, const Grid& grid) {
    const Table& snap = file(ex, "snapshot_t");
    const Table& tr = file(ct, "trajectories_t");
    GaugeInvariantTdpes gi;
    gi.value = snap.numbers("tdpesGI");
    for (double m : snap.numbers("mask")) gi.mask.push_back(m != 0.0);
    const auto pos = tr.numbers("R");
    const auto val = tr.numbers("eps0");
    return tdpes_deviation(gi, grid, pos, val).rms;
}

}  // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t threads = pool_size();
    WorkerPool pool(threads);
    std::printf("acceptance: %zu worker thread(s)\n", threads);

    // figure runs: (model, k0, TDPES snapshot time)
    struct Figure {
        std::string kind;
        double k0;
        double snapshot;
        RunResult exact;
        RunResult ctmqc;
    };
    std::vector<Figure> figures{{"a", 10.0, 2700.0, {}, {}}, {"a", 25.0, 1140.0, {}, {}},
                                {"b", 16.0, 1700.0, {}, {}}, {"b", 30.0, 590.0, {}, {}},
                                {"c", 10.0, 2850.0, {}, {}}, {"c", 30.0, 1300.0, {}, {}},
                                {"d", 20.0, 1600.0, {}, {}}, {"d", 40.0, 800.0, {}, {}}};
    for (auto& f : figures) {
        const auto cfg = config(f.kind, f.k0, "[output]\nsnapshot_times = " + format_number(f.snapshot) + "\n");
        f.exact = exact(cfg);
        f.ctmqc = run_method(cfg, Method::Ctmqc, pool);
    }
    const auto figure = [&](const std::string& kind, double k0) -> const Figure& {
        for (const auto& f : figures)
            if (f.kind == kind && f.k0 == k0) return f;
        throw std::runtime_error("no figure run");
    };
    const auto c10_cfg = config("c", 10.0);
    const auto eh_c10 = run_method(c10_cfg, Method::Ehrenfest, pool);
    const auto tsh_c10 = run_method(c10_cfg, Method::Tsh, pool);
    const auto mqc_c10 = run_method(c10_cfg, Method::Mqc, pool);

    // ---------------------------------------------------------------- exact reference
    const auto scan_a = scan("a", {10, 15, 20, 25, 30}, pool);
    const auto scan_b = scan("b", {16, 20, 26, 30}, pool);
    const auto scan_c = scan("c", {10, 15, 20, 25}, pool);
    const auto scan_d = scan("d", {30, 35, 40, 45, 50}, pool);
    const auto scan_d_wide = scan("d", {30, 35, 40, 45, 50}, pool, 100.0);
    report("exact: norm drift < 1e-10 and relative energy drift < 1e-8 over all runs",
           worst_norm < 1e-10 && worst_energy < 1e-8,
           std::to_string(exact_runs) + " runs, norm " + fmt(worst_norm, 3) + ", energy " + fmt(worst_energy, 3) + " (" + worst_energy_run + ")");
    {
        const double err = free_packet_error();
        report("exact: free packet matches the analytic Gaussian to 1e-6", err < 1e-6, "max |delta| " + fmt(err, 3));
    }

    // ---------------------------------------------------------------- trajectory invariants
    {
        // model (c), k0 = 10 runs 1e4 steps of 0.5 a.u.
        double worst = 0.0;
        std::string d;
        for (const RunResult* r : {&figure("c", 10.0).ctmqc, &eh_c10, &tsh_c10, &mqc_c10}) {
            worst = std::max(worst, r->invariants.max_norm_drift);
            d += std::string(to_string(r->method)) + " " + fmt(r->invariants.max_norm_drift, 2) + " (" +
                 std::to_string(r->steps) + " steps) ";
        }
        report("trajectories: electronic norm drift < 1e-8 per 1e4 steps, all methods", worst < 1e-8, d);
    }
    {
        const double a = uncoupled_population_drift(ModelKind::SingleAvoided, -2.5, pool);
        const double c = uncoupled_population_drift(ModelKind::ExtendedCoupling, -4.5, pool);
        const double d = uncoupled_population_drift(ModelKind::DoubleArch, -4.5, pool);
        report("ctmqc: zero net population transfer with NACVs removed (1e-8)", std::max({a, c, d}) < 1e-8,
               "ensemble drift a " + fmt(a, 2) + ", c " + fmt(c, 2) + ", d " + fmt(d, 2));
    }
    report("ctmqc: zero quantum momentum reproduces Ehrenfest bit for bit", ehrenfest_limit_bitwise(pool),
           "model c, k0=10, 200 trajectories, 1e4 steps");
    {
        const auto a = hop_energy("a", 10.0);
        const auto c = hop_energy("c", 10.0);
        const auto d = hop_energy("d", 20.0);
        const double worst = std::max({a.worst, c.worst, d.worst});
        report("tsh: energy conserved across hops (1e-8)", worst < 1e-8 && a.accepted && c.accepted && d.accepted,
               std::to_string(a.accepted + c.accepted + d.accepted) + " hops, worst relative " + fmt(worst, 2));
    }
    {
        auto cfg = config("c", 10.0, "[output]\nsnapshot_times = 2850\n");
        const bool ct = thread_invariant(cfg, Method::Ctmqc, 4);
        cfg.n_traj = 1000;
        const bool tsh = thread_invariant(cfg, Method::Tsh, 4);
        report("determinism: byte-identical outputs for 1 and 4 threads", ct && tsh,
               std::string("ctmqc ") + (ct ? "same" : "differ") + ", tsh " + (tsh ? "same" : "differ"));
    }

    // ---------------------------------------------------------------- figure-level claims
    {
        const double d10 = std::abs(figure("a", 10.0).ctmqc.population[0] - figure("a", 10.0).exact.population[0]);
        const double d25 = std::abs(figure("a", 25.0).ctmqc.population[0] - figure("a", 25.0).exact.population[0]);
        report("model a: ctmqc final populations within 0.05 of exact (k0 10, 25)", d10 < 0.05 && d25 < 0.05,
               "k0=10 " + fmt(d10, 3) + ", k0=25 " + fmt(d25, 3));
    }
    {
        const auto& f = figure("c", 10.0);
        const double ct = f.ctmqc.coherence;
        report("model c k0=10: ctmqc coherence < 0.02, ehrenfest and tsh > 0.10",
               ct < 0.02 && eh_c10.coherence > 0.10 && tsh_c10.coherence > 0.10,
               "ctmqc " + fmt(ct, 3) + ", ehrenfest " + fmt(eh_c10.coherence, 3) + ", tsh " + fmt(tsh_c10.coherence, 3));
        // population change after t = 3500, relative to the exact second exchange
        const auto rise = [](const RunResult& r) {
            return r.population[0] - value_at(r.series, "pop1", 3500.0);
        };
        const double ex = rise(f.exact);
        const double c = rise(f.ctmqc);
        const double e = rise(eh_c10);
        const double m = rise(mqc_c10);
        report("model c k0=10: ctmqc second population exchange after 3500 a.u., absent in ehrenfest and mqc",
               ex > 0.0 && c > 0.5 * ex && std::abs(e) < 0.1 * ex && std::abs(m) < 0.1 * ex,
               "pop1 rise exact " + fmt(ex, 3) + ", ctmqc " + fmt(c, 3) + ", ehrenfest " + fmt(e, 2) + ", mqc " +
                   fmt(m, 2));
    }
    {
        const auto& f20 = figure("d", 20.0);
        const auto& f40 = figure("d", 40.0);
        const auto s20 = coherence_shape(f20.ctmqc.series);
        const auto s40 = coherence_shape(f40.ctmqc.series);
        const double d20 = std::abs(f20.ctmqc.population[0] - f20.exact.population[0]);
        const double d40 = std::abs(f40.ctmqc.population[0] - f40.exact.population[0]);
        const bool decay = s20.dip < 0.25 * s20.peak && s40.dip < 0.25 * s40.peak;
        const bool revival = s40.revival > 0.5 * s40.peak;
        report("model d: ctmqc coherence decays, revives at k0=40, final populations within 0.05",
               decay && revival && d20 < 0.05 && d40 < 0.05,
               "k0=20 peak/dip " + fmt(s20.peak, 3) + "/" + fmt(s20.dip, 2) + " dpop " + fmt(d20, 3) +
                   "; k0=40 peak/dip/revival " + fmt(s40.peak, 3) + "/" + fmt(s40.dip, 3) + "/" +
                   fmt(s40.revival, 3) + " dpop " + fmt(d40, 3));
    }
    {
        const double w = std::max({scan_a.worst(), scan_c.worst(), scan_d.worst()});
        report("scans a, c, d (sigma = 20/k0): ctmqc channels within 0.10 of exact",
               w < 0.10 && !scan_a.failed_point && !scan_c.failed_point && !scan_d.failed_point,
               "a " + scan_detail(scan_a) + "; c " + scan_detail(scan_c) + "; d " + scan_detail(scan_d));
    }
    {
        bool ok = true;
        std::string d;
        for (int channel = 0; channel < 2; ++channel) {
            std::vector<double> ex;
            std::vector<double> ct;
            for (const auto& [k, c] : scan_c.exact) {
                ex.push_back(channel ? c.r2 : c.r1);
                const auto& t = scan_c.ctmqc.at(k);
                ct.push_back(channel ? t.r2 : t.r1);
            }
            const int dir = direction_of(ex);
            const bool same = dir == 0 || monotone(ct, dir);
            ok = ok && same;
            d += std::string(channel ? " R2" : "R1") + (dir == 0 ? " exact not monotone" : same ? " monotone" : " oscillates");
        }
        report("model c scan: ctmqc reflection monotone where exact is", ok, d);
    }
    {
        const auto& f = figure("b", 16.0);
        const double dev = std::abs(f.ctmqc.population[0] - f.exact.population[0]);
        const double s16 = scan_b.deviation(16.0);
        const double s30 = scan_b.deviation(30.0);
        report("model b: ctmqc deviates from exact at k0=16 (> 0.05), scan improves above k0=26",
               dev > 0.05 && s30 < s16,
               "k0=16 final population deviation " + fmt(dev, 3) + "; scan " + scan_detail(scan_b));
    }
    {
        const double w = scan_d_wide.worst();
        report("model d scan (sigma = 100/k0): mismatch with exact reproduced (> 0.10)", w > 0.10,
               scan_detail(scan_d_wide));
    }
    {
        bool ok = true;
        std::string d;
        for (const auto& f : figures) {
            if (f.kind == "b") continue;
            const double rms = tdpes_rms(f.exact, f.ctmqc, config(f.kind, f.k0).grid);
            ok = ok && rms < 0.005;
            d += f.kind + " k0=" + fmt(f.k0) + " t=" + fmt(f.snapshot) + ": " + fmt(rms, 2) + "  ";
        }
        report("tdpes: trajectory sum rho_ll eps_l within 0.005 hartree RMS of exact eps_GI", ok, d);
    }

    const double minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
    std::printf("acceptance: %d failing criterion(s), %.1f min\n", failures, minutes);
    return failures ? 1 : 0;
}
