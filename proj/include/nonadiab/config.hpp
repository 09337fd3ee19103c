#pragma once

// Run description: INI-style `key = value` text with sections
// [model] [method] [initial] [output] [scan].
//
// Method-dependent defaults (dt, trajectory count) and k0-dependent ones
// (packet width, final time) stay unset after parsing and are resolved per
// method / per k0, so that a scan can reuse one template for several
// methods and momenta.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nonadiab/ctmqc.hpp"
#include "nonadiab/error.hpp"
#include "nonadiab/grid.hpp"
#include "nonadiab/models.hpp"
#include "nonadiab/observables.hpp"

namespace nonadiab {

enum class Method { Exact, Ctmqc, Ehrenfest, Tsh, Mqc };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::Exact: return "exact";
        case Method::Ctmqc: return "ctmqc";
        case Method::Ehrenfest: return "ehrenfest";
        case Method::Tsh: return "tsh";
        case Method::Mqc: return "mqc";
    }
    throw ConfigError("unknown method");
}

inline Method method_from_string(std::string_view name) {
    if (name == "exact") return Method::Exact;
    if (name == "ctmqc") return Method::Ctmqc;
    if (name == "ehrenfest") return Method::Ehrenfest;
    if (name == "tsh") return Method::Tsh;
    if (name == "mqc") return Method::Mqc;
    throw ConfigError("unknown method '" + std::string(name) + "' (exact|ctmqc|ehrenfest|tsh|mqc)");
}

enum class Sampling { Wigner, FixedMomentum };

inline std::string_view to_string(Sampling s) { return s == Sampling::Wigner ? "wigner" : "fixed_momentum"; }

inline Sampling sampling_from_string(std::string_view name) {
    if (name == "wigner") return Sampling::Wigner;
    if (name == "fixed_momentum") return Sampling::FixedMomentum;
    throw ConfigError("unknown sampling '" + std::string(name) + "' (wigner|fixed_momentum)");
}

/// Launch point of the packet per model.
inline double default_center(ModelKind kind) {
    return (kind == ModelKind::SingleAvoided || kind == ModelKind::DualAvoided) ? -8.0 : -15.0;
}

/// Default final time min(M L / k0, 5000): the initial velocity covers L
/// bohr, long enough for every branch to leave the coupling region at the
/// momenta studied, short enough to stay off the grid edges.
inline double default_final_time(const DiabaticModel& model, double k0) {
    double travel = 20.0;
    if (model.kind == ModelKind::ExtendedCoupling || model.kind == ModelKind::DoubleArch) travel = 40.0;
    return std::min(model.mass * travel / k0, 5000.0);
}

struct RunConfig {
    DiabaticModel model = DiabaticModel::defaults(ModelKind::SingleAvoided);
    Method method = Method::Ctmqc;

    // [method]
    std::optional<double> dt;       // default 0.1 exact, 0.5 trajectories
    std::optional<double> t_final;  // default default_final_time
    QuantumMomentumRegion qm_region = QuantumMomentumRegion::AllTrajectories;
    double qm_variance_scale = 2.0;
    int split_order = 4;  // exact propagator: 2 (Strang) or 4 (triple jump)
    Grid grid = Grid::defaults(ModelKind::SingleAvoided);

    // [initial]
    double k0 = 0.0;
    std::optional<double> sigma;  // explicit width; else sigma_rule / k0
    double sigma_rule = 20.0;
    double center = default_center(ModelKind::SingleAvoided);
    std::optional<std::size_t> n_traj;  // default 200, 5000 for TSH
    std::uint64_t seed = 1;
    Sampling sampling = Sampling::Wigner;
    std::size_t initial_state = 0;  // 0-based; the file uses 1-based indices

    // [output]
    std::string out_dir = "out";
    std::size_t stride = 0;  // steps between series rows; 0 = every 2 a.u.
    std::vector<double> snapshot_times;
    double bin_width = kDefaultBinWidth;
    double r_split = 0.0;
    bool write_initial = true;

    // [scan]
    std::vector<double> scan_k0;
    std::vector<Method> scan_methods{Method::Exact, Method::Ctmqc};

    bool operator==(const RunConfig&) const = default;

    double resolved_dt(Method m) const { return dt ? *dt : (m == Method::Exact ? 0.1 : 0.5); }
    std::size_t resolved_n_traj(Method m) const { return n_traj ? *n_traj : (m == Method::Tsh ? 5000 : 200); }
    double resolved_sigma() const { return sigma ? *sigma : sigma_rule / k0; }
    double resolved_t_final() const { return t_final ? *t_final : default_final_time(model, k0); }
    std::size_t resolved_stride(Method m) const {
        if (stride > 0) return stride;
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(2.0 / resolved_dt(m))));
    }
    std::size_t step_count(Method m) const {
        return static_cast<std::size_t>(std::llround(resolved_t_final() / resolved_dt(m)));
    }
    PacketShape packet() const { return {center, k0, resolved_sigma()}; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct Entry {
    std::string value;
    int line = 0;
};

class Reader {
public:
    Reader(std::string section, std::string key, Entry entry)
        : section_(std::move(section)), key_(std::move(key)), entry_(std::move(entry)) {}

    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError("line " + std::to_string(entry_.line) + ": [" + section_ + "] " + key_ + ": " + why);
    }

    const std::string& text() const { return entry_.value; }

    double real() const {
        double v = 0.0;
        const auto& s = entry_.value;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
            fail("expected a real number, got '" + s + "'");
        }
        return v;
    }

    std::uint64_t unsigned_integer() const {
        std::uint64_t v = 0;
        const auto& s = entry_.value;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
            fail("expected a non-negative integer, got '" + s + "'");
        }
        return v;
    }

    bool boolean() const {
        const auto& s = entry_.value;
        if (s == "true" || s == "yes" || s == "1") return true;
        if (s == "false" || s == "no" || s == "0") return false;
        fail("expected true/false, got '" + s + "'");
    }

    std::vector<std::string> list() const {
        std::vector<std::string> out;
        std::string_view rest = entry_.value;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const auto item = trim(rest.substr(0, comma));
            if (item.empty()) fail("empty list item");
            out.emplace_back(item);
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        return out;
    }

    std::vector<double> real_list() const {
        std::vector<double> out;
        for (const auto& item : list()) {
            Reader r(section_, key_, {item, entry_.line});
            out.push_back(r.real());
        }
        return out;
    }

    template <class Fn>
    auto convert(Fn&& fn) const {
        try {
            return fn(entry_.value);
        } catch (const ConfigError& e) {
            fail(e.what());
        }
    }

    int line() const { return entry_.line; }

private:
    std::string section_;
    std::string key_;
    Entry entry_;
};

}  // namespace detail

/// Parses and validates a run description. Errors carry the line number.
inline RunConfig parse_config(std::string_view text) {
    using detail::Entry;
    using detail::Reader;
    static const std::map<std::string, std::vector<std::string>> known{
        {"model", {"kind", "a", "b", "c", "d", "e0", "mass"}},
        {"method", {"name", "dt", "t_final", "qm_region", "qm_variance_scale", "split_order", "grid_min", "grid_max", "grid_points"}},
        {"initial", {"k0", "sigma", "sigma_rule", "center", "n_traj", "seed", "sampling", "state"}},
        {"output", {"dir", "stride", "snapshot_times", "bin_width", "r_split", "write_initial"}},
        {"scan", {"k0", "methods"}},
    };

    std::map<std::string, std::map<std::string, Entry>> entries;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "malformed section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            if (!known.contains(section)) throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside of any section");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        const auto& keys = known.at(section);
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
        }
        if (value.empty()) throw ConfigError(where + "empty value for '" + key + "'");
        auto [it, inserted] = entries[section].try_emplace(key, Entry{value, line_no});
        if (!inserted) throw ConfigError(where + "duplicate key '" + key + "' in [" + section + "]");
    }

    const auto get = [&](const std::string& sec, const std::string& key) -> std::optional<Reader> {
        const auto s = entries.find(sec);
        if (s == entries.end()) return std::nullopt;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return Reader(sec, key, k->second);
    };

    RunConfig cfg;
    if (auto r = get("model", "kind")) {
        const auto kind = r->convert([](const std::string& v) { return model_kind_from_string(v); });
        cfg.model = DiabaticModel::defaults(kind);
    } else {
        throw ConfigError("[model] kind is required");
    }
    const auto positive = [](const Reader& r) {
        const double v = r.real();
        if (!(v > 0.0)) r.fail("must be > 0");
        return v;
    };
    if (auto r = get("model", "a")) cfg.model.params.a = r->real();
    if (auto r = get("model", "b")) cfg.model.params.b = r->real();
    if (auto r = get("model", "c")) cfg.model.params.c = r->real();
    if (auto r = get("model", "d")) cfg.model.params.d = r->real();
    if (auto r = get("model", "e0")) cfg.model.params.e0 = r->real();
    if (auto r = get("model", "mass")) cfg.model.mass = positive(*r);

    if (auto r = get("method", "name")) {
        cfg.method = r->convert([](const std::string& v) { return method_from_string(v); });
    }
    if (auto r = get("method", "dt")) cfg.dt = positive(*r);
    if (auto r = get("method", "t_final")) cfg.t_final = positive(*r);
    if (auto r = get("method", "qm_region")) {
        cfg.qm_region = r->convert([](const std::string& v) { return quantum_momentum_region_from_string(v); });
    }
    if (auto r = get("method", "qm_variance_scale")) cfg.qm_variance_scale = positive(*r);
    if (auto r = get("method", "split_order")) {
        const auto order = r->unsigned_integer();
        if (order != 2 && order != 4) r->fail("split_order must be 2 or 4");
        cfg.split_order = static_cast<int>(order);
    }
    cfg.grid = Grid::defaults(cfg.model.kind);
    if (auto r = get("method", "grid_min")) cfg.grid.r_min = r->real();
    if (auto r = get("method", "grid_max")) cfg.grid.r_max = r->real();
    if (auto r = get("method", "grid_points")) cfg.grid.points = r->unsigned_integer();
    try {
        cfg.grid.validate();
    } catch (const ConfigError& e) {
        auto r = get("method", "grid_points");
        if (!r) r = get("method", "grid_max");
        if (r) r->fail(e.what());
        throw;
    }

    if (auto r = get("initial", "k0")) {
        cfg.k0 = positive(*r);
    } else if (!get("scan", "k0")) {
        throw ConfigError("[initial] k0 is required");
    }
    if (auto r = get("initial", "sigma")) cfg.sigma = positive(*r);
    if (auto r = get("initial", "sigma_rule")) cfg.sigma_rule = positive(*r);
    cfg.center = default_center(cfg.model.kind);
    if (auto r = get("initial", "center")) cfg.center = r->real();
    if (auto r = get("initial", "n_traj")) {
        cfg.n_traj = r->unsigned_integer();
        if (*cfg.n_traj < 1) r->fail("must be >= 1");
    }
    if (auto r = get("initial", "seed")) cfg.seed = r->unsigned_integer();
    if (auto r = get("initial", "sampling")) {
        cfg.sampling = r->convert([](const std::string& v) { return sampling_from_string(v); });
    }
    if (auto r = get("initial", "state")) {
        const auto s = r->unsigned_integer();
        if (s < 1 || s > 2) r->fail("must be 1 or 2");
        cfg.initial_state = s - 1;
    }

    if (auto r = get("output", "dir")) cfg.out_dir = r->text();
    if (auto r = get("output", "stride")) {
        cfg.stride = r->unsigned_integer();
        if (cfg.stride < 1) r->fail("must be >= 1");
    }
    if (auto r = get("output", "snapshot_times")) {
        cfg.snapshot_times = r->real_list();
        for (double t : cfg.snapshot_times)
            if (t < 0.0) r->fail("snapshot times must be >= 0");
    }
    if (auto r = get("output", "bin_width")) cfg.bin_width = positive(*r);
    if (auto r = get("output", "r_split")) cfg.r_split = r->real();
    if (auto r = get("output", "write_initial")) cfg.write_initial = r->boolean();

    if (auto r = get("scan", "k0")) {
        cfg.scan_k0 = r->real_list();
        for (double k : cfg.scan_k0)
            if (!(k > 0.0)) r->fail("scan momenta must be > 0");
    }
    if (auto r = get("scan", "methods")) {
        cfg.scan_methods.clear();
        for (const auto& name : r->list()) {
            cfg.scan_methods.push_back(r->convert([&](const std::string&) { return method_from_string(name); }));
        }
    }
    return cfg;
}

/// Canonical text form; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& cfg) {
    using detail::format_double;
    std::ostringstream os;
    const auto join = [](const auto& values, auto&& fmt) {
        std::string s;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) s += ", ";
            s += fmt(values[i]);
        }
        return s;
    };
    os << "[model]\n";
    os << "kind = " << to_string(cfg.model.kind) << "\n";
    os << "a = " << format_double(cfg.model.params.a) << "\n";
    os << "b = " << format_double(cfg.model.params.b) << "\n";
    os << "c = " << format_double(cfg.model.params.c) << "\n";
    os << "d = " << format_double(cfg.model.params.d) << "\n";
    os << "e0 = " << format_double(cfg.model.params.e0) << "\n";
    os << "mass = " << format_double(cfg.model.mass) << "\n";
    os << "\n[method]\n";
    os << "name = " << to_string(cfg.method) << "\n";
    if (cfg.dt) os << "dt = " << format_double(*cfg.dt) << "\n";
    if (cfg.t_final) os << "t_final = " << format_double(*cfg.t_final) << "\n";
    os << "qm_region = " << to_string(cfg.qm_region) << "\n";
    os << "qm_variance_scale = " << format_double(cfg.qm_variance_scale) << "\n";
    os << "split_order = " << cfg.split_order << "\n";
    os << "grid_min = " << format_double(cfg.grid.r_min) << "\n";
    os << "grid_max = " << format_double(cfg.grid.r_max) << "\n";
    os << "grid_points = " << cfg.grid.points << "\n";
    os << "\n[initial]\n";
    if (cfg.k0 > 0.0) os << "k0 = " << format_double(cfg.k0) << "\n";
    if (cfg.sigma) os << "sigma = " << format_double(*cfg.sigma) << "\n";
    os << "sigma_rule = " << format_double(cfg.sigma_rule) << "\n";
    os << "center = " << format_double(cfg.center) << "\n";
    if (cfg.n_traj) os << "n_traj = " << *cfg.n_traj << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "sampling = " << to_string(cfg.sampling) << "\n";
    os << "state = " << cfg.initial_state + 1 << "\n";
    os << "\n[output]\n";
    os << "dir = " << cfg.out_dir << "\n";
    if (cfg.stride) os << "stride = " << cfg.stride << "\n";
    if (!cfg.snapshot_times.empty()) os << "snapshot_times = " << join(cfg.snapshot_times, format_double) << "\n";
    os << "bin_width = " << format_double(cfg.bin_width) << "\n";
    os << "r_split = " << format_double(cfg.r_split) << "\n";
    os << "write_initial = " << (cfg.write_initial ? "true" : "false") << "\n";
    os << "\n[scan]\n";
    if (!cfg.scan_k0.empty()) os << "k0 = " << join(cfg.scan_k0, format_double) << "\n";
    os << "methods = " << join(cfg.scan_methods, [](Method m) { return std::string(to_string(m)); }) << "\n";
    return os.str();
}

/// 64-bit FNV-1a of the canonical text; tags outputs with their config.
inline std::uint64_t config_hash(const RunConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : serialize_config(cfg)) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

}  // namespace nonadiab
