#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mfsg/errors.hpp"
#include "mfsg/time_grid.hpp"
#include "mfsg/trajectory.hpp"

namespace mfsg {

/// A real coefficient of time: a constant, or a piecewise-constant table
/// `t0:v0, t1:v1, ...` held constant between breakpoints. Step functions are
/// taken left-continuous: value(t) = v_j on (t_j, t_{j+1}].
class Coefficient {
  public:
    Coefficient() = default;
    explicit Coefficient(double c) : constant_(c) {}
    Coefficient(std::vector<double> ts, std::vector<double> vs)
        : times_(std::move(ts)), values_(std::move(vs)) {}

    double operator()(double t) const {
        if (times_.empty()) return constant_;
        std::size_t j = 0;
        while (j + 1 < times_.size() && t > times_[j + 1]) ++j;
        return values_[j];
    }

    bool is_table() const { return !times_.empty(); }
    double constant_value() const { return constant_; }
    const std::vector<double>& breakpoints() const { return times_; }
    const std::vector<double>& table_values() const { return values_; }

  private:
    double constant_ = 0.0;
    std::vector<double> times_;
    std::vector<double> values_;
};

struct ModelCoefficients {
    // leader dynamics
    Coefficient A0, B0, C0, D0, E0, F0, Ct0, Dt0, Ft0, b0, sigma0, sigmat0;
    // follower dynamics
    Coefficient A1, B1, C1, D1, E1, F1, Ct1, Dt1, Ft1, b1, sigma1, sigmat1;
    // costs
    Coefficient Q0, R0, Q1, R1;
    double G0 = 0.0, G1 = 0.0;
    double lambda = 0.0;
    // initial data / horizon
    double xi = 0.0, xi0 = 0.0;
    double T = 1.0;
};

struct SimSettings {
    int steps = 1000;
    int agents_N = 300;
    int mc_paths = 200;
    std::uint64_t seed = 1;
    bool faithful_typos = false;
    bool euler_mode = false;
    bool record_paths = true;
};

struct LoadedConfig {
    ModelCoefficients model;
    TimeGrid grid;
    SimSettings sim;
};

/// Verdicts of the checkable standing conditions. The weight positivity and
/// the two solvability conditions (boundary-value determinant, effective
/// control weight) gate the pipeline; the coupling-source sign is a
/// sufficient-only condition and is reported without gating.
struct AssumptionReport {
    static constexpr double tol_r = 1e-12;
    static constexpr double tol_det = 1e-8;
    static constexpr double tol_r0 = 1e-12;
    static constexpr double tol_coupling = -1e-10;

    bool weights_ok = false;
    double weights_first_violation = -1.0;  // grid time, -1 when none
    std::string weights_what;

    bool coupling_ok = false;               // filled by follower synthesis
    double coupling_first_violation = -1.0;
    double coupling_min = 0.0;

    bool bvp_ok = false;     // filled by follower synthesis
    double bvp_det = 0.0;    // terminal (3,3) entry of the fundamental matrix

    bool r0_ok = false;      // filled by leader synthesis
    double r0_min = 0.0;

    bool required_pass() const { return weights_ok && bvp_ok && r0_ok; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) throw non_numeric(key, text);
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        throw non_numeric(key, text);
    }
    if (pos != t.size() || !std::isfinite(v)) throw non_numeric(key, text);
    return v;
}

inline Coefficient parse_coefficient(const std::string& key, const std::string& raw) {
    const std::string t = trim(raw);
    if (t.rfind("table:", 0) != 0) return Coefficient(parse_number(key, t));

    std::vector<double> ts, vs;
    std::stringstream ss(t.substr(6));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string entry = trim(item);
        if (entry.empty()) throw malformed_table(key, "empty entry");
        const auto colon = entry.find(':');
        if (colon == std::string::npos) throw malformed_table(key, "entry without ':'");
        ts.push_back(parse_number(key, entry.substr(0, colon)));
        vs.push_back(parse_number(key, entry.substr(colon + 1)));
    }
    if (ts.empty()) throw malformed_table(key, "no entries");
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (!(ts[i] > ts[i - 1])) throw malformed_table(key, "unsorted breakpoints");
    return Coefficient(std::move(ts), std::move(vs));
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string coefficient_to_string(const Coefficient& c) {
    if (!c.is_table()) return format_double(c.constant_value());
    std::string out = "table: ";
    for (std::size_t i = 0; i < c.breakpoints().size(); ++i) {
        if (i) out += ", ";
        out += format_double(c.breakpoints()[i]) + ":" + format_double(c.table_values()[i]);
    }
    return out;
}

}  // namespace detail

inline const std::vector<std::string>& coefficient_keys() {
    static const std::vector<std::string> keys = {
        "A0", "B0", "C0", "D0", "E0", "F0", "Ct0", "Dt0", "Ft0", "b0", "sigma0", "sigmat0",
        "A1", "B1", "C1", "D1", "E1", "F1", "Ct1", "Dt1", "Ft1", "b1", "sigma1", "sigmat1",
        "Q0", "R0", "Q1", "R1"};
    return keys;
}

/// Parse a flat `key = value` config document.
inline LoadedConfig load_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::string l = detail::trim(line);
        if (l.empty()) continue;
        const auto eq = l.find('=');
        if (eq == std::string::npos)
            throw ConfigError(ConfigError::Kind::malformed_table, l, "line without '=': " + l);
        kv[detail::trim(l.substr(0, eq))] = detail::trim(l.substr(eq + 1));
    }

    LoadedConfig cfg;
    auto take = [&kv](const std::string& key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end()) throw missing_key(key);
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto take_optional = [&kv](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };

    Coefficient* slots[] = {&cfg.model.A0, &cfg.model.B0, &cfg.model.C0,  &cfg.model.D0,
                            &cfg.model.E0, &cfg.model.F0, &cfg.model.Ct0, &cfg.model.Dt0,
                            &cfg.model.Ft0, &cfg.model.b0, &cfg.model.sigma0, &cfg.model.sigmat0,
                            &cfg.model.A1, &cfg.model.B1, &cfg.model.C1,  &cfg.model.D1,
                            &cfg.model.E1, &cfg.model.F1, &cfg.model.Ct1, &cfg.model.Dt1,
                            &cfg.model.Ft1, &cfg.model.b1, &cfg.model.sigma1, &cfg.model.sigmat1,
                            &cfg.model.Q0, &cfg.model.R0, &cfg.model.Q1,  &cfg.model.R1};
    const auto& keys = coefficient_keys();
    for (std::size_t i = 0; i < keys.size(); ++i)
        *slots[i] = detail::parse_coefficient(keys[i], take(keys[i]));

    cfg.model.G0 = detail::parse_number("G0", take("G0"));
    cfg.model.G1 = detail::parse_number("G1", take("G1"));
    cfg.model.lambda = detail::parse_number("lambda", take("lambda"));
    cfg.model.xi = detail::parse_number("xi", take("xi"));
    cfg.model.xi0 = detail::parse_number("xi0", take("xi0"));
    cfg.model.T = detail::parse_number("T_horizon", take("T_horizon"));
    if (!(cfg.model.T > 0.0))
        throw ConfigError(ConfigError::Kind::negative_horizon, "T_horizon",
                          "horizon must be positive");

    auto parse_int = [](const std::string& key, const std::string& v) {
        const double d = detail::parse_number(key, v);
        const int i = static_cast<int>(d);
        if (static_cast<double>(i) != d || i <= 0) throw non_numeric(key, v);
        return i;
    };
    auto parse_bool = [](const std::string& key, const std::string& v) {
        const std::string t = detail::trim(v);
        if (t == "true" || t == "1") return true;
        if (t == "false" || t == "0") return false;
        throw non_numeric(key, v);
    };

    if (auto v = take_optional("steps")) cfg.sim.steps = parse_int("steps", *v);
    if (auto v = take_optional("agents_N")) cfg.sim.agents_N = parse_int("agents_N", *v);
    if (auto v = take_optional("mc_paths")) cfg.sim.mc_paths = parse_int("mc_paths", *v);
    if (auto v = take_optional("seed")) {
        const double d = detail::parse_number("seed", *v);
        if (d < 0.0 || d != std::floor(d)) throw non_numeric("seed", *v);
        cfg.sim.seed = static_cast<std::uint64_t>(d);
    }
    if (auto v = take_optional("faithful_typos"))
        cfg.sim.faithful_typos = parse_bool("faithful_typos", *v);
    if (auto v = take_optional("euler_mode")) cfg.sim.euler_mode = parse_bool("euler_mode", *v);
    if (auto v = take_optional("record_paths"))
        cfg.sim.record_paths = parse_bool("record_paths", *v);

    if (!kv.empty())
        throw ConfigError(ConfigError::Kind::unknown_key, kv.begin()->first,
                          "unknown key: " + kv.begin()->first);

    cfg.grid = TimeGrid{cfg.model.T, cfg.sim.steps};
    return cfg;
}

/// Inverse of load_config (round-trip exact at grid nodes).
inline std::string to_config_text(const ModelCoefficients& m, const SimSettings& s) {
    const Coefficient* slots[] = {&m.A0, &m.B0, &m.C0,  &m.D0,  &m.E0, &m.F0, &m.Ct0,
                                  &m.Dt0, &m.Ft0, &m.b0, &m.sigma0, &m.sigmat0,
                                  &m.A1, &m.B1, &m.C1,  &m.D1,  &m.E1, &m.F1, &m.Ct1,
                                  &m.Dt1, &m.Ft1, &m.b1, &m.sigma1, &m.sigmat1,
                                  &m.Q0, &m.R0, &m.Q1,  &m.R1};
    std::string out;
    const auto& keys = coefficient_keys();
    for (std::size_t i = 0; i < keys.size(); ++i)
        out += keys[i] + " = " + detail::coefficient_to_string(*slots[i]) + "\n";
    out += "G0 = " + detail::format_double(m.G0) + "\n";
    out += "G1 = " + detail::format_double(m.G1) + "\n";
    out += "lambda = " + detail::format_double(m.lambda) + "\n";
    out += "xi = " + detail::format_double(m.xi) + "\n";
    out += "xi0 = " + detail::format_double(m.xi0) + "\n";
    out += "T_horizon = " + detail::format_double(m.T) + "\n";
    out += "steps = " + std::to_string(s.steps) + "\n";
    out += "agents_N = " + std::to_string(s.agents_N) + "\n";
    out += "mc_paths = " + std::to_string(s.mc_paths) + "\n";
    out += "seed = " + std::to_string(s.seed) + "\n";
    out += std::string("faithful_typos = ") + (s.faithful_typos ? "true" : "false") + "\n";
    out += std::string("euler_mode = ") + (s.euler_mode ? "true" : "false") + "\n";
    out += std::string("record_paths = ") + (s.record_paths ? "true" : "false") + "\n";
    return out;
}

/// Weight positivity / sign conditions on the cost data, checked per node.
inline AssumptionReport check_standing_assumptions(const ModelCoefficients& m,
                                                   const TimeGrid& grid) {
    AssumptionReport rep;
    rep.weights_ok = true;
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.t(k);
        const char* what = nullptr;
        if (m.Q0(t) < 0.0) what = "Q0 < 0";
        else if (m.Q1(t) < 0.0) what = "Q1 < 0";
        else if (m.R0(t) < AssumptionReport::tol_r) what = "R0 not strictly positive";
        else if (m.R1(t) < AssumptionReport::tol_r) what = "R1 not strictly positive";
        if (what) {
            rep.weights_ok = false;
            rep.weights_first_violation = t;
            rep.weights_what = what;
            break;
        }
    }
    if (rep.weights_ok && m.G0 < 0.0) {
        rep.weights_ok = false;
        rep.weights_what = "G0 < 0";
    }
    if (rep.weights_ok && m.G1 < 0.0) {
        rep.weights_ok = false;
        rep.weights_what = "G1 < 0";
    }
    return rep;
}

/// All coefficients sampled at grid nodes, for the hot simulation loops.
struct SampledModel {
    std::vector<double> A0, B0, C0, D0, E0, F0, Ct0, Dt0, Ft0, b0, sigma0, sigmat0;
    std::vector<double> A1, B1, C1, D1, E1, F1, Ct1, Dt1, Ft1, b1, sigma1, sigmat1;
    std::vector<double> Q0, R0, Q1, R1;

    static SampledModel build(const ModelCoefficients& m, const TimeGrid& g) {
        SampledModel s;
        auto fill = [&g](std::vector<double>& dst, const Coefficient& c) {
            dst.resize(static_cast<std::size_t>(g.nodes()));
            for (int k = 0; k <= g.steps; ++k) dst[static_cast<std::size_t>(k)] = c(g.t(k));
        };
        fill(s.A0, m.A0); fill(s.B0, m.B0); fill(s.C0, m.C0); fill(s.D0, m.D0);
        fill(s.E0, m.E0); fill(s.F0, m.F0); fill(s.Ct0, m.Ct0); fill(s.Dt0, m.Dt0);
        fill(s.Ft0, m.Ft0); fill(s.b0, m.b0); fill(s.sigma0, m.sigma0); fill(s.sigmat0, m.sigmat0);
        fill(s.A1, m.A1); fill(s.B1, m.B1); fill(s.C1, m.C1); fill(s.D1, m.D1);
        fill(s.E1, m.E1); fill(s.F1, m.F1); fill(s.Ct1, m.Ct1); fill(s.Dt1, m.Dt1);
        fill(s.Ft1, m.Ft1); fill(s.b1, m.b1); fill(s.sigma1, m.sigma1); fill(s.sigmat1, m.sigmat1);
        fill(s.Q0, m.Q0); fill(s.R0, m.R0); fill(s.Q1, m.Q1); fill(s.R1, m.R1);
        return s;
    }
};

}  // namespace mfsg
