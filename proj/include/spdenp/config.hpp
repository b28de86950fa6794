#pragma once

/**
 * @file config.hpp
 * @brief Line-based `key = value` parameter files with a fixed key schema.
 *
 * Format:
 *   # comment
 *   #@ provenance note (kept and printed by the CLI)
 *   ldl.layer2.diffusivity = 5.4e-12
 *
 * Every key must appear in param_schema(); unknown keys, duplicate keys and
 * values that do not parse as the key's kind are ConfigErrors naming the key.
 */

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "spdenp/errors.hpp"

namespace spdenp {

enum class ValueKind { Real, Integer, Boolean, Text };

struct ParamSpec {
    std::string key;
    ValueKind kind;
    std::string_view units;
    std::string_view description;
};

namespace detail {

inline std::vector<ParamSpec> build_schema() {
    std::vector<ParamSpec> s;
    const char* layer_names[] = {"endothelium", "intima", "IEL", "media"};
    for (int k = 1; k <= 4; ++k)
        s.push_back({"geometry.layer" + std::to_string(k) + ".length", ValueKind::Real, "m", layer_names[k - 1]});
    s.push_back({"geometry.mesh_size", ValueKind::Real, "m", "lumped mesh spacing h_r"});
    s.push_back({"geometry.symmetric_interfaces", ValueKind::Boolean, "-",
                 "also apply mixed-diffusivity rows at the last endothelium and IEL nodes"});

    s.push_back({"env.filtration_velocity", ValueKind::Real, "m/s", "radial filtration velocity, lumen to media"});
    s.push_back({"env.drug_molecule_mass", ValueKind::Real, "ug/molecule", "mass of one drug molecule"});
    s.push_back({"env.denp_mass_ratio", ValueKind::Real, "-", "nanoparticle mass / drug molecule mass"});
    s.push_back({"env.lumen_ldl", ValueKind::Real, "mg/dL", "lumen LDL concentration"});
    s.push_back({"env.lumen_drug", ValueKind::Real, "ug/mL", "lumen drug concentration (must be 0)"});
    s.push_back({"env.lumen_denp", ValueKind::Real, "ug/mL", "lumen nanoparticle concentration"});

    for (const char* sp : {"ldl", "drug", "denp"}) {
        for (int k = 1; k <= 4; ++k) {
            const std::string base = std::string(sp) + ".layer" + std::to_string(k) + ".";
            s.push_back({base + "reflection", ValueKind::Real, "-", "filtration reflection coefficient in [0,1]"});
            s.push_back({base + "diffusivity", ValueKind::Real, "m^2/s", "effective diffusivity"});
            s.push_back({base + "reaction", ValueKind::Real, "1/s", "first-order reaction coefficient"});
        }
    }

    s.push_back({"kinetics.ldl_loss.rate", ValueKind::Real, "1/((ug/mL)^bz (mg/dL)^(by-1) s)",
                 "LDL consumption R_y = rate * y^by * z^bz"});
    s.push_back({"kinetics.ldl_loss.ldl_exponent", ValueKind::Integer, "-", "by"});
    s.push_back({"kinetics.ldl_loss.drug_exponent", ValueKind::Integer, "-", "bz"});
    s.push_back({"kinetics.drug_loss.rate", ValueKind::Real, "1/((mg/dL)^by (ug/mL)^(bz-1) s)",
                 "drug consumption R_z = rate * y^by * z^bz"});
    s.push_back({"kinetics.drug_loss.ldl_exponent", ValueKind::Integer, "-", "by"});
    s.push_back({"kinetics.drug_loss.drug_exponent", ValueKind::Integer, "-", "bz"});

    s.push_back({"controller.lambda", ValueKind::Real, "1/s", "sliding surface slope"});
    s.push_back({"controller.lambda_bar", ValueKind::Real, "1/s", "upper bound of lambda in hardware"});
    s.push_back({"controller.eta", ValueKind::Real, "mg/(dL s)", "reaching margin"});
    s.push_back({"controller.s_margin", ValueKind::Real, "mg/(dL s)", "marginal layer width s_c"});
    s.push_back({"controller.u_max", ValueKind::Real, "molecules/s", "maximum release rate u_c"});
    s.push_back({"controller.y_cutoff", ValueKind::Real, "mg/dL", "no release at or above this LDL level"});
    s.push_back({"controller.eval_fraction_ldl", ValueKind::Real, "-",
                 "b_ss evaluation point, fraction of the LDL upper bound"});
    s.push_back({"controller.eval_fraction_drug", ValueKind::Real, "-",
                 "b_ss evaluation point, fraction of the drug upper bound"});
    s.push_back({"controller.range_start", ValueKind::Integer, "node",
                 "first node checked for feasibility (1-based, 0 = middle of endothelium)"});
    s.push_back({"controller.range_end", ValueKind::Integer, "node",
                 "last node checked for feasibility (1-based, 0 = end of first quarter of media)"});
    s.push_back({"controller.sensor_mode", ValueKind::Text, "-", "exact | backward"});
    s.push_back({"controller.sensor_noise_ldl", ValueKind::Real, "mg/dL", "std of additive LDL sensor noise"});
    s.push_back({"controller.sensor_noise_rate", ValueKind::Real, "mg/(dL s)", "std of additive dLDL/dt sensor noise"});
    s.push_back({"controller.update_interval", ValueKind::Real, "s", "zero-order-hold period of the controller"});
    s.push_back({"controller.discretization", ValueKind::Text, "-",
                 "implicit | hold: how the release law is sampled over one update interval"});

    s.push_back({"solver.scheme", ValueKind::Text, "-", "implicit | explicit"});
    s.push_back({"solver.rtol", ValueKind::Real, "-", "relative local error tolerance"});
    s.push_back({"solver.atol", ValueKind::Real, "conc.", "absolute local error tolerance"});
    s.push_back({"solver.max_step", ValueKind::Real, "s", "largest internal step"});
    s.push_back({"solver.min_step", ValueKind::Real, "s", "smallest internal step before failing"});
    s.push_back({"solver.max_rejections", ValueKind::Integer, "-", "consecutive rejected steps before failing"});
    s.push_back({"solver.refinement", ValueKind::Integer, "-", "reference mesh refinement factor rho"});

    s.push_back({"experiment.seed", ValueKind::Integer, "-", "64-bit seed for inputs, noise and sweeps"});
    s.push_back({"experiment.plant", ValueKind::Text, "-", "reference | lumped (closed-loop plant)"});
    s.push_back({"experiment.validation_horizon", ValueKind::Real, "s", "validation run length"});
    s.push_back({"experiment.validation_sample_dt", ValueKind::Real, "s", "validation sampling interval"});
    s.push_back({"experiment.control_horizon", ValueKind::Real, "s", "closed-loop run length"});
    s.push_back({"experiment.control_sample_dt", ValueKind::Real, "s", "closed-loop sampling interval"});
    s.push_back({"experiment.input_hold", ValueKind::Real, "s", "hold interval of the random test input"});
    s.push_back({"experiment.input_min", ValueKind::Real, "molecules/s", "random test input lower bound"});
    s.push_back({"experiment.input_max", ValueKind::Real, "molecules/s", "random test input upper bound"});
    s.push_back({"experiment.desired_lumen_ldl", ValueKind::Real, "mg/dL", "lumen LDL of the desired baseline"});

    s.push_back({"sweep.samples", ValueKind::Integer, "-", "Latin-hypercube sample count"});
    s.push_back({"sweep.relative_range", ValueKind::Real, "-", "multiplicative perturbation half-width in [0,1)"});
    s.push_back({"sweep.safety_factor", ValueKind::Real, "-", "inflation applied to simulated maxima"});
    s.push_back({"sweep.horizon", ValueKind::Real, "s", "length of each sweep simulation"});
    s.push_back({"sweep.sample_dt", ValueKind::Real, "s", "sampling interval for bound extraction"});
    return s;
}

inline bool parse_bool(std::string_view v, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") { out = true; return true; }
    if (v == "false" || v == "0" || v == "no" || v == "off") { out = false; return true; }
    return false;
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace detail

inline std::span<const ParamSpec> param_schema() {
    static const std::vector<ParamSpec> schema = detail::build_schema();
    return schema;
}

inline const char* to_string(ValueKind k) {
    switch (k) {
        case ValueKind::Real: return "real";
        case ValueKind::Integer: return "integer";
        case ValueKind::Boolean: return "boolean";
        case ValueKind::Text: return "text";
    }
    return "?";
}

/// Tab-separated rendering of the registry (key, kind, units, description);
/// params/schema.txt holds this text after its comment header.
inline std::string schema_text() {
    std::string out;
    for (const auto& p : param_schema()) {
        out += p.key;
        out += '\t';
        out += to_string(p.kind);
        out += '\t';
        out += p.units;
        out += '\t';
        out += p.description;
        out += '\n';
    }
    return out;
}

inline const ParamSpec* find_param(std::string_view key) {
    for (const auto& p : param_schema())
        if (p.key == key) return &p;
    return nullptr;
}

/// Validated key-value parameter set. Values keep their source spelling so
/// that echoing and re-reading is lossless.
class ParamSet {
public:
    void set(std::string_view key, std::string_view value, std::string_view origin = "override") {
        const ParamSpec* spec = find_param(key);
        if (!spec) throw ConfigError("unknown parameter key '" + std::string(key) + "' (" + std::string(origin) + ")");
        check_kind(*spec, value, origin);
        values_[std::string(key)] = std::string(value);
    }

    /// Applies a `key=value` override string.
    void apply_override(std::string_view assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
        set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)), "--set");
    }

    bool contains(std::string_view key) const { return values_.count(std::string(key)) != 0; }

    double real(std::string_view key) const {
        const std::string& v = raw(key);
        double out = 0.0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size())
            throw ConfigError("parameter '" + std::string(key) + "' is not a real number: " + v);
        return out;
    }

    std::int64_t integer(std::string_view key) const {
        const std::string& v = raw(key);
        std::int64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size())
            throw ConfigError("parameter '" + std::string(key) + "' is not an integer: " + v);
        return out;
    }

    /// Non-negative integer over the full 64-bit unsigned range (seeds).
    std::uint64_t unsigned_integer(std::string_view key) const {
        const std::string& v = raw(key);
        std::uint64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size())
            throw ConfigError("parameter '" + std::string(key) + "' is not an unsigned 64-bit integer: " + v);
        return out;
    }

    bool boolean(std::string_view key) const {
        bool out = false;
        if (!detail::parse_bool(raw(key), out))
            throw ConfigError("parameter '" + std::string(key) + "' is not a boolean: " + raw(key));
        return out;
    }

    const std::string& text(std::string_view key) const { return raw(key); }

    const std::string& raw(std::string_view key) const {
        auto it = values_.find(std::string(key));
        if (it == values_.end()) throw ConfigError("missing required parameter '" + std::string(key) + "'");
        return it->second;
    }

    /// Resolved configuration in canonical order (provenance notes, then sorted
    /// keys); parsing the echo yields an equal set.
    std::string echo() const {
        std::ostringstream os;
        for (const auto& note : provenance_) os << "#@ " << note << '\n';
        for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
        return os.str();
    }

    const std::vector<std::string>& provenance() const { return provenance_; }
    void add_provenance(std::string note) { provenance_.push_back(std::move(note)); }

    /// Every schema key must be present.
    void require_complete() const {
        for (const auto& p : param_schema())
            if (!contains(p.key)) throw ConfigError("missing required parameter '" + std::string(p.key) + "'");
    }

private:
    static void check_kind(const ParamSpec& spec, std::string_view v, std::string_view origin) {
        bool ok = true;
        switch (spec.kind) {
            case ValueKind::Real: {
                double d;
                auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
                ok = ec == std::errc{} && p == v.data() + v.size();
                break;
            }
            case ValueKind::Integer: {
                std::int64_t i;
                auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
                ok = ec == std::errc{} && p == v.data() + v.size();
                if (!ok) {
                    std::uint64_t u;
                    auto [pu, ecu] = std::from_chars(v.data(), v.data() + v.size(), u);
                    ok = ecu == std::errc{} && pu == v.data() + v.size();
                }
                break;
            }
            case ValueKind::Boolean: {
                bool b;
                ok = detail::parse_bool(v, b);
                break;
            }
            case ValueKind::Text: ok = !v.empty(); break;
        }
        if (!ok)
            throw ConfigError("invalid value '" + std::string(v) + "' for parameter '" + spec.key +
                              "' (" + std::string(origin) + ")");
    }

    std::map<std::string, std::string> values_;
    std::vector<std::string> provenance_;
};

inline ParamSet parse_params(std::istream& in, std::string_view source = "<input>") {
    ParamSet set;
    std::map<std::string, int> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view sv = detail::trim(line);
        if (sv.empty()) continue;
        if (sv.rfind("#@", 0) == 0) {
            set.add_provenance(std::string(detail::trim(sv.substr(2))));
            continue;
        }
        if (sv.front() == '#') continue;
        const auto hash = sv.find('#');
        if (hash != std::string_view::npos) sv = detail::trim(sv.substr(0, hash));
        const auto eq = sv.find('=');
        const std::string origin = std::string(source) + ":" + std::to_string(lineno);
        if (eq == std::string_view::npos) throw ConfigError(origin + ": expected 'key = value'");
        const std::string key(detail::trim(sv.substr(0, eq)));
        if (auto it = seen.find(key); it != seen.end())
            throw ConfigError(origin + ": duplicate parameter '" + key + "' (first at line " +
                              std::to_string(it->second) + ")");
        seen[key] = lineno;
        set.set(key, detail::trim(sv.substr(eq + 1)), origin);
    }
    return set;
}

inline ParamSet load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open parameter file '" + path + "'");
    return parse_params(in, path);
}

}  // namespace spdenp
