#pragma once

/**
 * @file controller.hpp
 * @brief Per-node sliding-based proportional release law and its feasibility test.
 *
 *   s = dy/dt + lambda y
 *
 *   u = (1 - y/y_cut) u_c            if s > s_c     and y < y_cut
 *     = (1 - y/y_cut) (s/s_c) u_c    if 0 <= s <= s_c and y < y_cut
 *     = 0                            otherwise
 *
 * The reaching condition s ds/dt <= -eta s holds for s > s_c whenever
 *
 *   (1 - y_bar/y_cut) u_c >= (eta + f_bar + lambda_bar g_bar) / b_ss.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "spdenp/config.hpp"
#include "spdenp/errors.hpp"
#include "spdenp/transport.hpp"
#include "spdenp/wall_model.hpp"

namespace spdenp {

enum class SensorMode { Exact, BackwardDifference };

/// Hold evaluates the law once per update interval. Implicit evaluates it at
/// the predicted end-of-interval surface value (see implicit_release).
enum class Discretization { Implicit, Hold };

struct ControllerParams {
    double lambda = 1e-5;        ///< [1/s]
    double lambda_bar = 1.2e-5;  ///< [1/s]
    double eta = 1e-15;          ///< [mg/(dL s)]
    double s_margin = 1e-10;     ///< s_c [mg/(dL s)]
    double u_max = 200.0;        ///< u_c [molecules/s]
    double y_cutoff = 160.0;     ///< [mg/dL]
    double eval_fraction_ldl = 0.1;
    double eval_fraction_drug = 0.1;
    std::size_t range_start = 0;  ///< 1-based, 0 = rule default
    std::size_t range_end = 0;    ///< 1-based, 0 = rule default
    SensorMode sensor_mode = SensorMode::Exact;
    double sensor_noise_ldl = 0.0;
    double sensor_noise_rate = 0.0;
    double update_interval = 5.0;  ///< [s]
    Discretization discretization = Discretization::Implicit;

    void validate() const {
        if (!(lambda > 0.0)) throw ParameterError("controller.lambda must be positive");
        if (!(lambda_bar >= lambda)) throw ParameterError("controller.lambda_bar must be >= controller.lambda");
        if (!(eta > 0.0)) throw ParameterError("controller.eta must be positive");
        if (!(s_margin > 0.0)) throw ParameterError("controller.s_margin must be positive");
        if (!(u_max >= 0.0)) throw ParameterError("controller.u_max must be non-negative");
        if (!(y_cutoff > 0.0)) throw ParameterError("controller.y_cutoff must be positive");
        if (!(sensor_noise_ldl >= 0.0) || !(sensor_noise_rate >= 0.0))
            throw ParameterError("sensor noise standard deviations must be non-negative");
        if (!(update_interval > 0.0)) throw ParameterError("controller.update_interval must be positive");
    }
};

inline ControllerParams controller_params_from(const ParamSet& p) {
    ControllerParams c;
    c.lambda = p.real("controller.lambda");
    c.lambda_bar = p.real("controller.lambda_bar");
    c.eta = p.real("controller.eta");
    c.s_margin = p.real("controller.s_margin");
    c.u_max = p.real("controller.u_max");
    c.y_cutoff = p.real("controller.y_cutoff");
    c.eval_fraction_ldl = p.real("controller.eval_fraction_ldl");
    c.eval_fraction_drug = p.real("controller.eval_fraction_drug");
    const auto rs = p.integer("controller.range_start"), re = p.integer("controller.range_end");
    if (rs < 0 || re < 0) throw ConfigError("controller.range_start/range_end must be >= 0");
    c.range_start = static_cast<std::size_t>(rs);
    c.range_end = static_cast<std::size_t>(re);
    const std::string& mode = p.text("controller.sensor_mode");
    if (mode == "exact")
        c.sensor_mode = SensorMode::Exact;
    else if (mode == "backward")
        c.sensor_mode = SensorMode::BackwardDifference;
    else
        throw ConfigError("controller.sensor_mode must be 'exact' or 'backward', got '" + mode + "'");
    c.sensor_noise_ldl = p.real("controller.sensor_noise_ldl");
    c.sensor_noise_rate = p.real("controller.sensor_noise_rate");
    c.update_interval = p.real("controller.update_interval");
    const std::string& disc = p.text("controller.discretization");
    if (disc == "implicit")
        c.discretization = Discretization::Implicit;
    else if (disc == "hold")
        c.discretization = Discretization::Hold;
    else
        throw ConfigError("controller.discretization must be 'implicit' or 'hold', got '" + disc + "'");
    c.validate();
    return c;
}

struct SensorReading {
    double y = 0.0;     ///< [mg/dL]
    double dydt = 0.0;  ///< [mg/(dL s)]
};

inline double sliding_surface(const SensorReading& r, double lambda) { return r.dydt + lambda * r.y; }

/// Smoothed release law; total, and always within [0, u_max].
inline double control_law(double y, double s, const ControllerParams& p) {
    if (!(y < p.y_cutoff) || !(s >= 0.0)) return 0.0;
    const double bias = 1.0 - y / p.y_cutoff;
    const double scale = s > p.s_margin ? 1.0 : s / p.s_margin;
    return std::clamp(bias * scale * p.u_max, 0.0, p.u_max);
}

/**
 * @brief Release rate held over one update interval `dt`, given the predicted
 * input-free surface value `s_free` at the end of the interval.
 *
 * With s+ = s_free - dt b u inside the law, u = ubar min(1, s+/s_c) for
 * s+ >= 0, the fixed point has the closed form below. Holding the law at the
 * start-of-interval s instead overshoots whenever dt b ubar >> s_c, which is
 * the case for the published s_c.
 */
inline double release_for_prediction(double y, double s_free, double b, double dt, const ControllerParams& p) {
    if (!(y < p.y_cutoff)) return 0.0;
    const double ubar = std::clamp((1.0 - y / p.y_cutoff) * p.u_max, 0.0, p.u_max);
    const double gain = dt * b * ubar;
    if (!(s_free > 0.0)) return 0.0;
    if (s_free >= p.s_margin + gain) return ubar;
    return ubar * (s_free / (p.s_margin + gain));
}

/// Model prediction s_free = s + dt (f + lambda g).
inline double implicit_release(double y, double s, const IoDynamics& io, double dt, const ControllerParams& p) {
    return release_for_prediction(y, s + dt * (io.f + p.lambda * io.g), io.b, dt, p);
}

/**
 * Time-delay prediction: the input-free change of s over the last interval,
 * (s - s_prev) + dt b u_prev, is assumed to repeat. Averages out drift
 * components much faster than `dt`, which the instantaneous f does not.
 */
inline double delayed_release(double y, double s, double s_prev, double u_prev, double b, double dt,
                              const ControllerParams& p) {
    return release_for_prediction(y, 2.0 * s - s_prev + dt * b * u_prev, b, dt, p);
}

/// b at steady nanoparticle load, evaluated at (y*, z*).
inline double b_steady(const ReactionKinetics& kinetics, const EnvironmentParams& env, double n_ss, double y_eval,
                       double z_eval) {
    if (!(n_ss >= 0.0)) throw UsageError("b_steady: steady nanoparticle concentration must be non-negative");
    return env.source_gain() * reaction_partials(kinetics.ldl_loss, y_eval, z_eval).d_drug * n_ss;
}

/// Per-node simulated upper bounds; vectors are indexed by 0-based node.
struct BoundEstimates {
    std::vector<double> f_bar, g_bar, y_bar, z_bar, b_ss;
    std::string provenance;

    std::size_t size() const { return f_bar.size(); }
};

/// 0-based half-open node range.
struct NodeRange {
    std::size_t first = 0;
    std::size_t last = 0;
};

/// Middle of the endothelium through the end of the first quarter of the media
/// unless overridden (1-based overrides in the parameters).
inline NodeRange default_node_range(const Mesh& mesh, const ControllerParams& p) {
    const std::size_t endo = mesh.layer_end[0];
    const std::size_t media = mesh.layer_end[3] - mesh.layer_end[2];
    std::size_t start = p.range_start ? p.range_start : (endo + 1) / 2;           // ceil(L1 / 2h)
    std::size_t end = p.range_end ? p.range_end : mesh.layer_end[2] + (media + 3) / 4;  // + ceil(L4 / 4h)
    start = std::max<std::size_t>(start, 1);
    end = std::min(end, mesh.node_count());
    if (start > end) throw ConfigError("controller.range_start exceeds controller.range_end");
    return {start - 1, end};
}

enum class NodeStatus { Pass, Fail, ZeroGain, AboveCutoff };

inline const char* to_string(NodeStatus s) {
    switch (s) {
        case NodeStatus::Pass: return "pass";
        case NodeStatus::Fail: return "fail";
        case NodeStatus::ZeroGain: return "zero_gain";
        case NodeStatus::AboveCutoff: return "above_cutoff";
    }
    return "?";
}

struct FeasibilityRow {
    std::size_t node = 0;  ///< 0-based
    double required_uc = 0.0;
    NodeStatus status = NodeStatus::Fail;
};

struct FeasibilityReport {
    std::vector<FeasibilityRow> rows;
    double max_required = 0.0;      ///< over nodes with a finite requirement
    std::size_t infeasible_nodes = 0;  ///< zero gain or above cutoff
    bool pass = false;
};

/**
 * @brief Required u_c per node and the pass/fail verdict for `params.u_max`.
 *
 * Nodes whose LDL bound reaches the cutoff never release drug and nodes with
 * zero steady gain cannot be driven; both are reported, not checked.
 */
inline FeasibilityReport min_feasible_uc(const BoundEstimates& bounds, const ControllerParams& params,
                                         NodeRange range) {
    if (range.last > bounds.size() || range.first >= range.last) throw UsageError("feasibility node range invalid");
    FeasibilityReport rep;
    bool any_checked = false;
    for (std::size_t j = range.first; j < range.last; ++j) {
        FeasibilityRow row;
        row.node = j;
        const double headroom = 1.0 - bounds.y_bar[j] / params.y_cutoff;
        if (!(headroom > 0.0)) {
            row.status = NodeStatus::AboveCutoff;
            row.required_uc = std::numeric_limits<double>::infinity();
            ++rep.infeasible_nodes;
        } else if (!(bounds.b_ss[j] > 0.0)) {
            row.status = NodeStatus::ZeroGain;
            row.required_uc = std::numeric_limits<double>::infinity();
            ++rep.infeasible_nodes;
        } else {
            row.required_uc =
                (params.eta + bounds.f_bar[j] + params.lambda_bar * bounds.g_bar[j]) / (bounds.b_ss[j] * headroom);
            row.status = params.u_max >= row.required_uc ? NodeStatus::Pass : NodeStatus::Fail;
            rep.max_required = any_checked ? std::max(rep.max_required, row.required_uc) : row.required_uc;
            any_checked = true;
        }
        rep.rows.push_back(row);
    }
    rep.pass = any_checked && params.u_max >= rep.max_required;
    return rep;
}

/**
 * @brief Abstract nanoparticle sensor at one node.
 *
 * Exact mode reads dy/dt from the model right-hand side. Backward mode
 * differences against `previous`, taken `dt_est` seconds earlier.
 */
inline SensorReading sense(const TransportModel& model, const SystemState& now, const SystemState* previous,
                           std::size_t node, double dt_est, const ControllerParams& params,
                           std::mt19937_64* noise = nullptr) {
    SensorReading r;
    r.y = now.ldl[node];
    if (params.sensor_mode == SensorMode::Exact || previous == nullptr) {
        r.dydt = detail::ldl_rate_at(model, now, node);
    } else {
        if (!(dt_est > 0.0)) throw UsageError("sense: backward difference needs dt_est > 0");
        r.dydt = (now.ldl[node] - previous->ldl[node]) / dt_est;
    }
    if (noise != nullptr && (params.sensor_noise_ldl > 0.0 || params.sensor_noise_rate > 0.0)) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        r.y += params.sensor_noise_ldl * gauss(*noise);
        r.dydt += params.sensor_noise_rate * gauss(*noise);
    }
    return r;
}

}  // namespace spdenp
