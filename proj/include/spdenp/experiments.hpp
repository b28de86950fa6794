#pragma once

/**
 * @file experiments.hpp
 * @brief Open-loop model validation, the closed-loop release experiment and
 * Monte-Carlo bound estimation for the feasibility test.
 */

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spdenp/config.hpp"
#include "spdenp/controller.hpp"
#include "spdenp/errors.hpp"
#include "spdenp/metrics.hpp"
#include "spdenp/simulation.hpp"
#include "spdenp/transport.hpp"
#include "spdenp/wall_model.hpp"

namespace spdenp {

enum class ScenarioKind { Validation, Control, Sweep, Feasibility };

struct UncertaintySpec {
    double relative_range = 0.2;  ///< multiplicative +-range on D, k_r, 1 - sigma and V
    std::size_t samples = 64;
    double safety_factor = 1.1;
    double horizon = 86400.0;  ///< [s]
    double sample_dt = 600.0;  ///< [s]
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::Control;
    double horizon = 86400.0;    ///< [s]
    double sample_dt = 600.0;    ///< [s]
    std::uint64_t seed = 0;
    bool reference_plant = true;  ///< closed-loop plant: fine mesh (true) or lumped
    int refinement = 10;
    double input_hold = 60.0;  ///< random test input hold [s]
    double input_min = 0.0;    ///< [molecules/s]
    double input_max = 200.0;  ///< [molecules/s]
    double desired_lumen_ldl = 100.0;
    UncertaintySpec uncertainty;
    SolverOptions solver;

    void validate() const {
        if (!(horizon > 0.0)) throw ConfigError("scenario horizon must be positive");
        if (!(sample_dt > 0.0)) throw ConfigError("scenario sample_dt must be positive");
        if (refinement < 1) throw ConfigError("solver.refinement must be >= 1");
        if (!(uncertainty.relative_range >= 0.0 && uncertainty.relative_range < 1.0))
            throw ConfigError("sweep.relative_range must lie in [0, 1)");
        if (uncertainty.samples < 1) throw ConfigError("sweep.samples must be >= 1");
        if (!(uncertainty.safety_factor >= 1.0)) throw ConfigError("sweep.safety_factor must be >= 1");
        if (!(input_min >= 0.0) || !(input_max >= input_min))
            throw ConfigError("experiment.input_min/input_max must satisfy 0 <= min <= max");
    }
};

/// Everything one run needs, resolved from a parameter set.
struct Experiment {
    WallParams wall;
    ControllerParams controller;
    ScenarioConfig scenario;
};

inline SolverOptions solver_options_from(const ParamSet& p) {
    SolverOptions o;
    const std::string& scheme = p.text("solver.scheme");
    if (scheme == "implicit")
        o.scheme = Scheme::Implicit;
    else if (scheme == "explicit")
        o.scheme = Scheme::Explicit;
    else
        throw ConfigError("solver.scheme must be 'implicit' or 'explicit', got '" + scheme + "'");
    o.rtol = p.real("solver.rtol");
    o.atol = p.real("solver.atol");
    o.max_step = p.real("solver.max_step");
    o.min_step = p.real("solver.min_step");
    const auto rej = p.integer("solver.max_rejections");
    if (rej < 1) throw ConfigError("solver.max_rejections must be >= 1");
    o.max_rejections = static_cast<int>(rej);
    if (!(o.rtol > 0.0) || !(o.atol > 0.0)) throw ConfigError("solver.rtol and solver.atol must be positive");
    if (!(o.max_step > 0.0) || !(o.min_step > 0.0)) throw ConfigError("solver step limits must be positive");
    return o;
}

inline Experiment experiment_from(const ParamSet& p, ScenarioKind kind) {
    Experiment e;
    e.wall = wall_params_from(p);
    e.controller = controller_params_from(p);
    ScenarioConfig& s = e.scenario;
    s.kind = kind;
    const bool validation = kind == ScenarioKind::Validation;
    s.horizon = p.real(validation ? "experiment.validation_horizon" : "experiment.control_horizon");
    s.sample_dt = p.real(validation ? "experiment.validation_sample_dt" : "experiment.control_sample_dt");
    s.seed = p.unsigned_integer("experiment.seed");
    const std::string& plant = p.text("experiment.plant");
    if (plant != "reference" && plant != "lumped")
        throw ConfigError("experiment.plant must be 'reference' or 'lumped', got '" + plant + "'");
    s.reference_plant = plant == "reference";
    const auto rho = p.integer("solver.refinement");
    if (rho < 1 || rho > 1000) throw ConfigError("solver.refinement must lie in [1, 1000]");
    s.refinement = static_cast<int>(rho);
    s.input_hold = p.real("experiment.input_hold");
    s.input_min = p.real("experiment.input_min");
    s.input_max = p.real("experiment.input_max");
    s.desired_lumen_ldl = p.real("experiment.desired_lumen_ldl");
    const auto n = p.integer("sweep.samples");
    if (n < 1) throw ConfigError("sweep.samples must be >= 1");
    s.uncertainty.samples = static_cast<std::size_t>(n);
    s.uncertainty.relative_range = p.real("sweep.relative_range");
    s.uncertainty.safety_factor = p.real("sweep.safety_factor");
    s.uncertainty.horizon = p.real("sweep.horizon");
    s.uncertainty.sample_dt = p.real("sweep.sample_dt");
    s.solver = solver_options_from(p);
    s.validate();
    return e;
}

namespace detail {
inline SystemState equilibrium_state(const TransportModel& m) {
    SystemState x = SystemState::zeros(m.node_count());
    x.ldl = uncontrolled_equilibrium(m, m.env().lumen_ldl);
    return x;
}

inline std::vector<double> coarse_profile(const std::vector<double>& fine, int rho) {
    if (rho == 1) return fine;
    const auto r = static_cast<std::size_t>(rho);
    std::vector<double> out(fine.size() / r);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fine[(i + 1) * r - 1];
    return out;
}

inline std::string context(const char* scenario, const std::exception& e) {
    return std::string(scenario) + ": " + e.what();
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Validation

struct ValidationResult {
    Trajectory lumped, reference;
    std::array<MaeResult, 3> mae{};  ///< indexed by Species
    IntegrationStats lumped_stats, reference_stats;
};

/**
 * Drives the lumped model and the refined reference with the same seeded random
 * input; both start at their own uncontrolled LDL equilibrium with no drug or
 * nanoparticles.
 */
inline ValidationResult run_validation(const Experiment& e) {
    const ScenarioConfig& sc = e.scenario;
    try {
        const TransportModel lumped(e.wall, 1), reference(e.wall, sc.refinement);
        const RandomInput input(sc.seed, lumped.node_count(), sc.input_hold, sc.input_min, sc.input_max);
        const InputPolicy policy = open_loop([&input](double t, std::span<double> u) { input(t, u); });
        const double hold = std::min(sc.input_hold, sc.sample_dt);
        IntegrateOptions opts{sc.horizon, sc.sample_dt, hold, sc.solver};
        ValidationResult r;
        r.lumped = integrate(lumped, detail::equilibrium_state(lumped), policy, opts, &r.lumped_stats);
        r.reference = integrate(reference, detail::equilibrium_state(reference), policy, opts, &r.reference_stats);
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp})
            r.mae[static_cast<std::size_t>(s)] = species_mae(r.lumped, r.reference, s);
        return r;
    } catch (const IntegrationError& ex) {
        throw IntegrationError(detail::context("validation", ex), ex.node(), ex.suggested_dt(), ex.time());
    }
}

// ---------------------------------------------------------------------------
// Bounds

/// Running per-node maxima of f, g, y, z over observed samples.
struct BoundAccumulator {
    std::vector<double> f, g, y, z;

    explicit BoundAccumulator(std::size_t nodes = 0) { reset(nodes); }

    void reset(std::size_t nodes) {
        const double lo = -std::numeric_limits<double>::infinity();
        f.assign(nodes, lo);
        g.assign(nodes, lo);
        y.assign(nodes, lo);
        z.assign(nodes, lo);
    }

    /// Observes a plant state at the coarse-coincident nodes.
    void observe(const TransportModel& plant, const SystemState& x) {
        const auto rho = static_cast<std::size_t>(plant.refinement());
        for (std::size_t i = 0; i < f.size(); ++i) {
            const std::size_t j = (i + 1) * rho - 1;
            const IoDynamics io = io_dynamics(plant, x, j);
            f[i] = std::max(f[i], io.f);
            g[i] = std::max(g[i], io.g);
            y[i] = std::max(y[i], x.ldl[j]);
            z[i] = std::max(z[i], x.drug[j]);
        }
    }

    void merge(const BoundAccumulator& o) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] = std::max(f[i], o.f[i]);
            g[i] = std::max(g[i], o.g[i]);
            y[i] = std::max(y[i], o.y[i]);
            z[i] = std::max(z[i], o.z[i]);
        }
    }
};

/// Moves x away from zero by (factor - 1)|x|, so the result never lies below x.
inline double inflate(double x, double factor) { return x + (factor - 1.0) * std::abs(x); }

/// Inflated bounds plus b_ss from the nominal steady nanoparticle profile.
inline BoundEstimates finalize_bounds(const BoundAccumulator& acc, const WallParams& nominal,
                                      const ControllerParams& cp, double safety_factor, std::string provenance) {
    const TransportModel lumped(nominal, 1);
    const DenpSteadyState nss = steady_state_denp(lumped);
    BoundEstimates b;
    const std::size_t q = acc.f.size();
    b.f_bar.resize(q);
    b.g_bar.resize(q);
    b.y_bar.resize(q);
    b.z_bar.resize(q);
    b.b_ss.resize(q);
    for (std::size_t i = 0; i < q; ++i) {
        b.f_bar[i] = inflate(acc.f[i], safety_factor);
        b.g_bar[i] = inflate(acc.g[i], safety_factor);
        b.y_bar[i] = inflate(acc.y[i], safety_factor);
        b.z_bar[i] = inflate(acc.z[i], safety_factor);
        b.b_ss[i] = b_steady(nominal.kinetics, nominal.env, nss.profile[i], cp.eval_fraction_ldl * b.y_bar[i],
                             cp.eval_fraction_drug * b.z_bar[i]);
    }
    b.provenance = std::move(provenance);
    return b;
}

// ---------------------------------------------------------------------------
// Closed loop

/**
 * Sliding-phase check ds/dt < 0 at sampled points with s > s_c, with ds/dt
 * evaluated under the smoothed law's release (u = ubar there) at the sampled
 * closed-loop state. The sign under the release actually held is tallied too;
 * near the layer it is set by integration noise, since s_c is below the
 * resolution of s. Counts are kept per node so nodes the feasibility test
 * excludes (above the cutoff or with zero steady gain) can be dropped once the
 * bounds are known.
 */
struct ReachabilityMonitor {
    std::size_t checked = 0;   ///< feasible-range points with s > s_c
    std::size_t negative = 0;  ///< of which ds/dt < 0 under the law
    std::size_t negative_applied = 0;  ///< of which ds/dt < 0 under the held release
    std::size_t checked_all = 0;       ///< whole node range
    std::size_t negative_all = 0;
    double worst_rate = -std::numeric_limits<double>::infinity();  ///< max law ds/dt over checked points

    double fraction() const { return ratio(negative); }
    double applied_fraction() const { return ratio(negative_applied); }

    void record(std::size_t node, double law_rate, double applied_rate) {
        if (node >= tally_.size()) tally_.resize(node + 1);
        Tally& t = tally_[node];
        ++t.checked;
        t.negative += law_rate < 0.0;
        t.negative_applied += applied_rate < 0.0;
        t.worst = std::max(t.worst, law_rate);
    }

    void restrict_to(const FeasibilityReport& feasibility) {
        checked = negative = negative_applied = checked_all = negative_all = 0;
        worst_rate = -std::numeric_limits<double>::infinity();
        for (const auto& row : feasibility.rows) {
            if (row.node >= tally_.size()) continue;
            const Tally& t = tally_[row.node];
            checked_all += t.checked;
            negative_all += t.negative;
            if (row.status == NodeStatus::AboveCutoff || row.status == NodeStatus::ZeroGain) continue;
            checked += t.checked;
            negative += t.negative;
            negative_applied += t.negative_applied;
            if (t.checked) worst_rate = std::max(worst_rate, t.worst);
        }
    }

private:
    struct Tally {
        std::size_t checked = 0, negative = 0, negative_applied = 0;
        double worst = -std::numeric_limits<double>::infinity();
    };
    std::vector<Tally> tally_;

    double ratio(std::size_t n) const {
        return checked ? static_cast<double>(n) / static_cast<double>(checked) : 1.0;
    }
};

/**
 * Closed-loop release policy on `plant`. The controller sees only the
 * coarse-coincident plant nodes; outside the cutoff it releases nothing. In
 * the implicit discretization the first interval uses the model prediction
 * and later ones the time-delay prediction.
 */
class ReleasePolicy {
public:
    ReleasePolicy(const TransportModel& plant, const ControllerParams& cp, std::uint64_t seed)
        : plant_(plant), cp_(cp), noise_(seed ^ 0x5EED5EED5EED5EEDull) {}

    void operator()(double, const SystemState& x, std::span<double> u, std::span<double> s) {
        const auto rho = static_cast<std::size_t>(plant_.refinement());
        const SystemState* prev = have_prev_ ? &prev_ : nullptr;
        const bool implicit = cp_.discretization == Discretization::Implicit;
        const double dt = cp_.update_interval;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const std::size_t j = (i + 1) * rho - 1;
            const SensorReading r = sense(plant_, x, prev, j, dt, cp_, &noise_);
            s[i] = sliding_surface(r, cp_.lambda);
            if (!(r.y < cp_.y_cutoff) || cp_.u_max == 0.0) continue;
            if (!implicit) {
                u[i] = control_law(r.y, s[i], cp_);
            } else if (s_hist_.empty()) {
                u[i] = implicit_release(r.y, s[i], io_dynamics(plant_, x, j), dt, cp_);
            } else {
                const double b = io_dynamics(plant_, x, j).b;
                u[i] = delayed_release(r.y, s[i], s_hist_[i], u_hist_[i], b, dt, cp_);
            }
        }
        if (implicit) {
            s_hist_.assign(s.begin(), s.end());
            u_hist_.assign(u.begin(), u.end());
        }
        if (cp_.sensor_mode == SensorMode::BackwardDifference) {
            prev_ = x;
            have_prev_ = true;
        }
    }

private:
    const TransportModel& plant_;
    ControllerParams cp_;
    std::mt19937_64 noise_;
    SystemState prev_;
    bool have_prev_ = false;
    std::vector<double> s_hist_, u_hist_;
};

struct ControlResult {
    Trajectory trajectory;             ///< coarse samples of the closed-loop plant
    std::vector<double> uncontrolled;  ///< coarse LDL equilibrium at the scenario lumen value
    std::vector<double> desired;       ///< coarse LDL equilibrium at the desired lumen value
    std::array<ReductionResult, kLayerCount> reduction{};
    std::array<double, kLayerCount> layer_drug_auc{};
    double drug_auc = 0.0;  ///< of the wall-mean drug series [ug h/mL]
    ReachabilityMonitor monitor;
    NodeRange range;
    BoundEstimates nominal_bounds;  ///< from this run alone (no parameter sweep)
    FeasibilityReport feasibility;
    IntegrationStats stats;
};

/// Layer node ranges on the coarse mesh.
inline std::array<NodeRange, kLayerCount> layer_ranges(const Mesh& coarse) {
    std::array<NodeRange, kLayerCount> out{};
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        const auto [a, b] = coarse.layer_nodes(l);
        out[l] = {a, b};
    }
    return out;
}

/// Reduction rates and AUCs from the stored trajectory and baseline; also
/// used to re-derive a loaded report's metrics.
inline void compute_control_metrics(const Mesh& coarse, ControlResult& r) {
    const auto layers = layer_ranges(coarse);
    const auto& final_ldl = r.trajectory.states.back().ldl;
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        r.reduction[l] = reduction_rate(r.uncontrolled, final_ldl, layers[l].first, layers[l].last);
        r.layer_drug_auc[l] = auc_hours(r.trajectory.times,
                                        mean_series(r.trajectory, Species::Drug, layers[l].first, layers[l].last));
    }
    r.drug_auc = auc_hours(r.trajectory.times, mean_series(r.trajectory, Species::Drug, 0, final_ldl.size()));
}

inline ControlResult run_control(const Experiment& e) {
    const ScenarioConfig& sc = e.scenario;
    const ControllerParams& cp = e.controller;
    try {
        const int rho = sc.reference_plant ? sc.refinement : 1;
        const TransportModel plant(e.wall, rho);
        const TransportModel lumped(e.wall, 1);
        WallParams desired_wall = e.wall;
        desired_wall.env.lumen_ldl = sc.desired_lumen_ldl;
        const TransportModel desired_plant(desired_wall, rho);

        ControlResult r;
        r.range = default_node_range(lumped.mesh(), cp);
        const SystemState x0 = detail::equilibrium_state(plant);
        r.uncontrolled = detail::coarse_profile(x0.ldl, rho);
        r.desired = detail::coarse_profile(uncontrolled_equilibrium(desired_plant, sc.desired_lumen_ldl), rho);

        const double hold = cp.update_interval;
        IntegrateOptions opts{sc.horizon, sc.sample_dt, hold, sc.solver};
        ReleasePolicy release(plant, cp, sc.seed);
        BoundAccumulator acc(lumped.node_count());
        const auto rr = static_cast<std::size_t>(rho);
        auto observer = [&](double t, const SystemState& x, std::span<const double> u, std::span<const double> s) {
            acc.observe(plant, x);
            // The initial equilibrium holds no nanoparticles (b = 0) and has ds/dt = 0 exactly.
            if (t == 0.0) return;
            for (std::size_t i = r.range.first; i < r.range.last; ++i) {
                if (!(s[i] > cp.s_margin)) continue;
                const std::size_t j = (i + 1) * rr - 1;
                const IoDynamics io = io_dynamics(plant, x, j);
                const double drift = io.f + cp.lambda * io.g;
                r.monitor.record(i, drift - io.b * control_law(x.ldl[j], s[i], cp), drift - io.b * u[i]);
            }
        };
        r.trajectory = integrate(
            plant, x0, [&](double t, const SystemState& x, std::span<double> u, std::span<double> s) { release(t, x, u, s); },
            opts, &r.stats, observer);

        compute_control_metrics(lumped.mesh(), r);
        r.nominal_bounds = finalize_bounds(acc, e.wall, cp, sc.uncertainty.safety_factor,
                                           "nominal closed-loop run on the " +
                                               std::string(sc.reference_plant ? "reference" : "lumped") + " plant");
        r.feasibility = min_feasible_uc(r.nominal_bounds, cp, r.range);
        r.monitor.restrict_to(r.feasibility);
        return r;
    } catch (const IntegrationError& ex) {
        throw IntegrationError(detail::context("control", ex), ex.node(), ex.suggested_dt(), ex.time());
    }
}

// ---------------------------------------------------------------------------
// Monte-Carlo sweep

/// One multiplicative perturbation: index [species][layer] for the per-layer factors.
struct ParameterDraw {
    std::array<std::array<double, kLayerCount>, 3> diffusivity{};
    std::array<std::array<double, kLayerCount>, 3> reaction{};
    std::array<std::array<double, kLayerCount>, 3> transmission{};  ///< scales 1 - sigma
    double filtration = 1.0;

    static constexpr std::size_t kDimensions = 3 * 3 * kLayerCount + 1;

    std::string describe() const {
        std::ostringstream os;
        os.precision(6);
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t l = 0; l < kLayerCount; ++l)
                os << kSpeciesNames[s] << "." << kLayerNames[l] << " D*" << diffusivity[s][l] << " k*"
                   << reaction[s][l] << " (1-sigma)*" << transmission[s][l] << "; ";
        os << "V*" << filtration;
        return os.str();
    }
};

/**
 * Latin-hypercube design on [1 - range, 1 + range]^d. Uses its own uniform and
 * shuffle so the design is identical across standard libraries.
 */
inline std::vector<ParameterDraw> latin_hypercube(std::size_t n, double range, std::uint64_t seed) {
    if (n < 1) throw UsageError("latin_hypercube: need at least one sample");
    std::mt19937_64 rng(seed);
    auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    std::vector<std::vector<double>> cols(ParameterDraw::kDimensions, std::vector<double>(n));
    std::vector<std::size_t> perm(n);
    for (auto& col : cols) {
        for (std::size_t k = 0; k < n; ++k) perm[k] = k;
        for (std::size_t k = n; k-- > 1;) std::swap(perm[k], perm[static_cast<std::size_t>(unit() * (k + 1))]);
        for (std::size_t k = 0; k < n; ++k) {
            const double v = (static_cast<double>(perm[k]) + unit()) / static_cast<double>(n);
            col[k] = 1.0 + range * (2.0 * v - 1.0);
        }
    }
    std::vector<ParameterDraw> draws(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t d = 0;
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t l = 0; l < kLayerCount; ++l) {
                draws[k].diffusivity[s][l] = cols[d++][k];
                draws[k].reaction[s][l] = cols[d++][k];
                draws[k].transmission[s][l] = cols[d++][k];
            }
        draws[k].filtration = cols[d][k];
    }
    return draws;
}

inline WallParams perturb(const WallParams& base, const ParameterDraw& d) {
    WallParams w = base;
    for (Species s : {Species::Ldl, Species::Drug, Species::Denp}) {
        const auto si = static_cast<std::size_t>(s);
        auto& sp = w.transport[s];
        for (std::size_t l = 0; l < kLayerCount; ++l) {
            auto& lt = sp.layers[l];
            lt.diffusivity *= d.diffusivity[si][l];
            lt.reaction *= d.reaction[si][l];
            lt.reflection = std::max(0.0, 1.0 - (1.0 - lt.reflection) * d.transmission[si][l]);
        }
    }
    w.env.filtration_velocity *= d.filtration;
    return w;
}

struct SweepResult {
    std::vector<ParameterDraw> draws;
    std::vector<BoundAccumulator> per_sample;  ///< raw maxima of each draw, same order as draws
    BoundEstimates bounds;                     ///< over all draws, inflated
    double max_raw_ldl = 0.0;                  ///< max y over every draw, node and time (uninflated)
    std::vector<std::size_t> rejected;         ///< draws whose LDL block has no stable equilibrium (0-based)
};

/// Combines the first `count` samples of a sweep.
inline BoundAccumulator combine_samples(const SweepResult& sweep, std::size_t count) {
    if (count < 1 || count > sweep.per_sample.size()) throw UsageError("combine_samples: invalid sample count");
    BoundAccumulator acc = sweep.per_sample.front();
    for (std::size_t k = 1; k < count; ++k) acc.merge(sweep.per_sample[k]);
    return acc;
}

/**
 * @brief Per-node bounds over closed- and open-loop runs of perturbed lumped models.
 *
 * Samples run on up to `threads` workers (0 = hardware concurrency); each
 * sample's result lands in its own slot, so the output does not depend on
 * scheduling.
 *
 * A draw whose perturbed LDL block has no non-negative equilibrium is
 * unstable and is listed in `rejected` instead of run; its accumulator stays
 * empty. Lowering the IEL transmission by ~20% is enough on the default wall.
 */
inline SweepResult estimate_bounds(const Experiment& e, unsigned threads = 0) {
    const ScenarioConfig& sc = e.scenario;
    const UncertaintySpec& us = sc.uncertainty;
    SweepResult out;
    out.draws = latin_hypercube(us.samples, us.relative_range, sc.seed);
    const std::size_t q = TransportModel(e.wall, 1).node_count();
    out.per_sample.assign(out.draws.size(), BoundAccumulator(q));
    std::vector<std::exception_ptr> errors(out.draws.size());
    std::vector<char> unstable(out.draws.size(), 0);

    auto run_sample = [&](std::size_t k) {
        try {
            const TransportModel model(perturb(e.wall, out.draws[k]), 1);
            SystemState x0;
            try {
                x0 = detail::equilibrium_state(model);
            } catch (const ParameterError&) {
                unstable[k] = 1;
                return;
            }
            IntegrateOptions opts{us.horizon, us.sample_dt, e.controller.update_interval, sc.solver};
            BoundAccumulator& acc = out.per_sample[k];
            auto observer = [&](double, const SystemState& x, std::span<const double>, std::span<const double>) {
                acc.observe(model, x);
            };
            ReleasePolicy closed(model, e.controller, sc.seed + k);
            integrate(
                model, x0, [&](double t, const SystemState& x, std::span<double> u, std::span<double> s) { closed(t, x, u, s); },
                opts, nullptr, observer);
            IntegrateOptions open_opts = opts;
            open_opts.hold = us.sample_dt;
            integrate(model, x0, open_loop([](double, std::span<double>) {}), open_opts, nullptr, observer);
        } catch (const std::exception& ex) {
            const auto* ie = dynamic_cast<const IntegrationError*>(&ex);
            const std::string msg =
                "sweep sample " + std::to_string(k + 1) + " failed: " + ex.what() + "; draw: " + out.draws[k].describe();
            errors[k] = ie ? std::make_exception_ptr(IntegrationError(msg, ie->node(), ie->suggested_dt(), ie->time()))
                           : std::make_exception_ptr(ParameterError(msg));
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads ? threads : hw, out.draws.size()));
    if (workers <= 1) {
        for (std::size_t k = 0; k < out.draws.size(); ++k) run_sample(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < out.draws.size(); k = next++) run_sample(k);
            });
        for (auto& t : pool) t.join();
    }
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
    for (std::size_t k = 0; k < unstable.size(); ++k)
        if (unstable[k]) out.rejected.push_back(k);
    if (out.rejected.size() == out.draws.size()) throw ParameterError("every sweep draw has an unstable LDL block");

    const BoundAccumulator all = combine_samples(out, out.per_sample.size());
    out.max_raw_ldl = *std::max_element(all.y.begin(), all.y.end());
    std::ostringstream prov;
    prov << us.samples - out.rejected.size() << " of " << us.samples << " Latin-hypercube draws (rest unstable), +-"
         << us.relative_range * 100.0 << "% on D, k_r, 1-sigma and V, closed and open loop on the lumped model, safety factor "
         << us.safety_factor;
    out.bounds = finalize_bounds(all, e.wall, e.controller, us.safety_factor, prov.str());
    return out;
}

}  // namespace spdenp
