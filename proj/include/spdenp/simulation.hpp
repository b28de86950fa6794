#pragma once

/**
 * @file simulation.hpp
 * @brief Uniformly sampled trajectories over a held-input policy.
 */

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spdenp/errors.hpp"
#include "spdenp/transport.hpp"

namespace spdenp {

/// Samples on the coarse (lumped) node set.
struct Trajectory {
    double sample_dt = 0.0;
    std::vector<double> times;
    std::vector<SystemState> states;
    std::vector<std::vector<double>> release;  ///< u per coarse node [molecules/s]
    std::vector<std::vector<double>> sliding;  ///< s per coarse node, 0 for open-loop runs

    std::size_t sample_count() const { return times.size(); }
};

/**
 * Called at the start of every hold interval with the plant state. Writes u
 * per coarse node into `release` and (optionally) the sliding variable into
 * `sliding`; both spans are pre-zeroed.
 */
using InputPolicy =
    std::function<void(double time, const SystemState& plant, std::span<double> release, std::span<double> sliding)>;

/// Called at every sample time (after the policy) with the plant state and the
/// input that will be held next.
using SampleObserver = std::function<void(double time, const SystemState& plant, std::span<const double> release,
                                          std::span<const double> sliding)>;

struct IntegrateOptions {
    double horizon = 0.0;    ///< [s]
    double sample_dt = 0.0;  ///< [s], must divide horizon
    double hold = 0.0;       ///< input hold interval [s], must divide sample_dt
    SolverOptions solver;
};

namespace detail {
inline std::size_t exact_ratio(double num, double den, const char* what) {
    const double r = num / den;
    const double n = std::round(r);
    if (n < 1.0 || std::abs(r - n) > 1e-9 * r) throw UsageError(what);
    return static_cast<std::size_t>(n);
}
}  // namespace detail

/**
 * @brief Integrates `plant` from `initial` over the horizon.
 *
 * The policy sees the plant state (fine mesh when the plant is a reference
 * model); recorded states are restricted to the coarse nodes. Deterministic for
 * a deterministic policy.
 */
inline Trajectory integrate(const TransportModel& plant, const SystemState& initial, const InputPolicy& policy,
                            const IntegrateOptions& opts, IntegrationStats* stats_out = nullptr,
                            const SampleObserver& observer = {}) {
    if (!(opts.horizon > 0.0)) throw UsageError("integrate: horizon must be positive");
    if (!(opts.sample_dt > 0.0) || !(opts.hold > 0.0)) throw UsageError("integrate: sample_dt and hold must be positive");
    if (initial.node_count() != plant.node_count()) throw UsageError("integrate: state size does not match the plant");
    const std::size_t samples = detail::exact_ratio(opts.horizon, opts.sample_dt, "sample_dt must divide the horizon");
    const std::size_t holds = detail::exact_ratio(opts.sample_dt, opts.hold, "hold interval must divide sample_dt");

    const int rho = plant.refinement();
    const std::size_t coarse = plant.coarse_node_count();
    Trajectory traj;
    traj.sample_dt = opts.sample_dt;
    traj.times.reserve(samples + 1);
    traj.states.reserve(samples + 1);

    SystemState x = initial;
    x.time = 0.0;
    Integrator integrator(plant, opts.solver);
    std::vector<double> u(coarse), s(coarse), u_fine(plant.node_count());

    auto apply_policy = [&](double t) {
        std::fill(u.begin(), u.end(), 0.0);
        std::fill(s.begin(), s.end(), 0.0);
        policy(t, x, u, s);
        expand_input(u, rho, u_fine);
    };
    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.states.push_back(restrict_state(x, rho));
        traj.states.back().time = t;
        traj.release.push_back(u);
        traj.sliding.push_back(s);
        if (observer) observer(t, x, u, s);
    };

    apply_policy(0.0);
    record(0.0);
    for (std::size_t k = 1; k <= samples; ++k) {
        for (std::size_t h = 0; h < holds; ++h) {
            const double t0 = static_cast<double>((k - 1) * holds + h) * opts.hold;
            if (h > 0) apply_policy(t0);
            x.time = t0;
            try {
                integrator.advance(x, u_fine, opts.hold);
            } catch (const IntegrationError& e) {
                throw IntegrationError(std::string(e.what()) + " (sample time " +
                                           std::to_string(static_cast<double>(k) * opts.sample_dt) + " s)",
                                       e.node(), e.suggested_dt(), e.time());
            }
        }
        const double t = static_cast<double>(k) * opts.sample_dt;
        x.time = t;
        apply_policy(t);
        record(t);
    }
    if (stats_out) *stats_out = integrator.stats();
    return traj;
}

/// Open-loop policy from a time-only input function.
inline InputPolicy open_loop(std::function<void(double, std::span<double>)> input) {
    return [input = std::move(input)](double t, const SystemState&, std::span<double> u, std::span<double>) {
        input(t, u);
    };
}

}  // namespace spdenp
