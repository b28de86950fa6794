#pragma once

/**
 * @file metrics.hpp
 * @brief Seeded random test input and the scalar metrics reported by experiments.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spdenp/errors.hpp"
#include "spdenp/simulation.hpp"
#include "spdenp/wall_model.hpp"

namespace spdenp {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
}  // namespace detail

/**
 * @brief Per-node independent uniform input, piecewise constant over `hold` seconds.
 *
 * Counter based: the value for (node, slot) is a hash of (seed, node, slot), so
 * the function is deterministic and independent of evaluation order.
 */
class RandomInput {
public:
    RandomInput(std::uint64_t seed, std::size_t nodes, double hold, double lo, double hi)
        : seed_(seed), nodes_(nodes), hold_(hold), lo_(lo), hi_(hi) {
        if (!(lo >= 0.0) || !(hi >= lo)) throw UsageError("random input range must satisfy 0 <= lo <= hi");
        if (!(hold > 0.0)) throw UsageError("random input hold interval must be positive");
    }

    std::size_t node_count() const { return nodes_; }

    double value(std::size_t node, double t) const {
        const auto slot = static_cast<std::uint64_t>(std::floor(t / hold_ + 1e-9));
        const std::uint64_t h =
            detail::splitmix64(detail::splitmix64(seed_ ^ (0xD1B54A32D192ED03ull * (node + 1))) ^ slot);
        const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;
        return lo_ + (hi_ - lo_) * unit;
    }

    void operator()(double t, std::span<double> u) const {
        if (u.size() != nodes_) throw UsageError("random input: span size does not match node count");
        for (std::size_t i = 0; i < nodes_; ++i) u[i] = value(i, t);
    }

private:
    std::uint64_t seed_;
    std::size_t nodes_;
    double hold_, lo_, hi_;
};

struct MaeResult {
    double absolute = 0.0;
    double reference_max = 0.0;  ///< max |reference| over the compared samples
    double percent_of_max = 0.0;  ///< 0 when the reference is identically zero
};

/// Mean absolute difference over aligned samples; `reference` supplies the max.
inline MaeResult mae(std::span<const double> a, std::span<const double> reference) {
    if (a.size() != reference.size()) throw UsageError("mae: series lengths differ");
    if (a.empty()) throw UsageError("mae: empty series");
    MaeResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += std::abs(a[i] - reference[i]);
        r.reference_max = std::max(r.reference_max, std::abs(reference[i]));
    }
    r.absolute = sum / static_cast<double>(a.size());
    r.percent_of_max = r.reference_max > 0.0 ? 100.0 * r.absolute / r.reference_max : 0.0;
    return r;
}

/// All samples of one species flattened time-major.
inline std::vector<double> flatten(const Trajectory& traj, Species s) {
    std::vector<double> out;
    if (traj.states.empty()) return out;
    out.reserve(traj.states.size() * traj.states.front().node_count());
    for (const auto& st : traj.states) out.insert(out.end(), st[s].begin(), st[s].end());
    return out;
}

/// Species MAE of `model` against `reference` over all nodes and samples.
inline MaeResult species_mae(const Trajectory& model, const Trajectory& reference, Species s) {
    if (model.times != reference.times) throw UsageError("mae: trajectories are not sampled at the same times");
    return mae(flatten(model, s), flatten(reference, s));
}

/// Trapezoid integral of `values` over `times_s`, reported per hour.
inline double auc_hours(std::span<const double> times_s, std::span<const double> values) {
    if (times_s.size() != values.size()) throw UsageError("auc: series lengths differ");
    double area = 0.0;
    for (std::size_t k = 1; k < times_s.size(); ++k)
        area += 0.5 * (values[k] + values[k - 1]) * (times_s[k] - times_s[k - 1]);
    return area / 3600.0;
}

/// Spatial mean of one species over nodes [first, last) at every sample.
inline std::vector<double> mean_series(const Trajectory& traj, Species s, std::size_t first, std::size_t last) {
    if (first >= last) throw UsageError("mean_series: empty node range");
    std::vector<double> out;
    out.reserve(traj.states.size());
    for (const auto& st : traj.states) {
        const auto& v = st[s];
        if (last > v.size()) throw UsageError("mean_series: node range exceeds the state");
        double sum = 0.0;
        for (std::size_t j = first; j < last; ++j) sum += v[j];
        out.push_back(sum / static_cast<double>(last - first));
    }
    return out;
}

struct ReductionResult {
    double percent = 0.0;
    std::size_t excluded = 0;  ///< nodes skipped because the uncontrolled value is zero
};

/// Mean over nodes [first, last) of (uncontrolled - controlled)/uncontrolled, in percent.
inline ReductionResult reduction_rate(std::span<const double> uncontrolled, std::span<const double> controlled,
                                      std::size_t first, std::size_t last) {
    if (uncontrolled.size() != controlled.size()) throw UsageError("reduction_rate: profile lengths differ");
    if (first >= last || last > uncontrolled.size()) throw UsageError("reduction_rate: invalid node range");
    ReductionResult r;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t j = first; j < last; ++j) {
        if (!(uncontrolled[j] > 0.0)) {
            ++r.excluded;
            continue;
        }
        sum += (uncontrolled[j] - controlled[j]) / uncontrolled[j];
        ++used;
    }
    r.percent = used ? 100.0 * sum / static_cast<double>(used) : 0.0;
    return r;
}

}  // namespace spdenp
