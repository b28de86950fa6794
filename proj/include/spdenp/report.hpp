#pragma once

/**
 * @file report.hpp
 * @brief Report directories: CSV writers, readers and the self-consistency check.
 *
 * Doubles are written in shortest round-trip form, so metrics recomputed from
 * the stored trajectories of a report reproduce the stored metrics exactly.
 */

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "spdenp/config.hpp"
#include "spdenp/controller.hpp"
#include "spdenp/errors.hpp"
#include "spdenp/experiments.hpp"
#include "spdenp/metrics.hpp"
#include "spdenp/simulation.hpp"
#include "spdenp/wall_model.hpp"

namespace spdenp {

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kTrajectoryHeader = "time_s,node,layer,y_mgdl,z_ugml,n_ugml,u_molps,s_value";

namespace detail {
inline std::string fmt(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw ReportError("cannot format number");
    return std::string(buf, p);
}

inline double parse_double(std::string_view s, const std::string& where) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ReportError(where + ": not a number: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ReportError("cannot write '" + path.string() + "'");
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ReportError("cannot read '" + path.string() + "'");
    return in;
}

inline void expect_header(std::istream& in, std::string_view header, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line) || line != header)
        throw ReportError(path.string() + ": expected header '" + std::string(header) + "'");
}

inline std::string layer_label(const Mesh& mesh, std::size_t node) {
    return std::to_string(mesh.layer_of[node] + 1);
}

/// Mesh layout recovered from the per-node 1-based layer column.
inline Mesh mesh_from_layers(const std::vector<int>& layers) {
    Mesh m;
    m.layer_of.resize(layers.size());
    for (std::size_t j = 0; j < layers.size(); ++j) {
        if (layers[j] < 1 || layers[j] > static_cast<int>(kLayerCount))
            throw ReportError("layer index out of range in report");
        if (j > 0 && layers[j] < layers[j - 1]) throw ReportError("layer column is not non-decreasing");
        m.layer_of[j] = layers[j] - 1;
    }
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        std::size_t end = l == 0 ? 0 : m.layer_end[l - 1];
        while (end < layers.size() && m.layer_of[end] == static_cast<int>(l)) ++end;
        m.layer_end[l] = end;
    }
    for (std::size_t l = 0; l < kLayerCount; ++l)
        if (m.layer_end[l] == m.layer_begin(l)) throw ReportError("report has an empty layer");
    return m;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Trajectories

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj, const Mesh& mesh) {
    auto out = detail::open_out(path);
    out << kTrajectoryHeader << '\n';
    for (std::size_t k = 0; k < traj.sample_count(); ++k) {
        const SystemState& x = traj.states[k];
        const std::string t = detail::fmt(traj.times[k]);
        for (std::size_t j = 0; j < x.node_count(); ++j) {
            out << t << ',' << j + 1 << ',' << detail::layer_label(mesh, j) << ',' << detail::fmt(x.ldl[j]) << ','
                << detail::fmt(x.drug[j]) << ',' << detail::fmt(x.denp[j]) << ',' << detail::fmt(traj.release[k][j])
                << ',' << detail::fmt(traj.sliding[k][j]) << '\n';
        }
    }
    if (!out) throw ReportError("write failed: '" + path.string() + "'");
}

struct LoadedTrajectory {
    Trajectory trajectory;
    Mesh mesh;  ///< layer layout only
};

inline LoadedTrajectory read_trajectory(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    detail::expect_header(in, kTrajectoryHeader, path);
    LoadedTrajectory lt;
    Trajectory& tr = lt.trajectory;
    std::vector<int> layers;
    std::string line;
    std::size_t lineno = 1;
    std::string current_time;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        const auto f = detail::split(line);
        if (f.size() != 8) throw ReportError(where + ": expected 8 fields");
        if (tr.times.empty() || f[0] != current_time) {
            current_time = std::string(f[0]);
            tr.times.push_back(detail::parse_double(f[0], where));
            tr.states.emplace_back();
            tr.states.back().time = tr.times.back();
            tr.release.emplace_back();
            tr.sliding.emplace_back();
        }
        SystemState& x = tr.states.back();
        const auto node = static_cast<std::size_t>(detail::parse_double(f[1], where));
        if (node != x.node_count() + 1) throw ReportError(where + ": nodes out of order");
        const int layer = static_cast<int>(detail::parse_double(f[2], where));
        if (tr.times.size() == 1)
            layers.push_back(layer);
        else if (node > layers.size() || layers[node - 1] != layer)
            throw ReportError(where + ": layer column differs between samples");
        x.ldl.push_back(detail::parse_double(f[3], where));
        x.drug.push_back(detail::parse_double(f[4], where));
        x.denp.push_back(detail::parse_double(f[5], where));
        tr.release.back().push_back(detail::parse_double(f[6], where));
        tr.sliding.back().push_back(detail::parse_double(f[7], where));
    }
    if (tr.times.empty()) throw ReportError(path.string() + ": no samples");
    for (const auto& x : tr.states)
        if (x.node_count() != layers.size()) throw ReportError(path.string() + ": samples have unequal node counts");
    tr.sample_dt = tr.times.size() > 1 ? tr.times[1] - tr.times[0] : 0.0;
    lt.mesh = detail::mesh_from_layers(layers);
    return lt;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metric {
    std::string name;
    std::string layer;  ///< layer name or "wall"
    double value = 0.0;
    std::string units;
};

inline std::vector<Metric> validation_metrics(const ValidationResult& r) {
    std::vector<Metric> m;
    const char* units[3] = {"mg/dL", "ug/mL", "ug/mL"};
    for (std::size_t s = 0; s < 3; ++s) {
        const std::string sp(kSpeciesNames[s]);
        m.push_back({"mae_" + sp, "wall", r.mae[s].absolute, units[s]});
        m.push_back({"mae_pct_of_max_" + sp, "wall", r.mae[s].percent_of_max, "%"});
        m.push_back({"reference_max_" + sp, "wall", r.mae[s].reference_max, units[s]});
    }
    return m;
}

inline std::vector<Metric> control_metrics(const ControlResult& r, const Mesh& coarse) {
    std::vector<Metric> m;
    const auto& final_state = r.trajectory.states.back();
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        const auto [a, b] = coarse.layer_nodes(l);
        const std::string layer(kLayerNames[l]);
        double y = 0.0;
        for (std::size_t j = a; j < b; ++j) y += final_state.ldl[j];
        m.push_back({"reduction_rate", layer, r.reduction[l].percent, "%"});
        m.push_back({"reduction_excluded_nodes", layer, static_cast<double>(r.reduction[l].excluded), "count"});
        m.push_back({"final_mean_ldl", layer, y / static_cast<double>(b - a), "mg/dL"});
        m.push_back({"drug_auc", layer, r.layer_drug_auc[l], "ug h/mL"});
    }
    m.push_back({"drug_auc", "wall", r.drug_auc, "ug h/mL"});
    return m;
}

inline void write_metrics(const std::filesystem::path& path, const std::vector<Metric>& metrics) {
    auto out = detail::open_out(path);
    out << "metric,layer,value,units\n";
    for (const auto& m : metrics) out << m.name << ',' << m.layer << ',' << detail::fmt(m.value) << ',' << m.units << '\n';
}

inline std::vector<Metric> read_metrics(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    detail::expect_header(in, "metric,layer,value,units", path);
    std::vector<Metric> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto f = detail::split(line);
        if (f.size() != 4) throw ReportError(path.string() + ": expected 4 fields");
        out.push_back({std::string(f[0]), std::string(f[1]), detail::parse_double(f[2], path.string()), std::string(f[3])});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tables

inline void write_bounds(const std::filesystem::path& path, const BoundEstimates& b, const Mesh& coarse) {
    auto out = detail::open_out(path);
    out << "# " << b.provenance << '\n';
    out << "node,layer,f_bar,g_bar,y_bar,z_bar,b_ss\n";
    for (std::size_t j = 0; j < b.size(); ++j)
        out << j + 1 << ',' << detail::layer_label(coarse, j) << ',' << detail::fmt(b.f_bar[j]) << ','
            << detail::fmt(b.g_bar[j]) << ',' << detail::fmt(b.y_bar[j]) << ',' << detail::fmt(b.z_bar[j]) << ','
            << detail::fmt(b.b_ss[j]) << '\n';
}

/// `pass` is true/false for checked nodes and the exclusion reason otherwise.
inline void write_feasibility(const std::filesystem::path& path, const FeasibilityReport& rep, const Mesh& coarse) {
    auto out = detail::open_out(path);
    out << "node,layer,required_uc,pass\n";
    for (const auto& row : rep.rows) {
        const char* verdict = row.status == NodeStatus::Pass   ? "true"
                            : row.status == NodeStatus::Fail   ? "false"
                                                               : to_string(row.status);
        out << row.node + 1 << ',' << detail::layer_label(coarse, row.node) << ',' << detail::fmt(row.required_uc)
            << ',' << verdict << '\n';
    }
}

inline void write_profiles(const std::filesystem::path& path, const ControlResult& r, const Mesh& coarse) {
    auto out = detail::open_out(path);
    out << "node,layer,uncontrolled_mgdl,desired_mgdl,final_mgdl,final_s\n";
    const auto& fin = r.trajectory.states.back();
    for (std::size_t j = 0; j < r.uncontrolled.size(); ++j)
        out << j + 1 << ',' << detail::layer_label(coarse, j) << ',' << detail::fmt(r.uncontrolled[j]) << ','
            << detail::fmt(r.desired[j]) << ',' << detail::fmt(fin.ldl[j]) << ','
            << detail::fmt(r.trajectory.sliding.back()[j]) << '\n';
}

inline std::vector<double> read_uncontrolled_profile(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    detail::expect_header(in, "node,layer,uncontrolled_mgdl,desired_mgdl,final_mgdl,final_s", path);
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto f = detail::split(line);
        if (f.size() != 6) throw ReportError(path.string() + ": expected 6 fields");
        out.push_back(detail::parse_double(f[2], path.string()));
    }
    return out;
}

/// Lumen nanoparticle input and wall-mean drug concentration over time.
inline void write_series(const std::filesystem::path& path, const Trajectory& tr, double lumen_denp) {
    auto out = detail::open_out(path);
    out << "time_s,lumen_denp_ugml,mean_drug_ugml\n";
    const auto mean = mean_series(tr, Species::Drug, 0, tr.states.front().node_count());
    for (std::size_t k = 0; k < tr.sample_count(); ++k)
        out << detail::fmt(tr.times[k]) << ',' << detail::fmt(lumen_denp) << ',' << detail::fmt(mean[k]) << '\n';
}

/// Per-layer min/mean/max of y, z, n, s and u at every sample.
inline void write_layer_series(const std::filesystem::path& path, const Trajectory& tr, const Mesh& coarse) {
    auto out = detail::open_out(path);
    out << "time_s,layer,quantity,min,mean,max\n";
    for (std::size_t k = 0; k < tr.sample_count(); ++k) {
        const SystemState& x = tr.states[k];
        const std::vector<double>* series[5] = {&x.ldl, &x.drug, &x.denp, &tr.sliding[k], &tr.release[k]};
        const char* names[5] = {"y_mgdl", "z_ugml", "n_ugml", "s_value", "u_molps"};
        for (std::size_t l = 0; l < kLayerCount; ++l) {
            const auto [a, b] = coarse.layer_nodes(l);
            for (std::size_t q = 0; q < 5; ++q) {
                const auto& v = *series[q];
                double lo = v[a], hi = v[a], sum = 0.0;
                for (std::size_t j = a; j < b; ++j) {
                    lo = std::min(lo, v[j]);
                    hi = std::max(hi, v[j]);
                    sum += v[j];
                }
                out << detail::fmt(tr.times[k]) << ',' << kLayerNames[l] << ',' << names[q] << ',' << detail::fmt(lo)
                    << ',' << detail::fmt(sum / static_cast<double>(b - a)) << ',' << detail::fmt(hi) << '\n';
            }
        }
    }
}

/// Run diagnostics that need plant-level data and so are not re-derivable from
/// the stored coarse trajectory.
inline void write_monitor(const std::filesystem::path& path, const std::vector<std::pair<std::string, double>>& rows) {
    auto out = detail::open_out(path);
    out << "quantity,value\n";
    for (const auto& [k, v] : rows) out << k << ',' << detail::fmt(v) << '\n';
}

inline std::vector<std::pair<std::string, double>> stats_rows(const std::string& prefix, const IntegrationStats& s) {
    return {{prefix + "steps_accepted", static_cast<double>(s.accepted)},
            {prefix + "steps_rejected", static_cast<double>(s.rejected)},
            {prefix + "rhs_evaluations", static_cast<double>(s.rhs_evaluations)},
            {prefix + "clamped_total", s.clamped_total},
            {prefix + "most_negative_before_clamp", s.most_negative},
            {prefix + "max_clamp_fraction", s.max_clamp_fraction}};
}

// ---------------------------------------------------------------------------
// Whole reports

namespace detail {
inline void write_echo(const std::filesystem::path& dir, const ParamSet& params) {
    auto out = open_out(dir / "config.echo");
    out << params.echo();
}

inline void prepare_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ReportError("cannot create output directory '" + dir.string() + "': " + ec.message());
}
}  // namespace detail

inline void write_validation_report(const std::filesystem::path& dir, const ParamSet& params, const Experiment& e,
                                    const ValidationResult& r) {
    detail::prepare_dir(dir);
    detail::write_echo(dir, params);
    const TransportModel lumped(e.wall, 1);
    write_trajectory(dir / "trajectory.csv", r.lumped, lumped.mesh());
    write_trajectory(dir / "reference_trajectory.csv", r.reference, lumped.mesh());
    write_metrics(dir / "metrics.csv", validation_metrics(r));
    auto rows = stats_rows("lumped_", r.lumped_stats);
    const auto ref = stats_rows("reference_", r.reference_stats);
    rows.insert(rows.end(), ref.begin(), ref.end());
    write_monitor(dir / "monitor.csv", rows);
}

inline void write_control_report(const std::filesystem::path& dir, const ParamSet& params, const Experiment& e,
                                 const ControlResult& r) {
    detail::prepare_dir(dir);
    detail::write_echo(dir, params);
    const TransportModel lumped(e.wall, 1);
    const Mesh& mesh = lumped.mesh();
    write_trajectory(dir / "trajectory.csv", r.trajectory, mesh);
    write_metrics(dir / "metrics.csv", control_metrics(r, mesh));
    write_profiles(dir / "profiles.csv", r, mesh);
    write_series(dir / "series.csv", r.trajectory, e.wall.env.lumen_denp);
    write_layer_series(dir / "layer_series.csv", r.trajectory, mesh);
    write_bounds(dir / "bounds.csv", r.nominal_bounds, mesh);
    write_feasibility(dir / "feasibility.csv", r.feasibility, mesh);
    auto rows = std::vector<std::pair<std::string, double>>{
        {"reachability_checked_points", static_cast<double>(r.monitor.checked)},
        {"reachability_negative_points", static_cast<double>(r.monitor.negative)},
        {"reachability_fraction", r.monitor.fraction()},
        {"reachability_worst_rate", r.monitor.checked ? r.monitor.worst_rate : 0.0},
        {"reachability_applied_fraction", r.monitor.applied_fraction()},
        {"reachability_range_checked_points", static_cast<double>(r.monitor.checked_all)},
        {"reachability_range_negative_points", static_cast<double>(r.monitor.negative_all)},
        {"feasibility_max_required_uc", r.feasibility.max_required},
        {"feasibility_pass", r.feasibility.pass ? 1.0 : 0.0},
        {"feasibility_excluded_nodes", static_cast<double>(r.feasibility.infeasible_nodes)}};
    const auto st = stats_rows("plant_", r.stats);
    rows.insert(rows.end(), st.begin(), st.end());
    write_monitor(dir / "monitor.csv", rows);
}

inline void write_sweep_report(const std::filesystem::path& dir, const ParamSet& params, const Experiment& e,
                               const SweepResult& sweep, const FeasibilityReport* feasibility) {
    detail::prepare_dir(dir);
    detail::write_echo(dir, params);
    const TransportModel lumped(e.wall, 1);
    write_bounds(dir / "bounds.csv", sweep.bounds, lumped.mesh());
    {
        auto out = detail::open_out(dir / "sweep_draws.csv");
        out << "sample,used,draw\n";
        for (std::size_t k = 0; k < sweep.draws.size(); ++k) {
            const bool used = std::find(sweep.rejected.begin(), sweep.rejected.end(), k) == sweep.rejected.end();
            out << k + 1 << ',' << (used ? 1 : 0) << ",\"" << sweep.draws[k].describe() << "\"\n";
        }
    }
    std::vector<std::pair<std::string, double>> rows{{"samples", static_cast<double>(sweep.draws.size())},
                                                     {"rejected_unstable", static_cast<double>(sweep.rejected.size())},
                                                     {"max_raw_ldl", sweep.max_raw_ldl}};
    if (feasibility) {
        write_feasibility(dir / "feasibility.csv", *feasibility, lumped.mesh());
        rows.push_back({"feasibility_max_required_uc", feasibility->max_required});
        rows.push_back({"feasibility_pass", feasibility->pass ? 1.0 : 0.0});
        rows.push_back({"feasibility_excluded_nodes", static_cast<double>(feasibility->infeasible_nodes)});
    }
    write_monitor(dir / "monitor.csv", rows);
}

struct VerifyResult {
    std::size_t checked = 0;
    std::vector<std::string> mismatches;

    bool ok() const { return mismatches.empty() && checked > 0; }
};

/**
 * @brief Recomputes a report's metrics from its stored trajectories and compares
 * them with metrics.csv exactly.
 */
inline VerifyResult verify_report(const std::filesystem::path& dir) {
    const auto stored = read_metrics(dir / "metrics.csv");
    std::vector<Metric> recomputed;
    const LoadedTrajectory main = read_trajectory(dir / "trajectory.csv");
    if (std::filesystem::exists(dir / "reference_trajectory.csv")) {
        const LoadedTrajectory ref = read_trajectory(dir / "reference_trajectory.csv");
        ValidationResult r;
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp})
            r.mae[static_cast<std::size_t>(s)] = species_mae(main.trajectory, ref.trajectory, s);
        recomputed = validation_metrics(r);
    } else if (std::filesystem::exists(dir / "profiles.csv")) {
        ControlResult r;
        r.trajectory = main.trajectory;
        r.uncontrolled = read_uncontrolled_profile(dir / "profiles.csv");
        if (r.uncontrolled.size() != main.mesh.node_count()) throw ReportError("profiles.csv node count mismatch");
        compute_control_metrics(main.mesh, r);
        recomputed = control_metrics(r, main.mesh);
    } else {
        throw ReportError("'" + dir.string() + "' is neither a validation nor a control report");
    }
    VerifyResult v;
    std::map<std::pair<std::string, std::string>, double> want;
    for (const auto& m : recomputed) want[{m.name, m.layer}] = m.value;
    for (const auto& m : stored) {
        auto it = want.find({m.name, m.layer});
        ++v.checked;
        if (it == want.end())
            v.mismatches.push_back("unexpected metric " + m.name + "/" + m.layer);
        else if (detail::fmt(it->second) != detail::fmt(m.value))
            v.mismatches.push_back(m.name + "/" + m.layer + ": stored " + detail::fmt(m.value) + ", recomputed " +
                                   detail::fmt(it->second));
    }
    if (stored.size() != recomputed.size()) v.mismatches.push_back("metric count differs from recomputation");
    return v;
}

}  // namespace spdenp
