// Command-line driver: model validation, closed-loop control, bound sweeps,
// feasibility and equilibrium profiles. Exit status 0 on success, 1 on
// configuration or parameter errors, 2 on numerical failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spdenp/config.hpp"
#include "spdenp/controller.hpp"
#include "spdenp/errors.hpp"
#include "spdenp/experiments.hpp"
#include "spdenp/report.hpp"
#include "spdenp/transport.hpp"
#include "spdenp/wall_model.hpp"

#ifndef SPDENP_DEFAULT_PARAMS
#define SPDENP_DEFAULT_PARAMS "params/params.default"
#endif

namespace fs = std::filesystem;
using namespace spdenp;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    bool quiet = false;
    unsigned threads = 0;
    std::optional<double> lumen_ldl;
    std::string verify_dir;
};

std::string resolve_config(const std::string& requested) {
    if (!requested.empty()) {
        if (!fs::exists(requested)) throw ConfigError("parameter file '" + requested + "' does not exist");
        return requested;
    }
    for (const char* candidate : {"params/params.default", SPDENP_DEFAULT_PARAMS})
        if (fs::exists(candidate)) return candidate;
    throw ConfigError("no parameter file: pass --config PATH (looked for params/params.default and " +
                      std::string(SPDENP_DEFAULT_PARAMS) + ")");
}

ParamSet load(const Common& c) {
    ParamSet p = load_params(resolve_config(c.config));
    for (const auto& o : c.overrides) p.apply_override(o);
    if (c.seed) p.set("experiment.seed", std::to_string(*c.seed), "--seed");
    p.require_complete();
    return p;
}

void print_provenance(const ParamSet& p, const Common& c) {
    if (c.quiet || p.provenance().empty()) return;
    std::cout << "Parameter provenance:\n";
    for (const auto& note : p.provenance()) std::cout << "  " << note << '\n';
    std::cout << '\n';
}

fs::path out_dir(const Common& c, const char* fallback) { return c.out.empty() ? fs::path("out") / fallback : fs::path(c.out); }

int cmd_validate(const Common& c) {
    const ParamSet p = load(c);
    print_provenance(p, c);
    const Experiment e = experiment_from(p, ScenarioKind::Validation);
    const ValidationResult r = run_validation(e);
    const fs::path dir = out_dir(c, "validate");
    write_validation_report(dir, p, e, r);
    if (!c.quiet) {
        std::printf("Lumped vs reference (refinement %d), %.0f s horizon\n", e.scenario.refinement, e.scenario.horizon);
        std::printf("%-8s %14s %14s %12s\n", "species", "MAE", "max(ref)", "MAE % max");
        for (std::size_t s = 0; s < 3; ++s)
            std::printf("%-8s %14.6g %14.6g %11.4f%%\n", std::string(kSpeciesNames[s]).c_str(), r.mae[s].absolute,
                        r.mae[s].reference_max, r.mae[s].percent_of_max);
        std::printf("report: %s\n", dir.string().c_str());
    }
    return 0;
}

int cmd_control(const Common& c) {
    const ParamSet p = load(c);
    print_provenance(p, c);
    const Experiment e = experiment_from(p, ScenarioKind::Control);
    const ControlResult r = run_control(e);
    const fs::path dir = out_dir(c, "control");
    write_control_report(dir, p, e, r);
    if (!c.quiet) {
        const TransportModel lumped(e.wall, 1);
        const auto& fin = r.trajectory.states.back();
        std::printf("Closed loop, lumen LDL %.6g mg/dL, %.0f s, %s plant\n", e.wall.env.lumen_ldl, e.scenario.horizon,
                    e.scenario.reference_plant ? "reference" : "lumped");
        std::printf("%-12s %12s %16s %18s\n", "layer", "reduction %", "final mean y", "drug AUC ug h/mL");
        for (std::size_t l = 0; l < kLayerCount; ++l) {
            const auto [a, b] = lumped.mesh().layer_nodes(l);
            double y = 0.0;
            for (std::size_t j = a; j < b; ++j) y += fin.ldl[j];
            std::printf("%-12s %12.2f %16.4f %18.6g\n", std::string(kLayerNames[l]).c_str(), r.reduction[l].percent,
                        y / static_cast<double>(b - a), r.layer_drug_auc[l]);
        }
        std::printf("wall-mean drug AUC: %.6g ug h/mL\n", r.drug_auc);
        std::printf("reachability: %zu of %zu sampled feasible-node points with s > s_c have ds/dt < 0 under the "
                    "law (%.2f%%; %.2f%% under the held release); %zu of %zu over the whole range\n",
                    r.monitor.negative, r.monitor.checked, 100.0 * r.monitor.fraction(),
                    100.0 * r.monitor.applied_fraction(), r.monitor.negative_all, r.monitor.checked_all);
        std::printf("feasibility (nominal-run bounds): %s, max required u_c %.6g, %zu nodes excluded\n",
                    r.feasibility.pass ? "pass" : "fail", r.feasibility.max_required, r.feasibility.infeasible_nodes);
        std::printf("report: %s\n", dir.string().c_str());
    }
    return 0;
}

int cmd_sweep(const Common& c, bool with_feasibility) {
    const ParamSet p = load(c);
    print_provenance(p, c);
    const Experiment e = experiment_from(p, with_feasibility ? ScenarioKind::Feasibility : ScenarioKind::Sweep);
    const SweepResult sweep = estimate_bounds(e, c.threads);
    std::optional<FeasibilityReport> feas;
    if (with_feasibility) {
        const TransportModel lumped(e.wall, 1);
        feas = min_feasible_uc(sweep.bounds, e.controller, default_node_range(lumped.mesh(), e.controller));
    }
    const fs::path dir = out_dir(c, with_feasibility ? "feasibility" : "sweep");
    write_sweep_report(dir, p, e, sweep, feas ? &*feas : nullptr);
    if (!c.quiet) {
        std::printf("%zu samples (%zu rejected as unstable); max LDL over used draws %.6g mg/dL\n", sweep.draws.size(),
                    sweep.rejected.size(), sweep.max_raw_ldl);
        if (feas) {
            std::size_t passed = 0, failed = 0;
            for (const auto& row : feas->rows) {
                passed += row.status == NodeStatus::Pass;
                failed += row.status == NodeStatus::Fail;
            }
            std::printf("u_c = %.6g: %s (max required %.6g; %zu pass, %zu fail, %zu excluded)\n", e.controller.u_max,
                        feas->pass ? "feasible" : "infeasible", feas->max_required, passed, failed,
                        feas->infeasible_nodes);
        }
        std::printf("report: %s\n", dir.string().c_str());
    }
    return 0;
}

int cmd_equilibrium(const Common& c) {
    ParamSet p = load(c);
    if (c.lumen_ldl) p.set("env.lumen_ldl", detail::fmt(*c.lumen_ldl), "--lumen-ldl");
    print_provenance(p, c);
    const WallParams w = wall_params_from(p);
    const TransportModel lumped(w, 1);
    const auto y = uncontrolled_equilibrium(lumped, w.env.lumen_ldl);
    const fs::path dir = out_dir(c, "equilibrium");
    fs::create_directories(dir);
    {
        std::ofstream echo(dir / "config.echo", std::ios::binary);
        echo << p.echo();
    }
    std::ofstream out(dir / "equilibrium.csv", std::ios::binary);
    if (!out) throw ReportError("cannot write '" + (dir / "equilibrium.csv").string() + "'");
    out << "node,layer,y_mgdl\n";
    for (std::size_t j = 0; j < y.size(); ++j)
        out << j + 1 << ',' << lumped.mesh().layer_of[j] + 1 << ',' << detail::fmt(y[j]) << '\n';
    if (!c.quiet) {
        std::printf("%-12s %14s %14s\n", "layer", "mean y", "max y");
        for (std::size_t l = 0; l < kLayerCount; ++l) {
            const auto [a, b] = lumped.mesh().layer_nodes(l);
            double sum = 0.0, hi = 0.0;
            for (std::size_t j = a; j < b; ++j) {
                sum += y[j];
                hi = std::max(hi, y[j]);
            }
            std::printf("%-12s %14.6g %14.6g\n", std::string(kLayerNames[l]).c_str(), sum / static_cast<double>(b - a),
                        hi);
        }
        std::printf("report: %s\n", dir.string().c_str());
    }
    return 0;
}

int cmd_verify(const Common& c) {
    const VerifyResult v = verify_report(c.verify_dir);
    for (const auto& m : v.mismatches) std::fprintf(stderr, "mismatch: %s\n", m.c_str());
    if (!c.quiet) std::printf("%zu metrics checked: %s\n", v.checked, v.ok() ? "consistent" : "INCONSISTENT");
    return v.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drug-release control in a four-layer arterial wall model"};
    app.require_subcommand(1);
    Common c;

    auto add_common = [&c](CLI::App* sub) {
        sub->add_option("--config", c.config, "parameter file (default: params/params.default)");
        sub->add_option("--out", c.out, "report directory (created if absent)");
        sub->add_option("--seed", c.seed, "override experiment.seed (unsigned 64-bit)");
        sub->add_option("--set", c.overrides, "override a parameter, key=value (repeatable)");
        sub->add_flag("--quiet", c.quiet, "suppress the summary");
    };
    auto* validate = app.add_subcommand("validate", "lumped model vs refined reference under a random input");
    auto* control = app.add_subcommand("control", "closed-loop release experiment");
    auto* sweep = app.add_subcommand("sweep", "Monte-Carlo bound estimation");
    auto* feasibility = app.add_subcommand("feasibility", "bound sweep followed by the u_c feasibility test");
    auto* equilibrium = app.add_subcommand("equilibrium", "uncontrolled LDL equilibrium profile");
    auto* verify = app.add_subcommand("verify", "recompute a report's metrics from its trajectories");
    for (auto* sub : {validate, control, sweep, feasibility, equilibrium}) add_common(sub);
    for (auto* sub : {sweep, feasibility})
        sub->add_option("--threads", c.threads, "worker threads (0 = hardware concurrency)");
    equilibrium->add_option("--lumen-ldl", c.lumen_ldl, "lumen LDL concentration [mg/dL]");
    verify->add_option("dir", c.verify_dir, "report directory")->required();
    verify->add_flag("--quiet", c.quiet, "suppress the summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*validate) return cmd_validate(c);
        if (*control) return cmd_control(c);
        if (*sweep) return cmd_sweep(c, false);
        if (*feasibility) return cmd_sweep(c, true);
        if (*equilibrium) return cmd_equilibrium(c);
        if (*verify) return cmd_verify(c);
    } catch (const IntegrationError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 1;
    } catch (const ParameterError& e) {
        std::fprintf(stderr, "parameter error: %s\n", e.what());
        return 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
