#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "spdenp/experiments.hpp"
#include "spdenp/metrics.hpp"
#include "spdenp/report.hpp"
#include "test_support.hpp"

using namespace spdenp;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

// Default wall on a 1 um mesh (2 + 10 + 2 + 200 nodes) with one-hour runs.
ParamSet small_params() {
    ParamSet p = testing_support::default_param_set();
    for (const char* o : {"geometry.mesh_size=1e-6", "experiment.validation_horizon=3600",
                          "experiment.validation_sample_dt=600", "experiment.control_horizon=3600",
                          "experiment.control_sample_dt=600", "sweep.horizon=3600", "sweep.sample_dt=600",
                          "sweep.samples=4", "solver.refinement=2"})
        p.apply_override(o);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("spdenp_test_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("random input: zero range, determinism and the sample mean") {
    const RandomInput zero(1, 8, 60.0, 0.0, 0.0);
    for (double t : {0.0, 59.0, 1e4})
        for (std::size_t j = 0; j < 8; ++j) CHECK(zero.value(j, t) == 0.0);

    const RandomInput a(42, 16, 60.0, 0.0, 200.0), b(42, 16, 60.0, 0.0, 200.0), c(43, 16, 60.0, 0.0, 200.0);
    std::size_t differ = 0;
    for (int k = 0; k < 100; ++k) {
        const double t = 37.0 * k;
        for (std::size_t j = 0; j < 16; ++j) {
            CHECK(a.value(j, t) == b.value(j, t));
            differ += a.value(j, t) != c.value(j, t);
        }
    }
    CHECK(differ > 1500);
    // piecewise constant within a hold slot
    CHECK(a.value(3, 60.0) == a.value(3, 119.9));

    const std::size_t n = 200000;
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += a.value(k % 16, 60.0 * static_cast<double>(k / 16));
    const double mean = sum / static_cast<double>(n);
    const double sigma = 200.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - 100.0) <= 3.0 * sigma);
}

TEST_CASE("mae, auc and reduction rate examples") {
    const std::vector<double> x{1.0, -2.0, 3.5};
    CHECK(mae(x, x).absolute == 0.0);
    const std::vector<double> shifted{1.25, -1.75, 3.75};
    const auto m = mae(shifted, x);
    CHECK(m.absolute == Approx(0.25));
    CHECK(m.reference_max == 3.5);
    CHECK(m.percent_of_max == Approx(100.0 * 0.25 / 3.5));
    CHECK_THROWS_AS(mae(x, std::vector<double>{1.0}), UsageError);

    const std::vector<double> t{0.0, 3600.0, 7200.0, 10800.0}, c(4, 2.5);
    CHECK(auc_hours(t, c) == Approx(7.5));

    const std::vector<double> unc{10.0, 20.0, 0.0, 40.0}, zero(4, 0.0);
    CHECK(reduction_rate(unc, unc, 0, 4).percent == 0.0);
    const auto full = reduction_rate(unc, zero, 0, 4);
    CHECK(full.percent == Approx(100.0));
    CHECK(full.excluded == 1);
    const std::vector<double> half{5.0, 10.0, 0.0, 20.0};
    CHECK(reduction_rate(unc, half, 0, 2).percent == Approx(50.0));
}

TEST_CASE("latin hypercube stratifies every dimension") {
    const auto draws = latin_hypercube(10, 0.2, 7);
    REQUIRE(draws.size() == 10);
    std::vector<int> hits(10, 0);
    for (const auto& d : draws) {
        const double v = (d.filtration - 0.8) / 0.4;
        hits[static_cast<std::size_t>(v * 10.0)]++;
        CHECK(d.diffusivity[1][2] >= 0.8);
        CHECK(d.diffusivity[1][2] <= 1.2);
    }
    for (int h : hits) CHECK(h == 1);
    const auto again = latin_hypercube(10, 0.2, 7);
    CHECK(again[4].reaction[2][3] == draws[4].reaction[2][3]);
    for (const auto& d : latin_hypercube(3, 0.0, 1)) CHECK(d.transmission[0][0] == 1.0);
}

TEST_CASE("validation with refinement 1 has zero error; zero input leaves the drug at zero") {
    ParamSet p = small_params();
    p.apply_override("solver.refinement=1");
    const Experiment e = experiment_from(p, ScenarioKind::Validation);
    const auto r = run_validation(e);
    for (const auto& m : r.mae) CHECK(m.absolute == 0.0);

    p = small_params();
    p.apply_override("experiment.input_max=0");
    const auto z = run_validation(experiment_from(p, ScenarioKind::Validation));
    for (const auto& st : z.lumped.states)
        for (double v : st.drug) CHECK(v == 0.0);
    CHECK(z.mae[static_cast<std::size_t>(Species::Drug)].absolute == 0.0);
    CHECK(z.mae[static_cast<std::size_t>(Species::Ldl)].absolute > 0.0);
}

TEST_CASE("zero release capacity gives zero reduction") {
    ParamSet p = small_params();
    p.apply_override("controller.u_max=0");
    const auto r = run_control(experiment_from(p, ScenarioKind::Control));
    for (const auto& red : r.reduction) CHECK(red.percent == Approx(0.0).margin(1e-9));
    CHECK(r.drug_auc == 0.0);
}

TEST_CASE("closed loop lowers LDL and reports the monitor") {
    const ParamSet p = small_params();
    const Experiment e = experiment_from(p, ScenarioKind::Control);
    const auto r = run_control(e);
    const auto& fin = r.trajectory.states.back().ldl;
    for (std::size_t j = 0; j < fin.size(); ++j) CHECK(fin[j] <= r.uncontrolled[j] + 0.1);
    CHECK(r.drug_auc > 0.0);
    CHECK(r.monitor.checked > 0);
    CHECK(r.range.last <= fin.size());
}

TEST_CASE("control reports are deterministic and self-consistent") {
    const ParamSet p = small_params();
    const Experiment e = experiment_from(p, ScenarioKind::Control);
    const fs::path d1 = scratch("det1"), d2 = scratch("det2");
    write_control_report(d1, p, e, run_control(e));
    write_control_report(d2, p, e, run_control(e));
    for (const auto& f : fs::directory_iterator(d1)) {
        INFO(f.path().filename().string());
        CHECK(slurp(f.path()) == slurp(d2 / f.path().filename()));
    }
    const VerifyResult v = verify_report(d1);
    CHECK(v.ok());
    CHECK(v.checked > 10);

    // tampering with a stored metric is detected
    const fs::path metrics = d1 / "metrics.csv";
    std::string text = slurp(metrics);
    const auto pos = text.find("reduction_rate,");
    REQUIRE(pos != std::string::npos);
    const auto comma = text.find(',', text.find(',', pos) + 1);
    text.insert(comma + 1, "1");
    std::ofstream(metrics, std::ios::binary) << text;
    CHECK_FALSE(verify_report(d1).ok());
}

TEST_CASE("validation reports verify") {
    const ParamSet p = small_params();
    const Experiment e = experiment_from(p, ScenarioKind::Validation);
    const fs::path dir = scratch("val");
    write_validation_report(dir, p, e, run_validation(e));
    CHECK(verify_report(dir).ok());
    const auto loaded = read_trajectory(dir / "reference_trajectory.csv");
    CHECK(loaded.trajectory.sample_count() == 7);
    CHECK(loaded.mesh.node_count() == 214);
}

TEST_CASE("zero-uncertainty single-sample bounds equal nominal maxima times the safety factor") {
    ParamSet p = small_params();
    p.apply_override("sweep.relative_range=0");
    p.apply_override("sweep.samples=1");
    const Experiment e = experiment_from(p, ScenarioKind::Sweep);
    const SweepResult s = estimate_bounds(e, 1);

    // independent replay of the nominal closed and open loops
    const TransportModel m(e.wall, 1);
    SystemState x0 = SystemState::zeros(m.node_count());
    x0.ldl = uncontrolled_equilibrium(m, e.wall.env.lumen_ldl);
    IntegrateOptions o{3600.0, 600.0, e.controller.update_interval, e.scenario.solver};
    ReleasePolicy policy(m, e.controller, e.scenario.seed);
    const Trajectory closed = integrate(
        m, x0, [&](double t, const SystemState& x, std::span<double> u, std::span<double> sl) { policy(t, x, u, sl); },
        o);
    o.hold = 600.0;
    const Trajectory open = integrate(m, x0, open_loop([](double, std::span<double>) {}), o);
    for (std::size_t j = 0; j < m.node_count(); ++j) {
        double y = -1e300, f = -1e300, g = -1e300;
        for (const Trajectory* t : {&closed, &open})
            for (const auto& st : t->states) {
                const auto io = io_dynamics(m, st, j);
                y = std::max(y, st.ldl[j]);
                f = std::max(f, io.f);
                g = std::max(g, io.g);
            }
        CHECK(s.bounds.y_bar[j] == Approx(1.1 * y).epsilon(1e-12));
        CHECK(s.bounds.f_bar[j] == Approx(f + 0.1 * std::abs(f)).epsilon(1e-12));
        CHECK(s.bounds.g_bar[j] == Approx(g + 0.1 * std::abs(g)).epsilon(1e-12));
        CHECK(s.bounds.b_ss[j] >= 0.0);
    }
}

TEST_CASE("sweep bounds are monotone in the sample count and thread independent") {
    const ParamSet p = small_params();
    const Experiment e = experiment_from(p, ScenarioKind::Sweep);
    const SweepResult s = estimate_bounds(e, 2);
    for (std::size_t n = 1; n < s.per_sample.size(); ++n) {
        const auto a = combine_samples(s, n), b = combine_samples(s, n + 1);
        for (std::size_t j = 0; j < a.y.size(); ++j) {
            CHECK(b.y[j] >= a.y[j]);
            CHECK(b.f[j] >= a.f[j]);
            CHECK(b.g[j] >= a.g[j]);
        }
    }
    const SweepResult serial = estimate_bounds(e, 1);
    CHECK(serial.bounds.y_bar == s.bounds.y_bar);
    CHECK(serial.bounds.f_bar == s.bounds.f_bar);
    // the drug only adds LDL loss, so no draw rises above its own uncontrolled equilibrium
    CHECK(s.rejected.empty());
    for (std::size_t k = 0; k < s.draws.size(); ++k) {
        const TransportModel m(perturb(e.wall, s.draws[k]), 1);
        const std::vector<double> eq = uncontrolled_equilibrium(m, e.wall.env.lumen_ldl);
        for (std::size_t j = 0; j < eq.size(); ++j) CHECK(s.per_sample[k].y[j] <= eq[j] * (1.0 + 1e-6) + 1e-9);
    }
}

TEST_CASE("sweep skips draws with an unstable LDL block") {
    ParamSet p = small_params();
    p.apply_override("geometry.mesh_size=1e-7");
    p.apply_override("sweep.samples=1");
    p.apply_override("sweep.relative_range=0");
    p.apply_override("sweep.horizon=60");
    p.apply_override("sweep.sample_dt=60");
    p.apply_override("ldl.layer3.reflection=0.8636");  // 1 - sigma 20 % below the default
    const Experiment e = experiment_from(p, ScenarioKind::Sweep);
    CHECK_THROWS_AS(estimate_bounds(e, 1), ParameterError);  // the only draw is unusable
}

TEST_CASE("cli: echoed configuration reproduces byte-identical output") {
    const fs::path base = scratch("cli");
    fs::create_directories(base);
    {
        std::ofstream cfg(base / "small.params");
        cfg << small_params().echo();
    }
    const std::string cli = SPDENP_CLI_PATH;
    auto run = [&](const fs::path& config, const fs::path& out) {
        const std::string cmd =
            "\"" + cli + "\" control --quiet --config \"" + config.string() + "\" --out \"" + out.string() + "\"";
        return std::system(cmd.c_str());
    };
    REQUIRE(run(base / "small.params", base / "a") == 0);
    REQUIRE(run(base / "a" / "config.echo", base / "b") == 0);
    std::size_t files = 0;
    for (const auto& f : fs::directory_iterator(base / "a")) {
        INFO(f.path().filename().string());
        CHECK(slurp(f.path()) == slurp(base / "b" / f.path().filename()));
        ++files;
    }
    CHECK(files >= 8);

    const std::string verify = "\"" + cli + "\" verify --quiet \"" + (base / "a").string() + "\"";
    CHECK(std::system(verify.c_str()) == 0);
    const std::string bad = "\"" + cli + "\" control --quiet --config \"" + (base / "small.params").string() +
                            "\" --set no.such.key=1 --out \"" + (base / "c").string() + "\" 2>/dev/null";
    const int status = std::system(bad.c_str());
    CHECK(WEXITSTATUS(status) == 1);
}

TEST_CASE("cli: equilibrium at zero lumen LDL is all zero") {
    const fs::path out = scratch("eq0");
    const std::string cmd = "\"" + std::string(SPDENP_CLI_PATH) + "\" equilibrium --quiet --lumen-ldl 0 --config \"" +
                            testing_support::params_path() + "\" --out \"" + out.string() + "\"";
    REQUIRE(std::system(cmd.c_str()) == 0);
    std::ifstream in(out / "equilibrium.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "node,layer,y_mgdl");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        CHECK(line.substr(line.rfind(',') + 1) == "0");
        ++rows;
    }
    CHECK(rows == 2140);
}
