#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "spdenp/metrics.hpp"
#include "spdenp/simulation.hpp"
#include "spdenp/transport.hpp"
#include "test_support.hpp"

using namespace spdenp;
using Catch::Approx;

namespace {
WallParams inert_wall(double lumen_ldl, double lumen_denp) {
    auto w = testing_support::uniform_wall(4, 1e-7, 0.0, 1e-15, 0.0, 0.0);
    w.env.lumen_ldl = lumen_ldl;
    w.env.lumen_denp = lumen_denp;
    w.kinetics.ldl_loss.rate = 0.0;
    w.kinetics.drug_loss.rate = 0.0;
    return w;
}

const SolverOptions kTight{Scheme::Implicit, 1e-9, 1e-12, 60.0, 1e-10, 50};
}  // namespace

TEST_CASE("zero dynamics leave the state unchanged") {
    auto w = testing_support::uniform_wall(2, 1e-7, 0.0, 0.0, 0.0, 0.0);
    w.kinetics.ldl_loss.rate = 0.0;
    w.kinetics.drug_loss.rate = 0.0;
    const TransportModel m(w);
    SystemState x = SystemState::zeros(m.node_count());
    for (std::size_t j = 0; j < m.node_count(); ++j) {
        x.ldl[j] = 10.0 + static_cast<double>(j);
        x.drug[j] = 0.5 * static_cast<double>(j);
        x.denp[j] = 3.0;
    }
    const std::vector<double> u(m.node_count(), 0.0);
    for (double dt : {1e-3, 1.0, 1e5}) {
        const SystemState y = step_lumped(x, u, m, dt);
        CHECK(y.ldl == x.ldl);
        CHECK(y.drug == x.drug);
        CHECK(y.denp == x.denp);
    }
}

TEST_CASE("pure diffusion converges to the uniform lumen value") {
    const WallParams w = inert_wall(200.0, 0.0);
    const TransportModel m(w);
    // the uniform vector is an exact equilibrium of the stencil
    SystemState uniform = SystemState::zeros(m.node_count());
    uniform.ldl.assign(m.node_count(), 200.0);
    SystemState dx;
    const std::vector<double> u(m.node_count(), 0.0);
    m.rhs(uniform, u, dx);
    for (double v : dx.ldl) CHECK(std::abs(v) <= 1e-12 * 200.0);

    SystemState x = SystemState::zeros(m.node_count());
    x = step_lumped(x, u, m, 2e5, kTight);
    double err = 0.0;
    for (double v : x.ldl) err = std::max(err, std::abs(v - 200.0));
    CHECK(err <= 1e-6 * 200.0);
}

TEST_CASE("the release source adds gain * n * u to the drug rate only") {
    auto w = testing_support::uniform_wall(2, 1e-7, 0.0, 0.0, 0.0, 0.0);
    w.kinetics.ldl_loss.rate = 0.0;
    w.kinetics.drug_loss.rate = 0.0;
    w.env.denp_mass_ratio = 4.0;
    const TransportModel m(w);
    SystemState x = SystemState::zeros(m.node_count());
    x.denp[3] = 8.0;
    std::vector<double> u(m.node_count(), 0.0);
    u[3] = 5.0;
    SystemState dx;
    m.rhs(x, u, dx);
    const double dt = 0.25;
    for (std::size_t j = 0; j < m.node_count(); ++j) {
        CHECK(dt * dx.drug[j] == (j == 3 ? dt * 8.0 * 5.0 / 4.0 : 0.0));
        CHECK(dx.ldl[j] == 0.0);
        CHECK(dx.denp[j] == 0.0);
    }
}

TEST_CASE("sampling records horizon / sample_dt + 1 states") {
    const TransportModel m(testing_support::small_wall());
    IntegrateOptions o;
    o.horizon = 600.0;
    o.sample_dt = 60.0;
    o.hold = 30.0;
    const auto policy = open_loop([](double, std::span<double> u) { std::fill(u.begin(), u.end(), 50.0); });
    const Trajectory t = integrate(m, SystemState::zeros(m.node_count()), policy, o);
    CHECK(t.sample_count() == 11);
    for (std::size_t k = 0; k < t.sample_count(); ++k) CHECK(t.times[k] == Approx(60.0 * static_cast<double>(k)));

    o.horizon = 0.0;
    CHECK_THROWS_AS(integrate(m, SystemState::zeros(m.node_count()), policy, o), UsageError);
    o.horizon = 600.0;
    o.sample_dt = 70.0;
    CHECK_THROWS_AS(integrate(m, SystemState::zeros(m.node_count()), policy, o), UsageError);
}

TEST_CASE("repeated integration is bit-identical") {
    const TransportModel m(testing_support::small_wall());
    IntegrateOptions o;
    o.horizon = 1200.0;
    o.sample_dt = 120.0;
    o.hold = 60.0;
    const RandomInput input(99, m.node_count(), 60.0, 0.0, 200.0);
    auto run = [&] { return integrate(m, SystemState::zeros(m.node_count()), open_loop(input), o); };
    const Trajectory a = run(), b = run();
    for (std::size_t k = 0; k < a.sample_count(); ++k) {
        CHECK(a.states[k].ldl == b.states[k].ldl);
        CHECK(a.states[k].drug == b.states[k].drug);
        CHECK(a.states[k].denp == b.states[k].denp);
    }
}

TEST_CASE("refinement 1 reference equals the lumped step exactly") {
    const auto w = testing_support::small_wall();
    const TransportModel m(w, 1);
    SystemState x = SystemState::zeros(m.node_count());
    x.ldl = uncontrolled_equilibrium(m, 200.0);
    std::vector<double> u(m.node_count(), 75.0);
    const SystemState a = step_lumped(x, u, m, 500.0);
    const SystemState b = step_reference(x, u, m, 500.0);
    CHECK(a.ldl == b.ldl);
    CHECK(a.drug == b.drug);
    CHECK(a.denp == b.denp);
}

TEST_CASE("restriction samples coincident nodes and inputs spread to the nearest node") {
    SystemState fine = SystemState::zeros(6);
    for (std::size_t j = 0; j < 6; ++j) fine.ldl[j] = static_cast<double>(j);
    const SystemState c = restrict_state(fine, 3);
    CHECK(c.ldl == std::vector<double>{2.0, 5.0});
    std::vector<double> spread(6);
    const std::vector<double> coarse{1.0, 7.0};
    expand_input(coarse, 3, spread);
    CHECK(spread == std::vector<double>{1, 1, 1, 1, 7, 7});
    std::vector<double> spread4(8);
    expand_input(coarse, 4, spread4);
    CHECK(spread4 == std::vector<double>{1, 1, 1, 1, 1, 1, 7, 7});
}

TEST_CASE("pure diffusion equilibrium is uniform on the fine mesh") {
    const TransportModel fine(inert_wall(150.0, 0.0), 4);
    const auto y = uncontrolled_equilibrium(fine, 150.0);
    for (double v : y) CHECK(v == Approx(150.0).epsilon(1e-10));
}

TEST_CASE("uncontrolled equilibrium: zero load, uniformity, linearity, comparison") {
    const TransportModel inert(inert_wall(0.0, 0.0));
    for (double v : uncontrolled_equilibrium(inert, 0.0)) CHECK(v == 0.0);
    for (double v : uncontrolled_equilibrium(inert, 80.0)) CHECK(v == Approx(80.0).epsilon(1e-10));
    CHECK_THROWS_AS(uncontrolled_equilibrium(inert, -1.0), UsageError);

    const auto w = wall_params_from(testing_support::default_param_set());
    const TransportModel m(w);
    const auto y1 = uncontrolled_equilibrium(m, 100.0);
    const auto y2 = uncontrolled_equilibrium(m, 200.0);
    const auto y3 = uncontrolled_equilibrium(m, 201.0);
    for (std::size_t j = 0; j < y1.size(); ++j) {
        CHECK(y2[j] == Approx(2.0 * y1[j]).epsilon(1e-12));
        CHECK(y3[j] >= y2[j]);
    }
}

TEST_CASE("a wall too short for its interface rows is rejected") {
    ParamSet p = testing_support::default_param_set();
    for (const char* o : {"geometry.layer1.length=4e-7", "geometry.layer2.length=1e-6", "geometry.layer3.length=4e-7",
                          "geometry.layer4.length=4e-6"})
        p.apply_override(o);
    const TransportModel m(wall_params_from(p));
    CHECK(spectral_abscissa(m.coefficients().ldl) > 0.0);
    CHECK_THROWS_AS(uncontrolled_equilibrium(m, 200.0), ParameterError);
}

TEST_CASE("default blocks are Hurwitz") {
    const auto w = wall_params_from(testing_support::default_param_set());
    const TransportModel m(w);
    CHECK(spectral_abscissa(m.coefficients().ldl) < 0.0);
    CHECK(spectral_abscissa(m.coefficients().denp) < 0.0);
    CHECK(steady_state_denp(m).spectral_abscissa < 0.0);
}

TEST_CASE("steady nanoparticle profile: zero, uniform and the integration oracle") {
    const TransportModel zero(inert_wall(0.0, 0.0));
    for (double v : steady_state_denp(zero).profile) CHECK(v == 0.0);
    const TransportModel inert(inert_wall(0.0, 90.0));
    for (double v : steady_state_denp(inert).profile) CHECK(v == Approx(90.0).epsilon(1e-10));

    const TransportModel m(testing_support::small_wall());
    const auto nss = steady_state_denp(m).profile;
    SystemState x = SystemState::zeros(m.node_count());
    const std::vector<double> u(m.node_count(), 0.0);
    x = step_lumped(x, u, m, 5e5, kTight);
    for (std::size_t j = 0; j < nss.size(); ++j) CHECK(x.denp[j] == Approx(nss[j]).epsilon(1e-3));
}

TEST_CASE("io dynamics: zero state and the gain by substitution") {
    auto w = testing_support::uniform_wall(2, 1e-7, 0.0, 1e-15, 1e-4, 1e-8);
    w.env.lumen_ldl = 0.0;
    w.env.lumen_denp = 0.0;
    {
        const TransportModel m(w);
        const SystemState x = SystemState::zeros(m.node_count());
        for (std::size_t j = 0; j < m.node_count(); ++j) {
            const auto d = io_dynamics(m, x, j);
            CHECK(d.g == 0.0);
            CHECK(d.f == 0.0);
            CHECK(d.b == 0.0);
        }
    }
    w.kinetics.ldl_loss = {2.0, 1, 1};
    const TransportModel m(w);
    SystemState x = SystemState::zeros(m.node_count());
    x.ldl[2] = 3.0;
    x.denp[2] = 4.0;
    x.drug[2] = 0.3;
    CHECK(io_dynamics(m, x, 2).b == Approx(24.0));
    CHECK_THROWS_AS(io_dynamics(m, x, m.node_count()), UsageError);
}

TEST_CASE("io dynamics reconstruct the second derivative of LDL") {
    const auto r = testing_support::second_derivative_oracle();
    INFO("max relative error " << r.max_relative_error << " over " << r.probes << " probes");
    CHECK(r.probes == 72);
    CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("nanoparticle dynamics do not depend on the release") {
    const TransportModel m(testing_support::small_wall());
    IntegrateOptions o;
    o.horizon = 3600.0;
    o.sample_dt = 300.0;
    o.hold = 60.0;
    o.solver = kTight;
    const SystemState x0 = SystemState::zeros(m.node_count());
    const Trajectory open = integrate(m, x0, open_loop([](double, std::span<double>) {}), o);
    const Trajectory driven = integrate(m, x0, open_loop(RandomInput(5, m.node_count(), 60.0, 0.0, 200.0)), o);
    const MaeResult d = species_mae(driven, open, Species::Denp);
    CHECK(d.percent_of_max < 1e-5);
    const MaeResult z = species_mae(driven, open, Species::Drug);
    CHECK(z.absolute > 0.0);
}

TEST_CASE("states stay non-negative and clamping is negligible") {
    const auto w = wall_params_from(testing_support::default_param_set());
    const TransportModel m(w);
    SystemState x = SystemState::zeros(m.node_count());
    x.ldl = uncontrolled_equilibrium(m, 200.0);
    IntegrateOptions o;
    o.horizon = 3600.0;
    o.sample_dt = 600.0;
    o.hold = 60.0;
    o.solver = {Scheme::Implicit, 1e-4, 1e-9, 60.0, 1e-9, 50};
    IntegrationStats stats;
    const Trajectory t = integrate(m, x, open_loop(RandomInput(17, m.node_count(), 60.0, 0.0, 200.0)), o, &stats);
    double lo = 0.0;
    for (const auto& st : t.states)
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp})
            for (double v : st[s]) lo = std::min(lo, v);
    CHECK(lo >= 0.0);
    CHECK(stats.max_clamp_fraction <= 1e-9);
}

TEST_CASE("stiff failure reports the node and a suggested step") {
    const TransportModel m(testing_support::small_wall());
    SystemState x = SystemState::zeros(m.node_count());
    const std::vector<double> u(m.node_count(), 0.0);
    SolverOptions starved{Scheme::Explicit, 1e-10, 1e-14, 60.0, 1e-3, 2};
    auto w = testing_support::small_wall();
    w.transport.ldl.layers[1].diffusivity = 1e-9;  // stiff enough to defeat explicit steps above 1e-3 s
    const TransportModel stiff(w);
    x.ldl = uncontrolled_equilibrium(stiff, 100.0);
    try {
        step_lumped(x, u, stiff, 100.0, starved);
        FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
        CHECK(e.node() >= 1);
        CHECK(e.suggested_dt() > 0.0);
    }
}
