#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <stdexcept>

#include "spdenp/wall_model.hpp"
#include "test_support.hpp"

using namespace spdenp;
using Catch::Approx;

TEST_CASE("default geometry maps 2140 nodes onto the four layers") {
    WallGeometry g;
    g.layer_lengths = {2e-6, 10e-6, 2e-6, 200e-6};
    g.mesh_size = 100e-9;
    const Mesh m = build_mesh(g);
    REQUIRE(m.node_count() == 2140);
    // 1-based: 1-20 endothelium, 21-120 intima, 121-140 IEL, 141-2140 media
    CHECK(m.layer_of[0] == 0);
    CHECK(m.layer_of[19] == 0);
    CHECK(m.layer_of[20] == 1);
    CHECK(m.layer_of[119] == 1);
    CHECK(m.layer_of[120] == 2);
    CHECK(m.layer_of[139] == 2);
    CHECK(m.layer_of[140] == 3);
    CHECK(m.layer_of[2139] == 3);
    CHECK(m.layer_end == std::array<std::size_t, 4>{20, 120, 140, 2140});
}

TEST_CASE("one node per layer") {
    WallGeometry g;
    g.layer_lengths = {1e-7, 1e-7, 1e-7, 1e-7};
    g.mesh_size = 1e-7;
    const Mesh m = build_mesh(g);
    REQUIRE(m.node_count() == 4);
    for (int i = 0; i < 4; ++i) CHECK(m.layer_of[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("non-integer layer length is a configuration error naming the layer") {
    WallGeometry g;
    g.layer_lengths = {1.5e-7, 1e-7, 1e-7, 1e-7};
    g.mesh_size = 1e-7;
    try {
        build_mesh(g);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("layer1") != std::string::npos);
    }
}

TEST_CASE("refinement multiplies every layer's node count") {
    WallGeometry g;
    g.layer_lengths = {2e-6, 10e-6, 2e-6, 200e-6};
    g.mesh_size = 100e-9;
    const Mesh m = build_mesh(g, 10);
    CHECK(m.node_count() == 21400);
    CHECK(m.layer_end == std::array<std::size_t, 4>{200, 1200, 1400, 21400});
}

TEST_CASE("pure diffusion stencil is (1, -2, 1) at interior nodes") {
    const double h = 1e-3;
    auto w = testing_support::uniform_wall(5, h, 0.0, h * h, 0.0, 0.0);
    const Mesh m = build_mesh(w.geometry);
    const auto c = build_species_coefficients(m, w.transport.ldl, 0.0);
    for (std::size_t j = 0; j + 1 < m.node_count(); ++j) {
        CHECK(c.c1[j] == Approx(1.0));
        CHECK(c.c2[j] == Approx(-2.0));
        CHECK(c.c3[j] == Approx(1.0));
    }
    // node q: outflow form (c1, c2, c3) = (d, -d, 0)
    CHECK(c.c1.back() == Approx(1.0));
    CHECK(c.c2.back() == Approx(-1.0));
    CHECK(c.c3.back() == 0.0);
}

TEST_CASE("pure decay gives (0, -kappa, 0)") {
    auto w = testing_support::uniform_wall(3, 1e-7, 0.0, 0.0, 0.37, 0.0);
    const Mesh m = build_mesh(w.geometry);
    const auto c = build_species_coefficients(m, w.transport.drug, 0.0);
    for (std::size_t j = 0; j < m.node_count(); ++j) {
        CHECK(c.c1[j] == 0.0);
        CHECK(c.c2[j] == Approx(-0.37));
        CHECK(c.c3[j] == 0.0);
    }
}

TEST_CASE("interface node carries -(D1 + D2)/h^2") {
    const double h = 1e-7;
    auto w = testing_support::uniform_wall(4, h, 0.0, 0.0, 0.0, 0.0);
    w.transport.ldl.layers[0].diffusivity = 2e-15;
    w.transport.ldl.layers[1].diffusivity = 5e-15;
    const Mesh m = build_mesh(w.geometry);
    const auto c = build_species_coefficients(m, w.transport.ldl, 0.0);
    const std::size_t first_intima = m.layer_end[0];  // 0-based index of node n1 + 1
    CHECK(c.c2[first_intima] == Approx(-(2e-15 + 5e-15) / (h * h)));
    CHECK(c.c1[first_intima] == Approx(2e-15 / (h * h)));
    CHECK(c.c3[first_intima] == Approx(5e-15 / (h * h)));
}

TEST_CASE("special interface rows use the neighbouring layer coefficients") {
    const double h = 1e-7, v = 1e-8;
    auto w = testing_support::uniform_wall(5, h, 0.0, 0.0, 0.0, v);
    auto& layers = w.transport.ldl.layers;
    layers[0] = {0.9, 1e-16, 0.0};
    layers[1] = {0.6, 4e-15, 1e-4};
    layers[2] = {0.7, 2e-16, 2e-4};
    layers[3] = {0.5, 3e-15, 3e-4};
    const Mesh m = build_mesh(w.geometry);
    const auto c = build_species_coefficients(m, w.transport.ldl, v);
    auto a = [&](int l) { return (1.0 - layers[l].reflection) * v / h; };
    auto d = [&](int l) { return layers[l].diffusivity / (h * h); };
    auto k = [&](int l) { return layers[l].reaction; };
    const std::size_t n1 = 5, n2 = 10, n3 = 15, q = 20;
    auto check_row = [&](std::size_t node, double c1, double c2, double c3) {
        INFO("node " << node);
        CHECK(c.c1[node - 1] == Approx(c1));
        CHECK(c.c2[node - 1] == Approx(c2));
        CHECK(c.c3[node - 1] == Approx(c3).margin(1e-300));
    };
    check_row(n1 + 1, a(0) + d(0), -a(0) - d(0) - d(1) - k(0), d(1));
    check_row(n2, a(1) + d(1), -a(1) - d(1) - d(2) - k(1), d(2));
    check_row(n2 + 1, a(1) + d(2), -a(2) - 2 * d(2) - k(2), d(2));
    check_row(n3 + 1, a(2) + d(2), -a(3) - d(2) - d(3) - k(3), d(3));
    check_row(q, a(3) + d(3), -d(3) - k(3), 0.0);
    // interior of intima
    check_row(8, a(1) + d(1), -a(1) - 2 * d(1) - k(1), d(1));
}

TEST_CASE("symmetric_interfaces changes only the last endothelium and IEL nodes") {
    const double h = 1e-7, v = 1e-8;
    auto w = testing_support::uniform_wall(5, h, 0.0, 0.0, 0.0, v);
    w.transport.ldl.layers[0] = {0.9, 1e-16, 0.0};
    w.transport.ldl.layers[1] = {0.6, 4e-15, 1e-4};
    w.transport.ldl.layers[2] = {0.7, 2e-16, 2e-4};
    w.transport.ldl.layers[3] = {0.5, 3e-15, 3e-4};
    const Mesh m = build_mesh(w.geometry);
    const auto plain = build_species_coefficients(m, w.transport.ldl, v, false);
    const auto sym = build_species_coefficients(m, w.transport.ldl, v, true);
    for (std::size_t j = 0; j < m.node_count(); ++j) {
        const bool changed = j == 4 || j == 14;
        INFO("node " << j + 1);
        CHECK((plain.c2[j] != sym.c2[j] || plain.c3[j] != sym.c3[j]) == changed);
    }
    CHECK(sym.c3[4] == Approx(4e-15 / (h * h)));
}

TEST_CASE("coefficient sums equal -k_r at interior nodes when V = 0") {
    auto w = testing_support::uniform_wall(6, 1e-7, 0.3, 0.0, 0.0, 0.0);
    for (std::size_t l = 0; l < 4; ++l)
        w.transport.denp.layers[l] = {0.3, 1e-15 * static_cast<double>(l + 1), 1e-4 * static_cast<double>(l + 1)};
    const Mesh m = build_mesh(w.geometry);
    const auto c = build_species_coefficients(m, w.transport.denp, 0.0);
    for (std::size_t l = 0; l < 4; ++l) {
        const auto [first, last] = m.layer_nodes(l);
        for (std::size_t j = first + 1; j + 1 < last; ++j)
            CHECK(c.c1[j] + c.c2[j] + c.c3[j] == Approx(-1e-4 * static_cast<double>(l + 1)));
    }
}

TEST_CASE("uniform-D stencil reproduces D times the second difference of a quadratic") {
    const double h = 1e-7, dcoef = 3e-15;
    auto w = testing_support::uniform_wall(5, h, 0.0, dcoef, 0.0, 0.0);
    const Mesh m = build_mesh(w.geometry);
    const auto c = build_species_coefficients(m, w.transport.ldl, 0.0);
    // profile p(r) = 2 r^2 / h^2 + r / h + 3 sampled at r = i h, i = 0..q+1
    auto p = [&](double i) { return 2.0 * i * i + i + 3.0; };
    for (std::size_t j = 1; j + 1 < m.node_count(); ++j) {
        const double i = static_cast<double>(j + 1);
        const double applied = c.c1[j] * p(i - 1) + c.c2[j] * p(i) + c.c3[j] * p(i + 1);
        CHECK(applied == Approx(dcoef / (h * h) * 4.0).epsilon(1e-9));
    }
}

TEST_CASE("coefficients depend on layer pattern, not absolute position") {
    // Two meshes whose layers differ only by a longer media: rows up to the
    // node before q coincide.
    auto w = testing_support::small_wall();
    auto w2 = w;
    w2.geometry.layer_lengths[3] *= 3.0;
    const Mesh m1 = build_mesh(w.geometry), m2 = build_mesh(w2.geometry);
    const auto c1 = build_coefficients(m1, w.transport, w.env);
    const auto c2 = build_coefficients(m2, w2.transport, w2.env);
    for (std::size_t j = 0; j + 1 < m1.node_count(); ++j) {
        CHECK(c1.ldl.c1[j] == c2.ldl.c1[j]);
        CHECK(c1.ldl.c2[j] == c2.ldl.c2[j]);
        CHECK(c1.ldl.c3[j] == c2.ldl.c3[j]);
    }
}

TEST_CASE("reaction rate and partials by substitution") {
    const PowerLawRate r{2.0, 1, 1};
    CHECK(reaction_rate(r, 3.0, 4.0) == 24.0);
    const auto d = reaction_partials(r, 3.0, 4.0);
    CHECK(d.d_ldl == 8.0);
    CHECK(d.d_drug == 6.0);
    CHECK(reaction_rate(r, 0.0, 5.0) == 0.0);
    CHECK(reaction_rate(r, 5.0, 0.0) == 0.0);
}

TEST_CASE("negative reaction arguments are domain errors") {
    const PowerLawRate r{1.0, 1, 1};
    CHECK_THROWS_AS(reaction_rate(r, -1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(reaction_partials(r, 1.0, -1e-9), std::domain_error);
}

TEST_CASE("reaction partials agree with central differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> val(0.5, 200.0), rate(1e-4, 1.0);
    std::uniform_int_distribution<int> expo(1, 3);
    for (int trial = 0; trial < 1000; ++trial) {
        const PowerLawRate r{rate(rng), expo(rng), expo(rng)};
        const double y = val(rng), z = val(rng) * 1e-3;
        const double hy = 1e-6 * y, hz = 1e-6 * z;
        const double fdy = (reaction_rate(r, y + hy, z) - reaction_rate(r, y - hy, z)) / (2 * hy);
        const double fdz = (reaction_rate(r, y, z + hz) - reaction_rate(r, y, z - hz)) / (2 * hz);
        const auto d = reaction_partials(r, y, z);
        CHECK(std::abs(fdy - d.d_ldl) <= 1e-6 * std::abs(d.d_ldl));
        CHECK(std::abs(fdz - d.d_drug) <= 1e-6 * std::abs(d.d_drug));
    }
}

TEST_CASE("sign conditions hold for random valid parameters") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto w = testing_support::small_wall();
    const Mesh m = build_mesh(w.geometry);
    std::size_t violations = 0;
    for (int trial = 0; trial < 200; ++trial) {
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp})
            for (auto& l : w.transport[s].layers)
                l = {u01(rng), std::pow(10.0, -18.0 + 6.0 * u01(rng)), u01(rng) * 1e-3};
        const double v = u01(rng) * 5e-8;
        w.env.filtration_velocity = v;
        const auto c = build_coefficients(m, w.transport, w.env);
        for (const auto* sc : {&c.ldl, &c.drug, &c.denp})
            for (std::size_t j = 0; j < m.node_count(); ++j)
                violations += sc->c1[j] < 0.0 || sc->c3[j] < 0.0 || sc->c2[j] > 0.0;
    }
    CHECK(violations == 0);
}

TEST_CASE("invalid transport parameters are rejected with the key") {
    auto w = testing_support::small_wall();
    w.transport.drug.layers[2].diffusivity = -1.0;
    try {
        w.transport.drug.validate("drug");
        FAIL("expected ParameterError");
    } catch (const ParameterError& e) {
        CHECK(std::string(e.what()).find("drug.layer3.diffusivity") != std::string::npos);
    }
    auto env = w.env;
    env.lumen_drug = 1.0;
    CHECK_THROWS_AS(env.validate(), ParameterError);
}

TEST_CASE("default parameter file builds valid coefficients") {
    const auto w = wall_params_from(testing_support::default_param_set());
    const Mesh m = build_mesh(w.geometry);
    CHECK(m.node_count() == 2140);
    CHECK_NOTHROW(build_coefficients(m, w.transport, w.env, w.geometry.symmetric_interfaces));
}
