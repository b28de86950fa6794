#pragma once

/**
 * @file wall_model.hpp
 * @brief Four-layer arterial wall: geometry, species transport parameters and
 *        the lumped finite-difference coefficient tables.
 *
 * Nodes are numbered i = 1..q from the lumen (node 0, fixed concentration) to
 * the media/adventitia boundary (node q). Node i sits at r = i*h_r, so the last
 * node of layer k lies exactly on the k/k+1 interface. Each node obeys
 *
 *   dC_i/dt = c1_i C_{i-1} + c2_i C_i + c3_i C_{i+1} + (reaction and source terms)
 *
 * with interior coefficients for the node's own layer l
 *
 *   c1 = (1 - sigma_l) V / h + D_l / h^2
 *   c2 = -(1 - sigma_l) V / h - 2 D_l / h^2 - k_l
 *   c3 = D_l / h^2
 *
 * and dedicated rows at the first intima node, the last intima node, the first
 * IEL node, the first media node and node q (see build_species_coefficients).
 * Vectors are 0-based throughout: entry j describes node i = j + 1.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spdenp/config.hpp"
#include "spdenp/errors.hpp"

namespace spdenp {

inline constexpr std::size_t kLayerCount = 4;
inline constexpr std::array<std::string_view, kLayerCount> kLayerNames = {"Endothelium", "Intima", "IEL", "Media"};

enum class Species { Ldl, Drug, Denp };
inline constexpr std::array<std::string_view, 3> kSpeciesNames = {"ldl", "drug", "denp"};

struct WallGeometry {
    std::array<double, kLayerCount> layer_lengths{};  ///< [m]
    double mesh_size = 0.0;                           ///< h_r [m]
    bool symmetric_interfaces = false;
};

/// Node layout of one mesh. `layer_end[k]` is the 1-based index of the last
/// node of layer k, so layer k owns nodes layer_end[k-1]+1 .. layer_end[k].
struct Mesh {
    double mesh_size = 0.0;
    std::array<std::size_t, kLayerCount> layer_end{};
    std::vector<int> layer_of;  ///< 0-based node -> 0-based layer

    std::size_t node_count() const { return layer_of.size(); }
    std::size_t layer_begin(std::size_t layer) const { return layer == 0 ? 0 : layer_end[layer - 1]; }
    /// Half-open 0-based node range [first, last) of a layer.
    std::pair<std::size_t, std::size_t> layer_nodes(std::size_t layer) const {
        return {layer_begin(layer), layer_end[layer]};
    }
};

/// Builds the node-to-layer map for mesh spacing h_r / refinement.
inline Mesh build_mesh(const WallGeometry& geometry, int refinement = 1) {
    if (refinement < 1) throw ParameterError("mesh refinement must be >= 1");
    if (!(geometry.mesh_size > 0.0)) throw ParameterError("geometry.mesh_size must be positive");
    Mesh mesh;
    mesh.mesh_size = geometry.mesh_size / refinement;
    std::size_t total = 0;
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        const double length = geometry.layer_lengths[k];
        const std::string key = "geometry.layer" + std::to_string(k + 1) + ".length";
        if (!(length > 0.0)) throw ParameterError(key + " (" + std::string(kLayerNames[k]) + ") must be positive");
        const double cells = length / geometry.mesh_size;
        const double rounded = std::round(cells);
        if (rounded < 1.0 || std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells))
            throw ConfigError(key + " (" + std::string(kLayerNames[k]) +
                              ") is not an integer multiple of the mesh size");
        total += static_cast<std::size_t>(rounded) * static_cast<std::size_t>(refinement);
        mesh.layer_end[k] = total;
    }
    mesh.layer_of.resize(total);
    for (std::size_t k = 0, j = 0; k < kLayerCount; ++k)
        for (; j < mesh.layer_end[k]; ++j) mesh.layer_of[j] = static_cast<int>(k);
    return mesh;
}

struct LayerTransport {
    double reflection = 0.0;   ///< sigma_f in [0,1]
    double diffusivity = 0.0;  ///< D [m^2/s]
    double reaction = 0.0;     ///< k_r [1/s]
};

struct SpeciesTransport {
    std::array<LayerTransport, kLayerCount> layers{};

    void validate(std::string_view species) const {
        for (std::size_t k = 0; k < kLayerCount; ++k) {
            const auto& l = layers[k];
            const std::string where = std::string(species) + ".layer" + std::to_string(k + 1);
            if (!(l.reflection >= 0.0 && l.reflection <= 1.0))
                throw ParameterError(where + ".reflection must lie in [0,1]");
            if (!(l.diffusivity >= 0.0)) throw ParameterError(where + ".diffusivity must be non-negative");
            if (!(l.reaction >= 0.0)) throw ParameterError(where + ".reaction must be non-negative");
        }
    }
};

struct TransportParams {
    SpeciesTransport ldl, drug, denp;

    const SpeciesTransport& operator[](Species s) const {
        return s == Species::Ldl ? ldl : s == Species::Drug ? drug : denp;
    }
    SpeciesTransport& operator[](Species s) { return s == Species::Ldl ? ldl : s == Species::Drug ? drug : denp; }
};

/// Boundary data and release coupling. Concentrations are in reporting units
/// (LDL mg/dL, drug and nanoparticles ug/mL).
struct EnvironmentParams {
    double filtration_velocity = 0.0;  ///< V_filt [m/s]
    double drug_molecule_mass = 1.0;   ///< m [ug/molecule]
    double denp_mass_ratio = 1.0;      ///< nanoparticle mass / m
    double lumen_ldl = 0.0;
    double lumen_drug = 0.0;
    double lumen_denp = 0.0;

    /// Drug mass-concentration gained per unit nanoparticle mass-concentration
    /// per released molecule: m * (1 / (ratio * m)).
    double source_gain() const { return drug_molecule_mass / (denp_mass_ratio * drug_molecule_mass); }

    void validate() const {
        if (!(filtration_velocity >= 0.0)) throw ParameterError("env.filtration_velocity must be non-negative");
        if (!(drug_molecule_mass > 0.0)) throw ParameterError("env.drug_molecule_mass must be positive");
        if (!(denp_mass_ratio > 0.0)) throw ParameterError("env.denp_mass_ratio must be positive");
        if (!(lumen_ldl >= 0.0)) throw ParameterError("env.lumen_ldl must be non-negative");
        if (lumen_drug != 0.0) throw ParameterError("env.lumen_drug must be 0 (no drug in the lumen)");
        if (!(lumen_denp >= 0.0)) throw ParameterError("env.lumen_denp must be non-negative");
    }
};

/// R(y, z) = rate * y^ldl_exponent * z^drug_exponent.
struct PowerLawRate {
    double rate = 0.0;
    int ldl_exponent = 1;
    int drug_exponent = 1;
};

struct ReactionPartials {
    double d_ldl = 0.0;
    double d_drug = 0.0;
};

struct ReactionKinetics {
    PowerLawRate ldl_loss;   ///< R_y, consumes LDL [mg/dL/s]
    PowerLawRate drug_loss;  ///< R_z, consumes drug [ug/mL/s]

    void validate() const {
        for (const auto* r : {&ldl_loss, &drug_loss}) {
            if (!(r->rate >= 0.0)) throw ParameterError("reaction rate constants must be non-negative");
            if (r->ldl_exponent < 1 || r->drug_exponent < 1)
                throw ParameterError("reaction exponents must be positive integers");
        }
    }
};

namespace detail {
inline double ipow(double x, int n) {
    double r = 1.0;
    for (int k = 0; k < n; ++k) r *= x;
    return r;
}
inline void check_reaction_domain(double y, double z) {
    if (!(y >= 0.0) || !(z >= 0.0)) throw std::domain_error("reaction arguments must be non-negative");
}
}  // namespace detail

inline double reaction_rate(const PowerLawRate& r, double y, double z) {
    detail::check_reaction_domain(y, z);
    return r.rate * detail::ipow(y, r.ldl_exponent) * detail::ipow(z, r.drug_exponent);
}

inline ReactionPartials reaction_partials(const PowerLawRate& r, double y, double z) {
    detail::check_reaction_domain(y, z);
    return {r.rate * r.ldl_exponent * detail::ipow(y, r.ldl_exponent - 1) * detail::ipow(z, r.drug_exponent),
            r.rate * r.drug_exponent * detail::ipow(y, r.ldl_exponent) * detail::ipow(z, r.drug_exponent - 1)};
}

/// Tridiagonal row coefficients of one species. Units 1/s.
struct SpeciesCoefficients {
    std::vector<double> c1, c2, c3;
    std::size_t size() const { return c2.size(); }
};

struct LumpedCoefficients {
    SpeciesCoefficients ldl, drug, denp;

    const SpeciesCoefficients& operator[](Species s) const {
        return s == Species::Ldl ? ldl : s == Species::Drug ? drug : denp;
    }
};

/**
 * @brief Coefficient rows for one species.
 *
 * Special rows (1-based node index, n_k = cumulative node count through layer k,
 * a_l = (1 - sigma_l) V / h, d_l = D_l / h^2):
 *
 *   i = n_1 + 1 : c1 = a_1 + d_1, c2 = -a_1 - d_1 - d_2 - k_1, c3 = d_2
 *   i = n_2     : c1 = a_2 + d_2, c2 = -a_2 - d_2 - d_3 - k_2, c3 = d_3
 *   i = n_2 + 1 : c1 = a_2 + d_3, c2 = -a_3 - 2 d_3 - k_3,     c3 = d_3
 *   i = n_3 + 1 : c1 = a_3 + d_3, c2 = -a_4 - d_3 - d_4 - k_4, c3 = d_4
 *   i = q       : c1 = a_4 + d_4, c2 = -d_4 - k_4,             c3 = 0
 *
 * Rows are written in that order so later rows win on degenerate meshes where
 * two cases coincide. With `symmetric_interfaces`, nodes n_1 and n_3 also get
 * c2 = -a_l - d_l - d_{l+1} - k_l, c3 = d_{l+1}.
 */
inline SpeciesCoefficients build_species_coefficients(const Mesh& mesh, const SpeciesTransport& transport,
                                                      double filtration_velocity, bool symmetric_interfaces = false,
                                                      std::string_view species = "species") {
    const std::size_t q = mesh.node_count();
    const double h = mesh.mesh_size;
    std::array<double, kLayerCount> a{}, d{}, k{};
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        a[l] = (1.0 - transport.layers[l].reflection) * filtration_velocity / h;
        d[l] = transport.layers[l].diffusivity / (h * h);
        k[l] = transport.layers[l].reaction;
    }

    SpeciesCoefficients c;
    c.c1.resize(q);
    c.c2.resize(q);
    c.c3.resize(q);
    for (std::size_t j = 0; j < q; ++j) {
        const auto l = static_cast<std::size_t>(mesh.layer_of[j]);
        c.c1[j] = a[l] + d[l];
        c.c2[j] = -a[l] - 2.0 * d[l] - k[l];
        c.c3[j] = d[l];
    }
    auto row = [&](std::size_t node, double c1, double c2, double c3) {
        if (node >= 1 && node <= q) {
            c.c1[node - 1] = c1;
            c.c2[node - 1] = c2;
            c.c3[node - 1] = c3;
        }
    };
    const auto n1 = mesh.layer_end[0], n2 = mesh.layer_end[1], n3 = mesh.layer_end[2];
    if (symmetric_interfaces) {
        row(n1, a[0] + d[0], -a[0] - d[0] - d[1] - k[0], d[1]);
        row(n3, a[2] + d[2], -a[2] - d[2] - d[3] - k[2], d[3]);
    }
    row(n1 + 1, a[0] + d[0], -a[0] - d[0] - d[1] - k[0], d[1]);
    row(n2, a[1] + d[1], -a[1] - d[1] - d[2] - k[1], d[2]);
    row(n2 + 1, a[1] + d[2], -a[2] - 2.0 * d[2] - k[2], d[2]);
    row(n3 + 1, a[2] + d[2], -a[3] - d[2] - d[3] - k[3], d[3]);
    row(q, a[3] + d[3], -d[3] - k[3], 0.0);

    for (std::size_t j = 0; j < q; ++j) {
        if (c.c1[j] < 0.0 || c.c3[j] < 0.0 || c.c2[j] > 0.0)
            throw ParameterError(std::string(species) + " coefficients violate the sign conditions at node " +
                                 std::to_string(j + 1));
    }
    return c;
}

inline LumpedCoefficients build_coefficients(const Mesh& mesh, const TransportParams& transport,
                                             const EnvironmentParams& env, bool symmetric_interfaces = false) {
    transport.ldl.validate("ldl");
    transport.drug.validate("drug");
    transport.denp.validate("denp");
    env.validate();
    const double v = env.filtration_velocity;
    return {build_species_coefficients(mesh, transport.ldl, v, symmetric_interfaces, "ldl"),
            build_species_coefficients(mesh, transport.drug, v, symmetric_interfaces, "drug"),
            build_species_coefficients(mesh, transport.denp, v, symmetric_interfaces, "denp")};
}

/// Everything needed to assemble a transport model at any refinement.
struct WallParams {
    WallGeometry geometry;
    TransportParams transport;
    EnvironmentParams env;
    ReactionKinetics kinetics;
};

inline WallParams wall_params_from(const ParamSet& p) {
    WallParams w;
    for (std::size_t k = 0; k < kLayerCount; ++k)
        w.geometry.layer_lengths[k] = p.real("geometry.layer" + std::to_string(k + 1) + ".length");
    w.geometry.mesh_size = p.real("geometry.mesh_size");
    w.geometry.symmetric_interfaces = p.boolean("geometry.symmetric_interfaces");

    w.env.filtration_velocity = p.real("env.filtration_velocity");
    w.env.drug_molecule_mass = p.real("env.drug_molecule_mass");
    w.env.denp_mass_ratio = p.real("env.denp_mass_ratio");
    w.env.lumen_ldl = p.real("env.lumen_ldl");
    w.env.lumen_drug = p.real("env.lumen_drug");
    w.env.lumen_denp = p.real("env.lumen_denp");

    for (Species s : {Species::Ldl, Species::Drug, Species::Denp}) {
        for (std::size_t k = 0; k < kLayerCount; ++k) {
            const std::string base =
                std::string(kSpeciesNames[static_cast<int>(s)]) + ".layer" + std::to_string(k + 1) + ".";
            auto& layer = w.transport[s].layers[k];
            layer.reflection = p.real(base + "reflection");
            layer.diffusivity = p.real(base + "diffusivity");
            layer.reaction = p.real(base + "reaction");
        }
    }
    auto rate = [&](const std::string& base) {
        PowerLawRate r;
        r.rate = p.real(base + ".rate");
        r.ldl_exponent = static_cast<int>(p.integer(base + ".ldl_exponent"));
        r.drug_exponent = static_cast<int>(p.integer(base + ".drug_exponent"));
        return r;
    };
    w.kinetics.ldl_loss = rate("kinetics.ldl_loss");
    w.kinetics.drug_loss = rate("kinetics.drug_loss");

    w.transport.ldl.validate("ldl");
    w.transport.drug.validate("drug");
    w.transport.denp.validate("denp");
    w.env.validate();
    w.kinetics.validate();
    return w;
}

}  // namespace spdenp
