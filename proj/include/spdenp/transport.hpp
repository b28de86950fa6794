#pragma once

/**
 * @file transport.hpp
 * @brief Lumped transport model on a mesh of spacing h_r / refinement.
 *
 * The same class serves as the lumped model (refinement 1) and as the
 * fine-mesh reference (refinement rho); coarse node i coincides with fine
 * node i*rho. Concentrations are stored in reporting units: LDL in mg/dL,
 * drug and nanoparticles in ug/mL.
 *
 *   dy/dt = A_y y + L_y - R_y(y, z)
 *   dz/dt = A_z z + L_z - R_z(y, z) + g * n .* u
 *   dn/dt = A_n n + L_n
 *
 * with L carrying c1 at node 1 times the lumen value and g = source_gain().
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "spdenp/errors.hpp"
#include "spdenp/tridiagonal.hpp"
#include "spdenp/wall_model.hpp"

namespace spdenp {

struct SystemState {
    std::vector<double> ldl;   ///< y [mg/dL]
    std::vector<double> drug;  ///< z [ug/mL]
    std::vector<double> denp;  ///< n [ug/mL]
    double time = 0.0;         ///< [s]

    static SystemState zeros(std::size_t nodes) {
        SystemState s;
        s.ldl.assign(nodes, 0.0);
        s.drug.assign(nodes, 0.0);
        s.denp.assign(nodes, 0.0);
        return s;
    }
    std::size_t node_count() const { return ldl.size(); }

    std::vector<double>& operator[](Species s) { return s == Species::Ldl ? ldl : s == Species::Drug ? drug : denp; }
    const std::vector<double>& operator[](Species s) const {
        return s == Species::Ldl ? ldl : s == Species::Drug ? drug : denp;
    }
};

class TransportModel {
public:
    TransportModel(const WallParams& params, int refinement = 1)
        : params_(params),
          refinement_(refinement),
          mesh_(build_mesh(params.geometry, refinement)),
          coeffs_(build_coefficients(mesh_, params.transport, params.env, params.geometry.symmetric_interfaces)) {
        params_.kinetics.validate();
    }

    const WallParams& params() const { return params_; }
    const Mesh& mesh() const { return mesh_; }
    const LumpedCoefficients& coefficients() const { return coeffs_; }
    const ReactionKinetics& kinetics() const { return params_.kinetics; }
    const EnvironmentParams& env() const { return params_.env; }
    int refinement() const { return refinement_; }
    std::size_t node_count() const { return mesh_.node_count(); }
    std::size_t coarse_node_count() const { return mesh_.node_count() / static_cast<std::size_t>(refinement_); }

    double lumen(Species s) const {
        return s == Species::Ldl ? params_.env.lumen_ldl
             : s == Species::Drug ? params_.env.lumen_drug
                                  : params_.env.lumen_denp;
    }
    /// Boundary load entering node 1: c1_1 * lumen value.
    double boundary_load(Species s) const { return coeffs_[s].c1[0] * lumen(s); }

    /// Transport part c1 C_{i-1} + c2 C_i + c3 C_{i+1} at node j with lumen
    /// value for j = 0 and no neighbour beyond node q.
    double transport(Species s, std::span<const double> c, std::size_t j) const {
        const auto& k = coeffs_[s];
        double v = k.c2[j] * c[j] + k.c1[j] * (j == 0 ? lumen(s) : c[j - 1]);
        if (j + 1 < c.size()) v += k.c3[j] * c[j + 1];
        return v;
    }

    /// Full right-hand side. `release` holds u per node of this mesh.
    void rhs(const SystemState& x, std::span<const double> release, SystemState& dx) const {
        const std::size_t q = node_count();
        dx.ldl.resize(q);
        dx.drug.resize(q);
        dx.denp.resize(q);
        dx.time = x.time;
        apply_block(Species::Ldl, x.ldl, dx.ldl);
        apply_block(Species::Drug, x.drug, dx.drug);
        apply_block(Species::Denp, x.denp, dx.denp);
        const double gain = params_.env.source_gain();
        const auto& ry = params_.kinetics.ldl_loss;
        const auto& rz = params_.kinetics.drug_loss;
        for (std::size_t j = 0; j < q; ++j) {
            const double y = std::max(x.ldl[j], 0.0), z = std::max(x.drug[j], 0.0);
            dx.ldl[j] -= ry.rate * detail::ipow(y, ry.ldl_exponent) * detail::ipow(z, ry.drug_exponent);
            dx.drug[j] += gain * x.denp[j] * release[j] -
                          rz.rate * detail::ipow(y, rz.ldl_exponent) * detail::ipow(z, rz.drug_exponent);
        }
    }

private:
    void apply_block(Species s, const std::vector<double>& c, std::vector<double>& out) const {
        const auto& k = coeffs_[s];
        const std::size_t q = c.size();
        if (q == 1) {
            out[0] = k.c2[0] * c[0] + k.c1[0] * lumen(s);
            return;
        }
        out[0] = k.c2[0] * c[0] + k.c1[0] * lumen(s) + k.c3[0] * c[1];
        for (std::size_t j = 1; j + 1 < q; ++j) out[j] = k.c1[j] * c[j - 1] + k.c2[j] * c[j] + k.c3[j] * c[j + 1];
        out[q - 1] = k.c1[q - 1] * c[q - 2] + k.c2[q - 1] * c[q - 1];
    }

    WallParams params_;
    int refinement_;
    Mesh mesh_;
    LumpedCoefficients coeffs_;
};

/// Samples a fine-mesh state at the coarse node locations (fine node i*rho).
inline SystemState restrict_state(const SystemState& fine, int refinement) {
    if (refinement == 1) return fine;
    const auto rho = static_cast<std::size_t>(refinement);
    const std::size_t q = fine.node_count() / rho;
    SystemState coarse = SystemState::zeros(q);
    coarse.time = fine.time;
    for (std::size_t i = 0; i < q; ++i) {
        const std::size_t j = (i + 1) * rho - 1;
        coarse.ldl[i] = fine.ldl[j];
        coarse.drug[i] = fine.drug[j];
        coarse.denp[i] = fine.denp[j];
    }
    return coarse;
}

/**
 * Gives each fine node the input of the nearest coarse node, so a coarse input
 * covers a control volume centred on its node (fine node (i+1)*rho - 1). The
 * fine nodes between the lumen and the first coarse node take its input.
 */
inline void expand_input(std::span<const double> coarse, int refinement, std::span<double> fine) {
    const auto rho = static_cast<std::size_t>(refinement);
    for (std::size_t k = 0; k < fine.size(); ++k) {
        const std::size_t nearest = (k + 1 + (rho - 1) / 2) / rho;
        fine[k] = coarse[std::min(nearest == 0 ? 0 : nearest - 1, coarse.size() - 1)];
    }
}

namespace detail {
/// Treats subnormal doubles as zero while alive (x86 only). Profile tails far
/// ahead of a diffusion front otherwise run through subnormal arithmetic, which
/// is several times slower and changes nothing above 1e-300.
class FlushDenormals {
public:
#if defined(__SSE2__)
    FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
    ~FlushDenormals() { _mm_setcsr(saved_); }

private:
    unsigned saved_;
#endif
};
}  // namespace detail

enum class Scheme { Implicit, Explicit };

struct SolverOptions {
    Scheme scheme = Scheme::Implicit;
    double rtol = 1e-8;
    double atol = 1e-12;
    double max_step = 60.0;
    double min_step = 1e-10;
    int max_rejections = 50;
};

struct IntegrationStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evaluations = 0;
    double clamped_total = 0.0;     ///< sum of |negative entries| removed by clamping
    double most_negative = 0.0;     ///< most negative entry seen before clamping
    double max_clamp_fraction = 0.0;  ///< max over steps of clamped mass / state 1-norm
};

/**
 * @brief Adaptive integrator over one model with input held constant per call.
 *
 * Implicit: two-stage Rosenbrock method ROS2 (gamma = 1 + 1/sqrt 2), second
 * order for any Jacobian approximation. Each stage solves the nanoparticle
 * block, then the coupled LDL-drug block system. The embedded first-order
 * solution x + h k1 gives the error estimate.
 *
 * Explicit: Dormand-Prince 5(4) with FSAL and the standard PI-free controller.
 */
class Integrator {
public:
    Integrator(const TransportModel& model, SolverOptions options) : model_(model), opts_(options) {
        const std::size_t q = model.node_count();
        f0_ = SystemState::zeros(q);
        f1_ = f0_;
        trial_ = f0_;
        stage_ = f0_;
        for (auto& k : k_) k = f0_;
        next_step_ = std::min(opts_.max_step, 1.0);
    }

    const IntegrationStats& stats() const { return stats_; }
    const SolverOptions& options() const { return opts_; }
    void reset_stats() { stats_ = {}; }

    /// Advances `x` by `dt` with `release` (per node of this mesh) held fixed.
    void advance(SystemState& x, std::span<const double> release, double dt) {
        if (!(dt > 0.0)) throw UsageError("integration step must be positive");
        const detail::FlushDenormals ftz;
        const double t_end = x.time + dt;
        have_f0_ = false;
        int rejections = 0;
        while (true) {
            const double remaining = t_end - x.time;
            if (remaining <= 1e-12 * std::max(1.0, std::abs(t_end))) break;
            double h = std::min({next_step_, remaining, opts_.max_step});
            const bool last = h >= remaining;
            if (last) h = remaining;
            const auto [err, worst] = opts_.scheme == Scheme::Implicit ? implicit_trial(x, release, h)
                                                                       : explicit_trial(x, release, h);
            const double exponent = opts_.scheme == Scheme::Implicit ? 0.5 : 0.2;
            double factor = err > 0.0 ? 0.9 * std::pow(err, -exponent) : 5.0;
            factor = std::clamp(factor, 0.2, 5.0);
            if (err <= 1.0) {
                accept(x, last ? t_end : x.time + h);
                rejections = 0;
                if (!last || factor < 1.0) next_step_ = std::min(h * factor, opts_.max_step);
            } else {
                ++stats_.rejected;
                next_step_ = h * factor;
                if (++rejections > opts_.max_rejections || next_step_ < opts_.min_step) {
                    throw IntegrationError("step rejected " + std::to_string(rejections) + " times at t=" +
                                               std::to_string(x.time) + " s; largest error at node " +
                                               std::to_string(worst + 1) + ", suggested dt " +
                                               std::to_string(next_step_) + " s",
                                           worst + 1, next_step_, x.time);
                }
            }
        }
        x.time = t_end;
    }

private:
    struct TrialResult {
        double error;
        std::size_t worst_node;
    };

    double weight(double a, double b) const { return opts_.atol + opts_.rtol * std::max(std::abs(a), std::abs(b)); }

    void ensure_f0(const SystemState& x, std::span<const double> release) {
        if (!have_f0_) {
            model_.rhs(x, release, f0_);
            ++stats_.rhs_evaluations;
            have_f0_ = true;
        }
    }

    // Solves W k = r with W = I - gamma h J. The nanoparticle block does not
    // depend on LDL or drug and is solved first; LDL and drug are then solved
    // together as a block-tridiagonal system with 2x2 node blocks (the reaction
    // couples them only within a node). J is exact up to clamping.
    void solve_w(const SystemState& x, std::span<const double> release, double gh, const SystemState& r,
                 SystemState& k) {
        const std::size_t q = model_.node_count();
        const auto& cy = model_.coefficients().ldl;
        const auto& cz = model_.coefficients().drug;
        const auto& kin = model_.kinetics();
        const double gain = model_.env().source_gain();
        tridiag_solve(model_.coefficients().denp, 1.0, -gh, {}, r.denp, k.denp, scratch_);

        // forward elimination: store inverse pivots, eliminated rhs in k.ldl / k.drug
        double prev_inv[4] = {0, 0, 0, 0}, prev_d[2] = {0, 0};
        for (std::size_t j = 0; j < q; ++j) {
            const double y = std::max(x.ldl[j], 0.0), z = std::max(x.drug[j], 0.0);
            const ReactionPartials ry = reaction_partials(kin.ldl_loss, y, z);
            const ReactionPartials rz = reaction_partials(kin.drug_loss, y, z);
            double a = 1.0 - gh * (cy.c2[j] - ry.d_ldl), b = gh * ry.d_drug;
            double c = gh * rz.d_ldl, d = 1.0 - gh * (cz.c2[j] - rz.d_drug);
            double ry_j = r.ldl[j], rz_j = r.drug[j] + gh * gain * release[j] * k.denp[j];
            if (j > 0) {
                // M = Lo_j P_{j-1}^{-1}, Lo_j = diag(-gh c1y, -gh c1z); Up_{j-1} = diag(-gh c3y, -gh c3z)
                const double ly = -gh * cy.c1[j], lz = -gh * cz.c1[j];
                const double m00 = ly * prev_inv[0], m01 = ly * prev_inv[1];
                const double m10 = lz * prev_inv[2], m11 = lz * prev_inv[3];
                const double uy = -gh * cy.c3[j - 1], uz = -gh * cz.c3[j - 1];
                a -= m00 * uy;
                b -= m01 * uz;
                c -= m10 * uy;
                d -= m11 * uz;
                ry_j -= m00 * prev_d[0] + m01 * prev_d[1];
                rz_j -= m10 * prev_d[0] + m11 * prev_d[1];
            }
            const double det = a * d - b * c;
            auto& inv = pivots_[j];
            inv = {d / det, -b / det, -c / det, a / det};
            std::copy(inv.begin(), inv.end(), prev_inv);
            prev_d[0] = ry_j;
            prev_d[1] = rz_j;
            k.ldl[j] = ry_j;
            k.drug[j] = rz_j;
        }
        // back substitution
        for (std::size_t j = q; j-- > 0;) {
            double ry_j = k.ldl[j], rz_j = k.drug[j];
            if (j + 1 < q) {
                ry_j += gh * cy.c3[j] * k.ldl[j + 1];
                rz_j += gh * cz.c3[j] * k.drug[j + 1];
            }
            const auto& inv = pivots_[j];
            k.ldl[j] = inv[0] * ry_j + inv[1] * rz_j;
            k.drug[j] = inv[2] * ry_j + inv[3] * rz_j;
        }
    }

    TrialResult implicit_trial(const SystemState& x, std::span<const double> release, double h) {
        static const double gamma = 1.0 + 1.0 / std::sqrt(2.0);
        const std::size_t q = model_.node_count();
        ensure_f0(x, release);
        pivots_.resize(q);
        const double gh = gamma * h;

        solve_w(x, release, gh, f0_, k_[0]);
        stage_.time = x.time + h;
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp})
            for (std::size_t j = 0; j < q; ++j) stage_[s][j] = x[s][j] + h * k_[0][s][j];
        model_.rhs(stage_, release, k_[1]);
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp})
            for (std::size_t j = 0; j < q; ++j) k_[1][s][j] -= 2.0 * k_[0][s][j];
        solve_w(x, release, gh, k_[1], k_[2]);

        trial_.time = x.time + h;
        double err = 0.0;
        std::size_t worst = 0;
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp}) {
            for (std::size_t j = 0; j < q; ++j) {
                const double k1 = k_[0][s][j], k2 = k_[2][s][j];
                trial_[s][j] = x[s][j] + h * (1.5 * k1 + 0.5 * k2);
                const double e = 0.5 * h * std::abs(k1 + k2) / weight(x[s][j], trial_[s][j]);
                if (e > err) {
                    err = e;
                    worst = j;
                }
            }
        }
        model_.rhs(trial_, release, f1_);
        stats_.rhs_evaluations += 2;
        return {err, worst};
    }

    TrialResult explicit_trial(const SystemState& x, std::span<const double> release, double h) {
        // Dormand-Prince 5(4) tableau
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                                a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                                b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                                e6 = 22.0 / 525, e7 = -1.0 / 40;
        const std::size_t q = model_.node_count();
        ensure_f0(x, release);
        stage_ = x;
        auto combine = [&](std::initializer_list<std::pair<double, const SystemState*>> terms, double t) {
            stage_.time = t;
            for (Species s : {Species::Ldl, Species::Drug, Species::Denp}) {
                auto& out = stage_[s];
                const auto& base = x[s];
                for (std::size_t j = 0; j < q; ++j) {
                    double v = 0.0;
                    for (const auto& [coef, k] : terms) v += coef * (*k)[s][j];
                    out[j] = base[j] + h * v;
                }
            }
        };
        const SystemState* k1 = &f0_;
        combine({{a21, k1}}, x.time + h / 5);
        model_.rhs(stage_, release, k_[0]);
        combine({{a31, k1}, {a32, &k_[0]}}, x.time + 3 * h / 10);
        model_.rhs(stage_, release, k_[1]);
        combine({{a41, k1}, {a42, &k_[0]}, {a43, &k_[1]}}, x.time + 4 * h / 5);
        model_.rhs(stage_, release, k_[2]);
        combine({{a51, k1}, {a52, &k_[0]}, {a53, &k_[1]}, {a54, &k_[2]}}, x.time + 8 * h / 9);
        model_.rhs(stage_, release, k_[3]);
        combine({{a61, k1}, {a62, &k_[0]}, {a63, &k_[1]}, {a64, &k_[2]}, {a65, &k_[3]}}, x.time + h);
        model_.rhs(stage_, release, k_[4]);
        combine({{b1, k1}, {b3, &k_[1]}, {b4, &k_[2]}, {b5, &k_[3]}, {b6, &k_[4]}}, x.time + h);
        trial_ = stage_;
        model_.rhs(trial_, release, f1_);
        stats_.rhs_evaluations += 6;

        double err = 0.0;
        std::size_t worst = 0;
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp}) {
            for (std::size_t j = 0; j < q; ++j) {
                const double e = h *
                                 (e1 * f0_[s][j] + e3 * k_[1][s][j] + e4 * k_[2][s][j] + e5 * k_[3][s][j] +
                                  e6 * k_[4][s][j] + e7 * f1_[s][j]);
                const double scaled = std::abs(e) / weight(x[s][j], trial_[s][j]);
                if (scaled > err) {
                    err = scaled;
                    worst = j;
                }
            }
        }
        return {err, worst};
    }

    void accept(SystemState& x, double new_time) {
        ++stats_.accepted;
        double clamped = 0.0, norm = 0.0;
        bool touched = false;
        for (Species s : {Species::Ldl, Species::Drug, Species::Denp}) {
            auto& v = trial_[s];
            for (double& e : v) {
                if (e < 0.0) {
                    stats_.most_negative = std::min(stats_.most_negative, e);
                    clamped += -e;
                    e = 0.0;
                    touched = true;
                }
                norm += e;
            }
        }
        if (touched) {
            stats_.clamped_total += clamped;
            if (norm > 0.0) stats_.max_clamp_fraction = std::max(stats_.max_clamp_fraction, clamped / norm);
            have_f0_ = false;  // derivative cache refers to the unclamped state
        } else {
            std::swap(f0_, f1_);
            have_f0_ = true;
        }
        std::swap(x.ldl, trial_.ldl);
        std::swap(x.drug, trial_.drug);
        std::swap(x.denp, trial_.denp);
        x.time = new_time;
    }

    const TransportModel& model_;
    SolverOptions opts_;
    IntegrationStats stats_;
    SystemState f0_, f1_, trial_, stage_;
    std::array<SystemState, 5> k_;
    std::vector<double> scratch_;
    std::vector<std::array<double, 4>> pivots_;
    double next_step_ = 1.0;
    bool have_f0_ = false;
};

/// Advances a state by dt under a held input; a fresh adaptive integrator per call.
inline SystemState step_lumped(const SystemState& state, std::span<const double> release, const TransportModel& model,
                               double dt, const SolverOptions& options = {}) {
    SystemState out = state;
    Integrator integrator(model, options);
    integrator.advance(out, release, dt);
    return out;
}

/// Reference step: `coarse_release` is per coarse node and is applied to every
/// fine node it covers.
inline SystemState step_reference(const SystemState& fine_state, std::span<const double> coarse_release,
                                  const TransportModel& fine_model, double dt, const SolverOptions& options = {}) {
    std::vector<double> fine_release(fine_model.node_count());
    expand_input(coarse_release, fine_model.refinement(), fine_release);
    return step_lumped(fine_state, fine_release, fine_model, dt, options);
}

/**
 * @brief Steady LDL profile without drug: A_y Y + L_y = 0.
 *
 * Direct tridiagonal elimination; the residual is checked against the load.
 * A negative entry means A_y is not stable for this geometry (the interface
 * rows are not conservative, so a short wall can lack enough reaction sink).
 */
inline std::vector<double> uncontrolled_equilibrium(const TransportModel& model, double lumen_ldl) {
    if (!(lumen_ldl >= 0.0)) throw UsageError("lumen LDL must be non-negative");
    const auto& a = model.coefficients().ldl;
    const std::size_t q = model.node_count();
    std::vector<double> rhs(q, 0.0), y(q, 0.0), scratch;
    rhs[0] = -a.c1[0] * lumen_ldl;
    if (lumen_ldl == 0.0) return y;
    tridiag_solve(a, 0.0, 1.0, {}, rhs, y, scratch);
    std::vector<double> ay(q);
    tridiag_multiply(a, y, ay);
    double res = 0.0;
    for (std::size_t j = 0; j < q; ++j) res = std::max(res, std::abs(ay[j] - rhs[j]));
    if (res > 1e-10 * std::abs(rhs[0]))
        throw ParameterError("LDL equilibrium residual " + std::to_string(res) + " exceeds tolerance");
    for (std::size_t j = 0; j < q; ++j)
        if (y[j] < 0.0)
            throw ParameterError("LDL equilibrium is negative at node " + std::to_string(j + 1) +
                                 "; the LDL block is not stable for this geometry");
    return y;
}

struct DenpSteadyState {
    std::vector<double> profile;
    double spectral_abscissa = 0.0;
};

/// Steady nanoparticle profile A_n N + L_n = 0 after confirming A_n is Hurwitz.
inline DenpSteadyState steady_state_denp(const TransportModel& model) {
    const auto& a = model.coefficients().denp;
    DenpSteadyState out;
    out.spectral_abscissa = spectral_abscissa(a);
    if (!(out.spectral_abscissa < 0.0))
        throw ParameterError("nanoparticle block A_n is not Hurwitz: eigenvalue " +
                             std::to_string(out.spectral_abscissa));
    const std::size_t q = model.node_count();
    std::vector<double> rhs(q, 0.0), scratch;
    out.profile.assign(q, 0.0);
    rhs[0] = -model.boundary_load(Species::Denp);
    if (rhs[0] == 0.0) return out;
    tridiag_solve(a, 0.0, 1.0, {}, rhs, out.profile, scratch);
    std::vector<double> an(q);
    tridiag_multiply(a, out.profile, an);
    double res = 0.0;
    for (std::size_t j = 0; j < q; ++j) res = std::max(res, std::abs(an[j] - rhs[j]));
    if (res > 1e-10 * std::abs(rhs[0]))
        throw ParameterError("nanoparticle steady-state residual " + std::to_string(res) + " exceeds tolerance");
    return out;
}

/// g_i, f_i and b_i of the second-order input-output form
/// d^2 y_i/dt^2 = f_i - b_i u_i.
struct IoDynamics {
    double g = 0.0;  ///< dy_i/dt without input
    double f = 0.0;
    double b = 0.0;
};

namespace detail {
inline double ldl_rate_at(const TransportModel& m, const SystemState& x, std::size_t j) {
    const double y = std::max(x.ldl[j], 0.0), z = std::max(x.drug[j], 0.0);
    return m.transport(Species::Ldl, x.ldl, j) - reaction_rate(m.kinetics().ldl_loss, y, z);
}
}  // namespace detail

inline IoDynamics io_dynamics(const TransportModel& model, const SystemState& x, std::size_t node) {
    const std::size_t q = model.node_count();
    if (node >= q) throw UsageError("io_dynamics: node index out of range");
    const auto& cy = model.coefficients().ldl;
    const auto& kin = model.kinetics();
    const double y = std::max(x.ldl[node], 0.0), z = std::max(x.drug[node], 0.0);
    const ReactionPartials dry = reaction_partials(kin.ldl_loss, y, z);

    IoDynamics out;
    out.g = detail::ldl_rate_at(model, x, node);
    const double g_prev = node == 0 ? 0.0 : detail::ldl_rate_at(model, x, node - 1);  // lumen is constant
    const double g_next = node + 1 < q ? detail::ldl_rate_at(model, x, node + 1) : 0.0;
    const double drug_rate = model.transport(Species::Drug, x.drug, node) - reaction_rate(kin.drug_loss, y, z);
    out.f = cy.c1[node] * g_prev + (cy.c2[node] - dry.d_ldl) * out.g + cy.c3[node] * g_next - dry.d_drug * drug_rate;
    out.b = model.env().source_gain() * dry.d_drug * x.denp[node];
    return out;
}

}  // namespace spdenp
