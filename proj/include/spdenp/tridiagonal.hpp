#pragma once

/**
 * @file tridiagonal.hpp
 * @brief Tridiagonal elimination and spectra for the per-species blocks A.
 *
 * A block is stored row-wise as (lower, diag, upper) = (c1, c2, c3); lower[0]
 * and upper[n-1] multiply boundary values and are not part of A.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "spdenp/errors.hpp"
#include "spdenp/wall_model.hpp"

namespace spdenp {

/// y = A x for the tridiagonal block (boundary terms excluded).
inline void tridiag_multiply(const SpeciesCoefficients& a, std::span<const double> x, std::span<double> y) {
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        double v = a.c2[i] * x[i];
        if (i > 0) v += a.c1[i] * x[i - 1];
        if (i + 1 < n) v += a.c3[i] * x[i + 1];
        y[i] = v;
    }
}

/**
 * @brief Solves (alpha*I + beta*A + diag(shift)) x = rhs by Thomas elimination.
 *
 * No pivoting: the systems built here are column- or row-diagonally dominant
 * M-matrices. A vanishing pivot raises ParameterError.
 */
inline void tridiag_solve(const SpeciesCoefficients& a, double alpha, double beta, std::span<const double> shift,
                          std::span<const double> rhs, std::span<double> x, std::vector<double>& scratch) {
    const std::size_t n = a.size();
    scratch.resize(n);
    auto diag = [&](std::size_t i) { return alpha + beta * a.c2[i] + (shift.empty() ? 0.0 : shift[i]); };
    double pivot = diag(0);
    if (pivot == 0.0) throw ParameterError("singular tridiagonal system at node 1");
    x[0] = rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        scratch[i] = beta * a.c3[i - 1] / pivot;
        pivot = diag(i) - beta * a.c1[i] * scratch[i];
        if (pivot == 0.0 || !std::isfinite(pivot))
            throw ParameterError("singular tridiagonal system at node " + std::to_string(i + 1));
        x[i] = (rhs[i] - beta * a.c1[i] * x[i - 1]) / pivot;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= scratch[i + 1] * x[i + 1];
}

/**
 * @brief Real spectrum of a tridiagonal block with c3_i * c1_{i+1} >= 0.
 *
 * Such a matrix is similar (diagonal scaling) to the symmetric tridiagonal
 * matrix with off-diagonal sqrt(c3_i c1_{i+1}); a zero product splits the
 * matrix into independent blocks whose spectra are unchanged by the scaling.
 */
inline Eigen::VectorXd tridiag_eigenvalues(const SpeciesCoefficients& a) {
    const auto n = static_cast<Eigen::Index>(a.size());
    Eigen::VectorXd diag(n);
    Eigen::VectorXd sub(std::max<Eigen::Index>(n - 1, 0));
    for (Eigen::Index i = 0; i < n; ++i) diag[i] = a.c2[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double prod = a.c3[static_cast<std::size_t>(i)] * a.c1[static_cast<std::size_t>(i + 1)];
        if (prod < 0.0) throw ParameterError("tridiagonal block has off-diagonal products of mixed sign");
        sub[i] = std::sqrt(prod);
    }
    if (n == 1) return diag;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw ParameterError("eigenvalue iteration did not converge");
    return solver.eigenvalues();
}

/// Largest real part over the spectrum of the block.
inline double spectral_abscissa(const SpeciesCoefficients& a) { return tridiag_eigenvalues(a).maxCoeff(); }

}  // namespace spdenp
