#pragma once

// Auxiliary problems on truncated periodic strips: the oscillation
// correctors chi^k, the leak-layer profile w with its linear far field, the
// second-order correctors chi^{lm}, w^{ij} and z^k, in both the scaled-
// obstacle and the flat-obstacle (internal double-sided face) geometry.
//
// Problems whose solution grows at infinity are solved through a splitting:
// the prescribed growth is removed with a smooth cut-off profile, the
// remainder has a decaying gradient and homogeneous far-field data on the
// truncated strip. Stabilization constants are normalized to zero.

#include "ptrans/coefficients.hpp"
#include "ptrans/geometry.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ptrans {

/// C^2 cut-off: 0 on |y|<1/2, 1 on |y|>1, quintic transition between.
double cutoff_zeta(double y);
double cutoff_zeta_prime(double y);

/// Linear far-field profile of w: pi(y) = -zeta(y) (A2_nn)^{-1} |y| * dP/2.
double profile_pi(double y, double Ann2, double dP);
double profile_pi_prime(double y, double Ann2, double dP);

/// Quadratic far-field profile of z^n: rho(y) = -zeta(y) dP/4 (A2_nn)^{-2} |y| y.
double profile_rho(double y, double Ann2, double dP);
double profile_rho_prime(double y, double Ann2, double dP);

enum class CellProblemKind { chi_k, w, chi_lm, w_ij, z_k };

struct DecayFit {
    double tau_hat = 0.0;
    double C = 0.0;
    double r2 = 0.0;
    bool ok = false;
    bool monotone = true;
};

struct CellSolution {
    StripDomain strip;
    LayeredTensor tensor;
    CellProblemKind kind = CellProblemKind::chi_k;
    int k = -1, l = -1;

    /// Decaying remainder on strip cells (chi itself; v = w - pi; z^n - rho).
    std::vector<double> values;
    /// Analytic growth profile added back when sampling (<=> 0 for decaying problems).
    double profile_Ann2 = 1.0;
    double profile_dP = 0.0;
    bool profile_linear = false;     // pi-type
    bool profile_quadratic = false;  // rho-type

    double c_plus = 0.0, c_minus = 0.0;  // slab means after normalization
    double side_asymmetry = 0.0;         // raw c+ - c- (shift invariant)
    DecayFit decay;
    double compat_projection = 0.0;  // relative size of the projected-out imbalance

    double farfield_flux_top = 0.0;     // extrapolated A grad . e_n as y_n -> +inf
    double farfield_flux_bottom = 0.0;  // ... as y_n -> -inf

    /// Full field value (remainder + profile) at strip coordinates y.
    double sample(const std::array<double, kMaxDim>& y) const;
    double profile(double y_n) const;
    /// Remainder value at a cell.
    double remainder(std::size_t cell) const { return values[cell]; }
};

struct CellProblemOptions {
    double linear_tol = 1e-13;
    int max_iter = 50000;
    bool auto_truncate = false;  // double Y until far-field data stabilizes
    int max_Y = 32;
    double fit_window_lo = 2.0;  // decay-fit window [lo, Y - 0.5]
};

CellSolution solve_chi_k(const StripDomain& strip, const LayeredTensor& A, int k,
                         const CellProblemOptions& opts = {});
CellSolution solve_w(const StripDomain& strip, const LayeredTensor& A,
                     const CellProblemOptions& opts = {});
CellSolution solve_chi_lm(const StripDomain& strip, const LayeredTensor& A, int l, int m,
                          const CellProblemOptions& opts = {});
CellSolution solve_w_ij(const StripDomain& strip, const LayeredTensor& A, int i, int j,
                        const CellProblemOptions& opts = {});
CellSolution solve_z_k(const StripDomain& strip, const LayeredTensor& A, int k,
                       const CellProblemOptions& opts = {});

/// Least-squares fit of the H1 tail norm against e^{-tau s} over [s0, s1].
DecayFit fit_decay(const CellSolution& sol, double s0, double s1);

/// Reflection symmetry checks over y -> -y (max-norm errors, shift removed).
double reflection_even_error(const CellSolution& sol);
double reflection_odd_error(const CellSolution& sol);

/// Max-norm of the remainder (trivial-solution checks).
double remainder_max(const CellSolution& sol);
/// L2 norm of the remainder gradient.
double gradient_l2(const CellSolution& sol);

/// L2 gradient distance between a scaled-obstacle solution and its flat
/// limit on the same grid, over the scaled fluid region (flat-limit rate studies).
double gradient_distance(const CellSolution& scaled, const CellSolution& flat);

/// Total prescribed Neumann inflow through the obstacle boundary (discrete).
double obstacle_flux_total(const StripDomain& strip, const LayeredTensor& A,
                           CellProblemKind kind, int k);

} // namespace ptrans
