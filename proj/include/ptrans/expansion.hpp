#pragma once

// Matched-expansion assembly and the error machinery of the convergence
// studies: the banded composite fields H and F built from the outer solution,
// the log-corrector and the strip cell solutions, broken norms against a
// microscopic reference, and power-law rate fits in eps*log(1/eps).

#include "ptrans/cellproblems.hpp"
#include "ptrans/coefficients.hpp"
#include "ptrans/geometry.hpp"
#include "ptrans/grid.hpp"

#include <array>
#include <optional>
#include <vector>

namespace ptrans {

/// Everything needed to evaluate the composite fields on a box grid.
/// Cell-solution pointers may be null when a term is not used (then its
/// coefficient must vanish, e.g. v = 0 for the z^k terms).
struct ExpansionBundle {
    const StructuredGrid* grid = nullptr;  // unperforated box grid
    int n = 2;
    double eps = 0.1;
    RegionDecomposition regions;
    double patch_factor = 0.0;  // d * eps * log(1/eps), analytic

    std::array<const CellSolution*, kMaxDim> chi{nullptr, nullptr, nullptr};
    const CellSolution* w = nullptr;
    std::array<std::array<const CellSolution*, kMaxDim>, kMaxDim> chi2{};
    std::array<std::array<const CellSolution*, kMaxDim>, kMaxDim> wij{};
    std::array<const CellSolution*, kMaxDim> z{nullptr, nullptr, nullptr};

    const LayeredVelocity* velocity = nullptr;
    bool lateral_periodic = true;

    // faces of the coefficient-layer interfaces |x_n| = eps*h; the gradient
    // of the outer solution kinks there, so banded derivatives are one-sided
    // within layers (set to -1 when not face-aligned)
    int layer_face_minus = -1;
    int layer_face_plus = -1;

    bool in_band(std::size_t cell) const;
    /// y = x/eps with the lateral part wrapped into the unit cell.
    std::array<double, kMaxDim> fast_coords(std::size_t cell) const;
};

/// One-sided first derivative that never differences across the matching
/// interfaces; falls back near vertical boundaries.
double banded_gradient(const ExpansionBundle& b, const ScalarField& f, std::size_t cell, int axis);
/// Second derivative with the same crossing rules.
double banded_second(const ExpansionBundle& b, const ScalarField& f, std::size_t cell, int k, int l);

/// First-order composite: phi0 outside the band,
/// phi0 + eps [ chi^k d_k phi0 + w Phi ] inside.
double assemble_H_at(const ExpansionBundle& b, const ScalarField& phi0, std::size_t cell,
                     double phi_value);
void assemble_H(const ExpansionBundle& b, const ScalarField& phi0, double phi_value,
                ScalarField& out);

/// Full expansion with the log-corrector patch and second-order band terms.
double assemble_F_at(const ExpansionBundle& b, const ScalarField& phi0, const ScalarField& phi1,
                     std::size_t cell, double phi_value, double t);
void assemble_F(const ExpansionBundle& b, const ScalarField& phi0, const ScalarField& phi1,
                double phi_value, double t, ScalarField& out);

/// phi0 + patch * phi1 everywhere (outer approximation used by F).
void assemble_patched_outer(const ExpansionBundle& b, const ScalarField& phi0,
                            const ScalarField& phi1, ScalarField& out);

/// Broken-norm accumulator over a run: L2(0,T;H1(B_eps)) and Linf(0,T;L2).
/// The reference lives on the perforated grid; candidates on its box twin.
/// Hole cells and the faces of the two matching planes are excluded.
class ErrorAccumulator {
public:
    ErrorAccumulator(const StructuredGrid* ref_grid, int sigma_minus_layer, int sigma_plus_layer,
                     bool lateral_periodic = true);

    void add_snapshot(const ScalarField& ref, const ScalarField& cand, double dt);

    double l2_h1() const { return std::sqrt(acc_sq_); }
    double linf_l2() const { return max_l2_; }
    int snapshots() const { return count_; }

private:
    const StructuredGrid* g_ = nullptr;
    int lay_minus_ = -1, lay_plus_ = -1;
    bool periodic_ = true;
    double acc_sq_ = 0.0;
    double max_l2_ = 0.0;
    int count_ = 0;
};

/// Largest interface mismatch of a composite field across the matching
/// planes (trace-difference diagnostic).
double interface_mismatch(const ExpansionBundle& b, const ScalarField& composite);

struct RateFit {
    double exponent = 0.0;
    double r2 = 0.0;
    bool decreasing = true;
    bool ok = false;
};

/// Least-squares slope of log(err) against log(eps log(1/eps)).
RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err);

/// Estimate of the multilinear interpolation error made when sampling a cell
/// solution on the band cells of a grid (second-difference bound).
double interpolation_error_estimate(const CellSolution& sol);

} // namespace ptrans
