#pragma once

// Domain geometry: the box with a median hypersurface, the periodic array of
// thin rectangular alveoli sitting on it, perforated grids with face-aligned
// hole boundaries, the three-region band decomposition, and truncated
// periodic strips for the auxiliary cell problems.
//
// Measures (|M|, |dP_eps|, hole count) are analytic, never grid-derived.
// Grids are built so hole boundaries and interface planes fall exactly on
// faces; builders reject parameter combinations that cannot align.

#include "ptrans/grid.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace ptrans {

/// Box ]-L/2,L/2[^n with the interface plane Sigma at x_n = 0.
struct BoxDomain {
    int n = 2;           // spatial dimension, 2 or 3
    double L = 1.0;      // side length
    double sigma_height = 0.0;

    void validate() const;
};

/// Periodic array of rectangular obstacles: hole alpha occupies
/// eps*(alpha + M) x ]-eps^beta, eps^beta[ with M = prod ]-m_i, m_i[.
struct AlveolusArray {
    int n = 2;
    std::array<double, kMaxDim - 1> m{0.25, 0.25};  // obstacle half-widths, unit-cell units
    double eps = 0.125;
    double beta = 2.0;

    void validate(const BoxDomain& box) const;

    double hole_half_height() const { return std::pow(eps, beta); }
};

/// Cross-sectional measure of the obstacle: |M| = prod 2 m_i.
double obstacle_measure(const AlveolusArray& array);

/// Surface measure of P_eps = M x ]-eps^{beta-1}, eps^{beta-1}[:
/// 2|M| + 2 eps^{beta-1} * perimeter(M).
double hole_boundary_measure(const AlveolusArray& array);

/// Flat-obstacle limit of hole_boundary_measure: both sides of M x {0}.
double flat_boundary_measure(const AlveolusArray& array);

struct GridResolution {
    int cells_per_eps = 8;       // lateral cells per eps-cell
    int cells_per_eps_beta = 2;  // vertical cells per hole half-height eps^beta
};

/// Structured grid over the box with alveoli masked out and hole-boundary
/// faces tagged by hole index.
struct PerforatedGrid {
    StructuredGrid grid;
    int hole_count = 0;                 // |J(eps)| = (L/eps)^(n-1)
    std::vector<int> hole_id;           // per cell, -1 for fluid
    double hole_volume = 0.0;           // analytic masked volume
    double hole_boundary_area = 0.0;    // discrete total |Gamma_eps|

    /// Discrete boundary area of one hole (all holes are congruent).
    double hole_boundary_area_one() const {
        return hole_count > 0 ? hole_boundary_area / hole_count : 0.0;
    }
};

/// Builds the perforated grid. Requires L/eps integer, lateral alignment
/// (m_i * cells_per_eps integral) and at least 2 vertical cells across
/// eps^beta; throws std::invalid_argument otherwise.
PerforatedGrid build_perforated_grid(const BoxDomain& box, const AlveolusArray& array,
                                     const GridResolution& res);

/// Unperforated twin of the perforated grid (same dims/spacings, no mask).
StructuredGrid build_box_grid(const BoxDomain& box, const AlveolusArray& array,
                              const GridResolution& res);

/// Band decomposition at x_n = +-b, b = d*eps*log(1/eps), snapped to faces.
struct RegionDecomposition {
    double d = 2.0;
    double band_half_width = 0.0;          // analytic b
    double snapped_half_width = 0.0;       // face-aligned b on the given grid
    double snap_distance = 0.0;
    int face_layer_plus = 0;               // face index of Sigma+_eps
    int face_layer_minus = 0;
    bool near_degenerate = false;          // b close to L/2
    bool d_at_least_two = true;            // range of the sharper error estimate
};

/// Computes the decomposition; throws if the band does not fit in the box.
/// Pass the vertical spacing of the grid the planes must align with.
RegionDecomposition decompose_regions(const BoxDomain& box, double eps, double d,
                                      double vertical_spacing);

enum class StripMode { scaled, flat };

/// Truncated periodic strip ]-1/2,1/2[^{n-1} x ]-Y,Y[ for cell problems.
/// scaled: obstacle M x ]-eps^{beta-1}, eps^{beta-1}[ masked out;
/// flat:   double-sided internal faces on M x {0}.
struct StripDomain {
    int n = 2;
    StripMode mode = StripMode::scaled;
    std::array<double, kMaxDim - 1> m{0.25, 0.25};
    double eps = 0.1;    // scaled mode only
    double beta = 2.0;
    int Y = 4;           // truncation height (integer, >= 2)

    StructuredGrid grid;
    std::vector<std::size_t> crack_cells_below;  // flat mode: cells under M x {0}
    double obstacle_half_height = 0.0;           // eps^{beta-1} (0 in flat mode)

    // resolution used to build this strip (kept for truncation escalation)
    int cells_per_unit_lateral = 0;
    int cells_per_obstacle_half = 0;
    int cells_per_unit_vertical = 0;

    bool has_obstacle() const;
};

/// Grid resolution for strips.
struct StripResolution {
    int cells_per_unit_lateral = 64;  // cells across the unit cross-section
    int cells_per_obstacle_half = 4;  // vertical cells per eps^{beta-1} (scaled)
    int cells_per_unit_vertical = 16; // vertical density used in flat mode
};

StripDomain build_strip(int n, StripMode mode, const std::array<double, kMaxDim - 1>& m,
                        double eps, double beta, int Y, const StripResolution& res);

} // namespace ptrans
