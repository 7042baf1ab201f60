#pragma once

// Convergence-study driver: runs the microscopic reference, the homogenized
// limit, the two-interface outer solution, the corrector and the composite
// expansions over an eps-sweep in lockstep, accumulating broken-norm errors
// and fitting rates against eps*log(1/eps).

#include "ptrans/expansion.hpp"
#include "ptrans/scenario.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ptrans {

struct SweepPointResult {
    double eps = 0.0;
    double x = 0.0;  // eps * log(1/eps)

    double micro_max_abs = 0.0;
    double micro_l2h1 = 0.0;
    double max_balance_rel = 0.0;  // worst over the four solves
    double energy_residual_rel = 0.0;

    double err_limit_l2h1 = 0.0;
    double err_outer_l2h1 = 0.0;
    double err_outer_linfl2 = 0.0;
    double err_H_l2h1 = 0.0;
    double err_H_linfl2 = 0.0;
    double err_F_l2h1 = 0.0;
    double err_F_linfl2 = 0.0;

    double mismatch_H = 0.0;  // interface trace mismatch of the composites
    double mismatch_F = 0.0;
    double interp_error = 0.0;
    double snap_distance = 0.0;

    std::size_t micro_cells = 0;
    int strip_Y = 0;
};

struct StudyResult {
    std::vector<SweepPointResult> points;

    RateFit rate_limit_l2h1;     // limit-model convergence
    RateFit rate_outer_l2h1;
    RateFit rate_outer_linfl2;   // outer-model improvement
    RateFit rate_H_l2h1;

    bool ordering_H_le_outer_linfl2 = false;  // at the smallest eps
    bool ordering_F_le_H_le_outer_l2h1 = false;
};

StudyResult run_study(const Scenario& s, std::ostream* log = nullptr, int parallel = 1);

void write_study_outputs(const StudyResult& r, const Scenario& s, const std::string& outdir);

/// Single sweep point (exposed for tests).
SweepPointResult run_sweep_point(const Scenario& s, double eps, std::ostream* log = nullptr);

/// Near-field dominance check: compares the band term ||eps w(x/eps) Phi||
/// against ||phi0_eps|| in L2 of the band, over time.
struct BandDominance {
    std::vector<double> t;
    std::vector<double> band_norm;
    std::vector<double> outer_norm;
    bool dominates_during_pulse = false;
    bool recedes_by_5tm = false;
    bool pass = false;
};
BandDominance band_dominance_study(const Scenario& s, double eps);

} // namespace ptrans
