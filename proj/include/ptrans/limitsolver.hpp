#pragma once

// Homogenized-limit solvers: the single-interface limit problem, the
// two-interface outer solution and the first corrector. All three are
// transport solves on the unperforated box grid with prescribed jumps on
// face-aligned horizontal planes.
//
// Sign conventions. Jumps are stored as g1 = [e_n.(A grad phi - v phi)]
// (above minus below); the injected mass per unit interface area is then
// s = -g1. The default convention treats the leak as a source everywhere,
// matching the hole-flux sign of the microscopic problem;
// `literal_limit_sign` selects the opposite (sink) orientation of the
// limit-interface jump instead.

#include "ptrans/coefficients.hpp"
#include "ptrans/geometry.hpp"
#include "ptrans/transport.hpp"

namespace ptrans {

enum class LimitVariant { limit_sigma, two_interface, corrector };

struct LimitSetup {
    const StructuredGrid* grid = nullptr;  // unperforated box grid
    BoxDomain box;
    AlveolusArray array;
    RegionDecomposition regions;  // used by two_interface / corrector
    LayeredTensor tensor;
    LayeredScalar porosity;
    LayeredVelocity velocity;
    SourceSchedule schedule;
    double dt = 0.01;
    double T = 1.0;
    double linear_tol = 1e-10;

    bool literal_limit_sign = false;  // use the printed +2 Phi |M| orientation
    bool literal_outer_bc = false;    // printed S+/S- assignment for outer/corrector
};

TransportProblem limit_problem(const LimitSetup& s, LimitVariant variant);

struct LimitResult {
    std::vector<ScalarField> snapshots;
    TransientRunReport report;
};

LimitResult solve_limit(const LimitSetup& s, const ScalarField& phi0, int cadence = 0);
LimitResult solve_two_interface(const LimitSetup& s, const ScalarField& phi0, int cadence = 0);
/// First corrector; the initial condition is identically zero.
LimitResult solve_first_corrector(const LimitSetup& s, int cadence = 0);

} // namespace ptrans
