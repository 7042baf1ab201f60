#pragma once

// Microscopic transport on the perforated grid: holes carry the prescribed
// total leak flux Phi(t) per unit boundary area, into the fluid region.

#include "ptrans/coefficients.hpp"
#include "ptrans/geometry.hpp"
#include "ptrans/transport.hpp"

namespace ptrans {

struct MicroSetup {
    const PerforatedGrid* grid = nullptr;
    LayeredTensor tensor;
    LayeredScalar porosity;
    LayeredVelocity velocity;
    SourceSchedule schedule;
    BoundarySpec bc;
    double eps = 0.1;
    double dt = 0.01;
    double T = 1.0;
    double linear_tol = 1e-10;
};

TransportProblem microscopic_problem(const MicroSetup& s);

/// Convenience one-shot solve; snapshots taken every `cadence` steps
/// (0 = none). The last field is always included.
struct MicroResult {
    std::vector<ScalarField> snapshots;
    TransientRunReport report;
};
MicroResult solve_microscopic(const MicroSetup& s, const ScalarField& phi0, int cadence = 0);

/// Uniform-boundedness check over an eps sweep (coarsest first): sup norms
/// and L2(0,T;H1) norms must stay below the coarsest run's values times
/// `headroom`.
struct UniformBoundCheck {
    bool pass = false;
    double worst_ratio = 0.0;
    double bound = 1.05;
};
UniformBoundCheck check_uniform_bounds(const std::vector<const TransientRunReport*>& sweep,
                                       double headroom = 1.05);

} // namespace ptrans
