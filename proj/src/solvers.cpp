#include "ptrans/limitsolver.hpp"
#include "ptrans/microsolver.hpp"

#include <cmath>

namespace ptrans {

namespace {

MicroResult run_collect(TransientSolver& solver, int cadence) {
    MicroResult out;
    if (cadence > 0) out.snapshots.push_back(solver.field());
    while (solver.steps_done() < solver.total_steps()) {
        solver.step();
        if (cadence > 0 &&
            (solver.steps_done() % cadence == 0 || solver.steps_done() == solver.total_steps()))
            out.snapshots.push_back(solver.field());
    }
    out.report = solver.report();
    return out;
}

} // namespace

TransportProblem microscopic_problem(const MicroSetup& s) {
    TransportProblem p;
    p.grid = &s.grid->grid;
    p.n = s.grid->grid.dim();
    p.tensor = s.tensor;
    p.porosity = s.porosity;
    p.velocity = s.velocity;
    p.schedule = s.schedule;
    p.scaled_coefficients = true;
    p.eps = s.eps;
    p.bc = s.bc;
    p.hole_flux = true;
    p.dt = s.dt;
    p.T = s.T;
    p.linear_tol = s.linear_tol;
    return p;
}

MicroResult solve_microscopic(const MicroSetup& s, const ScalarField& phi0, int cadence) {
    TransientSolver solver(microscopic_problem(s), phi0);
    return run_collect(solver, cadence);
}

UniformBoundCheck check_uniform_bounds(const std::vector<const TransientRunReport*>& sweep,
                                       double headroom) {
    UniformBoundCheck out;
    out.bound = headroom;
    if (sweep.empty()) return out;
    const double max0 = sweep.front()->max_abs;
    const double h10 = sweep.front()->l2_0T_h1();
    out.pass = true;
    for (const auto* rep : sweep) {
        const double r1 = max0 > 0.0 ? rep->max_abs / max0 : 0.0;
        const double r2 = h10 > 0.0 ? rep->l2_0T_h1() / h10 : 0.0;
        out.worst_ratio = std::max({out.worst_ratio, r1, r2});
        out.pass = out.pass && r1 <= headroom && r2 <= headroom;
    }
    return out;
}

TransportProblem limit_problem(const LimitSetup& s, LimitVariant variant) {
    TransportProblem p;
    p.grid = s.grid;
    p.n = s.grid->dim();
    p.tensor = s.tensor;
    p.porosity = s.porosity;
    p.velocity = s.velocity;
    p.schedule = s.schedule;
    p.eps = s.array.eps;
    p.dt = s.dt;
    p.T = s.T;
    p.linear_tol = s.linear_tol;
    p.hole_flux = false;

    const int vert = p.n - 1;
    const double Ann2 = s.tensor.A2[vert][vert];
    const double dP = hole_boundary_measure(s.array);
    const double M = obstacle_measure(s.array);

    switch (variant) {
        case LimitVariant::limit_sigma: {
            // collapsed limit: outer coefficients everywhere, one plane at Sigma
            p.scaled_coefficients = false;
            p.bc = BoundarySpec::layered_box(p.n);
            InterfaceSpec iface;
            iface.face_layer = s.grid->cells(vert) / 2;
            const double g1 = s.literal_limit_sign ? 2.0 * M : -2.0 * M;
            iface.g0_profile = nullptr;
            iface.g1_profile = [g1](const std::array<double, kMaxDim>&) { return g1; };
            p.interfaces.push_back(iface);
            break;
        }
        case LimitVariant::two_interface: {
            p.scaled_coefficients = true;
            p.bc = s.literal_outer_bc ? BoundarySpec::layered_box_swapped(p.n)
                                      : BoundarySpec::layered_box(p.n);
            for (int which = 0; which < 2; ++which) {
                InterfaceSpec iface;
                iface.face_layer = which == 0 ? s.regions.face_layer_minus : s.regions.face_layer_plus;
                const double g1 = -0.5 * dP;  // printed value; also the source convention
                iface.g1_profile = [g1](const std::array<double, kMaxDim>&) { return g1; };
                p.interfaces.push_back(iface);
            }
            break;
        }
        case LimitVariant::corrector: {
            p.scaled_coefficients = true;
            p.bc = s.literal_outer_bc ? BoundarySpec::layered_box_swapped(p.n)
                                      : BoundarySpec::layered_box(p.n);
            const double mag = 0.5 / Ann2 * dP;
            for (int which = 0; which < 2; ++which) {
                InterfaceSpec iface;
                iface.face_layer = which == 0 ? s.regions.face_layer_minus : s.regions.face_layer_plus;
                const double sgn = which == 0 ? +1.0 : -1.0;  // -+ at Sigma+-, plus at Sigma-
                iface.g0_profile = [sgn, mag](const std::array<double, kMaxDim>&) { return sgn * mag; };
                iface.g1_profile = [sgn, mag](const std::array<double, kMaxDim>&) { return sgn * mag; };
                p.interfaces.push_back(iface);
            }
            break;
        }
    }
    return p;
}

LimitResult solve_limit(const LimitSetup& s, const ScalarField& phi0, int cadence) {
    TransientSolver solver(limit_problem(s, LimitVariant::limit_sigma), phi0);
    auto r = run_collect(solver, cadence);
    return {std::move(r.snapshots), std::move(r.report)};
}

LimitResult solve_two_interface(const LimitSetup& s, const ScalarField& phi0, int cadence) {
    TransientSolver solver(limit_problem(s, LimitVariant::two_interface), phi0);
    auto r = run_collect(solver, cadence);
    return {std::move(r.snapshots), std::move(r.report)};
}

LimitResult solve_first_corrector(const LimitSetup& s, int cadence) {
    ScalarField zero(*s.grid, 0.0);
    TransientSolver solver(limit_problem(s, LimitVariant::corrector), zero);
    auto r = run_collect(solver, cadence);
    return {std::move(r.snapshots), std::move(r.report)};
}

} // namespace ptrans
