#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ptrans/cellproblems.hpp"
#include "ptrans/microsolver.hpp"

#include <cmath>

using namespace ptrans;

// three-dimensional smoke coverage: the solvers are dimension-generic and
// the production studies run in 2-D, so these stay tiny

TEST_CASE("3-D perforated grid, pulse run, mass budget") {
    BoxDomain box;
    box.n = 3;
    AlveolusArray arr;
    arr.n = 3;
    arr.m = {0.25, 0.25};
    arr.eps = 0.5;
    arr.beta = 2.0;
    auto pg = build_perforated_grid(box, arr, {4, 2});
    CHECK(pg.hole_count == 4);  // (L/eps)^2

    // discrete boundary area of one hole: eps^{n-1} |dP_eps|
    const double expect = 0.25 * hole_boundary_measure(arr);
    CHECK(pg.hole_boundary_area_one() == doctest::Approx(expect).epsilon(1e-12));

    MicroSetup ms;
    ms.grid = &pg;
    ms.tensor.n = 3;
    ms.tensor.A1 = scaled_identity(3, 0.1);
    ms.tensor.A2 = identity_matrix(3);
    ms.tensor.h = 1.5;
    ms.porosity.w1 = ms.porosity.w2 = 1.0;
    ms.velocity = LayeredVelocity::make_zero(3, 1.5);
    ms.schedule = SourceSchedule::pulse(1.0, 0.1, 0.2, 1.0);
    ms.bc = BoundarySpec::layered_box(3);
    ms.eps = arr.eps;
    ms.dt = 0.01;
    ms.T = 0.2;

    TransientSolver solver(microscopic_problem(ms), ScalarField(pg.grid));
    solver.run();
    CHECK(solver.report().max_balance_rel <= 1e-10);
    CHECK(solver.report().total_injected ==
          doctest::Approx(pg.hole_boundary_area * 0.1).epsilon(1e-12));
    CHECK(solver.report().max_abs > 0.0);
    CHECK(energy_diagnostics(solver.report(), 1e-10).pass);
}

TEST_CASE("3-D sealed uniform decay is exact") {
    BoxDomain box;
    box.n = 3;
    AlveolusArray arr;
    arr.n = 3;
    arr.m = {0.25, 0.25};
    arr.eps = 0.5;
    arr.beta = 2.0;
    auto pg = build_perforated_grid(box, arr, {4, 2});

    MicroSetup ms;
    ms.grid = &pg;
    ms.tensor.n = 3;
    ms.tensor.A1 = identity_matrix(3);
    ms.tensor.A2 = identity_matrix(3);
    ms.tensor.h = 1.5;
    ms.velocity = LayeredVelocity::make_zero(3, 1.5);
    ms.schedule = SourceSchedule::none(0.2, 1.0);
    ms.bc = BoundarySpec::sealed(3);
    ms.eps = arr.eps;
    ms.dt = 0.02;
    ms.T = 0.2;

    ScalarField phi0(pg.grid);
    for (std::size_t i = 0; i < pg.grid.num_cells(); ++i)
        if (pg.grid.is_fluid(i)) phi0.values[i] = 0.5;

    TransientSolver solver(microscopic_problem(ms), phi0);
    solver.run();
    const double expect = 0.5 * std::exp(-ms.schedule.lambda * 0.2);
    for (std::size_t i = 0; i < pg.grid.num_cells(); ++i)
        if (pg.grid.is_fluid(i))
            CHECK(solver.field().values[i] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("3-D strip: w far field and parity") {
    StripResolution res;
    res.cells_per_unit_lateral = 16;
    res.cells_per_obstacle_half = 2;
    auto strip = build_strip(3, StripMode::scaled, {0.25, 0.25}, 0.25, 2.0, 3, res);

    LayeredTensor A;
    A.n = 3;
    A.A1 = identity_matrix(3);
    A.A2 = identity_matrix(3);
    A.h = 1.5;

    auto w = solve_w(strip, A);
    // |dP| = 2|M| + 2 eps^{beta-1} per(M) = 0.5 + 2*0.25*2 = 1.5
    AlveolusArray arr;
    arr.n = 3;
    arr.m = {0.25, 0.25};
    arr.eps = 0.25;
    arr.beta = 2.0;
    const double half_dP = 0.5 * hole_boundary_measure(arr);
    CHECK(half_dP == doctest::Approx(0.75));
    CHECK(w.farfield_flux_top == doctest::Approx(-half_dP).epsilon(1e-6));
    CHECK(w.farfield_flux_bottom == doctest::Approx(half_dP).epsilon(1e-6));
    CHECK(reflection_even_error(w) <= 1e-9);
    CHECK(obstacle_flux_total(strip, A, CellProblemKind::w, -1) ==
          doctest::Approx(hole_boundary_measure(arr)).epsilon(1e-12));

    auto chi0 = solve_chi_k(strip, A, 0);
    CHECK(remainder_max(chi0) > 1e-5);
    CHECK(reflection_odd_error(chi0) <= 1e-9);
}
