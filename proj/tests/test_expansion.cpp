#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ptrans/expansion.hpp"

#include <cmath>

using namespace ptrans;

namespace {

// a synthetic cell solution whose full field is a prescribed function
CellSolution synthetic_cell(const StripDomain& strip, double (*fn)(double, double)) {
    CellSolution sol;
    sol.strip = strip;
    sol.tensor.n = 2;
    sol.tensor.A1 = identity_matrix(2);
    sol.tensor.A2 = identity_matrix(2);
    sol.values.assign(strip.grid.num_cells(), 0.0);
    for (std::size_t c = 0; c < strip.grid.num_cells(); ++c) {
        const auto x = strip.grid.cell_center(c);
        sol.values[c] = fn(x[0], x[1]);
    }
    return sol;
}

StripDomain plain_strip() {
    StripResolution res;
    res.cells_per_unit_lateral = 16;
    res.cells_per_unit_vertical = 8;
    return build_strip(2, StripMode::flat, {0.0, 0.0}, 0.0, 2.0, 4, res);
}

struct Setup {
    BoxDomain box;
    AlveolusArray arr;
    PerforatedGrid pg;
    StructuredGrid grid;
    RegionDecomposition regions;
};

Setup make_setup(double eps = 0.125) {
    Setup s;
    s.box.n = 2;
    s.arr.n = 2;
    s.arr.m = {0.25, 0.0};
    s.arr.eps = eps;
    s.arr.beta = 2.0;
    s.pg = build_perforated_grid(s.box, s.arr, {4, 2});
    s.grid = s.pg.grid;
    for (std::size_t i = 0; i < s.grid.num_cells(); ++i) s.grid.set_kind(i, CellKind::fluid);
    s.regions = decompose_regions(s.box, eps, 1.2, s.grid.spacing(1));
    return s;
}

} // namespace

TEST_CASE("rate fit recovers synthetic exponents") {
    std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
    std::vector<double> err;
    for (double e : eps) err.push_back(std::pow(e * std::log(1.0 / e), 1.5));
    auto fit = fit_rate(eps, err);
    CHECK(fit.ok);
    CHECK(fit.exponent == doctest::Approx(1.5).epsilon(0.01));
    CHECK(fit.r2 > 0.999);

    // exponent 0.5 across two decades
    eps = {0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625, 0.002};
    err.clear();
    for (double e : eps) err.push_back(2.7 * std::pow(e * std::log(1.0 / e), 0.5));
    fit = fit_rate(eps, err);
    CHECK(fit.exponent == doctest::Approx(0.5).epsilon(0.01));

    // constant errors: flagged (asymptotic regime not reached)
    auto flat = fit_rate({0.2, 0.1, 0.05}, {1.0, 1.0, 1.0});
    CHECK(!flat.decreasing);
    CHECK(!flat.ok);

    CHECK_THROWS(fit_rate({0.2, 0.1}, {1.0, 0.5}));         // too few points
    CHECK_THROWS(fit_rate({0.1, 0.2, 0.05}, {1, 1, 1}));    // not decreasing in eps
}

TEST_CASE("cell solution sampling is exact on multilinear data") {
    auto strip = plain_strip();
    auto sol = synthetic_cell(strip, [](double yp, double yn) { return 2.0 * yn + 0.5 * yp; });
    CHECK(sol.sample({0.1, 1.3, 0.0}) == doctest::Approx(2.0 * 1.3 + 0.5 * 0.1).epsilon(1e-12));
    CHECK(sol.sample({-0.25, -2.0, 0.0}) == doctest::Approx(-4.0 - 0.125).epsilon(1e-12));
    // lateral wrap: y' = 0.75 equals y' = -0.25
    CHECK(sol.sample({0.75, 1.0, 0.0}) == doctest::Approx(sol.sample({-0.25, 1.0, 0.0})));
}

TEST_CASE("interpolation error estimate") {
    auto strip = plain_strip();
    auto lin = synthetic_cell(strip, [](double, double yn) { return 3.0 * yn; });
    CHECK(interpolation_error_estimate(lin) <= 1e-12);
    auto quad = synthetic_cell(strip, [](double, double yn) { return yn * yn; });
    const double h = strip.grid.spacing(1);
    CHECK(interpolation_error_estimate(quad) == doctest::Approx(2.0 * h * h / 8.0).epsilon(1e-6));
}

TEST_CASE("error accumulator on hand-made fields") {
    auto s = make_setup();
    ErrorAccumulator acc(&s.pg.grid, s.regions.face_layer_minus, s.regions.face_layer_plus);

    ScalarField ref(s.pg.grid), cand(s.pg.grid);
    acc.add_snapshot(ref, cand, 0.1);
    CHECK(acc.l2_h1() == 0.0);
    CHECK(acc.linf_l2() == 0.0);

    // single-cell bump: norms scale with the cell volume
    std::size_t cell = 0;
    for (std::size_t c = 0; c < s.pg.grid.num_cells(); ++c)
        if (s.pg.grid.is_fluid(c)) { cell = c; break; }
    cand.values[cell] = 2.0;
    ErrorAccumulator acc2(&s.pg.grid, s.regions.face_layer_minus, s.regions.face_layer_plus);
    acc2.add_snapshot(ref, cand, 0.1);
    const double V = s.pg.grid.cell_volume();
    CHECK(acc2.linf_l2() == doctest::Approx(2.0 * std::sqrt(V)).epsilon(1e-12));
    CHECK(acc2.l2_h1() > acc2.linf_l2() * std::sqrt(0.1));  // gradient terms add

    ScalarField wrong_size;
    wrong_size.grid = &s.pg.grid;
    wrong_size.values.assign(3, 0.0);
    CHECK_THROWS(acc2.add_snapshot(ref, wrong_size, 0.1));
}

TEST_CASE("composite fields: degenerate and branch identities") {
    auto s = make_setup();
    ExpansionBundle b;
    b.grid = &s.grid;
    b.n = 2;
    b.eps = s.arr.eps;
    b.regions = s.regions;
    b.patch_factor = 1.2 * s.arr.eps * std::log(1.0 / s.arr.eps);

    auto strip = plain_strip();
    auto chi0 = synthetic_cell(strip, [](double yp, double yn) { return 0.3 * yp * std::exp(-yn * yn); });
    auto chi1 = synthetic_cell(strip, [](double yp, double yn) { return 0.2 * yn * std::exp(-yn * yn - yp * yp); });
    auto w = synthetic_cell(strip, [](double, double yn) { return std::exp(-2.0 * std::abs(yn)); });
    b.chi[0] = &chi0;
    b.chi[1] = &chi1;
    b.w = &w;

    LayeredVelocity vzero = LayeredVelocity::make_zero(2, 1.5);
    b.velocity = &vzero;

    // everything zero stays zero
    ScalarField zero(s.grid), out;
    assemble_H(b, zero, 0.0, out);
    for (double v : out.values) CHECK(v == 0.0);
    assemble_F(b, zero, zero, 0.0, 0.0, out);
    for (double v : out.values) CHECK(v == 0.0);

    // outer region: F - phi0 = patch * phi1 exactly, H = phi0 exactly
    ScalarField phi0(s.grid), phi1(s.grid);
    for (std::size_t c = 0; c < s.grid.num_cells(); ++c) {
        const auto x = s.grid.cell_center(c);
        phi0.values[c] = std::sin(2.0 * x[1]) + 0.3 * x[0];
        phi1.values[c] = std::cos(x[1]);
    }
    ScalarField Hf, Ff;
    assemble_H(b, phi0, 0.7, Hf);
    assemble_F(b, phi0, phi1, 0.7, 0.1, Ff);
    for (std::size_t c = 0; c < s.grid.num_cells(); ++c) {
        if (b.in_band(c)) continue;
        CHECK(Hf.values[c] == phi0.values[c]);
        CHECK(Ff.values[c] - phi0.values[c] ==
              doctest::Approx(b.patch_factor * phi1.values[c]).epsilon(1e-13));
    }

    // band with v = 0: the second-order velocity terms are absent even when
    // the z / w_ij solutions are wired in
    auto zsol = synthetic_cell(strip, [](double yp, double yn) { return yp + yn; });
    ExpansionBundle b2 = b;
    b2.z[0] = &zsol;
    b2.z[1] = &zsol;
    b2.wij[0][0] = &zsol;
    ScalarField Ff2;
    assemble_F(b2, phi0, phi1, 0.7, 0.1, Ff2);
    for (std::size_t c = 0; c < s.grid.num_cells(); ++c)
        CHECK(Ff2.values[c] == Ff.values[c]);

    // band value of H matches the hand formula
    for (std::size_t c = 0; c < s.grid.num_cells(); ++c) {
        if (!b.in_band(c)) continue;
        const auto y = b.fast_coords(c);
        const double expect = phi0.values[c] +
                              b.eps * (chi0.sample(y) * banded_gradient(b, phi0, c, 0) +
                                       chi1.sample(y) * banded_gradient(b, phi0, c, 1) +
                                       w.sample(y) * 0.7);
        CHECK(Hf.values[c] == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("banded derivatives do not cross the matching planes") {
    auto s = make_setup();
    ExpansionBundle b;
    b.grid = &s.grid;
    b.n = 2;
    b.eps = s.arr.eps;
    b.regions = s.regions;

    // field with a jump exactly at the planes: one-sided differences must not
    // see it
    ScalarField f(s.grid);
    for (std::size_t c = 0; c < s.grid.num_cells(); ++c) {
        const double y = s.grid.cell_center(c)[1];
        const double base = 2.0 * y;
        const double jump = std::abs(y) < s.regions.snapped_half_width ? 5.0 : 0.0;
        f.values[c] = base + jump;
    }
    for (std::size_t c = 0; c < s.grid.num_cells(); ++c) {
        CHECK(banded_gradient(b, f, c, 1) == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(banded_second(b, f, c, 1, 1) == doctest::Approx(0.0).epsilon(1e-8));
    }
}
