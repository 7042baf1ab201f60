#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ptrans/geometry.hpp"

#include <cmath>
#include <random>

using namespace ptrans;

namespace {

AlveolusArray make_array(int n, double m0, double eps, double beta, double m1 = 0.25) {
    AlveolusArray a;
    a.n = n;
    a.m = {m0, m1};
    a.eps = eps;
    a.beta = beta;
    return a;
}

} // namespace

TEST_CASE("obstacle measure") {
    CHECK(obstacle_measure(make_array(2, 0.25, 0.125, 2.0)) == doctest::Approx(0.5));
    CHECK(obstacle_measure(make_array(3, 0.25, 0.125, 2.0, 0.1)) == doctest::Approx(0.1));
    // boundary case m -> 1/2
    CHECK(obstacle_measure(make_array(2, 0.5 - 1e-9, 0.125, 2.0)) ==
          doctest::Approx(1.0 - 2e-9).epsilon(1e-12));
}

TEST_CASE("hole boundary measure") {
    CHECK(hole_boundary_measure(make_array(2, 0.25, 0.1, 2.0)) == doctest::Approx(1.4));
    // eps -> 0 limit: top/bottom faces dominate
    CHECK(hole_boundary_measure(make_array(2, 0.25, 1e-9, 2.0)) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(hole_boundary_measure(make_array(3, 0.25, 0.1, 2.0, 0.25)) == doctest::Approx(0.9));
    CHECK(flat_boundary_measure(make_array(2, 0.25, 0.1, 2.0)) == doctest::Approx(1.0));
}

TEST_CASE("array validation") {
    BoxDomain box;
    box.n = 2;
    box.L = 1.0;
    CHECK_NOTHROW(make_array(2, 0.25, 1.0 / 3.0, 2.0).validate(box));   // 3 in N
    CHECK_THROWS(make_array(2, 0.25, 0.3, 2.0).validate(box));          // 10/3 not in N
    CHECK_THROWS(make_array(2, 0.6, 0.25, 2.0).validate(box));          // m >= 1/2
    CHECK_THROWS(make_array(2, 0.25, 0.25, 1.0).validate(box));         // beta <= 1
}

TEST_CASE("perforated grid: hole count and masking") {
    BoxDomain box;
    box.n = 2;
    GridResolution res{8, 2};

    auto pg = build_perforated_grid(box, make_array(2, 0.25, 0.25, 2.0), res);
    CHECK(pg.hole_count == 4);

    // hole volume fraction matches the analytic masked volume exactly
    std::size_t masked = pg.grid.num_cells() - pg.grid.count_fluid();
    const double frac = masked * pg.grid.cell_volume();
    CHECK(frac == doctest::Approx(pg.hole_volume).epsilon(1e-12));

    // each hole is 0.25*eps = 2 cells wide and 2*eps^2 = 4 rows tall
    // total = 4 holes * 4 * 4 cells? width 0.5*eps = 4 cells at 8 cells/eps
    CHECK(masked == 4u * 4u * 4u);

    auto pg30 = build_perforated_grid(box, make_array(2, 0.25, 1.0 / 30.0, 2.0), {4, 2});
    CHECK(pg30.hole_count == 30);

    CHECK_THROWS(build_perforated_grid(box, make_array(2, 0.25, 0.3, 2.0), res));
    // hole thinner than 2 vertical cells rejected
    CHECK_THROWS(build_perforated_grid(box, make_array(2, 0.25, 0.25, 2.0), {8, 1}));
}

TEST_CASE("perforated grid: discrete boundary area matches the analytic measure") {
    BoxDomain box;
    box.n = 2;
    const double eps = 0.125;
    auto arr = make_array(2, 0.25, eps, 2.0);
    auto pg = build_perforated_grid(box, arr, {8, 2});
    // |Gamma_alpha| = eps^{n-1} |dP_eps| with aligned faces
    const double expect = std::pow(eps, 1) * hole_boundary_measure(arr);
    CHECK(pg.hole_boundary_area_one() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("measures are grid independent") {
    BoxDomain box;
    box.n = 2;
    auto arr = make_array(2, 0.25, 0.125, 2.0);
    auto pg1 = build_perforated_grid(box, arr, {8, 2});
    auto pg2 = build_perforated_grid(box, arr, {16, 4});
    CHECK(pg1.hole_count == pg2.hole_count);
    CHECK(pg1.hole_boundary_area_one() == doctest::Approx(pg2.hole_boundary_area_one()));
    CHECK(pg1.hole_volume == doctest::Approx(pg2.hole_volume));
}

TEST_CASE("region decomposition") {
    BoxDomain box;
    box.n = 2;
    const double hy = 1.0 / 512;

    auto rd = decompose_regions(box, 0.05, 2.0, hy);
    CHECK(rd.band_half_width == doctest::Approx(2.0 * 0.05 * std::log(20.0)));
    CHECK(rd.band_half_width == doctest::Approx(0.2996).epsilon(1e-3));
    CHECK(rd.snap_distance <= hy / 2);
    CHECK(!rd.near_degenerate);
    CHECK(rd.d_at_least_two);

    // near-degenerate but accepted
    auto rd2 = decompose_regions(box, 0.1, 2.0, hy);
    CHECK(rd2.band_half_width == doctest::Approx(0.4605).epsilon(1e-3));
    CHECK(rd2.near_degenerate);

    // band exceeding the half-height is rejected
    CHECK_THROWS(decompose_regions(box, 0.2, 3.0, hy));

    // d below the error-estimate regime is accepted but flagged
    auto rd3 = decompose_regions(box, 0.125, 1.2, 1.0 / 128);
    CHECK(!rd3.d_at_least_two);

    // partition: snapped planes split the rows exactly
    const int half_rows = static_cast<int>(std::round(0.5 / hy));
    CHECK(rd.face_layer_plus - half_rows == half_rows - rd.face_layer_minus);
}

TEST_CASE("property: measures over random admissible arrays") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> um(0.05, 0.45);
    std::uniform_real_distribution<double> ubeta(1.3, 3.0);
    for (int trial = 0; trial < 40; ++trial) {
        AlveolusArray a = make_array(2, um(rng), 0.125, ubeta(rng));
        const double M = obstacle_measure(a);
        CHECK(M > 0.0);
        CHECK(M < 1.0);
        // the side contribution vanishes with eps: |dP_eps| decreases to 2|M|
        AlveolusArray finer = a;
        finer.eps = a.eps / 2.0;
        CHECK(hole_boundary_measure(finer) < hole_boundary_measure(a));
        CHECK(hole_boundary_measure(finer) > 2.0 * M);
        CHECK(flat_boundary_measure(a) == doctest::Approx(2.0 * M));
        // explicit n=2 form 2|M| + 4 eps^{beta-1}
        CHECK(hole_boundary_measure(a) ==
              doctest::Approx(2.0 * M + 4.0 * std::pow(a.eps, a.beta - 1.0)));
    }
}

TEST_CASE("property: masked volume matches the analytic hole volume") {
    BoxDomain box;
    box.n = 2;
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> uk(2, 5);
    std::uniform_int_distribution<int> us(2, 4);
    for (int trial = 0; trial < 8; ++trial) {
        const int k = uk(rng);
        const int r = 4 * us(rng) / 2;  // keep m*r integral for m = 0.25
        auto arr = make_array(2, 0.25, 1.0 / k, 2.0);
        auto pg = build_perforated_grid(box, arr, {r, us(rng)});
        const std::size_t masked = pg.grid.num_cells() - pg.grid.count_fluid();
        CHECK(masked * pg.grid.cell_volume() == doctest::Approx(pg.hole_volume).epsilon(1e-12));
        CHECK(pg.hole_volume ==
              doctest::Approx(obstacle_measure(arr) * arr.eps * 2.0 *
                              std::pow(arr.eps, arr.beta) * pg.hole_count));
    }
}

TEST_CASE("strip domains") {
    StripResolution res;
    res.cells_per_unit_lateral = 16;
    res.cells_per_obstacle_half = 2;
    auto sd = build_strip(2, StripMode::scaled, {0.25, 0.0}, 0.125, 2.0, 4, res);
    CHECK(sd.has_obstacle());
    CHECK(sd.obstacle_half_height == doctest::Approx(0.125));
    // masked cells: 0.5 * 16 = 8 wide, 2*2 = 4 tall
    CHECK(sd.grid.num_cells() - sd.grid.count_fluid() == 8u * 4u);

    res.cells_per_unit_vertical = 16;
    auto fd = build_strip(2, StripMode::flat, {0.25, 0.0}, 0.0, 2.0, 4, res);
    CHECK(fd.crack_cells_below.size() == 8u);
    CHECK(fd.has_obstacle());

    CHECK_THROWS(build_strip(2, StripMode::scaled, {0.25, 0.0}, 0.8, 2.0, 4, res));  // eps^{b-1} >= 1/2
    CHECK_THROWS(build_strip(2, StripMode::scaled, {0.25, 0.0}, 0.125, 2.0, 1, res)); // Y < 2
}
