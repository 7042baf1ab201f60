#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ptrans/io.hpp"
#include "ptrans/scenario.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace ptrans;
using nlohmann::json;

namespace {

json reference_config() {
    return json::parse(R"({
      "geometry": {"n": 2, "L": 1.0, "eps": 0.125, "beta": 2.0, "m": [0.25], "d": 1.2,
                   "resolution": {"cells_per_eps": 8, "cells_per_eps_beta": 2}},
      "coefficients": {"A1": [[0.1, 0.0], [0.0, 0.1]], "A2": [[1.0, 0.0], [0.0, 1.0]],
                       "w1": 1.0, "w2": 1.0, "h": 1.5, "tau": 1.0},
      "source": {"kind": "pulse", "amplitude": 1.0, "t_m": 0.1},
      "velocity": {"preset": "zero"},
      "initial": {"kind": "zero"},
      "boundary": {"mode": "layered_box"},
      "run": {"dt": 0.01, "T": 0.5, "sweep": [0.125, 0.0625, 0.03125], "snapshot_every": 0},
      "strip": {"lateral_cells": 64, "cells_per_obstacle_half": 4, "Y": 0},
      "outputs": {"dir": "out"},
      "flags": {}
    })");
}

} // namespace

TEST_CASE("reference scenario loads with the expected values") {
    auto s = parse_scenario(reference_config());
    CHECK(s.tensor.h == 1.5);
    CHECK(s.array.beta == 2.0);
    CHECK(s.array.eps == 0.125);
    CHECK(s.schedule.lambda == doctest::Approx(std::log(2.0)));
    CHECK(s.run.tol.linear == 1e-10);       // defaulted
    CHECK(s.run.tol.mass_balance == 1e-10); // defaulted
    CHECK(s.run.tol.pd_check == 1e-12);     // defaulted
    CHECK(s.strip_Y_for(0.03125) >= 5);
    CHECK(s.strip_Y_for(0.125) == 4);
}

TEST_CASE("empty and malformed configs fail with key paths") {
    try {
        parse_scenario(json::object());
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("missing required key") != std::string::npos);
    }

    auto bad = reference_config();
    bad["geometry"]["eps"] = 0.3;  // L/eps not an integer
    CHECK_THROWS_AS(parse_scenario(bad), ConfigError);

    auto unknown = reference_config();
    unknown["geometry"]["epsilon"] = 0.1;
    try {
        parse_scenario(unknown);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("geometry.epsilon") != std::string::npos);
    }

    auto badpd = reference_config();
    badpd["coefficients"]["A1"] = {{1.0, 0.5}, {0.4, 1.0}};  // not symmetric
    CHECK_THROWS_AS(parse_scenario(badpd), ConfigError);

    auto baddt = reference_config();
    baddt["run"]["dt"] = 0.02;  // exceeds t_m / 10
    CHECK_THROWS_AS(parse_scenario(baddt), ConfigError);

    auto badT = reference_config();
    badT["run"]["dt"] = 0.003;  // T not a multiple
    CHECK_THROWS_AS(parse_scenario(badT), ConfigError);

    auto badsweep = reference_config();
    badsweep["run"]["sweep"] = {0.125, 0.3};  // not decreasing + invalid eps
    CHECK_THROWS_AS(parse_scenario(badsweep), ConfigError);
}

TEST_CASE("echo round-trips to the identical effective config") {
    auto s = parse_scenario(reference_config());
    auto e1 = s.echo();
    auto s2 = parse_scenario(e1);
    auto e2 = s2.echo();
    CHECK(e1.dump() == e2.dump());
    CHECK(s.config_hash() == s2.config_hash());

    // any change shows up in the hash
    auto mod = reference_config();
    mod["coefficients"]["tau"] = 2.0;
    CHECK(parse_scenario(mod).config_hash() != s.config_hash());
}

TEST_CASE("general boundary mode and sealed mode") {
    auto cfg = reference_config();
    cfg["boundary"] = {{"mode", "general"},
                       {"sides",
                        {{"x_lo", "robin"},
                         {"x_hi", "robin"},
                         {"y_lo", "dirichlet"},
                         {"y_hi", "robin"}}}};
    auto s = parse_scenario(cfg);
    CHECK(s.bc.side[0] == SideCondition::zero_total_flux);
    CHECK(s.bc.side[2] == SideCondition::dirichlet_zero);
    auto e = s.echo();
    CHECK(parse_scenario(e).echo().dump() == e.dump());

    cfg["boundary"] = {{"mode", "sealed"}};
    auto s2 = parse_scenario(cfg);
    CHECK(s2.bc.side[0] == SideCondition::zero_total_flux);

    cfg["boundary"] = {{"mode", "general"},
                       {"sides",
                        {{"x_lo", "periodic"},
                         {"x_hi", "robin"},
                         {"y_lo", "dirichlet"},
                         {"y_hi", "robin"}}}};
    CHECK_THROWS_AS(parse_scenario(cfg), ConfigError);  // unpaired periodic
}

TEST_CASE("face-flux velocity files load and drive the branch closures") {
    StructuredGrid grid(2, {8, 8, 1}, {0.125, 0.125, 1.0}, {-0.5, -0.5, 0.0});
    // constant horizontal field 0.4 written as face data
    std::vector<std::vector<double>> vals(2);
    vals[0].assign(9 * 8, 0.4);
    vals[1].assign(8 * 9, 0.0);
    const std::string path =
        (std::filesystem::temp_directory_path() / "ptrans_facevel.txt").string();
    write_face_flux_velocity(path, grid, vals);

    auto v = load_face_flux_velocity(path, 1.5);
    CHECK(v.preset == "face_flux_file");
    auto u = v.eval({0.0625, -0.1875, 0.0}, 0.0, 0.0);
    CHECK(u[0] == doctest::Approx(0.4));
    CHECK(u[1] == doctest::Approx(0.0));
    CHECK(check_divergence_free(v, grid, 0.0) == doctest::Approx(0.0).epsilon(1e-14));

    // wiring through the scenario config
    auto cfg = reference_config();
    cfg["velocity"] = {{"preset", "face_flux_file"}, {"path", path}};
    auto s = parse_scenario(cfg);
    CHECK(!s.velocity.zero);
    CHECK(s.velocity.eval_outer({0.0, 0.0, 0.0}, 0.0)[0] == doctest::Approx(0.4));
    CHECK(parse_scenario(s.echo()).echo().dump() == s.echo().dump());

    cfg["velocity"]["path"] = "/nonexistent/file.txt";
    CHECK_THROWS_AS(parse_scenario(cfg), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("field files round trip, including masks") {
    BoxDomain box;
    box.n = 2;
    AlveolusArray arr;
    arr.n = 2;
    arr.m = {0.25, 0.0};
    arr.eps = 0.25;
    arr.beta = 2.0;
    auto pg = build_perforated_grid(box, arr, {4, 2});

    ScalarField f(pg.grid, 0.25);
    for (std::size_t c = 0; c < pg.grid.num_cells(); ++c)
        if (pg.grid.is_fluid(c)) f.values[c] = std::sin(static_cast<double>(c));

    const std::string path = std::filesystem::temp_directory_path() / "ptrans_test.field";
    write_field(path, f);
    StructuredGrid loaded_grid;
    auto g = read_field(path, loaded_grid);
    CHECK(loaded_grid.num_cells() == pg.grid.num_cells());
    CHECK(g.time == 0.25);
    for (std::size_t c = 0; c < pg.grid.num_cells(); ++c) {
        CHECK(loaded_grid.is_fluid(c) == pg.grid.is_fluid(c));
        CHECK(g.values[c] == f.values[c]);
    }
    std::remove(path.c_str());
}
