#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ptrans/study.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace ptrans;
using nlohmann::json;

namespace {

Scenario small_scenario() {
    json cfg = json::parse(R"({
      "geometry": {"n": 2, "L": 1.0, "eps": 0.25, "beta": 2.0, "m": [0.25], "d": 1.2,
                   "resolution": {"cells_per_eps": 4, "cells_per_eps_beta": 2}},
      "coefficients": {"A1": [[0.1, 0.0], [0.0, 0.1]], "A2": [[1.0, 0.0], [0.0, 1.0]],
                       "w1": 1.0, "w2": 1.0, "h": 1.5, "tau": 1.0},
      "source": {"kind": "pulse", "amplitude": 1.0, "t_m": 0.1},
      "run": {"dt": 0.01, "T": 0.2, "sweep": [0.25, 0.125, 0.0625]},
      "strip": {"lateral_cells": 32, "cells_per_obstacle_half": 2, "Y": 0}
    })");
    return parse_scenario(cfg);
}

} // namespace

TEST_CASE("small sweep: errors decrease and budgets close") {
    Scenario s = small_scenario();
    StudyResult r = run_study(s, nullptr, 1);

    REQUIRE(r.points.size() == 3);
    for (const auto& p : r.points) {
        CHECK(p.max_balance_rel <= 1e-10);
        CHECK(p.err_limit_l2h1 > 0.0);
        CHECK(p.err_outer_linfl2 > 0.0);
        CHECK(p.micro_max_abs > 0.0);
    }
    // the limit-model distance decreases across the sweep
    CHECK(r.points[1].err_limit_l2h1 < r.points[0].err_limit_l2h1);
    CHECK(r.points[2].err_limit_l2h1 < r.points[1].err_limit_l2h1);
    // the composite improves on the plain outer solution at the smallest eps
    CHECK(r.ordering_H_le_outer_linfl2);

    std::ostringstream msg;
    msg << "limit exponent " << r.rate_limit_l2h1.exponent << " r2 " << r.rate_limit_l2h1.r2
        << "; outer LinfL2 exponent " << r.rate_outer_linfl2.exponent << " r2 "
        << r.rate_outer_linfl2.r2 << "; H exponent " << r.rate_H_l2h1.exponent;
    INFO(msg.str());
    CHECK(r.rate_limit_l2h1.exponent > 0.0);
    CHECK(r.rate_outer_linfl2.exponent > 0.0);
    std::cout << "[study smoke] " << msg.str() << "\n";

    // outputs are written and deterministic
    const auto dir = std::filesystem::temp_directory_path() / "ptrans_study_test";
    write_study_outputs(r, s, dir.string());
    std::ifstream rates(dir / "rates.csv");
    REQUIRE(rates.good());
    std::stringstream buf1;
    buf1 << rates.rdbuf();
    write_study_outputs(r, s, dir.string());
    std::ifstream rates2(dir / "rates.csv");
    std::stringstream buf2;
    buf2 << rates2.rdbuf();
    CHECK(buf1.str() == buf2.str());
    std::filesystem::remove_all(dir);
}

TEST_CASE("band dominance during a strong pulse with weak inner diffusion") {
    Scenario s = small_scenario();
    // contrast 1e-2 and a horizon reaching 5 t_m
    json cfg = s.echo();
    cfg["coefficients"]["A1"] = {{0.01, 0.0}, {0.0, 0.01}};
    cfg["run"]["T"] = 0.6;
    cfg["run"]["sweep"] = {0.25, 0.125, 0.0625};
    Scenario s2 = parse_scenario(cfg);

    auto bd = band_dominance_study(s2, 0.125);
    CHECK(bd.dominates_during_pulse);
    CHECK(bd.recedes_by_5tm);
    CHECK(bd.pass);
}
