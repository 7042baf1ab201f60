#pragma once

// Scenario configuration: one JSON file describing geometry, coefficients,
// source, run parameters and outputs. Loading validates every module
// invariant, fills documented defaults, rejects unknown keys with their
// path, and can echo the effective configuration back out (round-trip
// identity is a test).

#include "ptrans/coefficients.hpp"
#include "ptrans/geometry.hpp"
#include "ptrans/transport.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ptrans {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct Tolerances {
    double linear = 1e-10;
    double mass_balance = 1e-10;
    double pd_check = 1e-12;
};

struct ScenarioFlags {
    bool literal_limit_sign = false;  // printed limit-jump orientation
    bool literal_outer_bc = false;    // printed S+/S- assignment for outer/corrector
};

struct RunParams {
    double dt = 0.01;
    double T = 0.5;
    std::vector<double> sweep;  // eps values, decreasing
    int snapshot_every = 0;
    Tolerances tol;
};

struct StripParams {
    int lateral_cells = 64;
    int cells_per_obstacle_half = 4;
    int Y = 0;  // 0: pick max(4, ceil(d log(1/eps)) + 1) per sweep point
};

struct Scenario {
    BoxDomain box;
    AlveolusArray array;  // eps field holds the geometry block's value
    GridResolution resolution;
    double d = 2.0;

    LayeredTensor tensor;
    LayeredScalar porosity;
    double tau = 1.0;

    SourceSchedule schedule;
    LayeredVelocity velocity;
    std::string velocity_file;  // face-flux file path when used

    std::string initial_kind = "zero";
    double initial_value = 0.0;

    std::string boundary_mode = "layered_box";
    BoundarySpec bc;

    RunParams run;
    StripParams strip;
    std::string output_dir = "out";
    ScenarioFlags flags;

    nlohmann::json echo() const;
    std::string config_hash() const;

    int strip_Y_for(double eps) const;
    ScalarField make_initial(const StructuredGrid& grid) const;
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

} // namespace ptrans
