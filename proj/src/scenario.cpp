#include "ptrans/scenario.hpp"

#include "ptrans/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ptrans {

namespace {

using nlohmann::json;

[[noreturn]] void cfg_fail(const std::string& path, const std::string& what) {
    throw ConfigError("config: " + path + ": " + what);
}

bool nearly_divides(double dt, double t) {
    if (t <= 0.0) return true;
    const double q = t / dt;
    return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
}

void require_keys(const json& j, const std::string& path, const std::set<std::string>& allowed,
                  const std::set<std::string>& required) {
    if (!j.is_object()) cfg_fail(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) cfg_fail(path + "." + it.key(), "unknown key");
    }
    for (const auto& k : required) {
        if (!j.contains(k)) cfg_fail(path + "." + k, "missing required key");
    }
}

double get_num(const json& j, const std::string& path, const std::string& key, double dflt,
               bool* had = nullptr) {
    if (!j.contains(key)) {
        if (had) *had = false;
        return dflt;
    }
    if (had) *had = true;
    if (!j[key].is_number()) cfg_fail(path + "." + key, "expected a number");
    return j[key].get<double>();
}

int get_int(const json& j, const std::string& path, const std::string& key, int dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number_integer()) cfg_fail(path + "." + key, "expected an integer");
    return j[key].get<int>();
}

bool get_bool(const json& j, const std::string& path, const std::string& key, bool dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_boolean()) cfg_fail(path + "." + key, "expected a boolean");
    return j[key].get<bool>();
}

std::string get_str(const json& j, const std::string& path, const std::string& key,
                    const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_string()) cfg_fail(path + "." + key, "expected a string");
    return j[key].get<std::string>();
}

Matrix parse_matrix(const json& j, const std::string& path, int n) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        cfg_fail(path, "expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
    Matrix A{};
    for (int i = 0; i < n; ++i) {
        const auto& row = j[i];
        if (!row.is_array() || static_cast<int>(row.size()) != n) cfg_fail(path, "ragged matrix");
        for (int k = 0; k < n; ++k) {
            if (!row[k].is_number()) cfg_fail(path, "matrix entries must be numbers");
            A[i][k] = row[k].get<double>();
        }
    }
    return A;
}

std::array<double, kMaxDim> parse_vector(const json& j, const std::string& path, int n) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        cfg_fail(path, "expected a vector of length " + std::to_string(n));
    std::array<double, kMaxDim> v{0.0, 0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        if (!j[i].is_number()) cfg_fail(path, "vector entries must be numbers");
        v[i] = j[i].get<double>();
    }
    return v;
}

SideCondition parse_side(const std::string& s, const std::string& path) {
    if (s == "dirichlet") return SideCondition::dirichlet_zero;
    if (s == "robin" || s == "noflux") return SideCondition::zero_total_flux;
    if (s == "periodic") return SideCondition::periodic;
    cfg_fail(path, "unknown side condition '" + s + "'");
}

json matrix_json(const Matrix& A, int n) {
    json rows = json::array();
    for (int i = 0; i < n; ++i) {
        json row = json::array();
        for (int k = 0; k < n; ++k) row.push_back(A[i][k]);
        rows.push_back(row);
    }
    return rows;
}

const char* side_name(SideCondition s) {
    switch (s) {
        case SideCondition::dirichlet_zero: return "dirichlet";
        case SideCondition::zero_total_flux: return "robin";
        case SideCondition::periodic: return "periodic";
    }
    return "?";
}

} // namespace

Scenario parse_scenario(const json& j) {
    Scenario s;
    require_keys(j, "$",
                 {"geometry", "coefficients", "source", "velocity", "initial", "boundary", "run",
                  "strip", "outputs", "flags"},
                 {"geometry", "coefficients", "source", "run"});

    // geometry
    {
        const auto& g = j.at("geometry");
        require_keys(g, "geometry", {"n", "L", "eps", "beta", "m", "d", "resolution"},
                     {"n", "L", "eps", "beta", "m"});
        s.box.n = get_int(g, "geometry", "n", 2);
        s.box.L = get_num(g, "geometry", "L", 1.0);
        s.array.n = s.box.n;
        s.array.eps = get_num(g, "geometry", "eps", 0.125);
        s.array.beta = get_num(g, "geometry", "beta", 2.0);
        const auto mvec = parse_vector(g.at("m"), "geometry.m", s.box.n - 1);
        for (int i = 0; i < s.box.n - 1; ++i) s.array.m[i] = mvec[i];
        s.d = get_num(g, "geometry", "d", 2.0);
        if (g.contains("resolution")) {
            const auto& r = g.at("resolution");
            require_keys(r, "geometry.resolution", {"cells_per_eps", "cells_per_eps_beta"}, {});
            s.resolution.cells_per_eps = get_int(r, "geometry.resolution", "cells_per_eps", 8);
            s.resolution.cells_per_eps_beta =
                get_int(r, "geometry.resolution", "cells_per_eps_beta", 2);
        }
        try {
            s.box.validate();
            s.array.validate(s.box);
        } catch (const std::exception& e) {
            cfg_fail("geometry", e.what());
        }
        if (!(s.d > 0.0)) cfg_fail("geometry.d", "d must be positive");
    }

    // coefficients
    {
        const auto& cj = j.at("coefficients");
        require_keys(cj, "coefficients", {"A1", "A2", "w1", "w2", "h", "tau"},
                     {"A1", "A2", "tau"});
        s.tensor.n = s.box.n;
        s.tensor.A1 = parse_matrix(cj.at("A1"), "coefficients.A1", s.box.n);
        s.tensor.A2 = parse_matrix(cj.at("A2"), "coefficients.A2", s.box.n);
        s.tensor.h = get_num(cj, "coefficients", "h", 1.5);
        s.porosity.w1 = get_num(cj, "coefficients", "w1", 1.0);
        s.porosity.w2 = get_num(cj, "coefficients", "w2", 1.0);
        s.porosity.h = s.tensor.h;
        s.tau = get_num(cj, "coefficients", "tau", 1.0);
        if (!(s.tau > 0.0)) cfg_fail("coefficients.tau", "tau must be positive");
    }

    // run block first (schedule needs T)
    {
        const auto& r = j.at("run");
        require_keys(r, "run", {"dt", "T", "sweep", "snapshot_every", "tolerances"}, {"dt", "T"});
        s.run.dt = get_num(r, "run", "dt", 0.01);
        s.run.T = get_num(r, "run", "T", 0.5);
        if (!(s.run.dt > 0.0)) cfg_fail("run.dt", "dt must be positive");
        if (!(s.run.T > 0.0)) cfg_fail("run.T", "T must be positive");
        if (r.contains("sweep")) {
            if (!r["sweep"].is_array()) cfg_fail("run.sweep", "expected an array");
            for (const auto& e : r["sweep"]) {
                if (!e.is_number()) cfg_fail("run.sweep", "entries must be numbers");
                s.run.sweep.push_back(e.get<double>());
            }
            for (std::size_t i = 1; i < s.run.sweep.size(); ++i)
                if (s.run.sweep[i] >= s.run.sweep[i - 1])
                    cfg_fail("run.sweep", "eps values must decrease");
            for (double e : s.run.sweep) {
                AlveolusArray a = s.array;
                a.eps = e;
                try {
                    a.validate(s.box);
                } catch (const std::exception& ex) {
                    cfg_fail("run.sweep", ex.what());
                }
            }
        }
        s.run.snapshot_every = get_int(r, "run", "snapshot_every", 0);
        if (r.contains("tolerances")) {
            const auto& t = r.at("tolerances");
            require_keys(t, "run.tolerances", {"linear", "mass_balance", "pd_check"}, {});
            s.run.tol.linear = get_num(t, "run.tolerances", "linear", 1e-10);
            s.run.tol.mass_balance = get_num(t, "run.tolerances", "mass_balance", 1e-10);
            s.run.tol.pd_check = get_num(t, "run.tolerances", "pd_check", 1e-12);
        }
    }

    try {
        s.tensor.validate(s.run.tol.pd_check);
        s.porosity.validate();
    } catch (const std::exception& e) {
        cfg_fail("coefficients", e.what());
    }

    // source
    {
        const auto& so = j.at("source");
        require_keys(so, "source", {"kind", "amplitude", "t_m", "entries"}, {"kind"});
        const std::string kind = get_str(so, "source", "kind", "pulse");
        try {
            if (kind == "pulse") {
                const double amp = get_num(so, "source", "amplitude", 1.0);
                const double tm = get_num(so, "source", "t_m", 0.1);
                s.schedule = SourceSchedule::pulse(amp, tm, s.run.T, s.tau);
            } else if (kind == "table") {
                if (!so.contains("entries")) cfg_fail("source.entries", "missing required key");
                std::vector<SourceSchedule::Entry> entries;
                for (const auto& e : so["entries"]) {
                    if (!e.is_array() || e.size() != 3)
                        cfg_fail("source.entries", "each entry is [t0, t1, value]");
                    entries.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
                }
                s.schedule = SourceSchedule::table(entries, s.run.T, s.tau);
            } else if (kind == "none") {
                s.schedule = SourceSchedule::none(s.run.T, s.tau);
            } else {
                cfg_fail("source.kind", "unknown kind '" + kind + "'");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            cfg_fail("source", e.what());
        }
        // pulse resolution precondition: dt <= t_m / 10 while the pulse is on
        if (s.schedule.t_m > 0.0 && s.run.dt > s.schedule.t_m / 10.0 + 1e-12)
            cfg_fail("run.dt", "dt must not exceed t_m/10 during the pulse");
        if (!nearly_divides(s.run.dt, s.schedule.t_m) || !nearly_divides(s.run.dt, s.run.T))
            cfg_fail("run.dt", "t_m and T must be integer multiples of dt");
    }

    // velocity
    {
        const json vj = j.contains("velocity") ? j.at("velocity") : json{{"preset", "zero"}};
        require_keys(vj, "velocity", {"preset", "value", "v1", "v2", "path"}, {});
        const std::string preset = get_str(vj, "velocity", "preset", "zero");
        const int n = s.box.n;
        const double h = s.tensor.h;
        if (preset == "zero") {
            s.velocity = LayeredVelocity::make_zero(n, h);
        } else if (preset == "constant") {
            if (!vj.contains("value")) cfg_fail("velocity.value", "missing required key");
            s.velocity = LayeredVelocity::make_constant(
                n, h, parse_vector(vj.at("value"), "velocity.value", n));
        } else if (preset == "layered_horizontal") {
            if (!vj.contains("v1") || !vj.contains("v2"))
                cfg_fail("velocity", "layered_horizontal needs v1 and v2");
            try {
                s.velocity = LayeredVelocity::make_layered_horizontal(
                    n, h, parse_vector(vj.at("v1"), "velocity.v1", n),
                    parse_vector(vj.at("v2"), "velocity.v2", n));
            } catch (const std::exception& e) {
                cfg_fail("velocity", e.what());
            }
        } else if (preset == "rotation") {
            s.velocity = LayeredVelocity::make_rotation(n, h);
        } else if (preset == "face_flux_file") {
            s.velocity_file = get_str(vj, "velocity", "path", "");
            if (s.velocity_file.empty()) cfg_fail("velocity.path", "missing required key");
            try {
                s.velocity = load_face_flux_velocity(s.velocity_file, h);
            } catch (const std::exception& e) {
                cfg_fail("velocity.path", e.what());
            }
        } else {
            cfg_fail("velocity.preset", "unknown preset '" + preset + "'");
        }
    }

    // initial condition
    {
        const json ij = j.contains("initial") ? j.at("initial") : json{{"kind", "zero"}};
        require_keys(ij, "initial", {"kind", "value"}, {});
        s.initial_kind = get_str(ij, "initial", "kind", "zero");
        if (s.initial_kind == "constant")
            s.initial_value = get_num(ij, "initial", "value", 0.0);
        else if (s.initial_kind != "zero")
            cfg_fail("initial.kind", "unknown kind '" + s.initial_kind + "'");
    }

    // boundary
    {
        const json bj = j.contains("boundary") ? j.at("boundary") : json{{"mode", "layered_box"}};
        require_keys(bj, "boundary", {"mode", "sides"}, {});
        s.boundary_mode = get_str(bj, "boundary", "mode", "layered_box");
        if (s.boundary_mode == "layered_box") {
            s.bc = BoundarySpec::layered_box(s.box.n);
        } else if (s.boundary_mode == "sealed") {
            s.bc = BoundarySpec::sealed(s.box.n);
        } else if (s.boundary_mode == "general") {
            if (!bj.contains("sides")) cfg_fail("boundary.sides", "missing required key");
            const auto& sides = bj.at("sides");
            static const char* names2[] = {"x_lo", "x_hi", "y_lo", "y_hi", "z_lo", "z_hi"};
            std::set<std::string> allowed;
            for (int i = 0; i < 2 * s.box.n; ++i) allowed.insert(names2[i]);
            require_keys(sides, "boundary.sides", allowed, allowed);
            for (int i = 0; i < 2 * s.box.n; ++i)
                s.bc.side[i] = parse_side(sides.at(names2[i]).get<std::string>(),
                                          std::string("boundary.sides.") + names2[i]);
            try {
                s.bc.validate(s.box.n);
            } catch (const std::exception& e) {
                cfg_fail("boundary.sides", e.what());
            }
        } else {
            cfg_fail("boundary.mode", "unknown mode '" + s.boundary_mode + "'");
        }
    }

    // strip
    {
        const json st = j.contains("strip") ? j.at("strip") : json::object();
        require_keys(st, "strip", {"lateral_cells", "cells_per_obstacle_half", "Y"}, {});
        s.strip.lateral_cells = get_int(st, "strip", "lateral_cells", 64);
        s.strip.cells_per_obstacle_half = get_int(st, "strip", "cells_per_obstacle_half", 4);
        s.strip.Y = get_int(st, "strip", "Y", 0);
    }

    // outputs
    {
        const json oj = j.contains("outputs") ? j.at("outputs") : json::object();
        require_keys(oj, "outputs", {"dir"}, {});
        s.output_dir = get_str(oj, "outputs", "dir", "out");
    }

    // flags
    {
        const json fj = j.contains("flags") ? j.at("flags") : json::object();
        require_keys(fj, "flags", {"literal_limit_sign", "literal_outer_bc"}, {});
        s.flags.literal_limit_sign = get_bool(fj, "flags", "literal_limit_sign", false);
        s.flags.literal_outer_bc = get_bool(fj, "flags", "literal_outer_bc", false);
    }

    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config: " + path + ": parse error: " + e.what());
    }
    return parse_scenario(j);
}

nlohmann::json Scenario::echo() const {
    json j;
    j["geometry"] = {
        {"n", box.n},
        {"L", box.L},
        {"eps", array.eps},
        {"beta", array.beta},
        {"m", json::array()},
        {"d", d},
        {"resolution",
         {{"cells_per_eps", resolution.cells_per_eps},
          {"cells_per_eps_beta", resolution.cells_per_eps_beta}}},
    };
    for (int i = 0; i < box.n - 1; ++i) j["geometry"]["m"].push_back(array.m[i]);
    j["coefficients"] = {{"A1", matrix_json(tensor.A1, box.n)},
                         {"A2", matrix_json(tensor.A2, box.n)},
                         {"w1", porosity.w1},
                         {"w2", porosity.w2},
                         {"h", tensor.h},
                         {"tau", tau}};
    if (schedule.entries.empty()) {
        j["source"] = {{"kind", "none"}};
    } else {
        json entries = json::array();
        for (const auto& e : schedule.entries) entries.push_back({e.t0, e.t1, e.value});
        j["source"] = {{"kind", "table"}, {"entries", entries}};
    }
    if (velocity.preset == "zero") {
        j["velocity"] = {{"preset", "zero"}};
    } else if (velocity.preset == "face_flux_file") {
        j["velocity"] = {{"preset", "face_flux_file"}, {"path", velocity_file}};
    } else {
        // presets echo by name; parameters are reproduced from the closures
        j["velocity"] = {{"preset", velocity.preset}};
        std::array<double, kMaxDim> origin{0.0, 0.0, 0.0};
        if (velocity.preset == "constant") {
            json v = json::array();
            auto val = velocity.v2(origin, 0.0);
            for (int a = 0; a < box.n; ++a) v.push_back(val[a]);
            j["velocity"]["value"] = v;
        } else if (velocity.preset == "layered_horizontal") {
            json v1 = json::array(), v2 = json::array();
            auto a1 = velocity.v1(origin, 0.0);
            auto a2 = velocity.v2(origin, 0.0);
            for (int a = 0; a < box.n; ++a) {
                v1.push_back(a1[a]);
                v2.push_back(a2[a]);
            }
            j["velocity"]["v1"] = v1;
            j["velocity"]["v2"] = v2;
        }
    }
    j["initial"] = initial_kind == "constant"
                       ? json{{"kind", "constant"}, {"value", initial_value}}
                       : json{{"kind", "zero"}};
    if (boundary_mode == "general") {
        static const char* names2[] = {"x_lo", "x_hi", "y_lo", "y_hi", "z_lo", "z_hi"};
        json sides;
        for (int i = 0; i < 2 * box.n; ++i) sides[names2[i]] = side_name(bc.side[i]);
        j["boundary"] = {{"mode", "general"}, {"sides", sides}};
    } else {
        j["boundary"] = {{"mode", boundary_mode}};
    }
    j["run"] = {{"dt", run.dt},
                {"T", run.T},
                {"sweep", run.sweep},
                {"snapshot_every", run.snapshot_every},
                {"tolerances",
                 {{"linear", run.tol.linear},
                  {"mass_balance", run.tol.mass_balance},
                  {"pd_check", run.tol.pd_check}}}};
    j["strip"] = {{"lateral_cells", strip.lateral_cells},
                  {"cells_per_obstacle_half", strip.cells_per_obstacle_half},
                  {"Y", strip.Y}};
    j["outputs"] = {{"dir", output_dir}};
    j["flags"] = {{"literal_limit_sign", flags.literal_limit_sign},
                  {"literal_outer_bc", flags.literal_outer_bc}};
    return j;
}

std::string Scenario::config_hash() const {
    // FNV-1a over the canonical echo; stable across platforms
    const std::string dump = echo().dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

int Scenario::strip_Y_for(double eps) const {
    if (strip.Y > 0) return strip.Y;
    const int needed = static_cast<int>(std::ceil(d * std::log(1.0 / eps))) + 1;
    return std::max(4, needed);
}

ScalarField Scenario::make_initial(const StructuredGrid& grid) const {
    ScalarField f(grid, 0.0);
    if (initial_kind == "constant") {
        for (std::size_t c = 0; c < grid.num_cells(); ++c)
            if (grid.is_fluid(c)) f.values[c] = initial_value;
    }
    return f;
}

} // namespace ptrans
