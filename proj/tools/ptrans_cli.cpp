// ptrans command-line driver.
//
// Subcommands: validate-config, solve-micro, solve-limit, solve-outer,
// solve-corrector, cell, study. Exit codes: 0 ok, 2 config error,
// 3 solver failure, 4 acceptance-check failure.

#include "ptrans/cellproblems.hpp"
#include "ptrans/io.hpp"
#include "ptrans/limitsolver.hpp"
#include "ptrans/microsolver.hpp"
#include "ptrans/scenario.hpp"
#include "ptrans/study.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace ptrans;

struct Common {
    std::string config;
    std::string out = "out";
    double eps_override = 0.0;
    int parallel = 1;
};

Scenario load(const Common& c) {
    Scenario s = load_scenario(c.config);
    if (c.eps_override > 0.0) {
        s.array.eps = c.eps_override;
        s.array.validate(s.box);
    }
    return s;
}

void dump_run_report(const TransientRunReport& rep, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"t", "mass", "l2", "h1semi", "min", "max", "balance_residual_rel"});
    for (const auto& r : rep.rows)
        csv.row({r.t, r.mass, r.l2, r.h1semi, r.minv, r.maxv, r.balance_rel});
}

void dump_snapshots(const std::vector<ScalarField>& snaps, const std::string& dir,
                    const std::string& stem) {
    for (std::size_t i = 0; i < snaps.size(); ++i)
        write_field(dir + "/" + stem + "_" + std::to_string(i) + ".field", snaps[i]);
}

void require_divergence_free(const Scenario& s, const StructuredGrid& grid, double eps) {
    if (s.velocity.zero) return;
    const double div = check_divergence_free(s.velocity, grid, eps);
    if (div > 1e-8)
        throw ConfigError("velocity is not discretely divergence free (max |div| = " +
                          format_double(div) + ")");
}

int run_micro(const Common& c) {
    Scenario s = load(c);
    PerforatedGrid pg = build_perforated_grid(s.box, s.array, s.resolution);
    require_divergence_free(s, pg.grid, s.array.eps);
    MicroSetup ms;
    ms.grid = &pg;
    ms.tensor = s.tensor;
    ms.porosity = s.porosity;
    ms.velocity = s.velocity;
    ms.schedule = s.schedule;
    ms.bc = s.bc;
    ms.eps = s.array.eps;
    ms.dt = s.run.dt;
    ms.T = s.run.T;
    ms.linear_tol = s.run.tol.linear;
    ensure_directory(c.out);
    auto res = solve_microscopic(ms, s.make_initial(pg.grid),
                                 s.run.snapshot_every > 0 ? s.run.snapshot_every : 0);
    dump_run_report(res.report, c.out + "/micro_report.csv");
    dump_snapshots(res.snapshots, c.out, "micro");
    std::cout << "solve-micro: " << pg.hole_count << " holes, "
              << pg.grid.count_fluid() << " fluid cells, max|phi| = "
              << format_double(res.report.max_abs)
              << ", worst balance residual = " << format_double(res.report.max_balance_rel)
              << "\n";
    return 0;
}

int run_limit_kind(const Common& c, LimitVariant variant, const std::string& stem) {
    Scenario s = load(c);
    PerforatedGrid pg = build_perforated_grid(s.box, s.array, s.resolution);
    StructuredGrid box_grid = pg.grid;
    for (std::size_t i = 0; i < box_grid.num_cells(); ++i) box_grid.set_kind(i, CellKind::fluid);
    require_divergence_free(s, box_grid, s.array.eps);

    LimitSetup ls;
    ls.grid = &box_grid;
    ls.box = s.box;
    ls.array = s.array;
    if (variant != LimitVariant::limit_sigma)
        ls.regions = decompose_regions(s.box, s.array.eps, s.d, box_grid.spacing(s.box.n - 1));
    ls.tensor = s.tensor;
    ls.porosity = s.porosity;
    ls.velocity = s.velocity;
    ls.schedule = s.schedule;
    ls.dt = s.run.dt;
    ls.T = s.run.T;
    ls.linear_tol = s.run.tol.linear;
    ls.literal_limit_sign = s.flags.literal_limit_sign;
    ls.literal_outer_bc = s.flags.literal_outer_bc;

    ensure_directory(c.out);
    LimitResult res;
    const int cadence = s.run.snapshot_every;
    if (variant == LimitVariant::limit_sigma)
        res = solve_limit(ls, s.make_initial(box_grid), cadence);
    else if (variant == LimitVariant::two_interface)
        res = solve_two_interface(ls, s.make_initial(box_grid), cadence);
    else
        res = solve_first_corrector(ls, cadence);
    dump_run_report(res.report, c.out + "/" + stem + "_report.csv");
    dump_snapshots(res.snapshots, c.out, stem);
    std::cout << stem << ": max|phi| = " << format_double(res.report.max_abs)
              << ", worst balance residual = " << format_double(res.report.max_balance_rel)
              << "\n";
    return 0;
}

int run_cell(const Common& c, const std::string& problem, const std::string& mode_s, int k, int l,
             int Y_arg) {
    Scenario s = load(c);
    const StripMode mode = mode_s == "flat" ? StripMode::flat : StripMode::scaled;
    StripResolution res;
    res.cells_per_unit_lateral = s.strip.lateral_cells;
    res.cells_per_obstacle_half = s.strip.cells_per_obstacle_half;
    if (mode == StripMode::flat) {
        const double hh = std::pow(s.array.eps, s.array.beta - 1.0);
        res.cells_per_unit_vertical =
            static_cast<int>(std::round(res.cells_per_obstacle_half / hh));
        res.cells_per_unit_vertical = std::max(res.cells_per_unit_vertical, 4);
    }
    const int Y = Y_arg > 0 ? Y_arg : s.strip_Y_for(s.array.eps);
    StripDomain strip = build_strip(s.box.n, mode, s.array.m, s.array.eps, s.array.beta, Y, res);

    CellProblemOptions opts;
    opts.linear_tol = std::min(1e-12, s.run.tol.linear);
    opts.auto_truncate = Y_arg <= 0;

    CellSolution sol;
    if (problem == "chi-k") sol = solve_chi_k(strip, s.tensor, k, opts);
    else if (problem == "w") sol = solve_w(strip, s.tensor, opts);
    else if (problem == "chi-lm") sol = solve_chi_lm(strip, s.tensor, k, l, opts);
    else if (problem == "w-ij") sol = solve_w_ij(strip, s.tensor, k, l, opts);
    else if (problem == "z-k") sol = solve_z_k(strip, s.tensor, k, opts);
    else {
        std::cerr << "unknown cell problem '" << problem << "'\n";
        return 2;
    }

    // distance to the flat-obstacle limit, when the grids can be matched
    double flat_limit_error = std::numeric_limits<double>::quiet_NaN();
    if (mode == StripMode::scaled) {
        const double hh = std::pow(s.array.eps, s.array.beta - 1.0);
        const double per_unit = res.cells_per_obstacle_half / hh;
        if (std::abs(per_unit - std::round(per_unit)) < 1e-9) {
            StripResolution fres = res;
            fres.cells_per_unit_vertical = static_cast<int>(std::round(per_unit));
            auto fstrip = build_strip(s.box.n, StripMode::flat, s.array.m, 0.0, s.array.beta,
                                      sol.strip.Y, fres);
            CellProblemOptions fopts = opts;
            fopts.auto_truncate = false;
            CellSolution fsol;
            if (problem == "chi-k") fsol = solve_chi_k(fstrip, s.tensor, k, fopts);
            else if (problem == "w") fsol = solve_w(fstrip, s.tensor, fopts);
            else if (problem == "chi-lm") fsol = solve_chi_lm(fstrip, s.tensor, k, l, fopts);
            else if (problem == "w-ij") fsol = solve_w_ij(fstrip, s.tensor, k, l, fopts);
            else fsol = solve_z_k(fstrip, s.tensor, k, fopts);
            flat_limit_error = gradient_distance(sol, fsol);
        }
    }

    ensure_directory(c.out);
    {
        ScalarField f(sol.strip.grid, 0.0);
        const int vert = sol.strip.grid.dim() - 1;
        for (std::size_t i = 0; i < f.values.size(); ++i)
            f.values[i] = sol.strip.grid.is_fluid(i)
                              ? sol.values[i] + sol.profile(sol.strip.grid.cell_center(i)[vert])
                              : 0.0;
        write_field(c.out + "/cell_" + problem + ".field", f);
    }
    {
        CsvWriter csv(c.out + "/cell_summary.csv");
        csv.header({"farfield_flux_top", "farfield_flux_bottom", "tau_hat", "decay_C", "c_plus",
                    "c_minus", "side_asymmetry", "compat_projection", "flat_limit_gradient_error"});
        csv.row({sol.farfield_flux_top, sol.farfield_flux_bottom, sol.decay.tau_hat, sol.decay.C,
                 sol.c_plus, sol.c_minus, sol.side_asymmetry, sol.compat_projection,
                 flat_limit_error});
    }
    std::cout << "cell " << problem << ": far-field flux " << format_double(sol.farfield_flux_top)
              << " / " << format_double(sol.farfield_flux_bottom)
              << ", tau_hat = " << format_double(sol.decay.tau_hat) << " (Y = " << sol.strip.Y
              << ")\n";
    return 0;
}

int run_study_cmd(const Common& c) {
    Scenario s = load(c);
    StudyResult r = run_study(s, &std::cout, c.parallel);
    write_study_outputs(r, s, c.out);
    std::cout << "study: fitted exponents: limit(L2H1) = "
              << format_double(r.rate_limit_l2h1.exponent)
              << ", outer(LinfL2) = " << format_double(r.rate_outer_linfl2.exponent) << "\n";
    for (const auto& p : r.points) {
        if (p.max_balance_rel > s.run.tol.mass_balance) {
            std::cerr << "study: mass budget residual " << format_double(p.max_balance_rel)
                      << " at eps = " << format_double(p.eps) << " exceeds the configured "
                      << format_double(s.run.tol.mass_balance) << "\n";
            return 4;
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"perforated-domain transport solvers and homogenized-limit studies"};
    app.require_subcommand(1);

    Common common;
    app.add_option("--config", common.config, "scenario configuration file")->required();
    app.add_option("--out", common.out, "output directory");
    app.add_option("--eps", common.eps_override, "override geometry.eps");
    app.add_option("--parallel", common.parallel, "concurrent sweep points (study)");

    auto* validate = app.add_subcommand("validate-config", "load and echo the configuration");
    auto* micro = app.add_subcommand("solve-micro", "microscopic solve on the perforated grid");
    auto* limit = app.add_subcommand("solve-limit", "homogenized limit solve");
    auto* outer = app.add_subcommand("solve-outer", "two-interface outer solve");
    auto* corr = app.add_subcommand("solve-corrector", "first corrector solve");
    auto* study = app.add_subcommand("study", "full eps-sweep convergence study");

    auto* cell = app.add_subcommand("cell", "auxiliary strip problem");
    std::string problem = "w";
    std::string mode = "scaled";
    int k = 0, l = 0, Y = 0;
    cell->add_option("problem", problem, "chi-k | w | chi-lm | w-ij | z-k")->required();
    cell->add_option("--mode", mode, "scaled | flat");
    cell->add_option("--k", k, "first index");
    cell->add_option("--l", l, "second index");
    cell->add_option("--Y", Y, "truncation height (0 = auto)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    }

    try {
        if (validate->parsed()) {
            Scenario s = load(common);
            std::cout << s.echo().dump(2) << "\n";
            std::cout << "config-hash: " << s.config_hash() << "\n";
            return 0;
        }
        if (micro->parsed()) return run_micro(common);
        if (limit->parsed()) return run_limit_kind(common, LimitVariant::limit_sigma, "limit");
        if (outer->parsed()) return run_limit_kind(common, LimitVariant::two_interface, "outer");
        if (corr->parsed()) return run_limit_kind(common, LimitVariant::corrector, "corrector");
        if (cell->parsed()) return run_cell(common, problem, mode, k, l, Y);
        if (study->parsed()) return run_study_cmd(common);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const SolveError& e) {
        std::cerr << "solver failure (step " << e.step << "): " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
