#include "ptrans/study.hpp"

#include "ptrans/io.hpp"
#include "ptrans/limitsolver.hpp"
#include "ptrans/microsolver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <ostream>

namespace ptrans {

namespace {

struct PointSetup {
    AlveolusArray array;
    PerforatedGrid pgrid;
    StructuredGrid box_grid;
    RegionDecomposition regions;
    StripDomain strip;
    std::vector<CellSolution> chi;            // per axis
    std::vector<std::vector<CellSolution>> chi2;  // [k][l]
    CellSolution w;
    std::vector<CellSolution> z;              // per axis (only when v != 0)
    std::vector<std::vector<CellSolution>> wij;
};

PointSetup build_point(const Scenario& s, double eps) {
    PointSetup p;
    p.array = s.array;
    p.array.eps = eps;
    p.pgrid = build_perforated_grid(s.box, p.array, s.resolution);
    p.box_grid = p.pgrid.grid;
    for (std::size_t c = 0; c < p.box_grid.num_cells(); ++c)
        p.box_grid.set_kind(c, CellKind::fluid);

    const int vert = s.box.n - 1;
    p.regions = decompose_regions(s.box, eps, s.d, p.pgrid.grid.spacing(vert));

    StripResolution sres;
    sres.cells_per_unit_lateral = s.strip.lateral_cells;
    sres.cells_per_obstacle_half = s.strip.cells_per_obstacle_half;
    const int Y = s.strip_Y_for(eps);
    p.strip = build_strip(s.box.n, StripMode::scaled, p.array.m, eps, p.array.beta, Y, sres);

    CellProblemOptions copts;
    copts.linear_tol = std::min(1e-12, s.run.tol.linear);
    const int n = s.box.n;
    for (int k = 0; k < n; ++k) p.chi.push_back(solve_chi_k(p.strip, s.tensor, k, copts));
    p.w = solve_w(p.strip, s.tensor, copts);
    p.chi2.resize(n);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
            p.chi2[k].push_back(solve_chi_lm(p.strip, s.tensor, k, l, copts));
    if (!s.velocity.zero) {
        for (int k = 0; k < n; ++k) p.z.push_back(solve_z_k(p.strip, s.tensor, k, copts));
        p.wij.resize(n);
        for (int i = 0; i < n; ++i)
            for (int jj = 0; jj < n; ++jj)
                p.wij[i].push_back(solve_w_ij(p.strip, s.tensor, i, jj, copts));
    }
    return p;
}

ExpansionBundle make_bundle(const Scenario& s, const PointSetup& p, double eps) {
    ExpansionBundle b;
    b.grid = &p.box_grid;
    b.n = s.box.n;
    b.eps = eps;
    b.regions = p.regions;
    b.patch_factor = s.d * eps * std::log(1.0 / eps);
    for (int k = 0; k < s.box.n; ++k) b.chi[k] = &p.chi[static_cast<std::size_t>(k)];
    b.w = &p.w;
    for (int k = 0; k < s.box.n; ++k)
        for (int l = 0; l < s.box.n; ++l)
            b.chi2[k][l] = &p.chi2[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
    if (!s.velocity.zero) {
        for (int k = 0; k < s.box.n; ++k) b.z[k] = &p.z[static_cast<std::size_t>(k)];
        for (int i = 0; i < s.box.n; ++i)
            for (int jj = 0; jj < s.box.n; ++jj)
                b.wij[i][jj] = &p.wij[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)];
    }
    b.velocity = &s.velocity;
    b.lateral_periodic = true;

    // coefficient-layer interfaces at |x_n| = eps*h, when face-aligned
    const int vert = s.box.n - 1;
    const double hy = p.box_grid.spacing(vert);
    const double off = eps * s.tensor.h / hy;
    if (std::abs(off - std::round(off)) < 1e-9 && std::round(off) >= 1.0) {
        const int half = p.box_grid.cells(vert) / 2;
        b.layer_face_plus = half + static_cast<int>(std::round(off));
        b.layer_face_minus = half - static_cast<int>(std::round(off));
    }
    return b;
}

} // namespace

SweepPointResult run_sweep_point(const Scenario& s, double eps, std::ostream* log) {
    PointSetup p = build_point(s, eps);
    if (!s.velocity.zero) {
        const double div = check_divergence_free(s.velocity, p.pgrid.grid, eps);
        if (div > 1e-8)
            throw ConfigError("study: velocity is not discretely divergence free (max |div| = " +
                              std::to_string(div) + ")");
    }
    SweepPointResult out;
    out.eps = eps;
    out.x = eps * std::log(1.0 / eps);
    out.snap_distance = p.regions.snap_distance;
    out.micro_cells = p.pgrid.grid.count_fluid();
    out.strip_Y = p.strip.Y;

    // four lockstep solvers
    MicroSetup ms;
    ms.grid = &p.pgrid;
    ms.tensor = s.tensor;
    ms.porosity = s.porosity;
    ms.velocity = s.velocity;
    ms.schedule = s.schedule;
    ms.bc = BoundarySpec::layered_box(s.box.n);
    ms.eps = eps;
    ms.dt = s.run.dt;
    ms.T = s.run.T;
    ms.linear_tol = s.run.tol.linear;
    TransientSolver micro(microscopic_problem(ms), s.make_initial(p.pgrid.grid));

    LimitSetup ls;
    ls.grid = &p.box_grid;
    ls.box = s.box;
    ls.array = p.array;
    ls.regions = p.regions;
    ls.tensor = s.tensor;
    ls.porosity = s.porosity;
    ls.velocity = s.velocity;
    ls.schedule = s.schedule;
    ls.dt = s.run.dt;
    ls.T = s.run.T;
    ls.linear_tol = s.run.tol.linear;
    ls.literal_limit_sign = s.flags.literal_limit_sign;
    ls.literal_outer_bc = s.flags.literal_outer_bc;

    const ScalarField init_box = s.make_initial(p.box_grid);
    TransientSolver limit(limit_problem(ls, LimitVariant::limit_sigma), init_box);
    TransientSolver outer(limit_problem(ls, LimitVariant::two_interface), init_box);
    ScalarField zero_box(p.box_grid, 0.0);
    TransientSolver corr(limit_problem(ls, LimitVariant::corrector), zero_box);

    ExpansionBundle bundle = make_bundle(s, p, eps);

    ErrorAccumulator acc_limit(&p.pgrid.grid, p.regions.face_layer_minus, p.regions.face_layer_plus);
    ErrorAccumulator acc_outer(&p.pgrid.grid, p.regions.face_layer_minus, p.regions.face_layer_plus);
    ErrorAccumulator acc_H(&p.pgrid.grid, p.regions.face_layer_minus, p.regions.face_layer_plus);
    ErrorAccumulator acc_F(&p.pgrid.grid, p.regions.face_layer_minus, p.regions.face_layer_plus);

    ScalarField Hfield, Ffield;
    const int nsteps = micro.total_steps();
    for (int m = 0; m < nsteps; ++m) {
        const double t0 = micro.time();
        micro.step();
        limit.step();
        outer.step();
        corr.step();
        const double dt = s.run.dt;
        const double phi_band = s.schedule.step_average(t0, dt);

        assemble_H(bundle, outer.field(), phi_band, Hfield);
        assemble_F(bundle, outer.field(), corr.field(), phi_band, micro.time(), Ffield);

        acc_limit.add_snapshot(micro.field(), limit.field(), dt);
        acc_outer.add_snapshot(micro.field(), outer.field(), dt);
        acc_H.add_snapshot(micro.field(), Hfield, dt);
        acc_F.add_snapshot(micro.field(), Ffield, dt);

        out.mismatch_H = std::max(out.mismatch_H, interface_mismatch(bundle, Hfield));
        out.mismatch_F = std::max(out.mismatch_F, interface_mismatch(bundle, Ffield));
    }

    out.micro_max_abs = micro.report().max_abs;
    out.micro_l2h1 = micro.report().l2_0T_h1();
    out.max_balance_rel = std::max({micro.report().max_balance_rel, limit.report().max_balance_rel,
                                    outer.report().max_balance_rel, corr.report().max_balance_rel});
    out.energy_residual_rel = energy_diagnostics(micro.report()).residual_rel;

    out.err_limit_l2h1 = acc_limit.l2_h1();
    out.err_outer_l2h1 = acc_outer.l2_h1();
    out.err_outer_linfl2 = acc_outer.linf_l2();
    out.err_H_l2h1 = acc_H.l2_h1();
    out.err_H_linfl2 = acc_H.linf_l2();
    out.err_F_l2h1 = acc_F.l2_h1();
    out.err_F_linfl2 = acc_F.linf_l2();

    out.interp_error = std::max(interpolation_error_estimate(p.w),
                                interpolation_error_estimate(p.chi[s.box.n - 1]));

    if (log)
        (*log) << "  eps=" << eps << " cells=" << out.micro_cells
               << " err(limit,H1)=" << out.err_limit_l2h1
               << " err(outer,LinfL2)=" << out.err_outer_linfl2
               << " err(H,LinfL2)=" << out.err_H_linfl2 << "\n";
    return out;
}

StudyResult run_study(const Scenario& s, std::ostream* log, int parallel) {
    if (s.run.sweep.size() < 3)
        throw ConfigError("study: run.sweep needs at least 3 eps values");
    StudyResult r;
    r.points.resize(s.run.sweep.size());

    if (parallel > 1) {
        std::vector<std::future<SweepPointResult>> futs;
        for (double eps : s.run.sweep)
            futs.push_back(std::async(std::launch::async,
                                      [&s, eps] { return run_sweep_point(s, eps, nullptr); }));
        for (std::size_t i = 0; i < futs.size(); ++i) r.points[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < s.run.sweep.size(); ++i)
            r.points[i] = run_sweep_point(s, s.run.sweep[i], log);
    }

    std::vector<double> eps, e_limit, e_outer_h1, e_outer_l2, e_H_h1;
    for (const auto& p : r.points) {
        eps.push_back(p.eps);
        e_limit.push_back(p.err_limit_l2h1);
        e_outer_h1.push_back(p.err_outer_l2h1);
        e_outer_l2.push_back(p.err_outer_linfl2);
        e_H_h1.push_back(p.err_H_l2h1);
    }
    r.rate_limit_l2h1 = fit_rate(eps, e_limit);
    r.rate_outer_l2h1 = fit_rate(eps, e_outer_h1);
    r.rate_outer_linfl2 = fit_rate(eps, e_outer_l2);
    r.rate_H_l2h1 = fit_rate(eps, e_H_h1);

    const auto& last = r.points.back();
    r.ordering_H_le_outer_linfl2 = last.err_H_linfl2 <= last.err_outer_linfl2;
    r.ordering_F_le_H_le_outer_l2h1 =
        last.err_F_l2h1 <= last.err_H_l2h1 && last.err_H_l2h1 <= last.err_outer_l2h1;
    return r;
}

void write_study_outputs(const StudyResult& r, const Scenario& s, const std::string& outdir) {
    ensure_directory(outdir);
    {
        CsvWriter csv(outdir + "/rates.csv");
        csv.header({"eps", "eps_log", "err_limit_l2h1", "err_outer_l2h1", "err_outer_linfl2",
                    "err_H_l2h1", "err_H_linfl2", "err_F_l2h1", "err_F_linfl2", "micro_max_abs",
                    "micro_l2h1", "max_balance_rel", "mismatch_H", "mismatch_F", "interp_error",
                    "snap_distance"});
        for (const auto& p : r.points)
            csv.row({p.eps, p.x, p.err_limit_l2h1, p.err_outer_l2h1, p.err_outer_linfl2,
                     p.err_H_l2h1, p.err_H_linfl2, p.err_F_l2h1, p.err_F_linfl2, p.micro_max_abs,
                     p.micro_l2h1, p.max_balance_rel, p.mismatch_H, p.mismatch_F, p.interp_error,
                     p.snap_distance});
    }
    {
        CsvWriter csv(outdir + "/fits.csv");
        csv.header({"quantity", "exponent", "r2", "decreasing"});
        auto row = [&csv](const char* name, const RateFit& f) {
            csv.raw_row({name, format_double(f.exponent), format_double(f.r2),
                         f.decreasing ? "1" : "0"});
        };
        row("limit_l2h1", r.rate_limit_l2h1);
        row("outer_l2h1", r.rate_outer_l2h1);
        row("outer_linfl2", r.rate_outer_linfl2);
        row("H_l2h1", r.rate_H_l2h1);
    }
    {
        nlohmann::json m;
        m["config"] = s.echo();
        m["config_hash"] = s.config_hash();
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : r.points) {
            pts.push_back({{"eps", p.eps},
                           {"micro_cells", p.micro_cells},
                           {"strip_Y", p.strip_Y},
                           {"snap_distance", p.snap_distance},
                           {"max_balance_rel", p.max_balance_rel}});
        }
        m["points"] = pts;
        m["orderings"] = {{"H_le_outer_linfl2", r.ordering_H_le_outer_linfl2},
                          {"F_le_H_le_outer_l2h1", r.ordering_F_le_H_le_outer_l2h1}};
        auto fit_json = [](const RateFit& f) {
            return nlohmann::json{{"exponent", f.exponent}, {"r2", f.r2},
                                  {"decreasing", f.decreasing}};
        };
        m["fits"] = {{"limit_l2h1", fit_json(r.rate_limit_l2h1)},
                     {"outer_l2h1", fit_json(r.rate_outer_l2h1)},
                     {"outer_linfl2", fit_json(r.rate_outer_linfl2)},
                     {"H_l2h1", fit_json(r.rate_H_l2h1)}};
        m["deterministic"] = true;  // no stochastic components, fixed iteration orders
        std::ofstream os(outdir + "/manifest.json");
        os << m.dump(2) << "\n";
    }
}

BandDominance band_dominance_study(const Scenario& s, double eps) {
    PointSetup p = build_point(s, eps);
    BandDominance out;

    LimitSetup ls;
    ls.grid = &p.box_grid;
    ls.box = s.box;
    ls.array = p.array;
    ls.regions = p.regions;
    ls.tensor = s.tensor;
    ls.porosity = s.porosity;
    ls.velocity = s.velocity;
    ls.schedule = s.schedule;
    ls.dt = s.run.dt;
    ls.T = s.run.T;
    ls.linear_tol = s.run.tol.linear;
    TransientSolver outer(limit_problem(ls, LimitVariant::two_interface),
                          s.make_initial(p.box_grid));

    ExpansionBundle bundle = make_bundle(s, p, eps);
    const auto& g = p.box_grid;
    const double V = g.cell_volume();
    const int vert = s.box.n - 1;

    const double t_pulse = s.schedule.t_m;
    const double t_check = 5.0 * t_pulse;
    bool band_above_during_pulse = false;
    bool band_below_at_check = false;

    while (outer.steps_done() < outer.total_steps()) {
        const double t0 = outer.time();
        outer.step();
        const double t = outer.time();
        const double phi_band = s.schedule.step_average(t0, s.run.dt);

        double band_sq = 0.0, outer_sq = 0.0;
        for (std::size_t c = 0; c < g.num_cells(); ++c) {
            const double y = g.cell_center(c)[vert];
            if (std::abs(y) >= p.regions.snapped_half_width) continue;
            const double wterm = eps * p.w.sample(bundle.fast_coords(c)) * phi_band;
            band_sq += V * wterm * wterm;
            const double ov = outer.field().values[c];
            outer_sq += V * ov * ov;
        }
        out.t.push_back(t);
        out.band_norm.push_back(std::sqrt(band_sq));
        out.outer_norm.push_back(std::sqrt(outer_sq));

        if (t <= t_pulse + 1e-12 && band_sq > outer_sq) band_above_during_pulse = true;
        if (std::abs(t - t_check) < 0.5 * s.run.dt && band_sq < outer_sq) band_below_at_check = true;
    }
    out.dominates_during_pulse = band_above_during_pulse;
    out.recedes_by_5tm = band_below_at_check;
    out.pass = out.dominates_during_pulse && out.recedes_by_5tm;
    return out;
}

} // namespace ptrans
