#include "ptrans/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ptrans {

bool ExpansionBundle::in_band(std::size_t cell) const {
    const int vert = n - 1;
    const double y = grid->cell_center(cell)[vert];
    return std::abs(y) < regions.snapped_half_width;
}

std::array<double, kMaxDim> ExpansionBundle::fast_coords(std::size_t cell) const {
    auto x = grid->cell_center(cell);
    std::array<double, kMaxDim> y{0.0, 0.0, 0.0};
    for (int a = 0; a < n; ++a) y[a] = x[a] / eps;
    for (int a = 0; a < n - 1; ++a) y[a] -= std::round(y[a]);
    return y;
}

namespace {

// whether stepping from row j to row j+dir crosses a matching plane or a
// coefficient-layer interface
bool crosses_plane(const ExpansionBundle& b, int row, int dir) {
    const int face = dir > 0 ? row + 1 : row;
    return face == b.regions.face_layer_minus || face == b.regions.face_layer_plus ||
           face == b.layer_face_minus || face == b.layer_face_plus;
}

struct StencilSample {
    double v = 0.0;
    bool ok = false;
};

StencilSample sample_cell(const ExpansionBundle& b, const ScalarField& f,
                          std::array<int, kMaxDim> cc, int axis, int shift) {
    const auto& g = *b.grid;
    const int vert = b.n - 1;
    StencilSample out;
    const int step = shift > 0 ? 1 : -1;
    for (int taken = 0; taken != shift; taken += step) {
        if (axis == vert && crosses_plane(b, cc[axis], step)) return out;
        cc[axis] += step;
        if (cc[axis] < 0 || cc[axis] >= g.cells(axis)) {
            if (axis < vert && b.lateral_periodic)
                cc[axis] = (cc[axis] + g.cells(axis)) % g.cells(axis);
            else
                return out;
        }
    }
    out.v = f.values[g.index(cc)];
    out.ok = true;
    return out;
}

} // namespace

double banded_gradient(const ExpansionBundle& b, const ScalarField& f, std::size_t cell, int axis) {
    const auto& g = *b.grid;
    const auto cc = g.coords(cell);
    const double h = g.spacing(axis);
    const double v0 = f.values[cell];
    const auto p = sample_cell(b, f, cc, axis, +1);
    const auto m = sample_cell(b, f, cc, axis, -1);
    if (p.ok && m.ok) return (p.v - m.v) / (2.0 * h);
    if (p.ok) return (p.v - v0) / h;
    if (m.ok) return (v0 - m.v) / h;
    return 0.0;
}

double banded_second(const ExpansionBundle& b, const ScalarField& f, std::size_t cell, int k,
                     int l) {
    const auto& g = *b.grid;
    const auto cc = g.coords(cell);
    if (k == l) {
        const double h = g.spacing(k);
        const double v0 = f.values[cell];
        const auto p = sample_cell(b, f, cc, k, +1);
        const auto m = sample_cell(b, f, cc, k, -1);
        if (p.ok && m.ok) return (p.v - 2.0 * v0 + m.v) / (h * h);
        if (p.ok) {
            const auto pp = sample_cell(b, f, cc, k, +2);
            if (pp.ok) return (v0 - 2.0 * p.v + pp.v) / (h * h);
        }
        if (m.ok) {
            const auto mm = sample_cell(b, f, cc, k, -2);
            if (mm.ok) return (v0 - 2.0 * m.v + mm.v) / (h * h);
        }
        return 0.0;
    }
    // mixed derivative: difference the l-gradient along k
    const double hk = g.spacing(k);
    auto grad_at = [&](int shift, bool& ok) -> double {
        auto cs = cc;
        const auto s = sample_cell(b, f, cc, k, shift);
        if (!s.ok) { ok = false; return 0.0; }
        cs[k] += shift;
        if (cs[k] < 0 || cs[k] >= g.cells(k)) cs[k] = (cs[k] + g.cells(k)) % g.cells(k);
        ok = true;
        return banded_gradient(b, f, g.index(cs), l);
    };
    bool okp = false, okm = false;
    const double gp = grad_at(+1, okp);
    const double gm = grad_at(-1, okm);
    const double g0 = banded_gradient(b, f, cell, l);
    if (okp && okm) return (gp - gm) / (2.0 * hk);
    if (okp) return (gp - g0) / hk;
    if (okm) return (g0 - gm) / hk;
    return 0.0;
}

double assemble_H_at(const ExpansionBundle& b, const ScalarField& phi0, std::size_t cell,
                     double phi_value) {
    double v = phi0.values[cell];
    if (!b.in_band(cell)) return v;
    const auto y = b.fast_coords(cell);
    double band = 0.0;
    for (int k = 0; k < b.n; ++k) {
        if (!b.chi[k]) continue;
        band += b.chi[k]->sample(y) * banded_gradient(b, phi0, cell, k);
    }
    if (b.w) band += b.w->sample(y) * phi_value;
    return v + b.eps * band;
}

void assemble_H(const ExpansionBundle& b, const ScalarField& phi0, double phi_value,
                ScalarField& out) {
    out = ScalarField(*b.grid, phi0.time);
    for (std::size_t c = 0; c < b.grid->num_cells(); ++c)
        out.values[c] = assemble_H_at(b, phi0, c, phi_value);
}

void assemble_patched_outer(const ExpansionBundle& b, const ScalarField& phi0,
                            const ScalarField& phi1, ScalarField& out) {
    out = ScalarField(*b.grid, phi0.time);
    for (std::size_t c = 0; c < b.grid->num_cells(); ++c)
        out.values[c] = phi0.values[c] + b.patch_factor * phi1.values[c];
}

double assemble_F_at(const ExpansionBundle& b, const ScalarField& phi0, const ScalarField& phi1,
                     std::size_t cell, double phi_value, double t) {
    const double base = phi0.values[cell] + b.patch_factor * phi1.values[cell];
    if (!b.in_band(cell)) return base;

    const auto y = b.fast_coords(cell);
    const auto x = b.grid->cell_center(cell);
    double band1 = 0.0;
    for (int k = 0; k < b.n; ++k) {
        if (!b.chi[k]) continue;
        const double dsum = banded_gradient(b, phi0, cell, k) +
                            b.patch_factor * banded_gradient(b, phi1, cell, k);
        band1 += b.chi[k]->sample(y) * dsum;
    }
    if (b.w) band1 += b.w->sample(y) * phi_value;

    double band2 = 0.0;
    for (int k = 0; k < b.n; ++k)
        for (int l = 0; l < b.n; ++l)
            if (b.chi2[k][l]) band2 += b.chi2[k][l]->sample(y) * banded_second(b, phi0, cell, k, l);

    if (b.velocity && !b.velocity->zero) {
        const auto v = b.velocity->eval(x, x[b.n - 1] / b.eps, t);
        for (int i = 0; i < b.n; ++i)
            for (int j = 0; j < b.n; ++j)
                if (b.wij[i][j])
                    band2 += b.wij[i][j]->sample(y) * banded_gradient(b, phi0, cell, i) * v[j];
        for (int k = 0; k < b.n; ++k)
            if (b.z[k]) band2 += phi_value * b.z[k]->sample(y) * v[k];
    }
    return base + b.eps * band1 + b.eps * b.eps * band2;
}

void assemble_F(const ExpansionBundle& b, const ScalarField& phi0, const ScalarField& phi1,
                double phi_value, double t, ScalarField& out) {
    out = ScalarField(*b.grid, phi0.time);
    for (std::size_t c = 0; c < b.grid->num_cells(); ++c)
        out.values[c] = assemble_F_at(b, phi0, phi1, c, phi_value, t);
}

ErrorAccumulator::ErrorAccumulator(const StructuredGrid* ref_grid, int sigma_minus_layer,
                                   int sigma_plus_layer, bool lateral_periodic)
    : g_(ref_grid), lay_minus_(sigma_minus_layer), lay_plus_(sigma_plus_layer),
      periodic_(lateral_periodic) {}

void ErrorAccumulator::add_snapshot(const ScalarField& ref, const ScalarField& cand, double dt) {
    if (ref.values.size() != cand.values.size())
        throw std::invalid_argument("error norms: field sizes differ");
    const auto& g = *g_;
    const int n = g.dim();
    const int vert = n - 1;
    const double V = g.cell_volume();

    double l2 = 0.0, h1 = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        if (!g.is_fluid(c)) continue;
        const double e = ref.values[c] - cand.values[c];
        l2 += V * e * e;
        const auto cc = g.coords(c);
        for (int a = 0; a < n; ++a) {
            auto nb = cc;
            nb[a] += 1;
            if (nb[a] >= g.cells(a)) {
                if (a == vert || !periodic_) continue;
                nb[a] = 0;
            }
            if (a == vert) {
                const int face = cc[a] + 1;
                if (face == lay_minus_ || face == lay_plus_) continue;
            }
            const std::size_t cn = g.index(nb);
            if (!g.is_fluid(cn)) continue;
            const double en = ref.values[cn] - cand.values[cn];
            const double d = en - e;
            h1 += g.face_area(a) / g.spacing(a) * d * d;
        }
    }
    acc_sq_ += dt * (l2 + h1);
    max_l2_ = std::max(max_l2_, std::sqrt(l2));
    ++count_;
}

double interface_mismatch(const ExpansionBundle& b, const ScalarField& composite) {
    const auto& g = *b.grid;
    const int vert = b.n - 1;
    double worst = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        const auto cc = g.coords(c);
        const int face = cc[vert] + 1;
        if (face != b.regions.face_layer_minus && face != b.regions.face_layer_plus) continue;
        auto nb = cc;
        nb[vert] += 1;
        if (nb[vert] >= g.cells(vert)) continue;
        const std::size_t cn = g.index(nb);
        worst = std::max(worst, std::abs(composite.values[cn] - composite.values[c]));
    }
    return worst;
}

RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err) {
    RateFit fit;
    if (eps.size() != err.size() || eps.size() < 3)
        throw std::invalid_argument("fit_rate: need at least 3 sweep points");
    for (std::size_t i = 1; i < eps.size(); ++i) {
        if (eps[i] >= eps[i - 1]) throw std::invalid_argument("fit_rate: eps must decrease");
        if (err[i] >= err[i - 1]) fit.decreasing = false;
    }
    for (double e : err)
        if (!(e > 0.0)) return fit;  // degenerate input, flagged not-ok

    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const auto nn = static_cast<double>(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double x = std::log(eps[i] * std::log(1.0 / eps[i]));
        const double y = std::log(err[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double det = nn * sxx - sx * sx;
    if (std::abs(det) < 1e-30) return fit;
    fit.exponent = (nn * sxy - sx * sy) / det;
    const double ssr = syy - sy * sy / nn - fit.exponent * (sxy - sx * sy / nn);
    const double sst = syy - sy * sy / nn;
    fit.r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    fit.ok = fit.decreasing;
    return fit;
}

double interpolation_error_estimate(const CellSolution& sol) {
    // multilinear interpolation error ~ h^2/8 * max |second difference| / h^2
    const auto& g = sol.strip.grid;
    const int n = g.dim();
    double worst = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        if (!g.is_fluid(c)) continue;
        const auto cc = g.coords(c);
        for (int a = 0; a < n; ++a) {
            auto p = cc, m = cc;
            p[a] += 1;
            m[a] -= 1;
            if (a < n - 1) {
                p[a] = (p[a] + g.cells(a)) % g.cells(a);
                m[a] = (m[a] + g.cells(a)) % g.cells(a);
            } else if (p[a] >= g.cells(a) || m[a] < 0) {
                continue;
            }
            const std::size_t cp = g.index(p), cm = g.index(m);
            if (!g.is_fluid(cp) || !g.is_fluid(cm)) continue;
            const double d2 = sol.values[cp] - 2.0 * sol.values[c] + sol.values[cm];
            worst = std::max(worst, std::abs(d2) / 8.0);
        }
    }
    return worst;
}

} // namespace ptrans
