#include "ptrans/cellproblems.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ptrans {

namespace {
double smoothstep5(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
double smoothstep5_prime(double t) { return 30.0 * t * t * (1.0 - t) * (1.0 - t); }
} // namespace

double cutoff_zeta(double y) {
    const double a = std::abs(y);
    if (a <= 0.5) return 0.0;
    if (a >= 1.0) return 1.0;
    return smoothstep5(2.0 * (a - 0.5));
}

double cutoff_zeta_prime(double y) {
    const double a = std::abs(y);
    if (a <= 0.5 || a >= 1.0) return 0.0;
    return 2.0 * smoothstep5_prime(2.0 * (a - 0.5)) * (y >= 0.0 ? 1.0 : -1.0);
}

double profile_pi(double y, double Ann2, double dP) {
    return -cutoff_zeta(y) / Ann2 * std::abs(y) * 0.5 * dP;
}

double profile_pi_prime(double y, double Ann2, double dP) {
    const double sgn = y >= 0.0 ? 1.0 : -1.0;
    return -(cutoff_zeta_prime(y) * std::abs(y) + cutoff_zeta(y) * sgn) / Ann2 * 0.5 * dP;
}

double profile_rho(double y, double Ann2, double dP) {
    return -cutoff_zeta(y) * 0.25 * dP / (Ann2 * Ann2) * std::abs(y) * y;
}

double profile_rho_prime(double y, double Ann2, double dP) {
    return -0.25 * dP / (Ann2 * Ann2) *
           (cutoff_zeta_prime(y) * std::abs(y) * y + cutoff_zeta(y) * 2.0 * std::abs(y));
}

double CellSolution::profile(double y_n) const {
    if (profile_linear) return profile_pi(y_n, profile_Ann2, profile_dP);
    if (profile_quadratic) return profile_rho(y_n, profile_Ann2, profile_dP);
    return 0.0;
}

// ===========================================================================
// Elliptic strip solver: -div(A grad u) = f, periodic laterally, Neumann
// data on the obstacle boundary, homogeneous Neumann at y_n = +-Y.
// The constant nullspace is removed by projecting the right-hand side and
// pinning one dof symmetrically.
// ===========================================================================
namespace {

struct StripSystem {
    const StripDomain* sd = nullptr;
    const LayeredTensor* A = nullptr;
    const StructuredGrid* g = nullptr;
    int n = 2;
    int vert = 1;

    std::vector<int> dof;           // cell -> dof
    std::vector<std::size_t> cells; // dof -> cell

    struct Face {
        int lo = -1, hi = -1;
        std::int8_t axis = 0;
        double trans = 0.0;
        double area = 0.0;
        int layer = 0;  // vertical face layer (vertical faces only)
    };
    struct DataFace {
        int dof = -1;
        std::int8_t axis = 0;
        std::int8_t out_dir = 0;  // outward normal direction (+1/-1) along axis
        double area = 0.0;
        std::array<double, kMaxDim> x{0.0, 0.0, 0.0};  // face centroid
    };
    std::vector<Face> faces;
    std::vector<DataFace> data_faces;  // obstacle / crack sides
    std::vector<std::uint8_t> crack_face_below;  // per cell: 1 if its top face is a crack face

    Eigen::SparseMatrix<double> mat;
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::IncompleteCholesky<double>> cg;
    bool cross = false;

    Matrix cell_A(std::size_t c) const { return A->at_fast(g->cell_center(c)[vert]); }

    void build(const StripDomain& strip, const LayeredTensor& tensor, double tol, int max_iter);
    Eigen::VectorXd solve(Eigen::VectorXd rhs, double* compat) const;
    double cell_gradient(const Eigen::VectorXd& u, std::size_t cell, int axis) const;
};

void StripSystem::build(const StripDomain& strip, const LayeredTensor& tensor, double tol,
                        int max_iter) {
    sd = &strip;
    A = &tensor;
    g = &strip.grid;
    n = g->dim();
    vert = n - 1;
    cross = tensor.has_cross_terms();

    dof.assign(g->num_cells(), -1);
    cells.clear();
    for (std::size_t c = 0; c < g->num_cells(); ++c) {
        if (!g->is_fluid(c)) continue;
        dof[c] = static_cast<int>(cells.size());
        cells.push_back(c);
    }

    crack_face_below.assign(g->num_cells(), 0);
    for (auto c : strip.crack_cells_below) crack_face_below[c] = 1;

    faces.clear();
    data_faces.clear();
    for (std::size_t c = 0; c < g->num_cells(); ++c) {
        if (!g->is_fluid(c)) continue;
        const auto cc = g->coords(c);
        const auto xc = g->cell_center(c);
        const Matrix Alo = cell_A(c);

        for (int a = 0; a < n; ++a) {
            const double area = g->face_area(a);
            const double delta = 0.5 * g->spacing(a);
            auto nb = cc;
            nb[a] += 1;
            bool wrap = false;
            if (nb[a] >= g->cells(a)) {
                if (a == vert) continue;  // homogeneous Neumann at +Y
                nb[a] = 0;
                wrap = true;
            }
            const std::size_t cn = g->index(nb);
            std::array<double, kMaxDim> xf = xc;
            xf[a] = wrap ? g->face_coord(a, g->cells(a)) : g->face_coord(a, cc[a] + 1);

            if (a == vert && crack_face_below[c]) {
                // double-sided internal boundary: one Neumann face per side
                DataFace below{dof[c], static_cast<std::int8_t>(a), +1, area, xf};
                DataFace above{dof[cn], static_cast<std::int8_t>(a), -1, area, xf};
                data_faces.push_back(below);
                data_faces.push_back(above);
                continue;
            }
            if (!g->is_fluid(cn)) {
                data_faces.push_back({dof[c], static_cast<std::int8_t>(a), +1, area, xf});
                continue;
            }
            const Matrix Ahi = cell_A(cn);
            const double alo = Alo[a][a] / delta;
            const double ahi = Ahi[a][a] / delta;
            Face f;
            f.lo = dof[c];
            f.hi = dof[cn];
            f.axis = static_cast<std::int8_t>(a);
            f.trans = area / (1.0 / alo + 1.0 / ahi);
            f.area = area;
            f.layer = (a == vert) ? cc[a] + 1 : 0;
            faces.push_back(f);
        }
        // low-side data faces: obstacle below, or strip bottom (Neumann-0)
        for (int a = 0; a < n; ++a) {
            auto nb = cc;
            nb[a] -= 1;
            if (nb[a] < 0) {
                if (a == vert) continue;  // -Y boundary, Neumann-0
                continue;                 // periodic handled on the high side
            }
            const std::size_t cn = g->index(nb);
            if (!g->is_fluid(cn)) {
                std::array<double, kMaxDim> xf = xc;
                xf[a] = g->face_coord(a, cc[a]);
                data_faces.push_back({dof[c], static_cast<std::int8_t>(a), -1, g->face_area(a), xf});
            }
        }
    }

    using T = Eigen::Triplet<double>;
    std::vector<T> trip;
    trip.reserve(faces.size() * 4 + cells.size());
    for (const auto& f : faces) {
        if (f.lo == f.hi) continue;
        trip.emplace_back(f.lo, f.lo, f.trans);
        trip.emplace_back(f.hi, f.hi, f.trans);
        trip.emplace_back(f.lo, f.hi, -f.trans);
        trip.emplace_back(f.hi, f.lo, -f.trans);
    }
    // symmetric pin of the constant nullspace
    double diag_scale = 0.0;
    for (const auto& f : faces) diag_scale = std::max(diag_scale, f.trans);
    trip.emplace_back(0, 0, diag_scale > 0.0 ? diag_scale : 1.0);

    mat.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(cells.size()));
    mat.setFromTriplets(trip.begin(), trip.end());
    mat.makeCompressed();

    cg.setTolerance(tol);
    cg.setMaxIterations(max_iter);
    cg.compute(mat);
    if (cg.info() != Eigen::Success)
        throw std::runtime_error("cell: preconditioner setup failed");
}

Eigen::VectorXd StripSystem::solve(Eigen::VectorXd rhs, double* compat) const {
    const double total = rhs.sum();
    const double scale = rhs.cwiseAbs().sum();
    if (compat) *compat = scale > 0.0 ? std::abs(total) / scale : 0.0;
    rhs.array() -= total / static_cast<double>(rhs.size());

    Eigen::VectorXd x = cg.solve(rhs);
    if (cg.info() == Eigen::NumericalIssue)
        throw std::runtime_error("cell: linear solver breakdown");
    for (int round = 0; round < 2; ++round) {
        Eigen::VectorXd r = rhs - mat * x;
        if (r.norm() <= 1e-15 * std::max(rhs.norm(), 1e-300)) break;
        Eigen::VectorXd dx = cg.solve(r);
        Eigen::VectorXd x2 = x + dx;
        if ((rhs - mat * x2).norm() < r.norm()) x = x2;
        else break;
    }
    return x;
}

double StripSystem::cell_gradient(const Eigen::VectorXd& u, std::size_t cell, int axis) const {
    const auto cc = g->coords(cell);
    const bool periodic = axis != vert;
    auto sample = [&](int shift, bool& ok) -> double {
        auto nb = cc;
        nb[axis] += shift;
        if (nb[axis] < 0 || nb[axis] >= g->cells(axis)) {
            if (!periodic) { ok = false; return 0.0; }
            nb[axis] = (nb[axis] + g->cells(axis)) % g->cells(axis);
        }
        // do not difference across the crack
        if (axis == vert) {
            if (shift > 0 && crack_face_below[cell]) { ok = false; return 0.0; }
            const std::size_t below = g->index(nb);
            if (shift < 0 && crack_face_below[below]) { ok = false; return 0.0; }
        }
        const std::size_t c = g->index(nb);
        if (!g->is_fluid(c)) { ok = false; return 0.0; }
        ok = true;
        return u[dof[c]];
    };
    bool okm = false, okp = false;
    const double vm = sample(-1, okm);
    const double vp = sample(+1, okp);
    const double v0 = u[dof[cell]];
    const double h = g->spacing(axis);
    if (okm && okp) return (vp - vm) / (2.0 * h);
    if (okp) return (vp - v0) / h;
    if (okm) return (v0 - vm) / h;
    return 0.0;
}

// Neumann datum on an outward face for a given problem kind.
double neumann_datum(const StripSystem& sys, const StripSystem::DataFace& f,
                     CellProblemKind kind, int k) {
    switch (kind) {
        case CellProblemKind::chi_k: {
            // n . A grad(chi + y_k) = 0  =>  n . A grad chi = -(A e_k) . n
            const std::size_t cell = sys.cells[static_cast<std::size_t>(f.dof)];
            const Matrix Af = sys.cell_A(cell);
            return -Af[f.axis][k] * static_cast<double>(f.out_dir);
        }
        case CellProblemKind::w:
            return 1.0;
        default:
            return 0.0;
    }
}

// Face-mean of a cell array with one-sided fallback at boundaries, masked
// cells and the crack.
double face_mean(const StripSystem& sys, const std::vector<double>& vals, std::size_t cell,
                 int axis, int dir) {
    const auto& g = *sys.g;
    const auto cc = g.coords(cell);
    auto nb = cc;
    nb[axis] += dir;
    const bool periodic = axis != sys.vert;
    if (nb[axis] < 0 || nb[axis] >= g.cells(axis)) {
        if (!periodic) return vals[cell];
        nb[axis] = (nb[axis] + g.cells(axis)) % g.cells(axis);
    }
    if (axis == sys.vert) {
        if (dir > 0 && sys.crack_face_below[cell]) return vals[cell];
        const std::size_t below = g.index(nb);
        if (dir < 0 && sys.crack_face_below[below]) return vals[cell];
    }
    const std::size_t cn = g.index(nb);
    if (!g.is_fluid(cn)) return vals[cell];
    return 0.5 * (vals[cell] + vals[cn]);
}

struct SolveOutput {
    Eigen::VectorXd u;
    double compat = 0.0;
};

// One deferred-correction elliptic solve. `base_rhs` holds body + Neumann
// contributions; cross-diffusion terms are appended from the iterate.
SolveOutput elliptic_solve(const StripSystem& sys, const Eigen::VectorXd& base_rhs) {
    SolveOutput out;
    if (!sys.cross) {
        out.u = sys.solve(base_rhs, &out.compat);
        return out;
    }
    Eigen::VectorXd iterate = Eigen::VectorXd::Zero(base_rhs.size());
    for (int it = 0; it < 60; ++it) {
        Eigen::VectorXd rhs = base_rhs;
        for (const auto& f : sys.faces) {
            const int a = f.axis;
            const std::size_t clo = sys.cells[static_cast<std::size_t>(f.lo)];
            const std::size_t chi = sys.cells[static_cast<std::size_t>(f.hi)];
            const Matrix Alo = sys.cell_A(clo);
            const Matrix Ahi = sys.cell_A(chi);
            double flux = 0.0;
            for (int b = 0; b < sys.n; ++b) {
                if (b == a) continue;
                const double ab = 0.5 * (Alo[a][b] + Ahi[a][b]);
                if (ab == 0.0) continue;
                const double gb = 0.5 * (sys.cell_gradient(iterate, clo, b) +
                                         sys.cell_gradient(iterate, chi, b));
                flux -= f.area * ab * gb;
            }
            if (flux != 0.0) {
                rhs[f.lo] -= flux;
                rhs[f.hi] += flux;
            }
        }
        out.u = sys.solve(rhs, &out.compat);
        const double diff = (out.u - iterate).lpNorm<Eigen::Infinity>();
        const double scale = std::max(1e-300, out.u.lpNorm<Eigen::Infinity>());
        iterate = out.u;
        if (diff <= 1e-12 * scale + 1e-15) return out;
    }
    throw std::runtime_error("cell: cross-term iteration stagnation");
}

// Slab means over { Y-1 < +-y_n < Y }.
void slab_means(const StripSystem& sys, const Eigen::VectorXd& u, double& c_plus, double& c_minus) {
    const auto& g = *sys.g;
    const double Y = -g.origin(sys.vert);
    double sp = 0.0, sm = 0.0;
    std::size_t np = 0, nm = 0;
    for (std::size_t d = 0; d < sys.cells.size(); ++d) {
        const double y = g.cell_center(sys.cells[d])[sys.vert];
        if (y > Y - 1.0) { sp += u[static_cast<Eigen::Index>(d)]; ++np; }
        if (y < -(Y - 1.0)) { sm += u[static_cast<Eigen::Index>(d)]; ++nm; }
    }
    c_plus = np ? sp / np : 0.0;
    c_minus = nm ? sm / nm : 0.0;
}

// Diffusive flux of the remainder through the horizontal plane at face layer j.
double plane_flux(const StripSystem& sys, const Eigen::VectorXd& u, int layer) {
    double total = 0.0;
    for (const auto& f : sys.faces) {
        if (f.axis != sys.vert || f.layer != layer) continue;
        total += f.trans * (u[f.hi] - u[f.lo]);
    }
    return total;
}

struct FluxFit {
    double limit = 0.0;  // extrapolated flux
};

// Fit measured flux(y) = F_inf + B exp(-tau (y - y0)) over the window rows.
FluxFit extrapolate_flux(const std::vector<double>& ys, const std::vector<double>& fs, double tau) {
    FluxFit out;
    if (ys.empty()) return out;
    if (!(tau > 0.0) || ys.size() < 2) {
        out.limit = fs.back();
        return out;
    }
    const double y0 = ys.front();
    double s1 = 0, se = 0, see = 0, sf = 0, sef = 0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const double e = std::exp(-tau * (ys[i] - y0));
        s1 += 1.0;
        se += e;
        see += e * e;
        sf += fs[i];
        sef += e * fs[i];
    }
    const double det = s1 * see - se * se;
    if (std::abs(det) < 1e-30) {
        out.limit = fs.back();
        return out;
    }
    out.limit = (see * sf - se * sef) / det;
    return out;
}

CellSolution finish(const StripSystem& sys, Eigen::VectorXd u, const StripDomain& strip,
                    const LayeredTensor& A, CellProblemKind kind, int k, int l, double compat,
                    const CellProblemOptions& opts) {
    CellSolution sol;
    sol.strip = strip;
    sol.tensor = A;
    sol.kind = kind;
    sol.k = k;
    sol.l = l;
    sol.compat_projection = compat;

    const int vert = sys.vert;

    AlveolusArray arr;
    arr.n = strip.n;
    arr.m = strip.m;
    arr.eps = strip.eps;
    arr.beta = strip.beta;
    double dP = 0.0;
    bool have_obstacle = strip.has_obstacle();
    if (have_obstacle) {
        dP = strip.mode == StripMode::scaled ? hole_boundary_measure(arr) : flat_boundary_measure(arr);
    }
    const double Ann2 = A.A2[vert][vert];

    if (kind == CellProblemKind::w) {
        sol.profile_linear = true;
        sol.profile_Ann2 = Ann2;
        sol.profile_dP = dP;
    } else if (kind == CellProblemKind::z_k && k == vert) {
        sol.profile_quadratic = true;
        sol.profile_Ann2 = Ann2;
        sol.profile_dP = dP;
    }

    // normalization: zero mean over the two far slabs
    double cp = 0.0, cm = 0.0;
    slab_means(sys, u, cp, cm);
    sol.side_asymmetry = cp - cm;
    const double shift = 0.5 * (cp + cm);
    u.array() -= shift;
    slab_means(sys, u, sol.c_plus, sol.c_minus);

    sol.values.assign(strip.grid.num_cells(), 0.0);
    for (std::size_t d = 0; d < sys.cells.size(); ++d)
        sol.values[sys.cells[d]] = u[static_cast<Eigen::Index>(d)];

    sol.decay = fit_decay(sol, opts.fit_window_lo, strip.Y - 0.5);

    // far-field flux of the full field through planes in the fit window
    const auto& g = strip.grid;
    std::vector<double> ys_t, fs_t, ys_b, fs_b;
    const int rows = g.cells(vert);
    for (int layer = 1; layer < rows; ++layer) {
        const double y = g.face_coord(vert, layer);
        if (std::abs(y) < opts.fit_window_lo || std::abs(y) > strip.Y - 0.5) continue;
        double G = 0.0;
        if (sol.profile_linear)
            G = A.at_fast(y)[vert][vert] * profile_pi_prime(y, Ann2, dP);
        else if (sol.profile_quadratic)
            G = A.at_fast(y)[vert][vert] * profile_rho_prime(y, Ann2, dP);
        const double f = plane_flux(sys, u, layer) + G;
        if (y > 0) { ys_t.push_back(y); fs_t.push_back(f); }
        else { ys_b.push_back(-y); fs_b.push_back(f); }
    }
    sol.farfield_flux_top = extrapolate_flux(ys_t, fs_t, sol.decay.tau_hat).limit;
    std::reverse(ys_b.begin(), ys_b.end());
    std::reverse(fs_b.begin(), fs_b.end());
    sol.farfield_flux_bottom = extrapolate_flux(ys_b, fs_b, sol.decay.tau_hat).limit;
    return sol;
}

Eigen::VectorXd base_rhs_for(const StripSystem& sys, CellProblemKind kind, int k, int l,
                             const CellSolution* dep) {
    (void)l;
    const auto& g = *sys.g;
    const int vert = sys.vert;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.cells.size()));

    // Neumann data on obstacle/crack faces
    for (const auto& f : sys.data_faces) {
        const double gdat = neumann_datum(sys, f, kind, k);
        if (gdat != 0.0) rhs[f.dof] += gdat * f.area;
    }

    AlveolusArray arr;
    arr.n = sys.sd->n;
    arr.m = sys.sd->m;
    arr.eps = sys.sd->eps;
    arr.beta = sys.sd->beta;
    const double dP = sys.sd->mode == StripMode::scaled ? hole_boundary_measure(arr)
                                                        : flat_boundary_measure(arr);
    const double Ann2 = sys.A->A2[vert][vert];
    const double area_v = g.face_area(vert);

    if (kind == CellProblemKind::w && sys.sd->has_obstacle()) {
        // body source (A_nn pi')' in conservative face-difference form
        for (std::size_t d = 0; d < sys.cells.size(); ++d) {
            const auto cc = g.coords(sys.cells[d]);
            const double ylo = g.face_coord(vert, cc[vert]);
            const double yhi = g.face_coord(vert, cc[vert] + 1);
            const double Glo = sys.A->at_fast(ylo)[vert][vert] * profile_pi_prime(ylo, Ann2, dP);
            const double Ghi = sys.A->at_fast(yhi)[vert][vert] * profile_pi_prime(yhi, Ann2, dP);
            rhs[static_cast<Eigen::Index>(d)] += (Ghi - Glo) * area_v;
        }
    }

    if (kind == CellProblemKind::chi_lm) {
        // A_{lk} d_k chi^m + d_k (A_{kl} chi^m); here k holds l, l holds m,
        // dep holds chi^m
        const int ell = k;
        std::vector<double> Achi(g.num_cells(), 0.0);
        Eigen::VectorXd chom(static_cast<Eigen::Index>(sys.cells.size()));
        for (std::size_t d = 0; d < sys.cells.size(); ++d)
            chom[static_cast<Eigen::Index>(d)] = dep->values[sys.cells[d]];
        const double V = g.cell_volume();
        for (std::size_t d = 0; d < sys.cells.size(); ++d) {
            const std::size_t c = sys.cells[d];
            const Matrix Ac = sys.cell_A(c);
            double f1 = 0.0;
            for (int kk = 0; kk < sys.n; ++kk)
                if (Ac[ell][kk] != 0.0) f1 += Ac[ell][kk] * sys.cell_gradient(chom, c, kk);
            rhs[static_cast<Eigen::Index>(d)] += f1 * V;
        }
        for (int kk = 0; kk < sys.n; ++kk) {
            for (std::size_t c = 0; c < g.num_cells(); ++c)
                Achi[c] = g.is_fluid(c) ? sys.cell_A(c)[kk][ell] * dep->values[c] : 0.0;
            const double area_k = g.face_area(kk);
            for (std::size_t d = 0; d < sys.cells.size(); ++d) {
                const std::size_t c = sys.cells[d];
                const double hi = face_mean(sys, Achi, c, kk, +1);
                const double lo = face_mean(sys, Achi, c, kk, -1);
                rhs[static_cast<Eigen::Index>(d)] += (hi - lo) * area_k;
            }
        }
    }

    if (kind == CellProblemKind::w_ij) {
        // d chi^j / d y_i in face-difference form; dep holds chi^j
        std::vector<double> cv(g.num_cells(), 0.0);
        for (std::size_t c = 0; c < g.num_cells(); ++c)
            cv[c] = g.is_fluid(c) ? dep->values[c] : 0.0;
        const double area_k = g.face_area(k);
        for (std::size_t d = 0; d < sys.cells.size(); ++d) {
            const std::size_t c = sys.cells[d];
            const double hi = face_mean(sys, cv, c, k, +1);
            const double lo = face_mean(sys, cv, c, k, -1);
            rhs[static_cast<Eigen::Index>(d)] += (hi - lo) * area_k;
        }
    }

    if (kind == CellProblemKind::z_k) {
        // -d w / d y_k in face-difference form; dep holds w (remainder + pi)
        std::vector<double> wv(g.num_cells(), 0.0);
        for (std::size_t c = 0; c < g.num_cells(); ++c) {
            if (!g.is_fluid(c)) continue;
            wv[c] = dep->values[c] + dep->profile(g.cell_center(c)[vert]);
        }
        const double area_k = g.face_area(k);
        for (std::size_t d = 0; d < sys.cells.size(); ++d) {
            const std::size_t c = sys.cells[d];
            const double hi = face_mean(sys, wv, c, k, +1);
            const double lo = face_mean(sys, wv, c, k, -1);
            rhs[static_cast<Eigen::Index>(d)] -= (hi - lo) * area_k;
        }
        if (k == vert && sys.sd->has_obstacle()) {
            for (std::size_t d = 0; d < sys.cells.size(); ++d) {
                const auto cc = g.coords(sys.cells[d]);
                const double ylo = g.face_coord(vert, cc[vert]);
                const double yhi = g.face_coord(vert, cc[vert] + 1);
                const double Glo = sys.A->at_fast(ylo)[vert][vert] * profile_rho_prime(ylo, Ann2, dP);
                const double Ghi = sys.A->at_fast(yhi)[vert][vert] * profile_rho_prime(yhi, Ann2, dP);
                rhs[static_cast<Eigen::Index>(d)] += (Ghi - Glo) * area_v;
            }
        }
    }
    return rhs;
}

StripDomain rebuild_strip(const StripDomain& strip, int newY) {
    StripResolution res;
    res.cells_per_unit_lateral = strip.cells_per_unit_lateral;
    res.cells_per_obstacle_half = strip.cells_per_obstacle_half;
    res.cells_per_unit_vertical = strip.cells_per_unit_vertical;
    return build_strip(strip.n, strip.mode, strip.m, strip.eps, strip.beta, newY, res);
}

CellSolution solve_kind(const StripDomain& strip_in, const LayeredTensor& A, CellProblemKind kind,
                        int k, int l, const CellProblemOptions& opts,
                        const CellSolution* dep_in) {
    A.validate();
    StripDomain strip = strip_in;

    auto solve_once = [&](const StripDomain& sd, const CellSolution* dep) {
        StripSystem sys;
        sys.build(sd, A, opts.linear_tol, opts.max_iter);
        Eigen::VectorXd rhs = base_rhs_for(sys, kind, k, l, dep);
        auto out = elliptic_solve(sys, rhs);
        return finish(sys, std::move(out.u), sd, A, kind, k, l, out.compat, opts);
    };

    CellSolution sol = solve_once(strip, dep_in);
    if (!opts.auto_truncate) return sol;

    while (2 * strip.Y <= opts.max_Y) {
        StripDomain strip2 = rebuild_strip(strip, 2 * strip.Y);
        const CellSolution* dep2 = dep_in;
        CellSolution dep_storage;
        if (dep_in) {
            // re-solve the dependency on the finer strip
            dep_storage = solve_kind(strip2, A, dep_in->kind, dep_in->k, dep_in->l, opts, nullptr);
            dep2 = &dep_storage;
        }
        CellSolution sol2 = solve_once(strip2, dep2);
        const double scale = std::max({std::abs(sol.c_plus), std::abs(sol.c_minus),
                                       std::abs(sol.farfield_flux_top),
                                       std::abs(sol.farfield_flux_bottom), 1e-12});
        const double bound =
            std::max(10.0 * sol.decay.C * std::exp(-sol.decay.tau_hat * strip.Y), 1e-9 * scale);
        const bool stable = std::abs(sol2.c_plus - sol.c_plus) <= bound &&
                            std::abs(sol2.c_minus - sol.c_minus) <= bound &&
                            std::abs(sol2.farfield_flux_top - sol.farfield_flux_top) <= bound &&
                            std::abs(sol2.farfield_flux_bottom - sol.farfield_flux_bottom) <= bound;
        if (stable) return sol2;
        strip = strip2;
        sol = std::move(sol2);
    }
    throw std::runtime_error("cell: truncation height did not stabilize (increase Y)");
}

} // namespace

CellSolution solve_chi_k(const StripDomain& strip, const LayeredTensor& A, int k,
                         const CellProblemOptions& opts) {
    if (k < 0 || k >= strip.n) throw std::invalid_argument("solve_chi_k: bad index");
    return solve_kind(strip, A, CellProblemKind::chi_k, k, -1, opts, nullptr);
}

CellSolution solve_w(const StripDomain& strip, const LayeredTensor& A,
                     const CellProblemOptions& opts) {
    return solve_kind(strip, A, CellProblemKind::w, -1, -1, opts, nullptr);
}

CellSolution solve_chi_lm(const StripDomain& strip, const LayeredTensor& A, int l, int m,
                          const CellProblemOptions& opts) {
    if (l < 0 || l >= strip.n || m < 0 || m >= strip.n)
        throw std::invalid_argument("solve_chi_lm: bad indices");
    CellProblemOptions dep_opts = opts;
    dep_opts.auto_truncate = false;
    CellSolution chi_m = solve_chi_k(strip, A, m, dep_opts);
    return solve_kind(strip, A, CellProblemKind::chi_lm, l, m, opts, &chi_m);
}

CellSolution solve_w_ij(const StripDomain& strip, const LayeredTensor& A, int i, int j,
                        const CellProblemOptions& opts) {
    if (i < 0 || i >= strip.n || j < 0 || j >= strip.n)
        throw std::invalid_argument("solve_w_ij: bad indices");
    CellProblemOptions dep_opts = opts;
    dep_opts.auto_truncate = false;
    CellSolution chi_j = solve_chi_k(strip, A, j, dep_opts);
    return solve_kind(strip, A, CellProblemKind::w_ij, i, j, opts, &chi_j);
}

CellSolution solve_z_k(const StripDomain& strip, const LayeredTensor& A, int k,
                       const CellProblemOptions& opts) {
    if (k < 0 || k >= strip.n) throw std::invalid_argument("solve_z_k: bad index");
    CellProblemOptions dep_opts = opts;
    dep_opts.auto_truncate = false;
    CellSolution w = solve_w(strip, A, dep_opts);
    return solve_kind(strip, A, CellProblemKind::z_k, k, -1, opts, &w);
}

DecayFit fit_decay(const CellSolution& sol, double s0, double s1) {
    DecayFit fit;
    const auto& g = sol.strip.grid;
    const int vert = g.dim() - 1;
    const double hy = g.spacing(vert);
    const int rows = g.cells(vert);

    double vmax = 0.0;
    for (double v : sol.values) vmax = std::max(vmax, std::abs(v));
    if (vmax < 1e-13) {
        fit.tau_hat = 50.0;  // identically-zero remainder: trivially decayed
        fit.C = 0.0;
        fit.ok = true;
        return fit;
    }

    // per-row energies (values relative to the side constant + face gradients)
    std::vector<double> row_energy(rows, 0.0);
    const double V = g.cell_volume();
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        if (!g.is_fluid(c)) continue;
        const auto cc = g.coords(c);
        const double y = g.center(vert, cc[vert]);
        const double cside = y > 0 ? sol.c_plus : sol.c_minus;
        const double u = sol.values[c] - cside;
        row_energy[cc[vert]] += V * u * u;
        for (int a = 0; a < g.dim(); ++a) {
            auto nb = cc;
            nb[a] += 1;
            if (nb[a] >= g.cells(a)) {
                if (a == vert) continue;
                nb[a] = 0;
            }
            const std::size_t cn = g.index(nb);
            if (!g.is_fluid(cn)) continue;
            const double du = sol.values[cn] - sol.values[c];
            row_energy[cc[vert]] += g.face_area(a) / g.spacing(a) * du * du;
        }
    }

    std::vector<double> ss, tt;
    const int half = rows / 2;
    for (int j = 0; j <= half; ++j) {
        const double s = j * hy;
        if (s < s0 || s > s1) continue;
        double tail = 0.0;
        for (int r = 0; r < rows; ++r) {
            const double y = g.center(vert, r);
            if (std::abs(y) > s) tail += row_energy[r];
        }
        if (tail <= 0.0) break;
        ss.push_back(s);
        tt.push_back(std::sqrt(tail));
    }
    if (ss.size() < 3) return fit;

    for (std::size_t i = 1; i < tt.size(); ++i)
        if (tt[i] > tt[i - 1] * 1.1) fit.monotone = false;

    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const auto nn = static_cast<double>(ss.size());
    for (std::size_t i = 0; i < ss.size(); ++i) {
        const double yv = std::log(tt[i]);
        sx += ss[i];
        sy += yv;
        sxx += ss[i] * ss[i];
        sxy += ss[i] * yv;
        syy += yv * yv;
    }
    const double det = nn * sxx - sx * sx;
    if (std::abs(det) < 1e-30) return fit;
    const double slope = (nn * sxy - sx * sy) / det;
    const double inter = (sy - slope * sx) / nn;
    fit.tau_hat = -slope;
    fit.C = std::exp(inter);
    const double sst = syy - sy * sy / nn;
    const double ssr = sst - slope * (sxy - sx * sy / nn);
    fit.r2 = sst > 1e-30 ? 1.0 - ssr / sst : 1.0;
    fit.ok = fit.tau_hat > 0.0 && fit.monotone && fit.r2 >= 0.98;
    return fit;
}

double CellSolution::sample(const std::array<double, kMaxDim>& y) const {
    const auto& g = strip.grid;
    const int n = g.dim();
    const int vert = n - 1;

    std::array<double, kMaxDim> yy = y;
    for (int a = 0; a < vert; ++a) yy[a] = yy[a] - std::round(yy[a]);  // wrap to [-1/2,1/2]
    yy[vert] = std::clamp(yy[vert], g.origin(vert) + 0.5 * g.spacing(vert),
                          -g.origin(vert) - 0.5 * g.spacing(vert));

    // multilinear interpolation with masked corners dropped
    std::array<int, kMaxDim> base{0, 0, 0};
    std::array<double, kMaxDim> frac{0.0, 0.0, 0.0};
    for (int a = 0; a < n; ++a) {
        const double t = (yy[a] - g.origin(a)) / g.spacing(a) - 0.5;
        double fl = std::floor(t);
        base[a] = static_cast<int>(fl);
        frac[a] = t - fl;
    }
    double wsum = 0.0, acc = 0.0;
    const int corners = 1 << n;
    for (int cidx = 0; cidx < corners; ++cidx) {
        std::array<int, kMaxDim> cc{0, 0, 0};
        double w = 1.0;
        bool ok = true;
        for (int a = 0; a < n; ++a) {
            const int bit = (cidx >> a) & 1;
            int idx = base[a] + bit;
            w *= bit ? frac[a] : 1.0 - frac[a];
            if (a < vert) {
                idx = (idx % g.cells(a) + g.cells(a)) % g.cells(a);
            } else if (idx < 0 || idx >= g.cells(a)) {
                ok = false;
                break;
            }
            cc[a] = idx;
        }
        if (!ok || w == 0.0) continue;
        const std::size_t cell = g.index(cc);
        if (!g.is_fluid(cell)) continue;
        wsum += w;
        acc += w * values[cell];
    }
    double rem;
    if (wsum > 1e-12) {
        rem = acc / wsum;
    } else {
        // deep inside the obstacle footprint: walk vertically to fluid
        std::array<int, kMaxDim> cc = base;
        for (int a = 0; a < n; ++a) cc[a] = std::clamp(cc[a], 0, g.cells(a) - 1);
        std::size_t cell = g.index(cc);
        int j = cc[vert];
        while (!g.is_fluid(cell) && j + 1 < g.cells(vert)) {
            cc[vert] = ++j;
            cell = g.index(cc);
        }
        rem = g.is_fluid(cell) ? values[cell] : 0.0;
    }
    return rem + profile(yy[vert]);
}

double reflection_even_error(const CellSolution& sol) {
    const auto& g = sol.strip.grid;
    const int n = g.dim();
    double worst = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        if (!g.is_fluid(c)) continue;
        auto cc = g.coords(c);
        for (int a = 0; a < n; ++a) cc[a] = g.cells(a) - 1 - cc[a];
        const std::size_t cr = g.index(cc);
        if (!g.is_fluid(cr)) continue;
        worst = std::max(worst, std::abs(sol.values[c] - sol.values[cr]));
    }
    return worst;
}

double reflection_odd_error(const CellSolution& sol) {
    const auto& g = sol.strip.grid;
    const int n = g.dim();
    double worst = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        if (!g.is_fluid(c)) continue;
        auto cc = g.coords(c);
        for (int a = 0; a < n; ++a) cc[a] = g.cells(a) - 1 - cc[a];
        const std::size_t cr = g.index(cc);
        if (!g.is_fluid(cr)) continue;
        worst = std::max(worst, std::abs(sol.values[c] + sol.values[cr]));
    }
    return worst;
}

double remainder_max(const CellSolution& sol) {
    double m = 0.0;
    const auto& g = sol.strip.grid;
    for (std::size_t c = 0; c < g.num_cells(); ++c)
        if (g.is_fluid(c)) m = std::max(m, std::abs(sol.values[c]));
    return m;
}

double gradient_l2(const CellSolution& sol) {
    const auto& g = sol.strip.grid;
    const int n = g.dim();
    const int vert = n - 1;
    std::vector<std::uint8_t> crack(g.num_cells(), 0);
    for (auto c : sol.strip.crack_cells_below) crack[c] = 1;
    double acc = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        if (!g.is_fluid(c)) continue;
        const auto cc = g.coords(c);
        for (int a = 0; a < n; ++a) {
            auto nb = cc;
            nb[a] += 1;
            if (nb[a] >= g.cells(a)) {
                if (a == vert) continue;
                nb[a] = 0;
            }
            if (a == vert && crack[c]) continue;
            const std::size_t cn = g.index(nb);
            if (!g.is_fluid(cn)) continue;
            const double du = sol.values[cn] - sol.values[c];
            acc += g.face_area(a) / g.spacing(a) * du * du;
        }
    }
    return std::sqrt(acc);
}

double gradient_distance(const CellSolution& scaled, const CellSolution& flat) {
    const auto& gs = scaled.strip.grid;
    const auto& gf = flat.strip.grid;
    const int n = gs.dim();
    const int vert = n - 1;
    for (int a = 0; a < n; ++a)
        if (gs.cells(a) != gf.cells(a) || gs.spacing(a) != gf.spacing(a))
            throw std::invalid_argument("gradient_distance: grids differ");

    std::vector<std::uint8_t> crack(gf.num_cells(), 0);
    for (auto c : flat.strip.crack_cells_below) crack[c] = 1;

    auto full = [&](const CellSolution& s, std::size_t c) {
        return s.values[c] + s.profile(gs.cell_center(c)[vert]);
    };

    double acc = 0.0;
    for (std::size_t c = 0; c < gs.num_cells(); ++c) {
        if (!gs.is_fluid(c)) continue;
        const auto cc = gs.coords(c);
        for (int a = 0; a < n; ++a) {
            auto nb = cc;
            nb[a] += 1;
            if (nb[a] >= gs.cells(a)) {
                if (a == vert) continue;
                nb[a] = 0;
            }
            if (a == vert && crack[c]) continue;  // flat field kinks across the crack
            const std::size_t cn = gs.index(nb);
            if (!gs.is_fluid(cn)) continue;
            const double ds = full(scaled, cn) - full(scaled, c);
            const double df = full(flat, cn) - full(flat, c);
            const double d = ds - df;
            acc += gs.face_area(a) / gs.spacing(a) * d * d;
        }
    }
    return std::sqrt(acc);
}

double obstacle_flux_total(const StripDomain& strip, const LayeredTensor& A,
                           CellProblemKind kind, int k) {
    StripSystem sys;
    sys.build(strip, A, 1e-12, 10);
    double total = 0.0;
    for (const auto& f : sys.data_faces) total += neumann_datum(sys, f, kind, k) * f.area;
    return total;
}

} // namespace ptrans
