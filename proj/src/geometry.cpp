#include "ptrans/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ptrans {

namespace {

bool nearly_integer(double x, double tol = 1e-9) {
    return std::abs(x - std::round(x)) <= tol * std::max(1.0, std::abs(x));
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

} // namespace

void BoxDomain::validate() const {
    if (n != 2 && n != 3) fail("box: dimension must be 2 or 3");
    if (L <= 0.0) fail("box: L must be positive");
    if (sigma_height != 0.0) fail("box: Sigma is fixed at height 0");
}

void AlveolusArray::validate(const BoxDomain& box) const {
    if (n != box.n) fail("alveolus array: dimension mismatch with box");
    for (int i = 0; i < n - 1; ++i) {
        if (!(m[i] > 0.0 && m[i] < 0.5)) fail("alveolus array: require 0 < m_i < 1/2");
    }
    if (!(eps > 0.0)) fail("alveolus array: eps must be positive");
    if (!(beta > 1.0)) fail("alveolus array: beta must exceed 1");
    if (!nearly_integer(box.L / eps)) {
        std::ostringstream os;
        os << "alveolus array: L/eps = " << box.L / eps << " is not an integer";
        fail(os.str());
    }
}

double obstacle_measure(const AlveolusArray& array) {
    double v = 1.0;
    for (int i = 0; i < array.n - 1; ++i) v *= 2.0 * array.m[i];
    return v;
}

double hole_boundary_measure(const AlveolusArray& array) {
    const double M = obstacle_measure(array);
    // perimeter of the (n-1)-box M: sum over axes of 2 * prod_{j != i} 2 m_j
    double per = 0.0;
    for (int i = 0; i < array.n - 1; ++i) {
        double side = 2.0;
        for (int j = 0; j < array.n - 1; ++j)
            if (j != i) side *= 2.0 * array.m[j];
        per += side;
    }
    const double half_h = std::pow(array.eps, array.beta - 1.0);
    return 2.0 * M + 2.0 * half_h * per;
}

double flat_boundary_measure(const AlveolusArray& array) {
    return 2.0 * obstacle_measure(array);
}

PerforatedGrid build_perforated_grid(const BoxDomain& box, const AlveolusArray& array,
                                     const GridResolution& res) {
    box.validate();
    array.validate(box);

    const int n = box.n;
    const double eps = array.eps;
    const double hole_h = array.hole_half_height();

    if (res.cells_per_eps < 1) fail("perforated grid: cells_per_eps must be >= 1");
    if (res.cells_per_eps_beta < 2)
        fail("perforated grid: eps^beta must span at least 2 vertical cells");

    const int k = static_cast<int>(std::round(box.L / eps));

    // Lateral spacing h' = eps / r; hole side faces sit at eps*(alpha +- m_i),
    // which are faces iff m_i * r is an integer.
    const int r = res.cells_per_eps;
    for (int i = 0; i < n - 1; ++i) {
        if (!nearly_integer(array.m[i] * r)) {
            std::ostringstream os;
            os << "perforated grid: m[" << i << "] * cells_per_eps = " << array.m[i] * r
               << " is not an integer; hole boundaries would not align with faces";
            fail(os.str());
        }
    }

    // Vertical spacing h_n = eps^beta / s must tile the box height exactly.
    const int s = res.cells_per_eps_beta;
    const double hy = hole_h / s;
    const double half_rows = box.L / 2.0 / hy;
    if (!nearly_integer(half_rows))
        fail("perforated grid: eps^beta / cells_per_eps_beta does not tile L/2; "
             "choose a different vertical resolution");

    std::array<int, kMaxDim> cells{1, 1, 1};
    std::array<double, kMaxDim> spacing{1.0, 1.0, 1.0};
    std::array<double, kMaxDim> origin{0.0, 0.0, 0.0};
    for (int a = 0; a < n - 1; ++a) {
        cells[a] = k * r;
        spacing[a] = eps / r;
        origin[a] = -box.L / 2.0;
    }
    cells[n - 1] = 2 * static_cast<int>(std::round(half_rows));
    spacing[n - 1] = hy;
    origin[n - 1] = -box.L / 2.0;

    PerforatedGrid pg;
    pg.grid = StructuredGrid(n, cells, spacing, origin);
    pg.hole_id.assign(pg.grid.num_cells(), -1);

    int holes_per_axis = k;
    pg.hole_count = 1;
    for (int a = 0; a < n - 1; ++a) pg.hole_count *= holes_per_axis;

    // Mask cells whose centers fall inside a hole. With aligned faces the
    // center test is exact. Lateral positions live on the periodic lattice
    // eps*Z, so classify by distance to the nearest lattice point.
    const auto& g = pg.grid;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        const auto x = g.cell_center(c);
        if (std::abs(x[n - 1]) >= hole_h) continue;
        bool inside = true;
        int id = 0;
        for (int a = 0; a < n - 1 && inside; ++a) {
            const double t = x[a] / eps;
            double alpha = std::round(t);
            if (std::abs(t - alpha) >= array.m[a]) { inside = false; break; }
            int ia = static_cast<int>(alpha);
            // wrap the seam hole onto one representative
            int lo = -k / 2;
            int wrapped = ((ia - lo) % k + k) % k;
            id = id * holes_per_axis + wrapped;
        }
        if (inside) {
            pg.grid.set_kind(c, CellKind::hole);
            pg.hole_id[c] = id;
        }
    }

    pg.hole_volume = obstacle_measure(array) * std::pow(eps, n - 1) * 2.0 * hole_h * pg.hole_count;

    // Discrete hole boundary area: faces between fluid and hole cells.
    double area = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
        if (g.is_fluid(c)) continue;
        const auto cc = g.coords(c);
        for (int a = 0; a < n; ++a) {
            for (int dir = -1; dir <= 1; dir += 2) {
                auto nb = cc;
                nb[a] += dir;
                if (nb[a] < 0 || nb[a] >= g.cells(a)) {
                    nb[a] = (nb[a] + g.cells(a)) % g.cells(a);  // lateral axes are periodic
                }
                if (g.is_fluid(g.index(nb))) area += g.face_area(a);
            }
        }
    }
    pg.hole_boundary_area = area;
    return pg;
}

StructuredGrid build_box_grid(const BoxDomain& box, const AlveolusArray& array,
                              const GridResolution& res) {
    PerforatedGrid pg = build_perforated_grid(box, array, res);
    StructuredGrid g = pg.grid;
    for (std::size_t c = 0; c < g.num_cells(); ++c) g.set_kind(c, CellKind::fluid);
    return g;
}

RegionDecomposition decompose_regions(const BoxDomain& box, double eps, double d,
                                      double vertical_spacing) {
    box.validate();
    if (!(eps > 0.0 && eps < 1.0)) fail("regions: require 0 < eps < 1");
    if (!(d > 0.0)) fail("regions: require d > 0");

    RegionDecomposition rd;
    rd.d = d;
    rd.band_half_width = d * eps * std::log(1.0 / eps);
    rd.d_at_least_two = (d >= 2.0);

    if (rd.band_half_width >= box.L / 2.0) {
        std::ostringstream os;
        os << "regions: band half-width " << rd.band_half_width << " exceeds L/2 = "
           << box.L / 2.0;
        fail(os.str());
    }
    rd.near_degenerate = (rd.band_half_width > 0.9 * box.L / 2.0);

    const double hy = vertical_spacing;
    const int half_rows = static_cast<int>(std::round(box.L / 2.0 / hy));
    int j = static_cast<int>(std::round(rd.band_half_width / hy));
    j = std::max(1, std::min(j, half_rows - 1));
    rd.snapped_half_width = j * hy;
    rd.snap_distance = std::abs(rd.snapped_half_width - rd.band_half_width);
    rd.face_layer_plus = half_rows + j;   // face indices counted from the bottom
    rd.face_layer_minus = half_rows - j;
    return rd;
}

bool StripDomain::has_obstacle() const {
    if (mode == StripMode::scaled) return obstacle_half_height > 0.0;
    return !crack_cells_below.empty();
}

StripDomain build_strip(int n, StripMode mode, const std::array<double, kMaxDim - 1>& m,
                        double eps, double beta, int Y, const StripResolution& res) {
    if (n != 2 && n != 3) fail("strip: dimension must be 2 or 3");
    if (Y < 2) fail("strip: truncation Y must be at least 2");
    for (int i = 0; i < n - 1; ++i)
        if (!(m[i] >= 0.0 && m[i] < 0.5)) fail("strip: require 0 <= m_i < 1/2");

    StripDomain sd;
    sd.n = n;
    sd.mode = mode;
    sd.m = m;
    sd.eps = eps;
    sd.beta = beta;
    sd.Y = Y;
    sd.cells_per_unit_lateral = res.cells_per_unit_lateral;
    sd.cells_per_obstacle_half = res.cells_per_obstacle_half;
    sd.cells_per_unit_vertical = res.cells_per_unit_vertical;

    const int nl = res.cells_per_unit_lateral;
    for (int i = 0; i < n - 1; ++i) {
        if (m[i] > 0.0 && !nearly_integer(m[i] * nl))
            fail("strip: m_i * cells_per_unit_lateral must be an integer for face alignment");
    }

    double hy;
    if (mode == StripMode::scaled) {
        if (!(eps > 0.0)) fail("strip: scaled mode needs eps > 0");
        sd.obstacle_half_height = std::pow(eps, beta - 1.0);
        if (sd.obstacle_half_height >= 0.5)
            fail("strip: obstacle half-height eps^(beta-1) must be below 1/2 "
                 "(the cut-off region must clear the obstacle)");
        if (res.cells_per_obstacle_half < 1) fail("strip: cells_per_obstacle_half >= 1");
        hy = sd.obstacle_half_height / res.cells_per_obstacle_half;
        if (!nearly_integer(Y / hy))
            fail("strip: vertical spacing does not tile the truncation height");
    } else {
        sd.obstacle_half_height = 0.0;
        if (res.cells_per_unit_vertical < 2) fail("strip: cells_per_unit_vertical >= 2");
        hy = 1.0 / res.cells_per_unit_vertical;
    }

    std::array<int, kMaxDim> cells{1, 1, 1};
    std::array<double, kMaxDim> spacing{1.0, 1.0, 1.0};
    std::array<double, kMaxDim> origin{0.0, 0.0, 0.0};
    for (int a = 0; a < n - 1; ++a) {
        cells[a] = nl;
        spacing[a] = 1.0 / nl;
        origin[a] = -0.5;
    }
    cells[n - 1] = 2 * static_cast<int>(std::round(Y / hy));
    spacing[n - 1] = hy;
    origin[n - 1] = -static_cast<double>(Y);

    sd.grid = StructuredGrid(n, cells, spacing, origin);

    auto lateral_inside = [&](const std::array<double, kMaxDim>& x) {
        for (int a = 0; a < n - 1; ++a)
            if (std::abs(x[a]) >= m[a]) return false;
        return true;
    };

    if (mode == StripMode::scaled && sd.obstacle_half_height > 0.0) {
        for (std::size_t c = 0; c < sd.grid.num_cells(); ++c) {
            const auto x = sd.grid.cell_center(c);
            if (std::abs(x[n - 1]) < sd.obstacle_half_height && lateral_inside(x))
                sd.grid.set_kind(c, CellKind::hole);
        }
    } else if (mode == StripMode::flat) {
        // Cells immediately below the crack plane y_n = 0 within M.
        const int jbelow = cells[n - 1] / 2 - 1;
        for (std::size_t c = 0; c < sd.grid.num_cells(); ++c) {
            const auto cc = sd.grid.coords(c);
            if (cc[n - 1] != jbelow) continue;
            const auto x = sd.grid.cell_center(c);
            if (lateral_inside(x)) sd.crack_cells_below.push_back(c);
        }
    }
    return sd;
}

} // namespace ptrans
