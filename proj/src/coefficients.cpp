#include "ptrans/coefficients.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>

namespace ptrans {

Matrix identity_matrix(int n) {
    Matrix A{};
    for (int i = 0; i < n; ++i) A[i][i] = 1.0;
    return A;
}

Matrix scaled_identity(int n, double a) {
    Matrix A{};
    for (int i = 0; i < n; ++i) A[i][i] = a;
    return A;
}

bool is_symmetric_positive_definite(const Matrix& A, int n, double tol) {
    double scale = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(A[i][j]));
    if (scale == 0.0) return false;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (std::abs(A[i][j] - A[j][i]) > tol * scale) return false;
    Eigen::MatrixXd E(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) E(i, j) = A[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(E);
    return es.eigenvalues().minCoeff() > tol * scale;
}

void LayeredTensor::validate(double pd_tol) const {
    if (n != 2 && n != 3) throw std::invalid_argument("tensor: dimension must be 2 or 3");
    if (!(h > 0.0)) throw std::invalid_argument("tensor: layer half-height h must be positive");
    if (!is_symmetric_positive_definite(A1, n, pd_tol))
        throw std::invalid_argument("tensor: A1 is not symmetric positive definite");
    if (!is_symmetric_positive_definite(A2, n, pd_tol))
        throw std::invalid_argument("tensor: A2 is not symmetric positive definite");
}

bool LayeredTensor::has_cross_terms() const {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && (A1[i][j] != 0.0 || A2[i][j] != 0.0)) return true;
    return false;
}

const Matrix& eval_tensor(const LayeredTensor& field, double x_n, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("eval_tensor: eps must be positive");
    return field.at_fast(x_n / eps);
}

void LayeredScalar::validate() const {
    if (!(w1 > 0.0 && w2 > 0.0)) throw std::invalid_argument("porosity: w1, w2 must be positive");
    if (!(h > 0.0)) throw std::invalid_argument("porosity: h must be positive");
}

double decay_constant(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("decay_constant: tau must be positive");
    return std::log(2.0) / tau;
}

LayeredVelocity LayeredVelocity::make_zero(int n, double h) {
    LayeredVelocity v;
    v.n = n;
    v.h = h;
    v.zero = true;
    v.preset = "zero";
    auto fn = [](const std::array<double, kMaxDim>&, double) {
        return std::array<double, kMaxDim>{0.0, 0.0, 0.0};
    };
    v.v1 = fn;
    v.v2 = fn;
    return v;
}

LayeredVelocity LayeredVelocity::make_constant(int n, double h,
                                               const std::array<double, kMaxDim>& c) {
    LayeredVelocity v;
    v.n = n;
    v.h = h;
    v.zero = true;
    for (int a = 0; a < n; ++a) v.zero = v.zero && (c[a] == 0.0);
    v.preset = "constant";
    auto fn = [c](const std::array<double, kMaxDim>&, double) { return c; };
    v.v1 = fn;
    v.v2 = fn;
    return v;
}

LayeredVelocity LayeredVelocity::make_layered_horizontal(int n, double h,
                                                         const std::array<double, kMaxDim>& inner,
                                                         const std::array<double, kMaxDim>& outer) {
    if (inner[n - 1] != outer[n - 1])
        throw std::invalid_argument("velocity: vertical component must not depend on the layer");
    LayeredVelocity v;
    v.n = n;
    v.h = h;
    v.zero = false;
    v.preset = "layered_horizontal";
    v.v1 = [inner](const std::array<double, kMaxDim>&, double) { return inner; };
    v.v2 = [outer](const std::array<double, kMaxDim>&, double) { return outer; };
    return v;
}

LayeredVelocity LayeredVelocity::make_rotation(int n, double h) {
    LayeredVelocity v;
    v.n = n;
    v.h = h;
    v.zero = false;
    v.preset = "rotation";
    auto fn = [](const std::array<double, kMaxDim>& x, double) {
        return std::array<double, kMaxDim>{-x[1], x[0], 0.0};
    };
    v.v1 = fn;
    v.v2 = fn;
    return v;
}

LayeredVelocity LayeredVelocity::make_divergent(int n, double h) {
    LayeredVelocity v;
    v.n = n;
    v.h = h;
    v.zero = false;
    v.preset = "divergent";
    auto fn = [](const std::array<double, kMaxDim>& x, double) {
        return std::array<double, kMaxDim>{x[0], 0.0, 0.0};
    };
    v.v1 = fn;
    v.v2 = fn;
    return v;
}

double check_divergence_free(const LayeredVelocity& v, const StructuredGrid& grid,
                             double eps, double t) {
    const int n = grid.dim();
    double worst = 0.0;
    for (std::size_t c = 0; c < grid.num_cells(); ++c) {
        if (!grid.is_fluid(c)) continue;
        const auto cc = grid.coords(c);
        double div = 0.0;
        for (int a = 0; a < n; ++a) {
            for (int dir = 0; dir <= 1; ++dir) {
                std::array<double, kMaxDim> xf{0.0, 0.0, 0.0};
                for (int b = 0; b < n; ++b) xf[b] = grid.center(b, cc[b]);
                xf[a] = grid.face_coord(a, cc[a] + dir);
                auto vv = eps > 0.0 ? v.eval(xf, xf[n - 1] / eps, t) : v.eval_outer(xf, t);
                div += (dir == 1 ? 1.0 : -1.0) * vv[a] * grid.face_area(a);
            }
        }
        worst = std::max(worst, std::abs(div) / grid.cell_volume());
    }
    return worst;
}

SourceSchedule SourceSchedule::pulse(double amplitude, double t_m, double T, double tau) {
    SourceSchedule s;
    s.entries = {{0.0, t_m, amplitude}};
    s.t_m = t_m;
    s.T = T;
    s.tau = tau;
    s.lambda = decay_constant(tau);
    s.validate();
    return s;
}

SourceSchedule SourceSchedule::table(const std::vector<Entry>& entries, double T, double tau) {
    SourceSchedule s;
    s.entries = entries;
    s.t_m = 0.0;
    for (const auto& e : entries)
        if (e.value != 0.0) s.t_m = std::max(s.t_m, e.t1);
    s.T = T;
    s.tau = tau;
    s.lambda = decay_constant(tau);
    s.validate();
    return s;
}

SourceSchedule SourceSchedule::none(double T, double tau) {
    SourceSchedule s;
    s.t_m = 0.0;
    s.T = T;
    s.tau = tau;
    s.lambda = decay_constant(tau);
    return s;
}

void SourceSchedule::validate() const {
    if (!(T > 0.0)) throw std::invalid_argument("schedule: T must be positive");
    if (!(tau > 0.0)) throw std::invalid_argument("schedule: tau must be positive");
    double prev = 0.0;
    for (const auto& e : entries) {
        if (e.t1 <= e.t0) throw std::invalid_argument("schedule: entry with t1 <= t0");
        if (e.t0 < prev) throw std::invalid_argument("schedule: entries overlap or unsorted");
        if (e.t0 < 0.0) throw std::invalid_argument("schedule: negative start time");
        prev = e.t1;
    }
    if (t_m >= T) throw std::invalid_argument("schedule: support [0, t_m] must lie inside ]0, T[");
}

double SourceSchedule::value(double t) const {
    if (t >= t_m) return 0.0;
    for (const auto& e : entries)
        if (t >= e.t0 && t < e.t1) return e.value;
    return 0.0;
}

double SourceSchedule::integral(double a, double b) const {
    double s = 0.0;
    for (const auto& e : entries) {
        const double lo = std::max(a, e.t0);
        const double hi = std::min(b, e.t1);
        if (hi > lo) s += (hi - lo) * e.value;
    }
    return s;
}

double SourceSchedule::bound() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, std::abs(e.value));
    return m;
}

} // namespace ptrans
