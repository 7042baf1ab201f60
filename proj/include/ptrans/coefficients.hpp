#pragma once

// Two-layer coefficient fields. Diffusion A, porosity w and velocity v switch
// branches at |y_n| = h in the fast variable y_n = x_n / eps; the rescaled
// evaluation is A_eps(x_n) = A(x_n/eps). The source schedule is the leak flux
// Phi(t) with compact support plus the decay constant lambda = log 2 / tau.

#include "ptrans/grid.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace ptrans {

using Matrix = std::array<std::array<double, kMaxDim>, kMaxDim>;

Matrix identity_matrix(int n);
Matrix scaled_identity(int n, double a);

/// Symmetric positive-definiteness check via eigenvalues; tol is relative
/// to the largest magnitude entry.
bool is_symmetric_positive_definite(const Matrix& A, int n, double tol = 1e-12);

/// Two-layer diffusion tensor: A1 for |y_n| < h, A2 for |y_n| >= h
/// (the layer interface is assigned to the outer branch).
struct LayeredTensor {
    int n = 2;
    Matrix A1{};
    Matrix A2{};
    double h = 1.5;

    void validate(double pd_tol = 1e-12) const;

    const Matrix& at_fast(double y_n) const { return std::abs(y_n) < h ? A1 : A2; }
    const Matrix& outer() const { return A2; }
    bool has_cross_terms() const;
};

/// A_eps(x_n) = A(x_n / eps).
const Matrix& eval_tensor(const LayeredTensor& field, double x_n, double eps);

/// Two-layer porosity.
struct LayeredScalar {
    double w1 = 1.0;
    double w2 = 1.0;
    double h = 1.5;

    void validate() const;
    double at_fast(double y_n) const { return std::abs(y_n) < h ? w1 : w2; }
    double eval(double x_n, double eps) const { return at_fast(x_n / eps); }
    double outer() const { return w2; }
};

/// lambda = log 2 / tau.
double decay_constant(double tau);

/// Two-layer velocity. Branches v1/v2 are functions of (x, t); the vertical
/// component must agree between branches and div_x v must vanish.
struct LayeredVelocity {
    using Fn = std::function<std::array<double, kMaxDim>(const std::array<double, kMaxDim>&, double)>;

    int n = 2;
    double h = 1.5;
    Fn v1;
    Fn v2;
    bool time_dependent = false;
    bool zero = true;
    std::string preset = "zero";

    static LayeredVelocity make_zero(int n, double h);
    static LayeredVelocity make_constant(int n, double h, const std::array<double, kMaxDim>& v);
    /// Horizontal velocities differing per layer; vertical component zero.
    static LayeredVelocity make_layered_horizontal(int n, double h,
                                                   const std::array<double, kMaxDim>& inner,
                                                   const std::array<double, kMaxDim>& outer);
    /// Rigid rotation (-x2, x1, 0); divergence-free, not laterally periodic.
    static LayeredVelocity make_rotation(int n, double h);
    /// Linear shear (x1, 0, 0); carries unit divergence (diagnostic test field).
    static LayeredVelocity make_divergent(int n, double h);

    std::array<double, kMaxDim> eval(const std::array<double, kMaxDim>& x, double y_n,
                                     double t) const {
        return std::abs(y_n) < h ? v1(x, t) : v2(x, t);
    }
    std::array<double, kMaxDim> eval_scaled(const std::array<double, kMaxDim>& x, double eps,
                                            double t) const {
        return eval(x, x[n - 1] / eps, t);
    }
    std::array<double, kMaxDim> eval_outer(const std::array<double, kMaxDim>& x, double t) const {
        return v2(x, t);
    }
};

/// Max over cells of |div_h v| computed from face-centroid normal velocities.
/// `eps` selects the branch by face height; pass 0 to use the outer branch
/// everywhere.
double check_divergence_free(const LayeredVelocity& v, const StructuredGrid& grid,
                             double eps, double t = 0.0);

/// Leak schedule Phi(t): piecewise-constant, support in [0, t_m] in ]0, T[.
struct SourceSchedule {
    struct Entry {
        double t0 = 0.0, t1 = 0.0, value = 0.0;
    };
    std::vector<Entry> entries;  // sorted, non-overlapping
    double t_m = 0.0;
    double T = 1.0;
    double tau = 1.0;
    double lambda = 0.0;

    static SourceSchedule pulse(double amplitude, double t_m, double T, double tau);
    static SourceSchedule table(const std::vector<Entry>& entries, double T, double tau);
    static SourceSchedule none(double T, double tau);

    void validate() const;

    double value(double t) const;
    /// Exact integral of Phi over [a, b].
    double integral(double a, double b) const;
    /// Step mean (1/dt) * integral(t, t+dt).
    double step_average(double t, double dt) const { return integral(t, t + dt) / dt; }
    double bound() const;
};

} // namespace ptrans
