#pragma once

// Structured axis-aligned cell-centered grids.
//
// All solvers in this project run on uniform-per-axis tensor grids. Cells are
// addressed by a flat index with axis 0 fastest. A grid may carry a mask that
// removes cells from the computational domain (holes / obstacles); masked
// cells keep their slot in field arrays but never enter a linear system.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptrans {

constexpr int kMaxDim = 3;

enum class CellKind : std::uint8_t { fluid = 0, hole = 1 };

class StructuredGrid {
public:
    StructuredGrid() = default;

    StructuredGrid(int dim, const std::array<int, kMaxDim>& cells,
                   const std::array<double, kMaxDim>& spacing,
                   const std::array<double, kMaxDim>& origin)
        : dim_(dim), cells_(cells), spacing_(spacing), origin_(origin) {
        if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("grid dimension must be 1..3");
        std::size_t n = 1;
        for (int a = 0; a < dim; ++a) {
            if (cells_[a] <= 0) throw std::invalid_argument("grid cell counts must be positive");
            if (spacing_[a] <= 0.0) throw std::invalid_argument("grid spacings must be positive");
            n *= static_cast<std::size_t>(cells_[a]);
        }
        for (int a = dim; a < kMaxDim; ++a) { cells_[a] = 1; spacing_[a] = 1.0; origin_[a] = 0.0; }
        num_cells_ = n;
        kind_.assign(n, CellKind::fluid);
        cell_volume_ = 1.0;
        for (int a = 0; a < dim; ++a) cell_volume_ *= spacing_[a];
    }

    int dim() const { return dim_; }
    int cells(int axis) const { return cells_[axis]; }
    double spacing(int axis) const { return spacing_[axis]; }
    double origin(int axis) const { return origin_[axis]; }
    double extent(int axis) const { return cells_[axis] * spacing_[axis]; }
    std::size_t num_cells() const { return num_cells_; }
    double cell_volume() const { return cell_volume_; }

    /// Area of a face orthogonal to `axis`.
    double face_area(int axis) const { return cell_volume_ / spacing_[axis]; }

    std::size_t index(const std::array<int, kMaxDim>& c) const {
        std::size_t idx = 0;
        for (int a = dim_ - 1; a >= 0; --a) idx = idx * cells_[a] + static_cast<std::size_t>(c[a]);
        return idx;
    }

    std::array<int, kMaxDim> coords(std::size_t idx) const {
        std::array<int, kMaxDim> c{0, 0, 0};
        for (int a = 0; a < dim_; ++a) {
            c[a] = static_cast<int>(idx % cells_[a]);
            idx /= cells_[a];
        }
        return c;
    }

    double center(int axis, int i) const { return origin_[axis] + (i + 0.5) * spacing_[axis]; }
    double face_coord(int axis, int i) const { return origin_[axis] + i * spacing_[axis]; }

    std::array<double, kMaxDim> cell_center(std::size_t idx) const {
        auto c = coords(idx);
        std::array<double, kMaxDim> x{0.0, 0.0, 0.0};
        for (int a = 0; a < dim_; ++a) x[a] = center(a, c[a]);
        return x;
    }

    CellKind kind(std::size_t idx) const { return kind_[idx]; }
    bool is_fluid(std::size_t idx) const { return kind_[idx] == CellKind::fluid; }
    void set_kind(std::size_t idx, CellKind k) { kind_[idx] = k; }

    std::size_t count_fluid() const {
        std::size_t n = 0;
        for (auto k : kind_) n += (k == CellKind::fluid);
        return n;
    }

private:
    int dim_ = 0;
    std::array<int, kMaxDim> cells_{1, 1, 1};
    std::array<double, kMaxDim> spacing_{1.0, 1.0, 1.0};
    std::array<double, kMaxDim> origin_{0.0, 0.0, 0.0};
    std::size_t num_cells_ = 0;
    double cell_volume_ = 0.0;
    std::vector<CellKind> kind_;
};

/// Cell-centered scalar field; values on all cells (masked cells hold 0).
struct ScalarField {
    const StructuredGrid* grid = nullptr;
    std::vector<double> values;
    double time = 0.0;

    ScalarField() = default;
    explicit ScalarField(const StructuredGrid& g, double t = 0.0)
        : grid(&g), values(g.num_cells(), 0.0), time(t) {}

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

} // namespace ptrans
