#include "ptrans/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace ptrans {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_directory(const std::string& path) {
    if (!path.empty()) std::filesystem::create_directories(path);
}

void write_field(const std::string& path, const ScalarField& field) {
    const auto& g = *field.grid;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "ptrans-field 1\n";
    os << "dim " << g.dim() << "\n";
    os << "cells";
    for (int a = 0; a < g.dim(); ++a) os << ' ' << g.cells(a);
    os << "\nspacing";
    for (int a = 0; a < g.dim(); ++a) os << ' ' << format_double(g.spacing(a));
    os << "\norigin";
    for (int a = 0; a < g.dim(); ++a) os << ' ' << format_double(g.origin(a));
    os << "\ntime " << format_double(field.time) << "\n";
    bool masked = false;
    for (std::size_t c = 0; c < g.num_cells(); ++c)
        if (!g.is_fluid(c)) { masked = true; break; }
    os << "mask " << (masked ? 1 : 0) << "\n";
    if (masked) {
        for (std::size_t c = 0; c < g.num_cells(); ++c)
            os << (g.is_fluid(c) ? '0' : '1');
        os << "\n";
    }
    os << "data\n";
    for (std::size_t c = 0; c < g.num_cells(); ++c) os << format_double(field.values[c]) << "\n";
}

ScalarField read_field(const std::string& path, StructuredGrid& grid_storage) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string tag;
    int version = 0;
    is >> tag >> version;
    if (tag != "ptrans-field" || version != 1)
        throw std::runtime_error(path + ": not a ptrans field file");
    int dim = 0;
    is >> tag >> dim;
    std::array<int, kMaxDim> cells{1, 1, 1};
    std::array<double, kMaxDim> spacing{1, 1, 1}, origin{0, 0, 0};
    is >> tag;
    for (int a = 0; a < dim; ++a) is >> cells[a];
    is >> tag;
    for (int a = 0; a < dim; ++a) is >> spacing[a];
    is >> tag;
    for (int a = 0; a < dim; ++a) is >> origin[a];
    double time = 0.0;
    is >> tag >> time;
    int masked = 0;
    is >> tag >> masked;
    grid_storage = StructuredGrid(dim, cells, spacing, origin);
    if (masked) {
        std::string line;
        is >> line;
        for (std::size_t c = 0; c < grid_storage.num_cells() && c < line.size(); ++c)
            if (line[c] == '1') grid_storage.set_kind(c, CellKind::hole);
    }
    is >> tag;  // data
    ScalarField f(grid_storage, time);
    for (std::size_t c = 0; c < grid_storage.num_cells(); ++c) is >> f.values[c];
    if (!is) throw std::runtime_error(path + ": truncated field file");
    return f;
}

void write_face_flux_velocity(const std::string& path, const StructuredGrid& grid,
                              const std::vector<std::vector<double>>& face_values) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    const int n = grid.dim();
    os << "ptrans-facevel 1\n";
    os << "dim " << n << "\n";
    os << "cells";
    for (int a = 0; a < n; ++a) os << ' ' << grid.cells(a);
    os << "\nspacing";
    for (int a = 0; a < n; ++a) os << ' ' << format_double(grid.spacing(a));
    os << "\norigin";
    for (int a = 0; a < n; ++a) os << ' ' << format_double(grid.origin(a));
    os << "\n";
    for (int a = 0; a < n; ++a) {
        os << "axis " << a << "\n";
        for (double v : face_values[static_cast<std::size_t>(a)]) os << format_double(v) << "\n";
    }
}

LayeredVelocity load_face_flux_velocity(const std::string& path, double h) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string tag;
    int version = 0, n = 0;
    is >> tag >> version;
    if (tag != "ptrans-facevel" || version != 1)
        throw std::runtime_error(path + ": not a face-flux velocity file");
    is >> tag >> n;
    if (n < 1 || n > kMaxDim) throw std::runtime_error(path + ": bad dimension");
    std::array<int, kMaxDim> cells{1, 1, 1};
    std::array<double, kMaxDim> spacing{1, 1, 1}, origin{0, 0, 0};
    is >> tag;
    for (int a = 0; a < n; ++a) is >> cells[a];
    is >> tag;
    for (int a = 0; a < n; ++a) is >> spacing[a];
    is >> tag;
    for (int a = 0; a < n; ++a) is >> origin[a];

    auto data = std::make_shared<std::vector<std::vector<double>>>(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
        int axis = -1;
        is >> tag >> axis;
        if (tag != "axis" || axis != a) throw std::runtime_error(path + ": malformed axis block");
        std::size_t count = 1;
        for (int b = 0; b < n; ++b)
            count *= static_cast<std::size_t>(b == a ? cells[b] + 1 : cells[b]);
        (*data)[static_cast<std::size_t>(a)].resize(count);
        for (auto& v : (*data)[static_cast<std::size_t>(a)]) is >> v;
        if (!is) throw std::runtime_error(path + ": truncated axis block");
    }

    LayeredVelocity v;
    v.n = n;
    v.h = h;
    v.zero = false;
    v.preset = "face_flux_file";
    auto fn = [data, cells, spacing, origin, n](const std::array<double, kMaxDim>& x, double) {
        std::array<double, kMaxDim> out{0.0, 0.0, 0.0};
        for (int a = 0; a < n; ++a) {
            std::size_t idx = 0;
            for (int b = n - 1; b >= 0; --b) {
                const int nb = b == a ? cells[b] + 1 : cells[b];
                const double t = (x[b] - origin[b]) / spacing[b] - (b == a ? 0.0 : 0.5);
                int i = static_cast<int>(std::llround(t));
                i = std::max(0, std::min(i, nb - 1));
                idx = idx * static_cast<std::size_t>(nb) + static_cast<std::size_t>(i);
            }
            out[a] = (*data)[static_cast<std::size_t>(a)][idx];
        }
        return out;
    };
    v.v1 = fn;
    v.v2 = fn;
    return v;
}

struct CsvWriter::Impl {
    std::ofstream os;
};

CsvWriter::CsvWriter(const std::string& path) : impl_(new Impl) {
    impl_->os.open(path);
    if (!impl_->os) {
        delete impl_;
        throw std::runtime_error("cannot open " + path + " for writing");
    }
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::header(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i)
        impl_->os << (i ? "," : "") << names[i];
    impl_->os << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i)
        impl_->os << (i ? "," : "") << format_double(values[i]);
    impl_->os << "\n";
}

void CsvWriter::raw_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
        impl_->os << (i ? "," : "") << cells[i];
    impl_->os << "\n";
}

} // namespace ptrans
