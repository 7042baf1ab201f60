#pragma once

// Self-describing text outputs: structured-grid field dumps and CSV tables.
// All numbers print with %.17g so repeated runs are byte-identical.

#include "ptrans/coefficients.hpp"
#include "ptrans/grid.hpp"

#include <string>
#include <vector>

namespace ptrans {

void write_field(const std::string& path, const ScalarField& field);
ScalarField read_field(const std::string& path, StructuredGrid& grid_storage);

/// Discrete face-normal velocity data: one array per axis over that axis's
/// faces, on the grid declared in the file header. Queries snap to the
/// nearest face of the requested axis.
LayeredVelocity load_face_flux_velocity(const std::string& path, double h);
void write_face_flux_velocity(const std::string& path, const StructuredGrid& grid,
                              const std::vector<std::vector<double>>& face_values);

std::string format_double(double v);

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void header(const std::vector<std::string>& names);
    void row(const std::vector<double>& values);
    void raw_row(const std::vector<std::string>& cells);

private:
    struct Impl;
    Impl* impl_;
};

void ensure_directory(const std::string& path);

} // namespace ptrans
