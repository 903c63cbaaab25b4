#pragma once

#include <array>
#include <string>
#include <vector>

#include "mswave/fem.hpp"
#include "mswave/medium.hpp"
#include "mswave/mesh.hpp"
#include "mswave/solver.hpp"
#include "mswave/types.hpp"

namespace mswave {

/// Raster file: one ASCII header line "nx ny x0 y0 x1 y1" followed by nx*ny
/// whitespace-separated positive values, row-major (y-major, x-minor).
RasterGrid read_raster(const std::string& path);
void write_raster(const std::string& path, const RasterGrid& g);

std::string mesh_report_text(const MeshHierarchy& h, const Spaces* s = nullptr);
std::string mesh_report_kv(const MeshHierarchy& h, const Spaces* s = nullptr);
std::vector<std::pair<std::string, std::string>> read_kv(const std::string& path);

/// Plain-text geometry dump: vertex count + coordinates, triangle count +
/// vertex indices.
void write_geometry(const std::string& path, const FineMesh& f);

void write_energy_trace(const std::string& path, const History& h);
std::vector<std::array<double, 5>> read_energy_trace(const std::string& path);

void write_field_text(const std::string& path, const Vec& v);
Vec read_field_text(const std::string& path);

/// Legacy ASCII VTK unstructured grid with one cell scalar.
void write_vtk_pressure(const std::string& path, const FineMesh& f, const Vec& cell_values,
                        const std::string& name = "pressure");

std::uint64_t file_checksum(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace mswave
