#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mswave/medium.hpp"
#include "mswave/mesh.hpp"

namespace mswave {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct MediumSpec {
  std::string type = "layered";  // constant | layered | raster
  double kappa = 1.0, rho = 1.0;
  std::uint64_t seed = 2;  // the standard test medium
  int layers = 16;
  double contrast = 10.0;
  std::string kappa_raster, rho_raster;
};

struct SelectionSpec {
  std::string mode = "uniform";  // uniform | identity | per-entity
  int boundary = 4, interior = 12;
  std::vector<int> per_edge, per_element;
};

struct PmlSpec {
  int width = 10;
  double exponent = 2.0;
  double reflection = 1e-3;
};

struct TableSpec {
  std::vector<int> boundary{3, 4, 5, 6};
  std::vector<int> interior{4, 8, 12, 16};
};

struct OutputSpec {
  int snapshot_every = 0;  // steps between field snapshots, 0 disables
  bool vtk = false;
  bool geometry = false;
};

struct RunConfig {
  int version = 1;
  int n = 8, r = 3;
  MediumSpec medium;
  double f0 = 20.0;
  std::array<double, 2> center{0.5, 0.5};
  double delta = 0.0;  // 0: the default rule delta = 2h
  SelectionSpec selection;
  double T = 0.2, safety = 0.9, dt = 0.0;
  OutputSpec output;
  std::string mode = "gmsfem";  // fine | gmsfem | coupled-rt0 | pml
  PmlSpec pml;
  TableSpec table;
  int threads = 1;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);
std::string config_to_json(const RunConfig& cfg);

MediumField make_medium(const RunConfig& cfg, const FineMesh& fine);
SourceConfig make_source(const RunConfig& cfg);

int cmd_mesh_info(const RunConfig& cfg, const std::string& out_dir);
int cmd_offline(const RunConfig& cfg, const std::string& out_dir);
int cmd_run(const RunConfig& cfg, const std::string& offline_path, const std::string& out_dir);
int cmd_table(const RunConfig& cfg, const std::string& offline_path,
              const std::string& out_dir);
int cmd_pml_demo(const RunConfig& cfg, const std::string& out_dir);

}  // namespace mswave
