#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mswave/analysis.hpp"
#include "mswave/cli.hpp"
#include "mswave/io.hpp"

using namespace mswave;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

RunConfig small_config() {
  return parse_config(R"({
    "version": 1,
    "mesh": {"n": 2, "r": 2},
    "medium": {"type": "constant", "kappa": 1.0, "rho": 1.0},
    "source": {"f0": 12.0},
    "selection": {"mode": "uniform", "boundary": 2, "interior": 2},
    "time": {"T": 0.05},
    "mode": "gmsfem"
  })");
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("defaults survive an empty document") {
    RunConfig cfg = parse_config("{}");
    CHECK(cfg.n == 8);
    CHECK(cfg.r == 3);
    CHECK(cfg.f0 == 20.0);
    CHECK(cfg.T == 0.2);
    CHECK(cfg.medium.type == "layered");
    CHECK(cfg.selection.boundary == 4);
    CHECK(cfg.selection.interior == 12);
  }

  SUBCASE("round trip through the serializer") {
    RunConfig cfg = small_config();
    RunConfig back = parse_config(config_to_json(cfg));
    CHECK(back.n == cfg.n);
    CHECK(back.r == cfg.r);
    CHECK(back.f0 == cfg.f0);
    CHECK(back.mode == cfg.mode);
    CHECK(back.selection.boundary == cfg.selection.boundary);
  }

  SUBCASE("the default source width follows the two-fine-cells rule") {
    RunConfig cfg = parse_config(R"({"mesh": {"n": 4, "r": 2}})");
    SourceConfig src = make_source(cfg);
    CHECK(src.delta == doctest::Approx(2.0 / 16.0));
  }

  SUBCASE("validation failures") {
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"version": 2})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"mesh": {"n": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"mode": "magic"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"medium": {"type": "raster"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"source": {"f0": -2}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"selection": {"boundary": 0}})"), ConfigError);
  }
}

TEST_CASE("mesh-info writes parseable reports") {
  TempDir dir("mswave_test_meshinfo");
  RunConfig cfg = small_config();
  cfg.output.geometry = true;
  CHECK(cmd_mesh_info(cfg, dir.str()) == 0);
  auto kv = read_kv(dir.file("mesh_info.kv"));
  bool found = false;
  for (const auto& [k, v] : kv)
    if (k == "fine_triangles") {
      CHECK(v == "384");
      found = true;
    }
  CHECK(found);
  CHECK(fs::exists(dir.file("mesh_report.txt")));
  CHECK(fs::exists(dir.file("geometry.txt")));
}

TEST_CASE("offline dimensions of the standard preset") {
  // n=8, r=3 with 4 trace functions per edge and 12 modes per element:
  // 7680 velocity functions; 5696 pressure functions, 5312 without the
  // piecewise constants
  TempDir dir("mswave_test_preset_dims");
  RunConfig cfg = parse_config(R"({"medium": {"type": "constant"}, "threads": 4})");
  CHECK(cmd_offline(cfg, dir.str()) == 0);
  std::ifstream in(dir.file("offline_manifest.json"));
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"dim_v\": 7680") != std::string::npos);
  CHECK(text.find("\"dim_q\": 5696") != std::string::npos);
  CHECK(text.find("\"dim_q_without_constants\": 5312") != std::string::npos);
}

TEST_CASE("offline stage is reproducible byte for byte") {
  TempDir d1("mswave_test_off1"), d2("mswave_test_off2");
  RunConfig cfg = small_config();
  CHECK(cmd_offline(cfg, d1.str()) == 0);
  CHECK(cmd_offline(cfg, d2.str()) == 0);
  CHECK(file_checksum(d1.file("offline.bin")) == file_checksum(d2.file("offline.bin")));
  CHECK(fs::exists(d1.file("offline_manifest.json")));
}

TEST_CASE("fine and identity-reduced runs produce identical fields") {
  TempDir doff("mswave_test_runs_off"), dfine("mswave_test_runs_fine"),
      dgms("mswave_test_runs_gms");
  RunConfig cfg = small_config();
  cfg.dt = 0.002;

  cfg.mode = "fine";
  CHECK(cmd_run(cfg, "", dfine.str()) == 0);

  cfg.mode = "gmsfem";
  cfg.selection.mode = "identity";
  CHECK(cmd_run(cfg, "", dgms.str()) == 0);

  Vec p1 = read_field_text(dfine.file("final_pressure.txt"));
  Vec p2 = read_field_text(dgms.file("final_pressure.txt"));
  REQUIRE(p1.size() == p2.size());
  CHECK((p1 - p2).norm() <= 1e-12 * p1.norm());
  Vec v1 = read_field_text(dfine.file("final_velocity.txt"));
  Vec v2 = read_field_text(dgms.file("final_velocity.txt"));
  CHECK((v1 - v2).norm() <= 1e-12 * v1.norm());

  // energy traces parse back
  auto trace = read_energy_trace(dfine.file("energy.txt"));
  CHECK(trace.size() >= 2);
}

TEST_CASE("gmsfem run uses the offline file and checks its checksums") {
  TempDir doff("mswave_test_gms_off"), drun("mswave_test_gms_run");
  RunConfig cfg = small_config();
  CHECK(cmd_offline(cfg, doff.str()) == 0);
  CHECK(cmd_run(cfg, doff.file("offline.bin"), drun.str()) == 0);
  CHECK(fs::exists(drun.file("final_pressure.txt")));
  CHECK(fs::exists(drun.file("run_manifest.json")));

  // a different medium must be rejected
  RunConfig other = cfg;
  other.medium.kappa = 2.0;
  CHECK_THROWS_AS(cmd_run(other, doff.file("offline.bin"), drun.str()), ConfigError);

  // gmsfem without an offline file is a config error
  CHECK_THROWS_AS(cmd_run(cfg, "", drun.str()), ConfigError);
}

TEST_CASE("snapshots are written at the configured cadence") {
  TempDir doff("mswave_test_snap_off"), drun("mswave_test_snap_run");
  RunConfig cfg = small_config();
  cfg.output.snapshot_every = 5;
  cfg.output.vtk = true;
  CHECK(cmd_offline(cfg, doff.str()) == 0);
  CHECK(cmd_run(cfg, doff.file("offline.bin"), drun.str()) == 0);
  CHECK(fs::exists(drun.file("pressure_000000.txt")));
  CHECK(fs::exists(drun.file("pressure_000000.vtk")));
  Vec snap = read_field_text(drun.file("pressure_000000.txt"));
  CHECK(snap.size() == 384);
}

TEST_CASE("table sweep writes the error matrix") {
  TempDir doff("mswave_test_tab_off"), dtab("mswave_test_tab");
  RunConfig cfg = small_config();
  cfg.table.boundary = {1, 2};
  cfg.table.interior = {0, 2};
  CHECK(cmd_offline(cfg, doff.str()) == 0);
  CHECK(cmd_table(cfg, doff.file("offline.bin"), dtab.str()) == 0);
  auto rows = read_error_csv(dtab.file("table.csv"));
  REQUIRE(rows.size() == 4);
  // richer selections do better on this smooth problem
  CHECK(rows[3][2] <= rows[0][2]);
  // errors are meaningful percentages, not garbage
  for (const auto& r : rows) {
    CHECK(r[2] >= 0.0);
    CHECK(r[2] < 2.0);
  }
}

TEST_CASE("empty table sweep succeeds with an empty file") {
  TempDir doff("mswave_test_emptytab_off"), dtab("mswave_test_emptytab");
  RunConfig cfg = small_config();
  cfg.table.boundary = {};
  cfg.table.interior = {};
  CHECK(cmd_offline(cfg, doff.str()) == 0);
  CHECK(cmd_table(cfg, doff.file("offline.bin"), dtab.str()) == 0);
  CHECK(read_error_csv(dtab.file("table.csv")).empty());
}

TEST_CASE("minimal configuration: no refinement, constant-trace basis only") {
  TempDir doff("mswave_test_min_off"), drun("mswave_test_min_run");
  RunConfig cfg = parse_config(R"({
    "mesh": {"n": 2, "r": 0},
    "medium": {"type": "constant"},
    "source": {"f0": 6.0},
    "selection": {"boundary": 1, "interior": 0},
    "time": {"T": 0.05},
    "mode": "gmsfem"
  })");
  CHECK(cmd_offline(cfg, doff.str()) == 0);
  CHECK(cmd_run(cfg, doff.file("offline.bin"), drun.str()) == 0);
  auto trace = read_energy_trace(drun.file("energy.txt"));
  CHECK(trace.size() >= 2);
  CHECK(trace.back()[4] > 0.0);  // the source injected energy
}

TEST_CASE("per-entity selection overrides the uniform counts") {
  TempDir doff("mswave_test_pe_off"), drun("mswave_test_pe_run");
  RunConfig cfg = small_config();
  CHECK(cmd_offline(cfg, doff.str()) == 0);
  cfg.selection.mode = "per-entity";
  cfg.selection.per_edge = {0, 1, 2};  // first three edges differ from the uniform count
  cfg.selection.per_element = {3, 3};
  CHECK(cmd_run(cfg, doff.file("offline.bin"), drun.str()) == 0);
  CHECK(fs::exists(drun.file("final_pressure.txt")));
}

TEST_CASE("raster files round trip") {
  TempDir dir("mswave_test_raster");
  RasterGrid g;
  g.nx = 3;
  g.ny = 2;
  g.x0 = -0.5;
  g.y0 = -0.25;
  g.x1 = 1.5;
  g.y1 = 1.25;
  g.values.resize(6);
  g.values << 1, 2, 3, 4, 5, 6;
  write_raster(dir.file("medium.raster"), g);
  RasterGrid back = read_raster(dir.file("medium.raster"));
  CHECK(back.nx == 3);
  CHECK(back.ny == 2);
  CHECK((back.values - g.values).norm() == 0.0);

  // a raster-driven run works end to end
  RunConfig cfg = small_config();
  cfg.medium.type = "raster";
  cfg.medium.kappa_raster = dir.file("medium.raster");
  cfg.mode = "fine";
  cfg.dt = 0.002;
  TempDir drun("mswave_test_raster_run");
  CHECK(cmd_run(cfg, "", drun.str()) == 0);
}

TEST_CASE("pml demo writes its diagnostics") {
  TempDir dir("mswave_test_pml");
  RunConfig cfg = parse_config(R"({
    "mesh": {"n": 2, "r": 2},
    "medium": {"type": "constant"},
    "source": {"f0": 8.0},
    "selection": {"boundary": 2, "interior": 1},
    "time": {"T": 0.3},
    "mode": "pml",
    "pml": {"width": 3}
  })");
  CHECK(cmd_pml_demo(cfg, dir.str()) == 0);
  CHECK(fs::exists(dir.file("interior_energy.txt")));
  CHECK(fs::exists(dir.file("pml_manifest.json")));
  std::ifstream trace(dir.file("interior_energy.txt"));
  long step;
  double t, e;
  int rows = 0;
  while (trace >> step >> t >> e) ++rows;
  CHECK(rows >= 2);
}
