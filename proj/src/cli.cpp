#include "mswave/cli.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mswave/analysis.hpp"
#include "mswave/basis.hpp"
#include "mswave/io.hpp"
#include "mswave/solver.hpp"

namespace mswave {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

double effective_delta(const RunConfig& cfg);

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  try {
    maybe(j, "version", cfg.version);
    if (cfg.version != 1) throw ConfigError("unsupported config version");
    if (j.contains("mesh")) {
      maybe(j["mesh"], "n", cfg.n);
      maybe(j["mesh"], "r", cfg.r);
    }
    if (j.contains("medium")) {
      const json& m = j["medium"];
      maybe(m, "type", cfg.medium.type);
      maybe(m, "kappa", cfg.medium.kappa);
      maybe(m, "rho", cfg.medium.rho);
      maybe(m, "seed", cfg.medium.seed);
      maybe(m, "layers", cfg.medium.layers);
      maybe(m, "contrast", cfg.medium.contrast);
      maybe(m, "kappa_raster", cfg.medium.kappa_raster);
      maybe(m, "rho_raster", cfg.medium.rho_raster);
    }
    if (j.contains("source")) {
      const json& s = j["source"];
      maybe(s, "f0", cfg.f0);
      maybe(s, "center", cfg.center);
      if (s.contains("delta") && s["delta"].is_number()) cfg.delta = s["delta"].get<double>();
    }
    if (j.contains("selection")) {
      const json& s = j["selection"];
      maybe(s, "mode", cfg.selection.mode);
      maybe(s, "boundary", cfg.selection.boundary);
      maybe(s, "interior", cfg.selection.interior);
      maybe(s, "per_edge", cfg.selection.per_edge);
      maybe(s, "per_element", cfg.selection.per_element);
    }
    if (j.contains("time")) {
      maybe(j["time"], "T", cfg.T);
      maybe(j["time"], "safety", cfg.safety);
      maybe(j["time"], "dt", cfg.dt);
    }
    if (j.contains("output")) {
      maybe(j["output"], "snapshot_every", cfg.output.snapshot_every);
      maybe(j["output"], "vtk", cfg.output.vtk);
      maybe(j["output"], "geometry", cfg.output.geometry);
    }
    maybe(j, "mode", cfg.mode);
    if (j.contains("pml")) {
      maybe(j["pml"], "width", cfg.pml.width);
      maybe(j["pml"], "exponent", cfg.pml.exponent);
      maybe(j["pml"], "reflection", cfg.pml.reflection);
    }
    if (j.contains("table")) {
      maybe(j["table"], "boundary", cfg.table.boundary);
      maybe(j["table"], "interior", cfg.table.interior);
    }
    maybe(j, "threads", cfg.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }

  if (cfg.n < 1) throw ConfigError("mesh.n must be >= 1");
  if (cfg.r < 0) throw ConfigError("mesh.r must be >= 0");
  if (cfg.medium.type != "constant" && cfg.medium.type != "layered" &&
      cfg.medium.type != "raster")
    throw ConfigError("medium.type must be constant, layered or raster");
  if (cfg.medium.type == "raster" && cfg.medium.kappa_raster.empty())
    throw ConfigError("medium.kappa_raster is required for raster media");
  if (cfg.medium.type == "raster" && !fs::exists(cfg.medium.kappa_raster))
    throw ConfigError("raster file does not exist: " + cfg.medium.kappa_raster);
  if (!cfg.medium.rho_raster.empty() && !fs::exists(cfg.medium.rho_raster))
    throw ConfigError("raster file does not exist: " + cfg.medium.rho_raster);
  if (cfg.f0 <= 0) throw ConfigError("source.f0 must be positive");
  if (cfg.T <= 0) throw ConfigError("time.T must be positive");
  if (cfg.selection.mode != "uniform" && cfg.selection.mode != "identity" &&
      cfg.selection.mode != "per-entity")
    throw ConfigError("selection.mode must be uniform, identity or per-entity");
  if (cfg.selection.boundary < 1 || cfg.selection.interior < 0)
    throw ConfigError("selection counts are out of range");
  if (cfg.mode != "fine" && cfg.mode != "gmsfem" && cfg.mode != "coupled-rt0" &&
      cfg.mode != "pml")
    throw ConfigError("mode must be fine, gmsfem, coupled-rt0 or pml");
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["version"] = cfg.version;
  j["mesh"] = {{"n", cfg.n}, {"r", cfg.r}};
  j["medium"] = {{"type", cfg.medium.type},   {"kappa", cfg.medium.kappa},
                 {"rho", cfg.medium.rho},     {"seed", cfg.medium.seed},
                 {"layers", cfg.medium.layers}, {"contrast", cfg.medium.contrast},
                 {"kappa_raster", cfg.medium.kappa_raster},
                 {"rho_raster", cfg.medium.rho_raster}};
  j["source"] = {{"f0", cfg.f0}, {"center", cfg.center}, {"delta", effective_delta(cfg)}};
  j["selection"] = {{"mode", cfg.selection.mode},
                    {"boundary", cfg.selection.boundary},
                    {"interior", cfg.selection.interior},
                    {"per_edge", cfg.selection.per_edge},
                    {"per_element", cfg.selection.per_element}};
  j["time"] = {{"T", cfg.T}, {"safety", cfg.safety}, {"dt", cfg.dt}};
  j["output"] = {{"snapshot_every", cfg.output.snapshot_every},
                 {"vtk", cfg.output.vtk},
                 {"geometry", cfg.output.geometry}};
  j["mode"] = cfg.mode;
  j["pml"] = {{"width", cfg.pml.width},
              {"exponent", cfg.pml.exponent},
              {"reflection", cfg.pml.reflection}};
  j["table"] = {{"boundary", cfg.table.boundary}, {"interior", cfg.table.interior}};
  j["threads"] = cfg.threads;
  return j.dump(2);
}

double effective_delta(const RunConfig& cfg) {
  if (cfg.delta > 0.0) return cfg.delta;
  return 2.0 / (static_cast<double>(cfg.n) * (1 << cfg.r));  // the default rule: 2h
}

MediumField make_medium(const RunConfig& cfg, const FineMesh& fine) {
  if (cfg.medium.type == "constant")
    return constant_medium(fine, cfg.medium.kappa, cfg.medium.rho);
  if (cfg.medium.type == "layered")
    return layered_random_medium(fine, cfg.medium.seed, cfg.medium.layers,
                                 cfg.medium.contrast);
  RasterGrid kap = read_raster(cfg.medium.kappa_raster);
  if (!cfg.medium.rho_raster.empty()) {
    RasterGrid rho = read_raster(cfg.medium.rho_raster);
    return sample_raster(fine, kap, &rho);
  }
  return sample_raster(fine, kap, nullptr);
}

SourceConfig make_source(const RunConfig& cfg) {
  SourceConfig src;
  src.f0 = cfg.f0;
  src.center = {cfg.center[0], cfg.center[1]};
  src.delta = effective_delta(cfg);
  return src;
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir);
}

Selection config_selection(const RunConfig& cfg, const OfflineBasis& basis) {
  if (cfg.selection.mode == "uniform")
    return uniform_selection(basis, cfg.selection.boundary, cfg.selection.interior);
  // per-entity: explicit lists, padded with the uniform counts
  Selection sel = uniform_selection(basis, cfg.selection.boundary, cfg.selection.interior);
  for (size_t i = 0; i < cfg.selection.per_edge.size() && i < sel.edge_modes.size(); ++i)
    sel.edge_modes[i] = cfg.selection.per_edge[i];
  for (size_t i = 0; i < cfg.selection.per_element.size() && i < sel.element_modes.size(); ++i)
    sel.element_modes[i] = cfg.selection.per_element[i];
  return sel;
}

struct OfflineDims {
  int dim_v = 0, dim_q = 0;
  int dim_q_constants = 0, dim_q_penalty = 0, dim_q_interior_modes = 0;
};

OfflineDims offline_dims(const OfflineSpace& space) {
  OfflineDims d;
  d.dim_v = static_cast<int>(space.velocity.cols());
  d.dim_q = static_cast<int>(space.pressure.cols());
  d.dim_q_constants = static_cast<int>(space.pres_elems.size());
  for (const auto& pe : space.pres_elems) d.dim_q_interior_modes += pe.n_modes;
  for (const auto& pe : space.pres_edges) d.dim_q_penalty += 1 + pe.n_modes;
  return d;
}

json eigenvalue_summary(const OfflineBasis& basis) {
  double edge_min = 0, edge_max = 0;
  double elem_min = 0, elem_max = 0;
  bool first_edge = true, first_elem = true;
  for (const auto& e : basis.edges) {
    if (e.edge < 0 || e.eigenvalues.size() == 0) continue;
    double lo = e.eigenvalues[0], hi = e.eigenvalues[e.eigenvalues.size() - 1];
    edge_min = first_edge ? lo : std::min(edge_min, lo);
    edge_max = first_edge ? hi : std::max(edge_max, hi);
    first_edge = false;
  }
  for (const auto& k : basis.elements) {
    if (k.coarse_tri < 0 || k.eigenvalues.size() == 0) continue;
    double lo = k.eigenvalues[0], hi = k.eigenvalues[k.eigenvalues.size() - 1];
    elem_min = first_elem ? lo : std::min(elem_min, lo);
    elem_max = first_elem ? hi : std::max(elem_max, hi);
    first_elem = false;
  }
  return json{{"edge_min", edge_min},
              {"edge_max", edge_max},
              {"element_min", elem_min},
              {"element_max", elem_max}};
}

void write_manifest(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

void write_snapshots(const std::string& out_dir, const RunConfig& cfg, const FineMesh& fine,
                     const History& hist, const OfflineSpace* space, int n_elem) {
  if (cfg.output.snapshot_every <= 0) return;
  for (size_t i = 0; i < hist.sample_steps.size(); ++i) {
    Vec p = space ? Vec(space->pressure * hist.pressure[i]) : hist.pressure[i];
    Vec cell = p.head(n_elem);
    char name[64];
    std::snprintf(name, sizeof(name), "pressure_%06ld.txt", hist.sample_steps[i]);
    write_field_text(out_dir + "/" + name, cell);
    if (cfg.output.vtk) {
      std::snprintf(name, sizeof(name), "pressure_%06ld.vtk", hist.sample_steps[i]);
      write_vtk_pressure(out_dir + "/" + name, fine, cell);
    }
  }
}

}  // namespace

int cmd_mesh_info(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  MeshHierarchy h = build_hierarchy(cfg.n, cfg.r);
  Spaces s = build_spaces(h.fine, h.bands, h.edges);
  std::string text = mesh_report_text(h, &s);
  write_text_file(out_dir + "/mesh_report.txt", text);
  write_text_file(out_dir + "/mesh_info.kv", mesh_report_kv(h, &s));
  if (cfg.output.geometry) write_geometry(out_dir + "/geometry.txt", h.fine);
  std::cout << text;
  return 0;
}

int cmd_offline(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  auto t0 = std::chrono::steady_clock::now();
  json timings;

  MeshHierarchy h = build_hierarchy(cfg.n, cfg.r);
  MediumField med = make_medium(cfg, h.fine);
  Spaces s = build_spaces(h.fine, h.bands, h.edges);
  timings["setup"] = seconds_since(t0);

  auto t1 = std::chrono::steady_clock::now();
  OfflineBasis basis = build_offline_basis(h, med, s, cfg.threads);
  timings["basis"] = seconds_since(t1);

  OfflineFileMeta meta;
  meta.n = cfg.n;
  meta.r = cfg.r;
  meta.mesh_checksum = mesh_checksum(h);
  meta.medium_checksum = medium_checksum(med);
  std::string basis_path = out_dir + "/offline.bin";
  save_offline_basis(basis_path, basis, meta);

  Selection sel = config_selection(cfg, basis);
  OfflineSpace space = assemble_offline_space(h, s, basis, sel);
  OfflineDims dims = offline_dims(space);

  json manifest;
  manifest["config"] = json::parse(config_to_json(cfg));
  manifest["mesh"] = json::parse("{}");
  {
    std::istringstream kv(mesh_report_kv(h, &s));
    std::string line;
    while (std::getline(kv, line)) {
      auto eq = line.find('=');
      if (eq != std::string::npos) manifest["mesh"][line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  manifest["checksums"] = {{"mesh", meta.mesh_checksum},
                           {"medium", meta.medium_checksum},
                           {"offline_file", file_checksum(basis_path)}};
  manifest["medium"] = {{"kappa_min", med.kappa.minCoeff()},
                        {"kappa_max", med.kappa.maxCoeff()},
                        {"rho_min", med.rho.minCoeff()},
                        {"rho_max", med.rho.maxCoeff()}};
  manifest["offline_dims"] = {
      {"dim_v", dims.dim_v},
      {"dim_q", dims.dim_q},
      {"dim_q_constants", dims.dim_q_constants},
      {"dim_q_penalty", dims.dim_q_penalty},
      {"dim_q_interior_modes", dims.dim_q_interior_modes},
      {"dim_q_without_constants", dims.dim_q - dims.dim_q_constants}};
  manifest["eigenvalues"] = eigenvalue_summary(basis);
  manifest["timings"] = timings;
  write_manifest(out_dir + "/offline_manifest.json", manifest);
  std::cout << "offline basis written: dim_v=" << dims.dim_v << " dim_q=" << dims.dim_q
            << "\n";
  return 0;
}

int cmd_run(const RunConfig& cfg, const std::string& offline_path,
            const std::string& out_dir) {
  ensure_dir(out_dir);
  if (cfg.mode == "pml") return cmd_pml_demo(cfg, out_dir);

  auto t0 = std::chrono::steady_clock::now();
  json timings;
  MeshHierarchy h = build_hierarchy(cfg.n, cfg.r);
  MediumField med = make_medium(cfg, h.fine);
  SourceConfig src = make_source(cfg);
  TimeOptions opts;
  opts.T = cfg.T;
  opts.safety = cfg.safety;
  opts.dt = cfg.dt;
  opts.sample_every = cfg.output.snapshot_every;
  timings["setup"] = seconds_since(t0);

  json manifest;
  manifest["config"] = json::parse(config_to_json(cfg));
  manifest["checksums"] = {{"mesh", mesh_checksum(h)}, {"medium", medium_checksum(med)}};

  auto t1 = std::chrono::steady_clock::now();
  History hist;
  if (cfg.mode == "fine") {
    hist = run_fine_reference(h, med, src, opts);
    write_field_text(out_dir + "/final_velocity.txt", hist.final_velocity);
    write_field_text(out_dir + "/final_pressure.txt", hist.final_pressure);
    write_snapshots(out_dir, cfg, h.fine, hist, nullptr,
                    static_cast<int>(h.fine.triangles.size()));
  } else if (cfg.mode == "coupled-rt0") {
    hist = run_coupled_rt0(h, med, src, opts);
    write_field_text(out_dir + "/final_velocity.txt", hist.final_velocity);
    write_field_text(out_dir + "/final_pressure.txt", hist.final_pressure);
    write_snapshots(out_dir, cfg, h.fine, hist, nullptr,
                    static_cast<int>(h.fine.triangles.size()));
  } else {  // gmsfem
    Spaces s = build_spaces(h.fine, h.bands, h.edges);
    AssembledForms forms = assemble_forms(h.fine, med, s);
    OfflineSpace space;
    OfflineBasis basis;
    if (cfg.selection.mode == "identity") {
      space = identity_offline_space(s, forms);
    } else {
      if (offline_path.empty()) throw ConfigError("gmsfem mode needs --offline FILE");
      OfflineFileMeta meta;
      basis = load_offline_basis(offline_path, &meta);
      if (meta.mesh_checksum != mesh_checksum(h))
        throw ConfigError("offline file was built for a different mesh");
      if (meta.medium_checksum != medium_checksum(med))
        throw ConfigError("offline file was built for a different medium");
      space = assemble_offline_space(h, s, basis, config_selection(cfg, basis));
    }
    ReducedSystem sys = reduce_system(space, forms);
    Vec spatial = source_spatial_load(h.fine, forms, src);
    Vec reduced_spatial = SparseMat(space.pressure.transpose()) * spatial;
    double f0 = src.f0;
    hist = run_leapfrog(make_ops(sys), reduced_spatial,
                        [f0](double t) { return ricker_time_factor(t, f0); }, opts);
    write_field_text(out_dir + "/final_velocity.txt", Vec(space.velocity * hist.final_velocity));
    write_field_text(out_dir + "/final_pressure.txt", Vec(space.pressure * hist.final_pressure));
    manifest["reduced_dims"] = {{"dim_v", sys.n_v}, {"dim_q", sys.n_q}};
    write_snapshots(out_dir, cfg, h.fine, hist, &space,
                    static_cast<int>(h.fine.triangles.size()));
  }
  timings["run"] = seconds_since(t1);

  write_energy_trace(out_dir + "/energy.txt", hist);
  manifest["time_grid"] = {{"dt", hist.dt}, {"steps", hist.n_steps}};
  manifest["timings"] = timings;
  write_manifest(out_dir + "/run_manifest.json", manifest);
  std::cout << "run complete: mode=" << cfg.mode << " dt=" << hist.dt
            << " steps=" << hist.n_steps << "\n";
  return 0;
}

int cmd_table(const RunConfig& cfg, const std::string& offline_path,
              const std::string& out_dir) {
  ensure_dir(out_dir);
  if (offline_path.empty()) throw ConfigError("table mode needs --offline FILE");

  MeshHierarchy h = build_hierarchy(cfg.n, cfg.r);
  MediumField med = make_medium(cfg, h.fine);
  SourceConfig src = make_source(cfg);

  OfflineFileMeta meta;
  OfflineBasis basis = load_offline_basis(offline_path, &meta);
  if (meta.mesh_checksum != mesh_checksum(h))
    throw ConfigError("offline file was built for a different mesh");
  if (meta.medium_checksum != medium_checksum(med))
    throw ConfigError("offline file was built for a different medium");

  Spaces s = build_spaces(h.fine, h.bands, h.edges);
  AssembledForms forms = assemble_forms(h.fine, med, s);

  TimeOptions opts;
  opts.T = cfg.T;
  opts.safety = cfg.safety;
  opts.dt = cfg.dt;
  History fine_hist = run_fine_reference(h, med, src, opts);
  opts.dt = fine_hist.dt;  // shared time grid

  std::vector<ErrorReport> rows;
  double f0 = src.f0;
  Vec spatial = source_spatial_load(h.fine, forms, src);
  for (int b : cfg.table.boundary) {
    for (int i : cfg.table.interior) {
      Selection sel = uniform_selection(basis, b, i);
      OfflineSpace space = assemble_offline_space(h, s, basis, sel);
      ReducedSystem sys = reduce_system(space, forms);
      Vec reduced_spatial = SparseMat(space.pressure.transpose()) * spatial;
      History hist = run_leapfrog(make_ops(sys), reduced_spatial,
                                  [f0](double t) { return ricker_time_factor(t, f0); }, opts);
      ErrorReport rep = compare_to_reference(hist, space, fine_hist, forms);
      rep.boundary_count = b;
      rep.interior_count = i;
      rows.push_back(rep);
      std::cout << "boundary=" << b << " interior=" << i << " rel_p=" << rep.final_rel_p
                << " rel_v=" << rep.final_rel_v << "\n";
    }
  }
  write_error_csv(out_dir + "/table.csv", rows);

  json manifest;
  manifest["config"] = json::parse(config_to_json(cfg));
  manifest["time_grid"] = {{"dt", fine_hist.dt}, {"steps", fine_hist.n_steps}};
  manifest["checksums"] = {{"mesh", mesh_checksum(h)}, {"medium", medium_checksum(med)}};
  write_manifest(out_dir + "/table_manifest.json", manifest);
  return 0;
}

int cmd_pml_demo(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  PmlConfig pml;
  pml.width = cfg.pml.width;
  pml.exponent = cfg.pml.exponent;
  pml.reflection = cfg.pml.reflection;

  auto medium_gen = [&cfg](const FineMesh& fine) { return make_medium(cfg, fine); };
  PmlSystem sys = build_pml_system(cfg.n, cfg.r, pml, medium_gen, cfg.selection.boundary,
                                   cfg.selection.interior, cfg.threads);
  SourceConfig src = make_source(cfg);
  TimeOptions opts;
  opts.T = cfg.T;
  opts.safety = cfg.safety;
  opts.dt = cfg.dt;
  PmlRunResult res = run_pml(sys, src, opts, true);

  std::ofstream trace(out_dir + "/interior_energy.txt");
  trace.precision(17);
  for (const auto& row : res.interior_energy)
    trace << static_cast<long>(row[0]) << ' ' << row[1] << ' ' << row[2] << '\n';
  trace.close();

  int n_elem = static_cast<int>(sys.ext.mesh.fine.triangles.size());
  write_field_text(out_dir + "/final_pressure.txt", Vec(res.final_pressure_fine.head(n_elem)));
  if (cfg.output.vtk)
    write_vtk_pressure(out_dir + "/final_pressure.vtk", sys.ext.mesh.fine,
                       res.final_pressure_fine.head(n_elem));

  json manifest;
  manifest["config"] = json::parse(config_to_json(cfg));
  manifest["pml"] = {{"pad_cells", sys.ext.pad_cells},
                     {"peak_interior_energy", res.peak_interior_energy},
                     {"final_interior_energy", res.final_interior_energy},
                     {"ratio", res.final_interior_energy /
                                   (res.peak_interior_energy > 0 ? res.peak_interior_energy : 1.0)}};
  manifest["time_grid"] = {{"dt", res.hist.dt}, {"steps", res.hist.n_steps}};
  write_manifest(out_dir + "/pml_manifest.json", manifest);
  std::cout << "pml run: peak interior energy " << res.peak_interior_energy
            << ", final " << res.final_interior_energy << "\n";
  return 0;
}

}  // namespace mswave
