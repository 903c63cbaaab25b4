#include "mswave/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mswave {

RasterGrid read_raster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open raster " + path);
  RasterGrid g;
  if (!(in >> g.nx >> g.ny >> g.x0 >> g.y0 >> g.x1 >> g.y1))
    throw std::runtime_error("malformed raster header in " + path);
  if (g.nx < 1 || g.ny < 1 || g.x1 <= g.x0 || g.y1 <= g.y0)
    throw std::runtime_error("invalid raster extents in " + path);
  g.values.resize(static_cast<Eigen::Index>(g.nx) * g.ny);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) {
    if (!(in >> g.values[i])) throw std::runtime_error("raster value count short in " + path);
    if (g.values[i] <= 0.0) throw std::runtime_error("nonpositive raster value in " + path);
  }
  return g;
}

void write_raster(const std::string& path, const RasterGrid& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  out << g.nx << ' ' << g.ny << ' ' << g.x0 << ' ' << g.y0 << ' ' << g.x1 << ' ' << g.y1
      << '\n';
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      out << g.values[static_cast<Eigen::Index>(j) * g.nx + i];
      out << (i + 1 == g.nx ? '\n' : ' ');
    }
  }
}

namespace {
struct MeshCounts {
  int initial_tris, coarse_tris, fine_tris, fine_edges;
  int inherited, inherited_interior, spokes;
  double big_h, small_h;
};
MeshCounts counts(const MeshHierarchy& h) {
  MeshCounts c;
  c.initial_tris = static_cast<int>(h.initial.triangles.size());
  c.coarse_tris = static_cast<int>(h.coarse.triangles.size());
  c.fine_tris = static_cast<int>(h.fine.triangles.size());
  c.fine_edges = static_cast<int>(h.fine.edges.size());
  c.inherited = static_cast<int>(h.edges.inherited.size());
  c.inherited_interior = static_cast<int>(h.edges.inherited_interior.size());
  c.spokes = static_cast<int>(h.edges.spokes.size());
  c.big_h = h.n > 0 ? 1.0 / h.n : 0.0;
  c.small_h = h.n > 0 ? 1.0 / (h.n * (1 << h.r)) : 0.0;
  return c;
}
}  // namespace

std::string mesh_report_text(const MeshHierarchy& h, const Spaces* s) {
  MeshCounts c = counts(h);
  std::ostringstream out;
  out << "staggered mesh hierarchy (n=" << h.n << ", r=" << h.r << ")\n"
      << "  initial triangles:        " << c.initial_tris << "\n"
      << "  coarse triangles:         " << c.coarse_tris << "\n"
      << "  fine triangles:           " << c.fine_tris << "\n"
      << "  fine edges:               " << c.fine_edges << "\n"
      << "  inherited coarse edges:   " << c.inherited << " (" << c.inherited_interior
      << " interior)\n"
      << "  centroid spokes:          " << c.spokes << "\n"
      << "  coarse mesh size H:       " << c.big_h << "\n"
      << "  fine mesh size h:         " << c.small_h << "\n";
  if (s) {
    out << "  velocity dofs (coupled):  " << s->rt0.n_dofs << "\n"
        << "  velocity dofs (released): " << s->vhat.n_dofs << "\n"
        << "  penalty trace dofs:       " << s->penalty.n_total() << " ("
        << s->penalty.n_active() << " active)\n"
        << "  pressure dofs:            " << c.fine_tris + s->penalty.n_active() << "\n";
  }
  return out.str();
}

std::string mesh_report_kv(const MeshHierarchy& h, const Spaces* s) {
  MeshCounts c = counts(h);
  std::ostringstream out;
  out.precision(17);
  out << "n=" << h.n << "\nr=" << h.r << "\ninitial_triangles=" << c.initial_tris
      << "\ncoarse_triangles=" << c.coarse_tris << "\nfine_triangles=" << c.fine_tris
      << "\nfine_edges=" << c.fine_edges << "\nedges_inherited=" << c.inherited
      << "\nedges_inherited_interior=" << c.inherited_interior
      << "\nedges_spoke=" << c.spokes << "\nH=" << c.big_h << "\nh=" << c.small_h << "\n";
  if (s) {
    out << "velocity_dofs_coupled=" << s->rt0.n_dofs
        << "\nvelocity_dofs=" << s->vhat.n_dofs
        << "\npenalty_dofs=" << s->penalty.n_total()
        << "\npenalty_dofs_active=" << s->penalty.n_active()
        << "\npressure_dofs=" << c.fine_tris + s->penalty.n_active() << "\n";
  }
  return out.str();
}

std::vector<std::pair<std::string, std::string>> read_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

void write_geometry(const std::string& path, const FineMesh& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  out << f.vertices.size() << "\n";
  for (const auto& v : f.vertices) out << v.x << ' ' << v.y << '\n';
  out << f.triangles.size() << "\n";
  for (const auto& t : f.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void write_energy_trace(const std::string& path, const History& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  for (const auto& row : h.energy)
    out << static_cast<long>(row[0]) << ' ' << row[1] << ' ' << row[2] << ' ' << row[3]
        << ' ' << row[4] << '\n';
}

std::vector<std::array<double, 5>> read_energy_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::array<double, 5>> rows;
  std::array<double, 5> row{};
  while (in >> row[0] >> row[1] >> row[2] >> row[3] >> row[4]) rows.push_back(row);
  return rows;
}

void write_field_text(const std::string& path, const Vec& v) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  out << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
}

Vec read_field_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Eigen::Index n;
  if (!(in >> n)) throw std::runtime_error("malformed field file " + path);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(in >> v[i])) throw std::runtime_error("field file short " + path);
  return v;
}

void write_vtk_pressure(const std::string& path, const FineMesh& f, const Vec& cell_values,
                        const std::string& name) {
  if (cell_values.size() < static_cast<Eigen::Index>(f.triangles.size()))
    throw std::invalid_argument("need one value per fine triangle");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# vtk DataFile Version 3.0\n"
      << "mswave field\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out.precision(12);
  out << "POINTS " << f.vertices.size() << " double\n";
  for (const auto& v : f.vertices) out << v.x << ' ' << v.y << " 0\n";
  out << "CELLS " << f.triangles.size() << ' ' << 4 * f.triangles.size() << '\n';
  for (const auto& t : f.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << f.triangles.size() << '\n';
  for (size_t i = 0; i < f.triangles.size(); ++i) out << "5\n";
  out << "CELL_DATA " << f.triangles.size() << '\n'
      << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
  for (size_t i = 0; i < f.triangles.size(); ++i) out << cell_values[i] << '\n';
}

std::uint64_t file_checksum(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + path);
  std::uint64_t hash = 1469598103934665603ULL;
  unsigned char buf[65536];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof(buf), fp)) > 0)
    for (size_t i = 0; i < got; ++i) {
      hash ^= buf[i];
      hash *= 1099511628211ULL;
    }
  std::fclose(fp);
  return hash;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << content;
}

}  // namespace mswave
