#include "mswave/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mswave {

namespace {

std::array<int, 2> ordered(int a, int b) {
  return a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
}

// Unit normal of the segment lo->hi: tangent rotated clockwise.
Point2 edge_normal(Point2 plo, Point2 phi, double len) {
  Point2 t = phi - plo;
  return {t.y / len, -t.x / len};
}

// Returns +1 if the edge normal is outward for a CCW triangle containing
// the edge (lo,hi), -1 otherwise.
int outward_sign(const std::vector<Point2>& verts, const std::array<int, 3>& tri,
                 int lo, int hi, Point2 normal) {
  // the vertex opposite the edge
  int opp = -1;
  for (int v : tri)
    if (v != lo && v != hi) opp = v;
  Point2 mid = 0.5 * (verts[lo] + verts[hi]);
  Point2 to_opp = verts[opp] - mid;
  return dot(to_opp, normal) < 0.0 ? +1 : -1;
}

}  // namespace

double triangle_area(const std::vector<Point2>& verts, const std::array<int, 3>& tri) {
  Point2 a = verts[tri[0]], b = verts[tri[1]], c = verts[tri[2]];
  return 0.5 * cross(b - a, c - a);
}

Point2 triangle_centroid(const std::vector<Point2>& verts, const std::array<int, 3>& tri) {
  Point2 a = verts[tri[0]], b = verts[tri[1]], c = verts[tri[2]];
  return (1.0 / 3.0) * (a + b + c);
}

Point2 fine_centroid(const FineMesh& f, int tri) {
  return triangle_centroid(f.vertices, f.triangles[tri]);
}

InitialMesh build_structured_initial_mesh(int nx, int ny, Point2 lo, double cell) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("subdivision count must be >= 1");
  InitialMesh m;
  m.grid_n = (nx == ny) ? nx : 0;
  const int vx = nx + 1;
  m.vertices.reserve(static_cast<size_t>(vx) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.push_back({lo.x + cell * i, lo.y + cell * j});
  auto vid = [&](int i, int j) { return j * vx + i; };
  // each cell split by the lower-left to upper-right diagonal
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int v00 = vid(i, j), v10 = vid(i + 1, j);
      int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      m.triangles.push_back({v00, v10, v11});
      m.triangles.push_back({v00, v11, v01});
    }
  }
  // edge table
  std::map<std::array<int, 2>, int> edge_id;
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    for (int k = 0; k < 3; ++k) {
      auto key = ordered(tri[k], tri[(k + 1) % 3]);
      auto it = edge_id.find(key);
      if (it == edge_id.end()) {
        edge_id.emplace(key, static_cast<int>(m.edges.size()));
        m.edges.push_back(key);
        m.edge_triangles.push_back({static_cast<int>(t), -1});
      } else {
        m.edge_triangles[it->second][1] = static_cast<int>(t);
      }
    }
  }
  m.edge_on_boundary.resize(m.edges.size());
  for (size_t e = 0; e < m.edges.size(); ++e)
    m.edge_on_boundary[e] = (m.edge_triangles[e][1] < 0);
  return m;
}

InitialMesh build_structured_initial_mesh(int n) {
  return build_structured_initial_mesh(n, n, Point2{0.0, 0.0}, 1.0 / n);
}

std::pair<CoarseMesh, EdgeSets> subdivide_by_centroid(const InitialMesh& m) {
  CoarseMesh c;
  c.vertices = m.vertices;
  c.n_initial_vertices = static_cast<int>(m.vertices.size());
  c.triangles.reserve(3 * m.triangles.size());
  c.parent.reserve(3 * m.triangles.size());
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    if (triangle_area(m.vertices, tri) <= 0.0)
      throw std::invalid_argument("degenerate or misoriented initial triangle");
    int g = static_cast<int>(c.vertices.size());
    c.vertices.push_back(triangle_centroid(m.vertices, tri));
    for (int k = 0; k < 3; ++k) {
      c.triangles.push_back({g, tri[k], tri[(k + 1) % 3]});
      c.parent.push_back(static_cast<int>(t));
    }
  }

  // map from initial edge key to its id, for tagging inherited edges
  std::map<std::array<int, 2>, int> initial_edge_of;
  for (size_t e = 0; e < m.edges.size(); ++e) initial_edge_of.emplace(m.edges[e], static_cast<int>(e));

  EdgeSets es;
  std::map<std::array<int, 2>, int> edge_id;
  for (size_t t = 0; t < c.triangles.size(); ++t) {
    const auto& tri = c.triangles[t];
    for (int k = 0; k < 3; ++k) {
      auto key = ordered(tri[k], tri[(k + 1) % 3]);
      int id;
      auto it = edge_id.find(key);
      if (it == edge_id.end()) {
        id = static_cast<int>(es.edges.size());
        edge_id.emplace(key, id);
        CoarseEdge ce;
        ce.lo = key[0];
        ce.hi = key[1];
        Point2 plo = c.vertices[ce.lo], phi = c.vertices[ce.hi];
        ce.length = std::sqrt(dot(phi - plo, phi - plo));
        ce.normal = edge_normal(plo, phi, ce.length);
        bool inherited = ce.lo < c.n_initial_vertices && ce.hi < c.n_initial_vertices;
        ce.cls = inherited ? EdgeClass::Inherited : EdgeClass::Spoke;
        if (inherited) ce.initial_edge = initial_edge_of.at(key);
        es.edges.push_back(ce);
      } else {
        id = it->second;
      }
      CoarseEdge& ce = es.edges[id];
      int slot = outward_sign(c.vertices, tri, ce.lo, ce.hi, ce.normal) > 0 ? 0 : 1;
      ce.elems[slot] = static_cast<int>(t);
    }
  }
  for (size_t e = 0; e < es.edges.size(); ++e) {
    CoarseEdge& ce = es.edges[e];
    ce.on_boundary = (ce.elems[0] < 0 || ce.elems[1] < 0);
    if (ce.cls == EdgeClass::Inherited) {
      es.inherited.push_back(static_cast<int>(e));
      if (!ce.on_boundary) es.inherited_interior.push_back(static_cast<int>(e));
    } else {
      es.spokes.push_back(static_cast<int>(e));
      if (ce.on_boundary) throw std::logic_error("spoke edge on boundary");
    }
  }
  return {std::move(c), std::move(es)};
}

FineMesh refine_uniform(const CoarseMesh& c, const EdgeSets& e, int levels) {
  if (levels < 0) throw std::invalid_argument("refinement level must be >= 0");

  std::vector<Point2> verts = c.vertices;
  std::vector<std::array<int, 3>> tris = c.triangles;
  std::vector<int> parent(tris.size());
  for (size_t t = 0; t < tris.size(); ++t) parent[t] = static_cast<int>(t);

  // vertex pairs lying on a coarse edge, with the edge id
  std::map<std::array<int, 2>, int> tag;
  for (size_t g = 0; g < e.edges.size(); ++g)
    tag.emplace(ordered(e.edges[g].lo, e.edges[g].hi), static_cast<int>(g));

  for (int l = 0; l < levels; ++l) {
    std::map<std::array<int, 2>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = ordered(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      int id = static_cast<int>(verts.size());
      verts.push_back(0.5 * (verts[a] + verts[b]));
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    std::vector<int> next_parent;
    next.reserve(4 * tris.size());
    next_parent.reserve(4 * tris.size());
    for (size_t t = 0; t < tris.size(); ++t) {
      auto [a, b, cc] = tris[t];
      int mab = mid(a, b), mbc = mid(b, cc), mca = mid(cc, a);
      next.push_back({a, mab, mca});
      next.push_back({mab, b, mbc});
      next.push_back({mca, mbc, cc});
      next.push_back({mab, mbc, mca});
      for (int k = 0; k < 4; ++k) next_parent.push_back(parent[t]);
    }
    // propagate coarse-edge tags to the two halves of every tagged segment
    std::map<std::array<int, 2>, int> next_tag;
    for (const auto& [key, g] : tag) {
      auto it = midpoint.find(key);
      if (it == midpoint.end()) throw std::logic_error("tagged segment was not split");
      int m = it->second;
      next_tag.emplace(ordered(key[0], m), g);
      next_tag.emplace(ordered(m, key[1]), g);
    }
    tris = std::move(next);
    parent = std::move(next_parent);
    tag = std::move(next_tag);
  }

  FineMesh f;
  f.levels = levels;
  f.vertices = std::move(verts);
  f.triangles = std::move(tris);
  f.coarse_parent = std::move(parent);
  f.initial_parent.resize(f.triangles.size());
  f.area.resize(f.triangles.size());
  f.tri_edges.resize(f.triangles.size());
  f.tri_edge_sign.resize(f.triangles.size());
  for (size_t t = 0; t < f.triangles.size(); ++t) {
    f.initial_parent[t] = c.parent[f.coarse_parent[t]];
    f.area[t] = triangle_area(f.vertices, f.triangles[t]);
    if (f.area[t] <= 0.0) throw std::logic_error("refinement produced a degenerate triangle");
  }

  std::map<std::array<int, 2>, int> edge_id;
  for (size_t t = 0; t < f.triangles.size(); ++t) {
    const auto& tri = f.triangles[t];
    for (int k = 0; k < 3; ++k) {
      // edge opposite local vertex k
      int va = tri[(k + 1) % 3], vb = tri[(k + 2) % 3];
      auto key = ordered(va, vb);
      int id;
      auto it = edge_id.find(key);
      if (it == edge_id.end()) {
        id = static_cast<int>(f.edges.size());
        edge_id.emplace(key, id);
        FineEdge fe;
        fe.lo = key[0];
        fe.hi = key[1];
        Point2 plo = f.vertices[fe.lo], phi = f.vertices[fe.hi];
        fe.length = std::sqrt(dot(phi - plo, phi - plo));
        fe.normal = edge_normal(plo, phi, fe.length);
        auto tg = tag.find(key);
        fe.coarse_edge = (tg == tag.end()) ? -1 : tg->second;
        f.edges.push_back(fe);
      } else {
        id = it->second;
      }
      FineEdge& fe = f.edges[id];
      int s = outward_sign(f.vertices, tri, fe.lo, fe.hi, fe.normal);
      fe.elems[s > 0 ? 0 : 1] = static_cast<int>(t);
      f.tri_edges[t][k] = id;
      f.tri_edge_sign[t][k] = s;
    }
  }
  for (auto& fe : f.edges) fe.on_boundary = (fe.elems[0] < 0 || fe.elems[1] < 0);

  // fine edges per coarse edge, ordered from the lo vertex
  f.coarse_edge_fine_edges.resize(e.edges.size());
  for (size_t fe = 0; fe < f.edges.size(); ++fe)
    if (f.edges[fe].coarse_edge >= 0)
      f.coarse_edge_fine_edges[f.edges[fe].coarse_edge].push_back(static_cast<int>(fe));
  for (size_t g = 0; g < e.edges.size(); ++g) {
    const CoarseEdge& ce = e.edges[g];
    Point2 origin = c.vertices[ce.lo];
    Point2 dir = c.vertices[ce.hi] - origin;
    auto param = [&](int fe) {
      Point2 m = 0.5 * (f.vertices[f.edges[fe].lo] + f.vertices[f.edges[fe].hi]);
      return dot(m - origin, dir);
    };
    std::sort(f.coarse_edge_fine_edges[g].begin(), f.coarse_edge_fine_edges[g].end(),
              [&](int a, int b) { return param(a) < param(b); });
  }
  return f;
}

SkeletonBands build_skeleton_bands(const FineMesh& f, const EdgeSets& e) {
  if (f.coarse_edge_fine_edges.size() != e.edges.size())
    throw std::invalid_argument("fine mesh does not match the coarse edge set");
  SkeletonBands b;
  b.edge_band.resize(e.edges.size());
  std::vector<char> in_band(f.triangles.size(), 0);
  for (int g : e.inherited) {
    for (int fe : f.coarse_edge_fine_edges[g]) {
      for (int t : f.edges[fe].elems) {
        if (t < 0) continue;
        b.edge_band[g].push_back(t);
        if (!in_band[t]) {
          in_band[t] = 1;
          b.band_elements.push_back(t);
        }
      }
    }
  }
  std::sort(b.band_elements.begin(), b.band_elements.end());
  return b;
}

EdgePatch edge_patch(const EdgeSets& e, int edge) {
  const CoarseEdge& ce = e.edges.at(edge);
  EdgePatch p;
  p.edge = edge;
  for (int t : ce.elems)
    if (t >= 0) p.elems[p.count++] = t;
  return p;
}

MeshHierarchy build_hierarchy(int n, int r) {
  MeshHierarchy h;
  h.n = n;
  h.r = r;
  h.initial = build_structured_initial_mesh(n);
  auto [coarse, edges] = subdivide_by_centroid(h.initial);
  h.coarse = std::move(coarse);
  h.edges = std::move(edges);
  h.fine = refine_uniform(h.coarse, h.edges, r);
  h.bands = build_skeleton_bands(h.fine, h.edges);
  return h;
}

ExtendedHierarchy build_extended_hierarchy(int n, int r, int pad_cells) {
  if (pad_cells < 1) throw std::invalid_argument("extension must be at least one cell wide");
  ExtendedHierarchy ext;
  ext.pad_cells = pad_cells;
  double cell = 1.0 / n;
  int total = n + 2 * pad_cells;
  MeshHierarchy& h = ext.mesh;
  h.n = n;
  h.r = r;
  h.initial = build_structured_initial_mesh(total, total, Point2{-pad_cells * cell, -pad_cells * cell}, cell);
  auto [coarse, edges] = subdivide_by_centroid(h.initial);
  h.coarse = std::move(coarse);
  h.edges = std::move(edges);
  h.fine = refine_uniform(h.coarse, h.edges, r);
  h.bands = build_skeleton_bands(h.fine, h.edges);
  ext.initial_in_core.resize(h.initial.triangles.size());
  for (size_t t = 0; t < h.initial.triangles.size(); ++t) {
    Point2 g = triangle_centroid(h.initial.vertices, h.initial.triangles[t]);
    ext.initial_in_core[t] = (g.x > 0.0 && g.x < 1.0 && g.y > 0.0 && g.y < 1.0);
  }
  return ext;
}

namespace {
void fnv_accumulate(std::uint64_t& hash, const void* data, size_t bytes) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < bytes; ++i) {
    hash ^= p[i];
    hash *= 1099511628211ULL;
  }
}
}  // namespace

std::uint64_t mesh_checksum(const MeshHierarchy& h) {
  std::uint64_t hash = 1469598103934665603ULL;
  fnv_accumulate(hash, &h.n, sizeof(h.n));
  fnv_accumulate(hash, &h.r, sizeof(h.r));
  for (const auto& v : h.fine.vertices) {
    fnv_accumulate(hash, &v.x, sizeof(double));
    fnv_accumulate(hash, &v.y, sizeof(double));
  }
  for (const auto& t : h.fine.triangles) fnv_accumulate(hash, t.data(), sizeof(int) * 3);
  return hash;
}

}  // namespace mswave
