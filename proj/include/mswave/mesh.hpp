#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace mswave {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }

/// Triangulation of the domain before the centroid subdivision.
struct InitialMesh {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW vertex indices
  std::vector<std::array<int, 2>> edges;      // vertex pairs, lo < hi
  std::vector<std::array<int, 2>> edge_triangles;  // adjacent triangles, -1 if none
  std::vector<char> edge_on_boundary;
  int grid_n = 0;  // structured generator parameter, 0 for other origins
};

/// Mesh obtained by splitting every initial triangle at its centroid.
struct CoarseMesh {
  std::vector<Point2> vertices;  // initial vertices followed by centroids
  std::vector<std::array<int, 3>> triangles;  // 3 children per parent, CCW
  std::vector<int> parent;                    // coarse triangle -> initial triangle
  int n_initial_vertices = 0;
};

// Coarse edges fall into two classes: edges inherited from the initial
// triangulation (the skeleton where velocity continuity is later relaxed)
// and the new centroid-vertex spokes created by the subdivision.
enum class EdgeClass { Inherited, Spoke };

struct CoarseEdge {
  int lo = -1, hi = -1;  // vertex ids, lo < hi
  EdgeClass cls = EdgeClass::Inherited;
  bool on_boundary = false;
  Point2 normal;   // unit normal: lo->hi tangent rotated by -90 degrees
  double length = 0.0;
  // adjacent coarse triangles: [0] the one the normal points out of,
  // [1] the one it points into; -1 if absent
  std::array<int, 2> elems{-1, -1};
  int initial_edge = -1;  // id in InitialMesh::edges for inherited edges
};

struct EdgeSets {
  std::vector<CoarseEdge> edges;
  std::vector<int> inherited;           // ids of inherited edges
  std::vector<int> inherited_interior;  // inherited edges not on the boundary
  std::vector<int> spokes;              // centroid-vertex edges (always interior)
};

struct FineEdge {
  int lo = -1, hi = -1;
  double length = 0.0;
  Point2 normal;                   // unit normal, same convention as CoarseEdge
  std::array<int, 2> elems{-1, -1};  // [0]: normal points out of, [1]: into
  int coarse_edge = -1;            // tag when the edge lies on a coarse edge
  bool on_boundary = false;
};

struct FineMesh {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW
  std::vector<FineEdge> edges;
  // per triangle: edge ids opposite each local vertex, and the sign telling
  // whether the stored edge normal is outward for this triangle
  std::vector<std::array<int, 3>> tri_edges;
  std::vector<std::array<int, 3>> tri_edge_sign;
  std::vector<int> coarse_parent;   // fine triangle -> coarse triangle
  std::vector<int> initial_parent;  // fine triangle -> initial triangle
  std::vector<double> area;
  // per coarse edge: the fine edges lying on it, ordered from the lo vertex
  std::vector<std::vector<int>> coarse_edge_fine_edges;
  int levels = 0;
};

/// Fine elements touching the inherited skeleton.
struct SkeletonBands {
  std::vector<int> band_elements;             // fine triangles with an edge on any inherited edge
  std::vector<std::vector<int>> edge_band;    // per coarse edge: fine triangles with an edge on it
                                              // (filled for inherited edges, empty for spokes)
};

/// The one or two coarse elements sharing a coarse edge.
struct EdgePatch {
  int edge = -1;
  std::array<int, 2> elems{-1, -1};
  int count = 0;
};

InitialMesh build_structured_initial_mesh(int n);
// Structured generator over an arbitrary axis-aligned box of nx-by-ny square
// cells; used for the absorbing-layer extension.
InitialMesh build_structured_initial_mesh(int nx, int ny, Point2 lo, double cell);

std::pair<CoarseMesh, EdgeSets> subdivide_by_centroid(const InitialMesh& m);

FineMesh refine_uniform(const CoarseMesh& c, const EdgeSets& e, int levels);

SkeletonBands build_skeleton_bands(const FineMesh& f, const EdgeSets& e);

EdgePatch edge_patch(const EdgeSets& e, int edge);

double triangle_area(const std::vector<Point2>& verts, const std::array<int, 3>& tri);
Point2 triangle_centroid(const std::vector<Point2>& verts, const std::array<int, 3>& tri);
Point2 fine_centroid(const FineMesh& f, int tri);

/// Everything built together; meshes are immutable once constructed.
struct MeshHierarchy {
  InitialMesh initial;
  CoarseMesh coarse;
  EdgeSets edges;
  FineMesh fine;
  SkeletonBands bands;
  int n = 0;
  int r = 0;
};

MeshHierarchy build_hierarchy(int n, int r);

/// Hierarchy over the unit square padded by `pad_cells` initial cells per side.
struct ExtendedHierarchy {
  MeshHierarchy mesh;
  std::vector<char> initial_in_core;  // per initial triangle: inside the unit square
  int pad_cells = 0;
};

ExtendedHierarchy build_extended_hierarchy(int n, int r, int pad_cells);

std::uint64_t mesh_checksum(const MeshHierarchy& h);

}  // namespace mswave
