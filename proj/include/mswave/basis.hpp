#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mswave/fem.hpp"
#include "mswave/linalg.hpp"
#include "mswave/medium.hpp"
#include "mswave/mesh.hpp"
#include "mswave/types.hpp"

namespace mswave {

/// Factorized local mixed solver on one coarse element: prescribed boundary
/// fluxes, per-element divergence targets, zero-mean pressure gauge. Velocity
/// is eliminated by a dense Cholesky of the interior mass; the pressure Schur
/// complement is solved SPD after a rank-one mean shift.
class LocalPatchSolver {
 public:
  LocalPatchSolver(const FineMesh& f, const MediumField& med, int coarse_tri);

  struct Result {
    Vec interior_flux;  // per interior fine edge, global-normal convention
    Vec pressure;       // per element, zero mean
  };
  // boundary_flux: one value per boundary local edge (global-normal trace);
  // div_rhs: per element, the target of the divergence constraint times area
  Result solve(const Vec& boundary_flux, const Vec& div_rhs) const;

  const std::vector<int>& elements() const { return elements_; }
  const std::vector<int>& interior_edges() const { return interior_edges_; }
  const std::vector<int>& boundary_edges() const { return boundary_edges_; }
  const Vec& areas() const { return areas_; }
  const Vec& rho_weights() const { return rho_weights_; }

  // kappa inner product of two local fields given as (boundary, interior) pairs
  double kappa_inner(const Vec& bnd_u, const Vec& int_u, const Vec& bnd_v,
                     const Vec& int_v) const;

  // pieces for the element eigenproblem
  Mat divergence_on_interior() const;           // rows: elements, cols: interior edges
  Mat interior_mass_solve(const Mat& rhs) const;

  int local_boundary_index(int fine_edge) const;  // -1 if not a boundary edge

 private:
  int n_loc(int fine_edge) const;

  std::vector<int> elements_;
  std::vector<int> local_edges_;        // all fine edges of the patch
  std::vector<int> edge_local_id_;      // dense map fine edge -> local id (scoped)
  std::vector<int> interior_edges_, boundary_edges_;
  std::vector<int> interior_local_, boundary_local_;  // local ids
  std::vector<int> local_kind_;         // 0 interior, 1 boundary (by local id)
  std::vector<int> local_pos_;          // position within its kind list
  // per element: signed kappa-weighted 3x3 mass and the three local edge ids
  std::vector<Mat> elem_mass_;
  std::vector<std::array<int, 3>> elem_local_edges_;
  Mat b_interior_, b_boundary_;  // divergence coupling split by edge kind
  Eigen::LLT<Mat> mass_llt_;     // interior kappa mass
  Eigen::LLT<Mat> schur_llt_;    // mean-shifted pressure Schur complement
  Vec areas_, rho_weights_;
};

/// One multiscale velocity family on a coarse edge side (or on the whole
/// patch when the edge stays coupled).
struct EdgeFunctionGroup {
  int coarse_tri = -1;    // -1 for a merged (coupled) group
  int initial_tri = -1;
  std::vector<int> dofs;          // decoupled-space dof ids
  std::vector<int> trace_dofs;    // dof per fine edge of the coarse edge
  Vec unit_flux;                  // constant-trace basis values (per dofs)
  Mat modes;                      // spectral basis values, dofs x N
  Vec aux_pressure;               // local pressure of the constant-trace solve
};

struct EdgeBasisEntry {
  int edge = -1;
  int n_snapshots = 0;            // dimension of the zero-mean trace space
  Vec eigenvalues;                // ascending, one per snapshot
  std::vector<int> fine_edges;    // fine edges on the coarse edge, ordered
  Vec alpha;                      // +-1: fine-edge normal vs coarse-edge normal
  Mat trace;                      // mode traces w.r.t. the coarse normal, m x N
  double side_sign[2] = {0, 0};   // coarse-normal outward sign per group
  std::vector<EdgeFunctionGroup> groups;  // 2 when decoupled, else 1
};

struct ElementBasisEntry {
  int coarse_tri = -1;
  int initial_tri = -1;
  int n_modes = 0;                // one less than the element count
  Vec eigenvalues;                // ascending
  std::vector<int> velocity_dofs; // interior fine-edge dofs
  std::vector<int> elements;      // fine elements of the coarse element
  Mat velocity;                   // velocity_dofs x n_modes
  Mat pressure;                   // elements x n_modes, rho-orthonormal, zero mean
};

/// Full spectra for every coarse edge and element; selection happens later.
struct OfflineBasis {
  std::vector<EdgeBasisEntry> edges;
  std::vector<ElementBasisEntry> elements;
};

EdgeBasisEntry build_edge_entry(const MeshHierarchy& h, const MediumField& med,
                                const Spaces& s, int edge);
ElementBasisEntry build_element_entry(const MeshHierarchy& h, const MediumField& med,
                                      const Spaces& s, int coarse_tri);

/// Assembled matrices of the two local spectral problems, for verification.
struct SpectralProblem {
  SymMatrix a, b;
};
SpectralProblem edge_spectral_matrices(const MeshHierarchy& h, const MediumField& med,
                                       const Spaces& s, int edge);
SpectralProblem element_spectral_matrices(const MeshHierarchy& h, const MediumField& med,
                                          const Spaces& s, int coarse_tri);

/// Build the whole offline basis; edge and element problems are independent,
/// so they run on a deterministic parallel map when threads > 1.
OfflineBasis build_offline_basis(const MeshHierarchy& h, const MediumField& med,
                                 const Spaces& s, int threads = 1);
/// Restricted variant for hybrid runs: only the listed entities are built.
OfflineBasis build_offline_basis(const MeshHierarchy& h, const MediumField& med,
                                 const Spaces& s, const std::vector<int>& edge_ids,
                                 const std::vector<int>& elem_ids, int threads);

struct Selection {
  std::vector<int> edge_modes;     // spectral modes kept per coarse edge
  std::vector<int> element_modes;  // modes kept per coarse element
};

/// Uniform selection: boundary_count = 1 + kept edge modes per edge,
/// interior_count = kept modes per element. Out-of-range counts are rejected.
Selection uniform_selection(const OfflineBasis& basis, int boundary_count,
                            int interior_count);

/// The selected multiscale spaces as sparse coefficient matrices over the
/// fine decoupled spaces, with bookkeeping for interpolation and reduction.
struct OfflineSpace {
  SparseMat velocity;  // fine velocity dofs x n_velocity_basis
  SparseMat pressure;  // fine pressure dofs x n_pressure_basis
  std::vector<int> velocity_block;  // initial triangle per velocity column

  struct VelEdgeGroupCols {
    int edge, group, unit_flux_col, first_mode_col, n_modes;
  };
  struct VelElemCols {
    int elem, first_mode_col, n_modes;
  };
  struct PresElemCols {
    int elem, const_col, first_mode_col, n_modes;
  };
  struct PresEdgeCols {
    int edge, const_col, first_mode_col, n_modes;
  };
  std::vector<VelEdgeGroupCols> vel_edge_groups;
  std::vector<VelElemCols> vel_elems;
  std::vector<PresElemCols> pres_elems;
  std::vector<PresEdgeCols> pres_edges;
  bool identity = false;
};

OfflineSpace assemble_offline_space(const MeshHierarchy& h, const Spaces& s,
                                    const OfflineBasis& basis, const Selection& sel);

/// Injection of the full fine decoupled spaces (no reduction).
OfflineSpace identity_offline_space(const Spaces& s, const AssembledForms& forms);

struct OfflineFileMeta {
  int n = 0, r = 0;
  std::uint64_t mesh_checksum = 0;
  std::uint64_t medium_checksum = 0;
};

void save_offline_basis(const std::string& path, const OfflineBasis& basis,
                        const OfflineFileMeta& meta);
OfflineBasis load_offline_basis(const std::string& path, OfflineFileMeta* meta);

}  // namespace mswave
