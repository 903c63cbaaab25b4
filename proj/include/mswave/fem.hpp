#pragma once

#include <vector>

#include "mswave/medium.hpp"
#include "mswave/mesh.hpp"
#include "mswave/types.hpp"

namespace mswave {

/// Lowest-order Raviart-Thomas space: one signed normal flux per fine edge.
struct Rt0Space {
  int n_dofs = 0;  // == number of fine edges
  std::vector<char> dof_on_boundary;
};

/// RT0 with the normal continuity released on fine edges lying on decoupled
/// coarse edges: those edges carry one dof per side. Dof values are always
/// normal traces with respect to the stored global edge normal.
struct DecoupledVelocitySpace {
  int n_dofs = 0;
  // per fine edge: dof id for each adjacency slot (aligned with
  // FineEdge::elems); equal on coupled edges, -1 where no element
  std::vector<std::array<int, 2>> edge_dof;
  std::vector<char> edge_decoupled;
  std::vector<int> dof_fine_edge;     // dof -> fine edge
  std::vector<int> dof_initial_tri;   // support block of each dof
};

/// Trace-value space enforcing weak normal continuity: one dof per fine edge
/// on an inherited coarse edge, extended into the adjacent triangles as the
/// unique linear function with that constant edge trace and zero mean.
struct PenaltyPressureSpace {
  std::vector<int> fine_edges;   // fine edges carrying a trace dof
  std::vector<char> is_active;   // dof participates in the zero-boundary space
  std::vector<int> active;       // active dof ids, in dof order
  std::vector<int> edge_to_dof;     // fine edge -> dof id or -1
  std::vector<int> edge_to_active;  // fine edge -> active index or -1
  int n_total() const { return static_cast<int>(fine_edges.size()); }
  int n_active() const { return static_cast<int>(active.size()); }
};

struct Spaces {
  Rt0Space rt0;
  DecoupledVelocitySpace vhat;
  PenaltyPressureSpace penalty;
  std::vector<char> edge_decoupled;  // per coarse edge
};

/// Standard construction: every interior inherited coarse edge is decoupled.
Spaces build_spaces(const FineMesh& f, const SkeletonBands& b, const EdgeSets& e);
/// Absorbing-layer variant: decouple exactly the flagged coarse edges.
Spaces build_spaces(const FineMesh& f, const SkeletonBands& b, const EdgeSets& e,
                    const std::vector<char>& decouple_edge);

/// All bilinear forms of the decoupled scheme. Pressure dofs are laid out as
/// [fine-element constants | active penalty traces].
struct AssembledForms {
  SparseMat velocity_mass;  // kappa-weighted, SPD, block per initial triangle
  Vec pressure_mass;        // rho-weighted, diagonal over the pressure layout
  SparseMat div_coupling;   // rows: fine elements; entries +- edge length
  SparseMat jump_coupling;  // rows: active penalty dofs
  int n_elem = 0;
  int n_penalty = 0;
  int n_vel = 0;
  int pressure_dim() const { return n_elem + n_penalty; }
};

AssembledForms assemble_forms(const FineMesh& f, const MediumField& med, const Spaces& s);

/// Classical coupled RT0 forms, for the comparison scheme.
struct CoupledForms {
  SparseMat velocity_mass;  // globally coupled
  Vec pressure_mass;        // diagonal, one constant per element
  SparseMat div_coupling;
  int n_elem = 0;
  int n_vel = 0;
};

CoupledForms assemble_coupled_forms(const FineMesh& f, const MediumField& med);

/// Element mass matrix for the outward-unit-flux RT0 basis; exact closed form.
Mat rt0_element_mass(const FineMesh& f, int tri);

/// Linear extension of constant trace values on the fine edges of a coarse
/// edge: on each adjacent triangle the function is c*(1 - 3*lambda_opp).
struct PenaltyExtension {
  std::vector<int> tri;
  std::vector<int> opp_local_vertex;
  std::vector<double> coeff;
};

PenaltyExtension project_penalty_trace(const FineMesh& f, int coarse_edge,
                                       const Vec& trace_values);

/// Load vector over the pressure layout: one-point (centroid) quadrature per
/// element; the zero-mean penalty extensions carry no centroid load.
Vec source_spatial_load(const FineMesh& f, const AssembledForms& forms,
                        const SourceConfig& s);

/// Coordinate-format text dump (row, col, value per line).
void dump_matrix(const SparseMat& m, const std::string& path);

}  // namespace mswave
