#pragma once

#include <array>
#include <string>
#include <vector>

#include "mswave/basis.hpp"
#include "mswave/fem.hpp"
#include "mswave/solver.hpp"
#include "mswave/types.hpp"

namespace mswave {

/// rho-weighted L2 norm of a pressure vector (elements + penalty traces).
double q_norm(const Vec& pressure, const AssembledForms& forms);
/// kappa-weighted L2 norm of a velocity vector.
double v_norm(const Vec& velocity, const AssembledForms& forms);

/// Expansion coefficients of decoupled fine fields in the multiscale
/// families: per-edge-group trace mean and mode weights, per-element mean,
/// pressure-mode and velocity-mode weights.
struct InterpolantCoefficients {
  struct EdgeGroupCoeffs {
    int edge = -1, group = -1;
    double flux_mean = 0.0;   // of the velocity normal trace
    Vec flux_modes;           // length: snapshot count
  };
  struct EdgeTraceCoeffs {
    int edge = -1;
    double trace_mean = 0.0;  // of the penalty component
    Vec trace_modes;
  };
  struct ElementCoeffs {
    int elem = -1;
    double pressure_mean = 0.0;
    Vec pressure_modes;
    Vec velocity_modes;       // includes the eigenvalue weighting
  };
  std::vector<EdgeGroupCoeffs> edge_groups;
  std::vector<EdgeTraceCoeffs> edge_traces;
  std::vector<ElementCoeffs> elements;
};

InterpolantCoefficients expansion_coefficients(const Vec& velocity, const Vec& pressure,
                                               const MeshHierarchy& h, const Spaces& s,
                                               const AssembledForms& forms,
                                               const OfflineBasis& basis);

struct Interpolants {
  Vec velocity;  // over the decoupled velocity dofs
  Vec pressure;  // over the pressure layout (elements + penalty)
};

/// Truncated expansions: only the selected modes are kept.
Interpolants interpolate(const Vec& velocity, const Vec& pressure, const MeshHierarchy& h,
                         const Spaces& s, const AssembledForms& forms,
                         const OfflineBasis& basis, const Selection& sel);

/// The four orthogonality residuals of the truncation against the selected
/// space: max over basis test functions of the divergence and jump pairings.
std::array<double, 4> lemma_residuals(const Vec& velocity, const Vec& pressure,
                                      const MeshHierarchy& h, const Spaces& s,
                                      const AssembledForms& forms,
                                      const OfflineBasis& basis, const Selection& sel,
                                      const OfflineSpace& space);

struct ErrorReport {
  int boundary_count = 0, interior_count = 0;
  struct Sample {
    long step;
    double time, rel_p, rel_v;
  };
  std::vector<Sample> samples;
  double final_rel_p = 0.0, final_rel_v = 0.0;
};

/// Relative errors of the prolonged multiscale solution against the fine
/// reference at shared sample times. Histories must share the time grid.
ErrorReport compare_to_reference(const History& coarse, const OfflineSpace& space,
                                 const History& fine, const AssembledForms& forms);

void write_error_csv(const std::string& path, const std::vector<ErrorReport>& rows);
std::vector<std::array<double, 4>> read_error_csv(const std::string& path);

}  // namespace mswave
