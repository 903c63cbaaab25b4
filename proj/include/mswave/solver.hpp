#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mswave/basis.hpp"
#include "mswave/fem.hpp"
#include "mswave/linalg.hpp"
#include "mswave/medium.hpp"
#include "mswave/mesh.hpp"
#include "mswave/types.hpp"

namespace mswave {

/// Reduced operators of the multiscale scheme. Both masses are factorized
/// block-diagonally; the velocity blocks are the initial triangles.
struct ReducedSystem {
  BlockDiagonalOperator velocity_mass;
  BlockDiagonalOperator pressure_mass;
  SparseMat coupling;    // pressure rows x velocity cols: [divergence; -jump]
  SparseMat coupling_t;
  int n_v = 0, n_q = 0;
};

/// Cross-block velocity entries above 1e-14 abort: they would falsify the
/// block structure the stepping relies on.
ReducedSystem reduce_system(const OfflineSpace& space, const AssembledForms& forms);

/// Staggered state: velocity at step*dt, pressure at (step+1/2)*dt.
struct WaveState {
  Vec velocity;
  Vec pressure;
  long step = 0;
  double dt = 0.0;
  std::vector<std::array<double, 5>> energy_trace;  // step, time, Ev, Ep, Etot
};

/// One explicit update; load_next is the reduced load at (step+1)*dt.
void leapfrog_step(const ReducedSystem& sys, WaveState& st, const Vec& load_next);

double stable_dt(const ReducedSystem& sys, double safety = 0.9);

struct TimeOptions {
  double T = 0.2;
  double safety = 0.9;
  double dt = 0.0;        // 0: derive from the stability estimate
  int sample_every = 0;   // 0: record only the final state
  bool record_energy = true;
};

struct History {
  double dt = 0.0;
  long n_steps = 0;
  std::vector<long> sample_steps;
  std::vector<Vec> velocity;  // at sample_step * dt
  std::vector<Vec> pressure;  // at (sample_step + 1/2) * dt
  std::vector<std::array<double, 5>> energy;  // step, time, Ev, Ep, Etot
  Vec final_velocity, final_pressure;
};

using TimeFactor = std::function<double(double)>;

/// Generic leap-frog driver over abstract mass solves.
struct LeapfrogOps {
  std::function<Vec(const Vec&)> vmass_solve, pmass_solve;
  std::function<Vec(const Vec&)> vmass_apply, pmass_apply;
  const SparseMat* coupling = nullptr;
  const SparseMat* coupling_t = nullptr;
  int n_v = 0, n_q = 0;
};

LeapfrogOps make_ops(const ReducedSystem& sys);

History run_leapfrog(const LeapfrogOps& ops, const Vec& spatial_load,
                     const TimeFactor& time_factor, const TimeOptions& opts,
                     const Vec* v0 = nullptr, const Vec* p0 = nullptr);

double stable_dt(const LeapfrogOps& ops, double safety = 0.9);

/// The decoupled fine scheme, integrated with the same leap-frog.
struct FineSystem {
  Spaces spaces;
  AssembledForms forms;
  SparseMat coupling, coupling_t;
  std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> vmass_llt;
  Vec pmass_inv;
  LeapfrogOps ops() const;
};

FineSystem build_fine_system(const MeshHierarchy& h, const MediumField& med);

History run_fine_reference(const MeshHierarchy& h, const MediumField& med,
                           const SourceConfig& src, const TimeOptions& opts);

/// Classical coupled RT0 scheme: one global SPD mass solve per velocity update.
History run_coupled_rt0(const MeshHierarchy& h, const MediumField& med,
                        const SourceConfig& src, const TimeOptions& opts);

// ---------------------------------------------------------------------------
// absorbing layer

struct PmlConfig {
  int width = 10;           // damping width in fine cells
  double exponent = 2.0;    // polynomial damping profile
  double reflection = 1e-3; // target theoretical reflection coefficient
};

/// Hybrid system on the padded domain: multiscale basis inside the unit
/// square, the plain fine scheme in the surrounding layer, weak flux matching
/// through per-fine-edge penalty traces on the interface.
struct PmlSystem {
  ExtendedHierarchy ext;
  MediumField medium;
  Spaces spaces;
  AssembledForms forms;
  OfflineSpace space;
  PmlConfig cfg;
  Vec sigma_x, sigma_y;        // damping profiles per fine element
  SparseMat reduced_vmass, reduced_vdamp;
  SparseMat coupling, coupling_t;
  BlockDiagonalOperator pressure_mass;
  // split-field bookkeeping: reduced pressure rows that are layer constants
  std::vector<int> damped_rows;      // reduced row ids
  std::vector<int> damped_elements;  // fine element per damped row
  SparseMat fine_vmass_core;         // kappa mass restricted to core elements
  Vec fine_pmass_core;               // rho mass restricted to core (diag)
  int n_v = 0, n_q = 0;
};

PmlSystem build_pml_system(int n, int r, const PmlConfig& cfg,
                           const std::function<MediumField(const FineMesh&)>& medium_gen,
                           int boundary_count, int interior_count, int threads = 1);

struct PmlRunResult {
  History hist;
  std::vector<std::array<double, 3>> interior_energy;  // step, time, E
  double peak_interior_energy = 0.0;
  double final_interior_energy = 0.0;
  Vec final_velocity_fine, final_pressure_fine;  // prolonged to the fine spaces
};

/// use_damping=false runs the same hybrid system with the damping terms
/// dropped (the degenerate sigma=0 configuration).
PmlRunResult run_pml(const PmlSystem& sys, const SourceConfig& src,
                     const TimeOptions& opts, bool use_damping = true);

/// Reference for the degenerate case: the hybrid system integrated by the
/// standard undamped driver (reflecting enlarged domain).
PmlRunResult run_pml_reflecting(const PmlSystem& sys, const SourceConfig& src,
                                const TimeOptions& opts);

}  // namespace mswave
