#include "mswave/solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace mswave {

namespace {

SparseMat build_coupling(const AssembledForms& forms) {
  SparseMat c(forms.pressure_dim(), forms.n_vel);
  std::vector<Triplet> tr;
  tr.reserve(forms.div_coupling.nonZeros() + forms.jump_coupling.nonZeros());
  for (int r = 0; r < forms.div_coupling.outerSize(); ++r)
    for (SparseMat::InnerIterator it(forms.div_coupling, r); it; ++it)
      tr.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < forms.jump_coupling.outerSize(); ++r)
    for (SparseMat::InnerIterator it(forms.jump_coupling, r); it; ++it)
      tr.emplace_back(forms.n_elem + it.row(), it.col(), -it.value());
  c.setFromTriplets(tr.begin(), tr.end());
  return c;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// dense blocks of a (structurally) block-diagonal symmetric sparse matrix,
// discovered from its sparsity graph
BlockDiagonalOperator block_factorize_by_graph(const SparseMat& m) {
  const int n = static_cast<int>(m.rows());
  UnionFind uf(n);
  for (int r = 0; r < m.outerSize(); ++r)
    for (SparseMat::InnerIterator it(m, r); it; ++it)
      uf.unite(static_cast<int>(it.row()), static_cast<int>(it.col()));
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);

  BlockDiagonalOperator op;
  std::vector<int> pos(n, -1);
  for (auto& [root, dofs] : groups) {
    (void)root;
    for (size_t i = 0; i < dofs.size(); ++i) pos[dofs[i]] = static_cast<int>(i);
    Mat dense = Mat::Zero(dofs.size(), dofs.size());
    for (int d : dofs)
      for (SparseMat::InnerIterator it(m, d); it; ++it)
        dense(pos[d], pos[it.col()]) = it.value();
    op.add_block(dofs, dense);
  }
  op.finalize(n);
  return op;
}

// dense blocks grouped by an explicit label per dof; off-block entries above
// the tolerance are construction bugs
BlockDiagonalOperator block_factorize_by_label(const SparseMat& m,
                                               const std::vector<int>& label,
                                               double tol) {
  const int n = static_cast<int>(m.rows());
  if (label.size() != static_cast<size_t>(n))
    throw std::invalid_argument("label size mismatch");
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[label[i]].push_back(i);
  std::vector<int> pos(n, -1);
  for (auto& [lbl, dofs] : groups) {
    (void)lbl;
    for (size_t i = 0; i < dofs.size(); ++i) pos[dofs[i]] = static_cast<int>(i);
  }
  std::map<int, Mat> dense;
  for (auto& [lbl, dofs] : groups) dense.emplace(lbl, Mat::Zero(dofs.size(), dofs.size()));
  for (int r = 0; r < m.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(m, r); it; ++it) {
      int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
      if (label[i] != label[j]) {
        if (std::abs(it.value()) > tol)
          throw std::logic_error("velocity mass couples distinct initial triangles");
        continue;
      }
      dense[label[i]](pos[i], pos[j]) = it.value();
    }
  }
  BlockDiagonalOperator op;
  for (auto& [lbl, dofs] : groups) op.add_block(dofs, dense[lbl]);
  op.finalize(n);
  return op;
}

long steps_for(double T, double dt) {
  long n = static_cast<long>(std::ceil(T / dt - 1e-9));
  return std::max<long>(n, 1);
}

void check_finite(const Vec& v, long step) {
  if (!v.allFinite())
    throw ConvergenceError("solution blew up at step " + std::to_string(step) +
                           " (time step too large?)");
}

}  // namespace

ReducedSystem reduce_system(const OfflineSpace& space, const AssembledForms& forms) {
  ReducedSystem sys;
  sys.n_v = static_cast<int>(space.velocity.cols());
  sys.n_q = static_cast<int>(space.pressure.cols());

  SparseMat c_fine = build_coupling(forms);
  SparseMat cv = c_fine * space.velocity;
  sys.coupling = SparseMat(space.pressure.transpose()) * cv;
  sys.coupling.prune(0.0);
  sys.coupling_t = SparseMat(sys.coupling.transpose());

  SparseMat mv = SparseMat(space.velocity.transpose()) * (forms.velocity_mass * space.velocity);
  sys.velocity_mass = block_factorize_by_label(mv, space.velocity_block, 1e-14);

  SparseMat mp = SparseMat(space.pressure.transpose()) *
                 (forms.pressure_mass.asDiagonal() * space.pressure);
  sys.pressure_mass = block_factorize_by_graph(mp);
  return sys;
}

void leapfrog_step(const ReducedSystem& sys, WaveState& st, const Vec& load_next) {
  st.velocity += st.dt * sys.velocity_mass.apply_inverse(sys.coupling_t * st.pressure);
  st.pressure += st.dt * sys.pressure_mass.apply_inverse(load_next - sys.coupling * st.velocity);
  st.step += 1;
  double ev = 0.5 * st.velocity.dot(sys.velocity_mass.apply(st.velocity));
  double ep = 0.5 * st.pressure.dot(sys.pressure_mass.apply(st.pressure));
  st.energy_trace.push_back({static_cast<double>(st.step), st.step * st.dt, ev, ep, ev + ep});
}

LeapfrogOps make_ops(const ReducedSystem& sys) {
  LeapfrogOps ops;
  ops.vmass_solve = [&sys](const Vec& b) { return sys.velocity_mass.apply_inverse(b); };
  ops.pmass_solve = [&sys](const Vec& b) { return sys.pressure_mass.apply_inverse(b); };
  ops.vmass_apply = [&sys](const Vec& x) { return sys.velocity_mass.apply(x); };
  ops.pmass_apply = [&sys](const Vec& x) { return sys.pressure_mass.apply(x); };
  ops.coupling = &sys.coupling;
  ops.coupling_t = &sys.coupling_t;
  ops.n_v = sys.n_v;
  ops.n_q = sys.n_q;
  return ops;
}

double stable_dt(const LeapfrogOps& ops, double safety) {
  const SparseMat& c = *ops.coupling;
  const SparseMat& ct = *ops.coupling_t;
  auto apply_a = [&](const Vec& x) -> Vec { return ct * ops.pmass_solve(c * x); };
  double lambda = estimate_spectral_radius(apply_a, ops.vmass_solve, ops.n_v);
  if (lambda <= 0.0) throw std::invalid_argument("degenerate wave operator");
  return safety * 2.0 / std::sqrt(lambda);
}

double stable_dt(const ReducedSystem& sys, double safety) {
  return stable_dt(make_ops(sys), safety);
}

History run_leapfrog(const LeapfrogOps& ops, const Vec& spatial_load,
                     const TimeFactor& time_factor, const TimeOptions& opts,
                     const Vec* v0, const Vec* p0) {
  History hist;
  double dt = opts.dt > 0.0 ? opts.dt : stable_dt(ops, opts.safety);
  long n_steps = steps_for(opts.T, dt);
  dt = opts.T / n_steps;
  hist.dt = dt;
  hist.n_steps = n_steps;

  Vec v = v0 ? *v0 : Vec::Zero(ops.n_v);
  Vec p = p0 ? *p0 : Vec::Zero(ops.n_q);
  if (v.size() != ops.n_v || p.size() != ops.n_q)
    throw std::invalid_argument("initial state sizes do not match the system");

  const SparseMat& c = *ops.coupling;
  const SparseMat& ct = *ops.coupling_t;
  const bool forced = spatial_load.size() > 0 && time_factor;

  auto record_energy = [&](long step) {
    if (!opts.record_energy) return;
    double ev = 0.5 * v.dot(ops.vmass_apply(v));
    double ep = 0.5 * p.dot(ops.pmass_apply(p));
    hist.energy.push_back({static_cast<double>(step), step * dt, ev, ep, ev + ep});
  };
  auto sample = [&](long step) {
    hist.sample_steps.push_back(step);
    hist.velocity.push_back(v);
    hist.pressure.push_back(p);
  };

  record_energy(0);
  if (opts.sample_every > 0) sample(0);
  for (long n = 0; n < n_steps; ++n) {
    v += dt * ops.vmass_solve(ct * p);
    if (forced) {
      double tf = time_factor((n + 1) * dt);
      p += dt * ops.pmass_solve(tf * spatial_load - c * v);
    } else {
      p += dt * ops.pmass_solve(-(c * v));
    }
    record_energy(n + 1);
    if (opts.sample_every > 0 && (n + 1) % opts.sample_every == 0 && n + 1 < n_steps)
      sample(n + 1);
    if ((n & 31) == 0) check_finite(v, n);
  }
  check_finite(v, n_steps);
  check_finite(p, n_steps);
  if (opts.sample_every > 0) sample(n_steps);
  hist.final_velocity = v;
  hist.final_pressure = p;
  return hist;
}

FineSystem build_fine_system(const MeshHierarchy& h, const MediumField& med) {
  FineSystem sys;
  sys.spaces = build_spaces(h.fine, h.bands, h.edges);
  sys.forms = assemble_forms(h.fine, med, sys.spaces);
  sys.coupling = build_coupling(sys.forms);
  sys.coupling_t = SparseMat(sys.coupling.transpose());
  Eigen::SparseMatrix<double> mv = sys.forms.velocity_mass;
  sys.vmass_llt = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
  sys.vmass_llt->compute(mv);
  if (sys.vmass_llt->info() != Eigen::Success)
    throw SpdError("fine velocity mass factorization failed");
  sys.pmass_inv = sys.forms.pressure_mass.cwiseInverse();
  return sys;
}

LeapfrogOps FineSystem::ops() const {
  LeapfrogOps ops;
  auto llt = vmass_llt;
  const AssembledForms* f = &forms;
  ops.vmass_solve = [llt](const Vec& b) -> Vec { return llt->solve(b); };
  ops.pmass_solve = [this](const Vec& b) -> Vec { return pmass_inv.asDiagonal() * b; };
  ops.vmass_apply = [f](const Vec& x) -> Vec { return f->velocity_mass * x; };
  ops.pmass_apply = [f](const Vec& x) -> Vec { return f->pressure_mass.asDiagonal() * x; };
  ops.coupling = &coupling;
  ops.coupling_t = &coupling_t;
  ops.n_v = forms.n_vel;
  ops.n_q = forms.pressure_dim();
  return ops;
}

History run_fine_reference(const MeshHierarchy& h, const MediumField& med,
                           const SourceConfig& src, const TimeOptions& opts) {
  FineSystem sys = build_fine_system(h, med);
  Vec spatial = source_spatial_load(h.fine, sys.forms, src);
  double f0 = src.f0;
  return run_leapfrog(sys.ops(), spatial, [f0](double t) { return ricker_time_factor(t, f0); },
                      opts);
}

History run_coupled_rt0(const MeshHierarchy& h, const MediumField& med,
                        const SourceConfig& src, const TimeOptions& opts) {
  CoupledForms forms = assemble_coupled_forms(h.fine, med);
  Eigen::SparseMatrix<double> mv = forms.velocity_mass;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(mv);
  if (llt.info() != Eigen::Success) throw SpdError("coupled velocity mass is not SPD");
  Vec pmass_inv = forms.pressure_mass.cwiseInverse();
  SparseMat c = forms.div_coupling;
  SparseMat ct = SparseMat(c.transpose());

  LeapfrogOps ops;
  ops.vmass_solve = [&llt](const Vec& b) -> Vec { return llt.solve(b); };
  ops.pmass_solve = [&pmass_inv](const Vec& b) -> Vec { return pmass_inv.asDiagonal() * b; };
  ops.vmass_apply = [&forms](const Vec& x) -> Vec { return forms.velocity_mass * x; };
  ops.pmass_apply = [&forms](const Vec& x) -> Vec {
    return forms.pressure_mass.asDiagonal() * x;
  };
  ops.coupling = &c;
  ops.coupling_t = &ct;
  ops.n_v = forms.n_vel;
  ops.n_q = forms.n_elem;

  Vec spatial(forms.n_elem);
  for (int t = 0; t < forms.n_elem; ++t)
    spatial[t] = ricker_spatial_factor(fine_centroid(h.fine, t), src) * h.fine.area[t];
  double f0 = src.f0;
  return run_leapfrog(ops, spatial, [f0](double t) { return ricker_time_factor(t, f0); },
                      opts);
}

// ---------------------------------------------------------------------------
// absorbing layer

namespace {

// element matrices of the directional products: int_tau phi_i,x phi_j,x
// and the y analogue, outward-unit-flux basis
void rt0_component_masses(const FineMesh& f, int tri, Mat& px, Mat& py) {
  const auto& t = f.triangles[tri];
  const double a = f.area[tri];
  Point2 pts[3] = {f.vertices[t[0]], f.vertices[t[1]], f.vertices[t[2]]};
  Point2 mid[3];
  for (int k = 0; k < 3; ++k) mid[k] = 0.5 * (pts[(k + 1) % 3] + pts[(k + 2) % 3]);
  px.resize(3, 3);
  py.resize(3, 3);
  for (int i = 0; i < 3; ++i) {
    double li = f.edges[f.tri_edges[tri][i]].length;
    for (int j = 0; j < 3; ++j) {
      double lj = f.edges[f.tri_edges[tri][j]].length;
      double accx = 0.0, accy = 0.0;
      for (int q = 0; q < 3; ++q) {
        accx += (mid[q].x - pts[i].x) * (mid[q].x - pts[j].x);
        accy += (mid[q].y - pts[i].y) * (mid[q].y - pts[j].y);
      }
      px(i, j) = li * lj / (12.0 * a) * accx;
      py(i, j) = li * lj / (12.0 * a) * accy;
    }
  }
}

}  // namespace

PmlSystem build_pml_system(int n, int r, const PmlConfig& cfg,
                           const std::function<MediumField(const FineMesh&)>& medium_gen,
                           int boundary_count, int interior_count, int threads) {
  if (cfg.width < 1) throw std::invalid_argument("layer width must be at least one cell");
  PmlSystem sys;
  sys.cfg = cfg;
  int per_side = 1 << r;
  int pad = (cfg.width + per_side - 1) / per_side;
  sys.ext = build_extended_hierarchy(n, r, pad);
  const MeshHierarchy& h = sys.ext.mesh;
  const FineMesh& f = h.fine;
  sys.medium = medium_gen(f);

  const auto& in_core = sys.ext.initial_in_core;
  auto side_core = [&](int coarse_tri) {
    return coarse_tri >= 0 && in_core[h.coarse.parent[coarse_tri]];
  };

  // edge classes: 2 = fully core, 1 = interface, 0 = layer
  std::vector<int> edge_class(h.edges.edges.size(), 0);
  for (size_t g = 0; g < h.edges.edges.size(); ++g) {
    const CoarseEdge& ce = h.edges.edges[g];
    int cores = 0, total = 0;
    for (int k : ce.elems)
      if (k >= 0) {
        ++total;
        cores += side_core(k) ? 1 : 0;
      }
    edge_class[g] = (cores == total) ? 2 : (cores > 0 ? 1 : 0);
  }
  std::vector<char> decouple(h.edges.edges.size(), 0);
  for (int g : h.edges.inherited_interior)
    if (edge_class[g] >= 1) decouple[g] = 1;
  sys.spaces = build_spaces(f, h.bands, h.edges, decouple);
  sys.forms = assemble_forms(f, sys.medium, sys.spaces);

  std::vector<int> edge_ids, elem_ids;
  for (size_t g = 0; g < h.edges.edges.size(); ++g)
    if (edge_class[g] >= 1) edge_ids.push_back(static_cast<int>(g));
  for (size_t k = 0; k < h.coarse.triangles.size(); ++k)
    if (side_core(static_cast<int>(k))) elem_ids.push_back(static_cast<int>(k));
  OfflineBasis basis = build_offline_basis(h, sys.medium, sys.spaces, edge_ids, elem_ids, threads);
  Selection sel = uniform_selection(basis, boundary_count, interior_count);

  // hybrid velocity space: multiscale columns on core supports, identity in the layer
  std::vector<Triplet> vt, pt;
  int vcol = 0;
  for (size_t e = 0; e < basis.edges.size(); ++e) {
    const EdgeBasisEntry& entry = basis.edges[e];
    if (entry.edge < 0) continue;
    int nm = sel.edge_modes[e];
    for (const EdgeFunctionGroup& grp : entry.groups) {
      if (!in_core[grp.initial_tri]) continue;
      for (size_t i = 0; i < grp.dofs.size(); ++i) {
        vt.emplace_back(grp.dofs[i], vcol, grp.unit_flux[i]);
        for (int j = 0; j < nm; ++j)
          vt.emplace_back(grp.dofs[i], vcol + 1 + j, grp.modes(i, j));
      }
      for (int j = 0; j <= nm; ++j) sys.space.velocity_block.push_back(grp.initial_tri);
      vcol += 1 + nm;
    }
  }
  for (size_t k = 0; k < basis.elements.size(); ++k) {
    const ElementBasisEntry& entry = basis.elements[k];
    if (entry.coarse_tri < 0) continue;
    int nm = sel.element_modes[k];
    for (int j = 0; j < nm; ++j) {
      for (size_t i = 0; i < entry.velocity_dofs.size(); ++i)
        vt.emplace_back(entry.velocity_dofs[i], vcol + j, entry.velocity(i, j));
      sys.space.velocity_block.push_back(entry.initial_tri);
    }
    vcol += nm;
  }
  for (int d = 0; d < sys.spaces.vhat.n_dofs; ++d) {
    if (in_core[sys.spaces.vhat.dof_initial_tri[d]]) continue;
    vt.emplace_back(d, vcol, 1.0);
    sys.space.velocity_block.push_back(sys.spaces.vhat.dof_initial_tri[d]);
    ++vcol;
  }
  sys.space.velocity.resize(sys.spaces.vhat.n_dofs, vcol);
  sys.space.velocity.setFromTriplets(vt.begin(), vt.end());

  const int n_elem = sys.forms.n_elem;
  int pcol = 0;
  for (size_t k = 0; k < basis.elements.size(); ++k) {
    const ElementBasisEntry& entry = basis.elements[k];
    if (entry.coarse_tri < 0) continue;
    int nm = sel.element_modes[k];
    for (size_t i = 0; i < entry.elements.size(); ++i) {
      pt.emplace_back(entry.elements[i], pcol, 1.0);
      for (int j = 0; j < nm; ++j)
        pt.emplace_back(entry.elements[i], pcol + 1 + j, entry.pressure(i, j));
    }
    pcol += 1 + nm;
  }
  for (size_t e = 0; e < basis.edges.size(); ++e) {
    const EdgeBasisEntry& entry = basis.edges[e];
    if (entry.edge < 0 || edge_class[e] != 2 || !decouple[e]) continue;
    int nm = sel.edge_modes[e];
    for (size_t i = 0; i < entry.fine_edges.size(); ++i) {
      int active = sys.spaces.penalty.edge_to_active[entry.fine_edges[i]];
      pt.emplace_back(n_elem + active, pcol, 1.0);
      for (int j = 0; j < nm; ++j)
        pt.emplace_back(n_elem + active, pcol + 1 + j, entry.trace(i, j));
    }
    pcol += 1 + nm;
  }
  // interface edges: identity penalty traces (per-fine-edge flux matching)
  for (size_t g = 0; g < h.edges.edges.size(); ++g) {
    if (edge_class[g] != 1 || !decouple[g]) continue;
    for (int fe : f.coarse_edge_fine_edges[g]) {
      int active = sys.spaces.penalty.edge_to_active[fe];
      pt.emplace_back(n_elem + active, pcol, 1.0);
      ++pcol;
    }
  }
  // layer elements: identity constants, the split-field unknowns
  for (int t = 0; t < n_elem; ++t) {
    if (in_core[f.initial_parent[t]]) continue;
    pt.emplace_back(t, pcol, 1.0);
    sys.damped_rows.push_back(pcol);
    sys.damped_elements.push_back(t);
    ++pcol;
  }
  sys.space.pressure.resize(sys.forms.pressure_dim(), pcol);
  sys.space.pressure.setFromTriplets(pt.begin(), pt.end());
  sys.n_v = vcol;
  sys.n_q = pcol;

  // damping profiles: the outermost `width` fine cells of the padding
  double cell = 1.0 / (static_cast<double>(n) * per_side);
  double L = cfg.width * cell;
  double lo = -pad * per_side * cell, hi = 1.0 + pad * per_side * cell;
  double start_lo = lo + L, start_hi = hi - L;
  sys.sigma_x = Vec::Zero(n_elem);
  sys.sigma_y = Vec::Zero(n_elem);
  double c_ref = 0.0;
  std::vector<double> dx(n_elem), dy(n_elem);
  for (int t = 0; t < n_elem; ++t) {
    Point2 c = fine_centroid(f, t);
    dx[t] = std::max({start_lo - c.x, c.x - start_hi, 0.0}) / L;
    dy[t] = std::max({start_lo - c.y, c.y - start_hi, 0.0}) / L;
    if (dx[t] > 0.0 || dy[t] > 0.0)
      c_ref = std::max(c_ref, 1.0 / std::sqrt(sys.medium.kappa[t] * sys.medium.rho[t]));
  }
  double sigma_max = (cfg.exponent + 1.0) * c_ref * std::log(1.0 / cfg.reflection) / (2.0 * L);
  for (int t = 0; t < n_elem; ++t) {
    sys.sigma_x[t] = sigma_max * std::pow(dx[t], cfg.exponent);
    sys.sigma_y[t] = sigma_max * std::pow(dy[t], cfg.exponent);
  }

  // velocity damping form: kappa-weighted directional masses where sigma > 0
  std::vector<Triplet> st;
  Mat px, py;
  for (int t = 0; t < n_elem; ++t) {
    if (sys.sigma_x[t] == 0.0 && sys.sigma_y[t] == 0.0) continue;
    rt0_component_masses(f, t, px, py);
    for (int i = 0; i < 3; ++i) {
      int fei = f.tri_edges[t][i];
      int slot_i = f.tri_edge_sign[t][i] > 0 ? 0 : 1;
      int di = sys.spaces.vhat.edge_dof[fei][slot_i];
      for (int j = 0; j < 3; ++j) {
        int fej = f.tri_edges[t][j];
        int slot_j = f.tri_edge_sign[t][j] > 0 ? 0 : 1;
        int dj = sys.spaces.vhat.edge_dof[fej][slot_j];
        double val = sys.medium.kappa[t] * f.tri_edge_sign[t][i] * f.tri_edge_sign[t][j] *
                     (sys.sigma_x[t] * px(i, j) + sys.sigma_y[t] * py(i, j));
        if (val != 0.0) st.emplace_back(di, dj, val);
      }
    }
  }
  SparseMat sv(sys.spaces.vhat.n_dofs, sys.spaces.vhat.n_dofs);
  sv.setFromTriplets(st.begin(), st.end());

  sys.coupling = SparseMat(sys.space.pressure.transpose()) *
                 (build_coupling(sys.forms) * sys.space.velocity);
  sys.coupling.prune(0.0);
  sys.coupling_t = SparseMat(sys.coupling.transpose());
  sys.reduced_vmass = SparseMat(sys.space.velocity.transpose()) *
                      (sys.forms.velocity_mass * sys.space.velocity);
  sys.reduced_vdamp =
      SparseMat(sys.space.velocity.transpose()) * (sv * sys.space.velocity);
  SparseMat mp = SparseMat(sys.space.pressure.transpose()) *
                 (sys.forms.pressure_mass.asDiagonal() * sys.space.pressure);
  sys.pressure_mass = block_factorize_by_graph(mp);

  // masked fine forms for the interior-energy diagnostic
  std::vector<Triplet> ct;
  for (int t = 0; t < n_elem; ++t) {
    if (!in_core[f.initial_parent[t]]) continue;
    Mat local = rt0_element_mass(f, t);
    for (int i = 0; i < 3; ++i) {
      int slot_i = f.tri_edge_sign[t][i] > 0 ? 0 : 1;
      int di = sys.spaces.vhat.edge_dof[f.tri_edges[t][i]][slot_i];
      for (int j = 0; j < 3; ++j) {
        int slot_j = f.tri_edge_sign[t][j] > 0 ? 0 : 1;
        int dj = sys.spaces.vhat.edge_dof[f.tri_edges[t][j]][slot_j];
        ct.emplace_back(di, dj, sys.medium.kappa[t] * f.tri_edge_sign[t][i] *
                                    f.tri_edge_sign[t][j] * local(i, j));
      }
    }
  }
  sys.fine_vmass_core.resize(sys.spaces.vhat.n_dofs, sys.spaces.vhat.n_dofs);
  sys.fine_vmass_core.setFromTriplets(ct.begin(), ct.end());
  sys.fine_pmass_core = Vec::Zero(sys.forms.pressure_dim());
  for (int t = 0; t < n_elem; ++t)
    if (in_core[f.initial_parent[t]]) sys.fine_pmass_core[t] = sys.forms.pressure_mass[t];
  for (int a = 0; a < sys.forms.n_penalty; ++a) {
    int fe = sys.spaces.penalty.fine_edges[sys.spaces.penalty.active[a]];
    if (edge_class[f.edges[fe].coarse_edge] == 2)
      sys.fine_pmass_core[n_elem + a] = sys.forms.pressure_mass[n_elem + a];
  }
  return sys;
}

namespace {

struct PmlEnergy {
  double interior(const PmlSystem& sys, const Vec& v, const Vec& p) const {
    Vec vf = sys.space.velocity * v;
    Vec pf = sys.space.pressure * p;
    return 0.5 * vf.dot(sys.fine_vmass_core * vf) +
           0.5 * pf.dot(sys.fine_pmass_core.asDiagonal() * pf);
  }
};

}  // namespace

PmlRunResult run_pml(const PmlSystem& sys, const SourceConfig& src,
                     const TimeOptions& opts, bool use_damping) {
  // stability from the undamped part
  Eigen::SparseMatrix<double> mv = sys.reduced_vmass;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> mv_llt(mv);
  if (mv_llt.info() != Eigen::Success) throw SpdError("reduced velocity mass is not SPD");

  LeapfrogOps probe;
  probe.vmass_solve = [&mv_llt](const Vec& b) -> Vec { return mv_llt.solve(b); };
  probe.pmass_solve = [&sys](const Vec& b) { return sys.pressure_mass.apply_inverse(b); };
  probe.coupling = &sys.coupling;
  probe.coupling_t = &sys.coupling_t;
  probe.n_v = sys.n_v;
  probe.n_q = sys.n_q;
  double dt = opts.dt > 0.0 ? opts.dt : stable_dt(probe, opts.safety);
  long n_steps = steps_for(opts.T, dt);
  dt = opts.T / n_steps;

  Eigen::SparseMatrix<double> stepmat = sys.reduced_vmass;
  if (use_damping) stepmat += (0.5 * dt) * Eigen::SparseMatrix<double>(sys.reduced_vdamp);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> step_llt(stepmat);
  if (step_llt.info() != Eigen::Success) throw SpdError("damped velocity step matrix is not SPD");

  Vec spatial = source_spatial_load(sys.ext.mesh.fine, sys.forms, src);
  Vec reduced_spatial = SparseMat(sys.space.pressure.transpose()) * spatial;
  const double f0 = src.f0;

  Vec v = Vec::Zero(sys.n_v), p = Vec::Zero(sys.n_q);
  Vec px = Vec::Zero(sys.damped_rows.size()), py = Vec::Zero(sys.damped_rows.size());

  PmlRunResult res;
  res.hist.dt = dt;
  res.hist.n_steps = n_steps;
  PmlEnergy energy;
  auto record = [&](long step) {
    double e = energy.interior(sys, v, p);
    res.interior_energy.push_back({static_cast<double>(step), step * dt, e});
  };
  record(0);
  for (long n = 0; n < n_steps; ++n) {
    Vec rhs = sys.reduced_vmass * v + dt * (sys.coupling_t * p);
    if (use_damping) rhs -= (0.5 * dt) * (sys.reduced_vdamp * v);
    v = step_llt.solve(rhs);

    double tf = ricker_time_factor((n + 1) * dt, f0);
    Vec g = tf * reduced_spatial - sys.coupling * v;
    Vec dp = sys.pressure_mass.apply_inverse(g);
    p += dt * dp;
    if (use_damping) {
      for (size_t i = 0; i < sys.damped_rows.size(); ++i) {
        int row = sys.damped_rows[i];
        int elem = sys.damped_elements[i];
        double m = sys.forms.pressure_mass[elem];
        double gx = g[row] / (2.0 * m);
        double sx = sys.sigma_x[elem], sy = sys.sigma_y[elem];
        double ax = (1.0 / dt - 0.5 * sx) / (1.0 / dt + 0.5 * sx);
        double bx = 1.0 / (1.0 / dt + 0.5 * sx);
        double ay = (1.0 / dt - 0.5 * sy) / (1.0 / dt + 0.5 * sy);
        double by = 1.0 / (1.0 / dt + 0.5 * sy);
        px[i] = ax * px[i] + bx * gx;
        py[i] = ay * py[i] + by * gx;
        p[row] = px[i] + py[i];
      }
    }
    record(n + 1);
    if ((n & 31) == 0) check_finite(v, n);
  }
  check_finite(v, n_steps);

  res.hist.final_velocity = v;
  res.hist.final_pressure = p;
  res.final_velocity_fine = sys.space.velocity * v;
  res.final_pressure_fine = sys.space.pressure * p;
  for (const auto& rec : res.interior_energy)
    res.peak_interior_energy = std::max(res.peak_interior_energy, rec[2]);
  res.final_interior_energy = res.interior_energy.back()[2];
  return res;
}

PmlRunResult run_pml_reflecting(const PmlSystem& sys, const SourceConfig& src,
                                const TimeOptions& opts) {
  Eigen::SparseMatrix<double> mv = sys.reduced_vmass;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> mv_llt(mv);
  if (mv_llt.info() != Eigen::Success) throw SpdError("reduced velocity mass is not SPD");

  LeapfrogOps ops;
  ops.vmass_solve = [&mv_llt](const Vec& b) -> Vec { return mv_llt.solve(b); };
  ops.pmass_solve = [&sys](const Vec& b) { return sys.pressure_mass.apply_inverse(b); };
  ops.vmass_apply = [&sys](const Vec& x) -> Vec { return sys.reduced_vmass * x; };
  ops.pmass_apply = [&sys](const Vec& x) { return sys.pressure_mass.apply(x); };
  ops.coupling = &sys.coupling;
  ops.coupling_t = &sys.coupling_t;
  ops.n_v = sys.n_v;
  ops.n_q = sys.n_q;

  Vec spatial = source_spatial_load(sys.ext.mesh.fine, sys.forms, src);
  Vec reduced_spatial = SparseMat(sys.space.pressure.transpose()) * spatial;
  const double f0 = src.f0;
  History hist = run_leapfrog(ops, reduced_spatial,
                              [f0](double t) { return ricker_time_factor(t, f0); }, opts);
  PmlRunResult res;
  res.final_velocity_fine = sys.space.velocity * hist.final_velocity;
  res.final_pressure_fine = sys.space.pressure * hist.final_pressure;
  PmlEnergy energy;
  res.final_interior_energy = energy.interior(sys, hist.final_velocity, hist.final_pressure);
  res.hist = std::move(hist);
  return res;
}

}  // namespace mswave
