#include "mswave/basis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <thread>

namespace mswave {

namespace {

// fine elements of a coarse triangle; children stay contiguous under the
// refinement used here, verified and with a scan fallback
std::vector<int> patch_elements(const FineMesh& f, int coarse_tri) {
  long per = 1;
  for (int l = 0; l < f.levels; ++l) per *= 4;
  long lo = coarse_tri * per;
  if (lo + per <= static_cast<long>(f.triangles.size()) &&
      f.coarse_parent[lo] == coarse_tri && f.coarse_parent[lo + per - 1] == coarse_tri) {
    std::vector<int> out(per);
    for (long i = 0; i < per; ++i) out[i] = static_cast<int>(lo + i);
    return out;
  }
  std::vector<int> out;
  for (size_t t = 0; t < f.triangles.size(); ++t)
    if (f.coarse_parent[t] == coarse_tri) out.push_back(static_cast<int>(t));
  return out;
}

}  // namespace

LocalPatchSolver::LocalPatchSolver(const FineMesh& f, const MediumField& med,
                                   int coarse_tri) {
  elements_ = patch_elements(f, coarse_tri);
  if (elements_.empty()) throw std::invalid_argument("empty coarse element");

  edge_local_id_.assign(f.edges.size(), -1);
  for (int t : elements_) {
    for (int k = 0; k < 3; ++k) {
      int fe = f.tri_edges[t][k];
      if (edge_local_id_[fe] < 0) {
        edge_local_id_[fe] = static_cast<int>(local_edges_.size());
        local_edges_.push_back(fe);
      }
    }
  }
  auto inside = [&](int tri) { return tri >= 0 && f.coarse_parent[tri] == coarse_tri; };
  local_kind_.resize(local_edges_.size());
  local_pos_.resize(local_edges_.size());
  for (size_t le = 0; le < local_edges_.size(); ++le) {
    const FineEdge& e = f.edges[local_edges_[le]];
    bool interior = inside(e.elems[0]) && inside(e.elems[1]);
    local_kind_[le] = interior ? 0 : 1;
    if (interior) {
      local_pos_[le] = static_cast<int>(interior_edges_.size());
      interior_edges_.push_back(local_edges_[le]);
      interior_local_.push_back(static_cast<int>(le));
    } else {
      local_pos_[le] = static_cast<int>(boundary_edges_.size());
      boundary_edges_.push_back(local_edges_[le]);
      boundary_local_.push_back(static_cast<int>(le));
    }
  }

  const int ni = static_cast<int>(interior_edges_.size());
  const int nb = static_cast<int>(boundary_edges_.size());
  const int ne = static_cast<int>(elements_.size());

  elem_mass_.reserve(ne);
  elem_local_edges_.resize(ne);
  areas_.resize(ne);
  rho_weights_.resize(ne);
  Mat mass_ii = Mat::Zero(ni, ni);
  b_interior_ = Mat::Zero(ne, ni);
  b_boundary_ = Mat::Zero(ne, nb);
  for (int li = 0; li < ne; ++li) {
    int t = elements_[li];
    areas_[li] = f.area[t];
    rho_weights_[li] = med.rho[t] * f.area[t];
    Mat m = rt0_element_mass(f, t);
    for (int i = 0; i < 3; ++i) {
      int le = edge_local_id_[f.tri_edges[t][i]];
      elem_local_edges_[li][i] = le;
      double entry = f.tri_edge_sign[t][i] * f.edges[f.tri_edges[t][i]].length;
      if (local_kind_[le] == 0)
        b_interior_(li, local_pos_[le]) = entry;
      else
        b_boundary_(li, local_pos_[le]) = entry;
      for (int j = 0; j < 3; ++j)
        m(i, j) *= med.kappa[t] * f.tri_edge_sign[t][i] * f.tri_edge_sign[t][j];
    }
    elem_mass_.push_back(m);
    for (int i = 0; i < 3; ++i) {
      int lei = elem_local_edges_[li][i];
      if (local_kind_[lei] != 0) continue;
      for (int j = 0; j < 3; ++j) {
        int lej = elem_local_edges_[li][j];
        if (local_kind_[lej] == 0)
          mass_ii(local_pos_[lei], local_pos_[lej]) += elem_mass_[li](i, j);
      }
    }
  }

  if (ni > 0) {
    mass_llt_.compute(mass_ii);
    if (mass_llt_.info() != Eigen::Success)
      throw SpdError("local velocity mass is not SPD");
  }

  Mat schur;
  if (ni > 0) {
    Mat g = b_interior_.transpose();  // ni x ne
    Mat x = mass_llt_.solve(g);
    schur = g.transpose() * x;
  } else {
    schur = Mat::Zero(ne, ne);
  }
  double sigma = (ne > 1) ? schur.trace() / areas_.squaredNorm() : 1.0;
  Mat shifted = schur + sigma * areas_ * areas_.transpose();
  schur_llt_.compute(shifted);
  if (schur_llt_.info() != Eigen::Success)
    throw SpdError("pressure Schur complement is not SPD");
}

int LocalPatchSolver::local_boundary_index(int fine_edge) const {
  int le = edge_local_id_[fine_edge];
  if (le < 0 || local_kind_[le] != 1) return -1;
  return local_pos_[le];
}

LocalPatchSolver::Result LocalPatchSolver::solve(const Vec& boundary_flux,
                                                 const Vec& div_rhs) const {
  const int ni = static_cast<int>(interior_edges_.size());
  const int nb = static_cast<int>(boundary_edges_.size());
  const int ne = static_cast<int>(elements_.size());
  if (boundary_flux.size() != nb || div_rhs.size() != ne)
    throw std::invalid_argument("local solve data sizes do not match the patch");

  // w = M_ib * boundary_flux over interior edges
  Vec w = Vec::Zero(ni);
  for (int li = 0; li < ne; ++li) {
    for (int i = 0; i < 3; ++i) {
      int lei = elem_local_edges_[li][i];
      if (local_kind_[lei] != 0) continue;
      for (int j = 0; j < 3; ++j) {
        int lej = elem_local_edges_[li][j];
        if (local_kind_[lej] == 1)
          w[local_pos_[lei]] += elem_mass_[li](i, j) * boundary_flux[local_pos_[lej]];
      }
    }
  }

  Vec rhs_p = div_rhs - b_boundary_ * boundary_flux;
  if (ni > 0) rhs_p += b_interior_ * mass_llt_.solve(w);

  double scale = div_rhs.lpNorm<1>() + (b_boundary_ * boundary_flux).lpNorm<1>() + 1e-30;
  if (std::abs(rhs_p.sum()) > 1e-8 * scale)
    throw std::invalid_argument("incompatible boundary flux / divergence data");

  Result res;
  res.pressure = (ne == 1) ? Vec::Zero(1) : schur_llt_.solve(rhs_p).eval();
  if (ni > 0)
    res.interior_flux = mass_llt_.solve(b_interior_.transpose() * res.pressure - w);
  else
    res.interior_flux = Vec();
  return res;
}

double LocalPatchSolver::kappa_inner(const Vec& bnd_u, const Vec& int_u, const Vec& bnd_v,
                                     const Vec& int_v) const {
  double acc = 0.0;
  for (size_t li = 0; li < elements_.size(); ++li) {
    double ul[3], vl[3];
    for (int i = 0; i < 3; ++i) {
      int le = elem_local_edges_[li][i];
      ul[i] = local_kind_[le] == 0 ? int_u[local_pos_[le]] : bnd_u[local_pos_[le]];
      vl[i] = local_kind_[le] == 0 ? int_v[local_pos_[le]] : bnd_v[local_pos_[le]];
    }
    const Mat& m = elem_mass_[li];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) acc += ul[i] * m(i, j) * vl[j];
  }
  return acc;
}

Mat LocalPatchSolver::divergence_on_interior() const { return b_interior_; }

Mat LocalPatchSolver::interior_mass_solve(const Mat& rhs) const {
  if (interior_edges_.empty()) return Mat(0, rhs.cols());
  return mass_llt_.solve(rhs);
}

namespace {

struct EdgeSideData {
  int coarse_tri = -1;
  int initial_tri = -1;
  double side_sign = 0.0;
  LocalPatchSolver solver;
  Vec first_bnd, first_int, first_pressure;
  Mat snap_bnd, snap_int;  // columns per snapshot

  EdgeSideData(const FineMesh& f, const MediumField& med, int k)
      : coarse_tri(k), solver(f, med, k) {}
};

struct EdgeComputation {
  std::vector<int> fes;
  Vec alpha;
  int n_snap = 0;
  Mat delta;  // orthonormal zero-mean traces, m x n_snap
  std::vector<EdgeSideData> sides;
  SymMatrix a, b;
};

EdgeComputation compute_edge_problem(const MeshHierarchy& h, const MediumField& med,
                                     int edge) {
  const FineMesh& f = h.fine;
  const CoarseEdge& ce = h.edges.edges.at(edge);
  EdgeComputation comp;
  comp.fes = f.coarse_edge_fine_edges[edge];
  const int m = static_cast<int>(comp.fes.size());
  if (m == 0) throw std::logic_error("coarse edge without fine edges");
  comp.alpha.resize(m);
  Vec len(m);
  for (int i = 0; i < m; ++i) {
    const FineEdge& fe = f.edges[comp.fes[i]];
    comp.alpha[i] = dot(fe.normal, ce.normal) > 0 ? 1.0 : -1.0;
    len[i] = fe.length;
  }

  // orthonormal basis of the zero-mean piecewise constants on the edge:
  // adjacent-difference seeds, modified Gram-Schmidt in the edge L2 product
  comp.n_snap = m - 1;
  comp.delta.resize(m, comp.n_snap);
  for (int j = 0; j < comp.n_snap; ++j) {
    Vec v = Vec::Zero(m);
    v[j] = 1.0;
    v[j + 1] = -1.0;
    for (int k = 0; k < j; ++k) {
      double proj = (len.array() * comp.delta.col(k).array() * v.array()).sum();
      v -= proj * comp.delta.col(k);
    }
    double norm = std::sqrt((len.array() * v.array().square()).sum());
    comp.delta.col(j) = v / norm;
  }

  comp.sides.reserve(2);
  for (int slot = 0; slot < 2; ++slot) {
    int k = ce.elems[slot];
    if (k < 0) continue;
    comp.sides.emplace_back(f, med, k);
    EdgeSideData& side = comp.sides.back();
    side.initial_tri = h.coarse.parent[k];
    const LocalPatchSolver& ls = side.solver;
    const int nb = static_cast<int>(ls.boundary_edges().size());
    const int ne = static_cast<int>(ls.elements().size());

    // outward sign of the coarse normal for this side
    {
      const FineEdge& fe0 = f.edges[comp.fes[0]];
      int s = (fe0.elems[0] >= 0 && f.coarse_parent[fe0.elems[0]] == k) ? +1 : -1;
      side.side_sign = s * comp.alpha[0];
    }

    double coarse_area = triangle_area(h.coarse.vertices, h.coarse.triangles[k]);
    Vec flux = Vec::Zero(nb);
    for (int i = 0; i < m; ++i) {
      int lb = ls.local_boundary_index(comp.fes[i]);
      if (lb < 0) throw std::logic_error("edge is not on the patch boundary");
      flux[lb] = comp.alpha[i];
    }
    Vec div_rhs(ne);
    for (int t = 0; t < ne; ++t)
      div_rhs[t] = side.side_sign * ce.length / coarse_area * ls.areas()[t];
    auto first = ls.solve(flux, div_rhs);
    side.first_bnd = flux;
    side.first_int = first.interior_flux;
    side.first_pressure = first.pressure;

    side.snap_bnd.resize(nb, comp.n_snap);
    side.snap_int.resize(first.interior_flux.size(), comp.n_snap);
    Vec zero_div = Vec::Zero(ne);
    for (int j = 0; j < comp.n_snap; ++j) {
      Vec fj = Vec::Zero(nb);
      for (int i = 0; i < m; ++i)
        fj[ls.local_boundary_index(comp.fes[i])] = comp.alpha[i] * comp.delta(i, j);
      auto snap = ls.solve(fj, zero_div);
      side.snap_bnd.col(j) = fj;
      side.snap_int.col(j) = snap.interior_flux;
    }
  }

  comp.a = SymMatrix(comp.n_snap);
  comp.b = SymMatrix(comp.n_snap);
  for (int i = 0; i < comp.n_snap; ++i) {
    for (int j = 0; j <= i; ++j) {
      comp.a.at(i, j) = (len.array() * comp.delta.col(i).array() * comp.delta.col(j).array()).sum();
      double acc = 0.0;
      for (const auto& side : comp.sides)
        acc += side.solver.kappa_inner(side.snap_bnd.col(i), side.snap_int.col(i),
                                       side.snap_bnd.col(j), side.snap_int.col(j));
      comp.b.at(i, j) = acc;
    }
  }
  return comp;
}

}  // namespace

SpectralProblem edge_spectral_matrices(const MeshHierarchy& h, const MediumField& med,
                                       const Spaces& s, int edge) {
  (void)s;
  EdgeComputation comp = compute_edge_problem(h, med, edge);
  return {comp.a, comp.b};
}

EdgeBasisEntry build_edge_entry(const MeshHierarchy& h, const MediumField& med,
                                const Spaces& s, int edge) {
  const FineMesh& f = h.fine;
  EdgeComputation comp = compute_edge_problem(h, med, edge);
  const int m = static_cast<int>(comp.fes.size());
  const int n = comp.n_snap;

  EdgeBasisEntry entry;
  entry.edge = edge;
  entry.n_snapshots = n;
  entry.fine_edges = comp.fes;
  entry.alpha = comp.alpha;

  Mat coeff(n, n);
  if (n > 0) {
    GenEigResult eig = gen_eig_sym(comp.a, comp.b);
    entry.eigenvalues = eig.eigenvalues;
    Mat ad = comp.a.to_dense();
    for (int j = 0; j < n; ++j) {
      Vec v = eig.eigenvectors.col(j);
      coeff.col(j) = v / std::sqrt(v.dot(ad * v));
    }
    entry.trace = comp.delta * coeff;
  } else {
    entry.eigenvalues = Vec();
    entry.trace = Mat(m, 0);
  }

  const bool split = s.edge_decoupled[edge];
  auto side_slot = [&](const EdgeSideData& side, int fe) {
    const FineEdge& e = f.edges[fe];
    return (e.elems[0] >= 0 && f.coarse_parent[e.elems[0]] == side.coarse_tri) ? 0 : 1;
  };

  auto make_group = [&](const EdgeSideData& side, bool with_trace) {
    EdgeFunctionGroup g;
    g.coarse_tri = side.coarse_tri;
    g.initial_tri = side.initial_tri;
    const auto& interior = side.solver.interior_edges();
    int ni = static_cast<int>(interior.size());
    int extra = with_trace ? m : 0;
    g.dofs.resize(ni + extra);
    g.unit_flux.resize(ni + extra);
    g.modes.resize(ni + extra, n);
    for (int i = 0; i < ni; ++i) {
      g.dofs[i] = s.vhat.edge_dof[interior[i]][0];
      g.unit_flux[i] = side.first_int[i];
      g.modes.row(i) = side.snap_int.row(i) * coeff;
    }
    if (with_trace) {
      for (int i = 0; i < m; ++i) {
        int slot = side_slot(side, comp.fes[i]);
        g.dofs[ni + i] = s.vhat.edge_dof[comp.fes[i]][slot];
        g.unit_flux[ni + i] = comp.alpha[i];
        g.modes.row(ni + i) = comp.alpha[i] * (comp.delta.row(i) * coeff);
      }
    }
    g.aux_pressure = side.first_pressure;
    return g;
  };

  if (split) {
    for (size_t si = 0; si < comp.sides.size(); ++si) {
      entry.groups.push_back(make_group(comp.sides[si], true));
      entry.side_sign[si] = comp.sides[si].side_sign;
      // per-side trace dofs
      EdgeFunctionGroup& g = entry.groups.back();
      g.trace_dofs.resize(m);
      for (int i = 0; i < m; ++i)
        g.trace_dofs[i] =
            s.vhat.edge_dof[comp.fes[i]][side_slot(comp.sides[si], comp.fes[i])];
    }
  } else {
    // merged group: first side carries the shared trace dofs
    EdgeFunctionGroup g = make_group(comp.sides[0], true);
    entry.side_sign[0] = comp.sides[0].side_sign;
    if (comp.sides.size() > 1) {
      entry.side_sign[1] = comp.sides[1].side_sign;
      EdgeFunctionGroup other = make_group(comp.sides[1], false);
      size_t base = g.dofs.size();
      g.dofs.resize(base + other.dofs.size());
      Vec uf(g.unit_flux.size() + other.unit_flux.size());
      uf << g.unit_flux, other.unit_flux;
      g.unit_flux = uf;
      Mat md(g.modes.rows() + other.modes.rows(), n);
      md << g.modes, other.modes;
      g.modes = md;
      for (size_t i = 0; i < other.dofs.size(); ++i) g.dofs[base + i] = other.dofs[i];
      Vec ap(g.aux_pressure.size() + other.aux_pressure.size());
      ap << g.aux_pressure, other.aux_pressure;
      g.aux_pressure = ap;
      // spokes join children of one initial triangle; keep that block
      g.initial_tri = comp.sides[0].initial_tri;
    }
    g.trace_dofs.resize(m);
    for (int i = 0; i < m; ++i) {
      const auto& ed = s.vhat.edge_dof[comp.fes[i]];
      g.trace_dofs[i] = ed[0] >= 0 ? ed[0] : ed[1];
    }
    entry.groups.push_back(std::move(g));
  }
  return entry;
}

namespace {

struct ElementComputation {
  LocalPatchSolver solver;
  Mat z;       // zero-mean pressure basis, ne x (ne-1)
  Mat x;       // M^{-1} B^T Z
  SymMatrix a, b;

  ElementComputation(const FineMesh& f, const MediumField& med, int k)
      : solver(f, med, k) {}
};

ElementComputation compute_element_problem(const MeshHierarchy& h, const MediumField& med,
                                           int coarse_tri) {
  ElementComputation comp(h.fine, med, coarse_tri);
  const LocalPatchSolver& ls = comp.solver;
  const int ne = static_cast<int>(ls.elements().size());
  const int nm = ne - 1;
  const Vec& areas = ls.areas();
  comp.z = Mat::Zero(ne, nm);
  for (int i = 0; i < nm; ++i) {
    comp.z(i, i) = 1.0;
    comp.z(ne - 1, i) = -areas[i] / areas[ne - 1];
  }
  Mat g = ls.divergence_on_interior().transpose() * comp.z;  // ni x nm
  comp.x = ls.interior_mass_solve(g);
  Mat az = g.transpose() * comp.x;
  Mat bz = comp.z.transpose() * ls.rho_weights().asDiagonal() * comp.z;
  comp.a = SymMatrix::from_dense_lower(az);
  comp.b = SymMatrix::from_dense_lower(bz);
  return comp;
}

}  // namespace

SpectralProblem element_spectral_matrices(const MeshHierarchy& h, const MediumField& med,
                                          const Spaces& s, int coarse_tri) {
  (void)s;
  ElementComputation comp = compute_element_problem(h, med, coarse_tri);
  return {comp.a, comp.b};
}

ElementBasisEntry build_element_entry(const MeshHierarchy& h, const MediumField& med,
                                      const Spaces& s, int coarse_tri) {
  ElementBasisEntry entry;
  entry.coarse_tri = coarse_tri;
  entry.initial_tri = h.coarse.parent[coarse_tri];

  ElementComputation comp = compute_element_problem(h, med, coarse_tri);
  const LocalPatchSolver& ls = comp.solver;
  entry.elements = ls.elements();
  const int nm = static_cast<int>(ls.elements().size()) - 1;
  entry.velocity_dofs.resize(ls.interior_edges().size());
  for (size_t i = 0; i < ls.interior_edges().size(); ++i)
    entry.velocity_dofs[i] = s.vhat.edge_dof[ls.interior_edges()[i]][0];

  entry.n_modes = nm;
  if (nm == 0) {
    entry.eigenvalues = Vec();
    entry.velocity = Mat(entry.velocity_dofs.size(), 0);
    entry.pressure = Mat(entry.elements.size(), 0);
    return entry;
  }
  GenEigResult eig = gen_eig_sym(comp.a, comp.b);
  entry.eigenvalues = eig.eigenvalues;
  entry.pressure = comp.z * eig.eigenvectors;
  entry.velocity = comp.x * eig.eigenvectors;
  return entry;
}

namespace {

template <class F>
void parallel_for(int count, int threads, F&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace

OfflineBasis build_offline_basis(const MeshHierarchy& h, const MediumField& med,
                                 const Spaces& s, const std::vector<int>& edge_ids,
                                 const std::vector<int>& elem_ids, int threads) {
  OfflineBasis basis;
  basis.edges.resize(h.edges.edges.size());
  basis.elements.resize(h.coarse.triangles.size());
  parallel_for(static_cast<int>(edge_ids.size()), threads, [&](int i) {
    basis.edges[edge_ids[i]] = build_edge_entry(h, med, s, edge_ids[i]);
  });
  parallel_for(static_cast<int>(elem_ids.size()), threads, [&](int i) {
    basis.elements[elem_ids[i]] = build_element_entry(h, med, s, elem_ids[i]);
  });
  return basis;
}

OfflineBasis build_offline_basis(const MeshHierarchy& h, const MediumField& med,
                                 const Spaces& s, int threads) {
  std::vector<int> edge_ids(h.edges.edges.size());
  std::vector<int> elem_ids(h.coarse.triangles.size());
  for (size_t i = 0; i < edge_ids.size(); ++i) edge_ids[i] = static_cast<int>(i);
  for (size_t i = 0; i < elem_ids.size(); ++i) elem_ids[i] = static_cast<int>(i);
  return build_offline_basis(h, med, s, edge_ids, elem_ids, threads);
}

Selection uniform_selection(const OfflineBasis& basis, int boundary_count,
                            int interior_count) {
  if (boundary_count < 1 || interior_count < 0)
    throw std::invalid_argument("selection counts out of range");
  Selection sel;
  sel.edge_modes.resize(basis.edges.size());
  sel.element_modes.resize(basis.elements.size());
  for (size_t e = 0; e < basis.edges.size(); ++e) {
    int want = boundary_count - 1;
    if (basis.edges[e].edge >= 0 && want > basis.edges[e].n_snapshots)
      throw std::invalid_argument("boundary selection exceeds the snapshot count");
    sel.edge_modes[e] = want;
  }
  for (size_t k = 0; k < basis.elements.size(); ++k) {
    if (basis.elements[k].coarse_tri >= 0 && interior_count > basis.elements[k].n_modes)
      throw std::invalid_argument("interior selection exceeds the mode count");
    sel.element_modes[k] = interior_count;
  }
  return sel;
}

OfflineSpace assemble_offline_space(const MeshHierarchy& h, const Spaces& s,
                                    const OfflineBasis& basis, const Selection& sel) {
  if (sel.edge_modes.size() != basis.edges.size() ||
      sel.element_modes.size() != basis.elements.size())
    throw std::invalid_argument("selection does not match the basis");

  OfflineSpace space;
  std::vector<Triplet> vt, pt;
  int vcol = 0;

  for (size_t e = 0; e < basis.edges.size(); ++e) {
    const EdgeBasisEntry& entry = basis.edges[e];
    if (entry.edge < 0) continue;
    int nm = sel.edge_modes[e];
    if (nm < 0 || nm > entry.n_snapshots)
      throw std::invalid_argument("edge selection out of range");
    for (size_t g = 0; g < entry.groups.size(); ++g) {
      const EdgeFunctionGroup& grp = entry.groups[g];
      OfflineSpace::VelEdgeGroupCols cols;
      cols.edge = static_cast<int>(e);
      cols.group = static_cast<int>(g);
      cols.unit_flux_col = vcol;
      cols.first_mode_col = vcol + 1;
      cols.n_modes = nm;
      for (size_t i = 0; i < grp.dofs.size(); ++i) {
        vt.emplace_back(grp.dofs[i], vcol, grp.unit_flux[i]);
        for (int j = 0; j < nm; ++j)
          vt.emplace_back(grp.dofs[i], vcol + 1 + j, grp.modes(i, j));
      }
      for (int j = 0; j <= nm; ++j) space.velocity_block.push_back(grp.initial_tri);
      vcol += 1 + nm;
      space.vel_edge_groups.push_back(cols);
    }
  }
  for (size_t k = 0; k < basis.elements.size(); ++k) {
    const ElementBasisEntry& entry = basis.elements[k];
    if (entry.coarse_tri < 0) continue;
    int nm = sel.element_modes[k];
    if (nm < 0 || nm > entry.n_modes)
      throw std::invalid_argument("element selection out of range");
    OfflineSpace::VelElemCols cols;
    cols.elem = static_cast<int>(k);
    cols.first_mode_col = vcol;
    cols.n_modes = nm;
    for (int j = 0; j < nm; ++j) {
      for (size_t i = 0; i < entry.velocity_dofs.size(); ++i)
        vt.emplace_back(entry.velocity_dofs[i], vcol + j, entry.velocity(i, j));
      space.velocity_block.push_back(entry.initial_tri);
    }
    vcol += nm;
    space.vel_elems.push_back(cols);
  }

  const int n_elem = static_cast<int>(h.fine.triangles.size());
  int pcol = 0;
  for (size_t k = 0; k < basis.elements.size(); ++k) {
    const ElementBasisEntry& entry = basis.elements[k];
    if (entry.coarse_tri < 0) continue;
    int nm = sel.element_modes[k];
    OfflineSpace::PresElemCols cols;
    cols.elem = static_cast<int>(k);
    cols.const_col = pcol;
    cols.first_mode_col = pcol + 1;
    cols.n_modes = nm;
    for (size_t i = 0; i < entry.elements.size(); ++i) {
      pt.emplace_back(entry.elements[i], pcol, 1.0);
      for (int j = 0; j < nm; ++j)
        pt.emplace_back(entry.elements[i], pcol + 1 + j, entry.pressure(i, j));
    }
    pcol += 1 + nm;
    space.pres_elems.push_back(cols);
  }
  for (size_t e = 0; e < basis.edges.size(); ++e) {
    const EdgeBasisEntry& entry = basis.edges[e];
    if (entry.edge < 0 || !s.edge_decoupled[e]) continue;
    int nm = sel.edge_modes[e];
    OfflineSpace::PresEdgeCols cols;
    cols.edge = static_cast<int>(e);
    cols.const_col = pcol;
    cols.first_mode_col = pcol + 1;
    cols.n_modes = nm;
    for (size_t i = 0; i < entry.fine_edges.size(); ++i) {
      int active = s.penalty.edge_to_active[entry.fine_edges[i]];
      if (active < 0) throw std::logic_error("decoupled edge lacks active penalty dofs");
      pt.emplace_back(n_elem + active, pcol, 1.0);
      for (int j = 0; j < nm; ++j)
        pt.emplace_back(n_elem + active, pcol + 1 + j, entry.trace(i, j));
    }
    pcol += 1 + nm;
    space.pres_edges.push_back(cols);
  }

  space.velocity.resize(s.vhat.n_dofs, vcol);
  space.velocity.setFromTriplets(vt.begin(), vt.end());
  space.pressure.resize(n_elem + s.penalty.n_active(), pcol);
  space.pressure.setFromTriplets(pt.begin(), pt.end());
  return space;
}

OfflineSpace identity_offline_space(const Spaces& s, const AssembledForms& forms) {
  OfflineSpace space;
  space.identity = true;
  space.velocity.resize(forms.n_vel, forms.n_vel);
  space.velocity.setIdentity();
  space.pressure.resize(forms.pressure_dim(), forms.pressure_dim());
  space.pressure.setIdentity();
  space.velocity_block = s.vhat.dof_initial_tri;
  return space;
}

// ---------------------------------------------------------------------------
// offline basis file: little-endian binary, full spectra

namespace {

constexpr char kMagic[8] = {'M', 'S', 'W', 'B', 'A', 'S', '0', '1'};
constexpr std::uint64_t kEndianTag = 0x0102030405060708ULL;

struct Writer {
  FILE* fp;
  void raw(const void* p, size_t bytes) {
    if (std::fwrite(p, 1, bytes, fp) != bytes) throw std::runtime_error("short write");
  }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void vec(const Vec& v) { raw(v.data(), sizeof(double) * v.size()); }
  void mat(const Mat& m) { raw(m.data(), sizeof(double) * m.size()); }
  void ints(const std::vector<int>& v) {
    for (int x : v) i64(x);
  }
};

struct Reader {
  FILE* fp;
  void raw(void* p, size_t bytes) {
    if (std::fread(p, 1, bytes, fp) != bytes) throw std::runtime_error("short read");
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, 8);
    return v;
  }
  Vec vec(Eigen::Index n) {
    Vec v(n);
    raw(v.data(), sizeof(double) * n);
    return v;
  }
  Mat mat(Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    raw(m.data(), sizeof(double) * r * c);
    return m;
  }
  std::vector<int> ints(size_t n) {
    std::vector<int> v(n);
    for (auto& x : v) x = static_cast<int>(i64());
    return v;
  }
};

}  // namespace

void save_offline_basis(const std::string& path, const OfflineBasis& basis,
                        const OfflineFileMeta& meta) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  Writer w{fp};
  try {
    w.raw(kMagic, 8);
    w.u64(kEndianTag);
    w.i64(meta.n);
    w.i64(meta.r);
    w.u64(meta.mesh_checksum);
    w.u64(meta.medium_checksum);
    w.i64(static_cast<std::int64_t>(basis.edges.size()));
    w.i64(static_cast<std::int64_t>(basis.elements.size()));
    for (const auto& e : basis.edges) {
      w.i64(e.edge);
      if (e.edge < 0) continue;
      w.i64(e.n_snapshots);
      w.i64(static_cast<std::int64_t>(e.fine_edges.size()));
      w.i64(static_cast<std::int64_t>(e.groups.size()));
      w.vec(e.eigenvalues);
      w.ints(e.fine_edges);
      w.vec(e.alpha);
      w.mat(e.trace);
      w.f64(e.side_sign[0]);
      w.f64(e.side_sign[1]);
      for (const auto& g : e.groups) {
        w.i64(g.coarse_tri);
        w.i64(g.initial_tri);
        w.i64(static_cast<std::int64_t>(g.dofs.size()));
        w.i64(static_cast<std::int64_t>(g.aux_pressure.size()));
        w.ints(g.dofs);
        w.ints(g.trace_dofs);
        w.vec(g.unit_flux);
        w.mat(g.modes);
        w.vec(g.aux_pressure);
      }
    }
    for (const auto& k : basis.elements) {
      w.i64(k.coarse_tri);
      if (k.coarse_tri < 0) continue;
      w.i64(k.initial_tri);
      w.i64(k.n_modes);
      w.i64(static_cast<std::int64_t>(k.velocity_dofs.size()));
      w.i64(static_cast<std::int64_t>(k.elements.size()));
      w.vec(k.eigenvalues);
      w.ints(k.velocity_dofs);
      w.ints(k.elements);
      w.mat(k.velocity);
      w.mat(k.pressure);
    }
  } catch (...) {
    std::fclose(fp);
    throw;
  }
  std::fclose(fp);
}

OfflineBasis load_offline_basis(const std::string& path, OfflineFileMeta* meta) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + path);
  Reader r{fp};
  OfflineBasis basis;
  try {
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
      throw std::runtime_error("not an offline basis file: " + path);
    if (r.u64() != kEndianTag) throw std::runtime_error("endianness mismatch in " + path);
    OfflineFileMeta m;
    m.n = static_cast<int>(r.i64());
    m.r = static_cast<int>(r.i64());
    m.mesh_checksum = r.u64();
    m.medium_checksum = r.u64();
    if (meta) *meta = m;
    std::int64_t n_edges = r.i64();
    std::int64_t n_elems = r.i64();
    basis.edges.resize(n_edges);
    basis.elements.resize(n_elems);
    for (std::int64_t e = 0; e < n_edges; ++e) {
      EdgeBasisEntry& entry = basis.edges[e];
      entry.edge = static_cast<int>(r.i64());
      if (entry.edge < 0) continue;
      entry.n_snapshots = static_cast<int>(r.i64());
      std::int64_t m_fes = r.i64();
      std::int64_t n_groups = r.i64();
      entry.eigenvalues = r.vec(entry.n_snapshots);
      entry.fine_edges = r.ints(m_fes);
      entry.alpha = r.vec(m_fes);
      entry.trace = r.mat(m_fes, entry.n_snapshots);
      entry.side_sign[0] = r.vec(1)[0];
      entry.side_sign[1] = r.vec(1)[0];
      entry.groups.resize(n_groups);
      for (auto& g : entry.groups) {
        g.coarse_tri = static_cast<int>(r.i64());
        g.initial_tri = static_cast<int>(r.i64());
        std::int64_t ndofs = r.i64();
        std::int64_t npres = r.i64();
        g.dofs = r.ints(ndofs);
        g.trace_dofs = r.ints(m_fes);
        g.unit_flux = r.vec(ndofs);
        g.modes = r.mat(ndofs, entry.n_snapshots);
        g.aux_pressure = r.vec(npres);
      }
    }
    for (std::int64_t k = 0; k < n_elems; ++k) {
      ElementBasisEntry& entry = basis.elements[k];
      entry.coarse_tri = static_cast<int>(r.i64());
      if (entry.coarse_tri < 0) continue;
      entry.initial_tri = static_cast<int>(r.i64());
      entry.n_modes = static_cast<int>(r.i64());
      std::int64_t nv = r.i64();
      std::int64_t ne = r.i64();
      entry.eigenvalues = r.vec(entry.n_modes);
      entry.velocity_dofs = r.ints(nv);
      entry.elements = r.ints(ne);
      entry.velocity = r.mat(nv, entry.n_modes);
      entry.pressure = r.mat(ne, entry.n_modes);
    }
  } catch (...) {
    std::fclose(fp);
    throw;
  }
  std::fclose(fp);
  return basis;
}

}  // namespace mswave
