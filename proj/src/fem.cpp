#include "mswave/fem.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mswave {

Spaces build_spaces(const FineMesh& f, const SkeletonBands& b, const EdgeSets& e) {
  std::vector<char> decouple(e.edges.size(), 0);
  for (int g : e.inherited_interior) decouple[g] = 1;
  return build_spaces(f, b, e, decouple);
}

Spaces build_spaces(const FineMesh& f, const SkeletonBands& b, const EdgeSets& e,
                    const std::vector<char>& decouple_edge) {
  if (decouple_edge.size() != e.edges.size())
    throw std::invalid_argument("decouple mask size does not match the edge set");
  for (size_t g = 0; g < e.edges.size(); ++g)
    if (decouple_edge[g] &&
        (e.edges[g].cls != EdgeClass::Inherited || e.edges[g].on_boundary))
      throw std::invalid_argument("only interior inherited edges can be decoupled");
  (void)b;

  Spaces s;
  s.edge_decoupled = decouple_edge;
  s.rt0.n_dofs = static_cast<int>(f.edges.size());
  s.rt0.dof_on_boundary.resize(f.edges.size());
  for (size_t fe = 0; fe < f.edges.size(); ++fe)
    s.rt0.dof_on_boundary[fe] = f.edges[fe].on_boundary;

  DecoupledVelocitySpace& v = s.vhat;
  v.edge_dof.assign(f.edges.size(), {-1, -1});
  v.edge_decoupled.assign(f.edges.size(), 0);
  int next = 0;
  for (size_t fe = 0; fe < f.edges.size(); ++fe) {
    const FineEdge& edge = f.edges[fe];
    bool split = edge.coarse_edge >= 0 && decouple_edge[edge.coarse_edge];
    if (split && edge.on_boundary)
      throw std::logic_error("decoupled edge lies on the domain boundary");
    v.edge_decoupled[fe] = split;
    for (int slot = 0; slot < 2; ++slot) {
      if (edge.elems[slot] < 0) continue;
      if (!split && slot == 1 && v.edge_dof[fe][0] >= 0) {
        v.edge_dof[fe][1] = v.edge_dof[fe][0];
        continue;
      }
      v.edge_dof[fe][slot] = next;
      v.dof_fine_edge.push_back(static_cast<int>(fe));
      v.dof_initial_tri.push_back(f.initial_parent[edge.elems[slot]]);
      ++next;
    }
  }
  v.n_dofs = next;

  PenaltyPressureSpace& p = s.penalty;
  p.edge_to_dof.assign(f.edges.size(), -1);
  p.edge_to_active.assign(f.edges.size(), -1);
  for (int g : e.inherited) {
    bool active = decouple_edge[g] != 0;
    for (int fe : f.coarse_edge_fine_edges[g]) {
      int dof = p.n_total();
      p.fine_edges.push_back(fe);
      p.is_active.push_back(active);
      p.edge_to_dof[fe] = dof;
      if (active) {
        p.edge_to_active[fe] = static_cast<int>(p.active.size());
        p.active.push_back(dof);
      }
    }
  }
  return s;
}

Mat rt0_element_mass(const FineMesh& f, int tri) {
  const auto& t = f.triangles[tri];
  const double a = f.area[tri];
  Point2 pts[3] = {f.vertices[t[0]], f.vertices[t[1]], f.vertices[t[2]]};
  // midpoints of the edges opposite each vertex
  Point2 mid[3];
  for (int k = 0; k < 3; ++k) mid[k] = 0.5 * (pts[(k + 1) % 3] + pts[(k + 2) % 3]);
  Mat m(3, 3);
  for (int i = 0; i < 3; ++i) {
    double li = f.edges[f.tri_edges[tri][i]].length;
    for (int j = 0; j <= i; ++j) {
      double lj = f.edges[f.tri_edges[tri][j]].length;
      double acc = 0.0;
      for (int q = 0; q < 3; ++q) acc += dot(mid[q] - pts[i], mid[q] - pts[j]);
      m(i, j) = m(j, i) = li * lj / (12.0 * a) * acc;
    }
  }
  return m;
}

AssembledForms assemble_forms(const FineMesh& f, const MediumField& med, const Spaces& s) {
  if (med.kappa.size() != static_cast<Eigen::Index>(f.triangles.size()))
    throw std::invalid_argument("medium does not match the fine mesh");
  if (med.kappa.minCoeff() <= 0.0 || med.rho.minCoeff() <= 0.0)
    throw std::invalid_argument("medium coefficients must be positive");

  AssembledForms forms;
  forms.n_elem = static_cast<int>(f.triangles.size());
  forms.n_penalty = s.penalty.n_active();
  forms.n_vel = s.vhat.n_dofs;

  auto dof_of = [&](int tri, int k) {
    int fe = f.tri_edges[tri][k];
    int slot = f.tri_edge_sign[tri][k] > 0 ? 0 : 1;
    return s.vhat.edge_dof[fe][slot];
  };

  std::vector<Triplet> mv, dv, jv;
  mv.reserve(9 * f.triangles.size());
  dv.reserve(3 * f.triangles.size());
  for (int t = 0; t < forms.n_elem; ++t) {
    Mat local = rt0_element_mass(f, t);
    for (int i = 0; i < 3; ++i) {
      int di = dof_of(t, i);
      int si = f.tri_edge_sign[t][i];
      dv.emplace_back(t, di, si * f.edges[f.tri_edges[t][i]].length);
      for (int j = 0; j < 3; ++j) {
        int dj = dof_of(t, j);
        int sj = f.tri_edge_sign[t][j];
        mv.emplace_back(di, dj, med.kappa[t] * si * sj * local(i, j));
      }
    }
  }
  forms.velocity_mass.resize(forms.n_vel, forms.n_vel);
  forms.velocity_mass.setFromTriplets(mv.begin(), mv.end());
  forms.div_coupling.resize(forms.n_elem, forms.n_vel);
  forms.div_coupling.setFromTriplets(dv.begin(), dv.end());

  // jump rows: [w.n] = w_in - w_out against the unit trace, per active dof
  for (int a = 0; a < forms.n_penalty; ++a) {
    int fe = s.penalty.fine_edges[s.penalty.active[a]];
    const FineEdge& edge = f.edges[fe];
    jv.emplace_back(a, s.vhat.edge_dof[fe][1], edge.length);
    jv.emplace_back(a, s.vhat.edge_dof[fe][0], -edge.length);
  }
  forms.jump_coupling.resize(forms.n_penalty, forms.n_vel);
  forms.jump_coupling.setFromTriplets(jv.begin(), jv.end());

  forms.pressure_mass.resize(forms.pressure_dim());
  for (int t = 0; t < forms.n_elem; ++t) forms.pressure_mass[t] = med.rho[t] * f.area[t];
  for (int a = 0; a < forms.n_penalty; ++a) {
    int fe = s.penalty.fine_edges[s.penalty.active[a]];
    double acc = 0.0;
    // integral of (1 - 3*lambda_opp)^2 over a triangle is area/2
    for (int t : f.edges[fe].elems)
      if (t >= 0) acc += med.rho[t] * f.area[t] * 0.5;
    forms.pressure_mass[forms.n_elem + a] = acc;
  }
  return forms;
}

CoupledForms assemble_coupled_forms(const FineMesh& f, const MediumField& med) {
  CoupledForms forms;
  forms.n_elem = static_cast<int>(f.triangles.size());
  forms.n_vel = static_cast<int>(f.edges.size());
  std::vector<Triplet> mv, dv;
  for (int t = 0; t < forms.n_elem; ++t) {
    Mat local = rt0_element_mass(f, t);
    for (int i = 0; i < 3; ++i) {
      int di = f.tri_edges[t][i];
      int si = f.tri_edge_sign[t][i];
      dv.emplace_back(t, di, si * f.edges[di].length);
      for (int j = 0; j < 3; ++j)
        mv.emplace_back(di, f.tri_edges[t][j],
                        med.kappa[t] * si * f.tri_edge_sign[t][j] * local(i, j));
    }
  }
  forms.velocity_mass.resize(forms.n_vel, forms.n_vel);
  forms.velocity_mass.setFromTriplets(mv.begin(), mv.end());
  forms.div_coupling.resize(forms.n_elem, forms.n_vel);
  forms.div_coupling.setFromTriplets(dv.begin(), dv.end());
  forms.pressure_mass.resize(forms.n_elem);
  for (int t = 0; t < forms.n_elem; ++t) forms.pressure_mass[t] = med.rho[t] * f.area[t];
  return forms;
}

PenaltyExtension project_penalty_trace(const FineMesh& f, int coarse_edge,
                                       const Vec& trace_values) {
  const auto& fes = f.coarse_edge_fine_edges.at(coarse_edge);
  if (trace_values.size() != static_cast<Eigen::Index>(fes.size()))
    throw std::invalid_argument("one trace value per fine edge required");
  PenaltyExtension ext;
  for (size_t i = 0; i < fes.size(); ++i) {
    int fe = fes[i];
    for (int t : f.edges[fe].elems) {
      if (t < 0) continue;
      int opp = -1;
      for (int k = 0; k < 3; ++k)
        if (f.tri_edges[t][k] == fe) opp = k;
      ext.tri.push_back(t);
      ext.opp_local_vertex.push_back(opp);
      ext.coeff.push_back(trace_values[i]);
    }
  }
  return ext;
}

Vec source_spatial_load(const FineMesh& f, const AssembledForms& forms,
                        const SourceConfig& s) {
  Vec load = Vec::Zero(forms.pressure_dim());
  for (int t = 0; t < forms.n_elem; ++t)
    load[t] = ricker_spatial_factor(fine_centroid(f, t), s) * f.area[t];
  return load;
}

void dump_matrix(const SparseMat& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  for (int r = 0; r < m.outerSize(); ++r)
    for (SparseMat::InnerIterator it(m, r); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace mswave
