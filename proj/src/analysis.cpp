#include "mswave/analysis.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mswave {

double q_norm(const Vec& pressure, const AssembledForms& forms) {
  if (pressure.size() != forms.pressure_dim())
    throw std::invalid_argument("pressure vector does not match the forms");
  return std::sqrt(pressure.dot(forms.pressure_mass.asDiagonal() * pressure));
}

double v_norm(const Vec& velocity, const AssembledForms& forms) {
  if (velocity.size() != forms.n_vel)
    throw std::invalid_argument("velocity vector does not match the forms");
  return std::sqrt(velocity.dot(forms.velocity_mass * velocity));
}

InterpolantCoefficients expansion_coefficients(const Vec& velocity, const Vec& pressure,
                                               const MeshHierarchy& h, const Spaces& s,
                                               const AssembledForms& forms,
                                               const OfflineBasis& basis) {
  if (velocity.size() != forms.n_vel || pressure.size() != forms.pressure_dim())
    throw std::invalid_argument("field sizes do not match the forms");
  const FineMesh& f = h.fine;
  InterpolantCoefficients co;

  Vec div_v = forms.div_coupling * velocity;  // per element: integral of q div v

  for (size_t e = 0; e < basis.edges.size(); ++e) {
    const EdgeBasisEntry& entry = basis.edges[e];
    if (entry.edge < 0) continue;
    const int m = static_cast<int>(entry.fine_edges.size());
    Vec len(m);
    for (int i = 0; i < m; ++i) len[i] = f.edges[entry.fine_edges[i]].length;
    double total_len = len.sum();

    for (size_t g = 0; g < entry.groups.size(); ++g) {
      const EdgeFunctionGroup& grp = entry.groups[g];
      InterpolantCoefficients::EdgeGroupCoeffs egc;
      egc.edge = static_cast<int>(e);
      egc.group = static_cast<int>(g);
      Vec trace(m);
      for (int i = 0; i < m; ++i)
        trace[i] = velocity[grp.trace_dofs[i]] * entry.alpha[i];
      egc.flux_mean = len.dot(trace) / total_len;
      egc.flux_modes.resize(entry.n_snapshots);
      for (int j = 0; j < entry.n_snapshots; ++j)
        egc.flux_modes[j] = (len.array() * trace.array() * entry.trace.col(j).array()).sum();
      co.edge_groups.push_back(std::move(egc));
    }

    if (s.edge_decoupled[e]) {
      InterpolantCoefficients::EdgeTraceCoeffs etc;
      etc.edge = static_cast<int>(e);
      Vec tr(m);
      for (int i = 0; i < m; ++i) {
        int active = s.penalty.edge_to_active[entry.fine_edges[i]];
        tr[i] = pressure[forms.n_elem + active];
      }
      etc.trace_mean = len.dot(tr) / total_len;
      etc.trace_modes.resize(entry.n_snapshots);
      for (int j = 0; j < entry.n_snapshots; ++j)
        etc.trace_modes[j] = (len.array() * tr.array() * entry.trace.col(j).array()).sum();
      co.edge_traces.push_back(std::move(etc));
    }
  }

  for (size_t k = 0; k < basis.elements.size(); ++k) {
    const ElementBasisEntry& entry = basis.elements[k];
    if (entry.coarse_tri < 0) continue;
    InterpolantCoefficients::ElementCoeffs ec;
    ec.elem = static_cast<int>(k);
    double area = 0.0, mean = 0.0;
    for (int t : entry.elements) {
      area += f.area[t];
      mean += pressure[t] * f.area[t];
    }
    ec.pressure_mean = mean / area;
    ec.pressure_modes.resize(entry.n_modes);
    ec.velocity_modes.resize(entry.n_modes);
    for (int j = 0; j < entry.n_modes; ++j) {
      double aj = 0.0, dj = 0.0;
      for (size_t i = 0; i < entry.elements.size(); ++i) {
        int t = entry.elements[i];
        aj += forms.pressure_mass[t] * pressure[t] * entry.pressure(i, j);
        dj += entry.pressure(i, j) * div_v[t];
      }
      ec.pressure_modes[j] = aj;
      // the divergence pairing determines the mode weight through the
      // eigenvalue: mu_j * d_j = integral of p_j div(v)
      ec.velocity_modes[j] = dj / entry.eigenvalues[j];
    }
    co.elements.push_back(std::move(ec));
  }
  return co;
}

Interpolants interpolate(const Vec& velocity, const Vec& pressure, const MeshHierarchy& h,
                         const Spaces& s, const AssembledForms& forms,
                         const OfflineBasis& basis, const Selection& sel) {
  InterpolantCoefficients co =
      expansion_coefficients(velocity, pressure, h, s, forms, basis);
  Interpolants out;
  out.velocity = Vec::Zero(forms.n_vel);
  out.pressure = Vec::Zero(forms.pressure_dim());

  for (const auto& egc : co.edge_groups) {
    const EdgeBasisEntry& entry = basis.edges[egc.edge];
    const EdgeFunctionGroup& grp = entry.groups[egc.group];
    int keep = sel.edge_modes[egc.edge];
    for (size_t i = 0; i < grp.dofs.size(); ++i) {
      double val = egc.flux_mean * grp.unit_flux[i];
      for (int j = 0; j < keep; ++j) val += egc.flux_modes[j] * grp.modes(i, j);
      out.velocity[grp.dofs[i]] += val;
    }
  }
  for (const auto& etc : co.edge_traces) {
    const EdgeBasisEntry& entry = basis.edges[etc.edge];
    int keep = sel.edge_modes[etc.edge];
    for (size_t i = 0; i < entry.fine_edges.size(); ++i) {
      int active = s.penalty.edge_to_active[entry.fine_edges[i]];
      double val = etc.trace_mean;
      for (int j = 0; j < keep; ++j) val += etc.trace_modes[j] * entry.trace(i, j);
      out.pressure[forms.n_elem + active] = val;
    }
  }
  for (const auto& ec : co.elements) {
    const ElementBasisEntry& entry = basis.elements[ec.elem];
    int keep = sel.element_modes[ec.elem];
    for (size_t i = 0; i < entry.elements.size(); ++i) {
      double val = ec.pressure_mean;
      for (int j = 0; j < keep; ++j) val += ec.pressure_modes[j] * entry.pressure(i, j);
      out.pressure[entry.elements[i]] = val;
    }
    for (int j = 0; j < keep; ++j)
      for (size_t i = 0; i < entry.velocity_dofs.size(); ++i)
        out.velocity[entry.velocity_dofs[i]] += ec.velocity_modes[j] * entry.velocity(i, j);
  }
  return out;
}

std::array<double, 4> lemma_residuals(const Vec& velocity, const Vec& pressure,
                                      const MeshHierarchy& h, const Spaces& s,
                                      const AssembledForms& forms,
                                      const OfflineBasis& basis, const Selection& sel,
                                      const OfflineSpace& space) {
  Interpolants pi = interpolate(velocity, pressure, h, s, forms, basis, sel);

  Vec diff_p = pressure - pi.pressure;
  Vec diff_v = velocity - pi.velocity;
  Vec diff_p_elem = diff_p.head(forms.n_elem);
  Vec diff_p_pen = diff_p.tail(forms.n_penalty);

  // r1: divergence pairing of the interior-pressure defect with every
  // velocity basis function; r2: jump pairing of the trace defect
  Vec y1 = SparseMat(forms.div_coupling.transpose()) * diff_p_elem;
  Vec y2 = SparseMat(forms.jump_coupling.transpose()) * diff_p_pen;
  double r1 = (SparseMat(space.velocity.transpose()) * y1).lpNorm<Eigen::Infinity>();
  double r2 = (SparseMat(space.velocity.transpose()) * y2).lpNorm<Eigen::Infinity>();

  // r3/r4: the analogous pairings of the velocity defect with every pressure
  // basis function, split into its element and trace components
  Vec z = Vec::Zero(forms.pressure_dim());
  z.head(forms.n_elem) = forms.div_coupling * diff_v;
  double r3 = (SparseMat(space.pressure.transpose()) * z).lpNorm<Eigen::Infinity>();
  z.setZero();
  z.tail(forms.n_penalty) = forms.jump_coupling * diff_v;
  double r4 = (SparseMat(space.pressure.transpose()) * z).lpNorm<Eigen::Infinity>();
  return {r1, r2, r3, r4};
}

ErrorReport compare_to_reference(const History& coarse, const OfflineSpace& space,
                                 const History& fine, const AssembledForms& forms) {
  if (std::abs(coarse.dt - fine.dt) > 1e-14 * fine.dt || coarse.n_steps != fine.n_steps)
    throw std::invalid_argument("histories do not share a time grid");
  if (coarse.sample_steps != fine.sample_steps)
    throw std::invalid_argument("histories do not share sample steps");

  ErrorReport rep;
  auto relative = [&](const Vec& vh, const Vec& ph, const Vec& vc, const Vec& pc,
                      double& rp, double& rv) {
    Vec pv = space.pressure * pc;
    Vec vv = space.velocity * vc;
    double np = q_norm(ph, forms), nv = v_norm(vh, forms);
    rp = q_norm(Vec(ph - pv), forms) / (np > 0 ? np : 1.0);
    rv = v_norm(Vec(vh - vv), forms) / (nv > 0 ? nv : 1.0);
  };
  for (size_t i = 0; i < coarse.sample_steps.size(); ++i) {
    ErrorReport::Sample smp;
    smp.step = coarse.sample_steps[i];
    smp.time = smp.step * coarse.dt;
    relative(fine.velocity[i], fine.pressure[i], coarse.velocity[i], coarse.pressure[i],
             smp.rel_p, smp.rel_v);
    rep.samples.push_back(smp);
  }
  relative(fine.final_velocity, fine.final_pressure, coarse.final_velocity,
           coarse.final_pressure, rep.final_rel_p, rep.final_rel_v);
  return rep;
}

void write_error_csv(const std::string& path, const std::vector<ErrorReport>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "nb_boundary, nb_interior, rel_err_p, rel_err_v\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.boundary_count << ", " << r.interior_count << ", " << r.final_rel_p << ", "
        << r.final_rel_v << "\n";
}

std::vector<std::array<double, 4>> read_error_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::array<double, 4>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    for (auto& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ss(line);
    std::array<double, 4> row{};
    if (ss >> row[0] >> row[1] >> row[2] >> row[3]) rows.push_back(row);
  }
  return rows;
}

}  // namespace mswave
