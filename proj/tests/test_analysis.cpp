#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mswave/analysis.hpp"
#include "mswave/io.hpp"
#include "oracles.hpp"

using namespace mswave;

namespace {

// heterogeneous kappa, unit density: the interpolant coefficient formulas
// assume a density that is constant on each coarse element
MediumField test_medium(const FineMesh& f, std::uint64_t seed, double spread = 4.0) {
  auto gen = oracle::rng(seed);
  MediumField m;
  m.kappa.resize(f.triangles.size());
  m.rho = Vec::Ones(f.triangles.size());
  for (Eigen::Index i = 0; i < m.kappa.size(); ++i)
    m.kappa[i] = 1.0 + spread * oracle::uniform01(gen);
  return m;
}

struct Fixture {
  MeshHierarchy h;
  MediumField med;
  Spaces s;
  AssembledForms forms;
  OfflineBasis basis;

  Fixture(int n, int r, std::uint64_t seed) : h(build_hierarchy(n, r)) {
    med = test_medium(h.fine, seed);
    s = build_spaces(h.fine, h.bands, h.edges);
    forms = assemble_forms(h.fine, med, s);
    basis = build_offline_basis(h, med, s, 2);
  }

  Selection full_selection() const {
    Selection sel;
    sel.edge_modes.resize(basis.edges.size());
    sel.element_modes.resize(basis.elements.size());
    for (size_t e = 0; e < basis.edges.size(); ++e)
      sel.edge_modes[e] = basis.edges[e].n_snapshots;
    for (size_t k = 0; k < basis.elements.size(); ++k)
      sel.element_modes[k] = basis.elements[k].n_modes;
    return sel;
  }
};

}  // namespace

TEST_CASE("weighted norms") {
  MeshHierarchy h = build_hierarchy(2, 1);
  MediumField med = constant_medium(h.fine, 1.0, 1.0);
  Spaces s = build_spaces(h.fine, h.bands, h.edges);
  AssembledForms forms = assemble_forms(h.fine, med, s);

  SUBCASE("unit pressure on the unit square has unit norm") {
    Vec p = Vec::Zero(forms.pressure_dim());
    p.head(forms.n_elem).setOnes();
    CHECK(q_norm(p, forms) == doctest::Approx(1.0).epsilon(1e-13));
  }

  SUBCASE("homogeneity") {
    auto gen = oracle::rng(1);
    Vec p = oracle::random_vec(gen, forms.pressure_dim());
    CHECK(q_norm(Vec(-3.0 * p), forms) == doctest::Approx(3.0 * q_norm(p, forms)));
    Vec v = oracle::random_vec(gen, forms.n_vel);
    CHECK(v_norm(Vec(2.0 * v), forms) == doctest::Approx(2.0 * v_norm(v, forms)));
  }

  SUBCASE("norm squared equals the assembled quadratic form") {
    auto gen = oracle::rng(2);
    Vec p = oracle::random_vec(gen, forms.pressure_dim());
    double direct = p.dot(forms.pressure_mass.asDiagonal() * p);
    CHECK(q_norm(p, forms) * q_norm(p, forms) == doctest::Approx(direct).epsilon(1e-13));
    Vec v = oracle::random_vec(gen, forms.n_vel);
    double vdirect = v.dot(forms.velocity_mass * v);
    CHECK(v_norm(v, forms) * v_norm(v, forms) == doctest::Approx(vdirect).epsilon(1e-13));
  }
}

TEST_CASE("interpolation") {
  Fixture fx(2, 2, 11);
  auto gen = oracle::rng(12);

  SUBCASE("zero fields give zero interpolants") {
    Interpolants pi = interpolate(Vec::Zero(fx.forms.n_vel), Vec::Zero(fx.forms.pressure_dim()),
                                  fx.h, fx.s, fx.forms, fx.basis, fx.full_selection());
    CHECK(pi.velocity.norm() == 0.0);
    CHECK(pi.pressure.norm() == 0.0);
  }

  SUBCASE("full selection reproduces the interior pressure exactly") {
    Vec p = oracle::random_vec(gen, fx.forms.pressure_dim());
    Vec v = Vec::Zero(fx.forms.n_vel);
    Interpolants pi = interpolate(v, p, fx.h, fx.s, fx.forms, fx.basis, fx.full_selection());
    Vec diff = pi.pressure.head(fx.forms.n_elem) - p.head(fx.forms.n_elem);
    CHECK(diff.lpNorm<Eigen::Infinity>() < 1e-11 * p.lpNorm<Eigen::Infinity>());
    // the trace component is reproduced as well
    Vec diff_pen = pi.pressure.tail(fx.forms.n_penalty) - p.tail(fx.forms.n_penalty);
    CHECK(diff_pen.lpNorm<Eigen::Infinity>() < 1e-11 * p.lpNorm<Eigen::Infinity>());
  }

  SUBCASE("truncation residual is Q-orthogonal to the kept element modes") {
    Selection sel = uniform_selection(fx.basis, 2, 4);
    Vec p = oracle::random_vec(gen, fx.forms.pressure_dim());
    Vec v = Vec::Zero(fx.forms.n_vel);
    Interpolants pi = interpolate(v, p, fx.h, fx.s, fx.forms, fx.basis, sel);
    Vec resid = p.head(fx.forms.n_elem) - pi.pressure.head(fx.forms.n_elem);
    for (const auto& entry : fx.basis.elements) {
      for (int j = 0; j < sel.element_modes[entry.coarse_tri]; ++j) {
        double ip = 0.0;
        for (size_t i = 0; i < entry.elements.size(); ++i)
          ip += fx.forms.pressure_mass[entry.elements[i]] * entry.pressure(i, j) *
                resid[entry.elements[i]];
        CHECK(std::abs(ip) < 1e-11 * q_norm(p, fx.forms));
      }
    }
  }

  SUBCASE("pythagoras under truncation") {
    Selection sel = uniform_selection(fx.basis, 2, 5);
    Vec p = oracle::random_vec(gen, fx.forms.pressure_dim());
    Vec v = Vec::Zero(fx.forms.n_vel);
    Interpolants pi = interpolate(v, p, fx.h, fx.s, fx.forms, fx.basis, sel);
    Vec pe = p.head(fx.forms.n_elem), pie = pi.pressure.head(fx.forms.n_elem);
    double full = 0.0, kept = 0.0, resid = 0.0;
    for (int t = 0; t < fx.forms.n_elem; ++t) {
      full += fx.forms.pressure_mass[t] * pe[t] * pe[t];
      kept += fx.forms.pressure_mass[t] * pie[t] * pie[t];
      resid += fx.forms.pressure_mass[t] * (pe[t] - pie[t]) * (pe[t] - pie[t]);
    }
    CHECK(full == doctest::Approx(kept + resid).epsilon(1e-10));
  }
}

TEST_CASE("orthogonality certificate for the truncation") {
  Fixture fx(2, 2, 21);
  auto gen = oracle::rng(22);

  std::vector<std::pair<int, int>> selections = {{1, 0}, {2, 2}, {3, 5}, {2, 0}, {3, 15}};
  for (auto [b, i] : selections) {
    Selection sel = uniform_selection(fx.basis, b, i);
    OfflineSpace space = assemble_offline_space(fx.h, fx.s, fx.basis, sel);
    for (int trial = 0; trial < 6; ++trial) {
      Vec v = oracle::random_vec(gen, fx.forms.n_vel);
      Vec p = oracle::random_vec(gen, fx.forms.pressure_dim());
      auto res = lemma_residuals(v, p, fx.h, fx.s, fx.forms, fx.basis, sel, space);
      double vn = v_norm(v, fx.forms);
      double pn = q_norm(p, fx.forms);
      CHECK(res[0] < 1e-10 * pn);
      CHECK(res[1] < 1e-10 * pn);
      CHECK(res[2] < 1e-10 * vn);
      CHECK(res[3] < 1e-10 * vn);
    }
  }
}

TEST_CASE("interpolation error tracks the eigenvalue envelope") {
  Fixture fx(2, 3, 31);
  auto gen = oracle::rng(32);
  Vec v = oracle::random_vec(gen, fx.forms.n_vel);
  Vec p = Vec::Zero(fx.forms.pressure_dim());

  std::vector<std::pair<int, int>> selections = {{1, 0}, {2, 4}, {3, 12}, {5, 24}, {7, 48}};
  double first_ratio = -1.0;
  double prev_err = -1.0;
  for (auto [b, i] : selections) {
    Selection sel = uniform_selection(fx.basis, b, i);
    Interpolants pi = interpolate(v, p, fx.h, fx.s, fx.forms, fx.basis, sel);
    double err = v_norm(Vec(v - pi.velocity), fx.forms);
    double envelope = 0.0;
    for (const auto& e : fx.basis.edges) {
      if (e.edge < 0 || e.n_snapshots == 0) continue;
      int keep = sel.edge_modes[e.edge];
      if (keep < e.n_snapshots) envelope = std::max(envelope, 1.0 / e.eigenvalues[keep]);
    }
    for (const auto& k : fx.basis.elements) {
      if (k.coarse_tri < 0 || k.n_modes == 0) continue;
      int keep = sel.element_modes[k.coarse_tri];
      if (keep < k.n_modes) envelope = std::max(envelope, 1.0 / k.eigenvalues[keep]);
    }
    if (prev_err >= 0.0) CHECK(err <= prev_err * (1.0 + 1e-12));
    prev_err = err;
    if (envelope == 0.0) continue;  // nothing truncated
    double ratio = err * err / envelope;
    if (first_ratio < 0.0)
      first_ratio = ratio;
    else
      CHECK(ratio <= 10.0 * first_ratio);
  }
}

TEST_CASE("comparison against the reference history") {
  MeshHierarchy h = build_hierarchy(2, 1);
  MediumField med = test_medium(h.fine, 41);
  SourceConfig src;
  src.f0 = 12.0;
  src.delta = 0.25;
  TimeOptions opts;
  opts.T = 0.06;
  opts.sample_every = 4;

  History fine = run_fine_reference(h, med, src, opts);

  Spaces s = build_spaces(h.fine, h.bands, h.edges);
  AssembledForms forms = assemble_forms(h.fine, med, s);
  OfflineSpace id = identity_offline_space(s, forms);
  ReducedSystem sys = reduce_system(id, forms);
  TimeOptions opts2 = opts;
  opts2.dt = fine.dt;
  Vec spatial = source_spatial_load(h.fine, forms, src);
  History red = run_leapfrog(make_ops(sys), spatial,
                             [&src](double t) { return ricker_time_factor(t, src.f0); }, opts2);

  SUBCASE("identity reduction reports zero error") {
    ErrorReport rep = compare_to_reference(red, id, fine, forms);
    CHECK(rep.final_rel_p < 1e-12);
    CHECK(rep.final_rel_v < 1e-12);
    for (const auto& smp : rep.samples) {
      CHECK(smp.rel_p < 1e-12);
      CHECK(smp.rel_v < 1e-12);
    }
  }

  SUBCASE("mismatched grids are rejected") {
    TimeOptions opts3 = opts;
    opts3.dt = fine.dt * 0.5;
    History other = run_leapfrog(make_ops(sys), spatial,
                                 [&src](double t) { return ricker_time_factor(t, src.f0); },
                                 opts3);
    CHECK_THROWS_AS(compare_to_reference(other, id, fine, forms), std::invalid_argument);
  }
}

TEST_CASE("error table round trip") {
  std::vector<ErrorReport> rows(2);
  rows[0].boundary_count = 3;
  rows[0].interior_count = 4;
  rows[0].final_rel_p = 0.1322;
  rows[0].final_rel_v = 0.21;
  rows[1].boundary_count = 4;
  rows[1].interior_count = 8;
  rows[1].final_rel_p = 0.0576;
  rows[1].final_rel_v = 0.11;
  auto path = (std::filesystem::temp_directory_path() / "mswave_table_test.csv").string();
  write_error_csv(path, rows);
  auto back = read_error_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0][0] == 3);
  CHECK(back[0][2] == doctest::Approx(0.1322));
  CHECK(back[1][1] == 8);
  CHECK(back[1][3] == doctest::Approx(0.11));
  std::filesystem::remove(path);
}
