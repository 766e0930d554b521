// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and uses only public library API.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "dmpc/platoon.hpp"
#include "dmpc/runtime.hpp"

using namespace dmpc;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail, double seconds) {
  std::printf("criterion %2d: %s  %s  [%.2f s]\n", id, pass ? "PASS" : "FAIL", detail.c_str(),
              seconds);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec sample_box(std::mt19937& rng, const Box& b) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(b.dim());
  for (Eigen::Index i = 0; i < b.dim(); ++i) v(i) = b.c(i) + b.r(i) * u(rng);
  return v;
}

Mat random_mat(std::mt19937& rng, int r, int c, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = u(rng);
  return M;
}

std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), format, a, b);
  return buf;
}

}  // namespace

int main() {
  // shared benchmark artifacts
  const Platoon platoon = build_platoon();
  const ClosedLoop cl = assemble_closed_loop(platoon.model.reduced, platoon.layer);

  // 1: closed-loop assembly and spectral radius
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Platoon p = build_platoon();
    const ClosedLoop loop = assemble_closed_loop(p.model.reduced, p.layer);
    const double rho = spectral_radius(loop.A_cl);
    const double dt = seconds_since(t0);
    report(1, std::abs(rho - 0.9936) <= 1e-3 && dt < 1.0,
           fmt("ten-car closed-loop spectral radius %.5f (target 0.9936 +- 1e-3)", rho), dt);
  }

  // 2: tightening reproduction
  {
    const auto t0 = std::chrono::steady_clock::now();
    const NrfStateSets sets = nrf_state_sets(platoon.layer, platoon.spec);
    const double b0 = std::abs(platoon.model.B_car(0));
    const double lo_ref = 5.01 * b0;
    const double hi_ref = 36.0 * platoon.model.params.T_s - 5.01 * b0;
    bool pass = std::abs(sets.U_f[0].hi(0) - 4.99) <= 1e-12 &&
                std::abs(sets.U_f[0].lo(0) + 4.99) <= 1e-12;
    for (const HPolytope& rows : platoon.spec.coupled_rows) {
      pass = pass && std::abs(rows.h(0) - hi_ref) <= 1e-12;
      pass = pass && std::abs(-rows.h(1) - lo_ref) <= 1e-12;
    }
    report(2, pass,
           fmt("first-layer command bound +-4.99, spacing-increment bounds [%.6f, %.6f]", lo_ref,
               hi_ref),
           seconds_since(t0));
  }

  // 3: certificate over all areas, full offline pipeline
  DesignArtifacts art;
  {
    const auto t0 = std::chrono::steady_clock::now();
    DesignOptions opt;
    opt.rho_max = 1;
    Mat Q = Mat::Zero(3, 3);
    Q(0, 0) = 1e-9;
    opt.Q_x.assign(10, Q);
    bool pass = true;
    std::string detail;
    try {
      art = run_design(cl, platoon.layer, platoon.spec, opt);
      for (const AreaDesign& d : art.areas) pass = pass && d.rho >= 1;
      const double dt = seconds_since(t0);
      pass = pass && dt < 900.0;
      detail = fmt("every area certifies rho >= 1; total design runtime %.3f s", dt);
    } catch (const std::exception& e) {
      pass = false;
      detail = std::string("design failed: ") + e.what();
    }
    report(3, pass, detail, seconds_since(t0));
  }

  // 4 and 5: five seeded benchmark runs, constraints and quiescence
  {
    const auto t0 = std::chrono::steady_clock::now();
    Scenario sc;
    sc.x0 = platoon_equilibrium(platoon, scenario_v0(0));
    const double Ts = platoon.model.params.T_s;
    sc.d = [Ts](Eigen::Index k) { return Vec::Constant(1, Ts * scenario_v0(k)); };

    bool sat = true, quiet = true;
    double worst_seed_seconds = 0.0;
    long violations = 0, loud = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto s0 = std::chrono::steady_clock::now();
      SimulationTrace tr = simulate(platoon.model.reduced, platoon.layer, cl, art, sc, seed, 2000);
      worst_seed_seconds = std::max(worst_seed_seconds, seconds_since(s0));
      sat = sat && !tr.breach && tr.steps.size() == 2000;
      for (const StepRecord& rec : tr.steps) {
        for (int i = 0; i < 10; ++i) {
          const double y = rec.x(3 * i), v = rec.x(3 * i + 1), u = rec.u(i);
          if (y < -360.0 || y > 0.0 || v < 0.0 || v > 36.0 || std::abs(u) > 10.0) ++violations;
          const SolveRecord& s = rec.solves[static_cast<std::size_t>(i)];
          if (s.status != SolveStatus::Optimal) ++violations;
          if (s.slack > 0.5 &&
              (rec.u_s1.segment(3 * i, 3).cwiseAbs().maxCoeff() > 1e-6 ||
               std::abs(rec.u_s2(i)) > 1e-6))
            ++loud;
        }
      }
    }
    sat = sat && violations == 0 && worst_seed_seconds < 120.0;
    quiet = quiet && loud == 0;
    report(4, sat,
           fmt("5 seeds x 2000 steps: %.0f violations, slowest seed %.2f s",
               static_cast<double>(violations), worst_seed_seconds),
           seconds_since(t0));
    report(5, quiet,
           fmt("%.0f steps with slack > 0.5 and supervisor commands above 1e-6",
               static_cast<double>(loud)),
           0.0);
  }

  // 6: distributed versus monolithic propagation
  {
    const auto t0 = std::chrono::steady_clock::now();
    Scenario sc;
    sc.x0 = platoon_equilibrium(platoon, scenario_v0(0));
    const double Ts = platoon.model.params.T_s;
    sc.d = [Ts](Eigen::Index k) { return Vec::Constant(1, Ts * scenario_v0(k)); };
    SimulationTrace a = simulate(platoon.model.reduced, platoon.layer, cl, art, sc, 1, 500);
    SimulationTrace b =
        simulate_monolithic(platoon.model.reduced, platoon.layer, cl, art, sc, 1, 500);
    double gap = 0.0;
    bool pass = !a.breach && !b.breach && a.steps.size() == 500 && b.steps.size() == 500;
    for (std::size_t k = 0; pass && k < a.steps.size(); ++k) {
      gap = std::max(gap, (a.steps[k].x - b.steps[k].x).cwiseAbs().maxCoeff());
      gap = std::max(gap, (a.steps[k].w - b.steps[k].w).cwiseAbs().maxCoeff());
      gap = std::max(gap, (a.steps[k].u - b.steps[k].u).cwiseAbs().maxCoeff());
    }
    pass = pass && gap <= 1e-9;
    report(6, pass, fmt("max state gap over 500 steps %.3g (limit 1e-9)", gap),
           seconds_since(t0));
  }

  // 7: controller-state forward invariance Monte-Carlo
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(11);
    auto part = dmpc::partition(4, 2, {{2, 1}, {2, 1}});
    set_neighbors(part, {{0, 1}, {0, 1}});
    std::vector<NrfBlock> blocks;
    for (Eigen::Index l = 0; l < part.n_u; ++l) {
      NrfBlock b;
      b.order = 3;
      b.a_col = random_mat(rng, 3, 1, 0.3);
      b.K = random_mat(rng, 3, static_cast<int>(part.n_u + part.n_x), 0.2);
      blocks.push_back(std::move(b));
    }
    auto layer = build_nrf_layer(part, std::move(blocks));
    ConstraintSpec spec;
    for (int i = 0; i < part.N; ++i) {
      spec.X.push_back(Box::centered(Vec::Constant(2, 3.0)));
      spec.U.push_back(Box::centered(Vec::Constant(1, 2.0)));
      spec.coupled_rows.push_back({Mat::Zero(0, 3), Vec::Zero(0)});
      spec.U_s1.push_back(Box::centered(Vec::Constant(2, 0.5)));
      spec.U_s2.push_back(Box::centered(Vec::Constant(1, 0.4)));
    }
    spec.V = Box::centered(Vec::Constant(part.n_x + layer.n_w, 0.01));
    spec.D_bf = Box::centered(Vec::Constant(2, 0.01));
    spec.D_bs1 = Box::centered(Vec::Constant(4, 0.01));
    spec.D_bs2 = Box::centered(Vec::Constant(2, 0.01));
    spec.D_d = Box::centered(Vec::Constant(1, 0.05));
    auto sets = nrf_state_sets(layer, spec);

    std::vector<Box> fed_u, fed_x;
    for (int i = 0; i < part.N; ++i) {
      fed_u.push_back(box_sum(sets.U_f[static_cast<std::size_t>(i)],
                              Box{spec.D_bf.c.segment(part.u_offset[i], part.u_size[i]),
                                  spec.D_bf.r.segment(part.u_offset[i], part.u_size[i])}));
      fed_x.push_back(box_sum(
          box_sum(spec.X[static_cast<std::size_t>(i)], area_x_noise(spec, part, i)),
          box_sum(spec.U_s1[static_cast<std::size_t>(i)],
                  Box{spec.D_bs1.c.segment(part.x_offset[i], part.x_size[i]),
                      spec.D_bs1.r.segment(part.x_offset[i], part.x_size[i])})));
    }
    long violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      Vec w(layer.n_w);
      for (std::size_t l = 0; l < layer.blocks.size(); ++l)
        for (int j = 0; j < layer.blocks[l].order; ++j)
          w(layer.w_offset[l] + j) = sample_box(rng, sets.W[l][static_cast<std::size_t>(j)])(0);
      Vec uf_fed(part.n_u), x_fed(part.n_x);
      for (int i = 0; i < part.N; ++i) {
        uf_fed.segment(part.u_offset[i], part.u_size[i]) =
            sample_box(rng, fed_u[static_cast<std::size_t>(i)]);
        x_fed.segment(part.x_offset[i], part.x_size[i]) =
            sample_box(rng, fed_x[static_cast<std::size_t>(i)]);
      }
      const Vec w_next = uf_step(layer, w, uf_fed, x_fed).second;
      for (std::size_t l = 0; l < layer.blocks.size(); ++l)
        for (int j = 1; j < layer.blocks[l].order; ++j) {
          const Box& iv = sets.W[l][static_cast<std::size_t>(j)];
          if (std::abs(w_next(layer.w_offset[l] + j) - iv.c(0)) > iv.r(0) + 1e-9) ++violations;
        }
    }
    report(7, violations == 0,
           fmt("10^4 sampled (state, fed-signal) pairs, %.0f next-state bound violations",
               static_cast<double>(violations)),
           seconds_since(t0));
  }

  // 8: one supervised step keeps certified random systems admissible
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(1234);
    long checked = 0, bad = 0;
    int systems = 0, attempts = 0;
    while (systems < 10 && attempts < 100) {
      ++attempts;
      auto part = dmpc::partition(4, 2, {{2, 1}, {2, 1}});
      set_neighbors(part, {{0, 1}, {0, 1}});
      Mat A = random_mat(rng, 4, 4, 0.2);
      A.diagonal().array() += 0.3;
      Mat B = Mat::Zero(4, 2);
      B(0, 0) = 1.0;
      B(1, 0) = random_mat(rng, 1, 1, 0.2)(0, 0);
      B(2, 1) = 1.0;
      B(3, 1) = random_mat(rng, 1, 1, 0.2)(0, 0);
      auto plant = StateSpace::network_form(A, B, Mat::Zero(4, 1));
      std::vector<NrfBlock> blocks(2);
      for (auto& b : blocks) {
        b.order = 1;
        b.a_col = random_mat(rng, 1, 1, 0.2);
        b.K = random_mat(rng, 1, 6, 0.05);
      }
      NrfLayer layer;
      ClosedLoop loop;
      DesignArtifacts design;
      try {
        layer = build_nrf_layer(part, std::move(blocks));
        loop = assemble_closed_loop(plant, layer);
        ConstraintSpec spec;
        for (int i = 0; i < 2; ++i) {
          spec.X.push_back(Box::centered(Vec::Constant(2, 3.0)));
          spec.U.push_back(Box::centered(Vec::Constant(1, 2.0)));
          spec.coupled_rows.push_back({Mat::Zero(0, 3), Vec::Zero(0)});
          spec.U_s1.push_back(Box::centered(Vec::Constant(2, 5.0)));
          spec.U_s2.push_back(Box::centered(Vec::Constant(1, 1.0)));
        }
        spec.V = Box::centered(Vec::Constant(loop.n_x + loop.n_w, 0.01));
        spec.D_bf = Box::centered(Vec::Constant(2, 0.01));
        spec.D_bs1 = Box::centered(Vec::Constant(4, 0.01));
        spec.D_bs2 = Box::centered(Vec::Constant(2, 0.01));
        spec.D_d = Box::centered(Vec::Constant(1, 0.05));
        DesignOptions opt;
        opt.rho_max = 1;
        design = run_design(loop, layer, spec, opt);
      } catch (const DesignInfeasible&) {
        continue;
      }
      ++systems;
      for (int trial = 0; trial < 100; ++trial) {
        Scenario sc;
        Vec x0(4);
        x0 << sample_box(rng, design.spec.X[0]), sample_box(rng, design.spec.X[1]);
        Vec w0(2);
        w0 << sample_box(rng, area_w_bounds(design.nrf_sets, layer, 0)),
            sample_box(rng, area_w_bounds(design.nrf_sets, layer, 1));
        sc.x0 = x0;
        sc.w0 = w0;
        SimulationTrace tr =
            simulate(plant, layer, loop, design, sc, static_cast<std::uint64_t>(trial), 2);
        ++checked;
        if (tr.breach || tr.steps.size() != 2) {
          ++bad;
          continue;
        }
        const StepRecord& next = tr.steps[1];
        for (int i = 0; i < 2; ++i) {
          const Box& X = design.spec.X[static_cast<std::size_t>(i)];
          for (Eigen::Index c = 0; c < 2; ++c)
            if (std::abs(next.x(2 * i + c) - X.c(c)) > X.r(c) + 1e-9) ++bad;
          const Box& U = design.spec.U[static_cast<std::size_t>(i)];
          if (std::abs(next.u(i) - U.c(0)) > U.r(0) + 1e-9) ++bad;
          const Box W = area_w_bounds(design.nrf_sets, layer, i);
          if (std::abs(next.w(i) - W.c(0)) > W.r(0) + 1e-9) ++bad;
        }
      }
    }
    report(8, systems == 10 && checked == 1000 && bad == 0,
           fmt("10 certified random systems x 100 admissible starts, %.0f violations",
               static_cast<double>(bad)),
           seconds_since(t0));
  }

  // 9: set calculus against brute-force oracles
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(7);
    long bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::uniform_int_distribution<int> dims(2, 3), gens(1, 4);
      const int n = dims(rng), g = gens(rng);
      Zonotope Z{sample_box(rng, Box::centered(Vec::Constant(n, 1.0))), random_mat(rng, n, g, 1.0)};
      Box Bb{sample_box(rng, Box::centered(Vec::Constant(n, 1.0))),
             sample_box(rng, Box::centered(Vec::Constant(n, 1.0))).cwiseAbs()};
      Vec d = sample_box(rng, Box::centered(Vec::Constant(n, 1.0)));

      // support oracle: sign enumeration over generators
      auto support_oracle = [&](const Zonotope& z) {
        double best = -1e300;
        for (int mask = 0; mask < (1 << z.generators()); ++mask) {
          Vec a(z.generators());
          for (int j = 0; j < z.generators(); ++j) a(j) = (mask >> j) & 1 ? 1.0 : -1.0;
          best = std::max(best, d.dot(z.c + z.G * a));
        }
        return best;
      };
      if (std::abs(support(Z, d).value - support_oracle(Z)) > 1e-9) ++bad;

      const Zonotope M = minkowski_sum(Zonotope::from_box(Bb), Z);
      if (std::abs(support(M, d).value - (support(Bb, d).value + support_oracle(Z))) > 1e-9) ++bad;

      // membership certificate on a known interior point and a separated point
      Vec a(g);
      for (int j = 0; j < g; ++j) a(j) = sample_box(rng, Box::interval(-1.0, 1.0))(0);
      const Vec inside = sample_box(rng, Bb) + Z.c + Z.G * a;
      std::vector<ImageTerm> terms{{Mat::Identity(n, n), Bb}, {Mat::Identity(n, n), Z}};
      if (member_of_minkowski_sum(inside, terms) != MemberStatus::Member) ++bad;
      const Vec dn = d.norm() > 1e-9 ? Vec(d / d.norm()) : Vec(Vec::Unit(n, 0));
      const Vec outside = M.c + dn * (support(M, Vec(dn)).value - dn.dot(M.c) + 1e-3);
      if (member_of_minkowski_sum(Vec(outside + 1e-4 * dn), terms) != MemberStatus::NotMember)
        ++bad;

      // Pontryagin tightening: sampled (A (-) B) (+) B stays inside A
      Box Abox{sample_box(rng, Box::centered(Vec::Constant(n, 1.0))),
               Vec(sample_box(rng, Box::centered(Vec::Constant(n, 1.0))).cwiseAbs().array() + 2.0)};
      HPolytope Apoly = HPolytope::from_box(Abox);
      Apoly.H.conservativeResize(Apoly.rows() + 1, n);
      Apoly.h.conservativeResize(Apoly.rows());
      Apoly.H.row(Apoly.rows() - 1) = d.transpose();
      Apoly.h(Apoly.rows() - 1) = support(Abox, d).value * 0.8;
      const HPolytope C = pontryagin_diff(Apoly, Bb);
      for (int s = 0; s < 5; ++s) {
        const Vec p = sample_box(rng, Abox);
        if (!contains(C, p, 0.0)) continue;
        for (int mask = 0; mask < (1 << n); ++mask) {
          Vec b(n);
          for (int j = 0; j < n; ++j)
            b(j) = (mask >> j) & 1 ? Bb.hi(j) : Bb.lo(j);
          if (!contains(Apoly, Vec(p + b), 1e-9)) ++bad;
        }
      }
    }
    report(9, bad == 0,
           fmt("10^3 randomized instances, %.0f oracle mismatches", static_cast<double>(bad)),
           seconds_since(t0));
  }

  // 10: QP solver against active-set enumeration
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(99);
    long bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::uniform_int_distribution<int> nv(2, 8), mc(3, 12);
      const int n = nv(rng), m = mc(rng);
      QpProblem qp;
      Mat R = random_mat(rng, n, n, 1.0);
      qp.P = R.transpose() * R + Mat::Identity(n, n);
      qp.q = sample_box(rng, Box::centered(Vec::Constant(n, 2.0)));
      qp.A_in = random_mat(rng, m, n, 1.0);
      const Vec x0 = sample_box(rng, Box::centered(Vec::Constant(n, 1.0)));
      qp.b_in = qp.A_in * x0 +
                Vec(sample_box(rng, Box::centered(Vec::Constant(m, 1.0))).cwiseAbs().array() + 0.1);

      QpSolution sol = solve_qp(qp);
      if (sol.status != SolveStatus::Optimal) {
        ++bad;
        continue;
      }
      if (sol.primal_residual > 1e-6 || sol.dual_residual > 1e-6) ++bad;

      // oracle: enumerate candidate active sets of size <= n
      double best = 1e300;
      std::vector<int> idx(static_cast<std::size_t>(m));
      for (int mask = 0; mask < (1 << m); ++mask) {
        const int k = __builtin_popcount(static_cast<unsigned>(mask));
        if (k > n) continue;
        Mat As(k, n);
        Vec bs(k);
        int r = 0;
        for (int i = 0; i < m; ++i)
          if ((mask >> i) & 1) {
            As.row(r) = qp.A_in.row(i);
            bs(r) = qp.b_in(i);
            ++r;
          }
        Mat K = Mat::Zero(n + k, n + k);
        K.topLeftCorner(n, n) = qp.P;
        if (k > 0) {
          K.topRightCorner(n, k) = As.transpose();
          K.bottomLeftCorner(k, n) = As;
        }
        Vec rhs(n + k);
        rhs.head(n) = -qp.q;
        if (k > 0) rhs.tail(k) = bs;
        Eigen::FullPivLU<Mat> lu(K);
        if (!lu.isInvertible()) continue;
        Vec xl = lu.solve(rhs);
        const Vec x = xl.head(n);
        if (k > 0 && xl.tail(k).minCoeff() < -1e-8) continue;
        if ((qp.A_in * x - qp.b_in).maxCoeff() > 1e-8) continue;
        best = std::min(best, 0.5 * x.dot(qp.P * x) + qp.q.dot(x));
      }
      if (std::abs(sol.objective - best) > 1e-6 * (1.0 + std::abs(best))) ++bad;
    }
    report(10, bad == 0,
           fmt("10^3 random programs, %.0f mismatches against enumeration",
               static_cast<double>(bad)),
           seconds_since(t0));
  }

  std::printf("%s\n", failures == 0 ? "ACCEPTANCE: all criteria passed"
                                    : "ACCEPTANCE: FAILURES PRESENT");
  return failures == 0 ? 0 : 1;
}
