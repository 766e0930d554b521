#include "dmpc/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dmpc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kZeta = 0, kBetaF, kBetaS1, kBetaS2, kNuX, kNuW };

}  // namespace

double NoiseSource::uniform(std::uint64_t stream, std::uint64_t step, std::uint64_t index) const {
  const std::uint64_t z =
      splitmix64(splitmix64(splitmix64(splitmix64(seed) + stream) + step) + index);
  return 2.0 * (static_cast<double>(z >> 11) * 0x1.0p-53) - 1.0;
}

Vec NoiseSource::box(const Box& b, std::uint64_t stream, std::uint64_t step) const {
  Vec v(b.dim());
  for (Eigen::Index i = 0; i < b.dim(); ++i)
    v(i) = b.c(i) + b.r(i) * uniform(stream, step, static_cast<std::uint64_t>(i));
  return v;
}

std::vector<AreaMessage> bus_round(const ClosedLoop& cl, const std::vector<AreaMessage>& truth,
                                   const Vec& nu_x, const Vec& nu_w) {
  if (static_cast<int>(truth.size()) != cl.part.N)
    throw std::runtime_error("bus_round: missing initial-condition report");
  if (nu_x.size() != cl.n_x || nu_w.size() != cl.n_w)
    throw std::invalid_argument("bus_round: corruption vector dimension mismatch");
  std::vector<AreaMessage> out;
  out.reserve(truth.size());
  for (int i = 0; i < cl.part.N; ++i) {
    const AreaMessage& msg = truth[static_cast<std::size_t>(i)];
    if (msg.sender != i)
      throw std::runtime_error("bus_round: reports must arrive once per sender, in order");
    if (msg.x_c.size() != cl.part.x_size[i] || msg.w_c.size() != cl.w_area_size[i])
      throw std::invalid_argument("bus_round: report dimension mismatch");
    AreaMessage c = msg;
    c.x_c += nu_x.segment(cl.part.x_offset[i], cl.part.x_size[i]);
    c.w_c += nu_w.segment(cl.w_area_offset[i], cl.w_area_size[i]);
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

// Appends box rows on one command block of the stacked decision vector.
// Zero half-widths become native equality rows.
void append_budget_rows(const Box& b, Eigen::Index offset, Eigen::Index nz, int copies,
                        std::vector<Vec>& in_rows, std::vector<double>& in_rhs,
                        std::vector<Vec>& eq_rows, std::vector<double>& eq_rhs) {
  for (int s = 0; s < copies; ++s) {
    for (Eigen::Index i = 0; i < b.dim(); ++i) {
      Vec row = Vec::Zero(nz);
      row(offset + s * b.dim() + i) = 1.0;
      if (b.r(i) == 0.0) {
        eq_rows.push_back(row);
        eq_rhs.push_back(b.c(i));
      } else {
        in_rows.push_back(row);
        in_rhs.push_back(b.hi(i));
        in_rows.push_back(-row);
        in_rhs.push_back(-b.lo(i));
      }
    }
  }
}

}  // namespace

StepCommands subcontroller_step(SubcontrollerState& st, const ClosedLoop& cl,
                                const std::vector<AreaMessage>& delivered, Eigen::Index k) {
  const AreaDesign& d = *st.design;
  const AreaModel& m = d.model;
  const int T = d.T, Tb = d.T_bar, Hn = T + Tb;
  const Eigen::Index n1 = m.B_s1.cols(), n2 = m.B_s2.cols();
  const Eigen::Index nz = n1 * T + n2 * Hn;

  std::vector<std::pair<Vec, Vec>> reports;
  for (int j : cl.part.neighbors[st.area]) {
    const AreaMessage& msg = delivered.at(static_cast<std::size_t>(j));
    reports.emplace_back(msg.x_c, msg.w_c);
  }

  // prediction maps: xi_t = sum_{s<t} A^{t-1-s} (B1 u1[s] + B2 u2[s]), u1 only
  // defined for s < T
  std::vector<Mat> powers(static_cast<std::size_t>(Hn));
  powers[0] = Mat::Identity(m.n_s(), m.n_s());
  for (int p = 1; p < Hn; ++p) powers[static_cast<std::size_t>(p)] = m.A_s * powers[p - 1];
  std::vector<Mat> G(static_cast<std::size_t>(Hn));
  for (int t = 1; t <= Hn; ++t) {
    Mat& Gt = G[static_cast<std::size_t>(t) - 1];
    Gt = Mat::Zero(m.n_s(), nz);
    for (int s = 0; s < t; ++s) {
      const Mat& Ap = powers[static_cast<std::size_t>(t - 1 - s)];
      if (s < T) Gt.middleCols(n1 * s, n1) = Ap * m.B_s1;
      if (s < Hn) Gt.middleCols(n1 * T + n2 * s, n2) = Ap * m.B_s2;
    }
  }

  QpProblem qp;
  qp.P = Mat::Zero(nz, nz);
  qp.P.diagonal().array() += 2.0;  // unit command weight on every decision
  qp.q = Vec::Zero(nz);
  std::vector<Vec> in_rows, eq_rows;
  std::vector<double> in_rhs, eq_rhs;
  double slack = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= Hn; ++t) {
    const Mat Gx = m.C_x * G[static_cast<std::size_t>(t) - 1];
    Vec theta_x = Vec::Zero(m.C_x.rows());
    if (t <= T) {
      Vec theta_u;
      std::tie(theta_x, theta_u) = theta_signals(cl, st.area, reports, t);
      HPolytope pc = xi_constraint(d, t, theta_x, theta_u);
      const Mat rows = pc.H * G[static_cast<std::size_t>(t) - 1];
      for (Eigen::Index r = 0; r < pc.rows(); ++r) {
        in_rows.push_back(rows.row(r).transpose());
        in_rhs.push_back(pc.h(r));
      }
      if (t == 1 && pc.rows() > 0) slack = pc.h.minCoeff();
    }
    qp.P += 2.0 * Gx.transpose() * d.Q_x * Gx;
    qp.q += 2.0 * Gx.transpose() * d.Q_x * theta_x;
  }
  append_budget_rows(st.U_s1, 0, nz, T, in_rows, in_rhs, eq_rows, eq_rhs);
  append_budget_rows(st.U_s2, n1 * T, nz, Hn, in_rows, in_rhs, eq_rows, eq_rhs);

  qp.A_in = Mat::Zero(static_cast<Eigen::Index>(in_rows.size()), nz);
  qp.b_in = Vec::Zero(static_cast<Eigen::Index>(in_rows.size()));
  for (std::size_t r = 0; r < in_rows.size(); ++r) {
    qp.A_in.row(static_cast<Eigen::Index>(r)) = in_rows[r].transpose();
    qp.b_in(static_cast<Eigen::Index>(r)) = in_rhs[r];
  }
  qp.A_eq = Mat::Zero(static_cast<Eigen::Index>(eq_rows.size()), nz);
  qp.b_eq = Vec::Zero(static_cast<Eigen::Index>(eq_rows.size()));
  for (std::size_t r = 0; r < eq_rows.size(); ++r) {
    qp.A_eq.row(static_cast<Eigen::Index>(r)) = eq_rows[r].transpose();
    qp.b_eq(static_cast<Eigen::Index>(r)) = eq_rhs[r];
  }

  SolverOptions opts;
  opts.reg = st.reg;
  const Vec* warm = st.warm.size() == nz ? &st.warm : nullptr;
  const auto start = std::chrono::steady_clock::now();
  QpSolution sol = solve_qp(qp, opts, warm);
  st.last.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  st.last.status = sol.status;
  st.last.iterations = sol.iterations;
  st.last.slack = slack;
  (void)k;

  StepCommands cmd{Vec::Zero(n1), Vec::Zero(n2)};
  if (sol.status == SolveStatus::Optimal) {
    st.warm = sol.x;
    cmd.u_s1 = sol.x.head(n1);
    cmd.u_s2 = sol.x.segment(n1 * T, n2);
  }
  return cmd;
}

namespace {

SimulationTrace simulate_impl(const StateSpace& plant, const NrfLayer& layer, const ClosedLoop& cl,
                              const DesignArtifacts& art, const Scenario& scenario,
                              std::uint64_t seed, Eigen::Index horizon,
                              const RuntimeOptions& options, bool monolithic) {
  if (scenario.x0.size() != cl.n_x)
    throw std::invalid_argument("simulate: initial state dimension mismatch");
  Vec x = scenario.x0;
  Vec w = scenario.w0.size() == 0 ? Vec(Vec::Zero(cl.n_w)) : scenario.w0;
  if (w.size() != cl.n_w)
    throw std::invalid_argument("simulate: initial controller state dimension mismatch");

  // admissible-start check: per-area state boxes and controller-state bounds
  for (int i = 0; i < cl.part.N; ++i) {
    const Vec xi = x.segment(cl.part.x_offset[i], cl.part.x_size[i]);
    const Box& Xi = art.spec.X[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < xi.size(); ++c)
      if (std::abs(xi(c) - Xi.c(c)) > Xi.r(c) + 1e-12)
        throw std::invalid_argument("simulate: initial state of area " + std::to_string(i) +
                                    " violates its box at coordinate " + std::to_string(c));
    const Box Wi = area_w_bounds(art.nrf_sets, layer, i);
    const Vec wi = w.segment(cl.w_area_offset[i], cl.w_area_size[i]);
    for (Eigen::Index c = 0; c < wi.size(); ++c)
      if (std::abs(wi(c) - Wi.c(c)) > Wi.r(c) + 1e-12)
        throw std::invalid_argument("simulate: initial controller state of area " +
                                    std::to_string(i) + " violates its bounds at coordinate " +
                                    std::to_string(c));
  }

  const Mat C_w = layer.C_w();
  const Box zeta_box{art.spec.V.c.head(cl.n_x), art.spec.V.r.head(cl.n_x)};
  const Box nu_w_box{art.spec.V.c.tail(cl.n_w), art.spec.V.r.tail(cl.n_w)};
  NoiseSource ns{seed};

  std::vector<SubcontrollerState> sub;
  for (int i = 0; i < cl.part.N; ++i) {
    SubcontrollerState st;
    st.area = i;
    st.design = &art.areas[static_cast<std::size_t>(i)];
    st.U_s1 = art.spec.U_s1[static_cast<std::size_t>(i)];
    st.U_s2 = art.spec.U_s2[static_cast<std::size_t>(i)];
    st.reg = options.reg;
    sub.push_back(std::move(st));
  }

  SimulationTrace trace;
  trace.seed = seed;
  trace.steps.reserve(static_cast<std::size_t>(horizon));
  for (Eigen::Index k = 0; k < horizon; ++k) {
    StepRecord rec;
    const std::uint64_t ks = static_cast<std::uint64_t>(k);
    const bool on = scenario.noise;
    rec.zeta = on ? ns.box(zeta_box, kZeta, ks) : Vec(Vec::Zero(cl.n_x));
    rec.beta_f = on ? ns.box(art.spec.D_bf, kBetaF, ks) : Vec(Vec::Zero(cl.n_u));
    rec.beta_s1 = on ? ns.box(art.spec.D_bs1, kBetaS1, ks) : Vec(Vec::Zero(cl.n_x));
    rec.beta_s2 = on ? ns.box(art.spec.D_bs2, kBetaS2, ks) : Vec(Vec::Zero(cl.n_u));
    rec.nu_x = on ? ns.box(zeta_box, kNuX, ks) : Vec(Vec::Zero(cl.n_x));
    rec.nu_w = on ? ns.box(nu_w_box, kNuW, ks) : Vec(Vec::Zero(cl.n_w));
    rec.d = scenario.d ? scenario.d(k) : Vec(Vec::Zero(cl.n_d));
    if (rec.d.size() != cl.n_d)
      throw std::invalid_argument("simulate: exogenous profile dimension mismatch");

    std::vector<AreaMessage> truth;
    for (int i = 0; i < cl.part.N; ++i)
      truth.push_back({i, k, x.segment(cl.part.x_offset[i], cl.part.x_size[i]),
                       w.segment(cl.w_area_offset[i], cl.w_area_size[i])});
    const std::vector<AreaMessage> reports = bus_round(cl, truth, rec.nu_x, rec.nu_w);

    rec.u_s1 = Vec::Zero(cl.n_x);
    rec.u_s2 = Vec::Zero(cl.n_u);
    rec.solves.resize(static_cast<std::size_t>(cl.part.N));
    bool infeasible = false;
    for (int i = 0; i < cl.part.N; ++i) {
      StepCommands cmd = subcontroller_step(sub[static_cast<std::size_t>(i)], cl, reports, k);
      rec.solves[static_cast<std::size_t>(i)] = sub[static_cast<std::size_t>(i)].last;
      infeasible |= sub[static_cast<std::size_t>(i)].last.status != SolveStatus::Optimal;
      rec.u_s1.segment(cl.part.x_offset[i], cl.part.x_size[i]) = cmd.u_s1;
      rec.u_s2.segment(cl.part.u_offset[i], cl.part.u_size[i]) = cmd.u_s2;
    }

    rec.x = x;
    rec.w = w;
    rec.u_f = C_w * w;
    rec.u = rec.u_f + rec.u_s2 + rec.beta_s2;
    if (infeasible) {
      trace.breach = true;
      trace.breach_step = k;
      trace.steps.push_back(std::move(rec));
      break;
    }

    if (monolithic) {
      Vec s(cl.n_x + cl.n_w);
      s << x, w;
      Vec dvec(cl.n_x + 2 * cl.n_u + cl.n_d);
      dvec << rec.zeta + rec.beta_s1 + rec.u_s1, rec.u_s2 + rec.beta_s2, rec.beta_f, rec.d;
      const Vec s_next = cl.A_cl * s + cl.B_ds * dvec;
      x = s_next.head(cl.n_x);
      w = s_next.tail(cl.n_w);
    } else {
      const Vec x_fed = x + rec.zeta + rec.u_s1 + rec.beta_s1;
      auto [u_f, w_next] = uf_step(layer, w, Vec(C_w * w + rec.beta_f), x_fed);
      x = plant.A * x + plant.B_u * rec.u + plant.B_d * rec.d;
      w = std::move(w_next);
    }
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace

SimulationTrace simulate(const StateSpace& plant, const NrfLayer& layer, const ClosedLoop& cl,
                         const DesignArtifacts& art, const Scenario& scenario, std::uint64_t seed,
                         Eigen::Index horizon, const RuntimeOptions& options) {
  return simulate_impl(plant, layer, cl, art, scenario, seed, horizon, options, false);
}

SimulationTrace simulate_monolithic(const StateSpace& plant, const NrfLayer& layer,
                                    const ClosedLoop& cl, const DesignArtifacts& art,
                                    const Scenario& scenario, std::uint64_t seed,
                                    Eigen::Index horizon, const RuntimeOptions& options) {
  return simulate_impl(plant, layer, cl, art, scenario, seed, horizon, options, true);
}

namespace {

void header_block(std::ostringstream& os, const char* name, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) os << ',' << name << i;
}

void value_block(std::ostream& os, const Vec& v) {
  char buf[40];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v(i));
    os << buf;
  }
}

}  // namespace

std::string csv_header(const ClosedLoop& cl) {
  std::ostringstream os;
  os << 'k';
  header_block(os, "x", cl.n_x);
  header_block(os, "w", cl.n_w);
  header_block(os, "u", cl.n_u);
  header_block(os, "uf", cl.n_u);
  header_block(os, "us1_", cl.n_x);
  header_block(os, "us2_", cl.n_u);
  header_block(os, "zeta", cl.n_x);
  header_block(os, "betaf", cl.n_u);
  header_block(os, "betas1_", cl.n_x);
  header_block(os, "betas2_", cl.n_u);
  header_block(os, "nux", cl.n_x);
  header_block(os, "nuw", cl.n_w);
  header_block(os, "d", cl.n_d);
  for (int i = 0; i < cl.part.N; ++i)
    os << ",qp_status" << i << ",qp_micros" << i << ",slack" << i;
  return os.str();
}

void write_csv(const SimulationTrace& trace, const ClosedLoop& cl, std::ostream& os) {
  os << csv_header(cl) << '\n';
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const StepRecord& r = trace.steps[k];
    os << k;
    value_block(os, r.x);
    value_block(os, r.w);
    value_block(os, r.u);
    value_block(os, r.u_f);
    value_block(os, r.u_s1);
    value_block(os, r.u_s2);
    value_block(os, r.zeta);
    value_block(os, r.beta_f);
    value_block(os, r.beta_s1);
    value_block(os, r.beta_s2);
    value_block(os, r.nu_x);
    value_block(os, r.nu_w);
    value_block(os, r.d);
    char buf[64];
    for (const SolveRecord& s : r.solves) {
      std::snprintf(buf, sizeof(buf), ",%s,%.3f,%.17g", to_string(s.status).c_str(),
                    s.seconds * 1e6, s.slack);
      os << buf;
    }
    os << '\n';
  }
}

std::string run_summary(const std::vector<SimulationTrace>& traces, int n_areas) {
  std::ostringstream os;
  os << "per-area solve times (ms): area min max mean median\n";
  for (int i = 0; i < n_areas; ++i) {
    std::vector<double> t;
    for (const SimulationTrace& tr : traces)
      for (const StepRecord& r : tr.steps)
        if (static_cast<std::size_t>(i) < r.solves.size())
          t.push_back(r.solves[static_cast<std::size_t>(i)].seconds * 1e3);
    if (t.empty()) continue;
    std::sort(t.begin(), t.end());
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= static_cast<double>(t.size());
    const double median = t.size() % 2 == 1
                              ? t[t.size() / 2]
                              : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
    os << i << ' ' << t.front() << ' ' << t.back() << ' ' << mean << ' ' << median << '\n';
  }
  return os.str();
}

}  // namespace dmpc
