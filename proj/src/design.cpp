#include "dmpc/design.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <sstream>
#include <stdexcept>

namespace dmpc {

namespace {

Box slice(const Box& b, Eigen::Index offset, Eigen::Index size) {
  return {b.c.segment(offset, size), b.r.segment(offset, size)};
}

Zonotope trim(Zonotope z) {
  Eigen::Index keep = 0;
  for (Eigen::Index j = 0; j < z.G.cols(); ++j)
    if (z.G.col(j).cwiseAbs().maxCoeff() != 0.0) {
      if (keep != j) z.G.col(keep) = z.G.col(j);
      ++keep;
    }
  z.G.conservativeResize(Eigen::NoChange, keep);
  return z;
}

Zonotope zono_sum(const Zonotope& a, const Zonotope& b) { return trim(minkowski_sum(a, b)); }

// One-dimensional interval image k . [c +- r].
Box scaled(const Box& iv, double k) {
  return {k * iv.c, std::abs(k) * iv.r};
}

}  // namespace

void ConstraintSpec::check(const ClosedLoop& cl) const {
  const auto& part = cl.part;
  const std::size_t N = static_cast<std::size_t>(part.N);
  if (X.size() != N || U.size() != N || coupled_rows.size() != N || U_s1.size() != N ||
      U_s2.size() != N)
    throw std::invalid_argument("ConstraintSpec: one entry of each per-area field required");
  for (int i = 0; i < part.N; ++i) {
    if (X[i].dim() != part.x_size[i] || U[i].dim() != part.u_size[i] ||
        U_s1[i].dim() != part.x_size[i] || U_s2[i].dim() != part.u_size[i])
      throw std::invalid_argument("ConstraintSpec: per-area box dimension mismatch");
    if (coupled_rows[i].rows() > 0 &&
        coupled_rows[i].dim() != part.x_size[i] + part.u_size[i])
      throw std::invalid_argument("ConstraintSpec: coupled rows must act on (x_i, u_fi)");
  }
  if (V.dim() != cl.n_x + cl.n_w || D_bf.dim() != cl.n_u || D_bs1.dim() != cl.n_x ||
      D_bs2.dim() != cl.n_u || D_d.dim() != cl.n_d)
    throw std::invalid_argument("ConstraintSpec: global box dimension mismatch");
}

Box area_x_noise(const ConstraintSpec& spec, const AreaPartition& part, int i) {
  return slice(spec.V, part.x_offset.at(i), part.x_size.at(i));
}

Box area_w_noise(const ConstraintSpec& spec, const ClosedLoop& cl, int i) {
  return slice(spec.V, cl.n_x + cl.w_area_offset.at(i), cl.w_area_size.at(i));
}

Box exogenous_box(const ConstraintSpec& spec, const ClosedLoop& cl) {
  Box zeta = slice(spec.V, 0, cl.n_x);
  return product(product(box_sum(zeta, spec.D_bs1), spec.D_bs2), product(spec.D_bf, spec.D_d));
}

Box command_budget_tighten(const ConstraintSpec& spec, const AreaPartition& part, int i,
                           bool* empty) {
  Box noise = slice(spec.D_bs2, part.u_offset.at(i), part.u_size.at(i));
  return box_pontryagin_diff(spec.U.at(i), box_sum(spec.U_s2.at(i), noise), empty);
}

NrfStateSets nrf_state_sets(const NrfLayer& layer, const ConstraintSpec& spec) {
  const auto& part = layer.part;
  NrfStateSets out;
  for (int i = 0; i < part.N; ++i) {
    bool empty = false;
    out.U_f.push_back(command_budget_tighten(spec, part, i, &empty));
    if (empty)
      throw DesignInfeasible(i, 0, "first-layer command budget empties out in area " +
                                       std::to_string(i));
    Box fed_u = box_sum(out.U_f[i], slice(spec.D_bf, part.u_offset[i], part.u_size[i]));
    Box fed_x = box_sum(box_sum(spec.X.at(i), area_x_noise(spec, part, i)),
                        box_sum(spec.U_s1.at(i), slice(spec.D_bs1, part.x_offset[i],
                                                       part.x_size[i])));
    out.D_w.push_back(product(fed_u, fed_x));
  }

  out.W.resize(layer.blocks.size());
  for (std::size_t l = 0; l < layer.blocks.size(); ++l) {
    const int i = part.area_of_input(static_cast<Eigen::Index>(l));
    const Eigen::Index local = static_cast<Eigen::Index>(l) - part.u_offset[i];
    const auto& b = layer.blocks[l];
    out.W[l].assign(static_cast<std::size_t>(b.order), Box::interval(0, 0));
    out.W[l][0] = slice(out.U_f[i], local, 1);

    // backward companion recursion over the remaining controller states
    auto fed_term = [&](int row) {
      Box acc = Box::interval(0, 0);
      for (int p : part.neighbors.at(i)) {
        Vec k(part.u_size[p] + part.x_size[p]);
        k << b.K.row(row).segment(part.u_offset[p], part.u_size[p]).transpose(),
            b.K.row(row).segment(part.n_u + part.x_offset[p], part.x_size[p]).transpose();
        const Box& dw = out.D_w[p];
        acc = box_sum(acc, Box{Vec::Constant(1, k.dot(dw.c)),
                               Vec::Constant(1, k.cwiseAbs().dot(dw.r))});
      }
      return acc;
    };
    for (int j = b.order - 1; j >= 1; --j) {
      Box v = box_sum(scaled(out.W[l][0], b.a_col(j)), fed_term(j));
      if (j + 1 < b.order) v = box_sum(v, out.W[l][static_cast<std::size_t>(j) + 1]);
      out.W[l][static_cast<std::size_t>(j)] = v;
    }
  }
  return out;
}

Box area_w_bounds(const NrfStateSets& sets, const NrfLayer& layer, int i) {
  const auto& part = layer.part;
  std::vector<double> c, r;
  for (Eigen::Index l = part.u_offset.at(i); l < part.u_offset[i] + part.u_size[i]; ++l)
    for (const Box& iv : sets.W[static_cast<std::size_t>(l)]) {
      c.push_back(iv.c(0));
      r.push_back(iv.r(0));
    }
  Box out;
  out.c = Eigen::Map<Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
  out.r = Eigen::Map<Vec>(r.data(), static_cast<Eigen::Index>(r.size()));
  return out;
}

HPolytope joint_constraint_polytope(const ConstraintSpec& spec, const NrfStateSets& sets,
                                    const NrfLayer& layer, int i) {
  const auto& part = layer.part;
  const Eigen::Index nx = part.x_size.at(i), nu = part.u_size.at(i);
  HPolytope xb = HPolytope::from_box(spec.X.at(i));
  const Eigen::Index extra = spec.coupled_rows.at(i).rows();
  HPolytope out;
  out.H = Mat::Zero(xb.rows() + 2 * nu + extra, nx + nu);
  out.h = Vec::Zero(out.H.rows());
  out.H.topLeftCorner(xb.rows(), nx) = xb.H;
  out.h.head(xb.rows()) = xb.h;
  for (Eigen::Index j = 0; j < nu; ++j) {
    const auto& iv = sets.W[static_cast<std::size_t>(part.u_offset[i] + j)][0];
    out.H(xb.rows() + 2 * j, nx + j) = 1.0;
    out.h(xb.rows() + 2 * j) = iv.hi(0);
    out.H(xb.rows() + 2 * j + 1, nx + j) = -1.0;
    out.h(xb.rows() + 2 * j + 1) = -iv.lo(0);
  }
  if (extra > 0) {
    out.H.bottomRows(extra) = spec.coupled_rows[i].H;
    out.h.tail(extra) = spec.coupled_rows[i].h;
  }
  return out;
}

std::vector<Zonotope> disturbance_propagation(const ClosedLoop& cl, const ConstraintSpec& spec,
                                              int i, int T) {
  if (T < 1) throw std::invalid_argument("disturbance_propagation: horizon must be positive");
  const Box Ds = exogenous_box(spec, cl);
  const Mat Zt = cl.Z(i).transpose();
  std::vector<Zonotope> out;
  Zonotope acc = Zonotope::singleton(Vec::Zero(Zt.rows()));
  for (int t = 1; t <= T; ++t) {
    Mat M = Zt * cl.ic_response_map(t - 1) * cl.B_ds;
    acc = zono_sum(acc, linear_image(M, Ds));
    out.push_back(acc);
  }
  return out;
}

AreaPropagation noise_and_ic_sets(const ClosedLoop& cl, const ConstraintSpec& spec,
                                  const NrfStateSets& sets, const NrfLayer& layer, int i, int T,
                                  const std::vector<Box>& all_X_c,
                                  const std::vector<Box>& all_W_c) {
  AreaPropagation prop;
  prop.X_c = all_X_c.at(i);
  prop.W_c = all_W_c.at(i);
  const HPolytope joint = joint_constraint_polytope(spec, sets, layer, i);
  const Mat Zt = cl.Z(i).transpose();
  for (int t = 1; t <= T; ++t) {
    const Mat IQ = cl.ic_response_map(t);
    Zonotope H = trim(linear_image(Zt * IQ, spec.V));
    Zonotope theta = Zonotope::singleton(Vec::Zero(Zt.rows()));
    for (int j : cl.part.neighbors.at(i))
      theta = zono_sum(theta, linear_image(Mat(Zt * IQ * cl.Z_c(j)),
                                           product(all_X_c.at(j), all_W_c.at(j))));
    HPolytope tight = pontryagin_diff(joint, reflected(H));
    if (is_empty(tight))
      throw DesignInfeasible(i, t, "noise tightening empties area " + std::to_string(i) +
                                       " at step " + std::to_string(t));
    prop.H.push_back(std::move(H));
    prop.Theta.push_back(std::move(theta));
    prop.tightened.push_back(std::move(tight));
  }
  return prop;
}

std::vector<Zonotope> cross_coupling_sets(const ClosedLoop& cl, const ConstraintSpec& spec,
                                          int i, int T, const std::vector<Box>& all_X_c,
                                          const std::vector<Box>& all_W_c) {
  const Mat Zt = cl.Z(i).transpose();
  const Mat B_us = cl.B_us();
  std::vector<Zonotope> out;
  Zonotope cmd = Zonotope::singleton(Vec::Zero(Zt.rows()));
  for (int t = 1; t <= T; ++t) {
    const Mat R = Zt * cl.ic_response_map(t - 1);
    for (int j = 0; j < cl.part.N; ++j) {
      if (j == i) continue;
      Mat M(Zt.rows(), cl.part.x_size[j] + cl.part.u_size[j]);
      M << R * B_us.middleCols(cl.part.x_offset[j], cl.part.x_size[j]),
          R * B_us.middleCols(cl.n_x + cl.part.u_offset[j], cl.part.u_size[j]);
      cmd = zono_sum(cmd, linear_image(M, product(spec.U_s1.at(j), spec.U_s2.at(j))));
    }
    Zonotope delta = cmd;
    const Mat IQ = cl.ic_response_map(t);
    for (int j = 0; j < cl.part.N; ++j) {
      if (cl.part.is_neighbor(i, j)) continue;
      delta = zono_sum(delta, linear_image(Mat(Zt * IQ * cl.Z_c(j)),
                                           product(all_X_c.at(j), all_W_c.at(j))));
    }
    out.push_back(std::move(delta));
  }
  return out;
}

std::vector<HPolytope> inner_approximations(const AreaPropagation& prop, int area) {
  std::vector<HPolytope> out;
  for (std::size_t t = 0; t < prop.tightened.size(); ++t) {
    HPolytope P = pontryagin_diff(prop.tightened[t],
                                  minkowski_sum(prop.Psi.at(t), prop.Delta.at(t)));
    if (is_empty(P))
      throw DesignInfeasible(area, static_cast<int>(t) + 1,
                             "inner approximation empties area " + std::to_string(area) +
                                 " at step " + std::to_string(t + 1));
    out.push_back(std::move(P));
  }
  return out;
}

HPolytope xi_constraint(const AreaDesign& design, int t, const Vec& theta_x, const Vec& theta_u) {
  const HPolytope& P = design.P.at(static_cast<std::size_t>(t) - 1);
  const Eigen::Index nx = design.model.C_x.rows(), nu = design.model.C_u.rows();
  if (theta_x.size() != nx || theta_u.size() != nu)
    throw std::invalid_argument("xi_constraint: response vector dimension mismatch");
  Mat C(nx + nu, design.model.n_s());
  C << design.model.C_x, design.model.C_u;
  Vec theta(nx + nu);
  theta << theta_x, theta_u;
  return {P.H * C, P.h - P.H * theta};
}

namespace {

// Extreme points of the product of a zonotope's x-row projection and its
// per-row u intervals. Falls back to the interval hull when the generator
// count makes sign enumeration too wide (still an outer bound, so passing
// the certificate with it remains sound).
std::vector<Vec> product_vertices(const Zonotope& theta, Eigen::Index nx) {
  const Eigen::Index nu = theta.dim() - nx;
  Zonotope x_part = trim({theta.c.head(nx), theta.G.topRows(nx)});
  std::vector<Vec> xs;
  if (x_part.generators() <= 12) {
    const Eigen::Index g = x_part.generators();
    for (long mask = 0; mask < (1L << g); ++mask) {
      Vec s(g);
      for (Eigen::Index j = 0; j < g; ++j) s(j) = (mask >> j) & 1 ? 1.0 : -1.0;
      xs.push_back(x_part.c + x_part.G * s);
    }
  } else {
    Box bb = x_part.bounding_box();
    for (long mask = 0; mask < (1L << nx); ++mask) {
      Vec v(nx);
      for (Eigen::Index j = 0; j < nx; ++j)
        v(j) = (mask >> j) & 1 ? bb.hi(j) : bb.lo(j);
      xs.push_back(v);
    }
  }
  Vec u_rad = theta.G.bottomRows(nu).cwiseAbs().rowwise().sum();
  std::vector<Vec> out;
  for (const Vec& x : xs)
    for (long mask = 0; mask < (1L << nu); ++mask) {
      Vec v(nx + nu);
      v.head(nx) = x;
      for (Eigen::Index j = 0; j < nu; ++j)
        v(nx + j) = theta.c(nx + j) + ((mask >> j) & 1 ? u_rad(j) : -u_rad(j));
      out.push_back(v);
    }
  return out;
}

}  // namespace

int feasibility_certificate(const AreaDesign& design, const ConstraintSpec& spec, int i,
                            int rho_max, CertTier* tier) {
  const AreaModel& m = design.model;
  const Eigen::Index nx = m.C_x.rows(), nu = m.C_u.rows();
  Mat C(nx + nu, m.n_s());
  C << m.C_x, m.C_u;
  const int limit = std::min<int>(rho_max, static_cast<int>(design.P.size()));
  if (tier) *tier = CertTier::none;
  std::vector<ImageTerm> terms;
  Mat power = Mat::Identity(m.n_s(), m.n_s());
  CertTier achieved = CertTier::worst_case;
  for (int t = 1; t <= limit; ++t) {
    // commands at offset t-j act through A^{j-1}; the membership terms only
    // grow with t, so extend the list incrementally
    terms.push_back({-C * power * m.B_s1, spec.U_s1.at(i)});
    terms.push_back({-C * power * m.B_s2, spec.U_s2.at(i)});
    power = m.A_s * power;
    std::vector<ImageTerm> all = terms;
    all.push_back({Mat::Identity(nx + nu, nx + nu), design.P.at(static_cast<std::size_t>(t) - 1)});
    auto all_match = [&](const Zonotope& envelope) {
      for (const Vec& v : product_vertices(envelope, nx)) {
        MemberStatus st = member_of_minkowski_sum(v, all);
        if (st == MemberStatus::SolverFailure)
          throw std::runtime_error("feasibility_certificate: membership LP backend failure");
        if (st == MemberStatus::NotMember) return false;
      }
      return true;
    };
    const Zonotope& theta = design.prop.Theta.at(static_cast<std::size_t>(t) - 1);
    if (!all_match(theta)) {
      // extreme neighbour responses exceed the command authority; fall back to
      // certifying the nominal response plus the measurement-noise envelope
      const Zonotope& noise = design.prop.H.at(static_cast<std::size_t>(t) - 1);
      if (!all_match({theta.c, noise.G})) return t - 1;
      achieved = CertTier::nominal;
    }
    if (tier) *tier = achieved;
  }
  return limit;
}

DesignArtifacts run_design(const ClosedLoop& cl, const NrfLayer& layer,
                           const ConstraintSpec& spec, const DesignOptions& options) {
  spec.check(cl);
  DesignArtifacts art;
  art.spec = spec;
  art.nrf_sets = nrf_state_sets(layer, spec);

  std::vector<Box> all_X_c, all_W_c;
  for (int j = 0; j < cl.part.N; ++j) {
    all_X_c.push_back(box_sum(spec.X[j], area_x_noise(spec, cl.part, j)));
    all_W_c.push_back(box_sum(area_w_bounds(art.nrf_sets, layer, j), area_w_noise(spec, cl, j)));
  }

  auto synth_area = [&](int i) {
    const auto start = std::chrono::steady_clock::now();
    AreaDesign d;
    d.model = extract_area_model(cl, i);
    d.prop = noise_and_ic_sets(cl, spec, art.nrf_sets, layer, i, options.rho_max, all_X_c,
                               all_W_c);
    d.prop.Psi = disturbance_propagation(cl, spec, i, options.rho_max);
    d.prop.Delta = cross_coupling_sets(cl, spec, i, options.rho_max, all_X_c, all_W_c);
    d.P = inner_approximations(d.prop, i);
    d.rho = feasibility_certificate(d, spec, i, options.rho_max, &d.tier);
    d.T = std::max(d.rho, 1);
    d.T_bar = options.T_bar;
    d.Q_x = static_cast<std::size_t>(i) < options.Q_x.size()
                ? options.Q_x[static_cast<std::size_t>(i)]
                : Mat(Mat::Zero(cl.part.x_size[i], cl.part.x_size[i]));
    d.synth_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return d;
  };

  art.areas.resize(static_cast<std::size_t>(cl.part.N));
  if (options.parallel) {
    std::vector<std::future<AreaDesign>> futs;
    for (int i = 0; i < cl.part.N; ++i)
      futs.push_back(std::async(std::launch::async, synth_area, i));
    for (int i = 0; i < cl.part.N; ++i) art.areas[static_cast<std::size_t>(i)] = futs[i].get();
  } else {
    for (int i = 0; i < cl.part.N; ++i) art.areas[static_cast<std::size_t>(i)] = synth_area(i);
  }

  art.certified = true;
  std::ostringstream rep;
  rep << "areas: " << cl.part.N << "\n";
  for (int i = 0; i < cl.part.N; ++i) {
    const auto& d = art.areas[static_cast<std::size_t>(i)];
    art.certified = art.certified && d.rho >= 1;
    rep << "area " << i << ": rho=" << d.rho << " T=" << d.T << " Tbar=" << d.T_bar
        << " tier="
        << (d.tier == CertTier::worst_case ? "worst_case"
                                           : d.tier == CertTier::nominal ? "nominal" : "none")
        << " synth_seconds=" << d.synth_seconds << "\n";
  }
  rep << (art.certified ? "certificate: recursive feasibility holds for every area\n"
                        : "certificate: FAILED; widen the supervisor command budgets or retune "
                          "the first layer\n");
  art.report = rep.str();
  if (!art.certified)
    throw DesignInfeasible(-1, 0, "recursive-feasibility certificate failed:\n" + art.report);
  return art;
}

}  // namespace dmpc
