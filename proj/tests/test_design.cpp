#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dmpc/design.hpp"
#include "dmpc/platoon.hpp"

using namespace dmpc;

namespace {

Vec sample_box(std::mt19937& rng, const Box& b) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(b.dim());
  for (Eigen::Index i = 0; i < b.dim(); ++i) v(i) = b.c(i) + b.r(i) * u(rng);
  return v;
}

Mat random_mat(std::mt19937& rng, int r, int c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = u(rng);
  return M;
}

// Two areas, (2 states, 1 input) each, fully connected.
AreaPartition two_area_part() {
  auto p = dmpc::partition(4, 2, {{2, 1}, {2, 1}});
  set_neighbors(p, {{0, 1}, {0, 1}});
  return p;
}

NrfLayer random_layer(std::mt19937& rng, const AreaPartition& part, int order) {
  std::vector<NrfBlock> blocks;
  for (Eigen::Index l = 0; l < part.n_u; ++l) {
    NrfBlock b;
    b.order = order;
    b.a_col = random_mat(rng, order, 1, 0.3);
    b.K = random_mat(rng, order, static_cast<int>(part.n_u + part.n_x), 0.2);
    blocks.push_back(std::move(b));
  }
  return build_nrf_layer(part, std::move(blocks));
}

ConstraintSpec small_spec(const AreaPartition& part, Eigen::Index n_w, Eigen::Index n_d) {
  ConstraintSpec spec;
  for (int i = 0; i < part.N; ++i) {
    spec.X.push_back(Box::centered(Vec::Constant(part.x_size[i], 3.0)));
    spec.U.push_back(Box::centered(Vec::Constant(part.u_size[i], 2.0)));
    spec.coupled_rows.push_back({Mat::Zero(0, part.x_size[i] + part.u_size[i]), Vec::Zero(0)});
    spec.U_s1.push_back(Box::centered(Vec::Constant(part.x_size[i], 0.5)));
    spec.U_s2.push_back(Box::centered(Vec::Constant(part.u_size[i], 0.4)));
  }
  spec.V = Box::centered(Vec::Constant(part.n_x + n_w, 0.01));
  spec.D_bf = Box::centered(Vec::Constant(part.n_u, 0.01));
  spec.D_bs1 = Box::centered(Vec::Constant(part.n_x, 0.01));
  spec.D_bs2 = Box::centered(Vec::Constant(part.n_u, 0.01));
  spec.D_d = Box::centered(Vec::Constant(n_d, 0.05));
  return spec;
}

const Platoon& platoon() {
  static const Platoon p = build_platoon();
  return p;
}

const ClosedLoop& platoon_loop() {
  static const ClosedLoop cl = assemble_closed_loop(platoon().model.reduced, platoon().layer);
  return cl;
}

const DesignArtifacts& platoon_design() {
  static const DesignArtifacts art = [] {
    DesignOptions opt;
    opt.rho_max = 2;
    return run_design(platoon_loop(), platoon().layer, platoon().spec, opt);
  }();
  return art;
}

}  // namespace

TEST_CASE("command budget tightening") {
  const auto& p = platoon();
  for (int i = 0; i < 10; ++i) {
    bool empty = true;
    Box uf = command_budget_tighten(p.spec, p.model.part, i, &empty);
    CHECK(!empty);
    CHECK(uf.lo(0) == doctest::Approx(-4.99).epsilon(1e-14));
    CHECK(uf.hi(0) == doctest::Approx(4.99).epsilon(1e-14));
  }

  // zero budget and zero noise leave the actuator box untouched
  ConstraintSpec spec = p.spec;
  spec.U_s2.assign(10, Box::singleton(Vec::Zero(1)));
  spec.D_bs2 = Box::singleton(Vec::Zero(10));
  Box uf = command_budget_tighten(spec, p.model.part, 3);
  CHECK(uf.lo(0) == -10.0);
  CHECK(uf.hi(0) == 10.0);

  // a budget wider than the actuator range empties the result
  spec.U_s2.assign(10, Box::interval(-11.0, 11.0));
  bool empty = false;
  command_budget_tighten(spec, p.model.part, 2, &empty);
  CHECK(empty);
  CHECK_THROWS_AS(nrf_state_sets(p.layer, spec), DesignInfeasible);
}

TEST_CASE("controller state bounds on the platoon") {
  const auto& p = platoon();
  auto sets = nrf_state_sets(p.layer, p.spec);
  REQUIRE(sets.W.size() == 10);
  for (const auto& row : sets.W) {
    REQUIRE(row.size() == 1);  // first-order blocks carry no interior states
    CHECK(row[0].r(0) == doctest::Approx(4.99).epsilon(1e-14));
    CHECK(row[0].c(0) == doctest::Approx(0.0));
  }
  // fed-signal boxes stack the command block before the state block
  const Box& dw = sets.D_w[4];
  REQUIRE(dw.dim() == 4);
  CHECK(dw.r(0) == doctest::Approx(5.01).epsilon(1e-14));   // u_f + exchange noise
  CHECK(dw.r(1) == doctest::Approx(900.03).epsilon(1e-14)); // spacing + noise + budget
  CHECK(dw.c(1) == doctest::Approx(-180.0));
  CHECK(dw.r(2) == doctest::Approx(90.03).epsilon(1e-14));
  CHECK(dw.r(3) == doctest::Approx(10.03).epsilon(1e-14));  // third command channel is pinned

  Box wb = area_w_bounds(sets, p.layer, 7);
  CHECK(wb.dim() == 1);
  CHECK(wb.r(0) == doctest::Approx(4.99).epsilon(1e-14));
}

TEST_CASE("controller state bounds are forward invariant") {
  std::mt19937 rng(11);
  auto part = two_area_part();
  auto layer = random_layer(rng, part, 3);
  auto spec = small_spec(part, layer.n_w, 1);
  auto sets = nrf_state_sets(layer, spec);

  // fed-signal sampling boxes per area, split into the two gain column groups
  std::vector<Box> fed_u, fed_x;
  for (int i = 0; i < part.N; ++i) {
    fed_u.push_back(box_sum(sets.U_f[i], Box{spec.D_bf.c.segment(part.u_offset[i], part.u_size[i]),
                                             spec.D_bf.r.segment(part.u_offset[i], part.u_size[i])}));
    fed_x.push_back(box_sum(box_sum(spec.X[i], area_x_noise(spec, part, i)),
                            box_sum(spec.U_s1[i], Box{spec.D_bs1.c.segment(part.x_offset[i], part.x_size[i]),
                                                      spec.D_bs1.r.segment(part.x_offset[i], part.x_size[i])})));
  }
  for (int trial = 0; trial < 1000; ++trial) {
    Vec w(layer.n_w);
    for (std::size_t l = 0; l < layer.blocks.size(); ++l)
      for (int j = 0; j < layer.blocks[l].order; ++j)
        w(layer.w_offset[l] + j) = sample_box(rng, sets.W[l][static_cast<std::size_t>(j)])(0);
    Vec uf_fed(part.n_u), x_fed(part.n_x);
    for (int i = 0; i < part.N; ++i) {
      uf_fed.segment(part.u_offset[i], part.u_size[i]) = sample_box(rng, fed_u[i]);
      x_fed.segment(part.x_offset[i], part.x_size[i]) = sample_box(rng, fed_x[i]);
    }
    auto [uf, w_next] = uf_step(layer, w, uf_fed, x_fed);
    // interior states must stay inside their certified intervals
    for (std::size_t l = 0; l < layer.blocks.size(); ++l)
      for (int j = 1; j < layer.blocks[l].order; ++j) {
        const auto& iv = sets.W[l][static_cast<std::size_t>(j)];
        CHECK(std::abs(w_next(layer.w_offset[l] + j) - iv.c(0)) <= iv.r(0) + 1e-9);
      }
  }
}

TEST_CASE("order-2 backward recursion against hand-computed intervals") {
  auto part = dmpc::partition(1, 1, {{1, 1}});
  NrfBlock b;
  b.order = 2;
  b.a_col = Vec{{0.5, -0.25}};
  b.K = Mat{{0.0, 0.0}, {0.1, 0.2}};  // second state fed by 0.1 u + 0.2 x
  auto layer = build_nrf_layer(part, {b});

  ConstraintSpec spec;
  spec.X = {Box::interval(-1.0, 3.0)};
  spec.U = {Box::interval(-2.0, 2.0)};
  spec.coupled_rows = {{Mat::Zero(0, 2), Vec::Zero(0)}};
  spec.U_s1 = {Box::singleton(Vec::Zero(1))};
  spec.U_s2 = {Box::singleton(Vec::Zero(1))};
  spec.V = Box::centered(Vec::Zero(3));
  spec.D_bf = Box::centered(Vec::Zero(1));
  spec.D_bs1 = Box::centered(Vec::Zero(1));
  spec.D_bs2 = Box::centered(Vec::Zero(1));
  spec.D_d = Box::centered(Vec::Zero(1));

  auto sets = nrf_state_sets(layer, spec);
  // W_1 = U_f = [-2,2]; W_2 = -0.25 W_1 + 0.1 [-2,2] + 0.2 [-1,3]
  //          = [-0.5,0.5] + [-0.2,0.2] + [-0.2,0.6] = [-0.9,1.3]
  CHECK(sets.W[0][1].lo(0) == doctest::Approx(-0.9).epsilon(1e-14));
  CHECK(sets.W[0][1].hi(0) == doctest::Approx(1.3).epsilon(1e-14));
}

TEST_CASE("joint constraint polytope rows") {
  const auto& p = platoon();
  auto sets = nrf_state_sets(p.layer, p.spec);
  auto poly = joint_constraint_polytope(p.spec, sets, p.layer, 4);
  REQUIRE(poly.dim() == 4);
  REQUIRE(poly.rows() == 10);
  // state box rows
  CHECK(poly.h(0) == 0.0);     // spacing upper bound
  CHECK(poly.h(1) == 360.0);   // spacing lower bound
  CHECK(poly.h(2) == 36.0);
  CHECK(poly.h(3) == 0.0);
  CHECK(poly.h(4) == 10.0);
  CHECK(poly.h(5) == 10.0);
  // first-layer command rows
  CHECK(poly.H(6, 3) == 1.0);
  CHECK(poly.h(6) == doctest::Approx(4.99).epsilon(1e-14));
  CHECK(poly.h(7) == doctest::Approx(4.99).epsilon(1e-14));
  // coupled spacing-increment rows
  const double b0 = p.model.B_car(0);
  CHECK(poly.h(8) == doctest::Approx(3.6 - 5.01 * b0).epsilon(1e-14));
  CHECK(poly.h(9) == doctest::Approx(-5.01 * b0).epsilon(1e-14));
  CHECK((poly.H.row(8).transpose() - p.model.W_x).norm() == 0.0);
}

TEST_CASE("exogenous reach sets are sound") {
  const auto& cl = platoon_loop();
  const auto& spec = platoon().spec;
  auto psi = disturbance_propagation(cl, spec, 3, 3);
  REQUIRE(psi.size() == 3);
  // radii only grow with the horizon
  Box b1 = psi[0].bounding_box(), b3 = psi[2].bounding_box();
  CHECK(((b3.r - b1.r).array() >= -1e-12).all());

  std::mt19937 rng(5);
  Box ds = exogenous_box(spec, cl);
  const Mat Zt = cl.Z(3).transpose();
  for (int trial = 0; trial < 200; ++trial) {
    Vec z = Vec::Zero(cl.n_x + cl.n_w);
    for (int t = 1; t <= 3; ++t) {
      z = cl.A_cl * z + cl.B_ds * sample_box(rng, ds);
      CHECK(contains(psi[static_cast<std::size_t>(t) - 1], Vec(Zt * cl.C_cl * z)));
    }
  }
}

TEST_CASE("noise tightening and neighbour response sets") {
  const auto& cl = platoon_loop();
  const auto& p = platoon();
  auto sets = nrf_state_sets(p.layer, p.spec);
  std::vector<Box> X_c, W_c;
  for (int j = 0; j < 10; ++j) {
    X_c.push_back(box_sum(p.spec.X[j], area_x_noise(p.spec, p.model.part, j)));
    W_c.push_back(box_sum(area_w_bounds(sets, p.layer, j), area_w_noise(p.spec, cl, j)));
  }

  const int i = 4;
  auto prop = noise_and_ic_sets(cl, p.spec, sets, p.layer, i, 2, X_c, W_c);
  auto joint = joint_constraint_polytope(p.spec, sets, p.layer, i);
  // tightening never relaxes a row
  for (int t = 0; t < 2; ++t) CHECK(((joint.h - prop.tightened[t].h).array() >= -1e-12).all());

  // noise-free data leaves the joint polytope untouched
  ConstraintSpec clean = p.spec;
  clean.V = Box::centered(Vec::Zero(cl.n_x + cl.n_w));
  auto prop0 = noise_and_ic_sets(cl, clean, sets, p.layer, i, 1, X_c, W_c);
  CHECK((prop0.tightened[0].h - joint.h).cwiseAbs().maxCoeff() == 0.0);

  // sampled neighbour initial conditions land inside Theta
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<Vec, Vec>> ics;
    for (int j : cl.part.neighbors[i]) {
      Vec xc = sample_box(rng, X_c[j]);
      Vec wc = sample_box(rng, W_c[j]);
      ics.emplace_back(xc, wc);
    }
    for (int t = 1; t <= 2; ++t) {
      auto [tx, tu] = theta_signals(cl, i, ics, t);
      Vec point(tx.size() + tu.size());
      point << tx, tu;
      CHECK(contains(prop.Theta[static_cast<std::size_t>(t) - 1], point));
    }
  }
}

TEST_CASE("cross coupling residuals") {
  const auto& cl = platoon_loop();
  const auto& p = platoon();
  auto sets = nrf_state_sets(p.layer, p.spec);
  std::vector<Box> X_c, W_c;
  for (int j = 0; j < 10; ++j) {
    X_c.push_back(box_sum(p.spec.X[j], area_x_noise(p.spec, p.model.part, j)));
    W_c.push_back(box_sum(area_w_bounds(sets, p.layer, j), area_w_noise(p.spec, cl, j)));
  }

  // nothing upstream of the lead car: its residual set is exactly zero
  auto delta0 = cross_coupling_sets(cl, p.spec, 0, 3, X_c, W_c);
  for (const auto& z : delta0) {
    CHECK(z.c.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(z.bounding_box().r.maxCoeff() <= 1e-12);
  }

  // sampled foreign commands and non-neighbour ICs land inside Delta
  const int i = 2;
  auto delta = cross_coupling_sets(cl, p.spec, i, 2, X_c, W_c);
  const Mat Zt = cl.Z(i).transpose();
  const Mat B_us = cl.B_us();
  std::mt19937 rng(13);
  for (int trial = 0; trial < 150; ++trial) {
    Vec z = Vec::Zero(cl.n_x + cl.n_w);
    for (int j = 0; j < 10; ++j) {
      if (cl.part.is_neighbor(i, j)) continue;
      Vec ic(cl.part.x_size[j] + cl.w_area_size[j]);
      ic << sample_box(rng, X_c[j]), sample_box(rng, W_c[j]);
      z += cl.Z_c(j) * ic;
    }
    for (int t = 1; t <= 2; ++t) {
      Vec us = Vec::Zero(cl.n_x + cl.n_u);
      for (int j = 0; j < 10; ++j) {
        if (j == i) continue;
        us.segment(cl.part.x_offset[j], cl.part.x_size[j]) = sample_box(rng, p.spec.U_s1[j]);
        us.segment(cl.n_x + cl.part.u_offset[j], cl.part.u_size[j]) =
            sample_box(rng, p.spec.U_s2[j]);
      }
      z = cl.A_cl * z + B_us * us;
      CHECK(contains(delta[static_cast<std::size_t>(t) - 1], Vec(Zt * cl.C_cl * z)));
    }
  }
}

TEST_CASE("platoon design certifies every area") {
  const auto& art = platoon_design();
  CHECK(art.certified);
  REQUIRE(art.areas.size() == 10);
  for (const auto& d : art.areas) {
    CHECK(d.rho >= 1);
    CHECK(d.tier == CertTier::nominal);
    CHECK(d.T == d.rho);
    CHECK(d.synth_seconds > 0.0);
    REQUIRE(d.P.size() == 2);
    // inner approximations sit inside the noise-tightened polytopes
    for (int t = 0; t < 2; ++t)
      CHECK(((d.prop.tightened[t].h - d.P[t].h).array() >= -1e-12).all());
  }
  CHECK(art.report.find("rho=") != std::string::npos);
  CHECK(art.nrf_sets.U_f[0].r(0) == doctest::Approx(4.99).epsilon(1e-14));
}

TEST_CASE("runtime constraint is affine in the measured response") {
  const auto& art = platoon_design();
  const auto& d = art.areas[5];
  const Eigen::Index nx = d.model.C_x.rows(), nu = d.model.C_u.rows();
  Mat C(nx + nu, d.model.n_s());
  C << d.model.C_x, d.model.C_u;

  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec theta_x(nx), theta_u(nu), xi(d.model.n_s());
    for (Eigen::Index k = 0; k < nx; ++k) theta_x(k) = 3.0 * u(rng);
    for (Eigen::Index k = 0; k < nu; ++k) theta_u(k) = 2.0 * u(rng);
    for (Eigen::Index k = 0; k < d.model.n_s(); ++k) xi(k) = 0.5 * u(rng);
    auto con = xi_constraint(d, 1, theta_x, theta_u);
    Vec theta(nx + nu);
    theta << theta_x, theta_u;
    CHECK(contains(con, xi) == contains(d.P[0], Vec(C * xi + theta)));
  }
}

TEST_CASE("nominal envelope vertices are matchable by admissible commands") {
  // the spacing coordinate integrates the speed spread, so extreme neighbour
  // responses exceed the one-step command authority; the certificate instead
  // covers the nominal response plus its measurement-noise envelope
  const auto& art = platoon_design();
  const auto& d = art.areas[8];
  const auto& spec = art.spec;
  const Eigen::Index nx = d.model.C_x.rows(), nu = d.model.C_u.rows();
  Mat C(nx + nu, d.model.n_s());
  C << d.model.C_x, d.model.C_u;
  std::vector<ImageTerm> terms;
  terms.push_back({-C * d.model.B_s1, spec.U_s1[8]});
  terms.push_back({-C * d.model.B_s2, spec.U_s2[8]});
  terms.push_back({Mat::Identity(nx + nu, nx + nu), d.P[0]});
  CHECK(d.tier == CertTier::nominal);

  const auto& theta = d.prop.Theta[0];
  const auto& noise = d.prop.H[0];
  std::mt19937 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    Vec a(noise.generators());
    for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = (rng() & 1) ? 1.0 : -1.0;
    CHECK(member_of_minkowski_sum(Vec(theta.c + noise.G * a), terms) == MemberStatus::Member);
  }

  // one extreme vertex of the full response spread is not matchable
  Vec extreme = theta.c + theta.G.cwiseAbs().rowwise().sum();
  CHECK(member_of_minkowski_sum(extreme, terms) == MemberStatus::NotMember);
}

TEST_CASE("decoupled contractive toy certifies at the strongest tier") {
  auto part = two_area_part();
  set_neighbors(part, {{0}, {1}});
  Mat A = 0.5 * Mat::Identity(4, 4);
  Mat B = Mat::Zero(4, 2);
  B(0, 0) = 1.0;
  B(2, 1) = 1.0;
  auto plant = StateSpace::network_form(A, B, Mat::Zero(4, 1));
  std::vector<NrfBlock> blocks(2);
  for (auto& b : blocks) {
    b.order = 1;
    b.a_col = Vec::Zero(1);
    b.K = Mat::Zero(1, 6);
  }
  auto layer = build_nrf_layer(part, std::move(blocks));
  auto cl = assemble_closed_loop(plant, layer);

  ConstraintSpec spec = small_spec(part, cl.n_w, 1);
  for (int i = 0; i < 2; ++i) {
    spec.U_s1[i] = Box::centered(Vec::Constant(2, 5.0));
    spec.U_s2[i] = Box::centered(Vec::Constant(1, 1.0));
  }
  DesignOptions opt;
  opt.rho_max = 3;
  auto art = run_design(cl, layer, spec, opt);
  for (const auto& d : art.areas) {
    CHECK(d.rho == 3);
    CHECK(d.tier == CertTier::worst_case);
  }
}

TEST_CASE("zero command budgets with inflated noise fail the certificate") {
  const auto& p = platoon();
  ConstraintSpec spec = p.spec;
  for (int i = 0; i < 10; ++i) {
    spec.U_s1[i] = Box::singleton(Vec::Zero(3));
    spec.U_s2[i] = Box::singleton(Vec::Zero(1));
  }
  spec.V.r *= 400.0;
  DesignOptions opt;
  opt.rho_max = 1;
  CHECK_THROWS_AS(run_design(platoon_loop(), p.layer, spec, opt), DesignInfeasible);
}
