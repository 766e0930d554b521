#include "dmpc/platoon.hpp"

#include <cmath>
#include <stdexcept>

namespace dmpc {

namespace {

// Continuous-time single-car model behind the benchmark discretisation:
// p' = v, v' = c1 mu + c2 u, mu' = (u - mu)/tau, with c2 = sigma/(m tau) and
// c1 = sigma (tau - 1)/(m tau). Discretised in closed form under zero-order
// hold.
void discretise_car(const PlatoonParams& p, Mat& A, Vec& B) {
  const double tau = p.tau, Ts = p.T_s;
  const double c2 = p.sigma / (p.m * tau);
  const double c1 = p.sigma * (tau - 1.0) / (p.m * tau);
  const double E = std::exp(-Ts / tau);
  const double g = tau * (1.0 - E);  // integral of exp(-s/tau) over one period

  A = Mat::Identity(3, 3);
  A(0, 1) = Ts;
  A(0, 2) = c1 * (tau * Ts - tau * g);
  A(1, 2) = c1 * g;
  A(2, 2) = E;

  B.resize(3);
  B(2) = 1.0 - E;
  B(1) = (c1 + c2) * Ts - c1 * g;
  B(0) = (c1 + c2) * 0.5 * Ts * Ts - c1 * tau * (Ts - g);
}

}  // namespace

PlatoonModel build_platoon_model(const PlatoonParams& params) {
  if (params.N < 2) throw std::invalid_argument("build_platoon_model: at least two cars required");
  if (params.T_s <= 0 || params.tau <= 0 || params.m <= 0)
    throw std::invalid_argument("build_platoon_model: positive T_s, tau, m required");
  const int N = params.N;

  PlatoonModel model;
  model.params = params;
  discretise_car(params, model.A_car, model.B_car);

  model.A_w = Mat::Zero(3, 3);
  model.A_w(0, 1) = -model.A_car(0, 1);
  model.A_w(0, 2) = -model.A_car(0, 2);
  model.B_w = Vec::Zero(3);
  model.B_w(0) = -model.B_car(0);

  // Coordinate change to headway-based spacing states. Row blocks: the
  // reference position and predecessor lengths stay untouched; each car's
  // first state becomes p_i + l_i - p_{i-1}.
  const Eigen::Index n = 4 * N + 1;
  model.T = Mat::Identity(n, n);
  for (int i = 1; i <= N; ++i) {
    const Eigen::Index row = (N + 1) + 3 * (i - 1);  // spacing row of car i
    model.T(row, i) = 1.0;                           // own predecessor length
    if (i == 1)
      model.T(row, 0) = -1.0;  // reference position
    else
      model.T(row, (N + 1) + 3 * (i - 2)) = -1.0;  // predecessor position
  }

  Mat D = Mat::Identity(n, n);
  Mat B_stack = Mat::Zero(n, N);
  for (int i = 0; i < N; ++i) {
    D.block(N + 1 + 3 * i, N + 1 + 3 * i, 3, 3) = model.A_car;
    B_stack.block(N + 1 + 3 * i, i, 3, 1) = model.B_car;
  }
  Mat T_inv = model.T.fullPivLu().inverse();
  model.full = StateSpace::network_form(model.T * D * T_inv, model.T * B_stack,
                                        Mat(model.T.col(0)));

  Mat A_red = Mat::Zero(3 * N, 3 * N);
  Mat B_red = Mat::Zero(3 * N, N);
  Mat Bd_red = Mat::Zero(3 * N, 1);
  Bd_red(0, 0) = -1.0;
  for (int i = 0; i < N; ++i) {
    A_red.block(3 * i, 3 * i, 3, 3) = model.A_car;
    B_red.block(3 * i, i, 3, 1) = model.B_car;
    if (i > 0) {
      A_red.block(3 * i, 3 * (i - 1), 3, 3) = model.A_w;
      B_red.block(3 * i, i - 1, 3, 1) = model.B_w;
    }
  }
  model.reduced = StateSpace::network_form(A_red, B_red, Bd_red);

  model.W_x = Vec::Zero(4);
  model.W_x(1) = model.A_car(0, 1);
  model.W_x(2) = model.A_car(0, 2);
  model.W_x(3) = model.B_car(0);

  model.part =
      dmpc::partition(3 * N, N, std::vector<std::pair<Eigen::Index, Eigen::Index>>(N, {3, 1}));
  std::vector<std::vector<int>> nbrs(N);
  nbrs[0] = {0};
  for (int i = 1; i < N; ++i) nbrs[i] = {i - 1, i};
  set_neighbors(model.part, nbrs);
  return model;
}

std::vector<CarGains> default_platoon_gains(int N) {
  static const std::vector<CarGains> table = {
      {0.9690, 0.0000, {-0.0038, -0.0192, 0.0}}, {0.9799, 0.0199, {-0.0030, -0.0152, 0.0}},
      {0.9799, 0.0200, {-0.0032, -0.0161, 0.0}}, {0.9798, 0.0200, {-0.0034, -0.0171, 0.0}},
      {0.9797, 0.0200, {-0.0036, -0.0182, 0.0}}, {0.9796, 0.0201, {-0.0039, -0.0195, 0.0}},
      {0.9795, 0.0201, {-0.0042, -0.0209, 0.0}}, {0.9794, 0.0202, {-0.0045, -0.0224, 0.0}},
      {0.9793, 0.0202, {-0.0049, -0.0243, 0.0}}, {0.9792, 0.0203, {-0.0053, -0.0265, 0.0}}};
  if (N < 1 || N > static_cast<int>(table.size()))
    throw std::invalid_argument("default_platoon_gains: tuned gains cover up to ten cars");
  return {table.begin(), table.begin() + N};
}

NrfLayer build_platoon_nrf(const PlatoonModel& model, const std::vector<CarGains>& gains) {
  const int N = model.params.N;
  if (static_cast<int>(gains.size()) != N)
    throw std::invalid_argument("build_platoon_nrf: one gain row per car required");
  std::vector<NrfBlock> blocks(N);
  for (int i = 0; i < N; ++i) {
    NrfBlock b;
    b.order = 1;
    b.a_col = Vec::Constant(1, gains[i].a);
    b.K = Mat::Zero(1, N + 3 * N);
    if (i > 0) b.K(0, i - 1) = gains[i].b_phi;
    for (int j = 0; j < 3; ++j) b.K(0, N + 3 * i + j) = gains[i].B_gamma[j];
    blocks[i] = std::move(b);
  }
  return build_nrf_layer(model.part, std::move(blocks));
}

ConstraintSpec build_platoon_constraints(const PlatoonModel& model) {
  const int N = model.params.N;
  ConstraintSpec spec;
  Box state_box{Vec{{-180.0, 18.0, 0.0}}, Vec{{180.0, 18.0, 10.0}}};
  Box u_box = Box::interval(-10.0, 10.0);
  Box s1_box = Box::centered(Vec{{720.0, 72.0, 0.0}});
  Box s2_box = Box::interval(-5.0, 5.0);
  spec.D_d = Box::interval(0.0, 36.0 * model.params.T_s);

  for (int i = 0; i < N; ++i) {
    spec.X.push_back(state_box);
    spec.U.push_back(u_box);
    spec.U_s1.push_back(s1_box);
    spec.U_s2.push_back(s2_box);

    // Coupled spacing-increment rows: the one-step spacing change commanded
    // by the first layer must stay inside the disturbance range even after
    // the supervisor's actuator channel (budget plus transmission noise)
    // pushes against it.
    Box reach = box_sum(s2_box, Box::centered(Vec::Constant(1, 0.01)));
    Mat row = Mat::Zero(1, 1);
    row(0, 0) = model.B_car(0);
    Box w_bounds = box_pontryagin_diff(spec.D_d, linear_image(row, reach));
    HPolytope rows;
    rows.H = Mat::Zero(2, 4);
    rows.H.row(0) = model.W_x.transpose();
    rows.H.row(1) = -model.W_x.transpose();
    rows.h = Vec{{w_bounds.hi(0), -w_bounds.lo(0)}};
    spec.coupled_rows.push_back(std::move(rows));
  }

  spec.V = Box::centered(Vec::Constant(4 * N, 0.02));
  spec.D_bf = Box::centered(Vec::Constant(N, 0.02));
  spec.D_bs1 = Box::centered(Vec::Constant(3 * N, 0.01));
  spec.D_bs2 = Box::centered(Vec::Constant(N, 0.01));
  return spec;
}

Platoon build_platoon(const PlatoonParams& params) {
  Platoon p;
  p.model = build_platoon_model(params);
  p.layer = build_platoon_nrf(p.model, default_platoon_gains(params.N));
  p.spec = build_platoon_constraints(p.model);
  return p;
}

double scenario_v0(Eigen::Index k) {
  if (k < 0) throw std::invalid_argument("scenario_v0: negative step");
  double v = 10.0;
  if (k >= 400) v -= 7.0;
  if (k >= 1200) v += 30.0;
  if (k >= 1300) v -= 30.0;
  return v;
}

Vec platoon_equilibrium(const Platoon& platoon, double v) {
  const int N = platoon.model.params.N;
  Vec x0 = Vec::Zero(3 * N);
  for (int i = 0; i < N; ++i) {
    // stationarity of block i at w = 0: g_y y + g_v v = 0
    const Mat& K = platoon.layer.blocks[static_cast<std::size_t>(i)].K;
    const double g_y = K(0, N + 3 * i);
    const double g_v = K(0, N + 3 * i + 1);
    if (g_y == 0.0) throw std::invalid_argument("platoon_equilibrium: zero spacing gain");
    x0(3 * i) = -g_v * v / g_y;
    x0(3 * i + 1) = v;
  }
  return x0;
}

}  // namespace dmpc
