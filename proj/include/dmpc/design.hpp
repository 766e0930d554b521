#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmpc/nrf.hpp"
#include "dmpc/sets.hpp"

namespace dmpc {

// Constraint data for the offline pipeline. State and actuator objectives are
// per-area boxes; coupled_rows may add polyhedral rows over the stacked
// (x_i, u_fi) coordinates of one area (zero-row polytopes when unused).
struct ConstraintSpec {
  std::vector<Box> X;                   // per-area state boxes (dim n_xi)
  std::vector<Box> U;                   // per-area actuator boxes (dim n_ui)
  std::vector<HPolytope> coupled_rows;  // per-area rows over (x_i, u_fi)
  std::vector<Box> U_s1;                // state-channel command budgets (dim n_xi)
  std::vector<Box> U_s2;                // actuator-channel command budgets (dim n_ui)

  Box V;      // measurement noise over stacked (x, w)
  Box D_bf;   // command-exchange transmission noise (dim n_u)
  Box D_bs1;  // state-channel transmission noise (dim n_x)
  Box D_bs2;  // actuator-channel transmission noise (dim n_u)
  Box D_d;    // exogenous disturbance (dim n_d)

  void check(const ClosedLoop& cl) const;
};

// Slices of the global noise boxes in area coordinates.
Box area_x_noise(const ConstraintSpec& spec, const AreaPartition& part, int i);
Box area_w_noise(const ConstraintSpec& spec, const ClosedLoop& cl, int i);

// Stacked bound on the exogenous vector (zeta+b_s1 | b_s2 | b_f | d); the
// sensor noise entering the first layer shares the x-rows of V.
Box exogenous_box(const ConstraintSpec& spec, const ClosedLoop& cl);

// Interval bounds certified for the first-layer controller states: one
// interval per state of every command-row block, plus the per-area fed-signal
// boxes used by the backward recursion.
struct NrfStateSets {
  std::vector<Box> U_f;             // per area, dim n_ui
  std::vector<Box> D_w;             // per area, stacked (u_f block, x block)
  std::vector<std::vector<Box>> W;  // W[l][j-1]: scalar interval for state j of row l
};

// Interval hull of the controller-state bounds of one area, ordered like the
// area's w coordinates.
Box area_w_bounds(const NrfStateSets& sets, const NrfLayer& layer, int i);

// Per-area propagation data over a horizon; index t-1 holds step offset t.
struct AreaPropagation {
  std::vector<Zonotope> Psi;        // exogenous-signal reach, stacked (x_i, u_fi) rows
  std::vector<Zonotope> H;          // measurement-noise response
  std::vector<Zonotope> Theta;      // neighbour IC response
  std::vector<Zonotope> Delta;      // cross-coupling residual
  std::vector<HPolytope> tightened; // joint constraint polytope after noise tightening
  Box X_c;                          // X_i inflated by reported-IC noise
  Box W_c;                          // W-bounds inflated by reported-IC noise
};

// Strength of the per-area feasibility certificate. worst_case: admissible
// commands match every extreme neighbour response. nominal: commands recentre
// the nominal neighbour response into the inner approximation and absorb the
// measurement-noise envelope around it; adequate when an outer invariant
// envelope is maintained by the first layer rather than proven set-wise.
enum class CertTier { none, nominal, worst_case };

struct AreaDesign {
  AreaModel model;
  AreaPropagation prop;
  std::vector<HPolytope> P;  // inner approximations, one per step offset
  Mat Q_x;                   // stage weight on the predicted area state
  int rho = 0;               // certified horizon (0 = certificate failed)
  CertTier tier = CertTier::none;
  int T = 1;
  int T_bar = 0;
  double synth_seconds = 0.0;
};

struct DesignArtifacts {
  ConstraintSpec spec;
  NrfStateSets nrf_sets;
  std::vector<AreaDesign> areas;
  bool certified = false;
  std::string report;
};

struct DesignOptions {
  int rho_max = 5;
  int T_bar = 0;
  std::vector<Mat> Q_x;  // per-area state weights; empty = zero weight
  double quiescence_margin = 0.5;
  bool parallel = true;
};

// Thrown when a tightening or inner approximation empties out; carries the
// area and step so reports can name the first failure.
struct DesignInfeasible : std::runtime_error {
  int area;
  int step;
  DesignInfeasible(int area_, int step_, const std::string& what_)
      : std::runtime_error(what_), area(area_), step(step_) {}
};

// Command budget left to the first layer: U_i shrunk by the supervisor's
// actuator-channel budget and its transmission noise. Exact on boxes.
Box command_budget_tighten(const ConstraintSpec& spec, const AreaPartition& part, int i,
                           bool* empty = nullptr);

// Interval bounds for every controller state via the backward companion
// recursion; first-state intervals are the per-row intervals of U_fi.
NrfStateSets nrf_state_sets(const NrfLayer& layer, const ConstraintSpec& spec);

// Joint constraint polytope of one area over stacked (x_i, u_fi): box rows of
// X_i, first-state interval rows per command row, then the coupled rows.
HPolytope joint_constraint_polytope(const ConstraintSpec& spec, const NrfStateSets& sets,
                                    const NrfLayer& layer, int i);

// Reach sets of the persistent exogenous box through the closed loop,
// restricted to one area's output rows, per step offset 1..T.
std::vector<Zonotope> disturbance_propagation(const ClosedLoop& cl, const ConstraintSpec& spec,
                                              int i, int T);

// Measurement-noise responses, perturbed IC boxes, neighbour IC responses and
// the noise-tightened joint constraint polytopes for one area. X_c/W_c of all
// areas are taken as inputs so per-area work can run independently.
AreaPropagation noise_and_ic_sets(const ClosedLoop& cl, const ConstraintSpec& spec,
                                  const NrfStateSets& sets, const NrfLayer& layer, int i, int T,
                                  const std::vector<Box>& all_X_c, const std::vector<Box>& all_W_c);

// Residual responses from the other areas: their command budgets through the
// closed loop over the window 1..t plus non-neighbour IC responses.
std::vector<Zonotope> cross_coupling_sets(const ClosedLoop& cl, const ConstraintSpec& spec,
                                          int i, int T, const std::vector<Box>& all_X_c,
                                          const std::vector<Box>& all_W_c);

// Inner approximations in exact H-form: tightened polytope shrunk by the
// support of Psi (+) Delta per row. Throws DesignInfeasible when empty.
std::vector<HPolytope> inner_approximations(const AreaPropagation& prop, int area);

// Runtime constraint polytope for decision offset t, affine in the measured
// neighbour response (theta_x, theta_u).
HPolytope xi_constraint(const AreaDesign& design, int t, const Vec& theta_x, const Vec& theta_u);

// Largest rho <= rho_max such that every step offset t <= rho certifies.
// A step certifies at the worst_case tier when each vertex of the
// neighbour-response product set can be matched by admissible commands plus a
// point of the inner approximation, and at the nominal tier when the same
// holds for the nominal response plus its measurement-noise envelope.
// 0 = no step certifies; tier (optional) reports the weakest tier used.
int feasibility_certificate(const AreaDesign& design, const ConstraintSpec& spec, int i,
                            int rho_max, CertTier* tier = nullptr);

// Full offline pipeline: budgets, controller-state bounds, propagation sets,
// inner approximations, certificate; per-area stages run in parallel.
DesignArtifacts run_design(const ClosedLoop& cl, const NrfLayer& layer,
                           const ConstraintSpec& spec, const DesignOptions& options = {});

}  // namespace dmpc
