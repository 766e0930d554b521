#pragma once

#include <array>
#include <vector>

#include "dmpc/design.hpp"
#include "dmpc/nrf.hpp"
#include "dmpc/state_space.hpp"

namespace dmpc {

struct PlatoonParams {
  int N = 10;
  double T_s = 0.1;        // sampling period
  double headway = 5.0;    // time headway converting speed into spacing
  double car_length = 5.0; // length of each physical predecessor
  double m = 1.0;          // vehicle mass
  double tau = 0.1;        // actuator time constant
  double sigma = 1.0;      // driveline gain
};

// First-layer controller coefficients for one car: state coefficient a,
// predecessor-command gain b_phi, and the state-feedback row B_gamma.
struct CarGains {
  double a = 0.0;
  double b_phi = 0.0;
  std::array<double, 3> B_gamma{0.0, 0.0, 0.0};
};

struct PlatoonModel {
  PlatoonParams params;
  Mat A_car;  // discretised per-car dynamics, 3x3 over (p, v, mu)
  Vec B_car;
  Mat A_w;    // predecessor state coupling in headway coordinates
  Vec B_w;    // predecessor command coupling
  Mat T;      // (4N+1) block lower-triangular coordinate change
  StateSpace full;     // (4N+1)-state model over (p0, lengths, per-car states)
  StateSpace reduced;  // 3N-state model over the per-car (y, v, mu) blocks
  Vec W_x;             // spacing-increment row over stacked (y, v, mu, w)
  AreaPartition part;  // reduced-model partition, one car per area
};

PlatoonModel build_platoon_model(const PlatoonParams& params = {});

// Benchmark gain table (the tuned ten-car controller).
std::vector<CarGains> default_platoon_gains(int N);

NrfLayer build_platoon_nrf(const PlatoonModel& model, const std::vector<CarGains>& gains);

// Benchmark constraint data: spacing/speed/actuator boxes, command budgets,
// noise boxes, and the coupled spacing-increment rows derived from the
// disturbance range minus the supervisor's actuator-channel reach.
ConstraintSpec build_platoon_constraints(const PlatoonModel& model);

struct Platoon {
  PlatoonModel model;
  NrfLayer layer;
  ConstraintSpec spec;
};

Platoon build_platoon(const PlatoonParams& params = {});

// Benchmark lead-vehicle speed profile; the disturbance is T_s * v0.
double scenario_v0(Eigen::Index k);

// Equilibrium of the reduced closed loop at a constant lead speed: every car
// travels at that speed with zero actuator state, spacings chosen so the
// first-layer feedback is stationary at zero command and zero controller
// state.
Vec platoon_equilibrium(const Platoon& platoon, double v);

}  // namespace dmpc
