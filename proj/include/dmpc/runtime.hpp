#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dmpc/design.hpp"
#include "dmpc/nrf.hpp"

namespace dmpc {

// Deterministic counter-based noise source: every sample is a pure function
// of (seed, stream, step, index), so traces replay bitwise for a fixed seed.
struct NoiseSource {
  std::uint64_t seed = 0;

  // uniform in [-1, 1)
  double uniform(std::uint64_t stream, std::uint64_t step, std::uint64_t index) const;
  // uniform sample of a box, one counter index per coordinate
  Vec box(const Box& b, std::uint64_t stream, std::uint64_t step) const;
};

// Initial-condition report of one area for one round.
struct AreaMessage {
  int sender = 0;
  Eigen::Index round = 0;
  Vec x_c;  // reported area state
  Vec w_c;  // reported controller-state rows
};

// Synchronous exchange: exactly one report per sender, corrupted additively
// at the source so every receiver observes the same values.
std::vector<AreaMessage> bus_round(const ClosedLoop& cl, const std::vector<AreaMessage>& truth,
                                   const Vec& nu_x, const Vec& nu_w);

struct SolveRecord {
  SolveStatus status = SolveStatus::MaxIter;
  double seconds = 0.0;
  int iterations = 0;
  double slack = 0.0;  // min one-step constraint slack at the measured response
};

// Per-area supervisor: reads its design slice, keeps only its warm start.
struct SubcontrollerState {
  int area = 0;
  const AreaDesign* design = nullptr;
  Box U_s1{Vec::Zero(1), Vec::Zero(1)};
  Box U_s2{Vec::Zero(1), Vec::Zero(1)};
  double reg = 1e-12;  // diagonal regularisation for the condensed program
  Vec warm;
  SolveRecord last;
};

struct StepCommands {
  Vec u_s1;
  Vec u_s2;
};

// One supervisor round for a single area: measured-response offsets from the
// delivered reports, condensed program over the stacked commands with the
// controller recursion eliminated by substitution, first commands applied.
StepCommands subcontroller_step(SubcontrollerState& st, const ClosedLoop& cl,
                                const std::vector<AreaMessage>& delivered, Eigen::Index k);

struct StepRecord {
  Vec x, w, u, u_f, u_s1, u_s2;
  Vec zeta, beta_f, beta_s1, beta_s2, nu_x, nu_w, d;
  std::vector<SolveRecord> solves;  // one per area
};

struct SimulationTrace {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  bool breach = false;  // a supervisor program went infeasible; trace truncated there
  Eigen::Index breach_step = -1;
};

struct Scenario {
  Vec x0;
  Vec w0;                              // empty = zero controller state
  std::function<Vec(Eigen::Index)> d;  // exogenous profile per step
  bool noise = true;                   // false = all noise boxes read as zero
};

struct RuntimeOptions {
  double reg = 1e-12;
};

// Advances the true coupled system: sample noises, exchange corrupted IC
// reports, run every supervisor, feed u_f + u_s2 + beta_s2 to the plant and
// x + zeta + u_s1 + beta_s1 into the first layer. Initial conditions must
// satisfy the per-area state boxes and controller-state intervals.
SimulationTrace simulate(const StateSpace& plant, const NrfLayer& layer, const ClosedLoop& cl,
                         const DesignArtifacts& art, const Scenario& scenario, std::uint64_t seed,
                         Eigen::Index horizon, const RuntimeOptions& options = {});

// Oracle variant: identical rounds and noise streams, but the plant and first
// layer advance as one dense monolithic system.
SimulationTrace simulate_monolithic(const StateSpace& plant, const NrfLayer& layer,
                                    const ClosedLoop& cl, const DesignArtifacts& art,
                                    const Scenario& scenario, std::uint64_t seed,
                                    Eigen::Index horizon, const RuntimeOptions& options = {});

// One row per step: k, x, w, u, u_f, u_s1, u_s2, zeta, beta_f, beta_s1,
// beta_s2, nu_x, nu_w, d, then per-area qp_status, qp_micros, slack.
// 17 significant digits for replay fidelity.
void write_csv(const SimulationTrace& trace, const ClosedLoop& cl, std::ostream& os);
std::string csv_header(const ClosedLoop& cl);

// Aggregate per-area solve-time statistics (milliseconds) across traces.
std::string run_summary(const std::vector<SimulationTrace>& traces, int n_areas);

}  // namespace dmpc
