#pragma once

#include <Eigen/Dense>

#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "dmpc/partition.hpp"
#include "dmpc/state_space.hpp"

namespace dmpc {

// Companion-form realisation of one command row of the first layer.
// a_col holds the literal first-column entries of the companion matrix
//   A_r = [a_col | [I_{n-1}; 0]],  C_r = e_1'.
// Gain rows K_j have width n_u + n_x: the first n_u columns act on the fed
// command signal (u_f + beta_f), the rest on the fed state signal
// (x + zeta + u_s1 + beta_s1).
struct NrfBlock {
  int order = 1;
  Vec a_col;
  Mat K;
};

// Per-area first-layer subcontrollers: one NrfBlock per global command row,
// grouped per area by the input partition, plus the neighborhood graph.
struct NrfLayer {
  AreaPartition part;
  std::vector<NrfBlock> blocks;  // one per command row, global row order

  Eigen::Index n_w = 0;
  std::vector<Eigen::Index> w_offset;       // per command row
  std::vector<Eigen::Index> w_area_offset;  // per area
  std::vector<Eigen::Index> w_area_size;

  SelectionMatrix S_w(int i) const { return {w_area_offset.at(i), w_area_size.at(i), n_w}; }

  // Block-diagonal controller state matrix (companion blocks).
  Mat A_r() const;
  // Input maps split by fed signal: B_ru (width n_u) and B_rx (width n_x).
  Mat B_ru() const;
  Mat B_rx() const;
  // Output map u_f = C_w w (first companion state of every block).
  Mat C_w() const;
};

// Validates companion structure and the neighborhood sparsity of the gain
// rows, then precomputes the w-space layout.
NrfLayer build_nrf_layer(const AreaPartition& part, std::vector<NrfBlock> blocks);

// One synchronous update of the whole first layer given the fed signals.
// Returns the commands emitted at the current step and the advanced state.
std::pair<Vec, Vec> uf_step(const NrfLayer& layer, const Vec& w, const Vec& uf_fed,
                            const Vec& x_fed);

// First-layer closed loop over the stacked state (x, w):
//   [x;w][k+1] = A_cl [x;w][k] + B_us [u_s1;u_s2][k] + B_ds d_s[k]
//   [x;u_f][k] = C_cl [x;w][k]
// d_s columns are ordered (zeta+beta_s1 | beta_s2 | beta_f | d); the first
// n_x + n_u of them coincide with the command channels, so B_us is a prefix
// of B_ds extended by the beta_f/d blocks being absent.
struct ClosedLoop {
  Mat A_cl;
  Mat B_ds;  // (n_x+n_w) x (n_x + 2 n_u + n_d)
  Mat C_cl;  // (n_x+n_u) x (n_x+n_w)
  Eigen::Index n_x = 0, n_u = 0, n_w = 0, n_d = 0;
  AreaPartition part;
  std::vector<Eigen::Index> w_area_offset, w_area_size;

  Mat B_us() const { return B_ds.leftCols(n_x + n_u); }

  // Output selector Z_i = diag(S_xi, S_ui) as a dense matrix.
  Mat Z(int i) const;
  // Initial-condition embedder Z_ci = diag(S_xi, S_wi).
  Mat Z_c(int i) const;

  // C_cl * A_cl^t, memoised; maps stacked (x_c, w_c) to (x[k0+t], u_f[k0+t])
  // under zero exogenous input.
  Mat ic_response_map(int t) const;

 private:
  mutable std::shared_ptr<std::vector<Mat>> power_cache_ =
      std::make_shared<std::vector<Mat>>();
  mutable std::shared_ptr<std::mutex> cache_mutex_ = std::make_shared<std::mutex>();
};

ClosedLoop assemble_closed_loop(const StateSpace& plant, const NrfLayer& layer);

// Realisation of the (u_s1i, u_s2i) -> (x_i, u_fi) sub-map of the closed
// loop, restricted to its structural support; state starts at zero at every
// optimisation instant.
struct AreaModel {
  int area = 0;
  Mat A_s;
  Mat B_s1;  // width n_xi
  Mat B_s2;  // width n_ui
  Mat B_sd;  // width n_x + 2 n_u + n_d, the d_s channels
  Mat C_x;   // n_xi rows
  Mat C_u;   // n_ui rows
  std::vector<Eigen::Index> support;  // closed-loop state indices, ascending
  Eigen::Index n_s() const { return A_s.rows(); }
};

AreaModel extract_area_model(const ClosedLoop& cl, int i);

// Predicted initial-condition response of area i at offset t from the
// reported neighborhood initial conditions, split into x and u_f rows.
std::pair<Vec, Vec> theta_signals(const ClosedLoop& cl, int i,
                                  const std::vector<std::pair<Vec, Vec>>& reported_ics, int t);

}  // namespace dmpc
