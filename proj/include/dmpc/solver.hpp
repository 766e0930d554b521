#pragma once

#include <Eigen/Dense>

#include <string>

#include "dmpc/state_space.hpp"

namespace dmpc {

// Dense convex program
//   min 1/2 x'Px + q'x  s.t.  A_in x <= b_in,  A_eq x = b_eq.
// P = 0 (or empty) makes it an LP. Equality rows are handled natively.
struct QpProblem {
  Mat P;
  Vec q;
  Mat A_in;
  Vec b_in;
  Mat A_eq;
  Vec b_eq;

  Eigen::Index n() const { return q.size(); }
  Eigen::Index m_in() const { return b_in.size(); }
  Eigen::Index m_eq() const { return b_eq.size(); }
  void check() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

std::string to_string(SolveStatus s);

struct QpSolution {
  Vec x;
  double objective = 0.0;
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  Vec lam_in;  // multipliers for A_in x <= b_in, >= 0 at optimality
  Vec lam_eq;  // multipliers for A_eq x = b_eq, free sign
  double primal_residual = 0.0;   // max constraint violation
  double dual_residual = 0.0;     // stationarity residual, inf-norm
  double duality_gap = 0.0;       // LP only: |c'x + b_in'lam + b_eq'nu|
};

struct SolverOptions {
  double tol = 1e-9;       // pivot / feasibility tolerance
  double kkt_tol = 1e-6;   // QP optimality acceptance
  int max_iter = 100000;
  double reg = 0.0;        // diagonal regularisation added to P
};

// Two-phase dense simplex with Bland's rule; deterministic.
QpSolution solve_lp(const QpProblem& problem, const SolverOptions& opts = {});

// Primal active-set method with a phase-1 LP for the initial point;
// deterministic, equality rows always in the working set.
QpSolution solve_qp(const QpProblem& problem, const SolverOptions& opts = {},
                    const Vec* warm_start = nullptr);

}  // namespace dmpc
