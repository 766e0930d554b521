#include "dmpc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dmpc {

void QpProblem::check() const {
  const Eigen::Index nv = n();
  if (nv < 1) throw std::invalid_argument("QpProblem: at least one variable required");
  if (P.size() != 0) {
    if (P.rows() != nv || P.cols() != nv) throw std::invalid_argument("QpProblem: P dimension mismatch");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + P.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("QpProblem: P must be symmetric");
  }
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != nv))
    throw std::invalid_argument("QpProblem: inequality block dimension mismatch");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != nv))
    throw std::invalid_argument("QpProblem: equality block dimension mismatch");
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max-iter";
  }
  return "unknown";
}

namespace {

// Tableau simplex over  min c'z  s.t.  A z = b, z >= 0  with b >= 0 assumed.
// Bland's rule throughout; returns false on iteration exhaustion.
struct Tableau {
  Mat T;                    // m x n_cols, current B^{-1} A
  Vec xB;                   // m, current basic values (>= 0)
  std::vector<int> basis;   // m, column index basic in each row

  bool run(const Vec& c, const std::vector<bool>& allowed, double tol, int max_iter, int& iters,
           bool& unbounded) {
    const Eigen::Index m = T.rows();
    const Eigen::Index n_cols = T.cols();
    unbounded = false;
    for (; iters < max_iter; ++iters) {
      Vec cB(m);
      for (Eigen::Index i = 0; i < m; ++i) cB(i) = c(basis[i]);
      Vec r = c - T.transpose() * cB;
      int enter = -1;
      for (Eigen::Index j = 0; j < n_cols; ++j) {
        if (!allowed[j]) continue;
        bool basic = false;
        for (Eigen::Index i = 0; i < m; ++i) basic |= (basis[i] == j);
        if (basic) continue;
        if (r(j) < -tol) { enter = static_cast<int>(j); break; }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) {
        if (T(i, enter) > tol) {
          double ratio = xB(i) / T(i, enter);
          if (ratio < best - tol || (ratio < best + tol && (leave < 0 || basis[i] < basis[leave]))) {
            best = ratio;
            leave = static_cast<int>(i);
          }
        }
      }
      if (leave < 0) { unbounded = true; return true; }
      pivot(leave, enter);
    }
    return false;
  }

  void pivot(int row, int col) {
    const double pv = T(row, col);
    T.row(row) /= pv;
    xB(row) /= pv;
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
      if (i == row) continue;
      const double f = T(i, col);
      if (f != 0.0) {
        T.row(i) -= f * T.row(row);
        xB(i) -= f * xB(row);
      }
    }
    basis[row] = col;
  }
};

}  // namespace

QpSolution solve_lp(const QpProblem& problem, const SolverOptions& opts) {
  problem.check();
  const Eigen::Index n = problem.n();
  const Eigen::Index m_eq = problem.m_eq();
  const Eigen::Index m_in = problem.m_in();
  const Eigen::Index m = m_eq + m_in;

  QpSolution sol;
  sol.lam_in = Vec::Zero(m_in);
  sol.lam_eq = Vec::Zero(m_eq);

  if (m == 0) {
    // Unconstrained LP: bounded iff the cost is identically zero.
    sol.x = Vec::Zero(n);
    sol.objective = 0.0;
    sol.status = (problem.q.cwiseAbs().maxCoeff() == 0.0) ? SolveStatus::Optimal
                                                          : SolveStatus::Unbounded;
    return sol;
  }

  // Standard form: z = [x+; x-; s], columns 2n + m_in, rows sign-flipped so b >= 0.
  const Eigen::Index nz = 2 * n + m_in;
  Mat A = Mat::Zero(m, nz);
  Vec b(m);
  Vec sigma = Vec::Ones(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    Vec row;
    double rhs;
    if (i < m_eq) {
      row = problem.A_eq.row(i);
      rhs = problem.b_eq(i);
    } else {
      row = problem.A_in.row(i - m_eq);
      rhs = problem.b_in(i - m_eq);
    }
    if (rhs < 0) { row = -row; rhs = -rhs; sigma(i) = -1.0; }
    A.block(i, 0, 1, n) = row.transpose();
    A.block(i, n, 1, n) = -row.transpose();
    if (i >= m_eq) A(i, 2 * n + (i - m_eq)) = sigma(i);
    b(i) = rhs;
  }

  // Phase 1 with artificial variables.
  const Eigen::Index total = nz + m;
  Tableau tab;
  tab.T = Mat::Zero(m, total);
  tab.T.leftCols(nz) = A;
  tab.T.rightCols(m) = Mat::Identity(m, m);
  tab.xB = b;
  tab.basis.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) tab.basis[i] = static_cast<int>(nz + i);

  Vec c1 = Vec::Zero(total);
  c1.tail(m).setOnes();
  std::vector<bool> allow_all(total, true);
  int iters = 0;
  bool unbounded = false;
  if (!tab.run(c1, allow_all, opts.tol, opts.max_iter, iters, unbounded)) {
    sol.status = SolveStatus::MaxIter;
    sol.iterations = iters;
    return sol;
  }
  double infeas = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (tab.basis[i] >= nz) infeas += tab.xB(i);
  if (infeas > opts.tol * (1.0 + b.cwiseAbs().maxCoeff())) {
    sol.status = SolveStatus::Infeasible;
    sol.iterations = iters;
    return sol;
  }

  // Drive remaining zero-valued artificials out of the basis where possible.
  std::vector<bool> row_live(m, true);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (tab.basis[i] < nz) continue;
    int col = -1;
    for (Eigen::Index j = 0; j < nz; ++j)
      if (std::abs(tab.T(i, j)) > opts.tol) { col = static_cast<int>(j); break; }
    if (col >= 0) tab.pivot(static_cast<int>(i), col);
    else row_live[i] = false;  // redundant row, artificial pinned at zero
  }

  // Phase 2: artificial columns barred from entering.
  Vec c2 = Vec::Zero(total);
  c2.head(n) = problem.q;
  c2.segment(n, n) = -problem.q;
  std::vector<bool> allow(total, true);
  for (Eigen::Index j = nz; j < total; ++j) allow[j] = false;
  if (!tab.run(c2, allow, opts.tol, opts.max_iter, iters, unbounded)) {
    sol.status = SolveStatus::MaxIter;
    sol.iterations = iters;
    return sol;
  }
  sol.iterations = iters;
  if (unbounded) {
    sol.status = SolveStatus::Unbounded;
    return sol;
  }

  Vec z = Vec::Zero(total);
  for (Eigen::Index i = 0; i < m; ++i) z(tab.basis[i]) = tab.xB(i);
  sol.x = z.head(n) - z.segment(n, n);
  sol.objective = problem.q.dot(sol.x);

  // Duals from the final basis: solve B' y = c_B over live rows, then map the
  // sign normalisation back to the original rows.
  {
    std::vector<int> live;
    for (Eigen::Index i = 0; i < m; ++i)
      if (row_live[i]) live.push_back(static_cast<int>(i));
    const Eigen::Index ml = static_cast<Eigen::Index>(live.size());
    Mat B(ml, ml);
    Vec cB(ml);
    for (Eigen::Index a = 0; a < ml; ++a) {
      const int col = tab.basis[live[a]];
      for (Eigen::Index r = 0; r < ml; ++r) B(r, a) = A(live[r], col);
      cB(a) = c2(col);
    }
    Vec y_live = B.transpose().fullPivLu().solve(cB);
    Vec yhat = Vec::Zero(m);
    for (Eigen::Index a = 0; a < ml; ++a) yhat(live[a]) = sigma(live[a]) * y_live(a);
    for (Eigen::Index i = 0; i < m_eq; ++i) sol.lam_eq(i) = -yhat(i);
    for (Eigen::Index i = 0; i < m_in; ++i) sol.lam_in(i) = std::max(0.0, -yhat(m_eq + i));
  }

  double pres = 0.0;
  if (m_in > 0) pres = std::max(pres, (problem.A_in * sol.x - problem.b_in).maxCoeff());
  if (m_eq > 0) pres = std::max(pres, (problem.A_eq * sol.x - problem.b_eq).cwiseAbs().maxCoeff());
  sol.primal_residual = std::max(0.0, pres);
  Vec stat = problem.q;
  if (m_in > 0) stat += problem.A_in.transpose() * sol.lam_in;
  if (m_eq > 0) stat += problem.A_eq.transpose() * sol.lam_eq;
  sol.dual_residual = stat.cwiseAbs().maxCoeff();
  double gap = problem.q.dot(sol.x);
  if (m_in > 0) gap += problem.b_in.dot(sol.lam_in);
  if (m_eq > 0) gap += problem.b_eq.dot(sol.lam_eq);
  sol.duality_gap = std::abs(gap);
  sol.status = SolveStatus::Optimal;
  return sol;
}

QpSolution solve_qp(const QpProblem& problem, const SolverOptions& opts, const Vec* warm_start) {
  problem.check();
  const Eigen::Index n = problem.n();
  const Eigen::Index m_in = problem.m_in();
  const Eigen::Index m_eq = problem.m_eq();

  Mat P = problem.P.size() ? problem.P : Mat::Zero(n, n);
  if (opts.reg > 0.0) P.diagonal().array() += opts.reg;

  QpSolution sol;
  sol.lam_in = Vec::Zero(m_in);
  sol.lam_eq = Vec::Zero(m_eq);

  auto feasible = [&](const Vec& x) {
    if (m_in > 0 && (problem.A_in * x - problem.b_in).maxCoeff() > opts.tol) return false;
    if (m_eq > 0 && (problem.A_eq * x - problem.b_eq).cwiseAbs().maxCoeff() > opts.tol) return false;
    return true;
  };

  Vec x;
  if (warm_start && warm_start->size() == n && feasible(*warm_start)) {
    x = *warm_start;
  } else if (m_in == 0 && m_eq == 0) {
    x = Vec::Zero(n);
  } else {
    QpProblem feas;
    feas.q = Vec::Zero(n);
    feas.A_in = problem.A_in;
    feas.b_in = problem.b_in;
    feas.A_eq = problem.A_eq;
    feas.b_eq = problem.b_eq;
    QpSolution fs = solve_lp(feas, opts);
    if (fs.status == SolveStatus::Infeasible) {
      sol.status = SolveStatus::Infeasible;
      sol.iterations = fs.iterations;
      return sol;
    }
    if (fs.status != SolveStatus::Optimal) {
      sol.status = fs.status;
      sol.iterations = fs.iterations;
      return sol;
    }
    x = fs.x;
  }

  std::vector<int> work;  // active inequality rows, ascending
  for (Eigen::Index i = 0; i < m_in; ++i)
    if (std::abs(problem.A_in.row(i).dot(x) - problem.b_in(i)) <= opts.tol)
      work.push_back(static_cast<int>(i));

  const double step_tol = 1e-11;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    sol.iterations = iter + 1;
    const Eigen::Index mw = m_eq + static_cast<Eigen::Index>(work.size());
    Mat K(n + mw, n + mw);
    K.setZero();
    K.topLeftCorner(n, n) = P;
    Mat Aw(mw, n);
    for (Eigen::Index i = 0; i < m_eq; ++i) Aw.row(i) = problem.A_eq.row(i);
    for (size_t a = 0; a < work.size(); ++a) Aw.row(m_eq + static_cast<Eigen::Index>(a)) = problem.A_in.row(work[a]);
    if (mw > 0) {
      K.topRightCorner(n, mw) = Aw.transpose();
      K.bottomLeftCorner(mw, n) = Aw;
    }
    Vec g = P * x + problem.q;
    Vec rhs(n + mw);
    rhs.head(n) = -g;
    if (mw > 0) rhs.tail(mw).setZero();
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) {
      // Singular KKT system: curvature missing along a feasible direction.
      sol.x = x;
      sol.status = SolveStatus::Unbounded;
      return sol;
    }
    Vec pw = lu.solve(rhs);
    Vec p = pw.head(n);
    Vec mu = mw > 0 ? Vec(pw.tail(mw)) : Vec();

    bool stationary = p.cwiseAbs().maxCoeff() <= step_tol * (1.0 + x.cwiseAbs().maxCoeff());
    if (!stationary) {
      double alpha = 1.0;
      int block = -1;
      for (Eigen::Index i = 0; i < m_in; ++i) {
        bool inw = false;
        for (int wj : work) inw |= (wj == i);
        if (inw) continue;
        const double ap = problem.A_in.row(i).dot(p);
        if (ap > opts.tol) {
          const double ai = (problem.b_in(i) - problem.A_in.row(i).dot(x)) / ap;
          if (ai < alpha - 1e-15) { alpha = ai; block = static_cast<int>(i); }
        }
      }
      alpha = std::max(alpha, 0.0);
      x += alpha * p;
      if (block >= 0) {
        auto it = std::lower_bound(work.begin(), work.end(), block);
        work.insert(it, block);
        continue;
      }
      // a full unblocked step lands on the working-set minimiser; the
      // multipliers from this KKT solve are valid there, so fall through to
      // the optimality test instead of re-measuring the step against roundoff
      stationary = true;
    }

    if (stationary) {
      int drop = -1;
      double most_neg = -opts.tol;
      for (size_t a = 0; a < work.size(); ++a) {
        const double m = mu(m_eq + static_cast<Eigen::Index>(a));
        if (m < most_neg) { most_neg = m; drop = static_cast<int>(a); }
      }
      if (drop < 0) {
        sol.x = x;
        for (Eigen::Index i = 0; i < m_eq; ++i) sol.lam_eq(i) = mu(i);
        for (size_t a = 0; a < work.size(); ++a)
          sol.lam_in(work[a]) = std::max(0.0, mu(m_eq + static_cast<Eigen::Index>(a)));
        sol.objective = 0.5 * x.dot(problem.P.size() ? problem.P * x : Vec(Vec::Zero(n))) +
                        problem.q.dot(x);
        double pres = 0.0;
        if (m_in > 0) pres = std::max(pres, (problem.A_in * x - problem.b_in).maxCoeff());
        if (m_eq > 0) pres = std::max(pres, (problem.A_eq * x - problem.b_eq).cwiseAbs().maxCoeff());
        sol.primal_residual = std::max(0.0, pres);
        Vec stat = P * x + problem.q;
        if (m_in > 0) stat += problem.A_in.transpose() * sol.lam_in;
        if (m_eq > 0) stat += problem.A_eq.transpose() * sol.lam_eq;
        sol.dual_residual = stat.cwiseAbs().maxCoeff();
        sol.status = SolveStatus::Optimal;
        return sol;
      }
      work.erase(work.begin() + drop);
    }
  }
  sol.x = x;
  sol.status = SolveStatus::MaxIter;
  return sol;
}

}  // namespace dmpc
