#include "dmpc/sets.hpp"

namespace dmpc {

bool is_empty(const HPolytope& p) {
  if (p.rows() == 0) return false;
  QpProblem lp;
  lp.q = Vec::Zero(p.dim());
  lp.A_in = p.H;
  lp.b_in = p.h;
  return solve_lp(lp).status == SolveStatus::Infeasible;
}

MemberStatus member_of_minkowski_sum(const Vec& point, const std::vector<ImageTerm>& terms,
                                     double tol) {
  const Eigen::Index n = point.size();
  Eigen::Index n_vars = 0;
  Eigen::Index m_in = 0;
  for (const auto& t : terms) {
    if (t.M.rows() != n || t.M.cols() != dim(t.set))
      throw std::invalid_argument("member_of_minkowski_sum: image term dimension mismatch");
    if (std::holds_alternative<Box>(t.set)) {
      n_vars += dim(t.set);
      m_in += 2 * dim(t.set);
    } else if (std::holds_alternative<Zonotope>(t.set)) {
      const auto& z = std::get<Zonotope>(t.set);
      n_vars += z.generators();
      m_in += 2 * z.generators();
    } else {
      const auto& hp = std::get<HPolytope>(t.set);
      n_vars += hp.dim();
      m_in += hp.rows();
    }
  }
  if (n_vars == 0) {
    Vec residual = point;
    for (const auto& t : terms)
      if (std::holds_alternative<Zonotope>(t.set)) residual -= t.M * std::get<Zonotope>(t.set).c;
    return residual.cwiseAbs().maxCoeff() <= tol ? MemberStatus::Member : MemberStatus::NotMember;
  }

  QpProblem lp;
  lp.q = Vec::Zero(n_vars);
  lp.A_eq = Mat::Zero(n, n_vars);
  lp.b_eq = point;
  lp.A_in = Mat::Zero(m_in, n_vars);
  lp.b_in = Vec::Zero(m_in);

  Eigen::Index col = 0, row = 0;
  for (const auto& t : terms) {
    if (std::holds_alternative<Box>(t.set)) {
      const auto& b = std::get<Box>(t.set);
      const Eigen::Index d = b.dim();
      lp.A_eq.middleCols(col, d) = t.M;
      for (Eigen::Index i = 0; i < d; ++i) {
        lp.A_in(row, col + i) = 1.0;
        lp.b_in(row++) = b.hi(i);
        lp.A_in(row, col + i) = -1.0;
        lp.b_in(row++) = -b.lo(i);
      }
      col += d;
    } else if (std::holds_alternative<Zonotope>(t.set)) {
      const auto& z = std::get<Zonotope>(t.set);
      const Eigen::Index g = z.generators();
      lp.A_eq.middleCols(col, g) = t.M * z.G;
      lp.b_eq -= t.M * z.c;
      for (Eigen::Index i = 0; i < g; ++i) {
        lp.A_in(row, col + i) = 1.0;
        lp.b_in(row++) = 1.0;
        lp.A_in(row, col + i) = -1.0;
        lp.b_in(row++) = 1.0;
      }
      col += g;
    } else {
      const auto& hp = std::get<HPolytope>(t.set);
      const Eigen::Index d = hp.dim();
      lp.A_eq.middleCols(col, d) = t.M;
      lp.A_in.block(row, col, hp.rows(), d) = hp.H;
      lp.b_in.segment(row, hp.rows()) = hp.h;
      row += hp.rows();
      col += d;
    }
  }

  SolverOptions opts;
  opts.tol = tol;
  QpSolution s = solve_lp(lp, opts);
  if (s.status == SolveStatus::Optimal) return MemberStatus::Member;
  if (s.status == SolveStatus::Infeasible) return MemberStatus::NotMember;
  return MemberStatus::SolverFailure;
}

bool contains(const Zonotope& z, const Vec& p, double eps) {
  if (p.size() != z.dim()) throw std::invalid_argument("contains: dimension mismatch");
  return member_of_minkowski_sum(p, {{Mat::Identity(z.dim(), z.dim()), z}}, eps) ==
         MemberStatus::Member;
}

}  // namespace dmpc
