#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <variant>
#include <vector>

#include "dmpc/solver.hpp"
#include "dmpc/state_space.hpp"

namespace dmpc {

// Axis-aligned interval product {c - r <= v <= c + r}. A zero half-width pins
// the coordinate to an equality.
struct Box {
  Vec c;
  Vec r;

  Eigen::Index dim() const { return c.size(); }

  void check() const {
    if (c.size() < 1 || c.size() != r.size() || (r.array() < 0).any())
      throw std::invalid_argument("Box: half-widths must be nonnegative, dim >= 1");
  }

  static Box centered(const Vec& halfwidths) { return {Vec::Zero(halfwidths.size()), halfwidths}; }
  static Box interval(double lo, double hi) {
    Vec c(1), r(1);
    c << 0.5 * (lo + hi);
    r << 0.5 * (hi - lo);
    return {c, r};
  }
  static Box singleton(const Vec& point) { return {point, Vec::Zero(point.size())}; }

  double lo(Eigen::Index i) const { return c(i) - r(i); }
  double hi(Eigen::Index i) const { return c(i) + r(i); }
};

// {c + G a : |a|_inf <= 1}; support function closed-form.
struct Zonotope {
  Vec c;
  Mat G;

  Eigen::Index dim() const { return c.size(); }
  Eigen::Index generators() const { return G.cols(); }

  static Zonotope from_box(const Box& b) { return {b.c, Mat(b.r.asDiagonal())}; }
  static Zonotope singleton(const Vec& point) { return {point, Mat::Zero(point.size(), 0)}; }

  // Tight axis-aligned bounding box (equals the zonotope in 1-D).
  Box bounding_box() const { return {c, G.cwiseAbs().rowwise().sum()}; }
};

// {v : H v <= h}; may be empty or unbounded.
struct HPolytope {
  Mat H;
  Vec h;

  Eigen::Index dim() const { return H.cols(); }
  Eigen::Index rows() const { return H.rows(); }

  static HPolytope from_box(const Box& b) {
    const Eigen::Index n = b.dim();
    HPolytope p;
    p.H = Mat::Zero(2 * n, n);
    p.h = Vec::Zero(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.H(2 * i, i) = 1.0;
      p.h(2 * i) = b.hi(i);
      p.H(2 * i + 1, i) = -1.0;
      p.h(2 * i + 1) = -b.lo(i);
    }
    return p;
  }
};

using ConvexSet = std::variant<Box, Zonotope, HPolytope>;

inline Eigen::Index dim(const ConvexSet& s) {
  return std::visit([](const auto& v) { return v.dim(); }, s);
}

// ---- support functions --------------------------------------------------

enum class SupportStatus { Finite, Unbounded, Empty };

struct SupportResult {
  double value = 0.0;
  SupportStatus status = SupportStatus::Finite;
};

inline SupportResult support(const Box& b, const Vec& d) {
  if (d.size() != b.dim()) throw std::invalid_argument("support: direction dimension mismatch");
  return {d.dot(b.c) + d.cwiseAbs().dot(b.r), SupportStatus::Finite};
}

inline SupportResult support(const Zonotope& z, const Vec& d) {
  if (d.size() != z.dim()) throw std::invalid_argument("support: direction dimension mismatch");
  return {d.dot(z.c) + (z.G.transpose() * d).cwiseAbs().sum(), SupportStatus::Finite};
}

inline SupportResult support(const HPolytope& p, const Vec& d) {
  if (d.size() != p.dim()) throw std::invalid_argument("support: direction dimension mismatch");
  QpProblem lp;
  lp.q = -d;  // maximise d'v
  lp.A_in = p.H;
  lp.b_in = p.h;
  QpSolution s = solve_lp(lp);
  switch (s.status) {
    case SolveStatus::Optimal: return {-s.objective, SupportStatus::Finite};
    case SolveStatus::Unbounded: return {std::numeric_limits<double>::infinity(), SupportStatus::Unbounded};
    case SolveStatus::Infeasible: return {-std::numeric_limits<double>::infinity(), SupportStatus::Empty};
    default: throw std::runtime_error("support: LP backend did not converge");
  }
}

inline SupportResult support(const ConvexSet& s, const Vec& d) {
  return std::visit([&](const auto& v) { return support(v, d); }, s);
}

// ---- Minkowski sum, linear image, product -------------------------------

inline Zonotope as_zonotope(const ConvexSet& s) {
  if (std::holds_alternative<Box>(s)) return Zonotope::from_box(std::get<Box>(s));
  if (std::holds_alternative<Zonotope>(s)) return std::get<Zonotope>(s);
  throw std::invalid_argument("as_zonotope: H-polytopes have no exact zonotope form");
}

inline Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("minkowski_sum: dimension mismatch");
  Zonotope out;
  out.c = a.c + b.c;
  out.G.resize(a.dim(), a.generators() + b.generators());
  out.G << a.G, b.G;
  return out;
}

inline Zonotope minkowski_sum(const ConvexSet& a, const ConvexSet& b) {
  return minkowski_sum(as_zonotope(a), as_zonotope(b));
}

// Interval arithmetic sum, exact on boxes.
inline Box box_sum(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("box_sum: dimension mismatch");
  return {a.c + b.c, a.r + b.r};
}

template <typename Derived>
Zonotope linear_image(const Eigen::MatrixBase<Derived>& M, const Zonotope& z) {
  if (M.cols() != z.dim()) throw std::invalid_argument("linear_image: dimension mismatch");
  return {M * z.c, M * z.G};
}

template <typename Derived>
Zonotope linear_image(const Eigen::MatrixBase<Derived>& M, const Box& b) {
  return linear_image(M, Zonotope::from_box(b));
}

template <typename Derived>
Zonotope linear_image(const Eigen::MatrixBase<Derived>& M, const ConvexSet& s) {
  return linear_image(M, as_zonotope(s));
}

inline Box product(const Box& a, const Box& b) {
  Box out;
  out.c.resize(a.dim() + b.dim());
  out.c << a.c, b.c;
  out.r.resize(a.dim() + b.dim());
  out.r << a.r, b.r;
  return out;
}

inline Zonotope product(const Zonotope& a, const Zonotope& b) {
  Zonotope out;
  out.c.resize(a.dim() + b.dim());
  out.c << a.c, b.c;
  out.G = Mat::Zero(a.dim() + b.dim(), a.generators() + b.generators());
  out.G.topLeftCorner(a.dim(), a.generators()) = a.G;
  out.G.bottomRightCorner(b.dim(), b.generators()) = b.G;
  return out;
}

inline HPolytope product(const HPolytope& a, const HPolytope& b) {
  HPolytope out;
  out.H = Mat::Zero(a.rows() + b.rows(), a.dim() + b.dim());
  out.H.topLeftCorner(a.rows(), a.dim()) = a.H;
  out.H.bottomRightCorner(b.rows(), b.dim()) = b.H;
  out.h.resize(a.rows() + b.rows());
  out.h << a.h, b.h;
  return out;
}

// ---- Pontryagin difference ----------------------------------------------

// Exact H-form tightening: same normals, offsets reduced by the subtrahend's
// support in each normal direction.
template <typename SetB>
HPolytope pontryagin_diff(const HPolytope& a, const SetB& b) {
  if (a.dim() != dim(ConvexSet{b})) throw std::invalid_argument("pontryagin_diff: dimension mismatch");
  HPolytope out;
  out.H = a.H;
  out.h = a.h;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    SupportResult s = support(b, Vec(a.H.row(i).transpose()));
    if (s.status != SupportStatus::Finite)
      throw std::invalid_argument("pontryagin_diff: subtrahend must be bounded and nonempty");
    out.h(i) -= s.value;
  }
  return out;
}

// Box-exact variant; throws if any interval collapses below empty.
template <typename SetB>
Box box_pontryagin_diff(const Box& a, const SetB& b, bool* empty = nullptr) {
  Box out = a;
  if (empty) *empty = false;
  for (Eigen::Index i = 0; i < a.dim(); ++i) {
    Vec e = Vec::Zero(a.dim());
    e(i) = 1.0;
    const double up = support(b, e).value;
    e(i) = -1.0;
    const double dn = support(b, e).value;
    const double lo = a.lo(i) + dn;
    const double hi = a.hi(i) - up;
    if (hi < lo) {
      if (empty) { *empty = true; return out; }
      throw std::runtime_error("box_pontryagin_diff: empty result");
    }
    out.c(i) = 0.5 * (lo + hi);
    out.r(i) = 0.5 * (hi - lo);
  }
  return out;
}

// Reflection through the origin.
inline Box reflected(const Box& b) { return {-b.c, b.r}; }
inline Zonotope reflected(const Zonotope& z) { return {-z.c, z.G}; }

// ---- membership and emptiness -------------------------------------------

inline bool contains(const Box& b, const Vec& p, double eps = 1e-9) {
  if (p.size() != b.dim()) throw std::invalid_argument("contains: dimension mismatch");
  return ((p - b.c).cwiseAbs() - b.r).maxCoeff() <= eps;
}

inline bool contains(const HPolytope& s, const Vec& p, double eps = 1e-9) {
  if (p.size() != s.dim()) throw std::invalid_argument("contains: dimension mismatch");
  if (s.rows() == 0) return true;
  return (s.H * p - s.h).maxCoeff() <= eps;
}

bool contains(const Zonotope& z, const Vec& p, double eps = 1e-9);

inline bool contains(const ConvexSet& s, const Vec& p, double eps = 1e-9) {
  return std::visit([&](const auto& v) { return contains(v, p, eps); }, s);
}

inline bool is_empty(const Box&) { return false; }
inline bool is_empty(const Zonotope&) { return false; }
bool is_empty(const HPolytope& p);

// ---- Minkowski-sum membership certificate -------------------------------

// One image term M * S of a Minkowski sum.
struct ImageTerm {
  Mat M;
  ConvexSet set;
};

enum class MemberStatus { Member, NotMember, SolverFailure };

// Decides point in sum_j M_j S_j via a single feasibility LP over the stacked
// summand variables.
MemberStatus member_of_minkowski_sum(const Vec& point, const std::vector<ImageTerm>& terms,
                                     double tol = 1e-8);

}  // namespace dmpc
