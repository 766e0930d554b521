#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dmpc {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mat = MatX<double>;
using Vec = VecX<double>;

// Discrete-time LTI realisation
//   x[k+1] = A x[k] + B_u u[k] + B_d d[k]
//   y[k]   = C x[k] + D_u u[k] + D_d d[k]
// A "network-form" realisation has C = I, D_u = 0, D_d = 0 (full state output).
template <typename Scalar>
struct StateSpaceT {
  MatX<Scalar> A;
  MatX<Scalar> B_u;
  MatX<Scalar> B_d;
  MatX<Scalar> C;
  MatX<Scalar> D_u;
  MatX<Scalar> D_d;

  Eigen::Index n_x() const { return A.rows(); }
  Eigen::Index n_u() const { return B_u.cols(); }
  Eigen::Index n_d() const { return B_d.cols(); }
  Eigen::Index n_y() const { return C.rows(); }

  void check() const {
    if (A.rows() < 1 || A.rows() != A.cols())
      throw std::invalid_argument("StateSpace: A must be square, n_x >= 1");
    if (B_u.rows() != A.rows() || B_d.rows() != A.rows())
      throw std::invalid_argument("StateSpace: input matrix row count mismatch");
    if (C.cols() != A.rows())
      throw std::invalid_argument("StateSpace: C column count mismatch");
    if (D_u.rows() != C.rows() || D_u.cols() != B_u.cols())
      throw std::invalid_argument("StateSpace: D_u dimension mismatch");
    if (D_d.rows() != C.rows() || D_d.cols() != B_d.cols())
      throw std::invalid_argument("StateSpace: D_d dimension mismatch");
  }

  bool is_network_form(Scalar tol = Scalar(0)) const {
    if (C.rows() != C.cols() || C.rows() != A.rows()) return false;
    return (C - MatX<Scalar>::Identity(A.rows(), A.rows())).cwiseAbs().maxCoeff() <= tol &&
           (D_u.size() == 0 || D_u.cwiseAbs().maxCoeff() <= tol) &&
           (D_d.size() == 0 || D_d.cwiseAbs().maxCoeff() <= tol);
  }

  // Convenience constructor for network-form systems (C = I, zero feedthrough).
  static StateSpaceT network_form(MatX<Scalar> A, MatX<Scalar> B_u, MatX<Scalar> B_d) {
    const Eigen::Index n = A.rows();
    StateSpaceT sys{std::move(A), std::move(B_u), std::move(B_d),
                    MatX<Scalar>::Identity(n, n),
                    MatX<Scalar>::Zero(n, 0), MatX<Scalar>::Zero(n, 0)};
    sys.D_u = MatX<Scalar>::Zero(n, sys.B_u.cols());
    sys.D_d = MatX<Scalar>::Zero(n, sys.B_d.cols());
    sys.check();
    return sys;
  }
};

using StateSpace = StateSpaceT<double>;

template <typename Scalar>
std::pair<VecX<Scalar>, VecX<Scalar>> simulate_step(const StateSpaceT<Scalar>& sys,
                                                    const VecX<Scalar>& x,
                                                    const VecX<Scalar>& u,
                                                    const VecX<Scalar>& d) {
  if (x.size() != sys.n_x() || u.size() != sys.n_u() || d.size() != sys.n_d())
    throw std::invalid_argument("simulate_step: dimension mismatch (x/u/d vs realisation)");
  VecX<Scalar> x_next = sys.A * x + sys.B_u * u + sys.B_d * d;
  VecX<Scalar> y = sys.C * x + sys.D_u * u + sys.D_d * d;
  return {std::move(x_next), std::move(y)};
}

// Zero-initial-state response to an input sequence applied on the u channel
// (d held at zero): y[k] = D_u u[k] + sum_{i>=1} C A^{i-1} B_u u[k-i].
template <typename Scalar>
std::vector<VecX<Scalar>> forced_response(const StateSpaceT<Scalar>& sys,
                                          const std::vector<VecX<Scalar>>& inputs) {
  std::vector<VecX<Scalar>> ys;
  ys.reserve(inputs.size());
  VecX<Scalar> x = VecX<Scalar>::Zero(sys.n_x());
  const VecX<Scalar> d = VecX<Scalar>::Zero(sys.n_d());
  for (const auto& u : inputs) {
    auto [x_next, y] = simulate_step(sys, x, u, d);
    ys.push_back(std::move(y));
    x = std::move(x_next);
  }
  return ys;
}

template <typename Scalar>
Scalar spectral_radius(const MatX<Scalar>& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("spectral_radius: non-square input");
  Eigen::EigenSolver<MatX<Scalar>> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace dmpc
