#pragma once

#include <Eigen/Dense>

#include <numeric>
#include <stdexcept>
#include <vector>

#include "dmpc/state_space.hpp"

namespace dmpc {

// Selection of a contiguous index block [offset, offset+size) in an ambient
// space of dimension `ambient`. Columns of the equivalent matrix are the
// standard basis vectors e_{offset+1}..e_{offset+size}, in ascending order.
struct SelectionMatrix {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  Eigen::Index ambient = 0;

  Mat matrix() const {
    Mat S = Mat::Zero(ambient, size);
    for (Eigen::Index j = 0; j < size; ++j) S(offset + j, j) = 1.0;
    return S;
  }

  Vec select(const Vec& v) const {
    if (v.size() != ambient) throw std::invalid_argument("select: ambient dimension mismatch");
    return v.segment(offset, size);
  }

  Vec embed(const Vec& v_small) const {
    if (v_small.size() != size) throw std::invalid_argument("embed: block dimension mismatch");
    Vec v = Vec::Zero(ambient);
    v.segment(offset, size) = v_small;
    return v;
  }

  // Rows [offset, offset+size) of M, i.e. S^T M.
  Mat select_rows(const Mat& M) const {
    if (M.rows() != ambient) throw std::invalid_argument("select_rows: ambient mismatch");
    return M.middleRows(offset, size);
  }
};

// Contiguous partition of state indices {1..n_x} and input indices {1..n_u}
// into N areas, with per-area neighborhood sets N_i (i is always in N_i).
struct AreaPartition {
  int N = 0;
  Eigen::Index n_x = 0;
  Eigen::Index n_u = 0;
  std::vector<Eigen::Index> x_offset, x_size;
  std::vector<Eigen::Index> u_offset, u_size;
  std::vector<std::vector<int>> neighbors;  // ascending, contains i

  SelectionMatrix S_x(int i) const { return {x_offset.at(i), x_size.at(i), n_x}; }
  SelectionMatrix S_u(int i) const { return {u_offset.at(i), u_size.at(i), n_u}; }

  int area_of_state(Eigen::Index k) const {
    for (int i = 0; i < N; ++i)
      if (k >= x_offset[i] && k < x_offset[i] + x_size[i]) return i;
    throw std::out_of_range("area_of_state: index outside partition");
  }
  int area_of_input(Eigen::Index k) const {
    for (int i = 0; i < N; ++i)
      if (k >= u_offset[i] && k < u_offset[i] + u_size[i]) return i;
    throw std::out_of_range("area_of_input: index outside partition");
  }

  bool is_neighbor(int i, int j) const {
    for (int m : neighbors.at(i))
      if (m == j) return true;
    return false;
  }
};

// Builds the contiguous partition from per-area (state count, input count)
// pairs. Neighborhoods default to {i} and can be widened afterwards.
inline AreaPartition partition(Eigen::Index n_x, Eigen::Index n_u,
                               const std::vector<std::pair<Eigen::Index, Eigen::Index>>& sizes) {
  AreaPartition p;
  p.N = static_cast<int>(sizes.size());
  p.n_x = n_x;
  p.n_u = n_u;
  Eigen::Index ax = 0, au = 0;
  for (int i = 0; i < p.N; ++i) {
    auto [sx, su] = sizes[i];
    if (sx < 0 || su < 0 || (sx == 0 && su == 0))
      throw std::invalid_argument("partition: per-area sizes must be positive");
    p.x_offset.push_back(ax);
    p.x_size.push_back(sx);
    p.u_offset.push_back(au);
    p.u_size.push_back(su);
    ax += sx;
    au += su;
    p.neighbors.push_back({i});
  }
  if (ax != n_x || au != n_u)
    throw std::invalid_argument("partition: per-area sizes do not sum to ambient dimensions");
  return p;
}

inline void set_neighbors(AreaPartition& p, const std::vector<std::vector<int>>& neighbors) {
  if (static_cast<int>(neighbors.size()) != p.N)
    throw std::invalid_argument("set_neighbors: one neighbor list per area required");
  for (int i = 0; i < p.N; ++i) {
    bool self = false;
    for (int j : neighbors[i]) {
      if (j < 0 || j >= p.N) throw std::invalid_argument("set_neighbors: area index out of range");
      self |= (j == i);
    }
    if (!self) throw std::invalid_argument("set_neighbors: i must belong to N_i");
  }
  p.neighbors = neighbors;
}

}  // namespace dmpc
