#include "dmpc/nrf.hpp"

#include <algorithm>
#include <deque>
#include <string>

namespace dmpc {

namespace {

Mat companion(const NrfBlock& b) {
  Mat A = Mat::Zero(b.order, b.order);
  A.col(0) = b.a_col;
  for (int j = 0; j + 1 < b.order; ++j) A(j, j + 1) = 1.0;
  return A;
}

}  // namespace

Mat NrfLayer::A_r() const {
  Mat A = Mat::Zero(n_w, n_w);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    A.block(w_offset[l], w_offset[l], b.order, b.order) = companion(b);
  }
  return A;
}

Mat NrfLayer::B_ru() const {
  Mat B = Mat::Zero(n_w, part.n_u);
  for (std::size_t l = 0; l < blocks.size(); ++l)
    B.middleRows(w_offset[l], blocks[l].order) = blocks[l].K.leftCols(part.n_u);
  return B;
}

Mat NrfLayer::B_rx() const {
  Mat B = Mat::Zero(n_w, part.n_x);
  for (std::size_t l = 0; l < blocks.size(); ++l)
    B.middleRows(w_offset[l], blocks[l].order) = blocks[l].K.rightCols(part.n_x);
  return B;
}

Mat NrfLayer::C_w() const {
  Mat C = Mat::Zero(part.n_u, n_w);
  for (std::size_t l = 0; l < blocks.size(); ++l) C(static_cast<Eigen::Index>(l), w_offset[l]) = 1.0;
  return C;
}

NrfLayer build_nrf_layer(const AreaPartition& part, std::vector<NrfBlock> blocks) {
  if (static_cast<Eigen::Index>(blocks.size()) != part.n_u)
    throw std::invalid_argument("build_nrf_layer: one block per command row required");
  NrfLayer layer;
  layer.part = part;
  layer.blocks = std::move(blocks);

  for (Eigen::Index l = 0; l < part.n_u; ++l) {
    const auto& b = layer.blocks[l];
    if (b.order < 1 || b.a_col.size() != b.order)
      throw std::invalid_argument("build_nrf_layer: companion coefficient count mismatch at row " +
                                  std::to_string(l));
    if (b.K.rows() != b.order || b.K.cols() != part.n_u + part.n_x)
      throw std::invalid_argument("build_nrf_layer: gain row width mismatch at row " +
                                  std::to_string(l));
    const int i = part.area_of_input(l);
    for (Eigen::Index q = 0; q < part.n_u + part.n_x; ++q) {
      const int owner = q < part.n_u ? part.area_of_input(q) : part.area_of_state(q - part.n_u);
      if (!part.is_neighbor(i, owner) && b.K.col(q).cwiseAbs().maxCoeff() != 0.0)
        throw std::invalid_argument("build_nrf_layer: gain on non-neighbor signal at row " +
                                    std::to_string(l) + ", column " + std::to_string(q));
    }
  }

  layer.w_offset.resize(layer.blocks.size());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < layer.blocks.size(); ++l) {
    layer.w_offset[l] = off;
    off += layer.blocks[l].order;
  }
  layer.n_w = off;
  for (int i = 0; i < part.N; ++i) {
    const Eigen::Index first = layer.w_offset[part.u_offset[i]];
    Eigen::Index size = 0;
    for (Eigen::Index l = part.u_offset[i]; l < part.u_offset[i] + part.u_size[i]; ++l)
      size += layer.blocks[l].order;
    layer.w_area_offset.push_back(first);
    layer.w_area_size.push_back(size);
  }
  return layer;
}

std::pair<Vec, Vec> uf_step(const NrfLayer& layer, const Vec& w, const Vec& uf_fed,
                            const Vec& x_fed) {
  if (w.size() != layer.n_w || uf_fed.size() != layer.part.n_u || x_fed.size() != layer.part.n_x)
    throw std::invalid_argument("uf_step: dimension mismatch");
  Vec u_f(layer.part.n_u);
  Vec w_next(layer.n_w);
  for (std::size_t l = 0; l < layer.blocks.size(); ++l) {
    const auto& b = layer.blocks[l];
    const Eigen::Index o = layer.w_offset[l];
    u_f(static_cast<Eigen::Index>(l)) = w(o);
    Vec fed(uf_fed.size() + x_fed.size());
    fed << uf_fed, x_fed;
    for (int j = 0; j < b.order; ++j) {
      double v = b.a_col(j) * w(o) + b.K.row(j).dot(fed);
      if (j + 1 < b.order) v += w(o + j + 1);
      w_next(o + j) = v;
    }
  }
  return {std::move(u_f), std::move(w_next)};
}

ClosedLoop assemble_closed_loop(const StateSpace& plant, const NrfLayer& layer) {
  plant.check();
  if (!plant.is_network_form())
    throw std::invalid_argument("assemble_closed_loop: plant must be in network form");
  if (plant.n_x() != layer.part.n_x || plant.n_u() != layer.part.n_u)
    throw std::invalid_argument("assemble_closed_loop: plant/partition dimension mismatch");

  ClosedLoop cl;
  cl.n_x = plant.n_x();
  cl.n_u = plant.n_u();
  cl.n_w = layer.n_w;
  cl.n_d = plant.n_d();
  cl.part = layer.part;
  cl.w_area_offset = layer.w_area_offset;
  cl.w_area_size = layer.w_area_size;

  const Mat Cw = layer.C_w();
  const Mat Bru = layer.B_ru();
  const Mat Brx = layer.B_rx();

  // x+ = A x + B_u (C_w w + u_s2 + beta_s2) + B_d d
  // w+ = A_r w + B_ru (C_w w + beta_f) + B_rx (x + zeta + u_s1 + beta_s1)
  cl.A_cl = Mat::Zero(cl.n_x + cl.n_w, cl.n_x + cl.n_w);
  cl.A_cl.topLeftCorner(cl.n_x, cl.n_x) = plant.A;
  cl.A_cl.topRightCorner(cl.n_x, cl.n_w) = plant.B_u * Cw;
  cl.A_cl.bottomLeftCorner(cl.n_w, cl.n_x) = Brx;
  cl.A_cl.bottomRightCorner(cl.n_w, cl.n_w) = layer.A_r() + Bru * Cw;

  cl.B_ds = Mat::Zero(cl.n_x + cl.n_w, cl.n_x + 2 * cl.n_u + cl.n_d);
  cl.B_ds.block(cl.n_x, 0, cl.n_w, cl.n_x) = Brx;                       // zeta + beta_s1 (u_s1)
  cl.B_ds.block(0, cl.n_x, cl.n_x, cl.n_u) = plant.B_u;                 // beta_s2 (u_s2)
  cl.B_ds.block(cl.n_x, cl.n_x + cl.n_u, cl.n_w, cl.n_u) = Bru;         // beta_f
  cl.B_ds.block(0, cl.n_x + 2 * cl.n_u, cl.n_x, cl.n_d) = plant.B_d;    // d

  cl.C_cl = Mat::Zero(cl.n_x + cl.n_u, cl.n_x + cl.n_w);
  cl.C_cl.topLeftCorner(cl.n_x, cl.n_x).setIdentity();
  cl.C_cl.bottomRightCorner(cl.n_u, cl.n_w) = Cw;
  return cl;
}

Mat ClosedLoop::Z(int i) const {
  const auto Sx = part.S_x(i);
  const auto Su = part.S_u(i);
  Mat Zi = Mat::Zero(n_x + n_u, Sx.size + Su.size);
  Zi.topLeftCorner(n_x, Sx.size) = Sx.matrix();
  Zi.bottomRightCorner(n_u, Su.size) = Su.matrix();
  return Zi;
}

Mat ClosedLoop::Z_c(int i) const {
  const auto Sx = part.S_x(i);
  Mat Zc = Mat::Zero(n_x + n_w, Sx.size + w_area_size.at(i));
  Zc.topLeftCorner(n_x, Sx.size) = Sx.matrix();
  Zc.block(n_x + w_area_offset.at(i), Sx.size, w_area_size.at(i), w_area_size.at(i)).setIdentity();
  return Zc;
}

Mat ClosedLoop::ic_response_map(int t) const {
  if (t < 0) throw std::invalid_argument("ic_response_map: negative step offset");
  std::lock_guard<std::mutex> lock(*cache_mutex_);
  auto& cache = *power_cache_;
  if (cache.empty()) cache.push_back(Mat::Identity(A_cl.rows(), A_cl.cols()));
  while (static_cast<int>(cache.size()) <= t) cache.push_back(cache.back() * A_cl);
  return C_cl * cache[static_cast<std::size_t>(t)];
}

AreaModel extract_area_model(const ClosedLoop& cl, int i) {
  const Eigen::Index n = cl.n_x + cl.n_w;
  // input columns of this area within the command channels
  std::vector<Eigen::Index> in_cols;
  for (Eigen::Index j = 0; j < cl.part.x_size[i]; ++j)
    in_cols.push_back(cl.part.x_offset[i] + j);
  for (Eigen::Index j = 0; j < cl.part.u_size[i]; ++j)
    in_cols.push_back(cl.n_x + cl.part.u_offset[i] + j);
  std::vector<Eigen::Index> out_rows;
  for (Eigen::Index j = 0; j < cl.part.x_size[i]; ++j)
    out_rows.push_back(cl.part.x_offset[i] + j);
  for (Eigen::Index j = 0; j < cl.part.u_size[i]; ++j)
    out_rows.push_back(cl.n_x + cl.part.u_offset[i] + j);

  // reachable closure from the input columns over the exact sparsity of A_cl
  std::vector<bool> reach(n, false);
  std::deque<Eigen::Index> queue;
  for (Eigen::Index c : in_cols)
    for (Eigen::Index s = 0; s < n; ++s)
      if (cl.B_ds(s, c) != 0.0 && !reach[s]) {
        reach[s] = true;
        queue.push_back(s);
      }
  while (!queue.empty()) {
    const Eigen::Index s = queue.front();
    queue.pop_front();
    for (Eigen::Index t = 0; t < n; ++t)
      if (cl.A_cl(t, s) != 0.0 && !reach[t]) {
        reach[t] = true;
        queue.push_back(t);
      }
  }
  // observable closure towards the output rows
  std::vector<bool> obs(n, false);
  for (Eigen::Index r : out_rows)
    for (Eigen::Index s = 0; s < n; ++s)
      if (cl.C_cl(r, s) != 0.0 && !obs[s]) {
        obs[s] = true;
        queue.push_back(s);
      }
  while (!queue.empty()) {
    const Eigen::Index t = queue.front();
    queue.pop_front();
    for (Eigen::Index s = 0; s < n; ++s)
      if (cl.A_cl(t, s) != 0.0 && !obs[s]) {
        obs[s] = true;
        queue.push_back(s);
      }
  }

  AreaModel m;
  m.area = i;
  for (Eigen::Index s = 0; s < n; ++s)
    if (reach[s] && obs[s]) m.support.push_back(s);
  const Eigen::Index ns = static_cast<Eigen::Index>(m.support.size());
  m.A_s.resize(ns, ns);
  for (Eigen::Index a = 0; a < ns; ++a)
    for (Eigen::Index b = 0; b < ns; ++b) m.A_s(a, b) = cl.A_cl(m.support[a], m.support[b]);
  m.B_s1.resize(ns, cl.part.x_size[i]);
  m.B_s2.resize(ns, cl.part.u_size[i]);
  m.B_sd.resize(ns, cl.B_ds.cols());
  for (Eigen::Index a = 0; a < ns; ++a) {
    for (Eigen::Index j = 0; j < cl.part.x_size[i]; ++j)
      m.B_s1(a, j) = cl.B_ds(m.support[a], cl.part.x_offset[i] + j);
    for (Eigen::Index j = 0; j < cl.part.u_size[i]; ++j)
      m.B_s2(a, j) = cl.B_ds(m.support[a], cl.n_x + cl.part.u_offset[i] + j);
    m.B_sd.row(a) = cl.B_ds.row(m.support[a]);
  }
  m.C_x.resize(cl.part.x_size[i], ns);
  m.C_u.resize(cl.part.u_size[i], ns);
  for (Eigen::Index a = 0; a < ns; ++a) {
    for (Eigen::Index j = 0; j < cl.part.x_size[i]; ++j)
      m.C_x(j, a) = cl.C_cl(cl.part.x_offset[i] + j, m.support[a]);
    for (Eigen::Index j = 0; j < cl.part.u_size[i]; ++j)
      m.C_u(j, a) = cl.C_cl(cl.n_x + cl.part.u_offset[i] + j, m.support[a]);
  }
  return m;
}

std::pair<Vec, Vec> theta_signals(const ClosedLoop& cl, int i,
                                  const std::vector<std::pair<Vec, Vec>>& reported_ics, int t) {
  const auto& nbrs = cl.part.neighbors.at(i);
  if (reported_ics.size() != nbrs.size())
    throw std::invalid_argument("theta_signals: one IC report per neighbor required");
  const Mat IQ = cl.ic_response_map(t);
  const Mat Zt = cl.Z(i).transpose();
  Vec theta = Vec::Zero(Zt.rows());
  for (std::size_t a = 0; a < nbrs.size(); ++a) {
    const int j = nbrs[a];
    const auto& [xc, wc] = reported_ics[a];
    if (xc.size() != cl.part.x_size[j] || wc.size() != cl.w_area_size[j])
      throw std::invalid_argument("theta_signals: reported IC dimension mismatch");
    Vec ic(xc.size() + wc.size());
    ic << xc, wc;
    theta += Zt * IQ * cl.Z_c(j) * ic;
  }
  return {theta.head(cl.part.x_size[i]), theta.tail(cl.part.u_size[i])};
}

}  // namespace dmpc
