#pragma once

// Independent reference computations used only by the tests. Each one takes a
// different route from the library code it checks.

#include "clocksync/clocksync.hpp"

#include <Eigen/Dense>

#include <deque>
#include <vector>

namespace oracle {

using clocksync::Mat2;
using clocksync::MatN2;
using clocksync::Vec2;

// Weighted least squares over the stacked system, solved by QR on the
// whitened design matrix rather than by normal equations.
inline Eigen::VectorXd stacked_wls(const std::vector<clocksync::ObservationPair>& obs, std::size_t num_nodes,
                                   const Vec2& beta1) {
  Eigen::Index rows = 0;
  for (const auto& o : obs) rows += o.a_ji.rows();
  const Eigen::Index cols = 2 * static_cast<Eigen::Index>(num_nodes - 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows);
  Eigen::Index r0 = 0;
  for (const auto& o : obs) {
    const double w = 1.0 / std::sqrt(o.sigma2);
    const Eigen::Index n = o.a_ji.rows();
    auto place = [&](std::size_t node, const MatN2& a) {
      if (node == 0)
        y.segment(r0, n) -= w * (a * beta1);
      else
        h.block(r0, 2 * static_cast<Eigen::Index>(node - 1), n, 2) += w * a;
    };
    place(o.responder, o.a_ji);
    place(o.initiator, o.a_ij);
    r0 += n;
  }
  return h.colPivHouseholderQr().solve(y);
}

// Plain breadth-first hop counts from node 0 on an adjacency list.
inline std::vector<int> bfs_depth(std::size_t m, const std::vector<clocksync::Edge>& edges) {
  std::vector<std::vector<std::size_t>> adj(m);
  for (const auto& e : edges) {
    adj[e.first].push_back(e.second);
    adj[e.second].push_back(e.first);
  }
  std::vector<int> d(m, -1);
  std::deque<std::size_t> q{0};
  d[0] = 0;
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    for (auto v : adj[u])
      if (d[v] < 0) {
        d[v] = d[u] + 1;
        q.push_back(v);
      }
  }
  return d;
}

// zeta(beta) = (theta, alpha) = (beta2 / beta1, 1 / beta1); central differences
// of its derivative with respect to beta.
inline Mat2 zeta_jacobian_fd(const Vec2& beta, double rel_step = 1e-6) {
  auto zeta = [](const Vec2& b) { return Vec2(b(1) / b(0), 1.0 / b(0)); };
  Mat2 j;
  for (int k = 0; k < 2; ++k) {
    const double step = rel_step * std::max(1.0, std::abs(beta(k)));
    Vec2 up = beta, dn = beta;
    up(k) += step;
    dn(k) -= step;
    j.col(k) = (zeta(up) - zeta(dn)) / (2 * step);
  }
  return j;
}

}  // namespace oracle
