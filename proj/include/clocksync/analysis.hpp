#pragma once

// Centralized reference computations: the joint weighted-least-squares
// estimate of all betas (what converged message passing must reproduce) and
// the Cramer-Rao bound on per-node (theta, alpha).

#include "clocksync/clock_sim.hpp"
#include "clocksync/error.hpp"
#include "clocksync/linalg.hpp"
#include "clocksync/observations.hpp"
#include "clocksync/topology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace clocksync {

// [beta_2; ...; beta_M], the reference excluded.
struct StackedEstimate {
  Eigen::VectorXd betas;

  std::size_t num_nodes() const { return static_cast<std::size_t>(betas.size() / 2) + 1; }
  BetaVector beta(std::size_t node) const {
    if (node == kReferenceNode) throw DomainError("reference node is not estimated");
    return {betas.segment<2>(2 * static_cast<Eigen::Index>(node - 1))};
  }
};

namespace detail {

inline Eigen::Index beta_col(std::size_t node) { return 2 * static_cast<Eigen::Index>(node - 1); }

// Solves the SPD system F x = rhs after symmetric diagonal scaling; F mixes
// skew-scale (~t^2) and offset-scale (~1) entries.
inline Eigen::MatrixXd solve_spd_scaled(const Eigen::MatrixXd& f, const Eigen::MatrixXd& rhs, const char* what) {
  const Eigen::VectorXd d = f.diagonal();
  if ((d.array() <= 0.0).any()) throw IdentifiabilityError(std::string(what) + ": unobserved parameter");
  const Eigen::VectorXd s = d.array().rsqrt();
  const Eigen::MatrixXd scaled = s.asDiagonal() * f * s.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14)
    throw IdentifiabilityError(std::string(what) + ": normal matrix is singular");
  return s.asDiagonal() * ldlt.solve(s.asDiagonal() * rhs);
}

}  // namespace detail

// Minimizes sum over edges of |a_ji b_j + a_ij b_i|^2 / sigma2 with b_1 fixed,
// through the normal equations.
inline StackedEstimate centralized_wls(std::span<const ObservationPair> observations, std::size_t num_nodes,
                                       const BetaVector& beta1 = BetaVector::reference()) {
  if (num_nodes < 2) throw DomainError("need at least one non-reference node");
  const Eigen::Index dim = 2 * static_cast<Eigen::Index>(num_nodes - 1);
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  // Accumulate in a canonical edge order so the floating-point sums, and hence
  // the solution, do not depend on how the caller ordered the edges.
  std::vector<const ObservationPair*> order;
  order.reserve(observations.size());
  for (const ObservationPair& obs : observations) order.push_back(&obs);
  std::stable_sort(order.begin(), order.end(), [](const ObservationPair* a, const ObservationPair* b) {
    return std::minmax(a->initiator, a->responder) < std::minmax(b->initiator, b->responder);
  });
  for (const ObservationPair* edge : order) {
    const ObservationPair& obs = *edge;
    const std::array<std::size_t, 2> nodes{obs.initiator, obs.responder};
    const double inv = 1.0 / obs.sigma2;
    for (std::size_t u : nodes) {
      if (u == kReferenceNode) continue;
      const MatN2& au = obs.matrix_of(u);
      for (std::size_t v : nodes) {
        const MatN2& av = obs.matrix_of(v);
        if (v == kReferenceNode)
          rhs.segment<2>(detail::beta_col(u)) -= inv * (au.transpose() * av) * beta1.value;
        else
          f.block<2, 2>(detail::beta_col(u), detail::beta_col(v)) += inv * (au.transpose() * av);
      }
    }
  }
  return {detail::solve_spd_scaled(f, rhs, "centralized_wls")};
}

// d zeta / d beta for one node, rows (theta, alpha), columns (beta(1), beta(2)).
inline Mat2 zeta_jacobian_block(const ClockParams& c) {
  Mat2 j;
  j << -c.alpha * c.theta, c.alpha, -c.alpha * c.alpha, 0.0;
  return j;
}

// Inverse map beta -> (theta, alpha).
inline Vec2 zeta_of_beta(const Vec2& beta) { return {beta(1) / beta(0), 1.0 / beta(0)}; }

// Bound over zeta = [theta_2, alpha_2, ..., theta_M, alpha_M].
struct CrbMatrix {
  Eigen::MatrixXd crb_zeta;
  std::size_t num_nodes = 0;
};

// Fisher information of the unsummed two-way model with one fixed delay per
// edge as a nuisance parameter, mapped to (theta, alpha) per node.
inline CrbMatrix compute_crb(std::span<const TimestampSet> timestamps, const TrueNetworkState& truth) {
  const std::size_t m = truth.clocks.size();
  if (m < 2) throw DomainError("need at least one non-reference node");
  const Eigen::Index nb = 2 * static_cast<Eigen::Index>(m - 1);
  const Eigen::Index dim = nb + static_cast<Eigen::Index>(timestamps.size());
  Eigen::MatrixXd fim = Eigen::MatrixXd::Zero(dim, dim);

  struct Entry {
    Eigen::Index col;
    double value;
  };
  std::vector<Entry> row;
  auto add_beta = [&](std::size_t node, double reading, double sign) {
    if (node == kReferenceNode) return;  // known; moves to the left-hand side
    row.push_back({detail::beta_col(node), sign * reading});
    row.push_back({detail::beta_col(node) + 1, -sign});
  };
  auto accumulate = [&](double variance) {
    for (const Entry& a : row)
      for (const Entry& b : row) fim(a.col, b.col) += a.value * b.value / variance;
  };

  for (std::size_t e = 0; e < timestamps.size(); ++e) {
    const TimestampSet& ts = timestamps[e];
    if (ts.rounds.size() < 2) throw ConfigError("CRB needs at least 2 rounds per edge");
    const std::size_t i = ts.initiator;
    const std::size_t j = ts.responder;
    const Eigen::Index d_col = nb + static_cast<Eigen::Index>(e);
    for (const RoundStamps& r : ts.rounds) {
      row.clear();
      add_beta(j, r.c_j_t2, 1.0);
      add_beta(i, r.c_i_t1, -1.0);
      row.push_back({d_col, -1.0});
      accumulate(truth.noise_vars.at(j));

      row.clear();
      add_beta(j, r.c_j_t3, 1.0);
      add_beta(i, r.c_i_t4, -1.0);
      row.push_back({d_col, 1.0});
      accumulate(truth.noise_vars.at(i));
    }
  }

  const Eigen::MatrixXd crb_xi = detail::solve_spd_scaled(fim, Eigen::MatrixXd::Identity(dim, dim), "compute_crb");
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(nb, nb);
  for (std::size_t node = 1; node < m; ++node)
    sigma.block<2, 2>(detail::beta_col(node), detail::beta_col(node)) = zeta_jacobian_block(truth.clocks[node]);
  Eigen::MatrixXd crb = sigma * crb_xi.topLeftCorner(nb, nb) * sigma.transpose();
  crb = 0.5 * (crb + crb.transpose()).eval();
  return {crb, m};
}

struct NodeCrb {
  double theta = 0.0;
  double alpha = 0.0;
};

inline NodeCrb crb_per_node(const CrbMatrix& crb, NodeId node) {
  if (node.is_reference()) throw DomainError("the reference node has no bound");
  if (node.value() < 1 || node.index() >= crb.num_nodes) throw DomainError("node id out of range");
  const Eigen::Index k = detail::beta_col(node.index());
  return {crb.crb_zeta(k, k), crb.crb_zeta(k + 1, k + 1)};
}

}  // namespace clocksync
