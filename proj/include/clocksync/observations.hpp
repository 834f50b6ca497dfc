#pragma once

#include "clocksync/clock_sim.hpp"
#include "clocksync/error.hpp"
#include "clocksync/linalg.hpp"

#include <cstddef>
#include <vector>

namespace clocksync {

// [1/alpha, theta/alpha]; the parameterization in which the pairwise
// timestamp relation is linear.
struct BetaVector {
  Vec2 value = Vec2(1.0, 0.0);

  static BetaVector from_clock(const ClockParams& c) { return {Vec2(1.0 / c.alpha, c.theta / c.alpha)}; }
  static BetaVector reference() { return {Vec2(1.0, 0.0)}; }
};

inline Eigen::RowVector2d responder_row(double c_j_t2, double c_j_t3) { return {c_j_t2 + c_j_t3, -2.0}; }
inline Eigen::RowVector2d initiator_row(double c_i_t1, double c_i_t4) { return {-(c_i_t1 + c_i_t4), 2.0}; }

// The edge's relation a_ji * beta_j + a_ij * beta_i = z with z ~ N(0, sigma2 I).
struct ObservationPair {
  std::size_t initiator = 0;  // i
  std::size_t responder = 0;  // j
  MatN2 a_ji;                 // multiplies beta of the responder
  MatN2 a_ij;                 // multiplies beta of the initiator
  double sigma2 = 0.0;        // sigma_i^2 + sigma_j^2

  int rounds() const { return static_cast<int>(a_ji.rows()); }
  const MatN2& matrix_of(std::size_t node) const {
    if (node == responder) return a_ji;
    if (node == initiator) return a_ij;
    throw DomainError("node is not an endpoint of this edge");
  }
  std::size_t other(std::size_t node) const { return node == initiator ? responder : initiator; }
};

// Sender/receiver view of an edge for message j -> i.
struct OrientedObservation {
  const MatN2& a_sender;    // A_{j,i}
  const MatN2& a_receiver;  // A_{i,j}
  double sigma2;
};

inline OrientedObservation oriented(const ObservationPair& obs, std::size_t sender) {
  const std::size_t receiver = obs.other(sender);
  return {obs.matrix_of(sender), obs.matrix_of(receiver), obs.sigma2};
}

inline bool has_full_column_rank(const MatN2& a, double rel_tol = 1e-12) {
  if (a.rows() < 2) return false;
  Eigen::JacobiSVD<MatN2> svd(a);
  const Vec2 s = svd.singularValues();
  return s(0) > 0.0 && s(1) / s(0) > rel_tol;
}

inline ObservationPair build_observation(const TimestampSet& ts, double sigma2_i, double sigma2_j) {
  if (ts.rounds.size() < 2) throw ConfigError("observation needs at least 2 rounds");
  if (!(sigma2_i > 0.0) || !(sigma2_j > 0.0)) throw ConfigError("noise variances must be > 0");
  const auto n = static_cast<Eigen::Index>(ts.rounds.size());
  ObservationPair obs;
  obs.initiator = ts.initiator;
  obs.responder = ts.responder;
  obs.a_ji.resize(n, 2);
  obs.a_ij.resize(n, 2);
  for (Eigen::Index r = 0; r < n; ++r) {
    const RoundStamps& s = ts.rounds[static_cast<std::size_t>(r)];
    obs.a_ji.row(r) = responder_row(s.c_j_t2, s.c_j_t3);
    obs.a_ij.row(r) = initiator_row(s.c_i_t1, s.c_i_t4);
  }
  obs.sigma2 = sigma2_i + sigma2_j;
  if (!has_full_column_rank(obs.a_ji) || !has_full_column_rank(obs.a_ij))
    throw DegenerateObservationError("observation matrix of edge " + std::to_string(ts.initiator + 1) + "-" +
                                     std::to_string(ts.responder + 1) + " is rank deficient");
  return obs;
}

inline std::vector<ObservationPair> build_observations(const std::vector<TimestampSet>& stamps,
                                                       const std::vector<double>& model_noise_vars) {
  std::vector<ObservationPair> out;
  out.reserve(stamps.size());
  for (const auto& ts : stamps)
    out.push_back(build_observation(ts, model_noise_vars.at(ts.initiator), model_noise_vars.at(ts.responder)));
  return out;
}

// Residual a_ji * beta_j + a_ij * beta_i for given betas.
inline Eigen::VectorXd residual(const ObservationPair& obs, const BetaVector& beta_i, const BetaVector& beta_j) {
  return obs.a_ji * beta_j.value + obs.a_ij * beta_i.value;
}

}  // namespace clocksync
