#pragma once

// Gaussian belief propagation for pairwise clock relations, in information
// form. A message j -> i is (W, h) with W = Gamma^{-1} and h = W * gamma; the
// non-informative message is (0, 0).

#include "clocksync/error.hpp"
#include "clocksync/linalg.hpp"
#include "clocksync/observations.hpp"
#include "clocksync/topology.hpp"

#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace clocksync {

struct InfoMessage {
  Mat2 w = Mat2::Zero();
  Vec2 h = Vec2::Zero();

  static InfoMessage non_informative() { return {}; }
  bool is_non_informative() const { return w.isZero(0.0) && h.isZero(0.0); }
  friend bool operator==(const InfoMessage& a, const InfoMessage& b) { return a.w == b.w && a.h == b.h; }
};

struct PriorInfo {
  Mat2 w_p = Mat2::Zero();
  Vec2 h_p = Vec2::Zero();
  bool is_delta = false;
  BetaVector delta_value;  // meaningful only when is_delta

  static PriorInfo non_informative() { return {}; }
  static PriorInfo delta(const BetaVector& beta) { return {Mat2::Zero(), Vec2::Zero(), true, beta}; }
  static PriorInfo gaussian(const Vec2& mean, const Mat2& cov) {
    const Mat2 w = symmetrize(cov.inverse());
    return {w, w * mean, false, {}};
  }
};

// p and mu are only meaningful when identifiable. A delta-prior node reports
// its pinned value with p = 0.
struct Belief {
  Mat2 p = Mat2::Zero();
  Vec2 mu = Vec2::Zero();
  bool identifiable = false;
};

struct AggregatedInfo {
  Mat2 x = Mat2::Zero();
  Vec2 b = Vec2::Zero();
};

inline AggregatedInfo aggregate_info(const PriorInfo& prior, std::span<const InfoMessage> incoming) {
  if (prior.is_delta) throw DomainError("delta prior carries unbounded information; use reference_outgoing");
  AggregatedInfo out{prior.w_p, prior.h_p};
  for (const InfoMessage& m : incoming) {
    out.x += m.w;
    out.b += m.h;
  }
  return out;
}

// Per-direction constants of an edge, reused for every message on it since
// the observations never change during a run. QR of [A_s A_r] = Q [R c; 0 E]
// splits A_r into the part inside the sender's column space (c) and the
// residual (E).
struct LinkGram {
  Mat2 g_rr;  // a_receiver^T a_receiver
  Mat2 g_ss;  // a_sender^T a_sender
  Mat2 g_rs;  // a_receiver^T a_sender
  Mat2 r_s = Mat2::Zero();   // upper triangular R
  Mat2 c_r = Mat2::Zero();
  Mat2 perp = Mat2::Zero();  // E^T E = a_r^T (I - P_col(a_s)) a_r
  bool full_rank = false;
  double sigma2 = 0.0;
};

inline LinkGram make_gram(const OrientedObservation& obs) {
  LinkGram g{obs.a_receiver.transpose() * obs.a_receiver, obs.a_sender.transpose() * obs.a_sender,
             obs.a_receiver.transpose() * obs.a_sender};
  g.sigma2 = obs.sigma2;
  const Eigen::Index n = obs.a_sender.rows();
  Eigen::MatrixXd stacked(n, 4);
  stacked << obs.a_sender, obs.a_receiver;
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
  Eigen::Matrix4d r = Eigen::Matrix4d::Zero();
  const Eigen::Index k = std::min<Eigen::Index>(n, 4);
  r.topRows(k) = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  g.r_s = r.topLeftCorner<2, 2>();
  g.c_r = r.topRightCorner<2, 2>();
  const Mat2 e = r.bottomRightCorner<2, 2>();
  g.perp = symmetrize(e.transpose() * e);
  // rank test relative to the column scale; a rank-1 sender block falls back to the Gram form
  const double scale = std::max(g.r_s.cwiseAbs().maxCoeff(), 1e-300);
  g.full_rank = std::abs(g.r_s(0, 0)) > 1e-12 * scale && std::abs(g.r_s(1, 1)) > 1e-12 * scale;
  return g;
}

// With K = sigma2 X + A_s^T A_s:
//   W = (1/sigma2) (A_r^T A_r - A_r^T A_s K^{-1} A_s^T A_r)
//   h = -A_r^T A_s K^{-1} b
// Needs no inverse of X, so X = 0 (cold start) is handled exactly.
// Evaluated through the QR factors: K = R^T (I + G) R with G = sigma2 R^-T X R^-1, so
//   W = (E^T E + c^T (I + G)^{-1} G c) / sigma2,   h = -c^T (I + G)^{-1} R^-T b.
// Both terms of W are PSD. The Gram form subtracts two nearly equal matrices
// whenever X is small next to A_s^T A_s and loses about five digits on
// realistic timestamps.
inline InfoMessage outgoing_from_gram(const LinkGram& g, const Mat2& x, const Vec2& b) {
  InfoMessage m;
  if (!g.full_rank) {
    const Mat2 k = g.sigma2 * x + g.g_ss;
    Eigen::LLT<Mat2> llt(symmetrize(k));
    if (llt.info() != Eigen::Success) throw LinearAlgebraError("sigma2 X + A^T A is not positive definite");
    m.w = symmetrize((g.g_rr - g.g_rs * llt.solve(g.g_rs.transpose())) / g.sigma2);
    m.h = -(g.g_rs * llt.solve(b));
    return m;
  }
  const auto rt = g.r_s.transpose().triangularView<Eigen::Lower>();
  const Mat2 y = rt.solve(x);                                          // R^-T X
  const Mat2 gm = symmetrize(g.sigma2 * rt.solve(Mat2(y.transpose())));  // R^-T X R^-1
  const Eigen::LDLT<Mat2> ipg(Mat2(Mat2::Identity() + gm));
  if (ipg.info() != Eigen::Success) throw LinearAlgebraError("I + G is not positive definite");
  const Mat2 shrink = symmetrize(ipg.solve(gm));
  m.w = symmetrize((g.perp + g.c_r.transpose() * shrink * g.c_r) / g.sigma2);
  m.h = -(g.c_r.transpose() * ipg.solve(Vec2(rt.solve(b))));
  return m;
}

inline InfoMessage compute_outgoing(const OrientedObservation& obs, const Mat2& x, const Vec2& b) {
  return outgoing_from_gram(make_gram(obs), x, b);
}

// Message from a delta-prior sender: the X -> infinity limit of
// compute_outgoing, i.e. W = A_r^T A_r / sigma2, h = -A_r^T A_s beta / sigma2.
inline InfoMessage reference_outgoing_from_gram(const LinkGram& g, const BetaVector& beta1) {
  return {symmetrize(g.g_rr / g.sigma2), -(g.g_rs * beta1.value) / g.sigma2};
}

inline InfoMessage reference_outgoing(const OrientedObservation& obs, const BetaVector& beta1) {
  return reference_outgoing_from_gram(make_gram(obs), beta1);
}

inline constexpr double kIdentifiabilityRatio = 1e-10;

inline Belief belief_from_info(const Mat2& total_w, const Vec2& total_h) {
  const Vec2 ev = sym_eigenvalues(total_w);
  if (!(ev(1) > 0.0) || !(ev(0) > kIdentifiabilityRatio * ev(1))) return {};
  Eigen::LLT<Mat2> llt(symmetrize(total_w));
  if (llt.info() != Eigen::Success) return {};
  Belief out;
  out.identifiable = true;
  out.p = symmetrize(llt.solve(Mat2::Identity()));
  out.mu = llt.solve(total_h);
  return out;
}

inline Belief compute_belief(const PriorInfo& prior, std::span<const InfoMessage> incoming) {
  if (prior.is_delta) return {Mat2::Zero(), prior.delta_value.value, true};
  const AggregatedInfo total = aggregate_info(prior, incoming);
  return belief_from_info(total.x, total.b);
}

inline constexpr double kMinBetaLead = 1e-12;

inline ClockParams extract_clock_estimate(const Belief& b) {
  if (!b.identifiable) throw DegenerateEstimateError("belief is not identifiable");
  if (!(std::abs(b.mu(0)) >= kMinBetaLead)) throw DegenerateEstimateError("first belief component is (near) zero");
  return {1.0 / b.mu(0), b.mu(1) / b.mu(0)};
}

// ---------------------------------------------------------------------------
// Wire format of one message, one line:
//   <sender> <receiver> <w11> <w12> <w22> <h1> <h2> <tick>
// Node ids are 1-based; tick is the tick the message was computed at.
// ---------------------------------------------------------------------------
struct WireMessage {
  NodeId sender{1};
  NodeId receiver{1};
  InfoMessage message;
  int tick = 0;
};

inline std::string format_wire(const WireMessage& m) {
  std::string s = std::to_string(m.sender.value()) + ' ' + std::to_string(m.receiver.value());
  for (double v : {m.message.w(0, 0), m.message.w(0, 1), m.message.w(1, 1), m.message.h(0), m.message.h(1)})
    s += ' ' + format_real(v);
  s += ' ' + std::to_string(m.tick);
  return s;
}

inline WireMessage parse_wire(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(t);
  if (tok.size() != 8) throw ParseError("message", "expected 8 fields, got " + std::to_string(tok.size()));
  const auto sender = parse_integer(tok[0], "sender");
  const auto receiver = parse_integer(tok[1], "receiver");
  if (sender < 1) throw ParseError("sender", "must be >= 1");
  if (receiver < 1) throw ParseError("receiver", "must be >= 1");
  WireMessage m;
  m.sender = NodeId(static_cast<int>(sender));
  m.receiver = NodeId(static_cast<int>(receiver));
  const double w11 = parse_real(tok[2], "w11");
  const double w12 = parse_real(tok[3], "w12");
  const double w22 = parse_real(tok[4], "w22");
  m.message.w << w11, w12, w12, w22;
  m.message.h << parse_real(tok[5], "h1"), parse_real(tok[6], "h2");
  m.tick = static_cast<int>(parse_integer(tok[7], "tick"));
  return m;
}

}  // namespace clocksync
