#pragma once

// Tick-driven simulation of message exchange over lossy links.
//
// At tick l every node that fires computes its outgoing messages from the
// mailbox contents it holds at l (all computed at ticks <= l-1). Successful
// transmissions land in the recipient's mailbox and become visible at l+1.
// Each node then records its belief for tick l+1.

#include "clocksync/bp.hpp"
#include "clocksync/error.hpp"
#include "clocksync/observations.hpp"
#include "clocksync/rng.hpp"
#include "clocksync/topology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <vector>

namespace clocksync {

enum class ScheduleMode { synchronous, asynchronous };

// What an asynchronous node does with a transmission that was lost.
enum class RetransmitPolicy {
  fresh_on_active,   // nothing; the next active tick sends a freshly computed message
  retry_while_idle,  // on inactive ticks, keep retrying the last undelivered message
};

// The tick sets L_j on which each node recomputes and sends.
class ActivationSchedule {
 public:
  static ActivationSchedule all_ticks() { return {}; }

  // Node j fires at ticks t with t % periods[j] == phases[j] % periods[j].
  static ActivationSchedule periodic(std::vector<int> periods, std::vector<int> phases) {
    if (periods.size() != phases.size()) throw ConfigError("periods and phases differ in length");
    for (int p : periods)
      if (p < 1) throw ConfigError("activation period must be >= 1");
    ActivationSchedule a;
    a.kind_ = Kind::periodic;
    a.periods_ = std::move(periods);
    a.phases_ = std::move(phases);
    return a;
  }

  static ActivationSchedule explicit_sets(std::vector<std::set<int>> sets) {
    for (const auto& s : sets)
      if (s.empty()) throw ConfigError("activation sets must be nonempty");
    ActivationSchedule a;
    a.kind_ = Kind::explicit_sets;
    a.sets_ = std::move(sets);
    return a;
  }

  bool active(std::size_t node, int tick) const {
    switch (kind_) {
      case Kind::all:
        return true;
      case Kind::periodic: {
        const int p = periods_.at(node);
        return tick % p == ((phases_.at(node) % p) + p) % p;
      }
      case Kind::explicit_sets:
        return sets_.at(node).count(tick) > 0;
    }
    return true;
  }

  bool is_all_ticks() const { return kind_ == Kind::all; }

 private:
  enum class Kind { all, periodic, explicit_sets };
  Kind kind_ = Kind::all;
  std::vector<int> periods_;
  std::vector<int> phases_;
  std::vector<std::set<int>> sets_;
};

struct ScheduleConfig {
  ScheduleMode mode = ScheduleMode::asynchronous;
  double p_success = 1.0;
  std::vector<double> edge_p_success;  // optional per-edge override, aligned with topology edges
  ActivationSchedule activation;       // asynchronous mode only
  int max_ticks = 100;
  RetransmitPolicy retransmit = RetransmitPolicy::fresh_on_active;
  // run() stops once every node's mean has moved by at most conv_tol for this
  // many consecutive ticks. 0 disables early stopping.
  int stop_window = 1;

  double success_probability(std::size_t edge) const {
    return edge_p_success.empty() ? p_success : edge_p_success.at(edge);
  }

  void validate(std::size_t num_edges) const {
    auto check = [](double p) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("success probability must lie in [0, 1]");
    };
    check(p_success);
    if (!edge_p_success.empty() && edge_p_success.size() != num_edges)
      throw ConfigError("edge_p_success must have one entry per edge");
    for (double p : edge_p_success) check(p);
    if (max_ticks < 0) throw ConfigError("max_ticks must be >= 0");
    if (stop_window < 0) throw ConfigError("stop_window must be >= 0");
  }
};

struct MailboxSlot {
  InfoMessage message;
  int computed_tick = 0;
  int round = 0;  // synchronous mode: round the message belongs to
};

// Directed link from -> to over topology edge `edge`.
struct Link {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t edge = 0;
  LinkGram gram;
};

inline std::vector<PriorInfo> default_priors(std::size_t num_nodes) {
  std::vector<PriorInfo> priors(num_nodes, PriorInfo::non_informative());
  if (num_nodes > 0) priors[kReferenceNode] = PriorInfo::delta(BetaVector::reference());
  return priors;
}

class SimState {
 public:
  SimState(std::shared_ptr<const Topology> topology, std::vector<ObservationPair> observations,
           std::vector<PriorInfo> priors)
      : topology_(std::move(topology)), observations_(std::move(observations)), priors_(std::move(priors)) {
    const Topology& t = *topology_;
    if (observations_.size() != t.edges().size()) throw ConfigError("need one observation per edge");
    if (priors_.size() != t.size()) throw ConfigError("need one prior per node");
    incoming_.assign(t.size(), {});
    outgoing_.assign(t.size(), {});
    for (std::size_t e = 0; e < t.edges().size(); ++e) {
      const Edge& edge = t.edges()[e];
      const ObservationPair& obs = observations_[e];
      if (std::min(obs.initiator, obs.responder) != edge.first || std::max(obs.initiator, obs.responder) != edge.second)
        throw ConfigError("observation endpoints do not match edge order");
      for (auto [from, to] : {std::pair{edge.first, edge.second}, std::pair{edge.second, edge.first}}) {
        const std::size_t id = links_.size();
        links_.push_back({from, to, e, make_gram(oriented(obs, from))});
        outgoing_[from].push_back(id);
        incoming_[to].push_back(id);
      }
    }
    mailbox_.assign(links_.size(), MailboxSlot{});
    round_.assign(t.size(), 0);
    outbox_.assign(links_.size(), {});
    held_.assign(links_.size(), std::nullopt);
    pending_.assign(links_.size(), std::nullopt);
    initial_beliefs_ = current_beliefs();
  }

  static SimState with_default_priors(const Topology& t, std::vector<ObservationPair> observations) {
    return SimState(std::make_shared<const Topology>(t), std::move(observations), default_priors(t.size()));
  }

  const Topology& topology() const { return *topology_; }
  const std::vector<ObservationPair>& observations() const { return observations_; }
  const std::vector<PriorInfo>& priors() const { return priors_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<std::size_t>& incoming_links(std::size_t node) const { return incoming_.at(node); }
  const std::vector<std::size_t>& outgoing_links(std::size_t node) const { return outgoing_.at(node); }
  const MailboxSlot& mailbox(std::size_t link) const { return mailbox_.at(link); }
  std::size_t link_id(std::size_t from, std::size_t to) const {
    for (std::size_t id : outgoing_.at(from))
      if (links_[id].to == to) return id;
    throw DomainError("no link between the given nodes");
  }

  int tick() const { return tick_; }
  std::size_t num_nodes() const { return topology_->size(); }

  // Belief of `node` at tick l (1 <= l <= tick()); tick 0 is the cold state.
  const Belief& belief(std::size_t node, int l) const {
    if (l == 0) return initial_beliefs_.at(node);
    return history_.at(static_cast<std::size_t>(l - 1)).at(node);
  }
  const std::vector<std::vector<Belief>>& belief_history() const { return history_; }
  int sync_round(std::size_t node) const { return round_.at(node); }

  // The message `link.from` would send on `link` given its current mailbox.
  InfoMessage compose(std::size_t link_id) const {
    const Link& link = links_[link_id];
    const PriorInfo& prior = priors_[link.from];
    if (prior.is_delta) return reference_outgoing_from_gram(link.gram, prior.delta_value);
    Mat2 x = prior.w_p;
    Vec2 b = prior.h_p;
    Mat2 own = Mat2::Zero();  // the recipient's slot
    for (std::size_t in : incoming_[link.from]) {
      if (links_[in].from == link.to) {
        own = mailbox_[in].message.w;
        continue;
      }
      x += mailbox_[in].message.w;
      b += mailbox_[in].message.h;
    }
    if (silent_until_informed_ && !informed(x + own)) return InfoMessage{};
    return outgoing_from_gram(link.gram, x, b);
  }

  // A node whose own belief does not yet pin down both coordinates sends the
  // zero message instead of the rank-deficient limit of the update. This keeps
  // uninformed nodes from seeding the network with skew-only information.
  // The test is on the full aggregate, not the one excluding the recipient:
  // once informed, a node sends the raw update on every link, so the fixed
  // point is untouched (a leaf's message back to its only neighbor is built
  // from zero incoming information and would otherwise never be sent).
  // Disable to run the raw update everywhere.
  void set_silent_until_informed(bool on) { silent_until_informed_ = on; }
  bool silent_until_informed() const { return silent_until_informed_; }

  std::vector<Belief> current_beliefs() const {
    std::vector<Belief> out(num_nodes());
    for (std::size_t i = 0; i < num_nodes(); ++i) {
      const PriorInfo& prior = priors_[i];
      if (prior.is_delta) {
        out[i] = Belief{Mat2::Zero(), prior.delta_value.value, true};
        continue;
      }
      Mat2 w = prior.w_p;
      Vec2 h = prior.h_p;
      for (std::size_t in : incoming_[i]) {
        w += mailbox_[in].message.w;
        h += mailbox_[in].message.h;
      }
      out[i] = belief_from_info(w, h);
    }
    return out;
  }

 private:
  friend struct SchedulerAccess;

  static bool informed(const Mat2& x) {
    const Vec2 ev = sym_eigenvalues(x);
    return ev(1) > 0.0 && ev(0) > kIdentifiabilityRatio * ev(1);
  }

  struct Outgoing {
    InfoMessage message;
    int computed_tick = 0;
    int round = 0;
  };

  std::shared_ptr<const Topology> topology_;
  std::vector<ObservationPair> observations_;
  std::vector<PriorInfo> priors_;
  std::vector<Link> links_;
  std::vector<std::vector<std::size_t>> incoming_;
  std::vector<std::vector<std::size_t>> outgoing_;
  std::vector<MailboxSlot> mailbox_;
  int tick_ = 0;
  bool silent_until_informed_ = true;
  std::vector<Belief> initial_beliefs_;
  std::vector<std::vector<Belief>> history_;

  // synchronous mode
  std::vector<int> round_;
  std::vector<std::deque<Outgoing>> outbox_;
  std::vector<std::optional<Outgoing>> held_;  // delivered one round early, applied when the receiver advances

  // asynchronous retry_while_idle
  std::vector<std::optional<Outgoing>> pending_;
};

using DeliveryHook = std::function<void(const WireMessage&)>;

struct SchedulerAccess {
  using Outgoing = SimState::Outgoing;

  static bool transmit(SimState& s, const ScheduleConfig& cfg, std::size_t link, Rng& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return u < cfg.success_probability(s.links_[link].edge);
  }

  static void notify(const SimState& s, std::size_t link, const Outgoing& out, const DeliveryHook& hook) {
    if (!hook) return;
    const Link& l = s.links_[link];
    hook(WireMessage{NodeId::from_index(l.from), NodeId::from_index(l.to), out.message, out.computed_tick});
  }

  static void step_async(SimState& s, const ScheduleConfig& cfg, Rng& rng, const DeliveryHook& hook) {
    const int l = s.tick_;
    std::vector<std::pair<std::size_t, Outgoing>> delivered;
    for (std::size_t j = 0; j < s.num_nodes(); ++j) {
      const bool active = cfg.activation.active(j, l);
      for (std::size_t link : s.outgoing_[j]) {
        if (active) {
          Outgoing out{s.compose(link), l, 0};
          if (transmit(s, cfg, link, rng)) {
            delivered.emplace_back(link, std::move(out));
            s.pending_[link].reset();
          } else {
            s.pending_[link] = std::move(out);
          }
        } else if (cfg.retransmit == RetransmitPolicy::retry_while_idle && s.pending_[link]) {
          if (transmit(s, cfg, link, rng)) {
            delivered.emplace_back(link, std::move(*s.pending_[link]));
            s.pending_[link].reset();
          }
        }
      }
    }
    for (auto& [link, out] : delivered) {
      notify(s, link, out, hook);
      s.mailbox_[link] = MailboxSlot{out.message, out.computed_tick, 0};
    }
  }

  static void advance(SimState& s) {
    s.tick_ += 1;
    s.history_.push_back(s.current_beliefs());
  }

  static bool ready(const SimState& s, std::size_t node) {
    if (s.round_[node] == 0) return true;
    for (std::size_t in : s.incoming_[node])
      if (s.mailbox_[in].round < s.round_[node]) return false;
    return true;
  }

  // Barrier rounds: node j computes round r+1 only after holding round-r
  // messages from every neighbor; undelivered messages are retried every tick.
  static void step_sync(SimState& s, const ScheduleConfig& cfg, Rng& rng, const DeliveryHook& hook) {
    const int l = s.tick_;
    std::vector<std::size_t> firing;
    for (std::size_t j = 0; j < s.num_nodes(); ++j)
      if (ready(s, j)) firing.push_back(j);
    // Compose against the mailbox as it stood at the start of the tick.
    std::vector<std::pair<std::size_t, Outgoing>> composed;
    for (std::size_t j : firing)
      for (std::size_t link : s.outgoing_[j]) composed.emplace_back(link, Outgoing{s.compose(link), l, s.round_[j] + 1});
    for (std::size_t j : firing) {
      ++s.round_[j];
      for (std::size_t in : s.incoming_[j]) {
        if (s.held_[in]) {
          s.mailbox_[in] = MailboxSlot{s.held_[in]->message, s.held_[in]->computed_tick, s.held_[in]->round};
          s.held_[in].reset();
        }
      }
    }
    for (auto& [link, out] : composed) s.outbox_[link].push_back(std::move(out));

    std::vector<std::pair<std::size_t, Outgoing>> delivered;
    for (std::size_t link = 0; link < s.links_.size(); ++link) {
      auto& queue = s.outbox_[link];
      if (queue.empty()) continue;
      if (transmit(s, cfg, link, rng)) {
        delivered.emplace_back(link, std::move(queue.front()));
        queue.pop_front();
      }
    }
    for (auto& [link, out] : delivered) {
      notify(s, link, out, hook);
      const std::size_t receiver = s.links_[link].to;
      if (out.round <= s.round_[receiver])
        s.mailbox_[link] = MailboxSlot{out.message, out.computed_tick, out.round};
      else
        s.held_[link] = std::move(out);
    }
  }
};

inline void step(SimState& s, const ScheduleConfig& cfg, Rng& rng, const DeliveryHook& hook = {}) {
  if (s.tick() >= cfg.max_ticks) throw ConfigError("tick limit reached");
  if (cfg.mode == ScheduleMode::asynchronous)
    SchedulerAccess::step_async(s, cfg, rng, hook);
  else
    SchedulerAccess::step_sync(s, cfg, rng, hook);
  SchedulerAccess::advance(s);
}

// Infinity-norm change of a node's mean between ticks l-1 and l; +inf unless
// the node is identifiable at both.
inline double mean_change(const SimState& s, std::size_t node, int l) {
  const Belief& prev = s.belief(node, l - 1);
  const Belief& cur = s.belief(node, l);
  if (!prev.identifiable || !cur.identifiable) return std::numeric_limits<double>::infinity();
  return (cur.mu - prev.mu).cwiseAbs().maxCoeff();
}

// First tick from which the node's mean change stays within tol through the
// end of the recorded trace; nullopt if it is still moving at the last tick.
inline std::optional<int> settling_tick(const SimState& s, std::size_t node, double tol) {
  std::optional<int> settled;
  for (int l = s.tick(); l >= 1; --l) {
    if (!(mean_change(s, node, l) <= tol)) break;
    settled = l;
  }
  return settled;
}

struct RunResult {
  int ticks = 0;
  bool stopped_early = false;
  std::vector<std::optional<int>> converged_tick;  // per node
};

inline RunResult run(SimState& s, const ScheduleConfig& cfg, double conv_tol, Rng& rng,
                     const DeliveryHook& hook = {}) {
  if (!(conv_tol > 0.0)) throw ConfigError("conv_tol must be > 0");
  cfg.validate(s.topology().edges().size());
  RunResult result;
  int quiet = 0;
  while (s.tick() < cfg.max_ticks) {
    step(s, cfg, rng, hook);
    bool all_quiet = true;
    for (std::size_t i = 0; i < s.num_nodes() && all_quiet; ++i)
      all_quiet = mean_change(s, i, s.tick()) <= conv_tol;
    quiet = all_quiet ? quiet + 1 : 0;
    if (cfg.stop_window > 0 && quiet >= cfg.stop_window) {
      result.stopped_early = s.tick() < cfg.max_ticks;
      break;
    }
  }
  result.ticks = s.tick();
  result.converged_tick.resize(s.num_nodes());
  for (std::size_t i = 0; i < s.num_nodes(); ++i) result.converged_tick[i] = settling_tick(s, i, conv_tol);
  return result;
}

}  // namespace clocksync
