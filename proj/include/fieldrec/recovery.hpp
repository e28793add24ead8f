#ifndef FIELDREC_RECOVERY_HPP
#define FIELDREC_RECOVERY_HPP

#include "fieldrec/field_model.hpp"
#include "fieldrec/graph.hpp"

#include <cmath>
#include <cstdint>
#include <string_view>
#include <thread>

namespace fieldrec {

/// Weight and threshold schedule parameters.
///
///   alpha_t = a / (t+1)^tau1,  beta_t = b / (t+1)^tau2,
///   gamma_t = Gamma / (t+1)^tau_gamma,
///
/// with a, b, Gamma > 0, 0 < tau2 < tau1 < 1 and 0 < tau_gamma < tau1 - tau2.
template <typename Scalar>
struct HyperParams {
  Scalar a = Scalar(1);
  Scalar b = Scalar(0.084);
  Scalar tau1 = Scalar(0.26);
  Scalar tau2 = Scalar(0.001);
  Scalar Gamma = Scalar(40);
  Scalar tau_gamma = Scalar(0.25);

  /// a=1, b=0.084, tau1=0.26, tau2=0.001, Gamma=40, tau_gamma=0.25.
  static HyperParams defaults() { return {}; }

  /// Throws ConfigError naming the violated constraint.
  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("hyperparameters: " + what); };
    if (!(a > Scalar(0))) fail("a must be > 0");
    if (!(b > Scalar(0))) fail("b must be > 0");
    if (!(Gamma > Scalar(0))) fail("Gamma must be > 0");
    if (!(Scalar(0) < tau2 && tau2 < tau1 && tau1 < Scalar(1))) fail("require 0 < tau2 < tau1 < 1");
    if (!(Scalar(0) < tau_gamma && tau_gamma < tau1 - tau2)) fail("require 0 < tau_gamma < tau1 - tau2");
  }
};

template <typename Scalar>
Scalar alpha(Index t, const HyperParams<Scalar>& hp) {
  return hp.a / std::pow(Scalar(t + 1), hp.tau1);
}

template <typename Scalar>
Scalar beta(Index t, const HyperParams<Scalar>& hp) {
  return hp.b / std::pow(Scalar(t + 1), hp.tau2);
}

template <typename Scalar>
Scalar gamma_threshold(Index t, const HyperParams<Scalar>& hp) {
  return hp.Gamma / std::pow(Scalar(t + 1), hp.tau_gamma);
}

enum class Algorithm { Resilient, Cirfe };

inline std::string_view to_string(Algorithm a) { return a == Algorithm::Resilient ? "resilient" : "cirfe"; }

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "resilient") return Algorithm::Resilient;
  if (s == "cirfe") return Algorithm::Cirfe;
  throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected resilient or cirfe)");
}

/// Neighbour l's state re-indexed into n's interest coordinates; components
/// n tracks but l does not are zero.
template <typename Scalar>
Vector<Scalar> censor_received(const Vector<Scalar>& x_l, const InterestSet& interest_l, const InterestSet& interest_n) {
  Vector<Scalar> out = Vector<Scalar>::Zero(interest_n.size());
  for (Index i = 0; i < interest_n.size(); ++i)
    if (auto j = interest_l.position(interest_n[i])) out[i] = x_l[*j];
  return out;
}

/// Own state with the components neighbour l does not track zeroed.
template <typename Scalar>
Vector<Scalar> censor_self(const Vector<Scalar>& x_n, const InterestSet& interest_n, const InterestSet& interest_l) {
  Vector<Scalar> out = Vector<Scalar>::Zero(interest_n.size());
  for (Index i = 0; i < interest_n.size(); ++i)
    if (interest_l.contains(interest_n[i])) out[i] = x_n[i];
  return out;
}

/// k = min(1, gamma / |r|), with k = 1 at r = 0.
template <typename Scalar>
Scalar saturation_gain(Scalar residual, Scalar gamma) {
  const Scalar mag = std::abs(residual);
  if (mag == Scalar(0)) return Scalar(1);
  return std::min(Scalar(1), gamma / mag);
}

/// Diagonal gain K_n(t) for the restricted matrix H_n^c.
template <typename Scalar>
Eigen::DiagonalMatrix<Scalar, Eigen::Dynamic> gain_matrix(const SparseRowMatrix<Scalar>& restricted,
                                                          const Vector<Scalar>& x_n, const Vector<Scalar>& y_n,
                                                          Scalar gamma) {
  const Vector<Scalar> r = y_n - restricted * x_n;
  Vector<Scalar> k(r.size());
  for (Index p = 0; p < r.size(); ++p) k[p] = saturation_gain(r[p], gamma);
  return k.asDiagonal();
}

template <typename Scalar>
Eigen::DiagonalMatrix<Scalar, Eigen::Dynamic> gain_matrix(const SparseRowMatrix<Scalar>& restricted,
                                                          const Vector<Scalar>& x_n, const Vector<Scalar>& y_n,
                                                          Index t, const HyperParams<Scalar>& hp) {
  return gain_matrix(restricted, x_n, y_n, gamma_threshold(t, hp));
}

/// All agents' states at one synchronous iteration. states[n] has length
/// |I_n|; component i estimates theta*[I_n(i)].
template <typename Scalar>
struct RoundState {
  Index iteration = 0;
  std::vector<Vector<Scalar>> states;
};

/// Per-agent innovation statistics of one update.
template <typename Scalar>
struct InnovationStats {
  Scalar max_residual = Scalar(0);  // max |y^(p) - h_p^c x_n|
  Scalar max_applied = Scalar(0);   // max |k_p r_p|
  Index saturated = 0;              // rows with k_p < 1

  void merge(const InnovationStats& o) {
    max_residual = std::max(max_residual, o.max_residual);
    max_applied = std::max(max_applied, o.max_applied);
    saturated += o.saturated;
  }
};

/// Precomputed per-agent data for the synchronous update: restricted
/// measurement matrices, local measurement vectors and, per communication
/// link, the index pairs of the components both endpoints track.
template <typename Scalar>
class RecoveryNetwork {
 public:
  struct Link {
    Index neighbor = 0;
    std::vector<std::int32_t> own;    // positions in I_n
    std::vector<std::int32_t> other;  // matching positions in I_l
  };

  /// Throws ConfigError on size mismatches or when a coupled column falls
  /// outside an interest set.
  RecoveryNetwork(const FieldSystem<Scalar>& sys, const CommGraph& graph, const Vector<Scalar>& measurements)
      : field_size_(sys.field_size()) {
    if (graph.vertex_count() != sys.agent_count())
      throw ConfigError("graph has " + std::to_string(graph.vertex_count()) + " vertices but the system has " +
                        std::to_string(sys.agent_count()) + " agents");
    if (measurements.size() != sys.measurement_count())
      throw ConfigError("measurement vector length differs from the measurement count");
    const auto n_agents = static_cast<std::size_t>(sys.agent_count());
    agents_.resize(n_agents);
    for (Index n = 0; n < sys.agent_count(); ++n) {
      auto& ag = agents_[static_cast<std::size_t>(n)];
      ag.interest = sys.interest(n);
      try {
        ag.restricted = restrict_columns(sys.agent(n), ag.interest);
      } catch (const std::invalid_argument& e) {
        throw ConfigError("agent " + std::to_string(n + 1) + ": " + e.what());
      }
      ag.restricted_t = SparseMatrix<Scalar>(ag.restricted.transpose());
      ag.y = measurements.segment(sys.agent(n).row_offset, sys.agent(n).rows());
    }
    for (Index n = 0; n < sys.agent_count(); ++n) {
      auto& ag = agents_[static_cast<std::size_t>(n)];
      for (Index l : graph.neighbors(n)) {
        Link link{l, {}, {}};
        const auto& a = ag.interest.components();
        const auto& b = agents_[static_cast<std::size_t>(l)].interest.components();
        std::size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
          if (a[i] < b[j]) {
            ++i;
          } else if (b[j] < a[i]) {
            ++j;
          } else {
            link.own.push_back(static_cast<std::int32_t>(i++));
            link.other.push_back(static_cast<std::int32_t>(j++));
          }
        }
        ag.links.push_back(std::move(link));
      }
    }
  }

  Index agent_count() const { return static_cast<Index>(agents_.size()); }
  Index field_size() const { return field_size_; }
  const InterestSet& interest(Index n) const { return agent(n).interest; }
  const SparseRowMatrix<Scalar>& restricted(Index n) const { return agent(n).restricted; }
  const Vector<Scalar>& measurements(Index n) const { return agent(n).y; }
  const std::vector<Link>& links(Index n) const { return agent(n).links; }

  /// Every agent at the zero vector, iteration 0.
  RoundState<Scalar> initial_state() const {
    RoundState<Scalar> s;
    for (const auto& ag : agents_) s.states.push_back(Vector<Scalar>::Zero(ag.interest.size()));
    return s;
  }

  /// x_n(t+1) from the iteration-t snapshot:
  ///
  ///   x_n - beta_t sum_l (x^p_{l,n} - x^c_{l,n}) + alpha_t H_n^c^T K_n (y_n - H_n^c x_n)
  ///
  /// The cirfe baseline uses K_n = I. Throws RuntimeFailure when the snapshot
  /// is missing or misshapen for n or one of its neighbours.
  Vector<Scalar> agent_update(Index n, const RoundState<Scalar>& round, const HyperParams<Scalar>& hp,
                              Algorithm algorithm, InnovationStats<Scalar>* stats = nullptr) const {
    check_state(round, n);
    const auto& ag = agent(n);
    const auto& x = round.states[static_cast<std::size_t>(n)];
    const Index t = round.iteration;

    Vector<Scalar> consensus = Vector<Scalar>::Zero(x.size());
    for (const auto& link : ag.links) {
      check_state(round, link.neighbor);
      const auto& xl = round.states[static_cast<std::size_t>(link.neighbor)];
      for (std::size_t k = 0; k < link.own.size(); ++k) consensus[link.own[k]] += x[link.own[k]] - xl[link.other[k]];
    }

    Vector<Scalar> innovation = ag.y - ag.restricted * x;
    InnovationStats<Scalar> local;
    const Scalar gamma = gamma_threshold(t, hp);
    for (Index p = 0; p < innovation.size(); ++p) {
      const Scalar r = innovation[p];
      local.max_residual = std::max(local.max_residual, std::abs(r));
      // k_p r_p with k_p = min(1, gamma/|r_p|) is the clamp of r_p to [-gamma, gamma].
      if (algorithm == Algorithm::Resilient && std::abs(r) > gamma) {
        innovation[p] = std::copysign(gamma, r);
        ++local.saturated;
      }
      local.max_applied = std::max(local.max_applied, std::abs(innovation[p]));
    }
    if (stats) *stats = local;

    Vector<Scalar> next = x - beta(t, hp) * consensus;
    if (innovation.size() > 0) next.noalias() += alpha(t, hp) * (ag.restricted_t * innovation);
    return next;
  }

  /// One synchronous round. Agents read the frozen iteration-t snapshot and
  /// write only their own next state, so the result does not depend on
  /// `threads`. Per-agent statistics are merged in agent order.
  RoundState<Scalar> step(const RoundState<Scalar>& round, const HyperParams<Scalar>& hp, Algorithm algorithm,
                          unsigned threads = 1, InnovationStats<Scalar>* stats = nullptr) const {
    if (static_cast<Index>(round.states.size()) != agent_count())
      throw RuntimeFailure("round " + std::to_string(round.iteration) + ": snapshot holds " +
                           std::to_string(round.states.size()) + " states for " + std::to_string(agent_count()) +
                           " agents");
    RoundState<Scalar> next;
    next.iteration = round.iteration + 1;
    next.states.resize(agents_.size());
    std::vector<InnovationStats<Scalar>> per_agent(agents_.size());
    auto work = [&](std::size_t begin, std::size_t end) {
      for (std::size_t n = begin; n < end; ++n)
        next.states[n] = agent_update(static_cast<Index>(n), round, hp, algorithm, &per_agent[n]);
    };
    const std::size_t n_agents = agents_.size();
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n_agents);
    if (workers <= 1) {
      work(0, n_agents);
    } else {
      std::vector<std::exception_ptr> errors(workers);
      {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (n_agents + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w)
          pool.emplace_back([&, w] {
            try {
              work(w * chunk, std::min(n_agents, (w + 1) * chunk));
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
      }
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    if (stats) {
      *stats = {};
      for (const auto& s : per_agent) stats->merge(s);
    }
    return next;
  }

 private:
  struct AgentData {
    InterestSet interest;
    SparseRowMatrix<Scalar> restricted;
    SparseMatrix<Scalar> restricted_t;
    Vector<Scalar> y;
    std::vector<Link> links;
  };

  const AgentData& agent(Index n) const { return agents_[static_cast<std::size_t>(n)]; }

  void check_state(const RoundState<Scalar>& round, Index n) const {
    if (n >= static_cast<Index>(round.states.size()))
      throw RuntimeFailure("round " + std::to_string(round.iteration) + ": state of agent " + std::to_string(n + 1) +
                           " missing");
    if (round.states[static_cast<std::size_t>(n)].size() != agent(n).interest.size())
      throw RuntimeFailure("round " + std::to_string(round.iteration) + ": state of agent " + std::to_string(n + 1) +
                           " has length " + std::to_string(round.states[static_cast<std::size_t>(n)].size()) +
                           ", interest set has " + std::to_string(agent(n).interest.size()) + " components");
  }

  Index field_size_ = 0;
  std::vector<AgentData> agents_;
};

/// Resilient update of one agent (saturated innovation gains).
template <typename Scalar>
Vector<Scalar> state_update(const RecoveryNetwork<Scalar>& net, Index n, const RoundState<Scalar>& round,
                            const HyperParams<Scalar>& hp, InnovationStats<Scalar>* stats = nullptr) {
  return net.agent_update(n, round, hp, Algorithm::Resilient, stats);
}

/// Baseline update of one agent: same iterate with every gain equal to one.
template <typename Scalar>
Vector<Scalar> cirfe_update(const RecoveryNetwork<Scalar>& net, Index n, const RoundState<Scalar>& round,
                            const HyperParams<Scalar>& hp, InnovationStats<Scalar>* stats = nullptr) {
  return net.agent_update(n, round, hp, Algorithm::Cirfe, stats);
}

}  // namespace fieldrec

#endif  // FIELDREC_RECOVERY_HPP
