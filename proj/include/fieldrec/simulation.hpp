#ifndef FIELDREC_SIMULATION_HPP
#define FIELDREC_SIMULATION_HPP

#include "fieldrec/analysis.hpp"

#include <functional>
#include <map>

namespace fieldrec {

/// Error metrics of the state at one iteration.
template <typename Scalar>
struct IterationRecord {
  Index iteration = 0;
  Scalar max_normalized_rmse = Scalar(0);
  Scalar consensus_error = Scalar(0);
  Scalar average_error = Scalar(0);
  Scalar max_local_error = Scalar(0);
  std::vector<Scalar> local_errors;
};

/// Innovation statistics of the update from `iteration` to `iteration + 1`.
template <typename Scalar>
struct StepRecord {
  Index iteration = 0;
  Scalar gamma = Scalar(0);
  InnovationStats<Scalar> innovation;
};

template <typename Scalar>
struct SimulationTrace {
  std::string digest;
  Algorithm algorithm = Algorithm::Resilient;
  std::vector<IterationRecord<Scalar>> records;  // one per state, starting with the initial one
  std::vector<StepRecord<Scalar>> steps;         // one per update
  std::map<Index, RoundState<Scalar>> snapshots;
  RoundState<Scalar> final_state;
};

struct RunOptions {
  Index iterations = 200;
  Algorithm algorithm = Algorithm::Resilient;
  Index snapshot_every = 0;  // 0 disables snapshots
  unsigned threads = 1;
  std::string digest;
};

template <typename Scalar>
using TraceSink = std::function<void(const RoundState<Scalar>&, const IterationRecord<Scalar>&)>;

/// Drives synchronous rounds over a validated system.
///
/// Construction surfaces every configuration problem before iteration 0:
/// hyperparameters (ConfigError), standing assumptions and subgraph
/// connectivity (AssumptionViolation), shapes (ConfigError). The resilience
/// condition is not enforced.
template <typename Scalar>
class Simulator {
 public:
  Simulator(const FieldSystem<Scalar>& sys, const CommGraph& graph, const Vector<Scalar>& measurements,
            const HyperParams<Scalar>& hp)
      : sys_(checked(sys, graph, hp)), hp_(hp), network_(sys_, graph, measurements) {}

  const RecoveryNetwork<Scalar>& network() const { return network_; }
  const FieldSystem<Scalar>& system() const { return sys_; }

  SimulationTrace<Scalar> run(const RunOptions& options, const TraceSink<Scalar>& sink = {}) const {
    return run_from(network_.initial_state(), options, sink);
  }

  /// Continues from an arbitrary snapshot for options.iterations rounds.
  SimulationTrace<Scalar> run_from(RoundState<Scalar> state, const RunOptions& options,
                                   const TraceSink<Scalar>& sink = {}) const {
    if (options.iterations < 0) throw ConfigError("iteration count must be nonnegative");
    SimulationTrace<Scalar> trace;
    trace.digest = options.digest;
    trace.algorithm = options.algorithm;
    trace.records.reserve(static_cast<std::size_t>(options.iterations + 1));
    trace.steps.reserve(static_cast<std::size_t>(options.iterations));
    const Index first = state.iteration;
    auto observe = [&](const RoundState<Scalar>& s) {
      trace.records.push_back(record(s));
      if (options.snapshot_every > 0 && (s.iteration - first) % options.snapshot_every == 0)
        trace.snapshots.emplace(s.iteration, s);
      if (sink) sink(s, trace.records.back());
    };
    observe(state);
    for (Index k = 0; k < options.iterations; ++k) {
      InnovationStats<Scalar> stats;
      const Index t = state.iteration;
      state = network_.step(state, hp_, options.algorithm, options.threads, &stats);
      trace.steps.push_back({t, gamma_threshold(t, hp_), stats});
      observe(state);
    }
    trace.final_state = std::move(state);
    return trace;
  }

  IterationRecord<Scalar> record(const RoundState<Scalar>& state) const {
    auto errs = round_errors(state, sys_);
    IterationRecord<Scalar> r;
    r.iteration = state.iteration;
    r.max_normalized_rmse = errs.max_normalized_rmse;
    r.consensus_error = errs.consensus;
    r.average_error = errs.average;
    r.max_local_error = errs.max_local;
    r.local_errors = std::move(errs.local);
    return r;
  }

 private:
  static const FieldSystem<Scalar>& checked(const FieldSystem<Scalar>& sys, const CommGraph& graph,
                                            const HyperParams<Scalar>& hp) {
    hp.validate();
    const auto validation = validate_system(sys);
    if (!validation.passed()) throw AssumptionViolation("system assumptions violated: " + validation.failures());
    const auto topology = check_topology(graph, sys);
    if (!topology.passed()) throw AssumptionViolation("topology assumptions violated: " + topology.report.failures());
    return sys;
  }

  FieldSystem<Scalar> sys_;
  HyperParams<Scalar> hp_;
  RecoveryNetwork<Scalar> network_;
};

/// Validates, then runs `options.iterations` rounds from the zero state.
template <typename Scalar>
SimulationTrace<Scalar> run(const FieldSystem<Scalar>& sys, const CommGraph& graph, const Vector<Scalar>& measurements,
                            const HyperParams<Scalar>& hp, const RunOptions& options,
                            const TraceSink<Scalar>& sink = {}) {
  return Simulator<Scalar>(sys, graph, measurements, hp).run(options, sink);
}

/// An iteration-indexed scalar series extracted from a trace.
template <typename Scalar>
struct ErrorSeries {
  std::vector<Index> iterations;
  std::vector<Scalar> values;

  std::size_t size() const { return values.size(); }

  std::vector<Scalar> scaled(Scalar tau) const {
    return scaled_series<Scalar>(std::span<const Scalar>(values), std::span<const Index>(iterations), tau);
  }

  Scalar decay_exponent(std::size_t window) const {
    return fieldrec::decay_exponent<Scalar>(std::span<const Scalar>(values), std::span<const Index>(iterations), window);
  }
};

namespace detail {
template <typename Scalar, typename F>
ErrorSeries<Scalar> extract(const SimulationTrace<Scalar>& trace, F f) {
  if (trace.records.empty()) throw std::invalid_argument("trace holds no iterations");
  ErrorSeries<Scalar> s;
  for (const auto& r : trace.records) {
    s.iterations.push_back(r.iteration);
    s.values.push_back(f(r));
  }
  return s;
}
}  // namespace detail

/// ||Q (x~_t - (1 (x) I) xbar_t)||_2 per iteration.
template <typename Scalar>
ErrorSeries<Scalar> consensus_error(const SimulationTrace<Scalar>& trace) {
  return detail::extract(trace, [](const auto& r) { return r.consensus_error; });
}

/// ||xbar_t - theta*||_2 per iteration.
template <typename Scalar>
ErrorSeries<Scalar> average_error(const SimulationTrace<Scalar>& trace) {
  return detail::extract(trace, [](const auto& r) { return r.average_error; });
}

/// ||x_n(t) - theta*_{I_n}||_2 for one agent.
template <typename Scalar>
ErrorSeries<Scalar> local_errors(const SimulationTrace<Scalar>& trace, Index agent) {
  return detail::extract(trace, [agent](const auto& r) { return r.local_errors.at(static_cast<std::size_t>(agent)); });
}

/// max over agents of the local error.
template <typename Scalar>
ErrorSeries<Scalar> max_local_errors(const SimulationTrace<Scalar>& trace) {
  return detail::extract(trace, [](const auto& r) { return r.max_local_error; });
}

template <typename Scalar>
ErrorSeries<Scalar> normalized_rmse(const SimulationTrace<Scalar>& trace) {
  return detail::extract(trace, [](const auto& r) { return r.max_normalized_rmse; });
}

}  // namespace fieldrec

#endif  // FIELDREC_SIMULATION_HPP
