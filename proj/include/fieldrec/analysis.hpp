#ifndef FIELDREC_ANALYSIS_HPP
#define FIELDREC_ANALYSIS_HPP

#include "fieldrec/recovery.hpp"

#include <cmath>
#include <span>

namespace fieldrec {

/// Scatter x_n into R^M: component I_n(i) gets x_n[i], everything else 0.
template <typename Scalar>
Vector<Scalar> auxiliary_state(const Vector<Scalar>& x_n, const InterestSet& interest, Index field_size) {
  if (x_n.size() != interest.size()) throw std::invalid_argument("auxiliary_state: state/interest size mismatch");
  Vector<Scalar> out = Vector<Scalar>::Zero(field_size);
  for (Index i = 0; i < interest.size(); ++i) out[interest[i]] = x_n[i];
  return out;
}

/// Inverse of auxiliary_state on the interest set.
template <typename Scalar>
Vector<Scalar> gather_state(const Vector<Scalar>& aux, const InterestSet& interest) {
  Vector<Scalar> out(interest.size());
  for (Index i = 0; i < interest.size(); ++i) out[i] = aux[interest[i]];
  return out;
}

/// Stacked auxiliary states [x~_1; ...; x~_N] (length N*M).
template <typename Scalar>
Vector<Scalar> stack_auxiliary(const RoundState<Scalar>& round, const std::vector<InterestSet>& interests,
                               Index field_size) {
  const auto n_agents = static_cast<Index>(interests.size());
  Vector<Scalar> out = Vector<Scalar>::Zero(n_agents * field_size);
  for (Index n = 0; n < n_agents; ++n)
    out.segment(n * field_size, field_size) =
        auxiliary_state(round.states[static_cast<std::size_t>(n)], interests[static_cast<std::size_t>(n)], field_size);
  return out;
}

template <typename Scalar>
RoundState<Scalar> unstack_auxiliary(const Vector<Scalar>& stacked, const std::vector<InterestSet>& interests,
                                     Index field_size, Index iteration = 0) {
  RoundState<Scalar> out;
  out.iteration = iteration;
  for (std::size_t n = 0; n < interests.size(); ++n)
    out.states.push_back(gather_state<Scalar>(stacked.segment(static_cast<Index>(n) * field_size, field_size),
                                              interests[n]));
  return out;
}

/// Diagonal interest masks Q_n (stored as 0/1 vectors) and the averaging
/// diagonal D = diag(1/|J_1|, ..., 1/|J_M|).
template <typename Scalar>
struct InterestMasks {
  std::vector<Vector<Scalar>> q;
  Vector<Scalar> averaging;

  Index field_size() const { return averaging.size(); }
  Index agent_count() const { return static_cast<Index>(q.size()); }

  /// Diagonal of the block-diagonal stacked mask.
  Vector<Scalar> stacked() const {
    const Index m = field_size();
    Vector<Scalar> out(agent_count() * m);
    for (Index n = 0; n < agent_count(); ++n) out.segment(n * m, m) = q[static_cast<std::size_t>(n)];
    return out;
  }
};

template <typename Scalar>
InterestMasks<Scalar> build_masks(const FieldSystem<Scalar>& sys) {
  InterestMasks<Scalar> masks;
  const Index m = sys.field_size();
  for (Index n = 0; n < sys.agent_count(); ++n) {
    Vector<Scalar> q = Vector<Scalar>::Zero(m);
    for (Index c : sys.interest(n).components()) q[c] = Scalar(1);
    masks.q.push_back(std::move(q));
  }
  masks.averaging = Vector<Scalar>::Zero(m);
  for (Index c = 0; c < m; ++c) {
    const auto size = static_cast<Index>(sys.group(c).size());
    if (size == 0)
      throw AssumptionViolation("no agent is interested in component " + std::to_string(c + 1));
    masks.averaging[c] = Scalar(1) / Scalar(size);
  }
  return masks;
}

/// The NM x NM block matrix whose (n,l) block is
///   -Q_n sum_{i != n} L_{n,i} Q_i   for n = l,
///    L_{n,l} Q_n Q_l                otherwise.
template <typename Scalar>
SparseMatrix<Scalar> build_block_laplacian(const CommGraph& graph, const InterestMasks<Scalar>& masks) {
  const Index n_agents = masks.agent_count();
  const Index m = masks.field_size();
  if (graph.vertex_count() != n_agents) throw std::invalid_argument("build_block_laplacian: graph/mask size mismatch");
  const Matrix<Scalar> lap = laplacian<Scalar>(graph);
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (Index n = 0; n < n_agents; ++n) {
    const auto& qn = masks.q[static_cast<std::size_t>(n)];
    Vector<Scalar> diag = Vector<Scalar>::Zero(m);
    for (Index i = 0; i < n_agents; ++i) {
      if (i == n || lap(n, i) == Scalar(0)) continue;
      const auto& qi = masks.q[static_cast<std::size_t>(i)];
      diag -= lap(n, i) * qn.cwiseProduct(qi);
      for (Index c = 0; c < m; ++c) {
        const Scalar v = lap(n, i) * qn[c] * qi[c];
        if (v != Scalar(0)) trips.emplace_back(n * m + c, i * m + c, v);
      }
    }
    for (Index c = 0; c < m; ++c)
      if (diag[c] != Scalar(0)) trips.emplace_back(n * m + c, n * m + c, diag[c]);
  }
  SparseMatrix<Scalar> out(n_agents * m, n_agents * m);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

/// D_H = blkdiag(H_1, ..., H_N), P x NM.
template <typename Scalar>
SparseMatrix<Scalar> block_measurement_matrix(const FieldSystem<Scalar>& sys) {
  const Index m = sys.field_size();
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& a = sys.agent(n);
    for (Index r = 0; r < a.rows(); ++r)
      for (typename SparseRowMatrix<Scalar>::InnerIterator it(a.matrix, r); it; ++it)
        trips.emplace_back(a.row_offset + r, n * m + it.col(), it.value());
  }
  SparseMatrix<Scalar> out(sys.measurement_count(), sys.agent_count() * m);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

/// One global update of the stacked auxiliary state:
///
///   x~_{t+1} = x~_t - beta_t L x~_t + alpha_t D_H^T K_t (y - D_H x~_t)
///
/// with K_t built entrywise as min(1, gamma_t/|r_p|) (identity for cirfe).
template <typename Scalar>
Vector<Scalar> stacked_step(const Vector<Scalar>& aux, const SparseMatrix<Scalar>& block_laplacian,
                            const SparseMatrix<Scalar>& block_measurement, const Vector<Scalar>& y, Index t,
                            const HyperParams<Scalar>& hp, Algorithm algorithm = Algorithm::Resilient) {
  const Vector<Scalar> residual = y - block_measurement * aux;
  Vector<Scalar> gains = Vector<Scalar>::Ones(residual.size());
  if (algorithm == Algorithm::Resilient) {
    const Scalar gamma = gamma_threshold(t, hp);
    for (Index p = 0; p < residual.size(); ++p) gains[p] = saturation_gain(residual[p], gamma);
  }
  const Vector<Scalar> consensus = block_laplacian * aux;
  const Vector<Scalar> innovation = block_measurement.transpose() * (gains.asDiagonal() * residual);
  return aux - beta(t, hp) * consensus + alpha(t, hp) * innovation;
}

/// Bundles the operators of the stacked dynamics for repeated stepping.
template <typename Scalar>
class StackedDynamics {
 public:
  StackedDynamics(const FieldSystem<Scalar>& sys, const CommGraph& graph, Vector<Scalar> measurements)
      : masks_(build_masks(sys)),
        block_laplacian_(build_block_laplacian(graph, masks_)),
        block_measurement_(block_measurement_matrix(sys)),
        y_(std::move(measurements)) {}

  Vector<Scalar> step(const Vector<Scalar>& aux, Index t, const HyperParams<Scalar>& hp,
                      Algorithm algorithm = Algorithm::Resilient) const {
    return stacked_step(aux, block_laplacian_, block_measurement_, y_, t, hp, algorithm);
  }

  const InterestMasks<Scalar>& masks() const { return masks_; }
  const SparseMatrix<Scalar>& block_laplacian() const { return block_laplacian_; }
  const SparseMatrix<Scalar>& block_measurement() const { return block_measurement_; }

 private:
  InterestMasks<Scalar> masks_;
  SparseMatrix<Scalar> block_laplacian_;
  SparseMatrix<Scalar> block_measurement_;
  Vector<Scalar> y_;
};

/// Largest |per-agent state - stacked state| over `rounds` synchronous rounds
/// started from zero, comparing the network update with the stacked form.
template <typename Scalar>
Scalar oracle_discrepancy(const FieldSystem<Scalar>& sys, const CommGraph& graph, const Vector<Scalar>& measurements,
                          const HyperParams<Scalar>& hp, Algorithm algorithm, Index rounds) {
  const RecoveryNetwork<Scalar> net(sys, graph, measurements);
  const StackedDynamics<Scalar> stacked(sys, graph, measurements);
  RoundState<Scalar> round = net.initial_state();
  Vector<Scalar> aux = Vector<Scalar>::Zero(sys.agent_count() * sys.field_size());
  Scalar worst(0);
  for (Index t = 0; t < rounds; ++t) {
    round = net.step(round, hp, algorithm);
    aux = stacked.step(aux, t, hp, algorithm);
    const Vector<Scalar> diff = stack_auxiliary(round, sys.interests(), sys.field_size()) - aux;
    worst = std::max(worst, diff.cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Generalized network average D (1^T (x) I_M) x~.
template <typename Scalar>
Vector<Scalar> network_average(const Vector<Scalar>& aux, const InterestMasks<Scalar>& masks) {
  const Index m = masks.field_size();
  Vector<Scalar> sum = Vector<Scalar>::Zero(m);
  for (Index n = 0; n < masks.agent_count(); ++n) sum += aux.segment(n * m, m);
  return masks.averaging.cwiseProduct(sum);
}

/// Same average computed from the per-agent states without stacking.
template <typename Scalar>
Vector<Scalar> network_average(const RoundState<Scalar>& round, const FieldSystem<Scalar>& sys) {
  const Index m = sys.field_size();
  Vector<Scalar> sum = Vector<Scalar>::Zero(m);
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& x = round.states[static_cast<std::size_t>(n)];
    const auto& interest = sys.interest(n);
    for (Index i = 0; i < interest.size(); ++i) sum[interest[i]] += x[i];
  }
  for (Index c = 0; c < m; ++c) {
    const auto size = sys.group(c).size();
    if (size == 0) throw AssumptionViolation("no agent is interested in component " + std::to_string(c + 1));
    sum[c] /= Scalar(static_cast<double>(size));
  }
  return sum;
}

/// Error quantities of one round.
template <typename Scalar>
struct RoundErrors {
  Scalar consensus = Scalar(0);             // ||Q (x~ - (1 (x) I) xbar)||_2
  Scalar average = Scalar(0);               // ||xbar - theta*||_2
  std::vector<Scalar> local;                // ||x_n - theta*_{I_n}||_2 per agent
  Scalar max_local = Scalar(0);
  Scalar max_normalized_rmse = Scalar(0);   // max_n ||x_n - theta*_{I_n}|| / sqrt(|I_n|)
};

template <typename Scalar>
Scalar local_error(const Vector<Scalar>& x_n, const InterestSet& interest, const Vector<Scalar>& field) {
  Scalar sq(0);
  for (Index i = 0; i < interest.size(); ++i) {
    const Scalar d = x_n[i] - field[interest[i]];
    sq += d * d;
  }
  return std::sqrt(sq);
}

/// max over agents of ||x_n - theta*_{I_n}||_2 / sqrt(|I_n|).
template <typename Scalar>
Scalar max_normalized_rmse(const RoundState<Scalar>& round, const FieldSystem<Scalar>& sys) {
  Scalar best(0);
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& interest = sys.interest(n);
    if (interest.empty()) continue;
    const Scalar e = local_error(round.states[static_cast<std::size_t>(n)], interest, sys.field());
    best = std::max(best, e / std::sqrt(Scalar(static_cast<double>(interest.size()))));
  }
  return best;
}

template <typename Scalar>
RoundErrors<Scalar> round_errors(const RoundState<Scalar>& round, const FieldSystem<Scalar>& sys) {
  RoundErrors<Scalar> out;
  const Vector<Scalar> avg = network_average(round, sys);
  out.average = (avg - sys.field()).norm();
  Scalar consensus_sq(0);
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& x = round.states[static_cast<std::size_t>(n)];
    const auto& interest = sys.interest(n);
    for (Index i = 0; i < interest.size(); ++i) {
      const Scalar d = x[i] - avg[interest[i]];
      consensus_sq += d * d;
    }
    const Scalar e = local_error(x, interest, sys.field());
    out.local.push_back(e);
    out.max_local = std::max(out.max_local, e);
    if (!interest.empty())
      out.max_normalized_rmse =
          std::max(out.max_normalized_rmse, e / std::sqrt(Scalar(static_cast<double>(interest.size()))));
  }
  out.consensus = std::sqrt(consensus_sq);
  return out;
}

/// (t+1)^tau * value for each entry of an iteration-indexed series.
template <typename Scalar>
std::vector<Scalar> scaled_series(std::span<const Scalar> values, std::span<const Index> iterations, Scalar tau) {
  if (values.size() != iterations.size()) throw std::invalid_argument("scaled_series: length mismatch");
  std::vector<Scalar> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    out[k] = std::pow(Scalar(iterations[k] + 1), tau) * values[k];
  return out;
}

/// w_{t+1} = (1 - c1/(t+1)^d1) w_t + c2/(t+1)^d2, with c1, c2 > 0 and
/// 0 < d1 < d2 < 1. The positivity of c2 is relaxed to c2 >= 0 so that the
/// pure contraction can be simulated.
template <typename Scalar>
struct ContractionParams {
  Scalar c1, delta1, c2, delta2;

  void validate() const {
    if (!(c1 > Scalar(0)) || !(c2 >= Scalar(0))) throw std::invalid_argument("scalar system: need c1 > 0, c2 >= 0");
    if (!(Scalar(0) < delta1 && delta1 < delta2 && delta2 < Scalar(1)))
      throw std::invalid_argument("scalar system: need 0 < delta1 < delta2 < 1");
  }
};

/// Returns w_0 .. w_T.
template <typename Scalar>
std::vector<Scalar> scalar_system_lemma3(const ContractionParams<Scalar>& p, Scalar w0, Index horizon) {
  p.validate();
  if (horizon < 0) throw std::invalid_argument("scalar system: negative horizon");
  std::vector<Scalar> w(static_cast<std::size_t>(horizon + 1));
  w[0] = w0;
  for (Index t = 0; t < horizon; ++t) {
    const Scalar s = Scalar(t + 1);
    const Scalar r1 = p.c1 / std::pow(s, p.delta1);
    const Scalar r2 = p.c2 / std::pow(s, p.delta2);
    w[static_cast<std::size_t>(t + 1)] = (Scalar(1) - r1) * w[static_cast<std::size_t>(t)] + r2;
  }
  return w;
}

/// w_{t+1} = (1 - r1 c3 / ((|w_t| + c5)(t+1)^d3)) w_t + r1 c4 / (t+1)^d4,
/// r1 = c1/(t+1)^d1, with c1, c3, c5 > 0, c4 >= 0 and 0 < d3 < d4 < d1.
template <typename Scalar>
struct StateGainParams {
  Scalar c1, delta1, c3, c4, c5, delta3, delta4;

  void validate() const {
    if (!(c1 > Scalar(0) && c3 > Scalar(0) && c5 > Scalar(0)) || !(c4 >= Scalar(0)))
      throw std::invalid_argument("scalar system: need c1, c3, c5 > 0 and c4 >= 0");
    if (!(Scalar(0) < delta3 && delta3 < delta4 && delta4 < delta1))
      throw std::invalid_argument("scalar system: need 0 < delta3 < delta4 < delta1");
  }
};

template <typename Scalar>
std::vector<Scalar> scalar_system_lemma4(const StateGainParams<Scalar>& p, Scalar w0, Index horizon) {
  p.validate();
  if (horizon < 0) throw std::invalid_argument("scalar system: negative horizon");
  std::vector<Scalar> w(static_cast<std::size_t>(horizon + 1));
  w[0] = w0;
  for (Index t = 0; t < horizon; ++t) {
    const Scalar s = Scalar(t + 1);
    const Scalar wt = w[static_cast<std::size_t>(t)];
    const Scalar r1 = p.c1 / std::pow(s, p.delta1);
    const Scalar contraction = r1 * p.c3 / ((std::abs(wt) + p.c5) * std::pow(s, p.delta3));
    w[static_cast<std::size_t>(t + 1)] = (Scalar(1) - contraction) * wt + r1 * p.c4 / std::pow(s, p.delta4);
  }
  return w;
}

/// Least-squares slope of log(value) against log(t+1) over the trailing
/// `window` entries. Throws std::domain_error on nonpositive values.
template <typename Scalar>
Scalar decay_exponent(std::span<const Scalar> values, std::span<const Index> iterations, std::size_t window) {
  if (values.size() != iterations.size()) throw std::invalid_argument("decay_exponent: length mismatch");
  if (window < 2 || window > values.size()) throw std::invalid_argument("decay_exponent: window must be in [2, size]");
  const std::size_t begin = values.size() - window;
  Scalar sx(0), sy(0), sxx(0), sxy(0);
  for (std::size_t k = begin; k < values.size(); ++k) {
    if (!(values[k] > Scalar(0)))
      throw std::domain_error("decay_exponent: nonpositive value at iteration " + std::to_string(iterations[k]));
    const Scalar x = std::log(Scalar(iterations[k] + 1));
    const Scalar y = std::log(values[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const Scalar n = Scalar(static_cast<double>(window));
  const Scalar denom = n * sxx - sx * sx;
  if (denom == Scalar(0)) throw std::domain_error("decay_exponent: degenerate window");
  return (n * sxy - sx * sy) / denom;
}

/// Overload for series indexed t = 0, 1, 2, ...
template <typename Scalar>
Scalar decay_exponent(std::span<const Scalar> values, std::size_t window) {
  std::vector<Index> iters(values.size());
  for (std::size_t k = 0; k < iters.size(); ++k) iters[k] = static_cast<Index>(k);
  return decay_exponent<Scalar>(values, std::span<const Index>(iters), window);
}

}  // namespace fieldrec

#endif  // FIELDREC_ANALYSIS_HPP
