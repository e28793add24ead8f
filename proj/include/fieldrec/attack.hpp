#ifndef FIELDREC_ATTACK_HPP
#define FIELDREC_ATTACK_HPP

#include "fieldrec/field_model.hpp"

#include <bit>
#include <cstdint>
#include <map>
#include <set>

namespace fieldrec {

enum class AttackMode { Additive, Override };

/// Compromised measurements and what the adversary does to them.
///
/// In additive mode `values[p]` is the disturbance a^(p); in override mode it
/// is the reading the adversary forces, and the disturbance is derived against
/// the clean reading when the attack is applied. Keys are global measurement
/// indices (0-based).
template <typename Scalar>
struct AttackSpec {
  AttackMode mode = AttackMode::Additive;
  std::map<Index, Scalar> values;

  static AttackSpec none() { return {}; }

  static AttackSpec additive(std::map<Index, Scalar> disturbance) {
    return {AttackMode::Additive, std::move(disturbance)};
  }

  static AttackSpec override_to(const std::vector<Index>& measurements, Scalar target) {
    AttackSpec spec{AttackMode::Override, {}};
    for (Index p : measurements) spec.values[p] = target;
    return spec;
  }

  bool empty() const { return values.empty(); }
};

/// Override every scalar measurement of the listed agents.
template <typename Scalar>
AttackSpec<Scalar> override_agents(const FieldSystem<Scalar>& sys, const std::vector<Index>& agents, Scalar target) {
  std::vector<Index> rows;
  for (Index n : agents) {
    if (n < 0 || n >= sys.agent_count()) throw std::invalid_argument("attacked agent out of range");
    const auto& a = sys.agent(n);
    for (Index r = 0; r < a.rows(); ++r) rows.push_back(a.row_offset + r);
  }
  return AttackSpec<Scalar>::override_to(rows, target);
}

template <typename Scalar>
struct AttackOutcome {
  Vector<Scalar> measurements;         // y = H theta* + a
  Vector<Scalar> disturbance;          // a
  std::vector<Index> compromised;      // effective A (a^(p) != 0), ascending
  std::vector<Index> ineffective;      // listed but a^(p) == 0
};

/// Applies the attack to the clean stacked measurement. Entries outside the
/// effective compromised set are exactly the clean readings.
template <typename Scalar>
AttackOutcome<Scalar> apply_attack(const FieldSystem<Scalar>& sys, const AttackSpec<Scalar>& spec) {
  AttackOutcome<Scalar> out;
  const Vector<Scalar> clean = stack_measurements(sys);
  out.disturbance = Vector<Scalar>::Zero(clean.size());
  for (const auto& [p, v] : spec.values) {
    if (p < 0 || p >= clean.size())
      throw std::invalid_argument("attacked measurement index " + std::to_string(p + 1) + " out of range 1.." +
                                  std::to_string(clean.size()));
    if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument("attack value must be finite");
    const Scalar a = spec.mode == AttackMode::Additive ? v : v - clean[p];
    if (a == Scalar(0)) {
      out.ineffective.push_back(p);
      continue;
    }
    out.disturbance[p] = a;
    out.compromised.push_back(p);
  }
  out.measurements = clean;
  for (Index p : out.compromised)
    out.measurements[p] = spec.mode == AttackMode::Override ? spec.values.at(p) : clean[p] + out.disturbance[p];
  return out;
}

template <typename Scalar>
struct DeltaResult {
  Scalar value = Scalar(0);
  bool exact = true;
};

inline constexpr Index kDeltaEnumerationLimit = 20;

namespace detail {

// Rows of the compromised measurements restricted to the union of their
// supports, as a dense |A| x s matrix.
template <typename Scalar>
Matrix<Scalar> compromised_block(const FieldSystem<Scalar>& sys, const std::vector<Index>& compromised) {
  std::vector<Index> support;
  std::vector<SparseRowMatrix<Scalar>> rows;
  for (Index p : compromised) {
    rows.push_back(sys.measurement_row(p));
    for (typename SparseRowMatrix<Scalar>::InnerIterator it(rows.back(), 0); it; ++it) support.push_back(it.col());
  }
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  Matrix<Scalar> block = Matrix<Scalar>::Zero(static_cast<Index>(rows.size()), static_cast<Index>(support.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (typename SparseRowMatrix<Scalar>::InnerIterator it(rows[i], 0); it; ++it) {
      const auto col = std::lower_bound(support.begin(), support.end(), it.col()) - support.begin();
      block(static_cast<Index>(i), col) += it.value();
    }
  return block;
}

inline void check_indices(const std::vector<Index>& compromised, Index p_total) {
  for (Index p : compromised)
    if (p < 0 || p >= p_total) throw std::invalid_argument("compromised index " + std::to_string(p + 1) + " out of range");
}

}  // namespace detail

/// max over sign vectors v of ||A^T v||_2 for the rows of `rows`.
///
/// The maximum of a convex function over the cube is attained at a vertex,
/// and v, -v give the same value, so 2^(k-1) vertices suffice. Vertices are
/// visited in Gray-code order so each step flips a single row.
template <typename Scalar>
Scalar delta_by_enumeration(const Matrix<Scalar>& rows) {
  const Index k = rows.rows();
  if (k == 0) return Scalar(0);
  if (k > 62) throw std::invalid_argument("delta_by_enumeration: too many rows");
  Vector<Scalar> u = rows.colwise().sum().transpose();
  std::vector<Scalar> sign(static_cast<std::size_t>(k), Scalar(1));
  Scalar best = u.squaredNorm();
  const std::uint64_t steps = std::uint64_t{1} << (k - 1);
  for (std::uint64_t g = 1; g < steps; ++g) {
    const auto bit = static_cast<Index>(std::countr_zero(g)) + 1;
    auto& s = sign[static_cast<std::size_t>(bit)];
    u -= Scalar(2) * s * rows.row(bit).transpose();
    s = -s;
    best = std::max(best, u.squaredNorm());
  }
  return std::sqrt(best);
}

/// Closed form for canonical selector rows: sqrt(sum_m c_m^2), c_m the number
/// of compromised selectors of component m. Returns nullopt if some row is not
/// a selector.
template <typename Scalar>
std::optional<Scalar> delta_selector_closed_form(const FieldSystem<Scalar>& sys, const std::vector<Index>& compromised) {
  std::map<Index, Index> counts;
  for (Index p : compromised) {
    const auto loc = sys.locate(p);
    Index comp = -1;
    if (!is_selector_row(sys.agent(loc.agent).matrix, loc.local_row, &comp)) return std::nullopt;
    ++counts[comp];
  }
  Scalar sum(0);
  for (const auto& [m, c] : counts) sum += Scalar(c) * Scalar(c);
  return std::sqrt(sum);
}

/// Attacker leverage Delta_A. Exact by vertex enumeration for |A| <= 20, exact
/// by closed form for selector rows, otherwise the bound |A| (exact = false).
template <typename Scalar>
DeltaResult<Scalar> delta_A(const FieldSystem<Scalar>& sys, const std::vector<Index>& compromised) {
  detail::check_indices(compromised, sys.measurement_count());
  std::vector<Index> a(compromised);
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  if (static_cast<Index>(a.size()) <= kDeltaEnumerationLimit)
    return {delta_by_enumeration(detail::compromised_block(sys, a)), true};
  if (auto closed = delta_selector_closed_form(sys, a)) return {*closed, true};
  return {Scalar(static_cast<double>(a.size())), false};
}

template <typename Scalar>
struct ResilienceReport {
  std::optional<Scalar> lambda_min;  // of G_N; unavailable for large non-diagonal G_N
  Scalar delta = Scalar(0);
  bool holds = false;
  bool exact = false;
  Scalar margin = Scalar(0);  // kappa = lambda_min - delta
};

/// Grammian of the uncompromised measurements, sum over p not in A of h_p h_p^T.
template <typename Scalar>
SparseMatrix<Scalar> uncompromised_grammian(const FieldSystem<Scalar>& sys, const std::vector<Index>& compromised) {
  std::vector<char> bad(static_cast<std::size_t>(sys.measurement_count()), 0);
  for (Index p : compromised) bad[static_cast<std::size_t>(p)] = 1;
  std::vector<Eigen::Triplet<Scalar>> trips;
  Index kept = 0;
  for (const auto& a : sys.agents())
    for (Index r = 0; r < a.rows(); ++r) {
      if (bad[static_cast<std::size_t>(a.row_offset + r)]) continue;
      for (typename SparseRowMatrix<Scalar>::InnerIterator it(a.matrix, r); it; ++it)
        trips.emplace_back(kept, it.col(), it.value());
      ++kept;
    }
  SparseMatrix<Scalar> h(kept, sys.field_size());
  h.setFromTriplets(trips.begin(), trips.end());
  SparseMatrix<Scalar> g = SparseMatrix<Scalar>(h.transpose()) * h;
  g.prune(Scalar(0));
  return g;
}

/// The strict resilience condition lambda_min(G_N) > Delta_A.
template <typename Scalar>
ResilienceReport<Scalar> resilience_check(const FieldSystem<Scalar>& sys, const std::vector<Index>& compromised) {
  detail::check_indices(compromised, sys.measurement_count());
  ResilienceReport<Scalar> out;
  const auto delta = delta_A(sys, compromised);
  out.delta = delta.value;
  out.lambda_min = min_eigenvalue(uncompromised_grammian(sys, compromised)).lambda_min;
  out.exact = delta.exact && out.lambda_min.has_value();
  if (out.lambda_min) {
    out.margin = *out.lambda_min - out.delta;
    out.holds = *out.lambda_min > out.delta;
  }
  return out;
}

}  // namespace fieldrec

#endif  // FIELDREC_ATTACK_HPP
