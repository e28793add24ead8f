#ifndef FIELDREC_FIELD_MODEL_HPP
#define FIELDREC_FIELD_MODEL_HPP

#include "fieldrec/types.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <utility>

namespace fieldrec {

// Formats 0-based indices as a 1-based list for diagnostics.
inline std::string format_indices(const std::vector<Index>& idx, std::size_t limit = 12) {
  std::ostringstream os;
  os << '{';
  for (std::size_t k = 0; k < idx.size() && k < limit; ++k) os << (k ? "," : "") << idx[k] + 1;
  if (idx.size() > limit) os << ",... (" << idx.size() << " total)";
  os << '}';
  return os.str();
}

/// Strictly ascending list of field components an agent wants to recover.
///
/// `operator[](r)` is the forward map (r-th element), `position(m)` the
/// inverse map. Both are 0-based.
class InterestSet {
 public:
  InterestSet() = default;

  explicit InterestSet(std::vector<Index> components) : components_(std::move(components)) {
    for (std::size_t k = 0; k < components_.size(); ++k) {
      if (components_[k] < 0) throw std::invalid_argument("interest set: negative component index");
      if (k > 0 && components_[k] <= components_[k - 1])
        throw std::invalid_argument("interest set: components must be strictly ascending");
    }
  }

  static InterestSet full(Index field_size) {
    std::vector<Index> all(static_cast<std::size_t>(field_size));
    for (Index m = 0; m < field_size; ++m) all[static_cast<std::size_t>(m)] = m;
    return InterestSet(std::move(all));
  }

  Index size() const { return static_cast<Index>(components_.size()); }
  bool empty() const { return components_.empty(); }
  Index operator[](Index r) const { return components_[static_cast<std::size_t>(r)]; }

  std::optional<Index> position(Index m) const {
    auto it = std::lower_bound(components_.begin(), components_.end(), m);
    if (it == components_.end() || *it != m) return std::nullopt;
    return static_cast<Index>(it - components_.begin());
  }

  bool contains(Index m) const { return std::binary_search(components_.begin(), components_.end(), m); }

  const std::vector<Index>& components() const { return components_; }

  bool operator==(const InterestSet&) const = default;

 private:
  std::vector<Index> components_;
};

/// One agent's measurement matrix H_n (P_n x M) and the global index of its
/// first row.
template <typename Scalar>
struct AgentMeasurement {
  SparseRowMatrix<Scalar> matrix;
  Index row_offset = 0;

  Index rows() const { return matrix.rows(); }
};

struct MeasurementLocation {
  Index agent = 0;
  Index local_row = 0;
  bool operator==(const MeasurementLocation&) const = default;
};

/// Field, per-agent measurement matrices and interest sets.
///
/// Construction only checks shapes; the standing assumptions (unit rows,
/// coupling inside interest, nonempty groups, observability) are reported by
/// validate_system() so that invalid inputs can be diagnosed instead of
/// rejected outright.
template <typename Scalar>
class FieldSystem {
 public:
  FieldSystem(Vector<Scalar> field, std::vector<SparseRowMatrix<Scalar>> matrices,
              std::vector<InterestSet> interests)
      : field_(std::move(field)), interests_(std::move(interests)) {
    if (field_.size() < 1) throw std::invalid_argument("field must have at least one component");
    if (!field_.allFinite()) throw std::invalid_argument("field values must be finite");
    if (matrices.size() != interests_.size())
      throw std::invalid_argument("one interest set is required per agent");
    const Index m = field_.size();
    Index offset = 0;
    agents_.reserve(matrices.size());
    for (auto& h : matrices) {
      if (h.cols() != m) throw std::invalid_argument("measurement matrix column count differs from field size");
      h.makeCompressed();
      agents_.push_back({std::move(h), offset});
      offset += agents_.back().rows();
    }
    measurement_count_ = offset;
    groups_.assign(static_cast<std::size_t>(m), {});
    for (std::size_t n = 0; n < interests_.size(); ++n)
      for (Index c : interests_[n].components())
        if (c < m) groups_[static_cast<std::size_t>(c)].push_back(static_cast<Index>(n));
  }

  Index field_size() const { return field_.size(); }
  Index agent_count() const { return static_cast<Index>(agents_.size()); }
  Index measurement_count() const { return measurement_count_; }

  const Vector<Scalar>& field() const { return field_; }
  const AgentMeasurement<Scalar>& agent(Index n) const { return agents_[static_cast<std::size_t>(n)]; }
  const std::vector<AgentMeasurement<Scalar>>& agents() const { return agents_; }
  const InterestSet& interest(Index n) const { return interests_[static_cast<std::size_t>(n)]; }
  const std::vector<InterestSet>& interests() const { return interests_; }

  /// Agents interested in component m (the group J_m), ascending.
  const std::vector<Index>& group(Index m) const { return groups_[static_cast<std::size_t>(m)]; }

  MeasurementLocation locate(Index p) const {
    if (p < 0 || p >= measurement_count_) throw std::out_of_range("global measurement index out of range");
    auto it = std::upper_bound(agents_.begin(), agents_.end(), p,
                               [](Index v, const AgentMeasurement<Scalar>& a) { return v < a.row_offset; });
    // Last agent whose offset is <= p; zero-row agents never satisfy that strictly after the owner.
    const auto n = static_cast<Index>(it - agents_.begin()) - 1;
    return {n, p - agent(n).row_offset};
  }

  Index global_index(Index n, Index local_row) const { return agent(n).row_offset + local_row; }

  /// The stacked measurement matrix (P x M).
  SparseRowMatrix<Scalar> stacked_matrix() const {
    std::vector<Eigen::Triplet<Scalar>> trips;
    for (const auto& a : agents_)
      for (Index r = 0; r < a.rows(); ++r)
        for (typename SparseRowMatrix<Scalar>::InnerIterator it(a.matrix, r); it; ++it)
          trips.emplace_back(a.row_offset + r, it.col(), it.value());
    SparseRowMatrix<Scalar> h(measurement_count_, field_size());
    h.setFromTriplets(trips.begin(), trips.end());
    return h;
  }

  /// Row h_p of the stacked matrix as a sparse row.
  SparseRowMatrix<Scalar> measurement_row(Index p) const {
    const auto loc = locate(p);
    return agent(loc.agent).matrix.row(loc.local_row);
  }

  /// Observability Grammian H^T H (M x M).
  SparseMatrix<Scalar> grammian() const {
    SparseMatrix<Scalar> h = stacked_matrix();
    SparseMatrix<Scalar> g = SparseMatrix<Scalar>(h.transpose()) * h;
    g.prune(Scalar(0));
    return g;
  }

 private:
  Vector<Scalar> field_;
  std::vector<AgentMeasurement<Scalar>> agents_;
  std::vector<InterestSet> interests_;
  std::vector<std::vector<Index>> groups_;
  Index measurement_count_ = 0;
};

/// Components whose column of H_n has a nonzero entry (explicit zeros ignored).
template <typename Scalar>
std::vector<Index> coupling_set(const AgentMeasurement<Scalar>& agent) {
  std::vector<Index> cols;
  for (Index r = 0; r < agent.matrix.outerSize(); ++r)
    for (typename SparseRowMatrix<Scalar>::InnerIterator it(agent.matrix, r); it; ++it)
      if (it.value() != Scalar(0)) cols.push_back(it.col());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

/// True when row r of a row-major matrix has exactly one nonzero entry of
/// magnitude one; the component is written to `component`.
template <typename Scalar>
bool is_selector_row(const SparseRowMatrix<Scalar>& h, Index r, Index* component = nullptr) {
  Index count = 0;
  Index col = -1;
  bool unit = false;
  for (typename SparseRowMatrix<Scalar>::InnerIterator it(h, r); it; ++it) {
    if (it.value() == Scalar(0)) continue;
    ++count;
    col = it.col();
    unit = std::abs(it.value()) == Scalar(1);
  }
  if (count != 1 || !unit) return false;
  if (component) *component = col;
  return true;
}

template <typename Scalar>
struct SpectrumEstimate {
  std::optional<Scalar> lambda_min;
  bool diagonal = false;
};

inline constexpr Index kDenseEigenLimit = 4000;

/// Minimum eigenvalue of a symmetric PSD sparse matrix: diagonal fast path,
/// dense eigensolve up to kDenseEigenLimit, unavailable beyond.
template <typename Scalar>
SpectrumEstimate<Scalar> min_eigenvalue(const SparseMatrix<Scalar>& g) {
  bool diag = true;
  for (Index k = 0; k < g.outerSize() && diag; ++k)
    for (typename SparseMatrix<Scalar>::InnerIterator it(g, k); it; ++it)
      if (it.row() != it.col() && it.value() != Scalar(0)) {
        diag = false;
        break;
      }
  if (diag) {
    Vector<Scalar> d = g.diagonal();
    return {d.size() ? std::optional<Scalar>(d.minCoeff()) : std::nullopt, true};
  }
  if (g.rows() > kDenseEigenLimit) return {std::nullopt, false};
  Matrix<Scalar> dense(g);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(dense, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), false};
}

inline constexpr double kUnitNormTolerance = 1e-12;
inline constexpr double kObservabilityThreshold = 1e-10;

/// Checks the standing assumptions: unit-norm nonzero rows, coupling set
/// inside interest set, every group J_m nonempty, invertible Grammian.
template <typename Scalar>
Report validate_system(const FieldSystem<Scalar>& sys) {
  Report report;
  const Index m = sys.field_size();

  std::vector<Index> zero_rows, non_unit_rows;
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& a = sys.agent(n);
    for (Index r = 0; r < a.rows(); ++r) {
      const Scalar norm = a.matrix.row(r).norm();
      if (norm == Scalar(0))
        zero_rows.push_back(a.row_offset + r);
      else if (std::abs(norm - Scalar(1)) > Scalar(kUnitNormTolerance))
        non_unit_rows.push_back(a.row_offset + r);
    }
  }
  report.add("nonzero rows", zero_rows.empty(),
             zero_rows.empty() ? "" : "zero measurement rows " + format_indices(zero_rows));
  report.add("unit-norm rows", non_unit_rows.empty(),
             non_unit_rows.empty() ? "" : "rows not unit norm " + format_indices(non_unit_rows));

  std::vector<Index> bad_interest, bad_coupling;
  std::string coupling_detail;
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& interest = sys.interest(n);
    if (!interest.empty() && interest[interest.size() - 1] >= m) bad_interest.push_back(n);
    std::vector<Index> outside;
    for (Index c : coupling_set(sys.agent(n)))
      if (!interest.contains(c)) outside.push_back(c);
    if (!outside.empty()) {
      bad_coupling.push_back(n);
      if (coupling_detail.empty())
        coupling_detail = "agent " + std::to_string(n + 1) + " measures components " +
                          format_indices(outside) + " outside its interest set";
    }
  }
  report.add("interest indices in range", bad_interest.empty(),
             bad_interest.empty() ? "" : "agents " + format_indices(bad_interest) + " list components > M");
  report.add("coupling within interest", bad_coupling.empty(),
             bad_coupling.empty() ? "" : coupling_detail + " (agents " + format_indices(bad_coupling) + ")");

  std::vector<Index> empty_groups;
  for (Index c = 0; c < m; ++c)
    if (sys.group(c).empty()) empty_groups.push_back(c);
  report.add("interest groups nonempty", empty_groups.empty(),
             empty_groups.empty() ? "" : "no agent interested in components " + format_indices(empty_groups));

  const auto g = sys.grammian();
  const auto spec = min_eigenvalue(g);
  if (spec.lambda_min) {
    std::ostringstream os;
    os << "lambda_min(G) = " << *spec.lambda_min;
    report.add("global observability", *spec.lambda_min > Scalar(kObservabilityThreshold), os.str());
  } else {
    Eigen::SimplicialLDLT<SparseMatrix<Scalar>> ldlt(g);
    bool ok = ldlt.info() == Eigen::Success && ldlt.vectorD().size() == m &&
              ldlt.vectorD().cwiseAbs().minCoeff() > Scalar(kObservabilityThreshold);
    report.add("global observability", ok, "lambda_min unavailable; decided by LDLT pivots");
  }
  return report;
}

/// Clean stacked measurement H theta*.
template <typename Scalar>
Vector<Scalar> stack_measurements(const FieldSystem<Scalar>& sys) {
  Vector<Scalar> y(sys.measurement_count());
  for (const auto& a : sys.agents())
    if (a.rows() > 0) y.segment(a.row_offset, a.rows()) = a.matrix * sys.field();
  return y;
}

/// Stacked measurement H theta* + a for a dense disturbance a of length P.
template <typename Scalar>
Vector<Scalar> stack_measurements(const FieldSystem<Scalar>& sys, const Vector<Scalar>& disturbance) {
  if (disturbance.size() != sys.measurement_count())
    throw std::invalid_argument("disturbance length " + std::to_string(disturbance.size()) +
                                " differs from measurement count " + std::to_string(sys.measurement_count()));
  Vector<Scalar> y = stack_measurements(sys);
  for (Index p = 0; p < y.size(); ++p)
    if (disturbance[p] != Scalar(0)) y[p] += disturbance[p];
  return y;
}

/// H_n with every column outside the interest set removed (P_n x |I_n|).
/// Throws std::invalid_argument if a coupled column would be dropped.
template <typename Scalar>
SparseRowMatrix<Scalar> restrict_columns(const AgentMeasurement<Scalar>& agent, const InterestSet& interest) {
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (Index r = 0; r < agent.matrix.outerSize(); ++r)
    for (typename SparseRowMatrix<Scalar>::InnerIterator it(agent.matrix, r); it; ++it) {
      if (it.value() == Scalar(0)) continue;
      auto pos = interest.position(it.col());
      if (!pos)
        throw std::invalid_argument("restrict_columns: coupled component " + std::to_string(it.col() + 1) +
                                    " is not in the interest set");
      trips.emplace_back(r, *pos, it.value());
    }
  SparseRowMatrix<Scalar> hc(agent.rows(), interest.size());
  hc.setFromTriplets(trips.begin(), trips.end());
  return hc;
}

}  // namespace fieldrec

#endif  // FIELDREC_FIELD_MODEL_HPP
