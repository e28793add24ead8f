#ifndef FIELDREC_TESTS_HELPERS_HPP
#define FIELDREC_TESTS_HELPERS_HPP

#include "fieldrec/scenario.hpp"

#include <cstring>
#include <random>

namespace testing {

using fieldrec::Index;
using fieldrec::InterestSet;

template <typename Scalar = double>
fieldrec::SparseRowMatrix<Scalar> rows(Index cols, const std::vector<std::vector<Scalar>>& dense) {
  fieldrec::SparseRowMatrix<Scalar> h(static_cast<Index>(dense.size()), cols);
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (std::size_t r = 0; r < dense.size(); ++r)
    for (std::size_t c = 0; c < dense[r].size(); ++c)
      if (dense[r][c] != Scalar(0)) trips.emplace_back(static_cast<Index>(r), static_cast<Index>(c), dense[r][c]);
  h.setFromTriplets(trips.begin(), trips.end());
  return h;
}

// 0-based component c of M as a selector row
inline std::vector<double> e(Index m, Index c) {
  std::vector<double> v(static_cast<std::size_t>(m), 0.0);
  v[static_cast<std::size_t>(c)] = 1.0;
  return v;
}

template <typename Scalar = double>
fieldrec::Vector<Scalar> vec(std::initializer_list<Scalar> v) {
  fieldrec::Vector<Scalar> out(static_cast<Index>(v.size()));
  Index k = 0;
  for (Scalar x : v) out[k++] = x;
  return out;
}

// One agent holding all the given rows, interested in everything.
inline fieldrec::FieldSystem<double> single_agent(const fieldrec::Vector<double>& field,
                                                  const std::vector<std::vector<double>>& dense) {
  const Index m = field.size();
  return fieldrec::FieldSystem<double>(field, {rows(m, dense)}, {InterestSet::full(m)});
}

// One selector row per agent, everyone interested in everything.
inline fieldrec::FieldSystem<double> one_row_per_agent(const fieldrec::Vector<double>& field,
                                                       const std::vector<std::vector<double>>& dense) {
  const Index m = field.size();
  std::vector<fieldrec::SparseRowMatrix<double>> hs;
  std::vector<InterestSet> is;
  for (const auto& r : dense) {
    hs.push_back(rows(m, {r}));
    is.push_back(InterestSet::full(m));
  }
  return fieldrec::FieldSystem<double>(field, std::move(hs), std::move(is));
}

inline std::vector<Index> agent_rows_of(const fieldrec::FieldSystem<double>& sys, Index n) {
  std::vector<Index> out;
  for (Index r = 0; r < sys.agent(n).rows(); ++r) out.push_back(sys.global_index(n, r));
  return out;
}

}  // namespace testing

#endif
