#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

using namespace fieldrec;
using testing::e;
using testing::rows;
using testing::vec;

namespace {

FieldSystem<double> selector_system(Index m, const std::vector<Index>& comps) {
  std::vector<std::vector<double>> dense;
  for (Index c : comps) dense.push_back(e(m, c));
  Vector<double> field = Vector<double>::LinSpaced(m, 1.0, static_cast<double>(m));
  return testing::single_agent(field, dense);
}

// Random all-selector instance with 1..12 compromised rows.
FieldSystem<double> random_selector_system(std::mt19937_64& rng, std::vector<Index>* compromised) {
  const Index m = 1 + static_cast<Index>(rng() % 6);
  const Index p = 1 + static_cast<Index>(rng() % 24);
  std::vector<Index> comps;
  for (Index k = 0; k < p; ++k) comps.push_back(static_cast<Index>(rng() % static_cast<std::uint64_t>(m)));
  const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(std::min<Index>(12, p)));
  std::vector<Index> all(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  compromised->assign(all.begin(), all.begin() + k);
  std::sort(compromised->begin(), compromised->end());
  return selector_system(m, comps);
}

}  // namespace

TEST_CASE("apply_attack examples") {
  const auto sys = testing::single_agent(vec({3.0, 100.0}), {e(2, 0), e(2, 1)});

  const auto clean = apply_attack(sys, AttackSpec<double>::none());
  CHECK(clean.measurements == stack_measurements(sys));
  CHECK(clean.compromised.empty());

  const auto add = apply_attack(sys, AttackSpec<double>::additive({{0, 2.0}}));
  CHECK(add.measurements[0] == 5.0);
  CHECK(add.measurements[1] == 100.0);
  CHECK(add.compromised == std::vector<Index>{0});

  const auto over = apply_attack(sys, AttackSpec<double>::override_to({1}, 255.0));
  CHECK(over.measurements[1] == 255.0);
  CHECK(over.disturbance[1] == 155.0);
  CHECK(over.measurements == stack_measurements(sys, over.disturbance));
}

TEST_CASE("ineffective attacks leave the compromised set") {
  const auto sys = testing::single_agent(vec({255.0, 7.0}), {e(2, 0), e(2, 1)});
  const auto over = apply_attack(sys, AttackSpec<double>::override_to({0, 1}, 255.0));
  CHECK(over.compromised == std::vector<Index>{1});
  CHECK(over.ineffective == std::vector<Index>{0});
  const auto zero = apply_attack(sys, AttackSpec<double>::additive({{0, 0.0}}));
  CHECK(zero.compromised.empty());
  CHECK_THROWS_AS(apply_attack(sys, AttackSpec<double>::additive({{2, 1.0}})), std::invalid_argument);
}

TEST_CASE("uncompromised entries are bit-identical to clean readings") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto s = random_instance(seed);
    const auto clean = stack_measurements(s.system);
    const auto out = apply_attack(s.system, s.attack);
    for (Index p = 0; p < clean.size(); ++p) {
      const bool hit = std::binary_search(out.compromised.begin(), out.compromised.end(), p);
      if (!hit) CHECK(std::memcmp(&clean[p], &out.measurements[p], sizeof(double)) == 0);
      else CHECK(out.disturbance[p] != 0.0);
    }
  }
}

TEST_CASE("delta examples") {
  const double s = 1 / std::sqrt(2.0);
  const auto one = testing::single_agent(vec({1.0, 2.0}), {{s, s}, e(2, 0), e(2, 1)});
  CHECK(delta_A(one, {0}).value == doctest::Approx(1));
  CHECK(delta_A(one, {1, 2}).value == doctest::Approx(std::sqrt(2.0)));

  const auto twin = testing::single_agent(vec({1.0, 2.0}), {{0.6, 0.8}, {0.6, 0.8}, e(2, 0), e(2, 1)});
  CHECK(delta_A(twin, {0, 1}).value == doctest::Approx(2));
  CHECK(delta_A(twin, {}).value == 0.0);
  CHECK(delta_A(twin, {0, 1}).exact);
}

TEST_CASE("enumeration equals the selector closed form") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 100; ++k) {
    std::vector<Index> a;
    const auto sys = random_selector_system(rng, &a);
    const double enumerated = delta_by_enumeration(detail::compromised_block(sys, a));
    const auto closed = delta_selector_closed_form(sys, a);
    REQUIRE(closed.has_value());
    CHECK(std::abs(enumerated - *closed) <= 1e-10);
  }
}

TEST_CASE("delta lies between one and |A|") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto s = random_instance(seed);
    const auto out = apply_attack(s.system, s.attack);
    if (out.compromised.empty()) continue;
    const auto d = delta_A(s.system, out.compromised);
    CHECK(d.value <= static_cast<double>(out.compromised.size()) + 1e-12);
    CHECK(d.value >= 1.0 - 1e-12);
  }
}

TEST_CASE("large compromised sets use the closed form or the bound") {
  std::vector<Index> comps, a;
  for (Index k = 0; k < 30; ++k) {
    comps.push_back(k % 3);
    a.push_back(k);
  }
  const auto sel = selector_system(3, comps);
  const auto d = delta_A(sel, a);
  CHECK(d.exact);
  CHECK(d.value == doctest::Approx(std::sqrt(3.0 * 100.0)));

  std::vector<std::vector<double>> dense(25, {0.6, 0.8});
  const auto mixed = testing::single_agent(vec({1.0, 2.0}), dense);
  std::vector<Index> all(25);
  for (Index k = 0; k < 25; ++k) all[static_cast<std::size_t>(k)] = k;
  const auto b = delta_A(mixed, all);
  CHECK_FALSE(b.exact);
  CHECK(b.value == 25.0);
}

TEST_CASE("resilience condition is strict") {
  const auto free = selector_system(2, {0, 1});
  const auto r0 = resilience_check(free, {});
  CHECK(r0.holds);
  CHECK(r0.delta == 0.0);

  const auto four = selector_system(2, {0, 0, 1, 1});
  const auto r1 = resilience_check(four, {0});
  CHECK(*r1.lambda_min == 1.0);
  CHECK(r1.delta == 1.0);
  CHECK_FALSE(r1.holds);
  CHECK(r1.exact);
  CHECK(r1.margin == 0.0);

  const auto six = selector_system(2, {0, 0, 0, 1, 1, 1});
  const auto r2 = resilience_check(six, {0});
  CHECK(*r2.lambda_min == 2.0);
  CHECK(r2.holds);
  CHECK(r2.margin == doctest::Approx(1.0));
}

TEST_CASE("override_agents covers every row of the listed agents") {
  FieldSystem<double> sys(vec({1.0, 2.0}), {rows(2, {e(2, 0)}), rows(2, {e(2, 0), e(2, 1)})},
                          {InterestSet::full(2), InterestSet::full(2)});
  const auto spec = override_agents(sys, {1}, 255.0);
  CHECK(spec.mode == AttackMode::Override);
  CHECK(spec.values.size() == 2);
  CHECK(spec.values.count(1) == 1);
  CHECK(spec.values.count(2) == 1);
  CHECK_THROWS_AS(override_agents(sys, {2}, 1.0), std::invalid_argument);
}

TEST_CASE("float instantiation of delta") {
  Matrix<float> r(2, 2);
  r << 1, 0, 0, 1;
  CHECK(delta_by_enumeration(r) == doctest::Approx(std::sqrt(2.0f)));
}
