#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

using namespace fieldrec;
using testing::e;
using testing::rows;
using testing::vec;

namespace {

HyperParams<double> random_hyper(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HyperParams<double> hp;
  hp.a = 0.1 + 2 * u(rng);
  hp.b = 0.01 + u(rng);
  hp.Gamma = 1 + 100 * u(rng);
  hp.tau1 = 0.05 + 0.9 * u(rng);
  hp.tau2 = hp.tau1 * (0.01 + 0.9 * u(rng));
  hp.tau_gamma = (hp.tau1 - hp.tau2) * (0.01 + 0.98 * u(rng));
  return hp;
}

RoundState<double> random_round(std::mt19937_64& rng, const FieldSystem<double>& sys, Index t) {
  std::uniform_real_distribution<double> u(-300, 300);
  RoundState<double> r;
  r.iteration = t;
  for (Index n = 0; n < sys.agent_count(); ++n) {
    Vector<double> x(sys.interest(n).size());
    for (Index i = 0; i < x.size(); ++i) x[i] = u(rng);
    r.states.push_back(x);
  }
  return r;
}

}  // namespace

TEST_CASE("schedule values") {
  const auto hp = HyperParams<double>::defaults();
  CHECK(alpha(0, hp) == 1.0);
  CHECK(beta(0, hp) == doctest::Approx(0.084));
  CHECK(gamma_threshold(0, hp) == 40.0);
  CHECK(alpha(3, hp) == doctest::Approx(0.697372).epsilon(1e-5));
  CHECK(gamma_threshold(15, hp) == doctest::Approx(20.0).epsilon(1e-14));
}

TEST_CASE("schedules are positive and nonincreasing") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto hp = random_hyper(rng);
    REQUIRE_NOTHROW(hp.validate());
    for (Index t = 0; t < 2000; t += 7) {
      CHECK(alpha(t, hp) > 0);
      CHECK(beta(t, hp) > 0);
      CHECK(gamma_threshold(t, hp) > 0);
      CHECK(alpha(t + 1, hp) <= alpha(t, hp));
      CHECK(beta(t + 1, hp) <= beta(t, hp));
      CHECK(gamma_threshold(t + 1, hp) <= gamma_threshold(t, hp));
    }
  }
}

TEST_CASE("gamma alpha / beta decreases under valid hyperparameters") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const auto hp = random_hyper(rng);
    auto ratio = [&](Index t) { return gamma_threshold(t, hp) * alpha(t, hp) / beta(t, hp); };
    for (Index t = 1; t < 5000; t += 13) CHECK(ratio(t + 1) < ratio(t));
  }
}

TEST_CASE("hyperparameter validation") {
  auto hp = HyperParams<double>::defaults();
  CHECK_NOTHROW(hp.validate());
  hp.tau_gamma = hp.tau1 - hp.tau2;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = HyperParams<double>::defaults();
  hp.tau2 = hp.tau1;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = HyperParams<double>::defaults();
  hp.a = 0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = HyperParams<double>::defaults();
  hp.tau1 = 1.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  CHECK(parse_algorithm("cirfe") == Algorithm::Cirfe);
  CHECK_THROWS_AS(parse_algorithm("kalman"), ConfigError);
}

TEST_CASE("censorship examples") {
  const InterestSet in({1, 4, 6}), il({4, 6, 8});
  const auto xl = vec({10.0, 20.0, 30.0});
  CHECK(censor_received(xl, il, in) == vec({0.0, 10.0, 20.0}));
  CHECK(censor_received(xl, il, il) == xl);
  CHECK(censor_received(xl, il, InterestSet({0, 2})).isZero(0));

  const auto xn = vec({1.0, 2.0, 3.0});
  CHECK(censor_self(xn, in, il) == vec({0.0, 2.0, 3.0}));
  CHECK(censor_self(xn, in, InterestSet({0, 1, 4, 6, 9})) == xn);
  CHECK(censor_self(xn, in, InterestSet({0, 2})).isZero(0));
}

TEST_CASE("censorship never moves untracked components") {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto s = random_instance(seed);
    const auto round = random_round(rng, s.system, 0);
    for (Index n = 0; n < s.system.agent_count(); ++n)
      for (Index l : s.graph.neighbors(n)) {
        const auto& in = s.system.interest(n);
        const auto& il = s.system.interest(l);
        const auto& xn = round.states[static_cast<std::size_t>(n)];
        const auto& xl = round.states[static_cast<std::size_t>(l)];
        const Vector<double> d = censor_self(xn, in, il) - censor_received(xl, il, in);
        for (Index i = 0; i < in.size(); ++i) {
          if (auto j = il.position(in[i]))
            CHECK(d[i] == xn[i] - xl[*j]);
          else
            CHECK(d[i] == 0.0);
        }
      }
  }
}

TEST_CASE("gain matrix examples") {
  const auto h = rows(1, {{1.0}});
  const auto x = vec({0.0});
  CHECK(gain_matrix(h, x, vec({10.0}), 40.0).diagonal()[0] == 1.0);
  CHECK(gain_matrix(h, x, vec({80.0}), 40.0).diagonal()[0] == 0.5);
  CHECK(gain_matrix(h, x, vec({-80.0}), 40.0).diagonal()[0] == 0.5);
  CHECK(gain_matrix(h, x, vec({0.0}), 40.0).diagonal()[0] == 1.0);
  CHECK(gain_matrix(h, x, vec({80.0}), 15, HyperParams<double>::defaults()).diagonal()[0] == 0.25);
}

TEST_CASE("state update examples") {
  SUBCASE("isolated agent with a large threshold jumps to its reading") {
    const auto sys = testing::single_agent(vec({5.0}), {{1.0}});
    const RecoveryNetwork<double> net(sys, CommGraph(1), stack_measurements(sys));
    auto hp = HyperParams<double>::defaults();
    hp.Gamma = 1e6;
    CHECK(state_update(net, 0, net.initial_state(), hp)[0] == 5.0);
    hp.Gamma = 2.0;
    CHECK(state_update(net, 0, net.initial_state(), hp)[0] == 2.0);
    CHECK(cirfe_update(net, 0, net.initial_state(), hp)[0] == 5.0);
  }
  SUBCASE("two agents without measurements pull together") {
    FieldSystem<double> sys(vec({0.0}), {SparseRowMatrix<double>(0, 1), SparseRowMatrix<double>(0, 1)},
                            {InterestSet::full(1), InterestSet::full(1)});
    const RecoveryNetwork<double> net(sys, CommGraph(2, {{0, 1}}), Vector<double>(0));
    RoundState<double> r{0, {vec({0.0}), vec({4.0})}};
    CHECK(state_update(net, 0, r, HyperParams<double>::defaults())[0] == doctest::Approx(0.336).epsilon(1e-15));
    CHECK(state_update(net, 1, r, HyperParams<double>::defaults())[0] == doctest::Approx(4 - 0.336).epsilon(1e-15));
  }
}

TEST_CASE("the true field is a fixed point without attack") {
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto s = random_instance(seed);
    const RecoveryNetwork<double> net(s.system, s.graph, stack_measurements(s.system));
    RoundState<double> truth;
    truth.iteration = static_cast<Index>(rng() % 1000);
    for (Index n = 0; n < s.system.agent_count(); ++n)
      truth.states.push_back(gather_state(s.system.field(), s.system.interest(n)));
    for (auto alg : {Algorithm::Resilient, Algorithm::Cirfe}) {
      const auto next = net.step(truth, HyperParams<double>::defaults(), alg);
      CHECK(next.iteration == truth.iteration + 1);
      for (std::size_t n = 0; n < truth.states.size(); ++n) CHECK(next.states[n] == truth.states[n]);
    }
  }
}

TEST_CASE("applied innovations never exceed the threshold") {
  std::mt19937_64 rng(9);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto s = random_instance(seed);
    const auto y = apply_attack(s.system, s.attack).measurements;
    const RecoveryNetwork<double> net(s.system, s.graph, y);
    const auto hp = HyperParams<double>::defaults();
    for (Index t : {0, 3, 100, 5000}) {
      const auto round = random_round(rng, s.system, t);
      InnovationStats<double> stats;
      net.step(round, hp, Algorithm::Resilient, 1, &stats);
      CHECK(stats.max_applied <= gamma_threshold(t, hp));
      for (Index n = 0; n < s.system.agent_count(); ++n) {
        const auto& x = round.states[static_cast<std::size_t>(n)];
        const auto& yn = net.measurements(n);
        const Vector<double> r = yn - net.restricted(n) * x;
        const Vector<double> applied = gain_matrix(net.restricted(n), x, yn, t, hp) * r;
        if (applied.size()) CHECK(applied.cwiseAbs().maxCoeff() <= gamma_threshold(t, hp) * (1 + 1e-15));
      }
    }
  }
}

TEST_CASE("rounds are deterministic across thread counts") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = random_instance(seed);
    const auto y = apply_attack(s.system, s.attack).measurements;
    const RecoveryNetwork<double> net(s.system, s.graph, y);
    const auto hp = HyperParams<double>::defaults();
    auto a = net.initial_state(), b = a;
    for (int t = 0; t < 50; ++t) {
      InnovationStats<double> sa, sb;
      a = net.step(a, hp, Algorithm::Resilient, 1, &sa);
      b = net.step(b, hp, Algorithm::Resilient, 4, &sb);
      CHECK(sa.max_applied == sb.max_applied);
      CHECK(sa.saturated == sb.saturated);
    }
    for (std::size_t n = 0; n < a.states.size(); ++n)
      CHECK(std::memcmp(a.states[n].data(), b.states[n].data(), sizeof(double) * a.states[n].size()) == 0);
  }
}

TEST_CASE("scalar agent converges monotonically") {
  const auto sys = testing::single_agent(vec({200.0}), {{1.0}});
  const RecoveryNetwork<double> net(sys, CommGraph(1), stack_measurements(sys));
  auto r = net.initial_state();
  double prev = std::abs(r.states[0][0] - 200.0);
  for (int t = 0; t < 500; ++t) {
    r = net.step(r, HyperParams<double>::defaults(), Algorithm::Resilient);
    const double err = std::abs(r.states[0][0] - 200.0);
    CHECK(err <= prev);
    prev = err;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("malformed snapshots are rejected") {
  const auto s = random_instance(3);
  const RecoveryNetwork<double> net(s.system, s.graph, stack_measurements(s.system));
  auto r = net.initial_state();
  r.states.pop_back();
  CHECK_THROWS_AS(net.step(r, HyperParams<double>::defaults(), Algorithm::Resilient), RuntimeFailure);
  r = net.initial_state();
  r.states[0] = Vector<double>::Zero(r.states[0].size() + 1);
  CHECK_THROWS_AS(net.agent_update(0, r, HyperParams<double>::defaults(), Algorithm::Resilient), RuntimeFailure);
  CHECK_THROWS_AS(RecoveryNetwork<double>(s.system, CommGraph(1), stack_measurements(s.system)), ConfigError);
}

TEST_CASE("long double rounds") {
  using LD = long double;
  FieldSystem<LD> sys(vec<LD>({5.0L}), {rows<LD>(1, {{1.0L}})}, {InterestSet::full(1)});
  const RecoveryNetwork<LD> net(sys, CommGraph(1), stack_measurements(sys));
  auto hp = HyperParams<LD>::defaults();
  const auto next = net.step(net.initial_state(), hp, Algorithm::Resilient);
  CHECK(next.states[0][0] == 5.0L);
}
