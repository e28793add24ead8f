#include "fieldrec/scenario.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace fieldrec {

using nlohmann::json;

namespace {

// mt19937_64 output is fully specified by the standard; the distributions are
// not, so uniform draws and shuffles are done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream) : engine_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL))) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return v % n;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

constexpr std::uint64_t kFieldStream = 1;
constexpr std::uint64_t kAttackStream = 2;
constexpr std::uint64_t kInstanceStream = 3;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json ranges_of(const std::vector<Index>& comps) {
  json out = json::array();
  std::size_t k = 0;
  while (k < comps.size()) {
    std::size_t e = k;
    while (e + 1 < comps.size() && comps[e + 1] == comps[e] + 1) ++e;
    out.push_back({comps[k] + 1, comps[e] + 1});
    k = e + 1;
  }
  return out;
}

// Accepts {"ranges": [[lo,hi],...]}, {"components": [...]}, a bare array of
// components, or the string "all". Returns 0-based ascending components.
std::vector<Index> component_list(const json& j, Index field_size, const std::string& where) {
  std::vector<Index> out;
  auto add = [&](Index c) {
    if (c < 1 || c > field_size)
      throw ConfigError(where + ": component " + std::to_string(c) + " outside 1.." + std::to_string(field_size));
    out.push_back(c - 1);
  };
  if (j.is_string()) {
    if (j.get<std::string>() != "all") throw ConfigError(where + ": expected \"all\", a list or ranges");
    for (Index c = 1; c <= field_size; ++c) add(c);
  } else if (j.is_array()) {
    for (const auto& c : j) add(c.get<Index>());
  } else if (j.contains("ranges")) {
    for (const auto& r : j.at("ranges")) {
      const auto lo = r.at(0).get<Index>(), hi = r.at(1).get<Index>();
      if (hi < lo) throw ConfigError(where + ": empty range [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
      for (Index c = lo; c <= hi; ++c) add(c);
    }
  } else if (j.contains("components")) {
    for (const auto& c : j.at("components")) add(c.get<Index>());
  } else {
    throw ConfigError(where + ": expected \"all\", a list, {\"ranges\": ...} or {\"components\": ...}");
  }
  return out;
}

std::vector<Index> sorted_unique(std::vector<Index> v, const std::string& where) {
  std::sort(v.begin(), v.end());
  if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw ConfigError(where + ": duplicate component");
  return v;
}

}  // namespace

void GridScenarioParams::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("grid_scenario: " + m); };
  if (grid_side < 1) fail("grid_side must be >= 1");
  if (agent_rows < 1 || agent_cols < 1) fail("agent grid dimensions must be >= 1");
  if (measurement_window < 1) fail("measurement_window must be >= 1");
  if (interest_window < measurement_window) fail("interest_window must be >= measurement_window");
  const Index n = agent_rows * agent_cols;
  if (attacked_agents.empty() && (attacked_count < 0 || attacked_count > n))
    fail("attacked_count must be in 0.." + std::to_string(n));
  for (Index a : attacked_agents)
    if (a < 0 || a >= n) fail("attacked agent " + std::to_string(a + 1) + " out of range");
  if (!std::isfinite(override_value)) fail("override_value must be finite");
  if (!(comm_radius >= 1.0)) fail("comm_radius must be >= 1");
  if (field_bumps < 1) fail("field bumps must be >= 1");
  if (iterations < 0) fail("iterations must be >= 0");
  hyper.validate();
}

std::pair<Index, Index> window_span(Index index, Index agents, Index side, Index window) {
  const double spacing = static_cast<double>(side) / static_cast<double>(agents);
  const auto center = static_cast<Index>(std::floor((static_cast<double>(index) + 0.5) * spacing));
  const Index lo = center - window / 2;
  const Index hi = lo + window - 1;
  return {std::max<Index>(lo, 0), std::min<Index>(hi, side - 1)};
}

Vector<double> smooth_field(Index side, Index bumps, std::uint64_t seed) {
  Rng rng(seed, kFieldStream);
  struct Bump {
    double r, c, sigma, amp;
  };
  std::vector<Bump> bs;
  const double g = static_cast<double>(side);
  for (Index k = 0; k < bumps; ++k) {
    Bump b{};
    b.r = rng.uniform(0.0, g);
    b.c = rng.uniform(0.0, g);
    b.sigma = rng.uniform(g / 8.0, g / 3.0);
    b.amp = rng.uniform(-1.0, 1.0);
    bs.push_back(b);
  }
  Vector<double> f = Vector<double>::Zero(side * side);
  for (Index r = 0; r < side; ++r)
    for (Index c = 0; c < side; ++c) {
      double v = 0.0;
      for (const auto& b : bs) {
        const double dr = static_cast<double>(r) - b.r, dc = static_cast<double>(c) - b.c;
        v += b.amp * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
      }
      f[r * side + c] = v;
    }
  const double lo = f.minCoeff(), hi = f.maxCoeff();
  for (Index m = 0; m < f.size(); ++m) f[m] = hi > lo ? std::round((f[m] - lo) / (hi - lo) * 255.0) : 0.0;
  return f;
}

std::vector<Index> pick_attacked_agents(Index n, Index k, std::uint64_t seed) {
  std::vector<Index> ids(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  Rng rng(seed, kAttackStream);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

Vector<double> load_field_file(const std::filesystem::path& path, Index expected) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field file " + path.string());
  std::vector<double> vals;
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
      }
    }
  }
  if (static_cast<Index>(vals.size()) != expected)
    throw ConfigError(path.string() + ": expected " + std::to_string(expected) + " values, found " +
                      std::to_string(vals.size()));
  return Eigen::Map<Vector<double>>(vals.data(), static_cast<Index>(vals.size()));
}

}  // namespace

Scenario generate_grid_scenario(const GridScenarioParams& p) {
  p.validate();
  const Index side = p.grid_side;
  const Index m_total = side * side;
  const Index n_agents = p.agent_rows * p.agent_cols;

  Vector<double> field =
      p.field_file ? load_field_file(*p.field_file, m_total) : smooth_field(side, p.field_bumps, p.seed);

  std::vector<SparseRowMatrix<double>> matrices;
  std::vector<InterestSet> interests;
  std::vector<Index> coverage(static_cast<std::size_t>(m_total), 0);
  for (Index i = 0; i < p.agent_rows; ++i)
    for (Index j = 0; j < p.agent_cols; ++j) {
      const auto mr = window_span(i, p.agent_rows, side, p.measurement_window);
      const auto mc = window_span(j, p.agent_cols, side, p.measurement_window);
      const auto ir = window_span(i, p.agent_rows, side, p.interest_window);
      const auto ic = window_span(j, p.agent_cols, side, p.interest_window);
      std::vector<Eigen::Triplet<double>> trips;
      Index row = 0;
      for (Index r = mr.first; r <= mr.second; ++r)
        for (Index c = mc.first; c <= mc.second; ++c) {
          trips.emplace_back(row++, r * side + c, 1.0);
          ++coverage[static_cast<std::size_t>(r * side + c)];
        }
      SparseRowMatrix<double> h(row, m_total);
      h.setFromTriplets(trips.begin(), trips.end());
      matrices.push_back(std::move(h));
      std::vector<Index> comps;
      for (Index r = ir.first; r <= ir.second; ++r)
        for (Index c = ic.first; c <= ic.second; ++c) comps.push_back(r * side + c);
      interests.emplace_back(std::move(comps));
    }

  std::vector<Index> unmeasured;
  for (Index m = 0; m < m_total; ++m)
    if (coverage[static_cast<std::size_t>(m)] == 0) unmeasured.push_back(m);
  if (!unmeasured.empty())
    throw AssumptionViolation("grid_scenario: cells " + format_indices(unmeasured) + " are not measured by any agent");

  Scenario s{FieldSystem<double>(std::move(field), std::move(matrices), std::move(interests)),
             grid_mesh(p.agent_rows, p.agent_cols, p.comm_radius),
             {},
             {},
             p.hyper,
             p.iterations,
             Algorithm::Resilient,
             GridGeometry{side, side}};

  const auto validation = validate_system(s.system);
  if (!validation.passed()) throw AssumptionViolation("grid_scenario: " + validation.failures());
  const auto topology = check_topology(s.graph, s.system);
  if (!topology.passed()) throw AssumptionViolation("grid_scenario: " + topology.report.failures());

  s.attacked_agents = p.attacked_agents.empty() ? pick_attacked_agents(n_agents, p.attacked_count, p.seed)
                                                : sorted_unique(p.attacked_agents, "attacked_agents");
  s.attack = override_agents(s.system, s.attacked_agents, p.override_value);
  return s;
}

Scenario random_instance(std::uint64_t seed, Index max_agents, Index max_field) {
  if (max_agents < 1 || max_field < 1) throw std::invalid_argument("random_instance: sizes must be >= 1");
  Rng rng(seed, kInstanceStream);
  auto pick = [&](Index lo, Index hi) { return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
  const Index n = pick(std::min<Index>(2, max_agents), max_agents);
  const Index m = pick(std::min<Index>(n, max_field), max_field);

  // random spanning tree plus a few chords
  std::vector<Edge> edges;
  for (Index v = 1; v < n; ++v) edges.emplace_back(pick(0, v - 1), v);
  for (Index k = 0; k < n; ++k) {
    const Index u = pick(0, n - 1), v = pick(0, n - 1);
    if (u == v) continue;
    const Edge e{std::min(u, v), std::max(u, v)};
    if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(e);
  }
  CommGraph graph(n, edges);

  // each J_m grows as a connected blob from a random seed agent
  std::vector<std::vector<char>> member(static_cast<std::size_t>(m), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (Index c = 0; c < m; ++c) {
    auto& in = member[static_cast<std::size_t>(c)];
    std::vector<Index> blob{pick(0, n - 1)};
    in[static_cast<std::size_t>(blob[0])] = 1;
    const Index target = pick(1, n);
    while (static_cast<Index>(blob.size()) < target) {
      const Index from = blob[static_cast<std::size_t>(pick(0, static_cast<Index>(blob.size()) - 1))];
      const auto& nb = graph.neighbors(from);
      const Index to = nb[static_cast<std::size_t>(pick(0, static_cast<Index>(nb.size()) - 1))];
      if (!in[static_cast<std::size_t>(to)]) {
        in[static_cast<std::size_t>(to)] = 1;
        blob.push_back(to);
      }
    }
  }
  // agents left without interest join a group that already holds a neighbour
  for (bool changed = true; changed;) {
    changed = false;
    for (Index a = 0; a < n; ++a) {
      bool has = false;
      for (Index c = 0; c < m && !has; ++c) has = member[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)];
      if (has) continue;
      for (Index c = 0; c < m && !changed; ++c)
        for (Index b : graph.neighbors(a))
          if (member[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)]) {
            member[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)] = 1;
            changed = true;
            break;
          }
    }
  }

  std::vector<InterestSet> interests;
  std::vector<std::vector<std::pair<std::vector<Index>, std::vector<double>>>> rows(static_cast<std::size_t>(n));
  for (Index a = 0; a < n; ++a) {
    std::vector<Index> comps;
    for (Index c = 0; c < m; ++c)
      if (member[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)]) comps.push_back(c);
    interests.emplace_back(comps);
  }
  // one selector per component for observability, then random dense rows
  for (Index c = 0; c < m; ++c) {
    std::vector<Index> holders;
    for (Index a = 0; a < n; ++a)
      if (member[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)]) holders.push_back(a);
    const Index a = holders[static_cast<std::size_t>(pick(0, static_cast<Index>(holders.size()) - 1))];
    rows[static_cast<std::size_t>(a)].push_back({{c}, {1.0}});
  }
  for (Index a = 0; a < n; ++a) {
    const auto& comps = interests[static_cast<std::size_t>(a)].components();
    for (Index k = pick(0, 2); k > 0; --k) {
      std::vector<Index> support;
      for (Index j = pick(1, std::min<Index>(3, static_cast<Index>(comps.size()))); j > 0; --j) {
        const Index c = comps[static_cast<std::size_t>(pick(0, static_cast<Index>(comps.size()) - 1))];
        if (std::find(support.begin(), support.end(), c) == support.end()) support.push_back(c);
      }
      std::sort(support.begin(), support.end());
      std::vector<double> vals;
      double norm = 0.0;
      for (std::size_t j = 0; j < support.size(); ++j) {
        double v = rng.uniform(-1.0, 1.0);
        if (std::abs(v) < 0.1) v = v < 0 ? -0.1 : 0.1;
        vals.push_back(v);
        norm += v * v;
      }
      for (double& v : vals) v /= std::sqrt(norm);
      rows[static_cast<std::size_t>(a)].push_back({support, vals});
    }
  }
  std::vector<SparseRowMatrix<double>> matrices;
  for (Index a = 0; a < n; ++a) {
    const auto& rs = rows[static_cast<std::size_t>(a)];
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t r = 0; r < rs.size(); ++r)
      for (std::size_t j = 0; j < rs[r].first.size(); ++j)
        trips.emplace_back(static_cast<Index>(r), rs[r].first[j], rs[r].second[j]);
    SparseRowMatrix<double> h(static_cast<Index>(rs.size()), m);
    h.setFromTriplets(trips.begin(), trips.end());
    matrices.push_back(std::move(h));
  }
  Vector<double> field(m);
  for (Index c = 0; c < m; ++c) field[c] = std::round(rng.uniform(0.0, 255.0));

  FieldSystem<double> sys(std::move(field), std::move(matrices), std::move(interests));
  AttackSpec<double> attack;
  attack.mode = rng.uniform() < 0.5 ? AttackMode::Additive : AttackMode::Override;
  const Index p_total = sys.measurement_count();
  for (Index k = pick(0, std::max<Index>(1, p_total / 3)); k > 0; --k) {
    const Index p = pick(0, p_total - 1);
    attack.values[p] =
        attack.mode == AttackMode::Additive ? rng.uniform(-100.0, 100.0) : std::round(rng.uniform(0.0, 255.0));
  }
  return Scenario{std::move(sys), std::move(graph), std::move(attack), {}, HyperParams<double>{}, 100,
                  Algorithm::Resilient, std::nullopt};
}

HyperParams<double> hyper_from_json(const json& j) {
  HyperParams<double> hp;
  for (const auto& [key, v] : j.items()) {
    const double x = v.get<double>();
    if (key == "a") hp.a = x;
    else if (key == "b") hp.b = x;
    else if (key == "tau1") hp.tau1 = x;
    else if (key == "tau2") hp.tau2 = x;
    else if (key == "Gamma") hp.Gamma = x;
    else if (key == "tau_gamma") hp.tau_gamma = x;
    else throw ConfigError("hyperparameters: unknown key '" + key + "'");
  }
  hp.validate();
  return hp;
}

json to_json(const HyperParams<double>& hp) {
  return {{"a", hp.a}, {"b", hp.b}, {"tau1", hp.tau1}, {"tau2", hp.tau2}, {"Gamma", hp.Gamma}, {"tau_gamma", hp.tau_gamma}};
}

GridScenarioParams grid_params_from_json(const json& j, const std::filesystem::path& base) {
  GridScenarioParams p;
  try {
    const json& g = j.at("grid_scenario");
    p.grid_side = g.value("grid_side", p.grid_side);
    p.agent_rows = g.value("agent_rows", p.agent_rows);
    p.agent_cols = g.value("agent_cols", p.agent_cols);
    p.measurement_window = g.value("measurement_window", p.measurement_window);
    p.interest_window = g.value("interest_window", p.interest_window);
    p.attacked_count = g.value("attacked_count", p.attacked_count);
    if (g.contains("attacked_agents"))
      for (const auto& a : g.at("attacked_agents")) p.attacked_agents.push_back(a.get<Index>() - 1);
    p.override_value = g.value("override_value", p.override_value);
    p.comm_radius = g.value("comm_radius", p.comm_radius);
    p.seed = g.value("seed", p.seed);
    if (g.contains("field")) {
      const json& f = g.at("field");
      if (f.contains("file")) {
        std::filesystem::path fp = f.at("file").get<std::string>();
        p.field_file = fp.is_absolute() ? fp : base / fp;
      } else {
        if (f.value("generator", std::string("smooth")) != "smooth")
          throw ConfigError("grid_scenario.field: only the 'smooth' generator is available");
        p.field_bumps = f.value("bumps", p.field_bumps);
      }
    }
    if (j.contains("hyperparameters")) p.hyper = hyper_from_json(j.at("hyperparameters"));
    if (j.contains("run")) p.iterations = j.at("run").value("iterations", p.iterations);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid_scenario: ") + e.what());
  }
  p.validate();
  return p;
}

json to_json(const GridScenarioParams& p) {
  json g = {{"grid_side", p.grid_side},
            {"agent_rows", p.agent_rows},
            {"agent_cols", p.agent_cols},
            {"measurement_window", p.measurement_window},
            {"interest_window", p.interest_window},
            {"attacked_count", p.attacked_count},
            {"override_value", p.override_value},
            {"comm_radius", p.comm_radius},
            {"seed", p.seed}};
  if (!p.attacked_agents.empty()) {
    json ids = json::array();
    for (Index a : p.attacked_agents) ids.push_back(a + 1);
    g["attacked_agents"] = ids;
  }
  if (p.field_file)
    g["field"] = {{"file", p.field_file->string()}};
  else
    g["field"] = {{"generator", "smooth"}, {"bumps", p.field_bumps}};
  return {{"grid_scenario", g}, {"hyperparameters", to_json(p.hyper)}, {"run", {{"iterations", p.iterations}}}};
}

json to_json(const Scenario& s) {
  const auto& sys = s.system;
  json field = {{"size", sys.field_size()}, {"values", json::array()}};
  for (Index m = 0; m < sys.field_size(); ++m) field["values"].push_back(sys.field()[m]);

  json agents = json::array();
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& a = sys.agent(n);
    json agent = {{"id", n + 1}};
    std::vector<Index> selectors;
    bool all_selectors = true;
    for (Index r = 0; r < a.rows() && all_selectors; ++r) {
      Index comp = -1;
      all_selectors = is_selector_row(a.matrix, r, &comp) && a.matrix.coeff(r, comp) == 1.0 &&
                      (selectors.empty() || comp > selectors.back());
      selectors.push_back(comp);
    }
    if (all_selectors) {
      agent["selectors"] = {{"ranges", ranges_of(selectors)}};
    } else {
      json trips = json::array();
      for (Index r = 0; r < a.rows(); ++r)
        for (SparseRowMatrix<double>::InnerIterator it(a.matrix, r); it; ++it)
          trips.push_back({r + 1, it.col() + 1, it.value()});
      agent["rows"] = a.rows();
      agent["triplets"] = trips;
    }
    agent["interest"] = {{"ranges", ranges_of(sys.interest(n).components())}};
    agents.push_back(agent);
  }

  json edges = json::array();
  for (auto [u, v] : s.graph.edges()) edges.push_back({u + 1, v + 1});

  json attack;
  if (s.attack.empty()) {
    attack = {{"mode", "none"}};
  } else {
    const bool override_mode = s.attack.mode == AttackMode::Override;
    bool agent_form = override_mode && !s.attacked_agents.empty();
    if (agent_form) {
      const double target = s.attack.values.begin()->second;
      const auto expected = override_agents(sys, s.attacked_agents, target);
      agent_form = expected.values == s.attack.values;
    }
    if (agent_form) {
      json ids = json::array();
      for (Index a : s.attacked_agents) ids.push_back(a + 1);
      attack = {{"mode", "override"}, {"target", s.attack.values.begin()->second}, {"agents", ids}};
    } else {
      json ms = json::array();
      for (const auto& [p, v] : s.attack.values) ms.push_back({p + 1, v});
      attack = {{"mode", override_mode ? "override" : "additive"}, {"measurements", ms}};
    }
  }

  json doc = {{"format", "fieldrec-scenario"},
              {"version", 1},
              {"field", field},
              {"agents", agents},
              {"graph", {{"vertices", s.graph.vertex_count()}, {"edges", edges}}},
              {"attack", attack},
              {"hyperparameters", to_json(s.hyper)},
              {"run", {{"iterations", s.iterations}, {"algorithm", std::string(to_string(s.algorithm))}}}};
  if (s.grid) doc["grid"] = {{"rows", s.grid->rows}, {"cols", s.grid->cols}};
  return doc;
}

Scenario scenario_from_json(const json& j) {
  try {
    if (j.value("format", std::string("fieldrec-scenario")) != "fieldrec-scenario")
      throw ConfigError("unknown scenario format '" + j.value("format", std::string()) + "'");

    const json& f = j.at("field");
    const Index m = f.at("size").get<Index>();
    if (m < 1) throw ConfigError("field.size must be >= 1");
    Vector<double> field;
    if (f.contains("values")) {
      const auto& vals = f.at("values");
      if (static_cast<Index>(vals.size()) != m)
        throw ConfigError("field.values has " + std::to_string(vals.size()) + " entries, field.size is " +
                          std::to_string(m));
      field.resize(m);
      for (Index k = 0; k < m; ++k) field[k] = vals.at(static_cast<std::size_t>(k)).get<double>();
    } else {
      const json& g = f.at("generator");
      const Index side = g.at("side").get<Index>();
      if (side * side != m) throw ConfigError("field.generator.side^2 must equal field.size");
      field = smooth_field(side, g.value("bumps", Index{8}), g.value("seed", std::uint64_t{1}));
    }

    std::vector<SparseRowMatrix<double>> matrices;
    std::vector<InterestSet> interests;
    const auto& agents = j.at("agents");
    for (std::size_t k = 0; k < agents.size(); ++k) {
      const json& a = agents[k];
      const std::string where = "agents[" + std::to_string(k) + "]";
      if (a.contains("id") && a.at("id").get<Index>() != static_cast<Index>(k) + 1)
        throw ConfigError(where + ": agent ids must be 1..N in order");
      std::vector<Eigen::Triplet<double>> trips;
      Index rows = 0;
      if (a.contains("selectors")) {
        for (Index c : component_list(a.at("selectors"), m, where + ".selectors")) trips.emplace_back(rows++, c, 1.0);
      } else if (a.contains("triplets")) {
        for (const auto& t : a.at("triplets")) {
          const auto r = t.at(0).get<Index>(), c = t.at(1).get<Index>();
          if (r < 1 || c < 1 || c > m) throw ConfigError(where + ".triplets: index out of range");
          trips.emplace_back(r - 1, c - 1, t.at(2).get<double>());
          rows = std::max(rows, r);
        }
        if (a.contains("rows")) {
          const auto declared = a.at("rows").get<Index>();
          if (declared < rows) throw ConfigError(where + ".rows is smaller than the largest triplet row");
          rows = declared;
        }
      }
      SparseRowMatrix<double> h(rows, m);
      h.setFromTriplets(trips.begin(), trips.end());
      matrices.push_back(std::move(h));
      interests.emplace_back(sorted_unique(component_list(a.at("interest"), m, where + ".interest"), where + ".interest"));
    }
    if (matrices.empty()) throw ConfigError("scenario needs at least one agent");
    const auto n = static_cast<Index>(matrices.size());

    FieldSystem<double> sys(std::move(field), std::move(matrices), std::move(interests));

    CommGraph graph;
    const json& g = j.at("graph");
    if (g.contains("generator")) {
      if (g.at("generator").get<std::string>() != "grid-mesh")
        throw ConfigError("graph.generator: only 'grid-mesh' is available");
      graph = grid_mesh(g.at("rows").get<Index>(), g.at("cols").get<Index>(), g.value("radius", 1.0));
    } else {
      std::vector<Edge> edges;
      for (const auto& e : g.at("edges")) edges.emplace_back(e.at(0).get<Index>() - 1, e.at(1).get<Index>() - 1);
      try {
        graph = CommGraph(g.value("vertices", n), std::move(edges));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }

    AttackSpec<double> attack;
    std::vector<Index> attacked_agents;
    if (j.contains("attack")) {
      const json& at = j.at("attack");
      const std::string mode = at.value("mode", std::string("none"));
      if (mode != "none") {
        if (mode != "override" && mode != "additive") throw ConfigError("attack.mode must be none, override or additive");
        const auto amode = mode == "override" ? AttackMode::Override : AttackMode::Additive;
        if (at.contains("agents")) {
          for (const auto& id : at.at("agents")) {
            const auto a = id.get<Index>();
            if (a < 1 || a > n) throw ConfigError("attack.agents: agent " + std::to_string(a) + " out of range");
            attacked_agents.push_back(a - 1);
          }
          attacked_agents = sorted_unique(attacked_agents, "attack.agents");
          const double v = at.at(amode == AttackMode::Override ? "target" : "value").get<double>();
          attack = override_agents(sys, attacked_agents, v);
          attack.mode = amode;
        } else {
          attack.mode = amode;
          for (const auto& e : at.at("measurements")) {
            const auto p = e.at(0).get<Index>();
            if (p < 1 || p > sys.measurement_count())
              throw ConfigError("attack.measurements: index " + std::to_string(p) + " out of range");
            attack.values[p - 1] = e.at(1).get<double>();
          }
        }
      }
    }

    HyperParams<double> hp;
    if (j.contains("hyperparameters")) hp = hyper_from_json(j.at("hyperparameters"));

    Index iterations = 200;
    Algorithm algorithm = Algorithm::Resilient;
    if (j.contains("run")) {
      iterations = j.at("run").value("iterations", iterations);
      algorithm = parse_algorithm(j.at("run").value("algorithm", std::string("resilient")));
    }
    std::optional<GridGeometry> grid;
    if (j.contains("grid")) {
      grid = GridGeometry{j.at("grid").at("rows").get<Index>(), j.at("grid").at("cols").get<Index>()};
      if (grid->rows * grid->cols != sys.field_size()) throw ConfigError("grid.rows * grid.cols must equal field.size");
    }
    return Scenario{std::move(sys), std::move(graph), std::move(attack), std::move(attacked_agents),
                    hp,             iterations,       algorithm,         grid};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  const json doc = read_json_file(path);
  if (doc.contains("grid_scenario")) {
    auto params = grid_params_from_json(doc, path.parent_path());
    if (seed_override) params.seed = *seed_override;
    auto s = generate_grid_scenario(params);
    if (doc.contains("run") && doc.at("run").contains("algorithm"))
      s.algorithm = parse_algorithm(doc.at("run").at("algorithm").get<std::string>());
    return s;
  }
  return scenario_from_json(doc);
}

void write_scenario(const std::filesystem::path& path, const Scenario& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << to_json(s).dump(1) << '\n';
}

std::string scenario_digest(const Scenario& s, Algorithm algorithm, Index iterations) {
  // the run section is replaced by the settings actually used
  auto doc = to_json(s);
  doc.erase("run");
  const std::string text = doc.dump() + "|" + std::string(to_string(algorithm)) + "|" + std::to_string(iterations);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

WorstCaseField worst_case_field(const RoundState<double>& round, const FieldSystem<double>& sys) {
  const Index m = sys.field_size();
  WorstCaseField out{Vector<double>::Constant(m, std::nan("")), Vector<double>::Constant(m, -1.0)};
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& interest = sys.interest(n);
    const auto& x = round.states[static_cast<std::size_t>(n)];
    for (Index i = 0; i < interest.size(); ++i) {
      const Index c = interest[i];
      const double err = std::abs(x[i] - sys.field()[c]);
      if (err > out.error[c]) {
        out.error[c] = err;
        out.value[c] = x[i];
      }
    }
  }
  return out;
}

void write_trace_csv(std::ostream& os, const SimulationTrace<double>& trace, bool with_algorithm) {
  os << "# digest: " << trace.digest << '\n';
  os << "iteration,max_normalized_rmse" << (with_algorithm ? ",algorithm" : "") << '\n';
  for (const auto& r : trace.records) {
    os << r.iteration << ',' << fmt(r.max_normalized_rmse);
    if (with_algorithm) os << ',' << to_string(trace.algorithm);
    os << '\n';
  }
}

void write_error_series_csv(std::ostream& os, const SimulationTrace<double>& trace, double tau) {
  os << "# digest: " << trace.digest << '\n';
  os << "# algorithm: " << to_string(trace.algorithm) << '\n';
  os << "# tau: " << fmt(tau) << " (scaled columns are (t+1)^tau * value)\n";
  os << "iteration,consensus_error,average_error,max_local_rmse,"
        "scaled_consensus_error,scaled_average_error,scaled_max_local_rmse\n";
  for (const auto& r : trace.records) {
    const double s = std::pow(static_cast<double>(r.iteration + 1), tau);
    os << r.iteration << ',' << fmt(r.consensus_error) << ',' << fmt(r.average_error) << ','
       << fmt(r.max_normalized_rmse) << ',' << fmt(s * r.consensus_error) << ',' << fmt(s * r.average_error) << ','
       << fmt(s * r.max_normalized_rmse) << '\n';
  }
}

void write_field_csv(std::ostream& os, const WorstCaseField& field, const FieldSystem<double>& sys,
                     const std::optional<GridGeometry>& grid) {
  os << "row,col,true,recovered,abs_error\n";
  for (Index m = 0; m < sys.field_size(); ++m) {
    const Index row = grid ? m / grid->cols + 1 : m + 1;
    const Index col = grid ? m % grid->cols + 1 : 1;
    os << row << ',' << col << ',' << fmt(sys.field()[m]) << ',' << fmt(field.value[m]) << ',' << fmt(field.error[m])
       << '\n';
  }
}

void write_compare_csv(std::ostream& os, const SimulationTrace<double>& resilient, const SimulationTrace<double>& cirfe) {
  if (resilient.records.size() != cirfe.records.size()) throw RuntimeFailure("compare: traces differ in length");
  os << "# digest: " << resilient.digest << '\n';
  os << "iteration,resilient_max_normalized_rmse,cirfe_max_normalized_rmse\n";
  for (std::size_t k = 0; k < resilient.records.size(); ++k)
    os << resilient.records[k].iteration << ',' << fmt(resilient.records[k].max_normalized_rmse) << ','
       << fmt(cirfe.records[k].max_normalized_rmse) << '\n';
}

void write_state_csv(std::ostream& os, const RoundState<double>& round, const FieldSystem<double>& sys) {
  os << "# iteration: " << round.iteration << '\n';
  os << "agent,component,estimate\n";
  for (Index n = 0; n < sys.agent_count(); ++n) {
    const auto& interest = sys.interest(n);
    for (Index i = 0; i < interest.size(); ++i)
      os << n + 1 << ',' << interest[i] + 1 << ',' << fmt(round.states[static_cast<std::size_t>(n)][i]) << '\n';
  }
}

}  // namespace fieldrec
