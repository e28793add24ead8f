#ifndef FIELDREC_SCENARIO_HPP
#define FIELDREC_SCENARIO_HPP

#include "fieldrec/attack.hpp"
#include "fieldrec/simulation.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include <json.hpp>

namespace fieldrec {

/// Square field grid with agents on a regular lattice.
struct GridScenarioParams {
  Index grid_side = 230;
  Index agent_rows = 20;
  Index agent_cols = 20;
  Index measurement_window = 37;
  Index interest_window = 73;
  Index attacked_count = 45;
  std::vector<Index> attacked_agents;  // explicit choice (0-based); overrides the seeded pick when nonempty
  double override_value = 255.0;
  double comm_radius = 1.0;
  Index field_bumps = 8;
  std::optional<std::filesystem::path> field_file;
  std::uint64_t seed = 1;
  HyperParams<double> hyper;
  Index iterations = 200;

  /// Throws ConfigError on inconsistent parameters.
  void validate() const;
};

struct GridGeometry {
  Index rows = 0;
  Index cols = 0;
};

struct Scenario {
  FieldSystem<double> system;
  CommGraph graph;
  AttackSpec<double> attack;
  std::vector<Index> attacked_agents;
  HyperParams<double> hyper;
  Index iterations = 200;
  Algorithm algorithm = Algorithm::Resilient;
  std::optional<GridGeometry> grid;
};

/// Inclusive cell range [lo, hi] along one axis covered by the window of
/// side `window` around agent `index` out of `agents` on a grid of `side`.
std::pair<Index, Index> window_span(Index index, Index agents, Index side, Index window);

/// Seeded smooth field on a side x side grid, integer valued in [0, 255].
Vector<double> smooth_field(Index side, Index bumps, std::uint64_t seed);

/// Deterministic pick of k distinct agents out of n (first k of a seeded shuffle).
std::vector<Index> pick_attacked_agents(Index n, Index k, std::uint64_t seed);

/// Builds the grid system, mesh graph and override attack. Throws
/// ConfigError on bad parameters and AssumptionViolation listing the cells or
/// components that break coverage, the standing assumptions or G_m
/// connectivity.
Scenario generate_grid_scenario(const GridScenarioParams& params);

/// Small random instance satisfying the standing assumptions: random
/// connected graph, connected interest groups, unit-norm rows supported
/// inside each agent's interest set, and a random additive or override attack.
Scenario random_instance(std::uint64_t seed, Index max_agents = 10, Index max_field = 30);

GridScenarioParams grid_params_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json to_json(const GridScenarioParams& p);

/// Explicit scenario document (1-based indices throughout).
nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

/// Parses a file; syntax errors become ConfigError with line/column.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// A config is either an explicit scenario or a document with a
/// "grid_scenario" section, which is generated on load.
Scenario load_scenario(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});

void write_scenario(const std::filesystem::path& path, const Scenario& s);

HyperParams<double> hyper_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HyperParams<double>& hp);

/// FNV-1a digest of the canonical scenario document and run settings.
std::string scenario_digest(const Scenario& s, Algorithm algorithm, Index iterations);

/// Per cell, the estimate of the interested agent farthest from the truth.
struct WorstCaseField {
  Vector<double> value;
  Vector<double> error;  // |value - theta*|
};

WorstCaseField worst_case_field(const RoundState<double>& round, const FieldSystem<double>& sys);

void write_trace_csv(std::ostream& os, const SimulationTrace<double>& trace, bool with_algorithm);
void write_error_series_csv(std::ostream& os, const SimulationTrace<double>& trace, double tau);
void write_field_csv(std::ostream& os, const WorstCaseField& field, const FieldSystem<double>& sys,
                     const std::optional<GridGeometry>& grid);
void write_compare_csv(std::ostream& os, const SimulationTrace<double>& resilient, const SimulationTrace<double>& cirfe);
void write_state_csv(std::ostream& os, const RoundState<double>& round, const FieldSystem<double>& sys);

/// Command-line entry point; returns the process exit status
/// (0 ok, 2 config error, 3 assumption violation, 4 runtime failure).
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fieldrec

#endif  // FIELDREC_SCENARIO_HPP
