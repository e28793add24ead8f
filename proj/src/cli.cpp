#include "fieldrec/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace fieldrec {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string preset = "full";
  std::string algorithm;
  std::optional<std::uint64_t> seed;
  std::optional<Index> iters;
  Index snapshot_every = 0;
  unsigned threads = 1;
  std::optional<double> tau;
};

GridScenarioParams preset_params(const std::string& name) {
  GridScenarioParams p;
  if (name == "full") return p;
  if (name == "reduced") {
    p.grid_side = 115;
    p.agent_rows = p.agent_cols = 10;
    p.attacked_count = 11;
  } else if (name == "desk") {
    p.grid_side = 55;
    p.agent_rows = p.agent_cols = 5;
    p.measurement_window = 15;
    p.interest_window = 25;
    p.attacked_count = 2;
  } else if (name == "tiny") {
    p.grid_side = 3;
    p.agent_rows = p.agent_cols = 3;
    p.measurement_window = 3;
    p.interest_window = 3;
    p.attacked_agents = {0};
    p.iterations = 5000;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected full, reduced, desk or tiny)");
  }
  return p;
}

Scenario load(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  Scenario s = load_scenario(o.config, o.seed);
  if (o.iters) s.iterations = *o.iters;
  if (!o.algorithm.empty()) s.algorithm = parse_algorithm(o.algorithm);
  if (s.iterations < 0) throw ConfigError("--iters must be nonnegative");
  return s;
}

fs::path output_dir(const Options& o) {
  const fs::path dir = o.out.empty() ? fs::path("fieldrec-out") : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  return f;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

SimulationTrace<double> simulate(const Scenario& s, Algorithm algorithm, const Options& o,
                                 const AttackOutcome<double>& attack) {
  RunOptions ro;
  ro.iterations = s.iterations;
  ro.algorithm = algorithm;
  ro.snapshot_every = o.snapshot_every;
  ro.threads = o.threads;
  ro.digest = scenario_digest(s, algorithm, s.iterations);
  return run(s.system, s.graph, attack.measurements, s.hyper, ro);
}

int cmd_generate(const Options& o, std::ostream& out) {
  GridScenarioParams p;
  if (!o.config.empty()) {
    p = grid_params_from_json(read_json_file(o.config), fs::path(o.config).parent_path());
  } else {
    p = preset_params(o.preset);
  }
  if (o.seed) p.seed = *o.seed;
  if (o.iters) p.iterations = *o.iters;
  Scenario s = generate_grid_scenario(p);
  if (!o.algorithm.empty()) s.algorithm = parse_algorithm(o.algorithm);
  if (o.out.empty() || o.out == "-") {
    out << to_json(s).dump(1) << '\n';
    return 0;
  }
  fs::path target = o.out;
  if (target.extension() != ".json") {
    fs::create_directories(target);
    target /= "scenario.json";
  } else if (target.has_parent_path()) {
    fs::create_directories(target.parent_path());
  }
  write_scenario(target, s);
  out << "wrote " << target.string() << " (N=" << s.system.agent_count() << ", M=" << s.system.field_size()
      << ", P=" << s.system.measurement_count() << ", attacked agents=" << s.attacked_agents.size() << ")\n";
  return 0;
}

int cmd_run(const Options& o, std::ostream& out) {
  const Scenario s = load(o);
  const auto attack = apply_attack(s.system, s.attack);
  const auto trace = simulate(s, s.algorithm, o, attack);
  const fs::path dir = output_dir(o);
  const double tau = o.tau.value_or(0.5 * s.hyper.tau_gamma);

  auto trace_csv = open_out(dir / "trace.csv");
  write_trace_csv(trace_csv, trace, true);
  auto errors_csv = open_out(dir / "errors.csv");
  write_error_series_csv(errors_csv, trace, tau);
  auto field_csv = open_out(dir / "field.csv");
  write_field_csv(field_csv, worst_case_field(trace.final_state, s.system), s.system, s.grid);
  if (!trace.snapshots.empty()) {
    fs::create_directories(dir / "snapshots");
    for (const auto& [t, state] : trace.snapshots) {
      auto f = open_out(dir / "snapshots" / ("state_" + std::to_string(t) + ".csv"));
      write_state_csv(f, state, s.system);
    }
  }

  double worst_ratio = 0.0;
  for (const auto& st : trace.steps)
    if (st.gamma > 0) worst_ratio = std::max(worst_ratio, st.innovation.max_applied / st.gamma);
  const auto& last = trace.records.back();
  std::ostringstream summary;
  summary << "digest: " << trace.digest << '\n'
          << "algorithm: " << to_string(trace.algorithm) << '\n'
          << "agents: " << s.system.agent_count() << '\n'
          << "field size: " << s.system.field_size() << '\n'
          << "measurements: " << s.system.measurement_count() << '\n'
          << "compromised measurements: " << attack.compromised.size() << '\n'
          << "iterations: " << last.iteration << '\n'
          << "final max normalized rmse: " << num(last.max_normalized_rmse) << '\n'
          << "final consensus error: " << num(last.consensus_error) << '\n'
          << "final average error: " << num(last.average_error) << '\n'
          << "max applied innovation / gamma: " << num(worst_ratio) << '\n';
  auto f = open_out(dir / "summary.txt");
  f << summary.str();
  out << summary.str();
  return 0;
}

int cmd_verify(const Options& o, std::ostream& out) {
  const Scenario s = load(o);
  bool ok = true;
  auto line = [&](const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": " + detail) << '\n';
    ok = ok && pass;
  };

  const auto validation = validate_system(s.system);
  for (const auto& c : validation.checks) line("system/" + c.name, c.passed, c.detail);
  const auto topology = check_topology(s.graph, s.system);
  for (const auto& c : topology.report.checks) line("topology/" + c.name, c.passed, c.detail);

  const auto attack = apply_attack(s.system, s.attack);
  const auto res = resilience_check(s.system, attack.compromised);
  std::string detail = "compromised=" + std::to_string(attack.compromised.size()) + " lambda_min=" +
                       (res.lambda_min ? num(*res.lambda_min) : std::string("unavailable")) +
                       " delta=" + num(res.delta) + (res.exact ? " (exact)" : " (bound)");
  line("resilience", res.holds, detail);
  if (res.lambda_min) out << "kappa: " << num(res.margin) << '\n';

  if (validation.passed() && topology.passed()) {
    constexpr Index kOracleLimit = 20000;
    constexpr Index kOracleRounds = 100;
    double diff;
    std::string where;
    if (s.system.agent_count() * s.system.field_size() <= kOracleLimit) {
      diff = oracle_discrepancy(s.system, s.graph, attack.measurements, s.hyper, s.algorithm, kOracleRounds);
      where = "scenario";
    } else {
      const auto inst = random_instance(o.seed.value_or(1));
      const auto y = apply_attack(inst.system, inst.attack).measurements;
      diff = oracle_discrepancy(inst.system, inst.graph, y, s.hyper, s.algorithm, kOracleRounds);
      where = "reduced random instance";
    }
    line("oracle-equivalence", diff < 1e-9, where + ", max abs difference " + num(diff));
  }
  return ok ? 0 : 3;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const Scenario s = load(o);
  const auto attack = apply_attack(s.system, s.attack);
  Options plain = o;
  plain.snapshot_every = 0;
  const auto resilient = simulate(s, Algorithm::Resilient, plain, attack);
  const auto cirfe = simulate(s, Algorithm::Cirfe, plain, attack);
  const fs::path dir = output_dir(o);
  auto f = open_out(dir / "compare.csv");
  write_compare_csv(f, resilient, cirfe);
  out << "iterations: " << s.iterations << '\n'
      << "resilient final max normalized rmse: " << num(resilient.records.back().max_normalized_rmse) << '\n'
      << "cirfe final max normalized rmse: " << num(cirfe.records.back().max_normalized_rmse) << '\n'
      << "wrote " << (dir / "compare.csv").string() << '\n';
  return 0;
}

void report_error(std::ostream& err, const char* category, const std::string& message) {
  std::string flat = message;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  err << "error: category=" << category << " message=\"" << flat << "\"\n";
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Resilient distributed field recovery"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Scenario or grid-generator config (JSON)");
    sub->add_option("--out", o.out, "Output directory (scenario file path for generate)");
    sub->add_option("--seed", o.seed, "Seed for the field, the attacked agents and random instances");
    sub->add_option("--iters", o.iters, "Number of iterations")->check(CLI::NonNegativeNumber);
    sub->add_option("--algorithm", o.algorithm, "resilient or cirfe")->check(CLI::IsMember({"resilient", "cirfe"}));
  };
  auto* gen = app.add_subcommand("generate", "Write a generated grid scenario file");
  add_common(gen);
  gen->add_option("--preset", o.preset, "full, reduced, desk or tiny (ignored with --config)");
  auto* run_cmd = app.add_subcommand("run", "Simulate and write trace, error series, field dump and summary");
  add_common(run_cmd);
  run_cmd->add_option("--snapshot-every", o.snapshot_every, "Write per-agent states every N iterations")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--threads", o.threads, "Worker threads per round")->check(CLI::PositiveNumber);
  run_cmd->add_option("--tau", o.tau, "Exponent of the scaled error columns (default tau_gamma/2)");
  auto* verify = app.add_subcommand("verify", "Check assumptions, resilience condition and oracle equivalence");
  add_common(verify);
  auto* compare = app.add_subcommand("compare", "Run resilient and cirfe on the same scenario");
  add_common(compare);
  compare->add_option("--threads", o.threads, "Worker threads per round")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "config", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_generate(o, out);
    if (*run_cmd) return cmd_run(o, out);
    if (*verify) return cmd_verify(o, out);
    return cmd_compare(o, out);
  } catch (const ConfigError& e) {
    report_error(err, "config", e.what());
    return 2;
  } catch (const AssumptionViolation& e) {
    report_error(err, "assumption", e.what());
    return 3;
  } catch (const std::exception& e) {
    report_error(err, "runtime", e.what());
    return 4;
  }
}

}  // namespace fieldrec
