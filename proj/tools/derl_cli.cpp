// derl: command-line front end for the temperature-ladder experiments.
//
//   derl validate         [--config F | --builtin N | --mdp F]
//   derl policy-limit     [--config F] [--builtin N] [--seed S] [--out D]
//   derl return-dist      [...] [--precision 64|32]
//   derl occupancy-limit  [...]
//   derl properties       [--seed S] [--out D]
//   derl stability        [...]
//
// Exit codes: 0 success, 1 failed property or check, 2 configuration or I/O error.

#include "derl/builtins.hpp"
#include "derl/experiments.hpp"
#include "derl/io.hpp"
#include "derl/mdp.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace derl;

struct Options {
  std::string config;
  std::string builtin;
  std::string mdp;
  std::optional<std::uint64_t> seed;
  std::string out;
  int precision = 64;
};

// Config file if given, else defaults; command-line flags override either.
ExperimentConfig make_config(const Options& o, std::vector<double> default_ladder) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else {
    cfg.temperatures = std::move(default_ladder);
  }
  if (!o.builtin.empty()) {
    cfg.builtin = o.builtin;
    cfg.mdp_path.reset();
  }
  if (!o.mdp.empty()) {
    cfg.mdp_path = o.mdp;
    cfg.builtin.reset();
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

void print_tv(const PolicyLimitResult& r) {
  std::printf("%-8s %-12s %-12s %-12s %-12s\n", "tau", "coupled", "decoupled", "sql-coupled", "sql-decoupled");
  for (const auto& rung : r.rungs)
    std::printf("%-8.0e %-12.4g %-12.4g %-12.4g %-12.4g\n", rung.tau, rung.tv_coupled, rung.tv_decoupled,
                rung.tv_sql_coupled, rung.tv_sql_decoupled);
}

int cmd_validate(const Options& o) {
  MdpBundle bundle;
  if (!o.mdp.empty()) {
    bundle = load_mdp(o.mdp);
  } else {
    ExperimentConfig cfg;
    if (!o.config.empty()) cfg = load_config(o.config);
    if (!o.builtin.empty()) {
      cfg.builtin = o.builtin;
      cfg.mdp_path.reset();
    }
    if (!cfg.builtin && !cfg.mdp_path) throw ConfigError(ConfigError::Kind::Validation, "", "nothing to validate");
    bundle = resolve_mdp(cfg, "");
  }
  validate_bundle(bundle);
  std::printf("ok: %td states, %td actions, gamma %g\n", bundle.mdp.n_states, bundle.mdp.n_actions,
              bundle.mdp.discount);
  return 0;
}

int cmd_policy_limit(const Options& o) {
  const auto cfg = make_config(o, decade_ladder(1, 9));
  const auto r = run_policy_limit_experiment(cfg, resolve_mdp(cfg, "tristate"));
  print_tv(r);
  return 0;
}

int cmd_return_dist(const Options& o) {
  auto cfg = make_config(o, decade_ladder(1, 9, 2));
  if (!cfg.grid) cfg.grid = GridSpec{};
  const auto r = run_return_distribution_experiment(cfg, resolve_mdp(cfg, "return-demo"), o.precision);
  std::printf("%-8s %-8s %-6s %-12s %-12s\n", "tau", "target", "state", "coupled_w1", "decoupled_w1");
  for (const auto& rung : r.rungs)
    for (std::size_t x = 0; x < rung.coupled_w1.size(); ++x)
      std::printf("%-8.0e %-8.2g %-6zu %-12.4g %-12.4g\n", rung.tau, rung.target, x, rung.coupled_w1[x],
                  rung.decoupled_w1[x]);
  return 0;
}

int cmd_occupancy_limit(const Options& o) {
  const auto cfg = make_config(o, decade_ladder(1, 9));
  const auto r = run_occupancy_limit_check(cfg, resolve_mdp(cfg, "tristate"));
  std::printf("%-8s %-14s %-12s\n", "tau", "R(mu)", "flow_residual");
  for (const auto& rung : r.rungs) std::printf("%-8.0e %-14.10g %-12.3g\n", rung.tau, rung.regularizer, rung.flow_residual);
  std::printf("minimizer R %.10g over %td grid points; final TV %.3g; monotone %s\n", r.minimizer_regularizer,
              r.grid_points, r.final_tv_to_minimizer, r.regularizer_monotone ? "yes" : "no");
  std::printf("%s\n", r.passed ? "PASS" : "FAIL");
  return r.passed ? 0 : 1;
}

int cmd_properties(const Options& o) {
  const auto cfg = make_config(o, decade_ladder(1, 1));
  const auto report = run_property_suite(cfg);
  for (const auto& p : report.outcomes)
    std::printf("%-4s %-36s %6td cases  worst margin %.3g\n", p.passed() ? "ok" : "FAIL", p.name.c_str(), p.cases,
                p.worst_margin);
  return report.passed() ? 0 : 1;
}

int cmd_stability(const Options& o) {
  const auto cfg = make_config(o, {1e-1});
  const auto r = run_stability_experiment(cfg, resolve_mdp(cfg, "mean-tie"));
  std::printf("last sup W1 between iterates: soft %.3g, classic %.3g\n", r.soft.successive_w1.back(),
              r.classic.successive_w1.back());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-regularized distributional dynamic programming experiments"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Experiment config (JSON)");
  app.add_option("--builtin", o.builtin, "Builtin MDP: tristate, return-demo, mean-tie");
  app.add_option("--mdp", o.mdp, "MDP JSON file");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--precision", o.precision, "Floating-point width for return-dist")->check(CLI::IsMember({32, 64}));

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"validate", "Validate an MDP or config", cmd_validate},
      {"policy-limit", "Coupled vs decoupled policy limits (policies.csv, tv.csv)", cmd_policy_limit},
      {"return-dist", "Soft distributional return estimation (distributions.csv, summary.csv)", cmd_return_dist},
      {"occupancy-limit", "Occupancy-measure limit check (occupancy.csv)", cmd_occupancy_limit},
      {"properties", "Randomized property sweeps (report.json)", cmd_properties},
      {"stability", "Soft vs classic distributional control on mean-tie (trace.csv, iterates.csv)", cmd_stability},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) return c.run(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error";
    if (!e.pointer().empty()) std::cerr << " at " << e.pointer();
    std::cerr << ": " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
