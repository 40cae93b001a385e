#pragma once

// Temperature-ladder experiments behind the command-line tool. Each runner
// returns its results in memory and, when cfg.output_dir is non-empty,
// writes the corresponding CSV files there.

#include "derl/distributional.hpp"
#include "derl/io.hpp"
#include "derl/soft.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace derl {

/// The MDP named by cfg (mdp_path or builtin), falling back to `default_builtin`.
MdpBundle resolve_mdp(const ExperimentConfig& cfg, const std::string& default_builtin);

/// sigma = tau^exponent.
double decoupled_temperature(const ExperimentConfig& cfg, double tau);

/// pi*_ref from reference value iteration at cfg.solver_tolerance.
Policy<double> filtered_reference_policy(const MdpBundle& bundle, double tolerance);

// ---------------------------------------------------------------------------
// Policy limits
// ---------------------------------------------------------------------------

struct PolicyLimitRung {
  double tau = 0;
  double sigma = 0;
  Policy<double> coupled;    // G_tau q*_tau
  Policy<double> decoupled;  // G_tau q*_sigma
  std::optional<Policy<double>> sql_coupled;    // G_tau of soft Q-learning at tau
  std::optional<Policy<double>> sql_decoupled;  // G_tau of soft Q-learning at sigma
  double tv_coupled = 0;
  double tv_decoupled = 0;
  double tv_sql_coupled = 0;
  double tv_sql_decoupled = 0;
};

struct PolicyLimitResult {
  QFunction<double> q_ref;
  Policy<double> pistarref;
  std::vector<PolicyLimitRung> rungs;
};

/// Writes policies.csv (tau, sigma, method, state, action, prob) and tv.csv (tau, method, sup_tv_to_pistarref).
PolicyLimitResult run_policy_limit_experiment(const ExperimentConfig& cfg, const MdpBundle& bundle);

// ---------------------------------------------------------------------------
// Return distributions
// ---------------------------------------------------------------------------

struct ReturnDistributionRung {
  double tau = 0;     // control temperature, also the coupled evaluation temperature
  double target = 0;  // decoupled evaluation temperature tau^(1 / exponent)
  Policy<double> coupled_policy;    // G_tau q_hat
  Policy<double> decoupled_policy;  // G_target q_hat
  ReturnDistributionFn<double> coupled;
  ReturnDistributionFn<double> decoupled;
  StateReturnDistribution<double> coupled_eta;
  StateReturnDistribution<double> decoupled_eta;
  std::vector<double> coupled_w1;    // per state, W1 to the oracle
  std::vector<double> decoupled_w1;
  double max_clipped_mass = 0;
};

struct ReturnDistributionResult {
  int precision = 64;
  Policy<double> pistarref;
  std::vector<DiscreteDistribution<double>> oracle;  // per state, Monte-Carlo law under pi*_ref
  std::vector<double> oracle_std_error;              // standard error of each oracle mean
  std::vector<ReturnDistributionRung> rungs;
};

/**
 * For every ladder temperature tau: n_control soft control steps at tau from
 * a point mass at 0, mean extraction, then n_eval evaluation steps with
 * G_tau q_hat at tau (coupled) and with G_target q_hat at target (decoupled,
 * so that tau = target^exponent). precision selects 64- or 32-bit arithmetic
 * for the dynamic programming; the oracle is always 64-bit.
 * Writes distributions.csv and summary.csv.
 */
ReturnDistributionResult run_return_distribution_experiment(const ExperimentConfig& cfg, const MdpBundle& bundle,
                                                            int precision = 64);

// ---------------------------------------------------------------------------
// Occupancy limit
// ---------------------------------------------------------------------------

struct OccupancyRung {
  double tau = 0;
  OccupancyMeasure<double> occupancy;
  double regularizer = 0;
  double flow_residual = 0;
};

struct OccupancyLimitResult {
  std::vector<OccupancyRung> rungs;
  std::vector<Policy<double>> optimal_deterministic;
  Eigen::VectorXd minimizer_weights;
  OccupancyMeasure<double> minimizer;
  double minimizer_regularizer = 0;
  Index grid_points = 0;
  double max_flow_residual = 0;
  bool regularizer_monotone = false;  // R(mu*_tau) grows (weakly) as tau shrinks
  double final_tv_to_minimizer = 0;
  bool passed = false;
};

/// Enumerates deterministic policies supported on the reference-optimal actions of q_ref.
std::vector<Policy<double>> optimal_deterministic_policies(const QFunction<double>& q_ref,
                                                           const Policy<double>& reference);

/// Writes occupancy.csv (kind, tau, state, action, mass, regularizer, flow_residual).
OccupancyLimitResult run_occupancy_limit_check(const ExperimentConfig& cfg, const MdpBundle& bundle);

// ---------------------------------------------------------------------------
// Mean-tie stability traces
// ---------------------------------------------------------------------------

struct StabilityResult {
  IterateTrace<double> soft;
  IterateTrace<double> classic;
};

/// Soft (at cfg.temperatures.front()) and classic distributional value iteration
/// for n_control steps. Writes trace.csv and iterates.csv.
StabilityResult run_stability_experiment(const ExperimentConfig& cfg, const MdpBundle& bundle);

// ---------------------------------------------------------------------------
// Property suite
// ---------------------------------------------------------------------------

struct PropertyOutcome {
  std::string name;
  Index cases = 0;
  Index violations = 0;
  double worst_margin = 0;  // largest (lhs - rhs) seen; <= 0 means every case held
  std::string detail;
  bool passed() const { return violations == 0; }
};

struct PropertyReport {
  std::uint64_t seed = 0;
  std::vector<PropertyOutcome> outcomes;
  bool passed() const;
  std::string to_json() const;
};

/// Random sweeps of the operator invariants; deterministic given cfg.seed. Writes report.json.
PropertyReport run_property_suite(const ExperimentConfig& cfg);

/// Random MDP with Dirichlet(1) transition rows and rewards uniform on [-1, 1].
TabularMdp<double> random_mdp(Index n_states, Index n_actions, double gamma, std::mt19937_64& rng);
/// Random policy; each entry zeroed with probability zero_prob (keeping at least one per row).
Policy<double> random_policy(Index n_states, Index n_actions, std::mt19937_64& rng, double zero_prob = 0);

}  // namespace derl
