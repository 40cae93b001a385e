#pragma once

// Rollout estimators used as independent oracles for the exact solvers.

#include "derl/core.hpp"
#include "derl/distributional.hpp"
#include "derl/soft.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

namespace derl {

struct RolloutOptions {
  std::int64_t n_rollouts = 1'000'000;
  std::uint64_t seed = 0;
  double horizon_tolerance = 1e-12;  // stop once gamma^t drops below this
};

/**
 * Discounted returns sum_t gamma^t (r(x_t, a_t) - state_cost(x_t)) of
 * trajectories that start in `state` (and take `first_action` if given),
 * then follow `policy`. state_cost may be empty.
 */
inline std::vector<double> sample_returns(const TabularMdp<double>& mdp, const Policy<double>& policy, Index state,
                                          std::optional<Index> first_action, const RolloutOptions& options,
                                          const Eigen::VectorXd& state_cost = {}) {
  require(state >= 0 && state < mdp.n_states, "sample_returns: state out of range");
  require(!first_action || (*first_action >= 0 && *first_action < mdp.n_actions),
          "sample_returns: action out of range");
  require(state_cost.size() == 0 || state_cost.size() == mdp.n_states, "sample_returns: state_cost has wrong length");

  Eigen::MatrixXd policy_cdf(mdp.n_states, mdp.n_actions);
  for (Index x = 0; x < mdp.n_states; ++x) {
    double c = 0;
    for (Index a = 0; a < mdp.n_actions; ++a) policy_cdf(x, a) = c += policy.probs(x, a);
  }
  Eigen::MatrixXd next_cdf(mdp.n_pairs(), mdp.n_states);
  for (Index i = 0; i < mdp.n_pairs(); ++i) {
    double c = 0;
    for (Index y = 0; y < mdp.n_states; ++y) next_cdf(i, y) = c += mdp.transition(i, y);
  }
  int horizon = 1;
  for (double g = mdp.discount; g >= options.horizon_tolerance; g *= mdp.discount) ++horizon;

  std::mt19937_64 rng(options.seed);
  std::vector<double> returns(static_cast<std::size_t>(options.n_rollouts));
  for (auto& ret : returns) {
    Index x = state;
    double g = 1, total = 0;
    for (int t = 0; t < horizon; ++t) {
      const Index a = (t == 0 && first_action) ? *first_action : sample_cumulative(policy_cdf.row(x), rng);
      total += g * (mdp.reward(x, a) - (state_cost.size() ? state_cost(x) : 0.0));
      x = sample_cumulative(next_cdf.row(mdp.pair(x, a)), rng);
      g *= mdp.discount;
    }
    ret = total;
  }
  return returns;
}

/// Empirical law of the samples, with equal values merged.
inline DiscreteDistribution<double> empirical_distribution(const std::vector<double>& samples) {
  std::map<double, std::int64_t> counts;
  for (double s : samples) ++counts[s];
  DiscreteDistribution<double> d;
  const double w = 1.0 / static_cast<double>(samples.size());
  for (const auto& [value, count] : counts) {
    d.locations.push_back(value);
    d.weights.push_back(w * static_cast<double>(count));
  }
  return d;
}

struct MeanEstimate {
  double mean = 0;
  double std_error = 0;
};

inline MeanEstimate mean_estimate(const std::vector<double>& samples) {
  const double n = static_cast<double>(samples.size());
  double mean = 0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= std::max(1.0, n - 1);
  return {mean, std::sqrt(var / n)};
}

}  // namespace derl
