#include "derl/experiments.hpp"

#include "derl/builtins.hpp"
#include "derl/mdp.hpp"
#include "derl/monte_carlo.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>

namespace derl {

namespace {

std::filesystem::path output_file(const ExperimentConfig& cfg, const char* name) { return cfg.output_dir / name; }

bool writes(const ExperimentConfig& cfg) { return !cfg.output_dir.empty(); }

void write_policy_rows(CsvWriter& csv, double tau, double sigma, const char* method, const Policy<double>& pi) {
  for (Index x = 0; x < pi.probs.rows(); ++x)
    for (Index a = 0; a < pi.probs.cols(); ++a) csv.row(tau, sigma, method, x, a, pi.probs(x, a));
}

template <typename Scalar>
AtomGrid<Scalar> experiment_grid(const ExperimentConfig& cfg, const TabularMdp<Scalar>& mdp) {
  if (cfg.grid) return AtomGrid<Scalar>::uniform(Scalar(cfg.grid->min), Scalar(cfg.grid->max), cfg.grid->count);
  return default_grid(mdp);
}

template <typename Scalar>
ReturnDistributionFn<double> to_double(const ReturnDistributionFn<Scalar>& z) {
  return z.template cast<double>();
}

StateReturnDistribution<double> mix(const ReturnDistributionFn<double>& z, const Policy<double>& pi) {
  return mix_state_distribution(z, pi);
}

}  // namespace

MdpBundle resolve_mdp(const ExperimentConfig& cfg, const std::string& default_builtin) {
  if (cfg.mdp_path) return load_mdp(*cfg.mdp_path);
  return builtin(cfg.builtin.value_or(default_builtin)).bundle;
}

double decoupled_temperature(const ExperimentConfig& cfg, double tau) { return std::pow(tau, cfg.decouple_exponent); }

Policy<double> filtered_reference_policy(const MdpBundle& b, double tolerance) {
  const auto q_ref =
      require_converged(reference_value_iteration(b.mdp, b.reference, tolerance), "reference_value_iteration");
  return optimality_filtered_reference(q_ref, b.reference);
}

// ---------------------------------------------------------------------------
// Policy limits
// ---------------------------------------------------------------------------

PolicyLimitResult run_policy_limit_experiment(const ExperimentConfig& cfg, const MdpBundle& b) {
  cfg.validate();
  const double eps = cfg.solver_tolerance;
  PolicyLimitResult out;
  out.q_ref = require_converged(reference_value_iteration(b.mdp, b.reference, eps), "reference_value_iteration");
  out.pistarref = optimality_filtered_reference(out.q_ref, b.reference);

  std::uint64_t stream = cfg.seed;
  for (double tau : cfg.temperatures) {
    PolicyLimitRung r;
    r.tau = tau;
    r.sigma = decoupled_temperature(cfg, tau);
    const auto q_tau = require_converged(soft_value_iteration(b.mdp, b.reference, tau, eps), "soft_value_iteration");
    r.coupled = boltzmann_policy(q_tau, b.reference, tau);
    r.decoupled = decoupled_policy(b.mdp, b.reference, DecoupleConfig<double>{tau, r.sigma}, eps);
    r.tv_coupled = sup_tv(r.coupled, out.pistarref);
    r.tv_decoupled = sup_tv(r.decoupled, out.pistarref);
    if (cfg.sql_steps > 0) {
      const auto q_hat_tau = soft_q_learning(b.mdp, b.reference, tau, cfg.sql_steps, HarmonicStepSize{}, b.reference,
                                             stream++, b.initial_dist);
      const auto q_hat_sigma = soft_q_learning(b.mdp, b.reference, r.sigma, cfg.sql_steps, HarmonicStepSize{},
                                               b.reference, stream++, b.initial_dist);
      r.sql_coupled = boltzmann_policy(q_hat_tau, b.reference, tau);
      r.sql_decoupled = boltzmann_policy(q_hat_sigma, b.reference, tau);
      r.tv_sql_coupled = sup_tv(*r.sql_coupled, out.pistarref);
      r.tv_sql_decoupled = sup_tv(*r.sql_decoupled, out.pistarref);
    }
    out.rungs.push_back(std::move(r));
  }

  if (writes(cfg)) {
    CsvWriter policies(output_file(cfg, "policies.csv"), {"tau", "sigma", "method", "state", "action", "prob"});
    CsvWriter tv(output_file(cfg, "tv.csv"), {"tau", "method", "sup_tv_to_pistarref"});
    write_policy_rows(policies, 0.0, 0.0, "pistarref", out.pistarref);
    for (const auto& r : out.rungs) {
      write_policy_rows(policies, r.tau, r.tau, "coupled", r.coupled);
      write_policy_rows(policies, r.tau, r.sigma, "decoupled", r.decoupled);
      tv.row(r.tau, "coupled", r.tv_coupled);
      tv.row(r.tau, "decoupled", r.tv_decoupled);
      if (r.sql_coupled) {
        write_policy_rows(policies, r.tau, r.tau, "sql-coupled", *r.sql_coupled);
        write_policy_rows(policies, r.tau, r.sigma, "sql-decoupled", *r.sql_decoupled);
        tv.row(r.tau, "sql-coupled", r.tv_sql_coupled);
        tv.row(r.tau, "sql-decoupled", r.tv_sql_decoupled);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Return distributions
// ---------------------------------------------------------------------------

namespace {

template <typename Scalar>
void return_distribution_rungs(const ExperimentConfig& cfg, const MdpBundle& b, ReturnDistributionResult& out) {
  const TabularMdp<Scalar> mdp = b.mdp.template cast<Scalar>();
  const Policy<Scalar> ref = b.reference.template cast<Scalar>();
  const AtomGrid<Scalar> grid = experiment_grid(cfg, mdp);
  const auto z0 = point_mass_distribution(grid, mdp.n_states, mdp.n_actions, Scalar(0));

  for (double tau : cfg.temperatures) {
    ReturnDistributionRung r;
    r.tau = tau;
    r.target = std::pow(tau, 1.0 / cfg.decouple_exponent);
    const Scalar t = static_cast<Scalar>(tau);
    const Scalar target = static_cast<Scalar>(r.target);
    // Both runs perform the same control phase at tau and differ only after mean extraction.
    const auto coupled = decoupled_return_estimation(mdp, ref, t, t, cfg.n_control, cfg.n_eval, z0);
    const auto decoupled = decoupled_return_estimation(mdp, ref, target, t, cfg.n_control, cfg.n_eval, z0);
    r.coupled_policy = coupled.pi_hat.template cast<double>();
    r.decoupled_policy = decoupled.pi_hat.template cast<double>();
    r.coupled = to_double(coupled.z_hat);
    r.decoupled = to_double(decoupled.z_hat);
    r.coupled_eta = mix(r.coupled, r.coupled_policy);
    r.decoupled_eta = mix(r.decoupled, r.decoupled_policy);
    r.max_clipped_mass = static_cast<double>(std::max(coupled.max_clipped_mass, decoupled.max_clipped_mass));
    for (Index x = 0; x < mdp.n_states; ++x) {
      const auto& oracle = out.oracle[static_cast<std::size_t>(x)];
      r.coupled_w1.push_back(wasserstein_p(r.coupled_eta.distribution(x), oracle, 1.0));
      r.decoupled_w1.push_back(wasserstein_p(r.decoupled_eta.distribution(x), oracle, 1.0));
    }
    out.rungs.push_back(std::move(r));
  }
}

}  // namespace

ReturnDistributionResult run_return_distribution_experiment(const ExperimentConfig& cfg, const MdpBundle& b,
                                                            int precision) {
  cfg.validate();
  require(precision == 64 || precision == 32, "precision must be 64 or 32");
  ReturnDistributionResult out;
  out.precision = precision;
  out.pistarref = filtered_reference_policy(b, cfg.solver_tolerance);
  for (Index x = 0; x < b.mdp.n_states; ++x) {
    RolloutOptions opts;
    opts.n_rollouts = cfg.mc_rollouts;
    opts.seed = cfg.seed + static_cast<std::uint64_t>(x);
    const auto samples = sample_returns(b.mdp, out.pistarref, x, std::nullopt, opts);
    out.oracle.push_back(empirical_distribution(samples));
    out.oracle_std_error.push_back(mean_estimate(samples).std_error);
  }
  if (precision == 64)
    return_distribution_rungs<double>(cfg, b, out);
  else
    return_distribution_rungs<float>(cfg, b, out);

  if (writes(cfg)) {
    CsvWriter dist(output_file(cfg, "distributions.csv"), {"tau", "method", "state", "action", "atom", "prob"});
    CsvWriter summary(output_file(cfg, "summary.csv"),
                      {"tau", "target", "method", "state", "w1_to_oracle", "mean", "max_clipped_mass"});
    for (Index x = 0; x < b.mdp.n_states; ++x) {
      const auto& o = out.oracle[static_cast<std::size_t>(x)];
      for (std::size_t k = 0; k < o.locations.size(); ++k) dist.row(0.0, "oracle", x, -1, o.locations[k], o.weights[k]);
      summary.row(0.0, 0.0, "oracle", x, 0.0, o.mean(), 0.0);
    }
    for (const auto& r : out.rungs) {
      const auto emit = [&](const char* method, const ReturnDistributionFn<double>& z,
                            const StateReturnDistribution<double>& eta, const std::vector<double>& w1,
                            double target) {
        const auto& atoms = z.grid.atoms;
        for (Index x = 0; x < z.n_states; ++x) {
          for (Index a = 0; a < z.n_actions; ++a)
            for (Index k = 0; k < atoms.size(); ++k) dist.row(r.tau, method, x, a, atoms(k), z.slice(x, a)(k));
          for (Index k = 0; k < atoms.size(); ++k) dist.row(r.tau, method, x, -1, atoms(k), eta.probs(x, k));
          summary.row(r.tau, target, method, x, w1[static_cast<std::size_t>(x)], eta.probs.row(x).dot(atoms),
                      r.max_clipped_mass);
        }
      };
      emit("coupled", r.coupled, r.coupled_eta, r.coupled_w1, r.tau);
      emit("decoupled", r.decoupled, r.decoupled_eta, r.decoupled_w1, r.target);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Occupancy limit
// ---------------------------------------------------------------------------

std::vector<Policy<double>> optimal_deterministic_policies(const QFunction<double>& q_ref,
                                                           const Policy<double>& reference) {
  const auto mask = optimal_action_mask(q_ref, reference, default_opt_tolerance(q_ref));
  const Index n_states = q_ref.values.rows(), n_actions = q_ref.values.cols();
  std::vector<std::vector<Index>> options(static_cast<std::size_t>(n_states));
  double count = 1;
  for (Index x = 0; x < n_states; ++x) {
    for (Index a = 0; a < n_actions; ++a)
      if (mask(x, a)) options[static_cast<std::size_t>(x)].push_back(a);
    count *= static_cast<double>(options[static_cast<std::size_t>(x)].size());
  }
  require(count <= 64, "optimal_deterministic_policies: more than 64 optimal deterministic policies");

  std::vector<Policy<double>> out;
  std::vector<std::size_t> digit(static_cast<std::size_t>(n_states), 0);
  for (;;) {
    std::vector<Index> choice(static_cast<std::size_t>(n_states));
    for (std::size_t x = 0; x < choice.size(); ++x) choice[x] = options[x][digit[x]];
    out.push_back(Policy<double>::deterministic(choice, n_actions));
    std::size_t x = 0;
    for (; x < digit.size(); ++x) {
      if (++digit[x] < options[x].size()) break;
      digit[x] = 0;
    }
    if (x == digit.size()) break;
  }
  return out;
}

namespace {

OccupancyMeasure<double> mixture(const std::vector<OccupancyMeasure<double>>& parts, const Eigen::VectorXd& w) {
  OccupancyMeasure<double> m{Eigen::MatrixXd::Zero(parts[0].mass.rows(), parts[0].mass.cols()),
                             parts[0].initial_dist};
  for (std::size_t i = 0; i < parts.size(); ++i) m.mass += w(static_cast<Index>(i)) * parts[i].mass;
  return m;
}

// Calls visit(w) for every weight vector with entries k / n, k integer, summing to 1.
void for_each_simplex_point(Index parts, Index n, const std::function<void(const Eigen::VectorXd&)>& visit) {
  Eigen::VectorXd w(parts);
  std::function<void(Index, Index)> rec = [&](Index i, Index left) {
    if (i == parts - 1) {
      w(i) = static_cast<double>(left) / static_cast<double>(n);
      visit(w);
      return;
    }
    for (Index k = 0; k <= left; ++k) {
      w(i) = static_cast<double>(k) / static_cast<double>(n);
      rec(i + 1, left - k);
    }
  };
  rec(0, n);
}

double binomial(Index n, Index k) {
  double r = 1;
  for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

OccupancyLimitResult run_occupancy_limit_check(const ExperimentConfig& cfg, const MdpBundle& b) {
  cfg.validate();
  const double eps = cfg.solver_tolerance;
  OccupancyLimitResult out;
  for (double tau : cfg.temperatures) {
    const auto q_tau = require_converged(soft_value_iteration(b.mdp, b.reference, tau, eps), "soft_value_iteration");
    OccupancyRung r;
    r.tau = tau;
    r.occupancy = occupancy_measure(b.mdp, boltzmann_policy(q_tau, b.reference, tau), b.initial_dist);
    r.regularizer = regularizer(r.occupancy, b.reference);
    r.flow_residual = occupancy_flow_residual(b.mdp, r.occupancy);
    out.max_flow_residual = std::max(out.max_flow_residual, r.flow_residual);
    out.rungs.push_back(std::move(r));
  }
  out.regularizer_monotone = true;
  for (std::size_t i = 1; i < out.rungs.size(); ++i)
    if (out.rungs[i].regularizer < out.rungs[i - 1].regularizer - 1e-12) out.regularizer_monotone = false;

  // R-minimizer over mixtures of optimal deterministic occupancies: a simplex
  // grid of at least 1000 points, then pairwise mass exchange with halving steps.
  const auto q_ref = require_converged(reference_value_iteration(b.mdp, b.reference, eps), "reference_value_iteration");
  out.optimal_deterministic = optimal_deterministic_policies(q_ref, b.reference);
  std::vector<OccupancyMeasure<double>> parts;
  for (const auto& pi : out.optimal_deterministic) parts.push_back(occupancy_measure(b.mdp, pi, b.initial_dist));
  const Index m = static_cast<Index>(parts.size());
  Index n = 1;
  if (m > 1)
    while (binomial(n + m - 1, m - 1) < 1000) ++n;

  double best = infinity<double>();
  Eigen::VectorXd w_best = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  for_each_simplex_point(m, n, [&](const Eigen::VectorXd& w) {
    ++out.grid_points;
    const double value = regularizer(mixture(parts, w), b.reference);
    if (value < best) {
      best = value;
      w_best = w;
    }
  });
  for (double step = 1.0 / static_cast<double>(n); step > 1e-13;) {
    bool improved = false;
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < m; ++j) {
        if (i == j || !(w_best(j) > 0)) continue;
        Eigen::VectorXd w = w_best;
        const double moved = std::min(step, w(j));
        w(i) += moved;
        w(j) -= moved;
        const double value = regularizer(mixture(parts, w), b.reference);
        if (value < best) {
          best = value;
          w_best = w;
          improved = true;
        }
      }
    }
    if (!improved) step /= 2;
  }
  out.minimizer_weights = w_best;
  out.minimizer = mixture(parts, w_best);
  out.minimizer_regularizer = best;
  out.final_tv_to_minimizer = occupancy_tv(out.rungs.back().occupancy, out.minimizer);
  out.passed = out.max_flow_residual <= 1e-10 && out.regularizer_monotone && out.final_tv_to_minimizer <= 1e-3;

  if (writes(cfg)) {
    CsvWriter csv(output_file(cfg, "occupancy.csv"),
                  {"kind", "tau", "state", "action", "mass", "regularizer", "flow_residual"});
    const auto emit = [&](const char* kind, double tau, const OccupancyMeasure<double>& occ, double reg) {
      const double resid = occupancy_flow_residual(b.mdp, occ);
      for (Index x = 0; x < occ.mass.rows(); ++x)
        for (Index a = 0; a < occ.mass.cols(); ++a) csv.row(kind, tau, x, a, occ.mass(x, a), reg, resid);
    };
    for (const auto& r : out.rungs) emit("ladder", r.tau, r.occupancy, r.regularizer);
    emit("minimizer", 0.0, out.minimizer, out.minimizer_regularizer);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mean-tie stability traces
// ---------------------------------------------------------------------------

StabilityResult run_stability_experiment(const ExperimentConfig& cfg, const MdpBundle& b) {
  cfg.validate();
  const double tau = cfg.temperatures.front();
  const auto grid = experiment_grid(cfg, b.mdp);
  const auto z0 = point_mass_distribution(grid, b.mdp.n_states, b.mdp.n_actions, 0.0);
  const int n = cfg.n_control;

  std::unique_ptr<CsvWriter> iterates;
  if (writes(cfg))
    iterates = std::make_unique<CsvWriter>(output_file(cfg, "iterates.csv"),
                                           std::vector<std::string>{"method", "iteration", "state", "action", "atom",
                                                                    "prob"});
  const auto snapshot = [&](const char* method, int it, const ReturnDistributionFn<double>& z) {
    if (!iterates || (it > 12 && it < n - 3)) return;
    for (Index x = 0; x < z.n_states; ++x)
      for (Index a = 0; a < z.n_actions; ++a)
        for (Index k = 0; k < grid.size(); ++k) iterates->row(method, it, x, a, grid.atoms(k), z.slice(x, a)(k));
  };
  const auto run = [&](const char* method, const std::function<ReturnDistributionFn<double>(
                                               const ReturnDistributionFn<double>&)>& backup) {
    IterateTrace<double> trace{z0, {}, 0};
    snapshot(method, 0, trace.z);
    for (int it = 1; it <= n; ++it) {
      auto next = backup(trace.z);
      trace.successive_w1.push_back(sup_wasserstein(next, trace.z, 1.0));
      trace.max_clipped_mass = std::max(trace.max_clipped_mass, next.clipped_mass);
      trace.z = std::move(next);
      snapshot(method, it, trace.z);
    }
    return trace;
  };

  StabilityResult out;
  out.soft = run("soft", [&](const ReturnDistributionFn<double>& z) {
    return soft_dist_control_backup(b.mdp, b.reference, tau, z);
  });
  out.classic = run("classic", [&](const ReturnDistributionFn<double>& z) {
    return classic_dist_control_backup(b.mdp, z, TieBreak::LowestIndex);
  });
  if (writes(cfg)) {
    CsvWriter trace(output_file(cfg, "trace.csv"), {"method", "iteration", "sup_w1_to_previous"});
    for (std::size_t k = 0; k < out.soft.successive_w1.size(); ++k)
      trace.row("soft", static_cast<Index>(k + 1), out.soft.successive_w1[k]);
    for (std::size_t k = 0; k < out.classic.successive_w1.size(); ++k)
      trace.row("classic", static_cast<Index>(k + 1), out.classic.successive_w1[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

TabularMdp<double> random_mdp(Index n_states, Index n_actions, double gamma, std::mt19937_64& rng) {
  TabularMdp<double> m{n_states, n_actions, Eigen::MatrixXd(n_states * n_actions, n_states),
                       Eigen::MatrixXd(n_states, n_actions), gamma};
  for (Index i = 0; i < m.n_pairs(); ++i) {
    for (Index y = 0; y < n_states; ++y) m.transition(i, y) = -std::log1p(-unit_uniform(rng));
    m.transition.row(i) /= m.transition.row(i).sum();
  }
  for (Index x = 0; x < n_states; ++x)
    for (Index a = 0; a < n_actions; ++a) m.reward(x, a) = 2 * unit_uniform(rng) - 1;
  return m;
}

Policy<double> random_policy(Index n_states, Index n_actions, std::mt19937_64& rng, double zero_prob) {
  Policy<double> p{Eigen::MatrixXd(n_states, n_actions)};
  for (Index x = 0; x < n_states; ++x) {
    for (Index a = 0; a < n_actions; ++a)
      p.probs(x, a) = unit_uniform(rng) < zero_prob ? 0.0 : -std::log1p(-unit_uniform(rng)) + 1e-3;
    if (!(p.probs.row(x).sum() > 0)) p.probs(x, static_cast<Index>(unit_uniform(rng) * n_actions)) = 1;
    p.probs.row(x) /= p.probs.row(x).sum();
  }
  return p;
}

}  // namespace derl
