#include "derl/builtins.hpp"
#include "derl/experiments.hpp"
#include "derl/mdp.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace derl {

namespace {

// Accumulates margins lhs - rhs; any positive margin is a violation.
struct Sweep {
  PropertyOutcome outcome;
  explicit Sweep(std::string name) {
    outcome.name = std::move(name);
    outcome.worst_margin = -infinity<double>();
  }
  void check(double lhs, double rhs) {
    ++outcome.cases;
    const double margin = lhs - rhs;
    outcome.worst_margin = std::max(outcome.worst_margin, std::isnan(margin) ? infinity<double>() : margin);
    if (!(lhs <= rhs)) ++outcome.violations;
  }
  void expect(bool ok) { check(ok ? 0.0 : 1.0, 0.0); }
};

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(std::log(lo) + unit_uniform(rng) * (std::log(hi) - std::log(lo)));
}

QFunction<double> random_q(Index n_states, Index n_actions, double scale, std::mt19937_64& rng) {
  QFunction<double> q{Eigen::MatrixXd(n_states, n_actions)};
  for (Index i = 0; i < q.values.size(); ++i) q.values.data()[i] = scale * (2 * unit_uniform(rng) - 1);
  return q;
}

// Policy absolutely continuous with respect to `reference`.
Policy<double> random_policy_under(const Policy<double>& reference, std::mt19937_64& rng) {
  Policy<double> p{reference.probs};
  for (Index x = 0; x < p.probs.rows(); ++x) {
    for (Index a = 0; a < p.probs.cols(); ++a)
      p.probs(x, a) = reference.probs(x, a) > 0 ? -std::log1p(-unit_uniform(rng)) + 1e-3 : 0.0;
    p.probs.row(x) /= p.probs.row(x).sum();
  }
  return p;
}

ReturnDistributionFn<double> random_distribution(const AtomGrid<double>& grid, Index n_states, Index n_actions,
                                                 double lo, double hi, std::mt19937_64& rng) {
  ReturnDistributionFn<double> z{grid, n_states, n_actions, Eigen::MatrixXd::Zero(n_states * n_actions, grid.size()), 0};
  for (Index i = 0; i < z.probs.rows(); ++i) {
    for (Index k = 0; k < grid.size(); ++k)
      if (grid.atoms(k) >= lo && grid.atoms(k) <= hi && unit_uniform(rng) < 0.3)
        z.probs(i, k) = -std::log1p(-unit_uniform(rng));
    if (!(z.probs.row(i).sum() > 0)) {
      Index k = 0;
      while (grid.atoms(k) < lo) ++k;
      z.probs(i, k) = 1;
    }
    z.probs.row(i) /= z.probs.row(i).sum();
  }
  return z;
}

void operator_contraction(std::vector<PropertyOutcome>& out, std::mt19937_64& rng, int draws) {
  Sweep soft("soft_optimality_contraction"), ref("reference_optimality_contraction"),
      pol("soft_policy_contraction");
  for (int i = 0; i < draws; ++i) {
    const double gamma = 0.5 + 0.49 * unit_uniform(rng);
    const auto mdp = random_mdp(4, 3, gamma, rng);
    const auto reference = random_policy(4, 3, rng, 0.3);
    const auto policy = random_policy_under(reference, rng);
    const double tau = log_uniform(rng, 1e-3, 10);
    const auto q = random_q(4, 3, 10, rng), q2 = random_q(4, 3, 10, rng);
    const double d = sup_distance(q, q2);
    soft.check(sup_distance(soft_optimality_backup(mdp, reference, tau, q), soft_optimality_backup(mdp, reference, tau, q2)),
               gamma * d + 1e-12);
    ref.check(sup_distance(reference_optimality_backup(mdp, reference, q), reference_optimality_backup(mdp, reference, q2)),
              gamma * d + 1e-12);
    pol.check(sup_distance(soft_policy_backup(mdp, reference, tau, policy, q),
                           soft_policy_backup(mdp, reference, tau, policy, q2)),
              gamma * d + 1e-12);
  }
  out.push_back(soft.outcome);
  out.push_back(ref.outcome);
  out.push_back(pol.outcome);
}

void temperature_ladders(std::vector<PropertyOutcome>& out, std::mt19937_64& rng, int instances) {
  constexpr double eps = 1e-10;
  Sweep mono("monotone_in_temperature"), sandwich_low("sandwich_lower"), sandwich_high("sandwich_upper"),
      fixed("soft_evaluation_fixed_point"), support("boltzmann_support"), stochastic("row_stochastic_outputs");
  const std::vector<double> ladder{1.0, 0.3, 0.1, 0.03, 0.01, 0.003};
  for (int i = 0; i < instances; ++i) {
    const double gamma = 0.5 + 0.4 * unit_uniform(rng);
    const auto mdp = random_mdp(4, 3, gamma, rng);
    const auto reference = random_policy(4, 3, rng, 0.3);
    const auto q_ref = require_converged(reference_value_iteration(mdp, reference, eps), "properties");
    QFunction<double> previous;
    for (std::size_t k = 0; k < ladder.size(); ++k) {
      const double tau = ladder[k];
      const auto q = require_converged(soft_value_iteration(mdp, reference, tau, eps), "properties");
      if (k > 0) mono.check((previous.values - q.values).maxCoeff(), 2 * eps);
      previous = q;
      sandwich_low.check((q.values - q_ref.values).maxCoeff(), 2 * eps);
      sandwich_high.check((q_ref.values - q.values).maxCoeff(),
                          gamma / (1 - gamma) * m_tau_gap(q, reference, tau) + 2 * eps);
      const auto g = boltzmann_policy(q, reference, tau);
      fixed.check(sup_distance(require_converged(soft_policy_evaluation(mdp, reference, tau, g, eps), "properties"), q),
                  2 * eps);
      bool zeros_match = true;
      for (Index j = 0; j < g.probs.size(); ++j)
        zeros_match = zeros_match && ((reference.probs.data()[j] == 0) == (g.probs.data()[j] == 0));
      support.expect(zeros_match);
      stochastic.check((g.probs.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-10);
      stochastic.check((policy_state_kernel(mdp, g).rowwise().sum().array() - 1).abs().maxCoeff(), 1e-10);
    }
  }
  for (auto* s : {&mono, &sandwich_low, &sandwich_high, &fixed, &support, &stochastic}) out.push_back(s->outcome);
}

void argmax_preservation(std::vector<PropertyOutcome>& out, std::mt19937_64& rng, int draws) {
  Sweep s("argmax_preservation");
  for (int i = 0; i < draws; ++i) {
    const auto reference = random_policy(5, 4, rng, 0.3);
    QFunction<double> q{Eigen::MatrixXd(5, 4)};
    for (Index j = 0; j < q.values.size(); ++j) q.values.data()[j] = std::floor(3 * unit_uniform(rng));
    const auto pi = optimality_filtered_reference(q, reference, 0.0);
    bool ok = true;
    for (Index x = 0; x < 5; ++x) {
      double best = -infinity<double>();
      for (Index a = 0; a < 4; ++a)
        if (reference.probs(x, a) > 0) best = std::max(best, q.values(x, a));
      for (Index a = 0; a < 4; ++a)
        ok = ok && ((pi.probs(x, a) > 0) == (reference.probs(x, a) > 0 && q.values(x, a) == best));
    }
    s.expect(ok);
  }
  out.push_back(s.outcome);
}

void tv_bounds(std::vector<PropertyOutcome>& out, std::mt19937_64& rng, int draws) {
  Sweep min_bound("tv_bound_min"), linear("tv_bound_linear");
  for (int i = 0; i < draws; ++i) {
    const auto reference = random_policy(3, 4, rng, 0.2);
    const double tau = log_uniform(rng, 1e-3, 10);
    const auto q = random_q(3, 4, 5, rng);
    // Half the draws keep the perturbation inside the linear regime.
    const double scale = (i % 2 == 0) ? tau * 0.49 * unit_uniform(rng) : 5 * unit_uniform(rng);
    QFunction<double> q2{q.values + random_q(3, 4, scale, rng).values};
    const auto report = tv_bound_check(q, q2, reference, tau);
    for (const auto& st : report.states) {
      min_bound.check(st.lhs, st.rhs_min + 16 * std::numeric_limits<double>::epsilon());
      if (st.delta < tau / 2) linear.check(st.lhs, st.rhs_linear + 16 * std::numeric_limits<double>::epsilon());
    }
  }
  out.push_back(min_bound.outcome);
  out.push_back(linear.outcome);
}

void occupancy_geometry(std::vector<PropertyOutcome>& out, std::mt19937_64& rng, int draws) {
  Sweep convex("occupancy_convexity"), strict("regularizer_strict_convexity");
  for (int i = 0; i < draws; ++i) {
    const auto mdp = random_mdp(4, 3, 0.5 + 0.45 * unit_uniform(rng), rng);
    const auto reference = random_policy(4, 3, rng, 0.0);
    Eigen::VectorXd nu0 = random_policy(1, 4, rng).probs.row(0).transpose();
    const auto m0 = occupancy_measure(mdp, random_policy(4, 3, rng), nu0);
    const auto m1 = occupancy_measure(mdp, random_policy(4, 3, rng), nu0);
    const double alpha = 0.05 + 0.9 * unit_uniform(rng);
    const OccupancyMeasure<double> mix{alpha * m0.mass + (1 - alpha) * m1.mass, nu0};
    convex.check(occupancy_flow_residual(mdp, mix), 1e-10);
    strict.check(regularizer(mix, reference),
                 alpha * regularizer(m0, reference) + (1 - alpha) * regularizer(m1, reference) - 1e-12);
  }
  out.push_back(convex.outcome);
  out.push_back(strict.outcome);
}

void distributional(std::vector<PropertyOutcome>& out, std::mt19937_64& rng, int draws) {
  Sweep symmetric("wasserstein_symmetry"), triangle("wasserstein_triangle"), contraction("distributional_contraction"),
      particle("particle_contraction"), commute("mean_commutativity"), normalized("normalization");
  const auto grid = AtomGrid<double>::uniform(-20, 20, 161);
  for (int i = 0; i < draws; ++i) {
    const double gamma = 0.5 + 0.45 * unit_uniform(rng);
    const auto mdp = random_mdp(3, 2, gamma, rng);
    const auto reference = random_policy(3, 2, rng, 0.0);
    const double tau = log_uniform(rng, 1e-2, 1);
    // Keep every backed-up particle on the grid: rewards lie in [-1, 1] and the
    // KL penalty is at most log(1 / min reference probability).
    const double kl_max = -std::log(reference.probs.minCoeff());
    const double lo = std::max(grid.lo(), (grid.lo() + 1 + gamma * tau * kl_max) / gamma);
    const double hi = std::min(grid.hi(), (grid.hi() - 1) / gamma);
    const auto z1 = random_distribution(grid, 3, 2, lo, hi, rng);
    const auto z2 = random_distribution(grid, 3, 2, lo, hi, rng);
    const auto z3 = random_distribution(grid, 3, 2, grid.lo(), grid.hi(), rng);

    const double d12 = wasserstein_p(z1.distribution(0, 0), z2.distribution(0, 0), 1.0);
    symmetric.check(std::abs(d12 - wasserstein_p(z2.distribution(0, 0), z1.distribution(0, 0), 1.0)), 1e-12);
    triangle.check(d12, wasserstein_p(z1.distribution(0, 0), z3.distribution(0, 0), 1.0) +
                            wasserstein_p(z3.distribution(0, 0), z2.distribution(0, 0), 1.0) + 1e-12);

    const auto policy = random_policy_under(reference, rng);
    const auto b1 = soft_dist_eval_backup(mdp, reference, tau, policy, z1);
    const auto b2 = soft_dist_eval_backup(mdp, reference, tau, policy, z3);
    contraction.check(sup_wasserstein(b1, b2, 1.0), gamma * sup_wasserstein(z1, z3, 1.0) + 2 * grid.spacing);
    normalized.check((b1.probs.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-10);
    normalized.check(-b1.probs.minCoeff(), 0.0);

    const auto control = soft_dist_control_backup(mdp, reference, tau, z1);
    commute.check(sup_distance(mean_extraction(control),
                               soft_optimality_backup(mdp, reference, tau, mean_extraction(z1))),
                  1e-10);

    ParticleReturnFn<double> p1{3, 2, {}}, p2{3, 2, {}};
    for (int s = 0; s < 6; ++s) {
      DiscreteDistribution<double> a, c;
      for (int k = 0; k < 3; ++k) {
        a.locations.push_back(10 * (2 * unit_uniform(rng) - 1));
        a.weights.push_back(1.0 / 3);
        c.locations.push_back(10 * (2 * unit_uniform(rng) - 1));
        c.weights.push_back(1.0 / 3);
      }
      p1.slices.push_back(a);
      p2.slices.push_back(c);
    }
    const auto once1 = soft_dist_eval_backup_particles(mdp, reference, tau, policy, p1);
    const auto once2 = soft_dist_eval_backup_particles(mdp, reference, tau, policy, p2);
    const double base = sup_wasserstein(p1, p2, 1.0);
    particle.check(sup_wasserstein(once1, once2, 1.0), gamma * base + 1e-12);
    particle.check(sup_wasserstein(soft_dist_eval_backup_particles(mdp, reference, tau, policy, once1),
                                   soft_dist_eval_backup_particles(mdp, reference, tau, policy, once2), 1.0),
                   gamma * gamma * base + 1e-12);
  }
  for (auto* s : {&symmetric, &triangle, &contraction, &particle, &commute, &normalized}) out.push_back(s->outcome);
}

void builtin_checks(std::vector<PropertyOutcome>& out) {
  Sweep valid("builtins_validate"), rejects("invalid_discount_rejected");
  for (const auto& name : builtin_names()) {
    const auto b = builtin(name);
    valid.expect(validate_mdp(b.bundle.mdp).empty());
    auto broken = b.bundle.mdp;
    broken.discount = 1.5;
    const auto violations = validate_mdp(broken);
    rejects.expect(violations.size() == 1 && violations[0].field == "discount");
  }
  out.push_back(valid.outcome);
  out.push_back(rejects.outcome);
}

}  // namespace

bool PropertyReport::passed() const {
  return std::all_of(outcomes.begin(), outcomes.end(), [](const PropertyOutcome& o) { return o.passed(); });
}

std::string PropertyReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["seed"] = seed;
  doc["passed"] = passed();
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& o : outcomes) {
    nlohmann::ordered_json item;
    item["name"] = o.name;
    item["passed"] = o.passed();
    item["cases"] = o.cases;
    item["violations"] = o.violations;
    item["worst_margin"] = format_real(o.worst_margin);
    list.push_back(std::move(item));
  }
  doc["properties"] = std::move(list);
  return doc.dump(2) + "\n";
}

PropertyReport run_property_suite(const ExperimentConfig& cfg) {
  PropertyReport report;
  report.seed = cfg.seed;
  std::mt19937_64 rng(cfg.seed);
  operator_contraction(report.outcomes, rng, 1000);
  temperature_ladders(report.outcomes, rng, 20);
  argmax_preservation(report.outcomes, rng, 200);
  tv_bounds(report.outcomes, rng, 2000);
  occupancy_geometry(report.outcomes, rng, 200);
  distributional(report.outcomes, rng, 100);
  builtin_checks(report.outcomes);
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream(cfg.output_dir / "report.json", std::ios::binary) << report.to_json();
  }
  return report;
}

}  // namespace derl
