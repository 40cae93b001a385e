#include "derl/builtins.hpp"

#include "derl/mdp.hpp"
#include "derl/soft.hpp"

#include <cmath>

namespace derl {

namespace {

struct Builder {
  TabularMdp<double> mdp;

  Builder(Index n_states, Index n_actions, double gamma) {
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.discount = gamma;
    mdp.transition = Eigen::MatrixXd::Zero(n_states * n_actions, n_states);
    mdp.reward = Eigen::MatrixXd::Zero(n_states, n_actions);
  }

  Builder& go(Index x, Index a, Index y, double p = 1.0) {
    mdp.transition(mdp.pair(x, a), y) += p;
    return *this;
  }
  Builder& pay(Index x, Index a, double r) {
    mdp.reward(x, a) = r;
    return *this;
  }

  MdpBundle bundle(Eigen::VectorXd initial_dist = {}) const {
    if (initial_dist.size() == 0)
      initial_dist = Eigen::VectorXd::Constant(mdp.n_states, 1.0 / static_cast<double>(mdp.n_states));
    return {mdp, Policy<double>::uniform(mdp.n_states, mdp.n_actions), std::move(initial_dist)};
  }
};

}  // namespace

MdpBundle make_tristate() {
  enum { x0, x1, x2 };
  Builder b(3, 2, 0.9);
  b.go(x0, 0, x1).go(x0, 1, x2);
  b.go(x1, 0, x1).go(x1, 1, x1).pay(x1, 0, 1).pay(x1, 1, 1);
  b.go(x2, 0, x2).go(x2, 1, x2).pay(x2, 0, 1).pay(x2, 1, 0);
  return b.bundle();
}

MdpBundle make_return_demo() {
  enum { x0, x1, blue_sink, high_sink, low_sink };
  enum { blue, green };
  Builder b(5, 2, 0.5);
  b.go(x0, blue, x1).go(x0, green, x1).pay(x0, green, -1);
  b.go(x1, blue, blue_sink).go(x1, green, high_sink, 0.5).go(x1, green, low_sink, 0.5);
  b.go(blue_sink, 0, blue_sink).go(blue_sink, 1, blue_sink).pay(blue_sink, 0, 2).pay(blue_sink, 1, 2);
  b.go(high_sink, 0, high_sink).go(high_sink, 1, high_sink).pay(high_sink, 0, 4).pay(high_sink, 1, 0);
  b.go(low_sink, 0, low_sink).go(low_sink, 1, low_sink).pay(low_sink, 0, 0).pay(low_sink, 1, -1);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(5);
  start(x0) = 1;
  return b.bundle(start);
}

MdpBundle make_mean_tie() {
  // d chooses between a deterministic return of 2 (via the sink c) and a coin
  // flip between 0 (sink z) and the clock hB, whose discounted value from d is
  // 4. The clock alternates rewards, so partial sums of the two means cross
  // each other on every iteration.
  enum { e, d, c, hA, hB, z };
  const double gamma = 0.98;
  const double tick = 4 * (1 - gamma * gamma) / (gamma * gamma);
  const double sink_value = tick / (4 * (1 - gamma));
  Builder b(6, 2, gamma);
  for (Index a = 0; a < 2; ++a) {
    b.go(e, a, d).go(c, a, c).go(hA, a, hB).go(hB, a, hA).go(z, a, z);
    b.pay(c, a, sink_value * (1 - gamma)).pay(hA, a, tick);
  }
  b.go(d, 0, c).pay(d, 0, 2 - gamma * sink_value);
  b.go(d, 1, hB, 0.5).go(d, 1, z, 0.5);
  return b.bundle();
}

Eigen::MatrixXd brute_force_optimal_q(const TabularMdp<double>& mdp, const Policy<double>& reference) {
  std::vector<Index> choice(static_cast<std::size_t>(mdp.n_states), 0);
  Eigen::MatrixXd best = Eigen::MatrixXd::Constant(mdp.n_states, mdp.n_actions, -infinity<double>());
  auto admissible = [&](Index x, Index a) { return reference.probs(x, a) > 0; };
  for (Index x = 0; x < mdp.n_states; ++x)
    while (!admissible(x, choice[static_cast<std::size_t>(x)])) ++choice[static_cast<std::size_t>(x)];
  for (;;) {
    const auto q = exact_policy_evaluation(mdp, Policy<double>::deterministic(choice, mdp.n_actions));
    best = best.cwiseMax(q.values);
    Index x = 0;
    for (; x < mdp.n_states; ++x) {
      auto& c = choice[static_cast<std::size_t>(x)];
      do ++c;
      while (c < mdp.n_actions && !admissible(x, c));
      if (c < mdp.n_actions) break;
      c = 0;
      while (!admissible(x, c)) ++c;
    }
    if (x == mdp.n_states) break;
  }
  return best;
}

TristateCertificate certify_tristate(const MdpBundle& b) {
  constexpr double tau = 1e-9;
  constexpr double eps = 1e-12;
  TristateCertificate cert;
  const QFunction<double> q_star{brute_force_optimal_q(b.mdp, b.reference)};
  cert.x0_optimality_gap = q_star.values.row(0).maxCoeff() - q_star.values.row(0).minCoeff();

  const auto coupled =
      boltzmann_policy(require_converged(soft_value_iteration(b.mdp, b.reference, tau, eps), "certify_tristate"),
                       b.reference, tau);
  cert.coupled_x0_max_prob = coupled.probs.row(0).maxCoeff();

  const auto decoupled = decoupled_policy(b.mdp, b.reference, DecoupleConfig<double>::squared(tau), eps);
  cert.decoupled_sup_tv = sup_tv(decoupled, optimality_filtered_reference(q_star, b.reference));

  cert.passed = cert.x0_optimality_gap <= 1e-10 && cert.coupled_x0_max_prob >= 0.99 && cert.decoupled_sup_tv <= 1e-3;
  return cert;
}

std::vector<std::string> builtin_names() { return {"tristate", "return-demo", "mean-tie"}; }

BuiltinMdp builtin(const std::string& name) {
  if (name == "tristate") {
    MdpBundle b = make_tristate();
    const auto cert = certify_tristate(b);
    if (!cert.passed) throw std::logic_error("tristate builtin failed its self-certification");
    return {name, std::move(b)};
  }
  if (name == "return-demo") return {name, make_return_demo()};
  if (name == "mean-tie") return {name, make_mean_tie()};
  throw ConfigError(ConfigError::Kind::Validation, "/builtin", "unknown builtin '" + name + "'");
}

}  // namespace derl
