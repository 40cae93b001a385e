#include "derl/builtins.hpp"
#include "derl/experiments.hpp"
#include "derl/mdp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace derl;

namespace {

TabularMdp<double> one_state(double r, double gamma) {
  return {1, 1, Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, r), gamma};
}

// Monte-Carlo oracle with its own sampler (std::discrete_distribution).
struct Walker {
  std::vector<std::discrete_distribution<Index>> actions, successors;
  std::mt19937_64 rng;

  Walker(const TabularMdp<double>& mdp, const Policy<double>& pi, std::uint64_t seed) : rng(seed) {
    for (Index x = 0; x < mdp.n_states; ++x) {
      std::vector<double> w(pi.probs.row(x).begin(), pi.probs.row(x).end());
      actions.emplace_back(w.begin(), w.end());
    }
    for (Index i = 0; i < mdp.n_pairs(); ++i) {
      std::vector<double> w(mdp.transition.row(i).begin(), mdp.transition.row(i).end());
      successors.emplace_back(w.begin(), w.end());
    }
    n_actions = mdp.n_actions;
  }
  Index action(Index x) { return actions[static_cast<std::size_t>(x)](rng); }
  Index step(Index x, Index a) { return successors[static_cast<std::size_t>(x * n_actions + a)](rng); }

  Index n_actions = 0;
};

}  // namespace

TEST(ValidateMdp, OneStateIsClean) { EXPECT_TRUE(validate_mdp(one_state(0.0, 0.5)).empty()); }

TEST(ValidateMdp, RowSumViolationIsReported) {
  auto mdp = one_state(0.0, 0.5);
  mdp.transition(0, 0) = 0.9;
  const auto v = validate_mdp(mdp);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "transition");
  EXPECT_EQ(v[0].index, (std::vector<Index>{0, 0}));
}

TEST(ValidateMdp, ReturnDemoIsClean) { EXPECT_TRUE(validate_mdp(make_return_demo().mdp).empty()); }

TEST(ValidateMdp, DiscountOutOfRange) {
  for (double g : {0.0, 1.0, 1.5, -0.1}) {
    const auto v = validate_mdp(one_state(0.0, g));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].field, "discount");
  }
}

TEST(ValidateMdp, NegativeProbabilityNamesIndex) {
  auto mdp = make_tristate().mdp;
  mdp.transition(mdp.pair(2, 1), 0) = -0.5;
  mdp.transition(mdp.pair(2, 1), 2) = 1.5;
  const auto v = validate_mdp(mdp);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].index, (std::vector<Index>{2, 1, 0}));
  EXPECT_EQ(v[0].to_string().rfind("transition[2][1][0]", 0), 0u);
}

TEST(ValidateMdp, NonFiniteReward) {
  auto mdp = one_state(std::nan(""), 0.5);
  const auto v = validate_mdp(mdp);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "reward");
}

TEST(PolicyStateKernel, OneState) {
  EXPECT_EQ(policy_state_kernel(one_state(1, 0.5), Policy<double>::uniform(1, 1)).value(), 1.0);
}

TEST(PolicyStateKernel, DeterministicSelectsRows) {
  std::mt19937_64 rng(3);
  const auto mdp = random_mdp(4, 3, 0.9, rng);
  const std::vector<Index> choice{2, 0, 1, 1};
  const auto k = policy_state_kernel(mdp, Policy<double>::deterministic(choice, 3));
  for (Index x = 0; x < 4; ++x) EXPECT_EQ(k.row(x), mdp.next(x, choice[static_cast<std::size_t>(x)]));
}

TEST(PolicyStateKernel, UniformMatchesDirectSum) {
  std::mt19937_64 rng(11);
  const auto mdp = random_mdp(3, 4, 0.9, rng);
  const auto k = policy_state_kernel(mdp, Policy<double>::uniform(3, 4));
  for (Index x = 0; x < 3; ++x) {
    EXPECT_NEAR(k.row(x).sum(), 1.0, 1e-12);
    for (Index y = 0; y < 3; ++y) {
      double s = 0;
      for (Index a = 0; a < 4; ++a) s += mdp.transition(x * 4 + a, y) / 4;
      EXPECT_NEAR(k(x, y), s, 1e-15);
    }
  }
}

TEST(ExactPolicyEvaluation, GeometricSeries) {
  EXPECT_NEAR(exact_policy_evaluation(one_state(1, 0.5), Policy<double>::uniform(1, 1)).values(0, 0), 2.0, 1e-12);
}

TEST(ExactPolicyEvaluation, ZeroReward) {
  std::mt19937_64 rng(5);
  auto mdp = random_mdp(4, 2, 0.9, rng);
  mdp.reward.setZero();
  EXPECT_EQ(exact_policy_evaluation(mdp, Policy<double>::uniform(4, 2)).sup_norm(), 0.0);
}

TEST(ExactPolicyEvaluation, ReturnDemoBlueAtX1) {
  const auto b = make_return_demo();
  const auto q = exact_policy_evaluation(b.mdp, Policy<double>::deterministic({0, 0, 0, 0, 0}, 2));
  EXPECT_NEAR(q.values(1, 0), 2 * 0.5 / (1 - 0.5), 1e-12);
}

TEST(ExactPolicyEvaluation, MatchesMonteCarloOnRandomMdp) {
  std::mt19937_64 rng(17);
  const auto mdp = random_mdp(5, 3, 0.8, rng);
  const auto pi = random_policy(5, 3, rng);
  const auto q = exact_policy_evaluation(mdp, pi);
  const int horizon = static_cast<int>(std::ceil(std::log(1e-12) / std::log(mdp.discount)));
  Walker w(mdp, pi, 99);
  constexpr int n = 20000;
  for (Index x = 0; x < 5; ++x) {
    for (Index a = 0; a < 3; ++a) {
      double sum = 0, sum_sq = 0;
      for (int i = 0; i < n; ++i) {
        Index s = x, b = a;
        double g = 1, ret = 0;
        for (int t = 0; t < horizon; ++t) {
          if (t > 0) b = w.action(s);
          ret += g * mdp.reward(s, b);
          s = w.step(s, b);
          g *= mdp.discount;
        }
        sum += ret;
        sum_sq += ret * ret;
      }
      const double mean = sum / n;
      const double se = std::sqrt((sum_sq / n - mean * mean) / n);
      EXPECT_LE(std::abs(mean - q.values(x, a)), 3 * se) << "pair " << x << "," << a;
    }
  }
}

TEST(OccupancyMeasure, OneState) {
  const auto occ = occupancy_measure(one_state(0, 0.5), Policy<double>::uniform(1, 1), Eigen::VectorXd(Eigen::VectorXd::Ones(1)));
  EXPECT_NEAR(occ.mass(0, 0), 1.0, 1e-14);
}

TEST(OccupancyMeasure, AbsorbingChainGeometricSplit) {
  const double gamma = 0.7;
  TabularMdp<double> mdp{2, 1, Eigen::MatrixXd(2, 2), Eigen::MatrixXd::Zero(2, 1), gamma};
  mdp.transition << 0, 1, 0, 1;
  Eigen::VectorXd start(2);
  start << 1, 0;
  const auto nu = occupancy_measure(mdp, Policy<double>::uniform(2, 1), start).state_marginal();
  EXPECT_NEAR(nu(0), 1 - gamma, 1e-14);
  EXPECT_NEAR(nu(1), gamma, 1e-14);
}

TEST(OccupancyMeasure, MatchesMonteCarloGeometricStopping) {
  // mu(x, a) is the law of (x_T, a_T) for T ~ Geometric(1 - gamma) independent of the chain.
  std::mt19937_64 rng(23);
  const auto mdp = random_mdp(4, 2, 0.75, rng);
  const auto pi = random_policy(4, 2, rng);
  Eigen::VectorXd start = random_policy(1, 4, rng).probs.row(0).transpose();
  const auto occ = occupancy_measure(mdp, pi, start);
  EXPECT_NEAR(occ.mass.sum(), 1.0, 1e-10);
  EXPECT_LE(occupancy_flow_residual(mdp, occ), 1e-10);

  Walker w(mdp, pi, 7);
  std::vector<double> sw(start.data(), start.data() + 4);
  std::discrete_distribution<Index> initial(sw.begin(), sw.end());
  std::bernoulli_distribution stop(1 - mdp.discount);
  constexpr int n = 1'000'000;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(4, 2);
  for (int i = 0; i < n; ++i) {
    Index x = initial(w.rng);
    Index a = w.action(x);
    while (!stop(w.rng)) {
      x = w.step(x, a);
      a = w.action(x);
    }
    counts(x, a) += 1;
  }
  for (Index x = 0; x < 4; ++x) {
    for (Index a = 0; a < 2; ++a) {
      const double p = counts(x, a) / n;
      const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / n);
      EXPECT_LE(std::abs(p - occ.mass(x, a)), 3 * se) << "pair " << x << "," << a;
    }
  }
}

TEST(OccupancyFlowResidual, UniformMassIsNotAnOccupancy) {
  std::mt19937_64 rng(2);
  const auto mdp = random_mdp(4, 3, 0.9, rng);
  const OccupancyMeasure<double> uniform{Eigen::MatrixXd::Constant(4, 3, 1.0 / 12),
                                         (Eigen::VectorXd(4) << 1, 0, 0, 0).finished()};
  EXPECT_GT(occupancy_flow_residual(mdp, uniform), 1e-3);
}

TEST(OccupancyFlowResidual, OneStateIsZero) {
  const OccupancyMeasure<double> occ{Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1)};
  EXPECT_EQ(occupancy_flow_residual(one_state(1, 0.5), occ), 0.0);
}

TEST(Regularizer, ReferencePolicyGivesZero) {
  const auto b = make_tristate();
  EXPECT_NEAR(regularizer(occupancy_measure(b.mdp, b.reference, b.initial_dist), b.reference), 0.0, 1e-15);
}

TEST(Regularizer, DeterministicAgainstUniformIsLog2) {
  const auto b = make_tristate();
  const auto occ = occupancy_measure(b.mdp, Policy<double>::deterministic({0, 0, 0}, 2), b.initial_dist);
  EXPECT_NEAR(regularizer(occ, b.reference), std::log(2.0), 1e-14);
}

TEST(Regularizer, NullActionGivesInfinity) {
  const auto b = make_tristate();
  Policy<double> reference = b.reference;
  reference.probs.row(1) << 1, 0;
  const auto occ = occupancy_measure(b.mdp, Policy<double>::uniform(3, 2), b.initial_dist);
  EXPECT_TRUE(std::isinf(regularizer(occ, reference)));
  EXPECT_EQ(erl_objective(b.mdp, occ, reference, 0.1), -infinity<double>());
}

TEST(ErlObjective, ZeroTemperatureIsExpectedReward) {
  const auto b = make_tristate();
  const auto occ = occupancy_measure(b.mdp, Policy<double>::deterministic({1, 0, 1}, 2), b.initial_dist);
  EXPECT_NEAR(erl_objective(b.mdp, occ, b.reference, 0.0), (b.mdp.reward.array() * occ.mass.array()).sum(), 1e-15);
}

TEST(ErlObjective, ReferencePolicyIgnoresTemperature) {
  const auto b = make_tristate();
  const auto occ = occupancy_measure(b.mdp, b.reference, b.initial_dist);
  EXPECT_NEAR(erl_objective(b.mdp, occ, b.reference, 5.0), erl_objective(b.mdp, occ, b.reference, 0.0), 1e-15);
}

TEST(ErlObjective, TristateMatchesMonteCarlo) {
  // Rollouts under a non-reference policy accumulate gamma^t (r - tau KL(pi_x || ref_x)).
  const auto b = make_tristate();
  const double tau = 0.1;
  Policy<double> pi{Eigen::MatrixXd(3, 2)};
  pi.probs << 0.8, 0.2, 0.5, 0.5, 0.3, 0.7;
  const auto occ = occupancy_measure(b.mdp, pi, b.initial_dist);
  const double exact = erl_objective(b.mdp, occ, b.reference, tau);

  Eigen::VectorXd kl(3);
  for (Index x = 0; x < 3; ++x)
    kl(x) = (pi.probs.row(x).array() * (pi.probs.row(x).array() / 0.5).log()).sum();
  Walker w(b.mdp, pi, 31);
  std::uniform_int_distribution<Index> initial(0, 2);
  const int horizon = static_cast<int>(std::ceil(std::log(1e-12) / std::log(0.9)));
  constexpr int n = 200000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    Index x = initial(w.rng);
    double g = 1, ret = 0;
    for (int t = 0; t < horizon; ++t) {
      const Index a = w.action(x);
      ret += g * (b.mdp.reward(x, a) - tau * kl(x));
      x = w.step(x, a);
      g *= 0.9;
    }
    ret *= 1 - 0.9;
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_LE(std::abs(mean - exact), 3 * se);
}

TEST(Regularizer, StrictConvexityOnMixtures) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 50; ++i) {
    const auto mdp = random_mdp(3, 3, 0.8, rng);
    const auto reference = random_policy(3, 3, rng);
    const Eigen::VectorXd start = Eigen::VectorXd::Constant(3, 1.0 / 3);
    const auto m0 = occupancy_measure(mdp, random_policy(3, 3, rng), start);
    const auto m1 = occupancy_measure(mdp, random_policy(3, 3, rng), start);
    const OccupancyMeasure<double> mid{0.5 * (m0.mass + m1.mass), start};
    EXPECT_LE(occupancy_flow_residual(mdp, mid), 1e-10);
    EXPECT_LT(regularizer(mid, reference), 0.5 * (regularizer(m0, reference) + regularizer(m1, reference)) - 1e-12);
  }
}
