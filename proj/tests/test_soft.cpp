#include "derl/builtins.hpp"
#include "derl/experiments.hpp"
#include "derl/soft.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace derl;

namespace {

constexpr double kEps = 1e-12;

TabularMdp<double> one_state(double r, double gamma) {
  return {1, 1, Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, r), gamma};
}

QFunction<double> q_row(std::initializer_list<double> values) {
  QFunction<double> q{Eigen::MatrixXd(1, static_cast<Index>(values.size()))};
  Index a = 0;
  for (double v : values) q.values(0, a++) = v;
  return q;
}

// Straightforward double loops, no max shift: valid for the small q used here.
QFunction<double> naive_soft_backup(const TabularMdp<double>& mdp, const Policy<double>& ref, double tau,
                                    const QFunction<double>& q) {
  QFunction<double> out{Eigen::MatrixXd(mdp.n_states, mdp.n_actions)};
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a) {
      double next = 0;
      for (Index y = 0; y < mdp.n_states; ++y) {
        double s = 0;
        for (Index b = 0; b < mdp.n_actions; ++b) s += ref.probs(y, b) * std::exp(q.values(y, b) / tau);
        next += mdp.transition(x * mdp.n_actions + a, y) * tau * std::log(s);
      }
      out.values(x, a) = mdp.reward(x, a) + mdp.discount * next;
    }
  return out;
}

QFunction<double> naive_policy_backup(const TabularMdp<double>& mdp, const Policy<double>& ref, double tau,
                                      const Policy<double>& pi, const QFunction<double>& q) {
  QFunction<double> out{Eigen::MatrixXd(mdp.n_states, mdp.n_actions)};
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a) {
      double next = 0;
      for (Index y = 0; y < mdp.n_states; ++y) {
        double v = 0, kl = 0;
        for (Index b = 0; b < mdp.n_actions; ++b) {
          v += pi.probs(y, b) * q.values(y, b);
          if (pi.probs(y, b) > 0) kl += pi.probs(y, b) * std::log(pi.probs(y, b) / ref.probs(y, b));
        }
        next += mdp.transition(x * mdp.n_actions + a, y) * (v - tau * kl);
      }
      out.values(x, a) = mdp.reward(x, a) + mdp.discount * next;
    }
  return out;
}

}  // namespace

TEST(LogSumExpValue, ConstantRowIsThatConstant) {
  const auto ref = Policy<double>::uniform(1, 3);
  for (double tau : {1e-9, 1e-3, 1.0, 1e3}) EXPECT_NEAR(log_sum_exp_value(q_row({-4, -4, -4}), ref, tau).values(0), -4, 1e-12);
}

TEST(LogSumExpValue, SingleSupportedAction) {
  Policy<double> ref{Eigen::MatrixXd(1, 3)};
  ref.probs << 0, 1, 0;
  EXPECT_EQ(log_sum_exp_value(q_row({5, 2, 9}), ref, 0.3).values(0), 2.0);
}

TEST(LogSumExpValue, TwoActionClosedForm) {
  const long double expected = std::log((1.0L + std::exp(1.0L)) / 2.0L);
  EXPECT_NEAR(log_sum_exp_value(q_row({0, 1}), Policy<double>::uniform(1, 2), 1.0).values(0),
              static_cast<double>(expected), 1e-15);
  EXPECT_NEAR(static_cast<double>(expected), 0.62011, 1e-5);
}

TEST(LogSumExpValue, RejectsNonPositiveTemperature) {
  EXPECT_THROW(log_sum_exp_value(q_row({0, 1}), Policy<double>::uniform(1, 2), 0.0), std::invalid_argument);
  EXPECT_THROW(boltzmann_policy(q_row({0, 1}), Policy<double>::uniform(1, 2), -1.0), std::invalid_argument);
}

TEST(BoltzmannPolicy, ConstantQReturnsReference) {
  Policy<double> ref{Eigen::MatrixXd(1, 3)};
  ref.probs << 0.2, 0.3, 0.5;
  EXPECT_EQ(boltzmann_policy(q_row({7, 7, 7}), ref, 0.01).probs, ref.probs);
}

TEST(BoltzmannPolicy, HighTemperatureApproachesReference) {
  const auto ref = Policy<double>::uniform(1, 3);
  EXPECT_LE((boltzmann_policy(q_row({1, -2, 3}), ref, 1e6).probs - ref.probs).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(BoltzmannPolicy, SoftmaxOfScaledQ) {
  const auto p = boltzmann_policy(q_row({0, 1}), Policy<double>::uniform(1, 2), 0.5);
  EXPECT_NEAR(p.probs(0, 0), 1 / (1 + std::exp(2.0)), 1e-15);
  EXPECT_NEAR(p.probs(0, 1), 0.8808, 1e-4);
  EXPECT_NEAR(p.probs.sum(), 1.0, 1e-12);
}

TEST(BoltzmannPolicy, SupportStaysInsideReference) {
  Policy<double> ref{Eigen::MatrixXd(1, 3)};
  ref.probs << 0.5, 0, 0.5;
  const auto p = boltzmann_policy(q_row({0, 100, 1e-3}), ref, 1e-6);
  EXPECT_EQ(p.probs(0, 1), 0.0);
  EXPECT_NEAR(p.probs(0, 2), 1.0, 1e-12);
}

TEST(SoftOptimalityBackup, OneState) {
  EXPECT_EQ(soft_optimality_backup(one_state(1, 0.5), Policy<double>::uniform(1, 1), 0.3,
                                   QFunction<double>::zero(1, 1))
                .values(0, 0),
            1.0);
}

TEST(SoftOptimalityBackup, MatchesNaiveLoops) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto mdp = random_mdp(3, 3, 0.9, rng);
    const auto ref = random_policy(3, 3, rng);
    const auto q = QFunction<double>{Eigen::MatrixXd::Random(3, 3)};
    const double tau = 0.5;
    EXPECT_LE(sup_distance(soft_optimality_backup(mdp, ref, tau, q), naive_soft_backup(mdp, ref, tau, q)), 1e-14);
  }
}

TEST(SoftOptimalityBackup, FixedPointIsReproduced) {
  const auto b = make_tristate();
  const auto q = require_converged(soft_value_iteration(b.mdp, b.reference, 0.1, kEps), "test");
  EXPECT_LE(sup_distance(soft_optimality_backup(b.mdp, b.reference, 0.1, q), q), 2 * kEps);
}

TEST(SoftValueIteration, OneStateAnyTemperature) {
  for (double tau : {1e-6, 0.1, 10.0}) {
    const auto r = soft_value_iteration(one_state(1, 0.5), Policy<double>::uniform(1, 1), tau, kEps);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.q.values(0, 0), 2.0, kEps);
    EXPECT_LE(r.final_residual, kEps * (1 - 0.5) / 0.5);
  }
}

TEST(SoftValueIteration, ZeroRewardSymmetric) {
  TabularMdp<double> mdp{2, 2, Eigen::MatrixXd::Constant(4, 2, 0.5), Eigen::MatrixXd::Zero(2, 2), 0.9};
  EXPECT_LE(require_converged(soft_value_iteration(mdp, Policy<double>::uniform(2, 2), 0.7, kEps), "t").sup_norm(),
            kEps);
}

TEST(SoftValueIteration, TristateSandwichBound) {
  const auto b = make_tristate();
  const double tau = 1e-3, gamma = b.mdp.discount;
  const auto q_tau = require_converged(soft_value_iteration(b.mdp, b.reference, tau, kEps), "t");
  const auto q_ref = require_converged(reference_value_iteration(b.mdp, b.reference, kEps), "t");
  EXPECT_LE(sup_distance(q_tau, q_ref), gamma / (1 - gamma) * tau * std::log(2.0) + 2 * kEps);
  EXPECT_LE((q_tau.values - q_ref.values).maxCoeff(), 2 * kEps);
}

TEST(SoftValueIteration, ReportsNonConvergence) {
  const auto b = make_tristate();
  const auto r = soft_value_iteration(b.mdp, b.reference, 0.1, kEps, 3);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
  EXPECT_GT(r.final_residual, kEps);
  EXPECT_THROW(require_converged(r, "t"), ConvergenceError);
}

TEST(SoftValueIteration, SinglePrecision) {
  const auto b = make_tristate();
  const auto qf = require_converged(
      soft_value_iteration(b.mdp.cast<float>(), b.reference.cast<float>(), 0.1f, 1e-4f), "t");
  const auto qd = require_converged(soft_value_iteration(b.mdp, b.reference, 0.1, kEps), "t");
  EXPECT_LE((qf.values.cast<double>() - qd.values).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(SoftPolicyBackup, ReferencePolicyDropsPenalty) {
  std::mt19937_64 rng(4);
  const auto mdp = random_mdp(4, 2, 0.8, rng);
  const auto ref = random_policy(4, 2, rng);
  const QFunction<double> q{Eigen::MatrixXd::Random(4, 2)};
  EXPECT_LE(sup_distance(soft_policy_backup(mdp, ref, 3.0, ref, q), soft_policy_backup(mdp, ref, 0.0, ref, q)), 1e-15);
}

TEST(SoftPolicyBackup, BoltzmannOfFixedPoint) {
  const auto b = make_return_demo();
  const double tau = 0.2;
  const auto q = require_converged(soft_value_iteration(b.mdp, b.reference, tau, kEps), "t");
  const auto g = boltzmann_policy(q, b.reference, tau);
  EXPECT_LE(sup_distance(soft_policy_backup(b.mdp, b.reference, tau, g, q), q), 4 * kEps);
  EXPECT_LE(sup_distance(require_converged(soft_policy_evaluation(b.mdp, b.reference, tau, g, kEps), "t"), q),
            2 * kEps);
}

TEST(SoftPolicyBackup, MatchesNaiveLoops) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto mdp = random_mdp(3, 4, 0.9, rng);
    const auto ref = random_policy(3, 4, rng);
    const auto pi = random_policy(3, 4, rng);
    const QFunction<double> q{Eigen::MatrixXd::Random(3, 4)};
    EXPECT_LE(sup_distance(soft_policy_backup(mdp, ref, 0.4, pi, q), naive_policy_backup(mdp, ref, 0.4, pi, q)),
              1e-14);
  }
}

TEST(SoftPolicyBackup, NullSupportThrows) {
  const auto b = make_tristate();
  Policy<double> ref = b.reference;
  ref.probs.row(1) << 1, 0;
  try {
    soft_policy_backup(b.mdp, ref, 0.1, Policy<double>::uniform(3, 2), QFunction<double>::zero(3, 2));
    FAIL() << "expected SupportError";
  } catch (const SupportError& e) {
    EXPECT_EQ(e.state(), 1);
  }
}

TEST(SoftPolicyEvaluation, OneState) {
  EXPECT_NEAR(require_converged(soft_policy_evaluation(one_state(1, 0.5), Policy<double>::uniform(1, 1), 0.3,
                                                       Policy<double>::uniform(1, 1), kEps),
                                "t")
                  .values(0, 0),
              2.0, kEps);
}

TEST(SoftPolicyEvaluation, MatchesLinearSolve) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    const auto mdp = random_mdp(4, 3, 0.85, rng);
    const auto ref = random_policy(4, 3, rng);
    const auto pi = random_policy(4, 3, rng);
    const double tau = 0.3;
    // (I - gamma P Pi) q = r - gamma tau P kl, with Pi mapping states to pairs.
    Eigen::MatrixXd pi_map = Eigen::MatrixXd::Zero(4, 12);
    Eigen::VectorXd kl(4), r(12);
    for (Index x = 0; x < 4; ++x) {
      kl(x) = 0;
      for (Index a = 0; a < 3; ++a) {
        pi_map(x, x * 3 + a) = pi.probs(x, a);
        kl(x) += pi.probs(x, a) * std::log(pi.probs(x, a) / ref.probs(x, a));
        r(x * 3 + a) = mdp.reward(x, a);
      }
    }
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(12, 12) - mdp.discount * mdp.transition * pi_map;
    const Eigen::VectorXd sol = lhs.fullPivLu().solve(r - mdp.discount * tau * mdp.transition * kl);
    const auto q = require_converged(soft_policy_evaluation(mdp, ref, tau, pi, kEps), "t");
    for (Index x = 0; x < 4; ++x)
      for (Index a = 0; a < 3; ++a) EXPECT_NEAR(q.values(x, a), sol(x * 3 + a), 1e-10);
  }
}

TEST(ReferenceOptimalityBackup, FullSupportIsClassicMax) {
  std::mt19937_64 rng(14);
  const auto mdp = random_mdp(3, 3, 0.9, rng);
  const QFunction<double> q{Eigen::MatrixXd::Random(3, 3)};
  const auto out = reference_optimality_backup(mdp, random_policy(3, 3, rng), q);
  const Eigen::VectorXd m = q.values.rowwise().maxCoeff();
  for (Index x = 0; x < 3; ++x)
    for (Index a = 0; a < 3; ++a)
      EXPECT_NEAR(out.values(x, a), mdp.reward(x, a) + mdp.discount * mdp.next(x, a).dot(m.transpose()), 1e-14);
}

TEST(ReferenceOptimalityBackup, UsesSupportedSuboptimalAction) {
  TabularMdp<double> two{1, 2, Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Zero(1, 2), 0.5};
  Policy<double> ref{Eigen::MatrixXd(1, 2)};
  ref.probs << 1, 0;
  const auto out = reference_optimality_backup(two, ref, q_row({1, 10}));
  EXPECT_EQ(out.values(0, 0), 0.5);
  EXPECT_EQ(out.values(0, 1), 0.5);
}

TEST(ReferenceOptimalityBackup, MatchesMaskedMax) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 20; ++i) {
    const auto mdp = random_mdp(4, 3, 0.9, rng);
    const auto ref = random_policy(4, 3, rng, 0.4);
    const QFunction<double> q{Eigen::MatrixXd::Random(4, 3)};
    const auto out = reference_optimality_backup(mdp, ref, q);
    for (Index x = 0; x < 4; ++x)
      for (Index a = 0; a < 3; ++a) {
        double next = 0;
        for (Index y = 0; y < 4; ++y) {
          double best = -1e300;
          for (Index b = 0; b < 3; ++b)
            if (ref.probs(y, b) > 0) best = std::max(best, q.values(y, b));
          next += mdp.transition(x * 3 + a, y) * best;
        }
        EXPECT_NEAR(out.values(x, a), mdp.reward(x, a) + mdp.discount * next, 1e-14);
      }
  }
}

TEST(ReferenceValueIteration, FullSupportIsClassicOptimum) {
  std::mt19937_64 rng(16);
  const auto mdp = random_mdp(4, 2, 0.9, rng);
  const auto ref = Policy<double>::uniform(4, 2);
  const auto q = require_converged(reference_value_iteration(mdp, ref, kEps), "t");
  EXPECT_LE((q.values - brute_force_optimal_q(mdp, ref)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ReferenceValueIteration, ReturnDemoTiedMeansAtX1) {
  const auto b = make_return_demo();
  const auto q = require_converged(reference_value_iteration(b.mdp, b.reference, kEps), "t");
  EXPECT_NEAR(q.values(1, 0), 2.0, 1e-10);
  EXPECT_NEAR(q.values(1, 1), 2.0, 1e-10);
}

TEST(ReferenceValueIteration, DominatesSoftSolutionsOnLadder) {
  for (const auto& b : {make_tristate(), make_return_demo()}) {
    const auto q_ref = require_converged(reference_value_iteration(b.mdp, b.reference, kEps), "t");
    for (double tau : decade_ladder(1, 9))
      EXPECT_LE((require_converged(soft_value_iteration(b.mdp, b.reference, tau, kEps), "t").values - q_ref.values)
                    .maxCoeff(),
                2 * kEps);
  }
}

TEST(OptimalityFilteredReference, TiedPairBecomesUniform) {
  const auto pi = optimality_filtered_reference(q_row({3, 1, 3}), Policy<double>::uniform(1, 3));
  EXPECT_NEAR(pi.probs(0, 0), 0.5, 1e-15);
  EXPECT_EQ(pi.probs(0, 1), 0.0);
  EXPECT_NEAR(pi.probs(0, 2), 0.5, 1e-15);
}

TEST(OptimalityFilteredReference, UniqueOptimumIsDeterministic) {
  EXPECT_EQ(optimality_filtered_reference(q_row({0, 2}), Policy<double>::uniform(1, 2)).probs,
            (Eigen::MatrixXd(1, 2) << 0, 1).finished());
}

TEST(OptimalityFilteredReference, FullOptimalSetKeepsReference) {
  Policy<double> ref{Eigen::MatrixXd(1, 2)};
  ref.probs << 0.9, 0.1;
  EXPECT_EQ(optimality_filtered_reference(q_row({1, 1}), ref).probs, ref.probs);
}

TEST(DecoupledPolicy, EqualTemperaturesMatchCoupled) {
  const auto b = make_tristate();
  const double tau = 0.05;
  const auto coupled =
      boltzmann_policy(require_converged(soft_value_iteration(b.mdp, b.reference, tau, kEps), "t"), b.reference, tau);
  EXPECT_EQ(decoupled_policy(b.mdp, b.reference, DecoupleConfig<double>{tau, tau}, kEps).probs, coupled.probs);
}

TEST(DecoupledPolicy, TristateLadder) {
  const auto b = make_tristate();
  const auto q_ref = require_converged(reference_value_iteration(b.mdp, b.reference, kEps), "t");
  const auto target = optimality_filtered_reference(q_ref, b.reference);
  double previous = 1;
  for (double tau : decade_ladder(1, 9)) {
    const double tv = sup_tv(decoupled_policy(b.mdp, b.reference, DecoupleConfig<double>::squared(tau), kEps), target);
    EXPECT_LE(tv, previous + 1e-15) << "tau " << tau;
    previous = tv;
  }
  EXPECT_LE(previous, 1e-3);
  const auto coupled = boltzmann_policy(
      require_converged(soft_value_iteration(b.mdp, b.reference, 1e-9, kEps), "t"), b.reference, 1e-9);
  EXPECT_GE(coupled.probs.row(0).maxCoeff(), 0.99);
  EXPECT_NEAR(coupled.probs(0, 0), 512.0 / 513.0, 1e-6);
}

TEST(DecoupleConfig, GambitRegimeFlag) {
  EXPECT_TRUE(DecoupleConfig<double>::squared(0.1).in_gambit_regime());
  EXPECT_FALSE((DecoupleConfig<double>{0.1, 0.1}).in_gambit_regime());
  EXPECT_THROW((DecoupleConfig<double>{0.1, 0.0}).validate(), std::invalid_argument);
}

TEST(TvDistance, Examples) {
  const Eigen::RowVector2d a(0.7, 0.3), b(0.4, 0.6), d0(1, 0), d1(0, 1);
  EXPECT_EQ(tv_distance<double>(a, a), 0.0);
  EXPECT_EQ(tv_distance<double>(d0, d1), 1.0);
  EXPECT_NEAR(tv_distance<double>(a, b), 0.3, 1e-15);
}

TEST(TvBoundCheck, IdenticalInputs) {
  const auto q = q_row({1, 2, 3});
  const auto r = tv_bound_check(q, q, Policy<double>::uniform(1, 3), 0.1);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.states[0].lhs, 0.0);
  EXPECT_EQ(r.states[0].rhs_min, 0.0);
}

TEST(TvBoundCheck, RandomSweep) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-3, 3), log_tau(-3, 1);
  for (int i = 0; i < 10000; ++i) {
    const double tau = std::pow(10.0, log_tau(rng));
    const double scale = (i % 2) ? tau * 0.4 : 3.0;
    QFunction<double> q{Eigen::MatrixXd(2, 3)}, q2{Eigen::MatrixXd(2, 3)};
    for (Index j = 0; j < 6; ++j) {
      q.values.data()[j] = u(rng);
      q2.values.data()[j] = q.values.data()[j] + scale * u(rng) / 3;
    }
    const auto ref = random_policy(2, 3, rng, 0.2);
    const auto r = tv_bound_check(q, q2, ref, tau);
    ASSERT_TRUE(r.holds) << "draw " << i;
    for (const auto& s : r.states)
      if (s.delta < tau / 2) ASSERT_LE(s.lhs, s.rhs_linear + 1e-15);
  }
}

TEST(MTauGap, ConstantQIsZero) { EXPECT_EQ(m_tau_gap(q_row({2, 2}), Policy<double>::uniform(1, 2), 0.5), 0.0); }

TEST(MTauGap, OneHotVanishes) {
  double previous = 1e300;
  for (double tau : {1.0, 0.1, 0.01, 1e-4}) {
    const double m = m_tau_gap(q_row({1, 0}), Policy<double>::uniform(1, 2), tau);
    EXPECT_LT(m, previous);
    previous = m;
  }
  EXPECT_NEAR(previous, 1e-4 * std::log(2.0), 1e-12);
}

TEST(MTauGap, MinSoftValueBound) {
  const auto b = make_tristate();
  const auto q_ref = require_converged(reference_value_iteration(b.mdp, b.reference, kEps), "t");
  const double p_min = optimal_set_mass(q_ref, b.reference, default_opt_tolerance(q_ref));
  EXPECT_NEAR(p_min, 0.5, 1e-15);
  for (double tau : decade_ladder(1, 6)) {
    for (double sigma : {tau, tau * tau}) {
      const auto q = require_converged(soft_value_iteration(b.mdp, b.reference, sigma, kEps), "t");
      EXPECT_LE(m_tau_gap(q, b.reference, tau), -tau * std::log(p_min) + 1e-12);
    }
  }
}

TEST(SoftQLearning, OneStateConverges) {
  const auto mdp = one_state(1, 0.5);
  const auto ref = Policy<double>::uniform(1, 1);
  const auto q = soft_q_learning(mdp, ref, 0.1, 100000, HarmonicStepSize{}, ref, 1,
                                 Eigen::VectorXd(Eigen::VectorXd::Ones(1)));
  EXPECT_NEAR(q.values(0, 0), 2.0, 1e-2);
}

TEST(SoftQLearning, TristateWithinTolerance) {
  const auto b = make_tristate();
  const double tau = 1e-2;
  const auto q_star = require_converged(soft_value_iteration(b.mdp, b.reference, tau, kEps), "t");
  const auto q = soft_q_learning(b.mdp, b.reference, tau, 1000000, HarmonicStepSize{}, b.reference, 0, b.initial_dist);
  EXPECT_LE(sup_distance(q, q_star), 0.05);
}

TEST(SoftQLearning, ZeroRewardStaysNearZero) {
  TabularMdp<double> mdp{2, 2, Eigen::MatrixXd::Constant(4, 2, 0.5), Eigen::MatrixXd::Zero(2, 2), 0.9};
  const auto ref = Policy<double>::uniform(2, 2);
  const auto q = soft_q_learning(mdp, ref, 0.5, 100000, HarmonicStepSize{}, ref, 2,
                                 Eigen::VectorXd(Eigen::VectorXd::Constant(2, 0.5)));
  EXPECT_LE(q.sup_norm(), 1e-12);
}

TEST(SoftQLearning, SeededRunsAreReproducible) {
  const auto b = make_tristate();
  const auto a = soft_q_learning(b.mdp, b.reference, 0.1, 5000, HarmonicStepSize{}, b.reference, 9, b.initial_dist);
  const auto c = soft_q_learning(b.mdp, b.reference, 0.1, 5000, HarmonicStepSize{}, b.reference, 9, b.initial_dist);
  EXPECT_EQ(a.values, c.values);
}

TEST(SoftQLearning, BehaviorMustCoverReference) {
  const auto b = make_tristate();
  Policy<double> behavior = b.reference;
  behavior.probs.row(2) << 1, 0;
  EXPECT_THROW(soft_q_learning(b.mdp, b.reference, 0.1, 10, HarmonicStepSize{}, behavior, 0, b.initial_dist),
               SupportError);
}

TEST(Contraction, RandomPairs) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 200; ++i) {
    const auto mdp = random_mdp(4, 3, 0.9, rng);
    const auto ref = random_policy(4, 3, rng, 0.3);
    const QFunction<double> q{5 * Eigen::MatrixXd::Random(4, 3)}, q2{5 * Eigen::MatrixXd::Random(4, 3)};
    const double d = mdp.discount * sup_distance(q, q2) + 1e-12;
    EXPECT_LE(sup_distance(soft_optimality_backup(mdp, ref, 0.2, q), soft_optimality_backup(mdp, ref, 0.2, q2)), d);
    EXPECT_LE(sup_distance(reference_optimality_backup(mdp, ref, q), reference_optimality_backup(mdp, ref, q2)), d);
  }
}
