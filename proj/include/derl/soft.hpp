#pragma once

// Scalar entropy-regularized operators: log-sum-exp values, Boltzmann-Gibbs
// policies, soft and reference-optimality backups with their fixed-point
// solvers, the temperature-decoupled policy, and tabular soft Q-learning.

#include "derl/core.hpp"
#include "derl/mdp.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>

namespace derl {

template <typename Scalar>
struct SoftSolveReport {
  QFunction<Scalar> q;
  int iterations = 0;
  Scalar final_residual = 0;  // sup norm between the last two iterates
  Scalar temperature = 0;
  bool converged = false;
};

/// Target temperature tau and the faster-vanishing potential temperature sigma.
template <typename Scalar>
struct DecoupleConfig {
  Scalar target_temperature;
  Scalar decoupled_temperature;

  void validate() const {
    require(target_temperature > 0 && decoupled_temperature > 0,
            "DecoupleConfig: temperatures must be positive");
  }
  bool in_gambit_regime() const { return decoupled_temperature < target_temperature; }

  static DecoupleConfig squared(Scalar tau) { return {tau, tau * tau}; }
};

// ---------------------------------------------------------------------------
// Log-sum-exp values and Boltzmann-Gibbs policies
// ---------------------------------------------------------------------------

/// max of q(x, .) over the support of ref_x; throws if the support is empty.
template <typename Scalar>
Vector<Scalar> support_max(const QFunction<Scalar>& q, const Policy<Scalar>& reference) {
  Vector<Scalar> m(q.values.rows());
  for (Index x = 0; x < q.values.rows(); ++x) {
    Scalar best = -infinity<Scalar>();
    bool any = false;
    for (Index a = 0; a < q.values.cols(); ++a) {
      if (reference.probs(x, a) > 0) {
        best = any ? std::max(best, q.values(x, a)) : q.values(x, a);
        any = true;
      }
    }
    if (!any) throw SupportError(x, "reference policy has empty support at a state");
    m(x) = best;
  }
  return m;
}

/**
 * v(x) = tau log sum_a ref_x(a) exp(q(x, a) / tau), evaluated with the
 * maximum over the reference support factored out. Actions outside the
 * support never reach the exponential.
 */
template <typename Scalar>
ValueFunction<Scalar> log_sum_exp_value(const QFunction<Scalar>& q, const Policy<Scalar>& reference,
                                        Scalar temperature) {
  require(temperature > 0, "log_sum_exp_value: temperature must be positive");
  const Vector<Scalar> m = support_max(q, reference);
  ValueFunction<Scalar> v{Vector<Scalar>(m.size())};
  for (Index x = 0; x < m.size(); ++x) {
    Scalar acc = 0;
    for (Index a = 0; a < q.values.cols(); ++a) {
      const Scalar w = reference.probs(x, a);
      if (w > 0) acc += w * std::exp((q.values(x, a) - m(x)) / temperature);
    }
    v.values(x) = m(x) + temperature * std::log(acc);
  }
  return v;
}

/// G_tau q: probs proportional to ref_x(a) exp((q(x, a) - v(x)) / tau).
template <typename Scalar>
Policy<Scalar> boltzmann_policy(const QFunction<Scalar>& q, const Policy<Scalar>& reference, Scalar temperature) {
  require(temperature > 0, "boltzmann_policy: temperature must be positive");
  const Vector<Scalar> m = support_max(q, reference);
  Policy<Scalar> pi{Matrix<Scalar>::Zero(q.values.rows(), q.values.cols())};
  for (Index x = 0; x < m.size(); ++x) {
    for (Index a = 0; a < q.values.cols(); ++a) {
      const Scalar w = reference.probs(x, a);
      if (w > 0) pi.probs(x, a) = w * std::exp((q.values(x, a) - m(x)) / temperature);
    }
    pi.probs.row(x) /= pi.probs.row(x).sum();
  }
  return pi;
}

// ---------------------------------------------------------------------------
// Backups
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
QFunction<Scalar> bootstrap(const TabularMdp<Scalar>& mdp, const Vector<Scalar>& next_value) {
  QFunction<Scalar> out{mdp.reward};
  const Vector<Scalar> expected = mdp.transition * next_value;
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a) out.values(x, a) += mdp.discount * expected(mdp.pair(x, a));
  return out;
}

}  // namespace detail

/// (T*_tau q)(x, a) = r(x, a) + gamma E_{x'}[v_tau q(x')].
template <typename Scalar>
QFunction<Scalar> soft_optimality_backup(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                         Scalar temperature, const QFunction<Scalar>& q) {
  require_shape(mdp, q, "soft_optimality_backup");
  return detail::bootstrap(mdp, log_sum_exp_value(q, reference, temperature).values);
}

/// KL(pi_x || ref_x) for every state; throws SupportError naming the first offending state.
template <typename Scalar>
Vector<Scalar> policy_kl_vector(const Policy<Scalar>& policy, const Policy<Scalar>& reference) {
  require(policy.probs.rows() == reference.probs.rows() && policy.probs.cols() == reference.probs.cols(),
          "policy_kl_vector: shape mismatch");
  Vector<Scalar> kl(policy.probs.rows());
  for (Index x = 0; x < kl.size(); ++x) {
    kl(x) = kl_divergence<Scalar>(policy.probs.row(x), reference.probs.row(x));
    if (std::isinf(kl(x)))
      throw SupportError(x, "policy is not absolutely continuous w.r.t. the reference at state " +
                                std::to_string(x));
  }
  return kl;
}

/// (T^pi_tau q)(x, a) = r + gamma E_{x'}[ sum_a' pi(a'|x') q(x', a') - tau KL(pi_x' || ref_x') ].
template <typename Scalar>
QFunction<Scalar> soft_policy_backup(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                     Scalar temperature, const Policy<Scalar>& policy, const QFunction<Scalar>& q) {
  require_shape(mdp, q, "soft_policy_backup");
  require_shape(mdp, policy, "soft_policy_backup");
  require(temperature >= 0, "soft_policy_backup: temperature must be nonnegative");
  Vector<Scalar> next = (policy.probs.array() * q.values.array()).rowwise().sum();
  if (temperature > 0) {
    // Only states that can actually be reached need a finite KL.
    const Vector<Scalar> reachable = mdp.transition.colwise().maxCoeff().transpose();
    for (Index y = 0; y < mdp.n_states; ++y) {
      const Scalar kl = kl_divergence<Scalar>(policy.probs.row(y), reference.probs.row(y));
      if (std::isinf(kl)) {
        if (reachable(y) > 0)
          throw SupportError(y, "soft_policy_backup: infinite KL at reachable state " + std::to_string(y));
        continue;
      }
      next(y) -= temperature * kl;
    }
  }
  return detail::bootstrap(mdp, next);
}

/// (B q)(x, a) = r + gamma E_{x'}[ max over supp(ref_x') of q(x', .) ].
template <typename Scalar>
QFunction<Scalar> reference_optimality_backup(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                              const QFunction<Scalar>& q) {
  require_shape(mdp, q, "reference_optimality_backup");
  return detail::bootstrap(mdp, support_max(q, reference));
}

// ---------------------------------------------------------------------------
// Fixed-point solvers
// ---------------------------------------------------------------------------

/**
 * Iterates a gamma-contraction from q = 0 until successive iterates differ by
 * at most eps (1 - gamma) / gamma in sup norm, which certifies that the last
 * iterate is within eps of the fixed point.
 */
template <typename Scalar, typename Backup>
SoftSolveReport<Scalar> iterate_contraction(const TabularMdp<Scalar>& mdp, Backup&& backup, Scalar tolerance,
                                            int max_iter, Scalar temperature) {
  require(tolerance > 0, "solver tolerance must be positive");
  const Scalar stop = tolerance * (1 - mdp.discount) / mdp.discount;
  SoftSolveReport<Scalar> report{QFunction<Scalar>::zero(mdp.n_states, mdp.n_actions), 0, infinity<Scalar>(),
                                 temperature, false};
  while (report.iterations < max_iter) {
    QFunction<Scalar> next = backup(report.q);
    report.final_residual = sup_distance(next, report.q);
    report.q = std::move(next);
    ++report.iterations;
    if (report.final_residual <= stop) {
      report.converged = true;
      break;
    }
  }
  return report;
}

/// q*_tau, the fixed point of the soft Bellman optimality operator.
template <typename Scalar>
SoftSolveReport<Scalar> soft_value_iteration(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                             Scalar temperature, Scalar tolerance, int max_iter = 100000) {
  require(temperature > 0, "soft_value_iteration: temperature must be positive");
  return iterate_contraction<Scalar>(
      mdp, [&](const QFunction<Scalar>& q) { return soft_optimality_backup(mdp, reference, temperature, q); },
      tolerance, max_iter, temperature);
}

/// q^pi_tau, the fixed point of the soft policy-evaluation operator.
template <typename Scalar>
SoftSolveReport<Scalar> soft_policy_evaluation(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                               Scalar temperature, const Policy<Scalar>& policy, Scalar tolerance,
                                               int max_iter = 100000) {
  return iterate_contraction<Scalar>(
      mdp,
      [&](const QFunction<Scalar>& q) { return soft_policy_backup(mdp, reference, temperature, policy, q); },
      tolerance, max_iter, temperature);
}

/// q*_ref, the reference-optimal action-value function. Temperature is reported as 0.
template <typename Scalar>
SoftSolveReport<Scalar> reference_value_iteration(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                                  Scalar tolerance, int max_iter = 100000) {
  return iterate_contraction<Scalar>(
      mdp, [&](const QFunction<Scalar>& q) { return reference_optimality_backup(mdp, reference, q); }, tolerance,
      max_iter, Scalar(0));
}

template <typename Scalar>
QFunction<Scalar> require_converged(SoftSolveReport<Scalar> report, const char* what) {
  if (!report.converged)
    throw ConvergenceError(std::string(what) + ": iteration budget exhausted");
  return std::move(report.q);
}

// ---------------------------------------------------------------------------
// Reference-optimal and decoupled policies
// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar default_opt_tolerance(const QFunction<Scalar>& q) {
  return Scalar(1e-8) * (1 + q.sup_norm());
}

/// Indicator of A*(x): reference-supported actions within opt_tol of the supported maximum.
template <typename Scalar>
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> optimal_action_mask(const QFunction<Scalar>& q,
                                                                        const Policy<Scalar>& reference,
                                                                        Scalar opt_tol) {
  require(opt_tol >= 0, "opt_tol must be nonnegative");
  const Vector<Scalar> m = support_max(q, reference);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(q.values.rows(), q.values.cols());
  for (Index x = 0; x < q.values.rows(); ++x)
    for (Index a = 0; a < q.values.cols(); ++a)
      mask(x, a) = reference.probs(x, a) > 0 && q.values(x, a) >= m(x) - opt_tol;
  return mask;
}

/// pi*_ref: the reference restricted to A*(x) and renormalized.
template <typename Scalar>
Policy<Scalar> optimality_filtered_reference(const QFunction<Scalar>& q_star_ref, const Policy<Scalar>& reference,
                                             Scalar opt_tol) {
  const auto mask = optimal_action_mask(q_star_ref, reference, opt_tol);
  Policy<Scalar> pi{Matrix<Scalar>::Zero(reference.probs.rows(), reference.probs.cols())};
  for (Index x = 0; x < pi.probs.rows(); ++x) {
    for (Index a = 0; a < pi.probs.cols(); ++a)
      if (mask(x, a)) pi.probs(x, a) = reference.probs(x, a);
    pi.probs.row(x) /= pi.probs.row(x).sum();
  }
  return pi;
}

template <typename Scalar>
Policy<Scalar> optimality_filtered_reference(const QFunction<Scalar>& q_star_ref, const Policy<Scalar>& reference) {
  return optimality_filtered_reference(q_star_ref, reference, default_opt_tolerance(q_star_ref));
}

/// pi^{tau, sigma} = G_tau q*_sigma.
template <typename Scalar>
Policy<Scalar> decoupled_policy(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                const DecoupleConfig<Scalar>& cfg, Scalar tolerance, int max_iter = 100000) {
  cfg.validate();
  const auto q = require_converged(
      soft_value_iteration(mdp, reference, cfg.decoupled_temperature, tolerance, max_iter), "decoupled_policy");
  return boltzmann_policy(q, reference, cfg.target_temperature);
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

template <typename Scalar, typename DerivedP, typename DerivedQ>
Scalar tv_distance(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  require(p.size() == q.size(), "tv_distance: length mismatch");
  return Scalar(0.5) * (p - q).cwiseAbs().sum();
}

/// sup_x TV(a_x, b_x).
template <typename Scalar>
Scalar sup_tv(const Policy<Scalar>& a, const Policy<Scalar>& b) {
  Scalar best = 0;
  for (Index x = 0; x < a.probs.rows(); ++x) best = std::max(best, tv_distance<Scalar>(a.probs.row(x), b.probs.row(x)));
  return best;
}

template <typename Scalar>
struct TvBoundState {
  Scalar lhs;         // TV((G q)_x, (G q')_x)
  Scalar delta;       // ref-essential sup of |q - q'| at x
  Scalar rhs_min;     // min{sqrt(delta / tau), sinh(4 delta / tau) / 2}
  Scalar rhs_linear;  // (2e - 3) / 4 * delta / tau, +inf unless delta < tau / 2
  bool holds;
};

template <typename Scalar>
struct TvBoundReport {
  std::vector<TvBoundState<Scalar>> states;
  bool holds = true;
};

/// Checks the Boltzmann-Gibbs total-variation bound statewise.
template <typename Scalar>
TvBoundReport<Scalar> tv_bound_check(const QFunction<Scalar>& q, const QFunction<Scalar>& q_other,
                                     const Policy<Scalar>& reference, Scalar temperature) {
  require(temperature > 0, "tv_bound_check: temperature must be positive");
  const Policy<Scalar> p = boltzmann_policy(q, reference, temperature);
  const Policy<Scalar> p_other = boltzmann_policy(q_other, reference, temperature);
  // Rounding slack on the left-hand side only.
  const Scalar slack = Scalar(16) * std::numeric_limits<Scalar>::epsilon();
  const Scalar linear_coeff = (Scalar(2) * std::exp(Scalar(1)) - 3) / 4;
  TvBoundReport<Scalar> report;
  for (Index x = 0; x < q.values.rows(); ++x) {
    Scalar delta = 0;
    for (Index a = 0; a < q.values.cols(); ++a)
      if (reference.probs(x, a) > 0) delta = std::max(delta, std::abs(q.values(x, a) - q_other.values(x, a)));
    const Scalar ratio = delta / temperature;
    TvBoundState<Scalar> s;
    s.lhs = tv_distance<Scalar>(p.probs.row(x), p_other.probs.row(x));
    s.delta = delta;
    s.rhs_min = std::min(std::sqrt(ratio), Scalar(0.5) * std::sinh(4 * ratio));
    s.rhs_linear = delta < temperature / 2 ? linear_coeff * ratio : infinity<Scalar>();
    s.holds = s.lhs - slack <= s.rhs_min && s.lhs - slack <= s.rhs_linear;
    report.holds = report.holds && s.holds;
    report.states.push_back(s);
  }
  return report;
}

/// M_tau(q) = sup_x ( max_{supp ref_x} q(x, .) - v_tau q(x) ).
template <typename Scalar>
Scalar m_tau_gap(const QFunction<Scalar>& q, const Policy<Scalar>& reference, Scalar temperature) {
  const Vector<Scalar> m = support_max(q, reference);
  const Vector<Scalar> v = log_sum_exp_value(q, reference, temperature).values;
  return std::max(Scalar(0), (m - v).maxCoeff());
}

/// min_x ref_x(A*(x)), the coverage constant for a given q.
template <typename Scalar>
Scalar optimal_set_mass(const QFunction<Scalar>& q, const Policy<Scalar>& reference, Scalar opt_tol) {
  const auto mask = optimal_action_mask(q, reference, opt_tol);
  Scalar p_min = 1;
  for (Index x = 0; x < q.values.rows(); ++x) {
    Scalar mass = 0;
    for (Index a = 0; a < q.values.cols(); ++a)
      if (mask(x, a)) mass += reference.probs(x, a);
    p_min = std::min(p_min, mass);
  }
  return p_min;
}

// ---------------------------------------------------------------------------
// Sampling helpers and soft Q-learning
// ---------------------------------------------------------------------------

/// Uniform double in [0, 1) built from the top 53 bits of a 64-bit draw.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw from a cumulative weight vector whose last entry is the total.
template <typename Vec>
Index sample_cumulative(const Vec& cumulative, std::mt19937_64& rng) {
  const double u = unit_uniform(rng) * static_cast<double>(cumulative(cumulative.size() - 1));
  // Index-based search: row expressions of column-major matrices are strided.
  Index lo = 0, hi = cumulative.size() - 1;
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (u < static_cast<double>(cumulative(mid)))
      hi = mid;
    else
      lo = mid + 1;
  }
  const Index i = lo;
  return i;
}

/// alpha_t = c / (c + t).
struct HarmonicStepSize {
  double c = 1000.0;
  double operator()(std::int64_t t) const { return c / (c + static_cast<double>(t)); }
};

using StepSizeSchedule = std::function<double(std::int64_t)>;

/**
 * Tabular soft Q-learning. Each step draws (x, a) i.i.d. from the discounted
 * occupancy of the behavior policy, then x' ~ P(. | x, a), and moves q(x, a)
 * toward r(x, a) + gamma v_tau q(x') with step size alpha_t.
 */
template <typename Scalar>
QFunction<Scalar> soft_q_learning(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference, Scalar temperature,
                                  std::int64_t steps, const StepSizeSchedule& step_size,
                                  const Policy<Scalar>& behavior, std::uint64_t seed,
                                  const Vector<Scalar>& initial_dist) {
  require(temperature > 0, "soft_q_learning: temperature must be positive");
  require(steps >= 0, "soft_q_learning: steps must be nonnegative");
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a)
      if (reference.probs(x, a) > 0 && !(behavior.probs(x, a) > 0))
        throw SupportError(x, "soft_q_learning: behavior policy must cover the reference support");

  const OccupancyMeasure<double> occ =
      occupancy_measure(mdp.template cast<double>(), behavior.template cast<double>(),
                        Eigen::VectorXd(initial_dist.template cast<double>()));
  Eigen::VectorXd pair_cdf(mdp.n_pairs());
  double acc = 0;
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a) pair_cdf(mdp.pair(x, a)) = acc += occ.mass(x, a);
  Eigen::MatrixXd next_cdf(mdp.n_pairs(), mdp.n_states);
  for (Index i = 0; i < mdp.n_pairs(); ++i) {
    double c = 0;
    for (Index y = 0; y < mdp.n_states; ++y) next_cdf(i, y) = c += static_cast<double>(mdp.transition(i, y));
  }

  // Cached soft values; only the row of the updated state changes per step.
  QFunction<Scalar> q = QFunction<Scalar>::zero(mdp.n_states, mdp.n_actions);
  Vector<Scalar> v = log_sum_exp_value(q, reference, temperature).values;
  std::mt19937_64 rng(seed);
  for (std::int64_t t = 0; t < steps; ++t) {
    const double alpha = step_size(t);
    if (!(alpha > 0 && alpha <= 1))
      throw std::invalid_argument("soft_q_learning: step size must lie in (0, 1]");
    const Index i = sample_cumulative(pair_cdf, rng);
    const Index x = i / mdp.n_actions;
    const Index a = i % mdp.n_actions;
    const Eigen::RowVectorXd row = next_cdf.row(i);
    const Index y = sample_cumulative(row, rng);
    const Scalar target = mdp.reward(x, a) + mdp.discount * v(y);
    q.values(x, a) += static_cast<Scalar>(alpha) * (target - q.values(x, a));

    Scalar m = -infinity<Scalar>();
    for (Index b = 0; b < mdp.n_actions; ++b)
      if (reference.probs(x, b) > 0) m = std::max(m, q.values(x, b));
    Scalar s = 0;
    for (Index b = 0; b < mdp.n_actions; ++b)
      if (reference.probs(x, b) > 0) s += reference.probs(x, b) * std::exp((q.values(x, b) - m) / temperature);
    v(x) = m + temperature * std::log(s);
  }
  return q;
}

}  // namespace derl
