#pragma once

// Exact (unregularized) primitives on tabular MDPs: validation, induced
// kernels, policy evaluation, occupancy measures and the KL regularizer.

#include "derl/core.hpp"

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

namespace derl {

struct Violation {
  std::string field;          // "transition", "reward", "discount", ...
  std::vector<Index> index;   // offending position, empty for scalars
  std::string message;

  std::string to_string() const {
    std::ostringstream os;
    os << field;
    for (Index i : index) os << '[' << i << ']';
    os << ": " << message;
    return os.str();
  }
};

template <typename Scalar>
constexpr Scalar stochastic_tolerance() {
  return std::max<Scalar>(Scalar(1e-12), Scalar(64) * std::numeric_limits<Scalar>::epsilon());
}

/// Lists every broken invariant; empty iff the MDP is well formed.
template <typename Scalar>
std::vector<Violation> validate_mdp(const TabularMdp<Scalar>& mdp) {
  std::vector<Violation> out;
  if (mdp.n_states <= 0) out.push_back({"n_states", {}, "must be positive"});
  if (mdp.n_actions <= 0) out.push_back({"n_actions", {}, "must be positive"});
  if (!(mdp.discount > 0 && mdp.discount < 1))
    out.push_back({"discount", {}, "must lie strictly between 0 and 1"});
  if (!out.empty() && (mdp.n_states <= 0 || mdp.n_actions <= 0)) return out;

  if (mdp.transition.rows() != mdp.n_pairs() || mdp.transition.cols() != mdp.n_states) {
    out.push_back({"transition", {}, "shape must be [n_states x n_actions x n_states]"});
  } else {
    const Scalar tol = stochastic_tolerance<Scalar>();
    for (Index x = 0; x < mdp.n_states; ++x) {
      for (Index a = 0; a < mdp.n_actions; ++a) {
        const auto row = mdp.next(x, a);
        for (Index y = 0; y < mdp.n_states; ++y) {
          if (!std::isfinite(row(y)) || row(y) < 0)
            out.push_back({"transition", {x, a, y}, "probability must be finite and nonnegative"});
        }
        const Scalar total = row.sum();
        if (!(std::abs(total - Scalar(1)) <= tol)) {
          std::ostringstream os;
          os << "row sums to " << total << ", expected 1";
          out.push_back({"transition", {x, a}, os.str()});
        }
      }
    }
  }
  if (mdp.reward.rows() != mdp.n_states || mdp.reward.cols() != mdp.n_actions) {
    out.push_back({"reward", {}, "shape must be [n_states x n_actions]"});
  } else {
    for (Index x = 0; x < mdp.n_states; ++x)
      for (Index a = 0; a < mdp.n_actions; ++a)
        if (!std::isfinite(mdp.reward(x, a))) out.push_back({"reward", {x, a}, "must be finite"});
  }
  return out;
}

/// Violations of row-stochasticity for a policy (or the reference policy).
template <typename Scalar>
std::vector<Violation> validate_policy(const Policy<Scalar>& policy, const std::string& field = "policy") {
  std::vector<Violation> out;
  const Scalar tol = stochastic_tolerance<Scalar>();
  for (Index x = 0; x < policy.probs.rows(); ++x) {
    for (Index a = 0; a < policy.probs.cols(); ++a)
      if (!std::isfinite(policy.probs(x, a)) || policy.probs(x, a) < 0)
        out.push_back({field, {x, a}, "probability must be finite and nonnegative"});
    if (!(std::abs(policy.probs.row(x).sum() - Scalar(1)) <= tol))
      out.push_back({field, {x}, "row does not sum to 1"});
  }
  return out;
}

/// P^pi(x, x') = sum_a pi(a|x) P(x'|x, a).
template <typename Scalar>
Matrix<Scalar> policy_state_kernel(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& policy) {
  require_shape(mdp, policy, "policy_state_kernel");
  Matrix<Scalar> kernel = Matrix<Scalar>::Zero(mdp.n_states, mdp.n_states);
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a)
      kernel.row(x) += policy.probs(x, a) * mdp.next(x, a);
  return kernel;
}

/// State-action to state-action kernel: M((x,a),(x',a')) = P(x'|x,a) pi(a'|x').
template <typename Scalar>
Matrix<Scalar> policy_pair_kernel(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& policy) {
  Matrix<Scalar> kernel(mdp.n_pairs(), mdp.n_pairs());
  for (Index i = 0; i < mdp.n_pairs(); ++i)
    for (Index y = 0; y < mdp.n_states; ++y)
      for (Index b = 0; b < mdp.n_actions; ++b)
        kernel(i, mdp.pair(y, b)) = mdp.transition(i, y) * policy.probs(y, b);
  return kernel;
}

namespace detail {

// Solves (I - gamma * M) x = rhs with one round of iterative refinement and
// checks the sup-norm residual.
template <typename Scalar>
Vector<Scalar> solve_discounted(const Matrix<Scalar>& kernel, Scalar gamma, const Vector<Scalar>& rhs,
                                Scalar residual_tol, const char* what) {
  const Index n = kernel.rows();
  const Matrix<Scalar> system = Matrix<Scalar>::Identity(n, n) - gamma * kernel;
  const Eigen::PartialPivLU<Matrix<Scalar>> lu(system);
  Vector<Scalar> sol = lu.solve(rhs);
  Vector<Scalar> residual = rhs - system * sol;
  sol += lu.solve(residual);
  residual = rhs - system * sol;
  const Scalar scale = std::max<Scalar>(Scalar(1), rhs.cwiseAbs().maxCoeff() / (1 - gamma));
  if (!sol.allFinite() || residual.cwiseAbs().maxCoeff() > residual_tol * scale)
    throw ConvergenceError(std::string(what) + ": linear solve did not reach its residual target");
  return sol;
}

}  // namespace detail

/// q^pi as the solution of q = r + gamma P^pi q.
template <typename Scalar>
QFunction<Scalar> exact_policy_evaluation(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& policy) {
  require_shape(mdp, policy, "exact_policy_evaluation");
  Vector<Scalar> r(mdp.n_pairs());
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a) r(mdp.pair(x, a)) = mdp.reward(x, a);
  const Scalar tol = std::max<Scalar>(Scalar(1e-12), Scalar(256) * std::numeric_limits<Scalar>::epsilon());
  const Vector<Scalar> q =
      detail::solve_discounted<Scalar>(policy_pair_kernel(mdp, policy), mdp.discount, r, tol,
                                       "exact_policy_evaluation");
  QFunction<Scalar> out{Matrix<Scalar>(mdp.n_states, mdp.n_actions)};
  for (Index x = 0; x < mdp.n_states; ++x)
    for (Index a = 0; a < mdp.n_actions; ++a) out.values(x, a) = q(mdp.pair(x, a));
  return out;
}

/**
 * Discounted occupancy mu = (1 - gamma) sum_t gamma^t mu_t, obtained from the
 * Bellman-flow equation nu = (1 - gamma) nu_0 + gamma (P^pi)^T nu and
 * mu(x, a) = nu(x) pi(a | x).
 */
template <typename Scalar>
OccupancyMeasure<Scalar> occupancy_measure(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& policy,
                                           const Vector<Scalar>& initial_dist) {
  require_shape(mdp, policy, "occupancy_measure");
  require(initial_dist.size() == mdp.n_states, "occupancy_measure: initial_dist has wrong length");
  require(std::abs(initial_dist.sum() - Scalar(1)) <= Scalar(1e3) * stochastic_tolerance<Scalar>() &&
              (initial_dist.array() >= 0).all(),
          "occupancy_measure: initial_dist must be a probability vector");
  const Matrix<Scalar> kernel_t = policy_state_kernel(mdp, policy).transpose();
  const Vector<Scalar> rhs = (1 - mdp.discount) * initial_dist;
  const Scalar tol = std::max<Scalar>(Scalar(1e-13), Scalar(256) * std::numeric_limits<Scalar>::epsilon());
  Vector<Scalar> nu = detail::solve_discounted<Scalar>(kernel_t, mdp.discount, rhs, tol, "occupancy_measure");
  nu = nu.cwiseMax(Scalar(0));
  OccupancyMeasure<Scalar> occ{Matrix<Scalar>(mdp.n_states, mdp.n_actions), initial_dist};
  for (Index x = 0; x < mdp.n_states; ++x) occ.mass.row(x) = nu(x) * policy.probs.row(x);
  return occ;
}

/// sup_x | nu(x) - (1 - gamma) nu_0(x) - gamma sum_{y,a} P(x | y, a) mu(y, a) |.
template <typename Scalar>
Scalar occupancy_flow_residual(const TabularMdp<Scalar>& mdp, const OccupancyMeasure<Scalar>& occ) {
  Vector<Scalar> inflow = (1 - mdp.discount) * occ.initial_dist;
  for (Index y = 0; y < mdp.n_states; ++y)
    for (Index a = 0; a < mdp.n_actions; ++a)
      inflow += mdp.discount * occ.mass(y, a) * mdp.next(y, a).transpose();
  return (occ.state_marginal() - inflow).cwiseAbs().maxCoeff();
}

/// Conditional policy of an occupancy measure; zero-marginal states fall back to the reference.
template <typename Scalar>
Policy<Scalar> conditional_policy(const OccupancyMeasure<Scalar>& occ, const Policy<Scalar>& reference) {
  Policy<Scalar> pi{reference.probs};
  const Vector<Scalar> nu = occ.state_marginal();
  for (Index x = 0; x < nu.size(); ++x)
    if (nu(x) > 0) pi.probs.row(x) = occ.mass.row(x) / nu(x);
  return pi;
}

/// R(mu) = sum_x nu(x) KL(pi^mu_x || ref_x); +infinity on absolute-continuity failure.
template <typename Scalar>
Scalar regularizer(const OccupancyMeasure<Scalar>& occ, const Policy<Scalar>& reference) {
  require(occ.mass.rows() == reference.probs.rows() && occ.mass.cols() == reference.probs.cols(),
          "regularizer: occupancy and reference shapes differ");
  const Vector<Scalar> nu = occ.state_marginal();
  Scalar total = 0;
  for (Index x = 0; x < nu.size(); ++x) {
    if (!(nu(x) > 0)) continue;
    const Scalar kl = kl_divergence<Scalar>(occ.mass.row(x) / nu(x), reference.probs.row(x));
    if (std::isinf(kl)) return infinity<Scalar>();
    total += nu(x) * kl;
  }
  return total;
}

/// J_tau(mu) = <r, mu> - tau R(mu); the regularizer is dropped entirely at tau = 0.
template <typename Scalar>
Scalar erl_objective(const TabularMdp<Scalar>& mdp, const OccupancyMeasure<Scalar>& occ,
                     const Policy<Scalar>& reference, Scalar temperature) {
  require(temperature >= 0, "erl_objective: temperature must be nonnegative");
  const Scalar reward = (mdp.reward.array() * occ.mass.array()).sum();
  if (temperature == 0) return reward;
  const Scalar reg = regularizer(occ, reference);
  if (std::isinf(reg)) return -infinity<Scalar>();
  return reward - temperature * reg;
}

/// Total variation distance between occupancy measures.
template <typename Scalar>
Scalar occupancy_tv(const OccupancyMeasure<Scalar>& a, const OccupancyMeasure<Scalar>& b) {
  return Scalar(0.5) * (a.mass - b.mass).cwiseAbs().sum();
}

}  // namespace derl
