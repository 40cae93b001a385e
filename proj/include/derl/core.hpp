#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace derl {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Raised when a solver exhausts its iteration budget or a linear solve
/// fails to reach its residual target.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a policy puts mass on an action outside the reference support.
class SupportError : public std::invalid_argument {
 public:
  SupportError(Index state, const std::string& what)
      : std::invalid_argument(what), state_(state) {}
  Index state() const noexcept { return state_; }

 private:
  Index state_;
};

/**
 * Finite discounted MDP.
 *
 * The transition tensor P[x][a][x'] is stored as a matrix with one row per
 * state-action pair; row index is x * n_actions + a.
 */
template <typename Scalar>
struct TabularMdp {
  Index n_states = 0;
  Index n_actions = 0;
  Matrix<Scalar> transition;  // (n_states * n_actions) x n_states
  Matrix<Scalar> reward;      // n_states x n_actions
  Scalar discount = Scalar(0.5);

  Index pair(Index x, Index a) const { return x * n_actions + a; }
  Index n_pairs() const { return n_states * n_actions; }

  auto next(Index x, Index a) const { return transition.row(pair(x, a)); }

  template <typename Other>
  TabularMdp<Other> cast() const {
    return {n_states, n_actions, transition.template cast<Other>(),
            reward.template cast<Other>(), static_cast<Other>(discount)};
  }
};

/// Per-state action distribution; also used for the reference policy.
template <typename Scalar>
struct Policy {
  Matrix<Scalar> probs;  // n_states x n_actions

  Index n_states() const { return probs.rows(); }
  Index n_actions() const { return probs.cols(); }

  static Policy uniform(Index n_states, Index n_actions) {
    return {Matrix<Scalar>::Constant(n_states, n_actions, Scalar(1) / Scalar(n_actions))};
  }

  static Policy deterministic(const std::vector<Index>& actions, Index n_actions) {
    Policy p{Matrix<Scalar>::Zero(static_cast<Index>(actions.size()), n_actions)};
    for (std::size_t x = 0; x < actions.size(); ++x) p.probs(static_cast<Index>(x), actions[x]) = 1;
    return p;
  }

  template <typename Other>
  Policy<Other> cast() const {
    return {probs.template cast<Other>()};
  }
};

template <typename Scalar>
struct QFunction {
  Matrix<Scalar> values;  // n_states x n_actions

  static QFunction zero(Index n_states, Index n_actions) {
    return {Matrix<Scalar>::Zero(n_states, n_actions)};
  }
  Scalar sup_norm() const { return values.cwiseAbs().maxCoeff(); }
};

template <typename Scalar>
struct ValueFunction {
  Vector<Scalar> values;  // n_states
};

/// Discounted state-action occupancy together with the initial state law.
template <typename Scalar>
struct OccupancyMeasure {
  Matrix<Scalar> mass;          // n_states x n_actions
  Vector<Scalar> initial_dist;  // n_states

  Vector<Scalar> state_marginal() const { return mass.rowwise().sum(); }
};

template <typename Scalar>
Scalar sup_distance(const QFunction<Scalar>& a, const QFunction<Scalar>& b) {
  return (a.values - b.values).cwiseAbs().maxCoeff();
}

template <typename Scalar>
constexpr Scalar infinity() {
  return std::numeric_limits<Scalar>::infinity();
}

/// KL(p || q) with 0 log(0/q) = 0 and +inf when p puts mass where q has none.
template <typename Scalar, typename DerivedP, typename DerivedQ>
Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  Scalar kl = 0;
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p(i);
    if (pi <= 0) continue;
    const Scalar qi = q(i);
    if (qi <= 0) return infinity<Scalar>();
    kl += pi * std::log(pi / qi);
  }
  return kl;
}

inline void require(bool condition, const char* message) {
  if (!condition) throw std::invalid_argument(message);
}

template <typename Scalar>
void require_shape(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& policy, const char* what) {
  if (policy.probs.rows() != mdp.n_states || policy.probs.cols() != mdp.n_actions)
    throw std::invalid_argument(std::string(what) + ": policy shape does not match the MDP");
}

template <typename Scalar>
void require_shape(const TabularMdp<Scalar>& mdp, const QFunction<Scalar>& q, const char* what) {
  if (q.values.rows() != mdp.n_states || q.values.cols() != mdp.n_actions)
    throw std::invalid_argument(std::string(what) + ": q-function shape does not match the MDP");
}

}  // namespace derl
