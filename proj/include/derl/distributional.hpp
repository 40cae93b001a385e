#pragma once

// Categorical return-distribution functions on a shared atom grid, the
// Wasserstein metrics between them, Cramer projection, and the soft and
// classic distributional Bellman backups built on top.

#include "derl/core.hpp"
#include "derl/mdp.hpp"
#include "derl/soft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace derl {

template <typename Scalar>
struct AtomGrid {
  Vector<Scalar> atoms;  // strictly increasing
  Scalar spacing = 0;    // nonzero only for uniform grids

  static AtomGrid uniform(Scalar lo, Scalar hi, Index count) {
    require(count >= 2, "AtomGrid: need at least two atoms");
    require(lo < hi, "AtomGrid: empty range");
    AtomGrid g;
    g.atoms = Vector<Scalar>::LinSpaced(count, lo, hi);
    g.spacing = (hi - lo) / static_cast<Scalar>(count - 1);
    return g;
  }

  static AtomGrid from_atoms(Vector<Scalar> atoms) {
    require(atoms.size() >= 2, "AtomGrid: need at least two atoms");
    for (Index k = 1; k < atoms.size(); ++k) require(atoms(k) > atoms(k - 1), "AtomGrid: atoms must increase");
    return {std::move(atoms), Scalar(0)};
  }

  Index size() const { return atoms.size(); }
  Scalar lo() const { return atoms(0); }
  Scalar hi() const { return atoms(atoms.size() - 1); }

  template <typename Other>
  AtomGrid<Other> cast() const {
    return {atoms.template cast<Other>(), static_cast<Other>(spacing)};
  }
};

/// 128 atoms covering [min r / (1 - gamma) - 1, max r / (1 - gamma) + 1].
template <typename Scalar>
AtomGrid<Scalar> default_grid(const TabularMdp<Scalar>& mdp, Index count = 128) {
  const Scalar scale = 1 / (1 - mdp.discount);
  return AtomGrid<Scalar>::uniform(std::min<Scalar>(0, mdp.reward.minCoeff()) * scale - 1,
                                   std::max<Scalar>(0, mdp.reward.maxCoeff()) * scale + 1, count);
}

/// Finitely supported distribution given as weighted particles (not necessarily sorted).
template <typename Scalar>
struct DiscreteDistribution {
  std::vector<Scalar> locations;
  std::vector<Scalar> weights;

  Scalar mean() const {
    Scalar m = 0;
    for (std::size_t i = 0; i < locations.size(); ++i) m += locations[i] * weights[i];
    return m;
  }
  Scalar total_mass() const { return std::accumulate(weights.begin(), weights.end(), Scalar(0)); }

  static DiscreteDistribution point_mass(Scalar at) { return {{at}, {Scalar(1)}}; }
};

/// zeta_{x,a} as probability rows over a shared grid; row index x * n_actions + a.
template <typename Scalar>
struct ReturnDistributionFn {
  AtomGrid<Scalar> grid;
  Index n_states = 0;
  Index n_actions = 0;
  Matrix<Scalar> probs;       // (n_states * n_actions) x K
  Scalar clipped_mass = 0;    // largest per-slice mass clipped to the grid boundary when produced

  Index pair(Index x, Index a) const { return x * n_actions + a; }
  auto slice(Index x, Index a) const { return probs.row(pair(x, a)); }
  auto slice(Index x, Index a) { return probs.row(pair(x, a)); }

  DiscreteDistribution<Scalar> distribution(Index x, Index a) const {
    DiscreteDistribution<Scalar> d;
    d.locations.assign(grid.atoms.data(), grid.atoms.data() + grid.size());
    const auto row = slice(x, a);
    d.weights.resize(static_cast<std::size_t>(grid.size()));
    for (Index k = 0; k < grid.size(); ++k) d.weights[static_cast<std::size_t>(k)] = row(k);
    return d;
  }

  template <typename Other>
  ReturnDistributionFn<Other> cast() const {
    return {grid.template cast<Other>(), n_states, n_actions, probs.template cast<Other>(),
            static_cast<Other>(clipped_mass)};
  }
};

/// eta_x, the policy-mixed per-state return distribution.
template <typename Scalar>
struct StateReturnDistribution {
  AtomGrid<Scalar> grid;
  Matrix<Scalar> probs;  // n_states x K

  DiscreteDistribution<Scalar> distribution(Index x) const {
    DiscreteDistribution<Scalar> d;
    d.locations.assign(grid.atoms.data(), grid.atoms.data() + grid.size());
    d.weights.resize(static_cast<std::size_t>(grid.size()));
    for (Index k = 0; k < grid.size(); ++k) d.weights[static_cast<std::size_t>(k)] = probs(x, k);
    return d;
  }
};

/// Exact particle representation, one distribution per state-action pair.
template <typename Scalar>
struct ParticleReturnFn {
  Index n_states = 0;
  Index n_actions = 0;
  std::vector<DiscreteDistribution<Scalar>> slices;

  const DiscreteDistribution<Scalar>& at(Index x, Index a) const {
    return slices[static_cast<std::size_t>(x * n_actions + a)];
  }
};

// ---------------------------------------------------------------------------
// Wasserstein metrics
// ---------------------------------------------------------------------------

/**
 * w_p between two finitely supported laws, integrating |F1^-1(u) - F2^-1(u)|^p
 * exactly over the merged breakpoints of the two cumulative distribution
 * functions. Zero-weight particles are ignored; grids may differ.
 */
template <typename Scalar>
Scalar wasserstein_p(const DiscreteDistribution<Scalar>& first, const DiscreteDistribution<Scalar>& second,
                     Scalar p) {
  require(p >= 1, "wasserstein_p: p must be at least 1");
  auto sorted = [](const DiscreteDistribution<Scalar>& d) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < d.locations.size(); ++i)
      if (d.weights[i] > 0) order.push_back(i);
    if (!std::is_sorted(order.begin(), order.end(),
                        [&](std::size_t i, std::size_t j) { return d.locations[i] < d.locations[j]; }))
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t i, std::size_t j) { return d.locations[i] < d.locations[j]; });
    return order;
  };
  const auto o1 = sorted(first);
  const auto o2 = sorted(second);
  if (o1.empty() || o2.empty()) return 0;

  std::size_t i = 0, j = 0;
  Scalar c1 = first.weights[o1[0]], c2 = second.weights[o2[0]];
  Scalar u = 0, acc = 0;
  while (i < o1.size() && j < o2.size()) {
    const Scalar next = std::min(c1, c2);
    const Scalar gap = std::abs(first.locations[o1[i]] - second.locations[o2[j]]);
    if (next > u) acc += (next - u) * (p == 1 ? gap : std::pow(gap, p));
    u = std::max(u, next);
    if (c1 <= next) {
      if (++i < o1.size()) c1 += first.weights[o1[i]];
    }
    if (c2 <= next) {
      if (++j < o2.size()) c2 += second.weights[o2[j]];
    }
  }
  return p == 1 ? acc : std::pow(acc, 1 / p);
}

/// sup over (x, a) of w_p(z1_{x,a}, z2_{x,a}).
template <typename Scalar>
Scalar sup_wasserstein(const ReturnDistributionFn<Scalar>& z1, const ReturnDistributionFn<Scalar>& z2, Scalar p) {
  require(z1.n_states == z2.n_states && z1.n_actions == z2.n_actions, "sup_wasserstein: shape mismatch");
  Scalar best = 0;
  for (Index x = 0; x < z1.n_states; ++x)
    for (Index a = 0; a < z1.n_actions; ++a)
      best = std::max(best, wasserstein_p(z1.distribution(x, a), z2.distribution(x, a), p));
  return best;
}

template <typename Scalar>
Scalar sup_wasserstein(const ParticleReturnFn<Scalar>& z1, const ParticleReturnFn<Scalar>& z2, Scalar p) {
  require(z1.n_states == z2.n_states && z1.n_actions == z2.n_actions, "sup_wasserstein: shape mismatch");
  Scalar best = 0;
  for (std::size_t i = 0; i < z1.slices.size(); ++i)
    best = std::max(best, wasserstein_p(z1.slices[i], z2.slices[i], p));
  return best;
}

/// ( sum_{x,a} weights(x, a) w_p(z1_{x,a}, z2_{x,a})^q )^{1/q}.
template <typename Scalar>
Scalar mu_weighted_wasserstein(const ReturnDistributionFn<Scalar>& z1, const ReturnDistributionFn<Scalar>& z2,
                               Scalar p, Scalar q_exp, const Matrix<Scalar>& weights) {
  require(z1.n_states == z2.n_states && z1.n_actions == z2.n_actions, "mu_weighted_wasserstein: shape mismatch");
  require(weights.rows() == z1.n_states && weights.cols() == z1.n_actions,
          "mu_weighted_wasserstein: weight shape mismatch");
  require(q_exp >= 1, "mu_weighted_wasserstein: outer exponent must be at least 1");
  Scalar acc = 0;
  for (Index x = 0; x < z1.n_states; ++x)
    for (Index a = 0; a < z1.n_actions; ++a)
      if (weights(x, a) > 0)
        acc += weights(x, a) * std::pow(wasserstein_p(z1.distribution(x, a), z2.distribution(x, a), p), q_exp);
  return std::pow(acc, 1 / q_exp);
}

// ---------------------------------------------------------------------------
// Cramer projection
// ---------------------------------------------------------------------------

namespace detail {

// Splits mass w at loc between its two neighbouring atoms; mass outside the
// grid lands on the boundary atom and is added to `clipped`.
template <typename Scalar, typename Row>
void project_particle(const AtomGrid<Scalar>& grid, Scalar loc, Scalar w, Row&& out, Scalar& clipped) {
  const Index last = grid.size() - 1;
  // Positions within this fraction of a cell past the boundary count as rounding, not clipping.
  constexpr Scalar kEdge = Scalar(1e-6);
  Scalar b;
  if (grid.spacing > 0) {
    b = (loc - grid.lo()) / grid.spacing;
  } else {
    const auto* begin = grid.atoms.data();
    const auto* it = std::upper_bound(begin, begin + grid.size(), loc);
    const Index u = static_cast<Index>(it - begin);
    if (u == 0) {
      b = (loc - grid.lo()) / (grid.atoms(1) - grid.atoms(0));
    } else if (u > last) {
      b = last + (loc - grid.hi()) / (grid.atoms(last) - grid.atoms(last - 1));
    } else {
      b = (u - 1) + (loc - grid.atoms(u - 1)) / (grid.atoms(u) - grid.atoms(u - 1));
    }
  }
  if (!(b > 0)) {
    out(0) += w;
    if (b < -kEdge) clipped += w;
    return;
  }
  if (b >= last) {
    out(last) += w;
    if (b > last + kEdge) clipped += w;
    return;
  }
  const Index l = static_cast<Index>(std::floor(b));
  const Scalar f = b - static_cast<Scalar>(l);
  out(l) += w * (1 - f);
  out(l + 1) += w * f;
}

}  // namespace detail

template <typename Scalar>
struct CategoricalProjection {
  Vector<Scalar> probs;
  Scalar clipped_mass = 0;
};

/**
 * Projects weighted particles onto the grid by splitting each particle's
 * mass between its two nearest atoms in proportion to proximity. Total mass
 * is kept; the mean is kept for particles inside [atoms.front, atoms.back].
 */
template <typename Scalar>
CategoricalProjection<Scalar> cramer_projection(const DiscreteDistribution<Scalar>& particles,
                                                const AtomGrid<Scalar>& grid) {
  CategoricalProjection<Scalar> out{Vector<Scalar>::Zero(grid.size()), Scalar(0)};
  for (std::size_t i = 0; i < particles.locations.size(); ++i) {
    require(std::isfinite(particles.locations[i]), "cramer_projection: particle location must be finite");
    detail::project_particle(grid, particles.locations[i], particles.weights[i], out.probs, out.clipped_mass);
  }
  return out;
}

/// Every slice set to the projection of a point mass at `value`.
template <typename Scalar>
ReturnDistributionFn<Scalar> point_mass_distribution(const AtomGrid<Scalar>& grid, Index n_states, Index n_actions,
                                                     Scalar value) {
  const auto proj = cramer_projection(DiscreteDistribution<Scalar>::point_mass(value), grid);
  ReturnDistributionFn<Scalar> z{grid, n_states, n_actions, Matrix<Scalar>(n_states * n_actions, grid.size()),
                                 proj.clipped_mass};
  z.probs.rowwise() = proj.probs.transpose();
  return z;
}

// ---------------------------------------------------------------------------
// Distributional backups
// ---------------------------------------------------------------------------

template <typename Scalar>
QFunction<Scalar> mean_extraction(const ReturnDistributionFn<Scalar>& z) {
  const Vector<Scalar> means = z.probs * z.grid.atoms;
  QFunction<Scalar> q{Matrix<Scalar>(z.n_states, z.n_actions)};
  for (Index x = 0; x < z.n_states; ++x)
    for (Index a = 0; a < z.n_actions; ++a) q.values(x, a) = means(z.pair(x, a));
  return q;
}

/// eta_x = sum_a pi_x(a) zeta_{x,a}.
template <typename Scalar>
StateReturnDistribution<Scalar> mix_state_distribution(const ReturnDistributionFn<Scalar>& z,
                                                       const Policy<Scalar>& policy) {
  require(policy.probs.rows() == z.n_states && policy.probs.cols() == z.n_actions,
          "mix_state_distribution: shape mismatch");
  StateReturnDistribution<Scalar> eta{z.grid, Matrix<Scalar>::Zero(z.n_states, z.grid.size())};
  for (Index x = 0; x < z.n_states; ++x)
    for (Index a = 0; a < z.n_actions; ++a) eta.probs.row(x) += policy.probs(x, a) * z.slice(x, a);
  return eta;
}

namespace detail {

// For each (x, a): mixture over (x', a') with weight P(x'|x,a) pi(a'|x') of
// zeta_{x',a'} pushed through z -> r(x, a) - penalty(x') + gamma z, projected.
template <typename Scalar>
ReturnDistributionFn<Scalar> categorical_backup(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& policy,
                                                const Vector<Scalar>& penalty, const ReturnDistributionFn<Scalar>& z) {
  require(z.n_states == mdp.n_states && z.n_actions == mdp.n_actions, "distributional backup: shape mismatch");
  require_shape(mdp, policy, "distributional backup");
  const Index K = z.grid.size();
  ReturnDistributionFn<Scalar> out{z.grid, z.n_states, z.n_actions, Matrix<Scalar>::Zero(z.probs.rows(), K), 0};
  Vector<Scalar> row(K);
  for (Index x = 0; x < mdp.n_states; ++x) {
    for (Index a = 0; a < mdp.n_actions; ++a) {
      row.setZero();
      Scalar clipped = 0;
      for (Index y = 0; y < mdp.n_states; ++y) {
        const Scalar p_next = mdp.transition(mdp.pair(x, a), y);
        if (!(p_next > 0)) continue;
        const Scalar shift = mdp.reward(x, a) - penalty(y);
        for (Index b = 0; b < mdp.n_actions; ++b) {
          const Scalar w = p_next * policy.probs(y, b);
          if (!(w > 0)) continue;
          const auto src = z.slice(y, b);
          for (Index k = 0; k < K; ++k) {
            if (!(src(k) > 0)) continue;
            project_particle(z.grid, shift + mdp.discount * z.grid.atoms(k), w * src(k), row, clipped);
          }
        }
      }
      out.slice(x, a) = row.transpose();
      out.clipped_mass = std::max(out.clipped_mass, clipped);
    }
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> kl_penalty(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference, Scalar temperature,
                          const Policy<Scalar>& policy) {
  require(temperature >= 0, "temperature must be nonnegative");
  if (temperature == 0) return Vector<Scalar>::Zero(mdp.n_states);
  return mdp.discount * temperature * policy_kl_vector(policy, reference);
}

}  // namespace detail

/**
 * Soft distributional evaluation backup at temperature tau >= 0. Each
 * successor state x' contributes its return law shifted by the discounted
 * KL penalty gamma tau KL(pi_x' || ref_x'). tau = 0 is the classic
 * evaluation backup and skips the support check.
 */
template <typename Scalar>
ReturnDistributionFn<Scalar> soft_dist_eval_backup(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                                   Scalar temperature, const Policy<Scalar>& policy,
                                                   const ReturnDistributionFn<Scalar>& z) {
  return detail::categorical_backup(mdp, policy, detail::kl_penalty(mdp, reference, temperature, policy), z);
}

/// Soft distributional optimality backup: evaluation under G_tau of the mean of z.
template <typename Scalar>
ReturnDistributionFn<Scalar> soft_dist_control_backup(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                                      Scalar temperature, const ReturnDistributionFn<Scalar>& z) {
  require(temperature > 0, "soft_dist_control_backup: temperature must be positive");
  const Policy<Scalar> pi = boltzmann_policy(mean_extraction(z), reference, temperature);
  return soft_dist_eval_backup(mdp, reference, temperature, pi, z);
}

enum class TieBreak { LowestIndex, HighestIndex };

/// Deterministic greedy policy with respect to q over all actions.
template <typename Scalar>
Policy<Scalar> greedy_policy(const QFunction<Scalar>& q, TieBreak tie_break = TieBreak::LowestIndex) {
  std::vector<Index> choice(static_cast<std::size_t>(q.values.rows()));
  for (Index x = 0; x < q.values.rows(); ++x) {
    Index best = 0;
    for (Index a = 1; a < q.values.cols(); ++a) {
      const Scalar v = q.values(x, a), b = q.values(x, best);
      if (v > b || (v == b && tie_break == TieBreak::HighestIndex)) best = a;
    }
    choice[static_cast<std::size_t>(x)] = best;
  }
  return Policy<Scalar>::deterministic(choice, q.values.cols());
}

/// Classic distributional optimality backup under the greedy policy of the mean.
template <typename Scalar>
ReturnDistributionFn<Scalar> classic_dist_control_backup(const TabularMdp<Scalar>& mdp,
                                                         const ReturnDistributionFn<Scalar>& z,
                                                         TieBreak tie_break = TieBreak::LowestIndex) {
  const Vector<Scalar> no_penalty = Vector<Scalar>::Zero(mdp.n_states);
  return detail::categorical_backup(mdp, greedy_policy(mean_extraction(z), tie_break), no_penalty, z);
}

/// Exact (unprojected) soft evaluation backup on particle representations.
template <typename Scalar>
ParticleReturnFn<Scalar> soft_dist_eval_backup_particles(const TabularMdp<Scalar>& mdp,
                                                         const Policy<Scalar>& reference, Scalar temperature,
                                                         const Policy<Scalar>& policy,
                                                         const ParticleReturnFn<Scalar>& z) {
  require(z.n_states == mdp.n_states && z.n_actions == mdp.n_actions, "particle backup: shape mismatch");
  const Vector<Scalar> penalty = detail::kl_penalty(mdp, reference, temperature, policy);
  ParticleReturnFn<Scalar> out{z.n_states, z.n_actions, {}};
  out.slices.resize(z.slices.size());
  for (Index x = 0; x < mdp.n_states; ++x) {
    for (Index a = 0; a < mdp.n_actions; ++a) {
      auto& d = out.slices[static_cast<std::size_t>(mdp.pair(x, a))];
      for (Index y = 0; y < mdp.n_states; ++y) {
        const Scalar p_next = mdp.transition(mdp.pair(x, a), y);
        if (!(p_next > 0)) continue;
        for (Index b = 0; b < mdp.n_actions; ++b) {
          const Scalar w = p_next * policy.probs(y, b);
          if (!(w > 0)) continue;
          const auto& src = z.at(y, b);
          for (std::size_t k = 0; k < src.locations.size(); ++k) {
            d.locations.push_back(mdp.reward(x, a) - penalty(y) + mdp.discount * src.locations[k]);
            d.weights.push_back(w * src.weights[k]);
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Iteration drivers
// ---------------------------------------------------------------------------

template <typename Scalar>
struct IterateTrace {
  ReturnDistributionFn<Scalar> z;
  std::vector<Scalar> successive_w1;  // sup-W1 between iterates n and n + 1
  Scalar max_clipped_mass = 0;
};

template <typename Scalar, typename Backup>
IterateTrace<Scalar> run_distributional_iteration(ReturnDistributionFn<Scalar> z0, int n_iters, Backup&& backup) {
  require(n_iters >= 0, "iteration count must be nonnegative");
  IterateTrace<Scalar> trace{std::move(z0), {}, 0};
  trace.successive_w1.reserve(static_cast<std::size_t>(n_iters));
  for (int n = 0; n < n_iters; ++n) {
    ReturnDistributionFn<Scalar> next = backup(trace.z);
    trace.successive_w1.push_back(sup_wasserstein(next, trace.z, Scalar(1)));
    trace.max_clipped_mass = std::max(trace.max_clipped_mass, next.clipped_mass);
    trace.z = std::move(next);
  }
  return trace;
}

/// n applications of the soft distributional optimality backup.
template <typename Scalar>
IterateTrace<Scalar> soft_dist_value_iteration(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                               Scalar temperature, ReturnDistributionFn<Scalar> z0, int n_iters) {
  require(temperature > 0, "soft_dist_value_iteration: temperature must be positive");
  return run_distributional_iteration(std::move(z0), n_iters, [&](const ReturnDistributionFn<Scalar>& z) {
    return soft_dist_control_backup(mdp, reference, temperature, z);
  });
}

/// n applications of the classic (greedy) distributional optimality backup.
template <typename Scalar>
IterateTrace<Scalar> classic_dist_value_iteration(const TabularMdp<Scalar>& mdp, ReturnDistributionFn<Scalar> z0,
                                                  int n_iters, TieBreak tie_break = TieBreak::LowestIndex) {
  return run_distributional_iteration(std::move(z0), n_iters, [&](const ReturnDistributionFn<Scalar>& z) {
    return classic_dist_control_backup(mdp, z, tie_break);
  });
}

/// Least-squares per-step decay factor exp(slope) of log d_n over [first, last).
template <typename Scalar>
Scalar fit_contraction_rate(const std::vector<Scalar>& trace, std::size_t first, std::size_t last) {
  double sn = 0, sy = 0, snn = 0, sny = 0, count = 0;
  for (std::size_t n = first; n < std::min(last, trace.size()); ++n) {
    if (!(trace[n] > 0)) continue;
    const double y = std::log(static_cast<double>(trace[n]));
    sn += n;
    sy += y;
    snn += double(n) * n;
    sny += n * y;
    count += 1;
  }
  require(count >= 2, "fit_contraction_rate: need at least two positive entries");
  const double slope = (count * sny - sn * sy) / (count * snn - sn * sn);
  return static_cast<Scalar>(std::exp(slope));
}

template <typename Scalar>
struct DecoupledEstimate {
  ReturnDistributionFn<Scalar> z_hat;      // final evaluation iterate
  Policy<Scalar> pi_hat;                   // G_tau of the control mean
  ReturnDistributionFn<Scalar> z_control;  // final control iterate at sigma
  QFunction<Scalar> q_hat;                 // mean of z_control
  Scalar max_clipped_mass = 0;
};

/**
 * Control at sigma for n_control steps, mean extraction, pi = G_tau(q_hat),
 * then n_eval soft evaluation steps at tau starting from the control
 * iterate. sigma == tau is the coupled scheme.
 */
template <typename Scalar>
DecoupledEstimate<Scalar> decoupled_return_estimation(const TabularMdp<Scalar>& mdp, const Policy<Scalar>& reference,
                                                      Scalar temperature, Scalar decoupled_temperature, int n_control,
                                                      int n_eval, ReturnDistributionFn<Scalar> z0) {
  require(temperature > 0 && decoupled_temperature > 0, "decoupled_return_estimation: temperatures must be positive");
  IterateTrace<Scalar> control;
  control.z = std::move(z0);
  for (int n = 0; n < n_control; ++n) {
    control.z = soft_dist_control_backup(mdp, reference, decoupled_temperature, control.z);
    control.max_clipped_mass = std::max(control.max_clipped_mass, control.z.clipped_mass);
  }
  DecoupledEstimate<Scalar> out{control.z, {}, control.z, mean_extraction(control.z), control.max_clipped_mass};
  out.pi_hat = boltzmann_policy(out.q_hat, reference, temperature);
  for (int n = 0; n < n_eval; ++n) {
    out.z_hat = soft_dist_eval_backup(mdp, reference, temperature, out.pi_hat, out.z_hat);
    out.max_clipped_mass = std::max(out.max_clipped_mass, out.z_hat.clipped_mass);
  }
  return out;
}

}  // namespace derl
