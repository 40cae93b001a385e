#pragma once

// Small hand-built MDPs used by the experiments and the acceptance suite.
//
// tristate     x0 picks between x1 (both actions optimal) and x2 (one
//              optimal action); both choices are optimal at x0. gamma = 0.9.
// return-demo  x1 picks between a deterministic return of 2 gamma / (1 - gamma)
//              and a fair coin between 0 and 4 gamma / (1 - gamma). gamma = 1/2.
// mean-tie     a decision state whose two actions have equal mean return but
//              different return laws, fed by a period-two clock. gamma = 0.98.

#include "derl/io.hpp"

#include <string>
#include <vector>

namespace derl {

struct BuiltinMdp {
  std::string name;
  MdpBundle bundle;
};

/// Throws ConfigError for unknown names; tristate is returned only after certify_tristate passes.
BuiltinMdp builtin(const std::string& name);
std::vector<std::string> builtin_names();

MdpBundle make_tristate();
MdpBundle make_return_demo();
MdpBundle make_mean_tie();

/// Brute-force check that an MDP reproduces the coupled/decoupled split at x0.
struct TristateCertificate {
  double x0_optimality_gap = 0;        // max_a q*(x0, .) - min_a q*(x0, .), by policy enumeration
  double coupled_x0_max_prob = 0;      // max_a G_tau q*_tau at x0, tau = 1e-9
  double decoupled_sup_tv = 0;         // sup_x TV(G_tau q*_{tau^2}, pi*_ref)
  bool passed = false;
};

TristateCertificate certify_tristate(const MdpBundle& bundle);

/// Elementwise maximum of q^pi over all deterministic policies (|A|^|S| of them).
Eigen::MatrixXd brute_force_optimal_q(const TabularMdp<double>& mdp, const Policy<double>& reference);

}  // namespace derl
