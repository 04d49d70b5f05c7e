#pragma once

#include <span>
#include <string>
#include <vector>

#include "cgrl/causal_reward.hpp"
#include "cgrl/policy.hpp"

namespace cgrl {

enum class KlEstimator { exact, k3 };

KlEstimator kl_estimator_from_string(const std::string& s);
const char* to_string(KlEstimator e);

struct GrpoConfig {
  int group_size = 8;
  double eps_clip = 0.2;
  double beta = 0.01;
  double eta = 0.3;
  double learning_rate = 0.01;
  double momentum = 0.0;
  int iterations = 300;
  int minibatch = 0;  // groups per ascent step; 0 = whole batch
  int epochs = 1;
  double eps_std = 1e-12;
  KlEstimator kl_estimator = KlEstimator::exact;

  void validate() const;
};

// G trajectories for one prompt with their per-step rewards, standardized
// returns, causal rewards, and advantages. Per-step arrays are ragged with
// lengths T_1..T_G; flattening order is trajectory-then-position.
struct TrajectoryGroup {
  const Episode* episode = nullptr;
  std::vector<Trajectory> trajs;
  std::vector<std::vector<double>> base_rewards;
  std::vector<std::vector<double>> base_std;
  std::vector<std::vector<double>> causal_rewards;  // empty when disabled
  std::vector<std::vector<double>> causal_std;
  std::vector<std::vector<double>> adv_orig;
  std::vector<std::vector<double>> adv;

  int total_tokens() const;
};

// r_t = task_reward(answer of greedy completion of o_<=t, Y); walks the
// session cache shared with causal scoring.
std::vector<double> step_rewards(ScoringSession& session, const Trajectory& traj);

// (x - mean) / (population sigma + eps_std) over all entries; zero variance
// maps to all zeros (up to the guard).
std::vector<double> standardize(const std::vector<double>& values, double eps_std);

// Standardizes ragged per-step values over all M tokens of the group.
std::vector<std::vector<double>> standardize_group(
    const std::vector<std::vector<double>>& values, double eps_std);

// adv_orig[i][t] = sum_{j>=t} base_std[i][j]; adv adds eta times the causal
// reward-to-go. With eta == 0 the causal arrays are ignored entirely and
// adv aliases adv_orig.
void compute_advantages(TrajectoryGroup& group, double eta);

// rho_t = exp(logp_new(o_t) - logp_old(o_t)), both recomputed through the
// same path, so identical parameter sets give exactly 1.
std::vector<double> importance_ratio(const PolicyParams& params_new,
                                     const PolicyParams& params_old,
                                     const Episode& episode,
                                     const Trajectory& traj);

double clipped_term(double rho, double adv, double eps_clip);

// Exact KL(p || q) for one categorical pair.
double categorical_kl(std::span<const double> p, std::span<const double> q);

// Mean KL(pi_theta || pi_ref) over all visited states of all groups; exact
// per-state categorical KL by default, or the sampled low-variance k3
// estimator at the chosen tokens.
double kl_penalty(const PolicyParams& params, const PolicyParams& ref_params,
                  std::span<const TrajectoryGroup> groups,
                  KlEstimator estimator = KlEstimator::exact);

// J = mean over groups of (1/G) sum_i sum_t min(rho*A, clip(rho)*A)
//     - beta * kl_penalty.
// grad_out receives dJ/dtheta with trajectories, advantages, and the old
// policy held fixed. Advantages must already be computed on the groups.
double objective_and_gradient(std::span<const TrajectoryGroup> groups,
                              const PolicyParams& params,
                              const PolicyParams& params_old,
                              const PolicyParams& ref_params,
                              const GrpoConfig& config,
                              std::vector<double>& grad_out);

}  // namespace cgrl
