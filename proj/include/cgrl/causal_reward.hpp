#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cgrl/policy.hpp"

namespace cgrl {

enum class PerturbMode { fixed_suffix, regenerate };
enum class NecessityVariant { literal, complement };

PerturbMode perturb_mode_from_string(const std::string& s);
NecessityVariant necessity_variant_from_string(const std::string& s);
const char* to_string(PerturbMode m);
const char* to_string(NecessityVariant v);

struct PerturbationConfig {
  int k_perturb = 4;  // substitute candidates per position; must stay < V
  PerturbMode mode = PerturbMode::fixed_suffix;
  NecessityVariant variant = NecessityVariant::literal;
};

struct TokenCausalScore {
  int position = 0;        // 1-based
  double s_suff_raw = 0;   // signed, gated
  double s_nec_raw = 0;    // in [0,1]
  double s_suff_norm = 0;  // in [0,1]
  double s_nec_norm = 0;   // in [0,1]
  double r_causal = 0;     // lambda_s*s_suff_norm + lambda_n*s_nec_norm
};

// Greedy-completion memo for one (params, episode). Scoring a trajectory
// needs completions of every prefix; positions share them through here.
// Cache key is the prefix token sequence (params and episode are fixed per
// session). use_cache=false recomputes everything, for oracle tests.
class ScoringSession {
 public:
  ScoringSession(const PolicyParams& params, const Episode& episode,
                 const Vocab& vocab, int max_len, bool use_cache = true);

  // With caching off the returned reference only lives until the next
  // complete() call; cached entries are stable for the session's lifetime.
  const Trajectory& complete(const std::vector<int>& prefix);
  // task_reward of the completed prefix's extracted answer vs the truth.
  double completion_reward(const std::vector<int>& prefix);

  const PolicyParams& params() const { return *params_; }
  const Episode& episode() const { return *episode_; }
  const Vocab& vocab() const { return *vocab_; }
  int max_len() const { return max_len_; }

 private:
  struct VecHash {
    std::size_t operator()(const std::vector<int>& v) const;
  };
  const PolicyParams* params_;
  const Episode* episode_;
  const Vocab* vocab_;
  int max_len_;
  bool use_cache_;
  std::unordered_map<std::vector<int>, Trajectory, VecHash> cache_;
  Trajectory scratch_;  // holds the result when caching is off
};

// Gated reward gain of keeping token t (1-based): greedy-complete o_<t and
// o_<=t; zero unless the o_<t completion already answers exactly right.
double sufficiency_raw(ScoringSession& session, const Trajectory& traj, int t);

// The K most probable substitutes at position t under the session params,
// excluding o_t and BOS; descending probability, ties to the lowest id.
// Returns fewer than K only when the vocabulary is exhausted.
std::vector<int> candidate_perturbations(ScoringSession& session,
                                         const Trajectory& traj, int t, int k);

// Best-substitution reward at position t. fixed_suffix keeps o_>t verbatim;
// regenerate greedy-decodes a fresh suffix. literal returns the maximum
// reward over candidates; complement returns r(answer) minus that maximum,
// clamped to [0,1].
double necessity_raw(ScoringSession& session, const Trajectory& traj, int t,
                     const PerturbationConfig& config);

// Independent min-max normalization of each score list to [0,1] over one
// trajectory group; a degenerate range maps to all zeros.
std::pair<std::vector<double>, std::vector<double>> normalize_pair(
    const std::vector<double>& suff_raw, const std::vector<double>& nec_raw);

// lambda_s*s_suff_norm + lambda_n*s_nec_norm; weights must sum to 1.
double completeness_reward(double s_suff_norm, double s_nec_norm,
                           double lambda_s, double lambda_n);

// Per-token causal scores for every trajectory of one group, normalized
// jointly over the group's tokens.
std::vector<std::vector<TokenCausalScore>> score_group(
    ScoringSession& session, const std::vector<Trajectory>& trajs,
    const PerturbationConfig& config, double lambda_s, double lambda_n);

// Group-of-one convenience (own normalization scope).
std::vector<TokenCausalScore> score_trajectory(
    const PolicyParams& params, const Episode& episode, const Vocab& vocab,
    const Trajectory& traj, const PerturbationConfig& config, double lambda_s,
    double lambda_n, int max_len, bool use_cache = true);

// Standalone forms matching the per-position operations (fresh session).
double sufficiency_raw(const PolicyParams& params, const Episode& episode,
                       const Vocab& vocab, const Trajectory& traj, int t,
                       int max_len);
double necessity_raw(const PolicyParams& params, const Episode& episode,
                     const Vocab& vocab, const Trajectory& traj, int t,
                     const PerturbationConfig& config, int max_len);
std::vector<int> candidate_perturbations(const PolicyParams& params,
                                         const Episode& episode,
                                         const Vocab& vocab,
                                         const Trajectory& traj, int t, int k,
                                         int max_len);

}  // namespace cgrl
