#include "cgrl/causal_reward.hpp"

#include <algorithm>
#include <cmath>

#include "cgrl/errors.hpp"
#include "cgrl/rng.hpp"

namespace cgrl {

PerturbMode perturb_mode_from_string(const std::string& s) {
  if (s == "fixed-suffix") return PerturbMode::fixed_suffix;
  if (s == "regenerate") return PerturbMode::regenerate;
  throw ConfigError("perturb_mode: expected fixed-suffix|regenerate, got '" + s + "'");
}

NecessityVariant necessity_variant_from_string(const std::string& s) {
  if (s == "literal") return NecessityVariant::literal;
  if (s == "complement") return NecessityVariant::complement;
  throw ConfigError("necessity_variant: expected literal|complement, got '" + s + "'");
}

const char* to_string(PerturbMode m) {
  return m == PerturbMode::fixed_suffix ? "fixed-suffix" : "regenerate";
}

const char* to_string(NecessityVariant v) {
  return v == NecessityVariant::literal ? "literal" : "complement";
}

std::size_t ScoringSession::VecHash::operator()(const std::vector<int>& v) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int x : v) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(x));
    h *= 0x100000001b3ull;
  }
  return static_cast<std::size_t>(h);
}

ScoringSession::ScoringSession(const PolicyParams& params, const Episode& episode,
                               const Vocab& vocab, int max_len, bool use_cache)
    : params_(&params),
      episode_(&episode),
      vocab_(&vocab),
      max_len_(max_len),
      use_cache_(use_cache) {}

const Trajectory& ScoringSession::complete(const std::vector<int>& prefix) {
  if (use_cache_) {
    auto it = cache_.find(prefix);
    if (it != cache_.end()) return it->second;
    auto [pos, inserted] = cache_.emplace(
        prefix, greedy_complete(*params_, *vocab_, *episode_, prefix, max_len_));
    return pos->second;
  }
  scratch_ = greedy_complete(*params_, *vocab_, *episode_, prefix, max_len_);
  return scratch_;
}

double ScoringSession::completion_reward(const std::vector<int>& prefix) {
  return task_reward(complete(prefix).answer, episode_->truth_answer);
}

double sufficiency_raw(ScoringSession& session, const Trajectory& traj, int t) {
  const int T = static_cast<int>(traj.tokens.size());
  if (t < 1 || t > T) throw ConfigError("sufficiency_raw: position out of range");
  const std::vector<int> before(traj.tokens.begin(), traj.tokens.begin() + (t - 1));
  const Trajectory& completed_before = session.complete(before);
  if (completed_before.answer != session.episode().truth_answer) return 0.0;
  const double r_before =
      task_reward(completed_before.answer, session.episode().truth_answer);
  const std::vector<int> upto(traj.tokens.begin(), traj.tokens.begin() + t);
  const double r_upto = session.completion_reward(upto);
  return r_upto - r_before;
}

std::vector<int> candidate_perturbations(ScoringSession& session,
                                         const Trajectory& traj, int t, int k) {
  const int T = static_cast<int>(traj.tokens.size());
  if (t < 1 || t > T) throw ConfigError("candidate_perturbations: position out of range");
  if (k < 1) throw ConfigError("candidate_perturbations: k_perturb must be >= 1");
  const int V = session.params().vocab_size;
  if (k >= V) {
    throw ConfigError("candidate_perturbations: k_perturb must be < vocab size");
  }
  const std::vector<int> before(traj.tokens.begin(), traj.tokens.begin() + (t - 1));
  const std::vector<double> probs =
      step_distribution(session.params(), session.episode(), before);

  const int original = traj.tokens[static_cast<std::size_t>(t - 1)];
  std::vector<int> order(static_cast<std::size_t>(V));
  for (int a = 0; a < V; ++a) order[static_cast<std::size_t>(a)] = a;
  std::stable_sort(order.begin(), order.end(), [&probs](int a, int b) {
    const double pa = probs[static_cast<std::size_t>(a)];
    const double pb = probs[static_cast<std::size_t>(b)];
    if (pa != pb) return pa > pb;
    return a < b;
  });
  std::vector<int> candidates;
  candidates.reserve(static_cast<std::size_t>(k));
  for (int a : order) {
    if (a == original || a == session.vocab().bos) continue;
    candidates.push_back(a);
    if (static_cast<int>(candidates.size()) == k) break;
  }
  return candidates;
}

double necessity_raw(ScoringSession& session, const Trajectory& traj, int t,
                     const PerturbationConfig& config) {
  const std::vector<int> candidates =
      candidate_perturbations(session, traj, t, config.k_perturb);
  const auto& truth = session.episode().truth_answer;
  double best = 0.0;
  for (int cand : candidates) {
    double r;
    if (config.mode == PerturbMode::fixed_suffix) {
      std::vector<int> variant = traj.tokens;
      variant[static_cast<std::size_t>(t - 1)] = cand;
      r = task_reward(extract_answer(variant, session.vocab()), truth);
    } else {
      std::vector<int> prefix(traj.tokens.begin(), traj.tokens.begin() + (t - 1));
      prefix.push_back(cand);
      r = session.completion_reward(prefix);
    }
    best = std::max(best, r);
  }
  if (config.variant == NecessityVariant::literal) return best;
  const double r_orig = task_reward(traj.answer, truth);
  return std::clamp(r_orig - best, 0.0, 1.0);
}

std::pair<std::vector<double>, std::vector<double>> normalize_pair(
    const std::vector<double>& suff_raw, const std::vector<double>& nec_raw) {
  if (suff_raw.empty() || nec_raw.empty()) {
    throw ConfigError("normalize_pair: empty score list");
  }
  auto minmax = [](const std::vector<double>& xs) {
    std::vector<double> out(xs.size(), 0.0);
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi > lo) {
      const double range = hi - lo;
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - lo) / range;
    }
    // degenerate range: all zeros, meaning "no causal signal"
    return out;
  };
  return {minmax(suff_raw), minmax(nec_raw)};
}

double completeness_reward(double s_suff_norm, double s_nec_norm,
                           double lambda_s, double lambda_n) {
  if (!(lambda_s >= 0.0 && lambda_s <= 1.0 && lambda_n >= 0.0 && lambda_n <= 1.0)) {
    throw ConfigError("completeness_reward: weights must lie in [0,1]");
  }
  if (std::abs(lambda_s + lambda_n - 1.0) > 1e-9) {
    throw ConfigError("completeness_reward: lambda_s + lambda_n must equal 1");
  }
  return lambda_s * s_suff_norm + lambda_n * s_nec_norm;
}

std::vector<std::vector<TokenCausalScore>> score_group(
    ScoringSession& session, const std::vector<Trajectory>& trajs,
    const PerturbationConfig& config, double lambda_s, double lambda_n) {
  std::vector<double> suff_flat;
  std::vector<double> nec_flat;
  std::vector<std::size_t> lengths;
  for (const auto& traj : trajs) {
    if (traj.tokens.empty()) throw ConfigError("score_group: empty trajectory");
    lengths.push_back(traj.tokens.size());
    for (int t = 1; t <= static_cast<int>(traj.tokens.size()); ++t) {
      suff_flat.push_back(sufficiency_raw(session, traj, t));
      nec_flat.push_back(necessity_raw(session, traj, t, config));
    }
  }
  const auto [suff_norm, nec_norm] = normalize_pair(suff_flat, nec_flat);

  std::vector<std::vector<TokenCausalScore>> out;
  out.reserve(trajs.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    std::vector<TokenCausalScore> scores;
    scores.reserve(lengths[i]);
    for (std::size_t t = 0; t < lengths[i]; ++t) {
      TokenCausalScore s;
      s.position = static_cast<int>(t) + 1;
      s.s_suff_raw = suff_flat[offset + t];
      s.s_nec_raw = nec_flat[offset + t];
      s.s_suff_norm = suff_norm[offset + t];
      s.s_nec_norm = nec_norm[offset + t];
      s.r_causal = completeness_reward(s.s_suff_norm, s.s_nec_norm, lambda_s, lambda_n);
      scores.push_back(s);
    }
    offset += lengths[i];
    out.push_back(std::move(scores));
  }
  return out;
}

std::vector<TokenCausalScore> score_trajectory(
    const PolicyParams& params, const Episode& episode, const Vocab& vocab,
    const Trajectory& traj, const PerturbationConfig& config, double lambda_s,
    double lambda_n, int max_len, bool use_cache) {
  ScoringSession session(params, episode, vocab, max_len, use_cache);
  return score_group(session, {traj}, config, lambda_s, lambda_n)[0];
}

double sufficiency_raw(const PolicyParams& params, const Episode& episode,
                       const Vocab& vocab, const Trajectory& traj, int t,
                       int max_len) {
  ScoringSession session(params, episode, vocab, max_len);
  return sufficiency_raw(session, traj, t);
}

double necessity_raw(const PolicyParams& params, const Episode& episode,
                     const Vocab& vocab, const Trajectory& traj, int t,
                     const PerturbationConfig& config, int max_len) {
  ScoringSession session(params, episode, vocab, max_len);
  return necessity_raw(session, traj, t, config);
}

std::vector<int> candidate_perturbations(const PolicyParams& params,
                                         const Episode& episode,
                                         const Vocab& vocab,
                                         const Trajectory& traj, int t, int k,
                                         int max_len) {
  ScoringSession session(params, episode, vocab, max_len);
  return candidate_perturbations(session, traj, t, k);
}

}  // namespace cgrl
