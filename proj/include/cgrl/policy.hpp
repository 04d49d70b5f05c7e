#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cgrl/scm.hpp"

namespace cgrl {

// Exponential position decay of the context mean; architecture constant.
inline constexpr double kContextDecay = 0.9;

// Flat parameter vector. Layout (documented, checkpoint order):
//   embedding  E[v][j]   at v*d + j            (V*d entries)
//   context mix m[j]     at V*d + j            (d entries)
//   projection P[j][a]   at V*d + d + j*V + a  (d*V entries)
//   bias       b[a]      at V*d + d + d*V + a  (V entries)
// The next-token state is the position-decayed mean of the context token
// embeddings, scaled elementwise by m, projected through P plus b.
struct PolicyParams {
  int vocab_size = 0;
  int embed_dim = 0;
  std::vector<double> theta;

  static PolicyParams zeros(int vocab_size, int embed_dim);
  // Small random embeddings/projection, unit mix, zero bias. A zero mix
  // would kill the embedding gradient, hence the unit init.
  static PolicyParams init(int vocab_size, int embed_dim, std::uint64_t seed);

  std::size_t param_count() const {
    const std::size_t v = vocab_size, d = embed_dim;
    return v * d + d + d * v + v;
  }

  const double* emb(int token) const { return theta.data() + static_cast<std::size_t>(token) * embed_dim; }
  double* emb(int token) { return theta.data() + static_cast<std::size_t>(token) * embed_dim; }
  const double* mix() const { return theta.data() + static_cast<std::size_t>(vocab_size) * embed_dim; }
  double* mix() { return theta.data() + static_cast<std::size_t>(vocab_size) * embed_dim; }
  const double* proj() const { return mix() + embed_dim; }
  double* proj() { return mix() + embed_dim; }
  const double* bias() const { return proj() + static_cast<std::size_t>(embed_dim) * vocab_size; }
  double* bias() { return proj() + static_cast<std::size_t>(embed_dim) * vocab_size; }

  bool same_shape(const PolicyParams& other) const {
    return vocab_size == other.vocab_size && embed_dim == other.embed_dim;
  }
};

// Value copy; parameters are plain values, so a snapshot is just a copy made
// at a known point in time.
inline PolicyParams snapshot(const PolicyParams& params) { return params; }

// Binary checkpoint: magic "CGRL1", then little-endian u32 V, d, param
// count, then the theta entries as little-endian f64 in layout order.
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

struct Trajectory {
  std::vector<int> tokens;        // generated tokens only (no prompt)
  std::vector<double> logprobs;   // per token, temperature 1
  bool terminated = false;        // EOS reached
  std::set<int> answer;           // extract_answer(tokens)
};

// Incremental evaluator over (episode input ++ generated prefix). The one
// arithmetic path for state updates: every consumer (sampling, greedy
// decoding, log-prob recomputation, gradients) walks prefixes through this
// class, so recomputed quantities agree bitwise with recorded ones.
class PrefixEval {
 public:
  PrefixEval(const PolicyParams& params, const Episode& episode);

  void push(int token);

  // softmax(P^T (m .* s) + b); strictly positive, sums to 1 within 1e-12.
  std::vector<double> distribution() const { return distribution(1.0); }
  std::vector<double> distribution(double temperature) const;

  // Unnormalized decay mass per vocab id in the current context, and its
  // normalizer; gradient accumulation reads these.
  const std::vector<double>& token_mass() const { return mass_; }
  double mass_normalizer() const { return z_; }
  // Normalized state s (decayed mean of context embeddings).
  std::vector<double> state() const;

  int vocab_size() const { return params_->vocab_size; }

 private:
  const PolicyParams* params_;
  std::vector<double> sum_;   // unnormalized decayed embedding sum, length d
  std::vector<double> mass_;  // unnormalized decayed mass per token, length V
  double z_ = 0.0;
};

// Categorical next-token distribution at (episode input ++ prefix).
std::vector<double> step_distribution(const PolicyParams& params,
                                      const Episode& episode,
                                      const std::vector<int>& prefix);

// Samples until EOS or max_len tokens; temperature scales the sampling
// distribution only, recorded log-probs are temperature-1.
Trajectory sample_trajectory(const PolicyParams& params, const Vocab& vocab,
                             const Episode& episode, std::mt19937_64& rng,
                             int max_len, double temperature);

// Deterministic argmax continuation of `prefix` (ties to the lowest token
// id). The prefix is reproduced verbatim at the head of the output; no
// continuation happens past EOS or max_len.
Trajectory greedy_complete(const PolicyParams& params, const Vocab& vocab,
                           const Episode& episode,
                           const std::vector<int>& prefix, int max_len);

// Tokens strictly between the last ANSWER marker and the first subsequent
// EOS (or the end); empty set when there is no ANSWER marker.
std::set<int> extract_answer(const std::vector<int>& tokens, const Vocab& vocab);

// Exact analytic gradient of sum_t log p_theta(o_t | I, o_<t) w.r.t. theta.
std::pair<std::vector<double>, std::vector<double>> logprob_and_grad(
    const PolicyParams& params, const Episode& episode, const Trajectory& traj);

// Recomputed per-token log-probs from (params, episode, tokens) alone.
std::vector<double> trajectory_logprobs(const PolicyParams& params,
                                        const Episode& episode,
                                        const std::vector<int>& tokens);

// (pi_theta, pi_ref) at every prefix state of the trajectory; T pairs.
std::vector<std::pair<std::vector<double>, std::vector<double>>> kl_states(
    const PolicyParams& params, const PolicyParams& ref_params,
    const Episode& episode, const Trajectory& traj);

}  // namespace cgrl
