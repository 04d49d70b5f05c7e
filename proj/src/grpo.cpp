#include "cgrl/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "cgrl/errors.hpp"

namespace cgrl {

KlEstimator kl_estimator_from_string(const std::string& s) {
  if (s == "exact") return KlEstimator::exact;
  if (s == "k3") return KlEstimator::k3;
  throw ConfigError("kl_estimator: expected exact|k3, got '" + s + "'");
}

const char* to_string(KlEstimator e) {
  return e == KlEstimator::exact ? "exact" : "k3";
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size: must be >= 2");
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) throw ConfigError("eps_clip: must lie in (0,1)");
  if (!(beta >= 0.0)) throw ConfigError("beta: must be >= 0");
  if (!(eta >= 0.0)) throw ConfigError("eta: must be >= 0");
  if (!(eps_std > 0.0)) throw ConfigError("eps_std: must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate: must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum: must lie in [0,1)");
  if (iterations < 0) throw ConfigError("iterations: must be >= 0");
  if (minibatch < 0) throw ConfigError("minibatch: must be >= 0");
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
}

int TrajectoryGroup::total_tokens() const {
  int m = 0;
  for (const auto& t : trajs) m += static_cast<int>(t.tokens.size());
  return m;
}

std::vector<double> step_rewards(ScoringSession& session, const Trajectory& traj) {
  if (traj.tokens.empty()) throw ConfigError("step_rewards: empty trajectory");
  std::vector<double> rewards;
  rewards.reserve(traj.tokens.size());
  for (std::size_t t = 1; t <= traj.tokens.size(); ++t) {
    const std::vector<int> prefix(traj.tokens.begin(),
                                  traj.tokens.begin() + static_cast<long>(t));
    rewards.push_back(session.completion_reward(prefix));
  }
  return rewards;
}

std::vector<double> standardize(const std::vector<double>& values, double eps_std) {
  if (values.empty()) throw ConfigError("standardize: empty input");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;  // population variance over all M entries
  const double denom = std::sqrt(var) + eps_std;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / denom;
  return out;
}

std::vector<std::vector<double>> standardize_group(
    const std::vector<std::vector<double>>& values, double eps_std) {
  std::vector<double> flat;
  for (const auto& row : values) flat.insert(flat.end(), row.begin(), row.end());
  const std::vector<double> std_flat = standardize(flat, eps_std);
  std::vector<std::vector<double>> out;
  out.reserve(values.size());
  std::size_t offset = 0;
  for (const auto& row : values) {
    out.emplace_back(std_flat.begin() + static_cast<long>(offset),
                     std_flat.begin() + static_cast<long>(offset + row.size()));
    offset += row.size();
  }
  return out;
}

void compute_advantages(TrajectoryGroup& group, double eta) {
  group.adv_orig.clear();
  group.adv.clear();
  for (std::size_t i = 0; i < group.base_std.size(); ++i) {
    const auto& r = group.base_std[i];
    std::vector<double> togo(r.size(), 0.0);
    double acc = 0.0;
    for (std::size_t t = r.size(); t-- > 0;) {
      acc += r[t];
      togo[t] = acc;
    }
    group.adv_orig.push_back(std::move(togo));
  }
  if (eta == 0.0 || group.causal_std.empty()) {
    // Causal term disabled: the advantage IS the base reward-to-go.
    group.adv = group.adv_orig;
    return;
  }
  for (std::size_t i = 0; i < group.adv_orig.size(); ++i) {
    const auto& c = group.causal_std[i];
    std::vector<double> adv = group.adv_orig[i];
    double acc = 0.0;
    for (std::size_t t = adv.size(); t-- > 0;) {
      acc += c[t];
      adv[t] += eta * acc;
    }
    group.adv.push_back(std::move(adv));
  }
}

std::vector<double> importance_ratio(const PolicyParams& params_new,
                                     const PolicyParams& params_old,
                                     const Episode& episode,
                                     const Trajectory& traj) {
  if (!params_new.same_shape(params_old)) {
    throw ConfigError("importance_ratio: parameter shapes differ");
  }
  const std::vector<double> lp_new =
      trajectory_logprobs(params_new, episode, traj.tokens);
  const std::vector<double> lp_old =
      trajectory_logprobs(params_old, episode, traj.tokens);
  std::vector<double> rho(lp_new.size());
  for (std::size_t t = 0; t < lp_new.size(); ++t) {
    rho[t] = std::exp(lp_new[t] - lp_old[t]);
  }
  return rho;
}

double clipped_term(double rho, double adv, double eps_clip) {
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) {
    throw ConfigError("clipped_term: eps_clip must lie in (0,1)");
  }
  const double clipped = std::clamp(rho, 1.0 - eps_clip, 1.0 + eps_clip);
  return std::min(rho * adv, clipped * adv);
}

double categorical_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("categorical_kl: size mismatch");
  double kl = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] > 0.0) kl += p[a] * std::log(p[a] / q[a]);
  }
  return kl;
}

double kl_penalty(const PolicyParams& params, const PolicyParams& ref_params,
                  std::span<const TrajectoryGroup> groups, KlEstimator estimator) {
  double total = 0.0;
  long tokens = 0;
  for (const auto& group : groups) {
    for (const auto& traj : group.trajs) {
      if (estimator == KlEstimator::exact) {
        const auto pairs = kl_states(params, ref_params, *group.episode, traj);
        for (const auto& [p, q] : pairs) total += categorical_kl(p, q);
        tokens += static_cast<long>(pairs.size());
      } else {
        // k3 estimator at the sampled tokens: r - log r - 1, r = q/p.
        const auto lp = trajectory_logprobs(params, *group.episode, traj.tokens);
        const auto lq = trajectory_logprobs(ref_params, *group.episode, traj.tokens);
        for (std::size_t t = 0; t < lp.size(); ++t) {
          const double log_r = lq[t] - lp[t];
          total += std::exp(log_r) - log_r - 1.0;
        }
        tokens += static_cast<long>(lp.size());
      }
    }
  }
  if (tokens == 0) return 0.0;
  return total / static_cast<double>(tokens);
}

namespace {

// Accumulates coef * dlogit/dtheta into grad for the state that `pe`
// currently represents, given dL/dlogit_a = g[a].
void accumulate_logit_grad(const PolicyParams& params, const PrefixEval& pe,
                           const std::vector<double>& g, std::vector<double>& grad) {
  const int V = params.vocab_size;
  const int d = params.embed_dim;
  const double* mix = params.mix();
  const double* proj = params.proj();
  double* g_emb = grad.data();
  double* g_mix = grad.data() + static_cast<std::size_t>(V) * d;
  double* g_proj = g_mix + d;
  double* g_bias = g_proj + static_cast<std::size_t>(d) * V;

  const std::vector<double> s = pe.state();
  std::vector<double> u(static_cast<std::size_t>(d), 0.0);
  for (int a = 0; a < V; ++a) {
    const double ga = g[static_cast<std::size_t>(a)];
    if (ga == 0.0) continue;
    g_bias[a] += ga;
    for (int j = 0; j < d; ++j) {
      g_proj[static_cast<std::size_t>(j) * V + a] +=
          ga * mix[j] * s[static_cast<std::size_t>(j)];
      u[static_cast<std::size_t>(j)] += proj[static_cast<std::size_t>(j) * V + a] * ga;
    }
  }
  const std::vector<double>& mass = pe.token_mass();
  const double z = pe.mass_normalizer();
  for (int j = 0; j < d; ++j)
    g_mix[j] += s[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)];
  for (int v = 0; v < V; ++v) {
    const double w = mass[static_cast<std::size_t>(v)];
    if (w == 0.0) continue;
    const double wn = w / z;
    double* ge = g_emb + static_cast<std::size_t>(v) * d;
    for (int j = 0; j < d; ++j) ge[j] += mix[j] * u[static_cast<std::size_t>(j)] * wn;
  }
}

}  // namespace

double objective_and_gradient(std::span<const TrajectoryGroup> groups,
                              const PolicyParams& params,
                              const PolicyParams& params_old,
                              const PolicyParams& ref_params,
                              const GrpoConfig& config,
                              std::vector<double>& grad_out) {
  config.validate();
  if (!params.same_shape(params_old) || !params.same_shape(ref_params)) {
    throw ConfigError("objective: parameter shapes differ");
  }
  if (groups.empty()) throw ConfigError("objective: no trajectory groups");
  grad_out.assign(params.param_count(), 0.0);

  const int V = params.vocab_size;
  const double num_groups = static_cast<double>(groups.size());

  long total_tokens = 0;
  for (const auto& g : groups) total_tokens += g.total_tokens();
  if (total_tokens == 0) throw ConfigError("objective: no tokens in groups");

  double clip_sum = 0.0;  // sum over groups of (1/G) sum_{i,t} min-term
  double kl_sum = 0.0;    // sum over all states of per-state KL (or k3)

  std::vector<double> g_logit(static_cast<std::size_t>(V), 0.0);

  for (const auto& group : groups) {
    if (group.adv.size() != group.trajs.size()) {
      throw ConfigError("objective: advantages missing; compute_advantages first");
    }
    const double group_count = static_cast<double>(group.trajs.size());
    for (std::size_t i = 0; i < group.trajs.size(); ++i) {
      const Trajectory& traj = group.trajs[i];
      const std::vector<double> lp_old =
          trajectory_logprobs(params_old, *group.episode, traj.tokens);

      PrefixEval pe(params, *group.episode);
      PrefixEval pe_ref(ref_params, *group.episode);
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const int token = traj.tokens[t];
        const std::vector<double> probs = pe.distribution();
        const double lp_new = std::log(probs[static_cast<std::size_t>(token)]);
        const double rho = std::exp(lp_new - lp_old[t]);
        const double adv = group.adv[i][t];

        const double clipped = std::clamp(rho, 1.0 - config.eps_clip, 1.0 + config.eps_clip);
        const double unclipped_term = rho * adv;
        const double clipped_term_v = clipped * adv;
        clip_sum += std::min(unclipped_term, clipped_term_v) / group_count;

        // d/dtheta min(rho*A, clip(rho)*A): the clip branch has zero
        // derivative whenever it binds strictly; otherwise d(rho*A) =
        // A * rho * dlogp.
        if (unclipped_term <= clipped_term_v) {
          const double coef = adv * rho / (num_groups * group_count);
          for (int a = 0; a < V; ++a) {
            const double indicator = (a == token) ? 1.0 : 0.0;
            g_logit[static_cast<std::size_t>(a)] =
                coef * (indicator - probs[static_cast<std::size_t>(a)]);
          }
          accumulate_logit_grad(params, pe, g_logit, grad_out);
        }

        // KL term at this state
        if (config.beta != 0.0) {
          if (config.kl_estimator == KlEstimator::exact) {
            const std::vector<double> q = pe_ref.distribution();
            double kl_state = 0.0;
            for (int a = 0; a < V; ++a) {
              const double pa = probs[static_cast<std::size_t>(a)];
              if (pa > 0.0) kl_state += pa * std::log(pa / q[static_cast<std::size_t>(a)]);
            }
            kl_sum += kl_state;
            // dKL/dlogit_a = p_a * (log(p_a/q_a) - KL)
            const double kcoef = -config.beta / static_cast<double>(total_tokens);
            for (int a = 0; a < V; ++a) {
              const double pa = probs[static_cast<std::size_t>(a)];
              const double qa = q[static_cast<std::size_t>(a)];
              g_logit[static_cast<std::size_t>(a)] =
                  kcoef * pa * (std::log(pa / qa) - kl_state);
            }
            accumulate_logit_grad(params, pe, g_logit, grad_out);
          } else {
            const double lq =
                std::log(pe_ref.distribution()[static_cast<std::size_t>(token)]);
            const double log_r = lq - lp_new;
            const double r = std::exp(log_r);
            kl_sum += r - log_r - 1.0;
            // d(r - log r - 1)/dlogp = 1 - r
            const double kcoef =
                -config.beta * (1.0 - r) / static_cast<double>(total_tokens);
            for (int a = 0; a < V; ++a) {
              const double indicator = (a == token) ? 1.0 : 0.0;
              g_logit[static_cast<std::size_t>(a)] =
                  kcoef * (indicator - probs[static_cast<std::size_t>(a)]);
            }
            accumulate_logit_grad(params, pe, g_logit, grad_out);
          }
        }

        pe.push(token);
        if (config.beta != 0.0) pe_ref.push(token);
      }
    }
  }

  const double mu = kl_sum / static_cast<double>(total_tokens);
  return clip_sum / num_groups - config.beta * mu;
}

}  // namespace cgrl
