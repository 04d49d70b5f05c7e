#include "cgrl/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "cgrl/errors.hpp"
#include "cgrl/rng.hpp"

namespace cgrl {

using ordered_json = nlohmann::ordered_json;

CausalVariant causal_variant_from_string(const std::string& s) {
  if (s == "both") return CausalVariant::both;
  if (s == "suff-only") return CausalVariant::suff_only;
  if (s == "nec-only") return CausalVariant::nec_only;
  if (s == "none") return CausalVariant::none;
  throw ConfigError("variant: expected both|suff-only|nec-only|none, got '" + s + "'");
}

const char* to_string(CausalVariant v) {
  switch (v) {
    case CausalVariant::both: return "both";
    case CausalVariant::suff_only: return "suff-only";
    case CausalVariant::nec_only: return "nec-only";
    case CausalVariant::none: return "none";
  }
  return "?";
}

std::string metrics_to_json_line(const MetricsRecord& r) {
  ordered_json j;
  j["iteration"] = r.iteration;
  j["mean_task_reward"] = r.mean_task_reward;
  j["mean_r_causal"] = r.mean_r_causal;
  j["objective"] = r.objective;
  j["kl"] = r.kl;
  j["omission_rate"] = r.omission_rate;
  j["fabrication_rate"] = r.fabrication_rate;
  j["probe_f1"] = r.probe_f1;
  j["wallclock_ms"] = r.wallclock_ms;
  return j.dump();
}

MetricsRecord metrics_from_json_line(const std::string& line) {
  const ordered_json j = ordered_json::parse(line);
  MetricsRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.mean_task_reward = j.at("mean_task_reward").get<double>();
  r.mean_r_causal = j.at("mean_r_causal").get<double>();
  r.objective = j.at("objective").get<double>();
  r.kl = j.at("kl").get<double>();
  r.omission_rate = j.at("omission_rate").get<double>();
  r.fabrication_rate = j.at("fabrication_rate").get<double>();
  r.probe_f1 = j.at("probe_f1").get<double>();
  r.wallclock_ms = j.at("wallclock_ms").get<double>();
  return r;
}

std::string dump_record_to_json_line(const TrajectoryDumpRecord& r,
                                     const Vocab& vocab) {
  ordered_json j;
  j["iteration"] = r.iteration;
  j["group"] = r.group;
  j["traj"] = r.traj;
  j["episode_index"] = r.episode_index;
  std::vector<std::string> tokens;
  tokens.reserve(r.tokens.size());
  for (int t : r.tokens) tokens.push_back(vocab.text(t));
  j["tokens"] = tokens;
  j["s_suff_raw"] = r.s_suff_raw;
  j["s_nec_raw"] = r.s_nec_raw;
  j["r_causal"] = r.r_causal;
  return j.dump();
}

TrajectoryDumpRecord dump_record_from_json_line(const std::string& line,
                                                const Vocab& vocab) {
  const ordered_json j = ordered_json::parse(line);
  TrajectoryDumpRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.group = j.at("group").get<int>();
  r.traj = j.at("traj").get<int>();
  r.episode_index = j.at("episode_index").get<int>();
  for (const auto& t : j.at("tokens")) r.tokens.push_back(vocab.id(t.get<std::string>()));
  r.s_suff_raw = j.at("s_suff_raw").get<std::vector<double>>();
  r.s_nec_raw = j.at("s_nec_raw").get<std::vector<double>>();
  r.r_causal = j.at("r_causal").get<std::vector<double>>();
  return r;
}

namespace {

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

bool all_finite(const std::vector<double>& xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

TrainResult train(const TrainInputs& inputs, const MetricsSink& on_metrics,
                  const CheckpointSink& on_checkpoint, int checkpoint_every,
                  bool want_final_dump) {
  inputs.grpo.validate();
  if (inputs.train_set.empty()) throw ConfigError("train: empty training set");
  if (inputs.eval_set.empty()) throw ConfigError("train: empty eval set");
  if (inputs.batch_prompts < 1) throw ConfigError("batch_prompts: must be >= 1");

  const bool causal_enabled =
      inputs.variant != CausalVariant::none && inputs.grpo.eta != 0.0;
  double lambda_s = inputs.lambda_s;
  double lambda_n = inputs.lambda_n;
  if (inputs.variant == CausalVariant::suff_only) {
    lambda_s = 1.0;
    lambda_n = 0.0;
  } else if (inputs.variant == CausalVariant::nec_only) {
    lambda_s = 0.0;
    lambda_n = 1.0;
  }

  const SeedStream root = SeedStream::root(inputs.master_seed);
  const SeedStream rollout = root.sub("rollout");
  const SeedStream probe = root.sub("probe");

  TrainResult result;
  result.params = inputs.init_params;
  // fixed for the whole run
  const PolicyParams ref_params =
      inputs.ref_params.has_value() ? *inputs.ref_params : inputs.init_params;

  std::vector<double> velocity(result.params.param_count(), 0.0);
  const int G = inputs.grpo.group_size;
  const int N = static_cast<int>(inputs.train_set.size());

  for (int iter = inputs.start_iteration;
       iter < inputs.start_iteration + inputs.grpo.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    const PolicyParams params_old = snapshot(result.params);

    // Round-robin prompt selection; consumes no randomness, so rollout
    // streams depend only on (seed, iteration, slot, trajectory).
    std::vector<TrajectoryGroup> groups;
    groups.reserve(static_cast<std::size_t>(inputs.batch_prompts));
    std::vector<double> final_rewards;
    std::vector<double> causal_values_flat;

    std::vector<TrajectoryDumpRecord> dump;
    const bool dump_now =
        want_final_dump &&
        iter == inputs.start_iteration + inputs.grpo.iterations - 1;

    for (int slot = 0; slot < inputs.batch_prompts; ++slot) {
      const long long pick =
          (static_cast<long long>(iter) * inputs.batch_prompts + slot) % N;
      const Episode& episode = inputs.train_set[static_cast<std::size_t>(pick)];

      TrajectoryGroup group;
      group.episode = &episode;
      const SeedStream iter_stream =
          rollout.at(static_cast<std::uint64_t>(iter)).at(static_cast<std::uint64_t>(slot));
      for (int i = 0; i < G; ++i) {
        auto eng = iter_stream.at(static_cast<std::uint64_t>(i)).engine();
        group.trajs.push_back(sample_trajectory(params_old, inputs.task.vocab,
                                                episode, eng, inputs.max_len,
                                                inputs.temperature));
      }

      ScoringSession session(params_old, episode, inputs.task.vocab, inputs.max_len);
      for (const auto& traj : group.trajs) {
        group.base_rewards.push_back(step_rewards(session, traj));
        final_rewards.push_back(task_reward(traj.answer, episode.truth_answer));
      }
      group.base_std = standardize_group(group.base_rewards, inputs.grpo.eps_std);

      if (causal_enabled) {
        const auto scores =
            score_group(session, group.trajs, inputs.perturb, lambda_s, lambda_n);
        for (const auto& traj_scores : scores) {
          std::vector<double> r;
          r.reserve(traj_scores.size());
          for (const auto& s : traj_scores) {
            r.push_back(s.r_causal);
            causal_values_flat.push_back(s.r_causal);
          }
          group.causal_rewards.push_back(std::move(r));
        }
        group.causal_std = standardize_group(group.causal_rewards, inputs.grpo.eps_std);
        if (dump_now) {
          for (std::size_t i = 0; i < group.trajs.size(); ++i) {
            TrajectoryDumpRecord rec;
            rec.iteration = iter;
            rec.group = slot;
            rec.traj = static_cast<int>(i);
            rec.episode_index = episode.index;
            rec.tokens = group.trajs[i].tokens;
            for (const auto& s : scores[i]) {
              rec.s_suff_raw.push_back(s.s_suff_raw);
              rec.s_nec_raw.push_back(s.s_nec_raw);
              rec.r_causal.push_back(s.r_causal);
            }
            dump.push_back(std::move(rec));
          }
        }
      } else if (dump_now) {
        for (std::size_t i = 0; i < group.trajs.size(); ++i) {
          TrajectoryDumpRecord rec;
          rec.iteration = iter;
          rec.group = slot;
          rec.traj = static_cast<int>(i);
          rec.episode_index = episode.index;
          rec.tokens = group.trajs[i].tokens;
          dump.push_back(std::move(rec));
        }
      }

      compute_advantages(group, causal_enabled ? inputs.grpo.eta : 0.0);
      groups.push_back(std::move(group));
    }

    // Minibatch ascent; advantages stay frozen across epochs.
    const int mb = inputs.grpo.minibatch > 0
                       ? std::min<int>(inputs.grpo.minibatch,
                                       static_cast<int>(groups.size()))
                       : static_cast<int>(groups.size());
    double objective = 0.0;
    double kl_value = 0.0;
    bool recorded = false;
    std::vector<double> grad;
    for (int epoch = 0; epoch < inputs.grpo.epochs; ++epoch) {
      for (std::size_t start = 0; start < groups.size();
           start += static_cast<std::size_t>(mb)) {
        const std::size_t count =
            std::min<std::size_t>(static_cast<std::size_t>(mb), groups.size() - start);
        const std::span<const TrajectoryGroup> batch(groups.data() + start, count);
        const double j =
            objective_and_gradient(batch, result.params, params_old, ref_params,
                                   inputs.grpo, grad);
        if (!std::isfinite(j) || !all_finite(grad)) {
          throw NumericError("non-finite objective or gradient", iter);
        }
        if (!recorded) {
          objective = j;
          kl_value = kl_penalty(result.params, ref_params, batch,
                                inputs.grpo.kl_estimator);
          recorded = true;
        }
        if (inputs.grpo.momentum != 0.0) {
          for (std::size_t p = 0; p < grad.size(); ++p) {
            velocity[p] = inputs.grpo.momentum * velocity[p] + grad[p];
            result.params.theta[p] += inputs.grpo.learning_rate * velocity[p];
          }
        } else {
          for (std::size_t p = 0; p < grad.size(); ++p) {
            result.params.theta[p] += inputs.grpo.learning_rate * grad[p];
          }
        }
      }
    }

    const EvalReport report =
        full_report(result.params, inputs.task, inputs.eval_set, inputs.max_len,
                    probe.state);

    MetricsRecord record;
    record.iteration = iter;
    record.mean_task_reward = mean_of(final_rewards);
    record.mean_r_causal = mean_of(causal_values_flat);
    record.objective = objective;
    record.kl = kl_value;
    record.omission_rate = report.omission_rate_s;
    record.fabrication_rate = report.fabrication_rate_i;
    record.probe_f1 = report.probe_f1;
    record.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    result.metrics.push_back(record);
    if (on_metrics) on_metrics(record);

    if (on_checkpoint && checkpoint_every > 0 && (iter + 1) % checkpoint_every == 0) {
      on_checkpoint(iter, result.params);
    }
    if (dump_now) {
      result.final_dump = std::move(dump);
      result.final_rollout_params = params_old;
    }
  }
  if (!want_final_dump) result.final_rollout_params = result.params;
  return result;
}

TrainInputs make_train_inputs(const RunConfig& config) {
  config.validate();
  TrainInputs inputs;
  inputs.task = config.task_preset == "tiny" ? tiny_task(config.spurious_p)
                                             : default_task(config.spurious_p);
  const SeedStream root = SeedStream::root(config.seed);
  inputs.train_set = generate_dataset(inputs.task, config.train_prompts,
                                      root.sub("data").sub("train").state);
  // Evaluation sets are drawn with the coupling off to expose reliance on
  // non-causal cues.
  TaskSpec eval_task = inputs.task;
  eval_task.spurious.strength = 0.0;
  inputs.eval_set = generate_dataset(eval_task, config.eval_episodes,
                                     root.sub("data").sub("eval").state);
  inputs.init_params = PolicyParams::init(inputs.task.vocab.size(),
                                          config.embed_dim, root.sub("init").state);
  inputs.grpo.group_size = config.group_size;
  inputs.grpo.eps_clip = config.eps_clip;
  inputs.grpo.beta = config.beta;
  inputs.grpo.eta = config.eta;
  inputs.grpo.learning_rate = config.learning_rate;
  inputs.grpo.momentum = config.momentum;
  inputs.grpo.iterations = config.iterations;
  inputs.grpo.minibatch = config.minibatch;
  inputs.grpo.epochs = config.epochs;
  inputs.grpo.eps_std = config.eps_std;
  inputs.grpo.kl_estimator = kl_estimator_from_string(config.kl_estimator);
  inputs.perturb.k_perturb = config.k_perturb;
  inputs.perturb.mode = perturb_mode_from_string(config.perturb_mode);
  inputs.perturb.variant = necessity_variant_from_string(config.necessity_variant);
  inputs.lambda_s = config.lambda_s;
  inputs.lambda_n = config.lambda_n;
  inputs.variant = causal_variant_from_string(config.variant);
  inputs.batch_prompts = config.batch_prompts;
  inputs.max_len = config.max_len;
  inputs.temperature = config.temperature;
  inputs.master_seed = config.seed;
  return inputs;
}

}  // namespace cgrl
