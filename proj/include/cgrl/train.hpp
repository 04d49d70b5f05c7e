#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cgrl/config.hpp"
#include "cgrl/eval.hpp"
#include "cgrl/grpo.hpp"

namespace cgrl {

enum class CausalVariant { both, suff_only, nec_only, none };

CausalVariant causal_variant_from_string(const std::string& s);
const char* to_string(CausalVariant v);

struct MetricsRecord {
  int iteration = 0;
  double mean_task_reward = 0;
  double mean_r_causal = 0;
  double objective = 0;
  double kl = 0;
  double omission_rate = 0;
  double fabrication_rate = 0;
  double probe_f1 = 0;
  double wallclock_ms = 0;  // excluded from determinism comparisons
};

std::string metrics_to_json_line(const MetricsRecord& r);
MetricsRecord metrics_from_json_line(const std::string& line);

// Scored rollout dump for one trajectory; groups are reconstructable from
// (iteration, group) so offline scoring can reuse the group normalization
// scope bit-for-bit.
struct TrajectoryDumpRecord {
  int iteration = 0;
  int group = 0;       // prompt slot within the iteration batch
  int traj = 0;        // index within the group
  int episode_index = 0;
  std::vector<int> tokens;
  std::vector<double> s_suff_raw;
  std::vector<double> s_nec_raw;
  std::vector<double> r_causal;
};

std::string dump_record_to_json_line(const TrajectoryDumpRecord& r,
                                     const Vocab& vocab);
TrajectoryDumpRecord dump_record_from_json_line(const std::string& line,
                                                const Vocab& vocab);

struct TrainInputs {
  TaskSpec task;
  std::vector<Episode> train_set;
  std::vector<Episode> eval_set;
  PolicyParams init_params;
  // KL anchor; defaults to init_params. Resumed runs pass the original
  // initialization here while starting from a later checkpoint.
  std::optional<PolicyParams> ref_params;
  GrpoConfig grpo;
  PerturbationConfig perturb;
  double lambda_s = 0.5;
  double lambda_n = 0.5;
  CausalVariant variant = CausalVariant::both;
  int batch_prompts = 16;
  int max_len = 24;
  double temperature = 1.0;
  std::uint64_t master_seed = 0;
  int start_iteration = 0;  // resume point; streams are indexed absolutely
};

struct TrainResult {
  PolicyParams params;
  std::vector<MetricsRecord> metrics;
  std::vector<TrajectoryDumpRecord> final_dump;  // filled when requested
  PolicyParams final_rollout_params;             // params_old of the last iteration
};

using MetricsSink = std::function<void(const MetricsRecord&)>;
using CheckpointSink = std::function<void(int iteration, const PolicyParams&)>;

// One iteration: sample G trajectories per prompt under a frozen snapshot,
// score step and causal rewards, standardize, form advantages, take
// minibatch ascent steps on the clipped objective, refresh the snapshot.
// The reference policy stays at init_params. Throws NumericError when the
// objective or gradient goes non-finite.
TrainResult train(const TrainInputs& inputs, const MetricsSink& on_metrics = {},
                  const CheckpointSink& on_checkpoint = {},
                  int checkpoint_every = 0, bool want_final_dump = false);

// Assembles TrainInputs from a RunConfig (task preset, datasets, init).
TrainInputs make_train_inputs(const RunConfig& config);

}  // namespace cgrl
