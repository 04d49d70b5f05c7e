#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cgrl {

// Every tunable in one flat namespace. Keys mirror field names; unknown
// keys are rejected, constraint violations name the offending key.
struct RunConfig {
  std::string task_preset = "default";  // default | tiny
  double spurious_p = 0.9;
  int train_prompts = 500;
  int eval_episodes = 200;

  double lambda_s = 0.5;
  double lambda_n = 0.5;
  double eta = 0.3;
  double eps_clip = 0.2;
  double beta = 0.01;
  int group_size = 8;
  int k_perturb = 4;
  std::string perturb_mode = "fixed-suffix";     // fixed-suffix | regenerate
  std::string necessity_variant = "literal";     // literal | complement
  std::string variant = "both";                  // both | suff-only | nec-only | none
  std::string kl_estimator = "exact";            // exact | k3

  double learning_rate = 0.01;
  double momentum = 0.0;
  int iterations = 300;
  int batch_prompts = 16;
  int minibatch = 0;  // 0 = whole batch per ascent step
  int epochs = 1;
  int max_len = 24;
  double temperature = 1.0;
  int embed_dim = 16;
  double eps_std = 1e-12;

  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};  // ablate/sweep

  std::string out_dir = "runs/run";
  int checkpoint_every = 0;  // extra cadence; init/final always written
  bool dump_trajectories = false;

  std::vector<double> lambda_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> eta_grid = {0.1, 0.2, 0.3, 0.4, 0.5};

  void validate() const;  // throws ConfigError naming key and expected range

  // Ordered (key, value) view of every field, full round-trip precision.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

// Known config keys in canonical order (drives CLI flag generation too).
const std::vector<std::string>& config_keys();

// Applies one key=value assignment; throws ConfigError for unknown keys or
// unparsable values. Tracks lambda assignments for constraint completion.
struct ConfigParser {
  RunConfig config;
  bool saw_lambda_s = false;
  bool saw_lambda_n = false;

  void assign(const std::string& key, const std::string& value);
  // Completes lambda_n = 1 - lambda_s (or vice versa) when only one was
  // given, then validates.
  RunConfig finish();
};

// Flat key=value file with '#' comments.
RunConfig load_config_file(const std::string& path);
// Same, staged into an existing parser so CLI overrides can follow.
void apply_config_file(ConfigParser& parser, const std::string& path);
RunConfig parse_config(const std::vector<std::pair<std::string, std::string>>& kv);

// Snapshot that fully reproduces the run: every key, one per line, sorted
// by canonical key order.
void write_config_snapshot(const std::string& path, const RunConfig& config);

}  // namespace cgrl
