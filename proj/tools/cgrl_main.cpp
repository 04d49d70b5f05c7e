#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgrl/config.hpp"
#include "cgrl/errors.hpp"
#include "cgrl/experiments.hpp"
#include "cgrl/rng.hpp"
#include "cgrl/train.hpp"

namespace fs = std::filesystem;
using namespace cgrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

fs::path resolve_out_dir(const std::string& out_dir) {
  fs::path p(out_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("CGRL_OUT_ROOT")) {
      p = fs::path(root) / p;
    }
  }
  return p;
}

fs::path prepare_run_dir(const RunConfig& config, bool fresh_snapshot = true) {
  const fs::path dir = resolve_out_dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir.string());
  if (fresh_snapshot) {
    write_config_snapshot((dir / "config.snapshot").string(), config);
  }
  return dir;
}

struct MetricsLog {
  std::ofstream out;
  explicit MetricsLog(const fs::path& path, bool append) {
    out.open(path, append ? std::ios::app : std::ios::out);
    if (!out) throw IoError("cannot open metrics log: " + path.string());
  }
  void write(const MetricsRecord& r) {
    out << metrics_to_json_line(r) << "\n";
    out.flush();
  }
};

void truncate_metrics(const fs::path& path, int keep) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics log: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  in.close();
  if (static_cast<int>(lines.size()) <= keep) return;
  std::ofstream out(path);
  for (int i = 0; i < keep; ++i) out << lines[static_cast<std::size_t>(i)] << "\n";
}

void write_iter_sidecar(const fs::path& path, int iteration) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << iteration << "\n";
}

int read_iter_sidecar(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  int iteration = -1;
  in >> iteration;
  return iteration;
}

int run_gen_data(const RunConfig& config) {
  const fs::path dir = prepare_run_dir(config);
  const SeedStream root = SeedStream::root(config.seed);
  const TaskSpec task = config.task_preset == "tiny" ? tiny_task(config.spurious_p)
                                                     : default_task(config.spurious_p);
  const auto train_set =
      generate_dataset(task, config.train_prompts, root.sub("data").sub("train").state);
  TaskSpec eval_task = task;
  eval_task.spurious.strength = 0.0;
  const auto eval_set =
      generate_dataset(eval_task, config.eval_episodes, root.sub("data").sub("eval").state);
  write_episodes_jsonl((dir / "train_episodes.jsonl").string(), train_set, task);
  write_episodes_jsonl((dir / "eval_episodes.jsonl").string(), eval_set, task);
  std::cout << "wrote " << train_set.size() << " train episodes, " << eval_set.size()
            << " eval episodes to " << dir.string() << "\n";
  return kExitOk;
}

int run_train(const RunConfig& config, bool resume, const std::string& train_data,
              const std::string& eval_data) {
  const fs::path dir = prepare_run_dir(config, /*fresh_snapshot=*/!resume);
  TrainInputs inputs = make_train_inputs(config);
  if (!train_data.empty()) inputs.train_set = read_episodes_jsonl(train_data, inputs.task);
  if (!eval_data.empty()) inputs.eval_set = read_episodes_jsonl(eval_data, inputs.task);

  const fs::path metrics_path = dir / "metrics.jsonl";
  const fs::path init_ckpt = dir / "checkpoint_init.ckpt";
  const fs::path last_ckpt = dir / "checkpoint_last.ckpt";
  const fs::path last_iter = dir / "checkpoint_last.iter";

  if (resume) {
    if (!fs::exists(init_ckpt) || !fs::exists(last_ckpt) || !fs::exists(last_iter)) {
      throw IoError("resume: missing checkpoints in " + dir.string());
    }
    const int done = read_iter_sidecar(last_iter) + 1;
    // metrics beyond the saved checkpoint belong to a lost tail; drop them
    truncate_metrics(metrics_path, done);
    if (done >= config.iterations) {
      std::cout << "run already complete at iteration " << done << "\n";
      return kExitOk;
    }
    inputs.init_params = load_checkpoint(last_ckpt.string());
    inputs.ref_params = load_checkpoint(init_ckpt.string());
    inputs.start_iteration = done;
    inputs.grpo.iterations = config.iterations - done;
  } else {
    save_checkpoint(init_ckpt.string(), inputs.init_params);
  }

  MetricsLog log(metrics_path, /*append=*/resume);
  auto on_metrics = [&log](const MetricsRecord& r) { log.write(r); };
  auto on_checkpoint = [&](int iteration, const PolicyParams& params) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_iter%06d.ckpt", iteration);
    save_checkpoint((dir / name).string(), params);
    save_checkpoint(last_ckpt.string(), params);
    write_iter_sidecar(last_iter, iteration);
  };

  const TrainResult result = train(inputs, on_metrics, on_checkpoint,
                                   config.checkpoint_every, config.dump_trajectories);

  save_checkpoint((dir / "checkpoint_final.ckpt").string(), result.params);
  save_checkpoint(last_ckpt.string(), result.params);
  write_iter_sidecar(last_iter, config.iterations - 1);

  if (config.dump_trajectories) {
    std::ofstream dump(dir / "trajdump.jsonl");
    if (!dump) throw IoError("cannot open trajdump.jsonl");
    for (const auto& rec : result.final_dump) {
      dump << dump_record_to_json_line(rec, inputs.task.vocab) << "\n";
    }
    save_checkpoint((dir / "trajdump_params.ckpt").string(), result.final_rollout_params);
  }
  std::cout << "trained " << config.iterations << " iterations; run dir "
            << dir.string() << "\n";
  return kExitOk;
}

int run_eval(const RunConfig& config, const std::string& checkpoint,
             const std::string& eval_data) {
  if (checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  const fs::path dir = prepare_run_dir(config);
  const TaskSpec task = config.task_preset == "tiny" ? tiny_task(config.spurious_p)
                                                     : default_task(config.spurious_p);
  TaskSpec eval_task = task;
  eval_task.spurious.strength = 0.0;
  std::vector<Episode> eval_set;
  if (!eval_data.empty()) {
    eval_set = read_episodes_jsonl(eval_data, task);
  } else {
    eval_set = generate_dataset(eval_task, config.eval_episodes,
                                SeedStream::root(config.seed).sub("data").sub("eval").state);
  }
  const PolicyParams params = load_checkpoint(checkpoint);
  const EvalReport report =
      full_report(params, task, eval_set, config.max_len,
                  SeedStream::root(config.seed).sub("probe").state);
  write_report_jsonl((dir / "eval_report.jsonl").string(), report);
  write_report_csv((dir / "eval_report.csv").string(), report);
  std::cout << "accuracy=" << report.accuracy << " omission=" << report.omission_rate_s
            << " fabrication=" << report.fabrication_rate_i
            << " probe_f1=" << report.probe_f1 << "\n";
  return kExitOk;
}

int run_score(const RunConfig& config, const std::string& checkpoint,
              const std::string& trajectories) {
  if (checkpoint.empty()) throw ConfigError("score: --checkpoint is required");
  if (trajectories.empty()) throw ConfigError("score: --trajectories is required");
  const fs::path dir = prepare_run_dir(config);
  const TrainInputs inputs = make_train_inputs(config);
  const PolicyParams params = load_checkpoint(checkpoint);

  std::ifstream in(trajectories);
  if (!in) throw IoError("cannot open trajectory dump: " + trajectories);
  std::vector<TrajectoryDumpRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty())
      records.push_back(dump_record_from_json_line(line, inputs.task.vocab));
  }

  // Regroup by (iteration, group) preserving record order so the group
  // normalization scope matches training exactly.
  std::map<std::pair<int, int>, std::vector<const TrajectoryDumpRecord*>> groups;
  for (const auto& rec : records) groups[{rec.iteration, rec.group}].push_back(&rec);

  std::ofstream out(dir / "scores.jsonl");
  if (!out) throw IoError("cannot open scores.jsonl");
  double lambda_s = config.lambda_s;
  double lambda_n = config.lambda_n;
  if (config.variant == "suff-only") {
    lambda_s = 1.0;
    lambda_n = 0.0;
  } else if (config.variant == "nec-only") {
    lambda_s = 0.0;
    lambda_n = 1.0;
  }
  for (const auto& [key, recs] : groups) {
    const int episode_index = recs.front()->episode_index;
    if (episode_index < 0 ||
        episode_index >= static_cast<int>(inputs.train_set.size())) {
      throw ConfigError("score: episode index out of range in dump");
    }
    const Episode& episode = inputs.train_set[static_cast<std::size_t>(episode_index)];
    std::vector<Trajectory> trajs;
    for (const auto* rec : recs) {
      Trajectory t;
      t.tokens = rec->tokens;
      t.answer = extract_answer(t.tokens, inputs.task.vocab);
      t.terminated = !t.tokens.empty() && t.tokens.back() == inputs.task.vocab.eos;
      trajs.push_back(std::move(t));
    }
    ScoringSession session(params, episode, inputs.task.vocab, config.max_len);
    const auto scores = score_group(session, trajs, inputs.perturb, lambda_s, lambda_n);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      TrajectoryDumpRecord rec = *recs[i];
      rec.s_suff_raw.clear();
      rec.s_nec_raw.clear();
      rec.r_causal.clear();
      for (const auto& s : scores[i]) {
        rec.s_suff_raw.push_back(s.s_suff_raw);
        rec.s_nec_raw.push_back(s.s_nec_raw);
        rec.r_causal.push_back(s.r_causal);
      }
      out << dump_record_to_json_line(rec, inputs.task.vocab) << "\n";
    }
  }
  std::cout << "scored " << records.size() << " trajectories\n";
  return kExitOk;
}

int run_ablate(const RunConfig& config) {
  const fs::path dir = prepare_run_dir(config);
  const auto rows = ablate(config, [](const std::string& msg) {
    std::cout << msg << "\n";
  });
  write_ablation_csv((dir / "ablation_table.csv").string(), rows);
  write_ablation_jsonl((dir / "ablation.jsonl").string(), rows);
  for (const auto& r : rows) {
    std::cout << r.variant << ": combined=" << r.median_combined
              << " probe_f1=" << r.median_probe_f1 << "\n";
  }
  return kExitOk;
}

int run_sweep(const RunConfig& config) {
  const fs::path dir = prepare_run_dir(config);
  const SweepResult result =
      sweep(config.lambda_grid, config.eta_grid, config, [](const std::string& msg) {
        std::cout << msg << "\n";
      });
  write_sweep_csv((dir / "sweep_long.csv").string(), result);
  write_sweep_summary_jsonl((dir / "sweep_summary.jsonl").string(), result);
  std::cout << "desk-scale peak: lambda_s=" << result.peak_lambda_s
            << " eta=" << result.peak_eta << " probe_f1=" << result.peak_probe_f1
            << " (reference optimum: lambda_s=0.5, eta=0.3)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causal-completeness-guided GRPO laboratory"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "flat key=value config file");
    for (const auto& key : config_keys()) {
      sub->add_option_function<std::string>(
          "--" + key,
          [&overrides, key](const std::string& value) {
            overrides.emplace_back(key, value);
          },
          "config override");
    }
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate and export datasets");
  CLI::App* train_cmd = app.add_subcommand("train", "run training");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* score_cmd = app.add_subcommand("score", "score a trajectory dump");
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "causal-component ablation");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "lambda_s/eta grid sweep");

  bool resume = false;
  std::string train_data, eval_data, checkpoint, trajectories;
  train_cmd->add_flag("--resume", resume, "continue from checkpoint_last in out_dir");
  train_cmd->add_option("--train-data", train_data, "episode jsonl to import");
  train_cmd->add_option("--eval-data", eval_data, "episode jsonl to import");
  eval_cmd->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  eval_cmd->add_option("--eval-data", eval_data, "episode jsonl to import");
  score_cmd->add_option("--checkpoint", checkpoint, "rollout policy checkpoint")->required();
  score_cmd->add_option("--trajectories", trajectories, "trajectory dump jsonl")->required();

  for (CLI::App* sub : {gen, train_cmd, eval_cmd, score_cmd, ablate_cmd, sweep_cmd}) {
    add_common(sub);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    ConfigParser parser;
    if (!config_file.empty()) apply_config_file(parser, config_file);
    for (const auto& [key, value] : overrides) parser.assign(key, value);
    const RunConfig config = parser.finish();

    if (gen->parsed()) return run_gen_data(config);
    if (train_cmd->parsed()) return run_train(config, resume, train_data, eval_data);
    if (eval_cmd->parsed()) return run_eval(config, checkpoint, eval_data);
    if (score_cmd->parsed()) return run_score(config, checkpoint, trajectories);
    if (ablate_cmd->parsed()) return run_ablate(config);
    if (sweep_cmd->parsed()) return run_sweep(config);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure at iteration " << e.iteration << ": " << e.what()
              << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
