#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cgrl/policy.hpp"

namespace cgrl {

struct EvalReport {
  int n_episodes = 0;
  double accuracy = 0;            // exact answer-set match rate
  double omission_rate_s = 0;     // fraction of episodes with any omission
  double fabrication_rate_i = 0;  // fabricated tokens / all predicted tokens
  double probe_f1 = 0;            // mean of the three per-split F1s
  double probe_f1_random = 0;
  double probe_f1_popular = 0;
  double probe_f1_adversarial = 0;
  std::map<std::string, double> per_template_accuracy;
  std::map<std::string, double> per_template_omission;
  std::map<std::string, double> per_template_fabrication;

  double combined_hallucination() const {
    return omission_rate_s + fabrication_rate_i;
  }
};

// Rate computation from already-decoded predictions (one set per episode).
EvalReport evaluate_predictions(const std::vector<std::set<int>>& preds,
                                const std::vector<Episode>& episodes);

// Greedy decoding per episode, then evaluate_predictions. Pure in
// (params, episodes). Throws ConfigError on an empty episode list.
EvalReport evaluate(const PolicyParams& params, const TaskSpec& task,
                    const std::vector<Episode>& episodes, int max_len);

enum class ProbeSplit { random, popular, adversarial };

struct Probe {
  int episode_index = 0;  // position within the evaluated list
  ProbeSplit split = ProbeSplit::random;
  int token = -1;
  bool truth_yes = false;
  std::vector<int> input;
};

// Balanced presence probes: per episode and split, one yes probe (a truth
// token) and one no probe. No-probe distractors: random draws from the
// causal domains, the domain-popular value, and the spuriously-coupled
// target value, mirroring the three splits.
std::vector<Probe> build_probes(const TaskSpec& task,
                                const std::vector<Episode>& episodes,
                                std::uint64_t probe_stream_seed);

// Probe decision from the model's own trained answer: yes iff the probed
// token appears in extract_answer(greedy decode of the episode question).
// The decision is binary by construction, so probe failure is separated
// from answer-format noise only insofar as the model produces answers at
// all; a policy with no answer marker says "no" to everything.
bool probe_answer(const PolicyParams& params, const TaskSpec& task,
                  const Episode& episode, int probed_token, int max_len);

struct ProbeResult {
  double f1_random = 0;
  double f1_popular = 0;
  double f1_adversarial = 0;
  double f1_overall = 0;  // unweighted mean of the splits
};

// F1 of the yes class per split from model yes/no answers.
ProbeResult probe_f1_from_answers(const std::vector<bool>& said_yes,
                                  const std::vector<Probe>& probes);

ProbeResult probe_eval(const PolicyParams& params, const TaskSpec& task,
                       const std::vector<Episode>& episodes, int max_len,
                       std::uint64_t probe_stream_seed);

// evaluate + probe_eval in one report.
EvalReport full_report(const PolicyParams& params, const TaskSpec& task,
                       const std::vector<Episode>& episodes, int max_len,
                       std::uint64_t probe_stream_seed);

void write_report_jsonl(const std::string& path, const EvalReport& report);
void write_report_csv(const std::string& path, const EvalReport& report);

}  // namespace cgrl
