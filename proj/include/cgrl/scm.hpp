#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cgrl/vocab.hpp"

namespace cgrl {

struct SlotSpec {
  std::string name;
  std::vector<std::string> domain;
};

// A question template queries a subset of the causal slots; the answer is
// the set of values those slots take. Non-causal slots are never queried.
struct QuestionTemplate {
  std::string id;
  std::vector<std::string> queried_slots;
};

struct FactorSpec {
  std::vector<SlotSpec> causal_slots;
  std::vector<SlotSpec> noncausal_slots;
  std::vector<QuestionTemplate> templates;

  // Non-empty pairwise-disjoint domains; every template queries >= 1 causal
  // slot and no non-causal slot. Throws ConfigError on violation.
  void validate() const;

  const SlotSpec* find_causal(const std::string& name) const;
  const SlotSpec* find_noncausal(const std::string& name) const;
  const QuestionTemplate* find_template(const std::string& id) const;
};

// Couples one non-causal cue slot to one causal target slot during scene
// sampling: whenever target_slot takes target_value, the cue slot is set to
// cue_value with probability `strength`, otherwise drawn uniformly over the
// full cue domain. Sampling-time only; the answer oracle never sees it.
struct SpuriousConfig {
  std::string cue_slot;
  std::string target_slot;
  std::string cue_value;
  std::string target_value;
  double strength = 0.0;

  bool enabled() const { return !cue_slot.empty(); }
  static SpuriousConfig none() { return {}; }
};

struct Scene {
  // slot -> value, in FactorSpec declaration order
  std::vector<std::pair<std::string, std::string>> causal_values;
  std::vector<std::pair<std::string, std::string>> noncausal_values;

  const std::string& causal(const std::string& slot) const;
};

struct Episode {
  Scene scene;
  std::string template_id;
  std::vector<int> input_tokens;
  std::set<int> truth_answer;  // token ids; ordered for stable iteration
  std::uint64_t seed = 0;      // generation sub-seed, recorded for export
  int index = 0;               // position in its dataset
};

struct TaskSpec {
  FactorSpec factors;
  SpuriousConfig spurious;
  Vocab vocab;
};

// Builds the vocab and validates the whole task. with_probe_vocab adds the
// PROBE marker and yes/no tokens required by probe evaluation.
TaskSpec make_task(FactorSpec factors, SpuriousConfig spurious,
                   bool with_probe_vocab = true);

// 3 causal slots (object x6, attribute x5, relation x4), 2 non-causal slots
// (background x5, cue x5), 4 templates; spurious cue->object coupling.
TaskSpec default_task(double spurious_p);
// 1 causal slot (shape x4), 1 non-causal slot (hue x3), 1 template.
TaskSpec tiny_task(double spurious_p);

Scene generate_scene(const FactorSpec& spec, const SpuriousConfig& spurious,
                     std::mt19937_64& rng);

Episode render_episode(const Scene& scene, const std::string& template_id,
                       const TaskSpec& task);

// Probe prompt: the episode input with [PROBE, candidate] inserted before
// QEND. Requires probe vocab.
std::vector<int> render_probe(const Episode& episode, int candidate_token,
                              const TaskSpec& task);

// Set-overlap F1 between predicted and true answer sets. 1.0 iff the sets
// are equal and non-empty; 0.0 for an empty prediction.
double task_reward(const std::set<int>& pred, const std::set<int>& truth);

enum class ErrorClass { correct, omission, fabrication, both };

const char* to_string(ErrorClass e);

// Omission: pred misses part of the truth. Fabrication: pred contains a
// token outside the grounded set (truth union the queried slots' tokens).
ErrorClass classify_error(const std::set<int>& pred, const Episode& episode);

// One episode per index; scene sampled from the task's spurious config,
// template chosen uniformly. Episode i is a pure function of
// data_stream.at(i), independent of generation order.
std::vector<Episode> generate_dataset(const TaskSpec& task, int n,
                                      std::uint64_t data_stream_seed);

// Line-delimited episode records, field order:
// seed, causal_values, noncausal_values, template_id, input_tokens,
// truth_answer. Tokens are serialized as text.
void write_episodes_jsonl(const std::string& path,
                          const std::vector<Episode>& episodes,
                          const TaskSpec& task);
std::vector<Episode> read_episodes_jsonl(const std::string& path,
                                         const TaskSpec& task);

}  // namespace cgrl
