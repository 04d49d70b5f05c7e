#include "cgrl/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "cgrl/errors.hpp"
#include "cgrl/rng.hpp"

namespace cgrl {

using ordered_json = nlohmann::ordered_json;

EvalReport evaluate_predictions(const std::vector<std::set<int>>& preds,
                                const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw ConfigError("evaluate: empty episode list");
  if (preds.size() != episodes.size()) {
    throw ConfigError("evaluate: predictions/episodes size mismatch");
  }
  EvalReport report;
  report.n_episodes = static_cast<int>(episodes.size());

  int exact = 0;
  int episodes_with_omission = 0;
  long fabricated_tokens = 0;
  long predicted_tokens = 0;
  std::map<std::string, long> tmpl_n, tmpl_exact, tmpl_omission, tmpl_pred, tmpl_fab;

  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = episodes[i];
    const std::set<int>& pred = preds[i];
    const ErrorClass cls = classify_error(pred, ep);
    const bool omission =
        cls == ErrorClass::omission || cls == ErrorClass::both;
    if (pred == ep.truth_answer && !ep.truth_answer.empty()) ++exact;
    if (omission) ++episodes_with_omission;
    predicted_tokens += static_cast<long>(pred.size());
    long fab = 0;
    for (int t : pred)
      if (!ep.truth_answer.count(t)) ++fab;
    fabricated_tokens += fab;

    tmpl_n[ep.template_id] += 1;
    tmpl_exact[ep.template_id] += (pred == ep.truth_answer) ? 1 : 0;
    tmpl_omission[ep.template_id] += omission ? 1 : 0;
    tmpl_pred[ep.template_id] += static_cast<long>(pred.size());
    tmpl_fab[ep.template_id] += fab;
  }

  const double n = static_cast<double>(episodes.size());
  report.accuracy = static_cast<double>(exact) / n;
  report.omission_rate_s = static_cast<double>(episodes_with_omission) / n;
  report.fabrication_rate_i =
      predicted_tokens == 0
          ? 0.0
          : static_cast<double>(fabricated_tokens) / static_cast<double>(predicted_tokens);
  for (const auto& [tmpl, count] : tmpl_n) {
    report.per_template_accuracy[tmpl] =
        static_cast<double>(tmpl_exact[tmpl]) / static_cast<double>(count);
    report.per_template_omission[tmpl] =
        static_cast<double>(tmpl_omission[tmpl]) / static_cast<double>(count);
    report.per_template_fabrication[tmpl] =
        tmpl_pred[tmpl] == 0 ? 0.0
                             : static_cast<double>(tmpl_fab[tmpl]) /
                                   static_cast<double>(tmpl_pred[tmpl]);
  }
  return report;
}

EvalReport evaluate(const PolicyParams& params, const TaskSpec& task,
                    const std::vector<Episode>& episodes, int max_len) {
  if (episodes.empty()) throw ConfigError("evaluate: empty episode list");
  std::vector<std::set<int>> preds;
  preds.reserve(episodes.size());
  for (const Episode& ep : episodes) {
    preds.push_back(greedy_complete(params, task.vocab, ep, {}, max_len).answer);
  }
  return evaluate_predictions(preds, episodes);
}

namespace {

// Causal-domain token pool, and the most frequent causal value over the
// evaluated episodes (ties to the lowest token id), for popular no-probes.
struct ProbePools {
  std::vector<int> causal_tokens;  // sorted ids
  std::vector<int> popularity_order;  // causal token ids, most frequent first
};

ProbePools build_pools(const TaskSpec& task, const std::vector<Episode>& episodes) {
  ProbePools pools;
  for (const auto& slot : task.factors.causal_slots)
    for (const auto& tok : slot.domain)
      pools.causal_tokens.push_back(task.vocab.id(tok));
  std::sort(pools.causal_tokens.begin(), pools.causal_tokens.end());

  std::map<int, long> freq;
  for (int t : pools.causal_tokens) freq[t] = 0;
  for (const auto& ep : episodes)
    for (const auto& [slot, value] : ep.scene.causal_values) freq[task.vocab.id(value)] += 1;
  pools.popularity_order = pools.causal_tokens;
  std::stable_sort(pools.popularity_order.begin(), pools.popularity_order.end(),
                   [&freq](int a, int b) {
                     if (freq[a] != freq[b]) return freq[a] > freq[b];
                     return a < b;
                   });
  return pools;
}

int pick_no_token(ProbeSplit split, const Episode& ep, const TaskSpec& task,
                  const ProbePools& pools, std::mt19937_64& eng) {
  auto not_in_truth = [&ep](int t) { return ep.truth_answer.count(t) == 0; };
  switch (split) {
    case ProbeSplit::popular:
      for (int t : pools.popularity_order)
        if (not_in_truth(t)) return t;
      break;
    case ProbeSplit::adversarial: {
      if (task.spurious.enabled()) {
        const int target = task.vocab.id(task.spurious.target_value);
        if (not_in_truth(target)) return target;
      }
      for (int t : pools.popularity_order)
        if (not_in_truth(t)) return t;
      break;
    }
    case ProbeSplit::random:
      break;
  }
  std::vector<int> candidates;
  for (int t : pools.causal_tokens)
    if (not_in_truth(t)) candidates.push_back(t);
  if (candidates.empty()) {
    throw ConfigError("probes: no distractor token available");
  }
  return candidates[uniform_below(eng, candidates.size())];
}

double f1_yes_class(long tp, long fp, long fn) {
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::vector<Probe> build_probes(const TaskSpec& task,
                                const std::vector<Episode>& episodes,
                                std::uint64_t probe_stream_seed) {
  if (!task.vocab.has_probe_tokens()) {
    throw ConfigError("probes: task vocab has no probe tokens");
  }
  const ProbePools pools = build_pools(task, episodes);
  const SeedStream stream{probe_stream_seed};
  std::vector<Probe> probes;
  probes.reserve(episodes.size() * 6);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = episodes[i];
    auto eng = stream.at(i).engine();
    for (ProbeSplit split :
         {ProbeSplit::random, ProbeSplit::popular, ProbeSplit::adversarial}) {
      // one yes + one no per split keeps every split balanced by construction
      std::vector<int> truth(ep.truth_answer.begin(), ep.truth_answer.end());
      const int yes_token = truth[uniform_below(eng, truth.size())];
      Probe yes;
      yes.episode_index = static_cast<int>(i);
      yes.split = split;
      yes.token = yes_token;
      yes.truth_yes = true;
      yes.input = render_probe(ep, yes_token, task);
      probes.push_back(std::move(yes));

      Probe no;
      no.episode_index = static_cast<int>(i);
      no.split = split;
      no.token = pick_no_token(split, ep, task, pools, eng);
      no.truth_yes = false;
      no.input = render_probe(ep, no.token, task);
      probes.push_back(std::move(no));
    }
  }
  return probes;
}

bool probe_answer(const PolicyParams& params, const TaskSpec& task,
                  const Episode& episode, int probed_token, int max_len) {
  const std::set<int> answer =
      greedy_complete(params, task.vocab, episode, {}, max_len).answer;
  return answer.count(probed_token) > 0;
}

ProbeResult probe_f1_from_answers(const std::vector<bool>& said_yes,
                                  const std::vector<Probe>& probes) {
  if (said_yes.size() != probes.size()) {
    throw ConfigError("probe scoring: answers/probes size mismatch");
  }
  long tp[3] = {0, 0, 0}, fp[3] = {0, 0, 0}, fn[3] = {0, 0, 0};
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const int s = static_cast<int>(probes[i].split);
    if (said_yes[i] && probes[i].truth_yes) ++tp[s];
    if (said_yes[i] && !probes[i].truth_yes) ++fp[s];
    if (!said_yes[i] && probes[i].truth_yes) ++fn[s];
  }
  ProbeResult result;
  result.f1_random = f1_yes_class(tp[0], fp[0], fn[0]);
  result.f1_popular = f1_yes_class(tp[1], fp[1], fn[1]);
  result.f1_adversarial = f1_yes_class(tp[2], fp[2], fn[2]);
  result.f1_overall =
      (result.f1_random + result.f1_popular + result.f1_adversarial) / 3.0;
  return result;
}

ProbeResult probe_eval(const PolicyParams& params, const TaskSpec& task,
                       const std::vector<Episode>& episodes, int max_len,
                       std::uint64_t probe_stream_seed) {
  const std::vector<Probe> probes = build_probes(task, episodes, probe_stream_seed);
  // one greedy answer per episode; its probes share it
  std::vector<std::set<int>> answers_by_episode(episodes.size());
  std::vector<bool> have(episodes.size(), false);
  std::vector<bool> answers;
  answers.reserve(probes.size());
  for (const Probe& probe : probes) {
    const std::size_t e = static_cast<std::size_t>(probe.episode_index);
    if (!have[e]) {
      answers_by_episode[e] =
          greedy_complete(params, task.vocab, episodes[e], {}, max_len).answer;
      have[e] = true;
    }
    answers.push_back(answers_by_episode[e].count(probe.token) > 0);
  }
  return probe_f1_from_answers(answers, probes);
}

EvalReport full_report(const PolicyParams& params, const TaskSpec& task,
                       const std::vector<Episode>& episodes, int max_len,
                       std::uint64_t probe_stream_seed) {
  EvalReport report = evaluate(params, task, episodes, max_len);
  const ProbeResult probes =
      probe_eval(params, task, episodes, max_len, probe_stream_seed);
  report.probe_f1 = probes.f1_overall;
  report.probe_f1_random = probes.f1_random;
  report.probe_f1_popular = probes.f1_popular;
  report.probe_f1_adversarial = probes.f1_adversarial;
  return report;
}

namespace {

ordered_json report_to_json(const EvalReport& r) {
  ordered_json j;
  j["n_episodes"] = r.n_episodes;
  j["accuracy"] = r.accuracy;
  j["omission_rate_s"] = r.omission_rate_s;
  j["fabrication_rate_i"] = r.fabrication_rate_i;
  j["probe_f1"] = r.probe_f1;
  j["probe_f1_random"] = r.probe_f1_random;
  j["probe_f1_popular"] = r.probe_f1_popular;
  j["probe_f1_adversarial"] = r.probe_f1_adversarial;
  j["per_template_accuracy"] = r.per_template_accuracy;
  j["per_template_omission"] = r.per_template_omission;
  j["per_template_fabrication"] = r.per_template_fabrication;
  return j;
}

}  // namespace

void write_report_jsonl(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << report_to_json(report).dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "metric,value\n";
  const ordered_json j = report_to_json(report);
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      for (const auto& [sub, v] : value.items())
        out << key << "." << sub << "," << v.dump() << "\n";
    } else {
      out << key << "," << value.dump() << "\n";
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace cgrl
