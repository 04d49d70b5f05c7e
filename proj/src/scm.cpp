#include "cgrl/scm.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cgrl/errors.hpp"
#include "cgrl/rng.hpp"

namespace cgrl {

using ordered_json = nlohmann::ordered_json;

int Vocab::add(const std::string& text) {
  auto it = id_of.find(text);
  if (it != id_of.end()) {
    throw ConfigError("vocab: duplicate token '" + text + "'");
  }
  const int id = static_cast<int>(tokens.size());
  tokens.push_back(text);
  id_of.emplace(text, id);
  return id;
}

int Vocab::id(const std::string& text) const {
  auto it = id_of.find(text);
  if (it == id_of.end()) {
    throw ConfigError("vocab: unknown token '" + text + "'");
  }
  return it->second;
}

const std::string& Vocab::text(int id) const {
  if (id < 0 || id >= size()) {
    throw ConfigError("vocab: token id out of range: " + std::to_string(id));
  }
  return tokens[static_cast<std::size_t>(id)];
}

void FactorSpec::validate() const {
  if (causal_slots.empty()) {
    throw ConfigError("factor spec: at least one causal slot required");
  }
  std::set<std::string> names;
  std::set<std::string> seen_tokens;
  auto check_slot = [&](const SlotSpec& slot) {
    if (slot.domain.empty()) {
      throw ConfigError("factor spec: slot '" + slot.name + "' has empty domain");
    }
    if (!names.insert(slot.name).second) {
      throw ConfigError("factor spec: duplicate slot name '" + slot.name + "'");
    }
    for (const auto& tok : slot.domain) {
      if (!seen_tokens.insert(tok).second) {
        throw ConfigError("factor spec: slot domains are not disjoint at token '" +
                          tok + "'");
      }
    }
  };
  for (const auto& s : causal_slots) check_slot(s);
  for (const auto& s : noncausal_slots) check_slot(s);

  if (templates.empty()) {
    throw ConfigError("factor spec: at least one question template required");
  }
  std::set<std::string> template_ids;
  for (const auto& t : templates) {
    if (!template_ids.insert(t.id).second) {
      throw ConfigError("factor spec: duplicate template id '" + t.id + "'");
    }
    if (t.queried_slots.empty()) {
      throw ConfigError("factor spec: template '" + t.id + "' queries no slot");
    }
    for (const auto& q : t.queried_slots) {
      if (find_noncausal(q) != nullptr) {
        throw ConfigError("factor spec: template '" + t.id +
                          "' queries non-causal slot '" + q + "'");
      }
      if (find_causal(q) == nullptr) {
        throw ConfigError("factor spec: template '" + t.id +
                          "' queries unknown slot '" + q + "'");
      }
    }
  }
}

const SlotSpec* FactorSpec::find_causal(const std::string& name) const {
  for (const auto& s : causal_slots)
    if (s.name == name) return &s;
  return nullptr;
}

const SlotSpec* FactorSpec::find_noncausal(const std::string& name) const {
  for (const auto& s : noncausal_slots)
    if (s.name == name) return &s;
  return nullptr;
}

const QuestionTemplate* FactorSpec::find_template(const std::string& id) const {
  for (const auto& t : templates)
    if (t.id == id) return &t;
  return nullptr;
}

const std::string& Scene::causal(const std::string& slot) const {
  for (const auto& [name, value] : causal_values)
    if (name == slot) return value;
  throw ConfigError("scene: unknown causal slot '" + slot + "'");
}

namespace {

void validate_spurious(const FactorSpec& spec, const SpuriousConfig& spurious) {
  if (!spurious.enabled()) return;
  const SlotSpec* cue = spec.find_noncausal(spurious.cue_slot);
  if (cue == nullptr) {
    throw ConfigError("spurious config: cue slot '" + spurious.cue_slot +
                      "' is not a non-causal slot");
  }
  const SlotSpec* target = spec.find_causal(spurious.target_slot);
  if (target == nullptr) {
    throw ConfigError("spurious config: target slot '" + spurious.target_slot +
                      "' is not a causal slot");
  }
  if (std::find(cue->domain.begin(), cue->domain.end(), spurious.cue_value) ==
      cue->domain.end()) {
    throw ConfigError("spurious config: cue value '" + spurious.cue_value +
                      "' not in cue domain");
  }
  if (std::find(target->domain.begin(), target->domain.end(),
                spurious.target_value) == target->domain.end()) {
    throw ConfigError("spurious config: target value '" + spurious.target_value +
                      "' not in target domain");
  }
  if (!(spurious.strength >= 0.0 && spurious.strength <= 1.0)) {
    throw ConfigError("spurious config: strength must be in [0,1]");
  }
}

}  // namespace

TaskSpec make_task(FactorSpec factors, SpuriousConfig spurious,
                   bool with_probe_vocab) {
  factors.validate();
  validate_spurious(factors, spurious);

  TaskSpec task;
  task.factors = std::move(factors);
  task.spurious = std::move(spurious);

  Vocab& v = task.vocab;
  v.bos = v.add("<bos>");
  v.sep = v.add("<sep>");
  v.qend = v.add("<qend>");
  v.answer = v.add("<answer>");
  v.eos = v.add("<eos>");
  if (with_probe_vocab) {
    v.probe = v.add("<probe>");
    v.yes = v.add("yes");
    v.no = v.add("no");
  }
  // One question token per causal slot that some template queries.
  std::set<std::string> queried;
  for (const auto& t : task.factors.templates)
    for (const auto& q : t.queried_slots) queried.insert(q);
  for (const auto& s : task.factors.causal_slots) {
    if (queried.count(s.name)) v.add("ask:" + s.name);
  }
  for (const auto& s : task.factors.causal_slots)
    for (const auto& tok : s.domain) v.add(tok);
  for (const auto& s : task.factors.noncausal_slots)
    for (const auto& tok : s.domain) v.add(tok);
  return task;
}

TaskSpec default_task(double spurious_p) {
  FactorSpec spec;
  spec.causal_slots = {
      {"object", {"cat", "dog", "bird", "fish", "horse", "sheep"}},
      {"attribute", {"gray", "brown", "white", "black", "orange"}},
      {"relation", {"on", "under", "beside", "behind"}},
  };
  spec.noncausal_slots = {
      {"background", {"room", "garden", "street", "beach", "forest"}},
      {"cue", {"lamp", "vase", "clock", "plant", "mirror"}},
  };
  spec.templates = {
      {"q-object", {"object"}},
      {"q-attribute", {"attribute"}},
      {"q-relation", {"relation"}},
  };
  SpuriousConfig spurious;
  spurious.cue_slot = "cue";
  spurious.target_slot = "object";
  spurious.cue_value = "lamp";
  spurious.target_value = "cat";
  spurious.strength = spurious_p;
  return make_task(std::move(spec), std::move(spurious));
}

TaskSpec tiny_task(double spurious_p) {
  FactorSpec spec;
  spec.causal_slots = {{"shape", {"circle", "square", "star", "ring"}}};
  spec.noncausal_slots = {{"hue", {"red", "green", "blue"}}};
  spec.templates = {{"q-shape", {"shape"}}};
  SpuriousConfig spurious;
  spurious.cue_slot = "hue";
  spurious.target_slot = "shape";
  spurious.cue_value = "red";
  spurious.target_value = "circle";
  spurious.strength = spurious_p;
  return make_task(std::move(spec), std::move(spurious));
}

Scene generate_scene(const FactorSpec& spec, const SpuriousConfig& spurious,
                     std::mt19937_64& rng) {
  validate_spurious(spec, spurious);
  Scene scene;
  for (const auto& slot : spec.causal_slots) {
    const auto& value = slot.domain[uniform_below(rng, slot.domain.size())];
    scene.causal_values.emplace_back(slot.name, value);
  }
  for (const auto& slot : spec.noncausal_slots) {
    if (spurious.enabled() && slot.name == spurious.cue_slot &&
        scene.causal(spurious.target_slot) == spurious.target_value) {
      if (uniform01(rng) < spurious.strength) {
        scene.noncausal_values.emplace_back(slot.name, spurious.cue_value);
      } else {
        scene.noncausal_values.emplace_back(
            slot.name, slot.domain[uniform_below(rng, slot.domain.size())]);
      }
    } else {
      scene.noncausal_values.emplace_back(
          slot.name, slot.domain[uniform_below(rng, slot.domain.size())]);
    }
  }
  return scene;
}

Episode render_episode(const Scene& scene, const std::string& template_id,
                       const TaskSpec& task) {
  const QuestionTemplate* tmpl = task.factors.find_template(template_id);
  if (tmpl == nullptr) {
    throw ConfigError("render: unknown template '" + template_id + "'");
  }
  Episode ep;
  ep.scene = scene;
  ep.template_id = template_id;
  ep.input_tokens.push_back(task.vocab.bos);
  for (const auto& [slot, value] : scene.causal_values)
    ep.input_tokens.push_back(task.vocab.id(value));
  for (const auto& [slot, value] : scene.noncausal_values)
    ep.input_tokens.push_back(task.vocab.id(value));
  ep.input_tokens.push_back(task.vocab.sep);
  for (const auto& q : tmpl->queried_slots)
    ep.input_tokens.push_back(task.vocab.id("ask:" + q));
  ep.input_tokens.push_back(task.vocab.qend);
  for (const auto& q : tmpl->queried_slots)
    ep.truth_answer.insert(task.vocab.id(scene.causal(q)));
  return ep;
}

std::vector<int> render_probe(const Episode& episode, int candidate_token,
                              const TaskSpec& task) {
  if (!task.vocab.has_probe_tokens()) {
    throw ConfigError("probe: task vocab has no probe tokens");
  }
  std::vector<int> input = episode.input_tokens;
  // insert [PROBE, candidate] before the trailing QEND
  input.pop_back();
  input.push_back(task.vocab.probe);
  input.push_back(candidate_token);
  input.push_back(task.vocab.qend);
  return input;
}

double task_reward(const std::set<int>& pred, const std::set<int>& truth) {
  if (pred.empty() || truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (int t : pred) hits += truth.count(t);
  if (hits == 0) return 0.0;
  const double precision = static_cast<double>(hits) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(hits) / static_cast<double>(truth.size());
  return 2.0 * precision * recall / (precision + recall);
}

const char* to_string(ErrorClass e) {
  switch (e) {
    case ErrorClass::correct: return "correct";
    case ErrorClass::omission: return "omission";
    case ErrorClass::fabrication: return "fabrication";
    case ErrorClass::both: return "both";
  }
  return "?";
}

ErrorClass classify_error(const std::set<int>& pred, const Episode& episode) {
  const std::set<int>& truth = episode.truth_answer;
  bool omission = false;
  for (int t : truth) {
    if (!pred.count(t)) {
      omission = true;
      break;
    }
  }
  // Grounded set: the truth union the queried slots' causal tokens; those
  // coincide under this renderer, so truth membership is the test.
  bool fabrication = false;
  for (int t : pred) {
    if (!truth.count(t)) {
      fabrication = true;
      break;
    }
  }
  if (omission && fabrication) return ErrorClass::both;
  if (omission) return ErrorClass::omission;
  if (fabrication) return ErrorClass::fabrication;
  return ErrorClass::correct;
}

std::vector<Episode> generate_dataset(const TaskSpec& task, int n,
                                      std::uint64_t data_stream_seed) {
  std::vector<Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(n));
  const SeedStream stream{data_stream_seed};
  for (int i = 0; i < n; ++i) {
    const SeedStream sub = stream.at(static_cast<std::uint64_t>(i));
    auto eng = sub.engine();
    const Scene scene = generate_scene(task.factors, task.spurious, eng);
    const auto& tmpl =
        task.factors.templates[uniform_below(eng, task.factors.templates.size())];
    Episode ep = render_episode(scene, tmpl.id, task);
    ep.seed = sub.state;
    ep.index = i;
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

void write_episodes_jsonl(const std::string& path,
                          const std::vector<Episode>& episodes,
                          const TaskSpec& task) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& ep : episodes) {
    ordered_json j;
    j["seed"] = ep.seed;
    ordered_json causal = ordered_json::object();
    for (const auto& [slot, value] : ep.scene.causal_values) causal[slot] = value;
    j["causal_values"] = causal;
    ordered_json noncausal = ordered_json::object();
    for (const auto& [slot, value] : ep.scene.noncausal_values)
      noncausal[slot] = value;
    j["noncausal_values"] = noncausal;
    j["template_id"] = ep.template_id;
    std::vector<std::string> input;
    input.reserve(ep.input_tokens.size());
    for (int t : ep.input_tokens) input.push_back(task.vocab.text(t));
    j["input_tokens"] = input;
    std::vector<std::string> truth;
    for (int t : ep.truth_answer) truth.push_back(task.vocab.text(t));
    j["truth_answer"] = truth;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Episode> read_episodes_jsonl(const std::string& path,
                                         const TaskSpec& task) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<Episode> episodes;
  std::string line;
  int index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    Scene scene;
    for (const auto& [slot, value] : j.at("causal_values").items())
      scene.causal_values.emplace_back(slot, value.get<std::string>());
    for (const auto& [slot, value] : j.at("noncausal_values").items())
      scene.noncausal_values.emplace_back(slot, value.get<std::string>());
    Episode ep = render_episode(scene, j.at("template_id").get<std::string>(), task);
    ep.seed = j.at("seed").get<std::uint64_t>();
    ep.index = index++;
    // Imported rendering must round-trip exactly.
    std::vector<std::string> input = j.at("input_tokens").get<std::vector<std::string>>();
    if (input.size() != ep.input_tokens.size()) {
      throw ConfigError("episode import: input_tokens mismatch at line " +
                        std::to_string(index));
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
      if (task.vocab.id(input[i]) != ep.input_tokens[i]) {
        throw ConfigError("episode import: input_tokens mismatch at line " +
                          std::to_string(index));
      }
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace cgrl
