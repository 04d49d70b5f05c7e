#include "cgrl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cgrl/causal_reward.hpp"
#include "cgrl/errors.hpp"
#include "cgrl/grpo.hpp"

namespace cgrl {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true|false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_u64(const std::vector<std::uint64_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format_double(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ConfigParser&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"task_preset",
       [](ConfigParser& p, const std::string& v) { p.config.task_preset = v; },
       [](const RunConfig& c) { return c.task_preset; }},
      {"spurious_p",
       [](ConfigParser& p, const std::string& v) { p.config.spurious_p = parse_double("spurious_p", v); },
       [](const RunConfig& c) { return format_double(c.spurious_p); }},
      {"train_prompts",
       [](ConfigParser& p, const std::string& v) { p.config.train_prompts = static_cast<int>(parse_int("train_prompts", v)); },
       [](const RunConfig& c) { return std::to_string(c.train_prompts); }},
      {"eval_episodes",
       [](ConfigParser& p, const std::string& v) { p.config.eval_episodes = static_cast<int>(parse_int("eval_episodes", v)); },
       [](const RunConfig& c) { return std::to_string(c.eval_episodes); }},
      {"lambda_s",
       [](ConfigParser& p, const std::string& v) {
         p.config.lambda_s = parse_double("lambda_s", v);
         p.saw_lambda_s = true;
       },
       [](const RunConfig& c) { return format_double(c.lambda_s); }},
      {"lambda_n",
       [](ConfigParser& p, const std::string& v) {
         p.config.lambda_n = parse_double("lambda_n", v);
         p.saw_lambda_n = true;
       },
       [](const RunConfig& c) { return format_double(c.lambda_n); }},
      {"eta",
       [](ConfigParser& p, const std::string& v) { p.config.eta = parse_double("eta", v); },
       [](const RunConfig& c) { return format_double(c.eta); }},
      {"eps_clip",
       [](ConfigParser& p, const std::string& v) { p.config.eps_clip = parse_double("eps_clip", v); },
       [](const RunConfig& c) { return format_double(c.eps_clip); }},
      {"beta",
       [](ConfigParser& p, const std::string& v) { p.config.beta = parse_double("beta", v); },
       [](const RunConfig& c) { return format_double(c.beta); }},
      {"group_size",
       [](ConfigParser& p, const std::string& v) { p.config.group_size = static_cast<int>(parse_int("group_size", v)); },
       [](const RunConfig& c) { return std::to_string(c.group_size); }},
      {"k_perturb",
       [](ConfigParser& p, const std::string& v) { p.config.k_perturb = static_cast<int>(parse_int("k_perturb", v)); },
       [](const RunConfig& c) { return std::to_string(c.k_perturb); }},
      {"perturb_mode",
       [](ConfigParser& p, const std::string& v) { p.config.perturb_mode = v; },
       [](const RunConfig& c) { return c.perturb_mode; }},
      {"necessity_variant",
       [](ConfigParser& p, const std::string& v) { p.config.necessity_variant = v; },
       [](const RunConfig& c) { return c.necessity_variant; }},
      {"variant",
       [](ConfigParser& p, const std::string& v) { p.config.variant = v; },
       [](const RunConfig& c) { return c.variant; }},
      {"kl_estimator",
       [](ConfigParser& p, const std::string& v) { p.config.kl_estimator = v; },
       [](const RunConfig& c) { return c.kl_estimator; }},
      {"learning_rate",
       [](ConfigParser& p, const std::string& v) { p.config.learning_rate = parse_double("learning_rate", v); },
       [](const RunConfig& c) { return format_double(c.learning_rate); }},
      {"momentum",
       [](ConfigParser& p, const std::string& v) { p.config.momentum = parse_double("momentum", v); },
       [](const RunConfig& c) { return format_double(c.momentum); }},
      {"iterations",
       [](ConfigParser& p, const std::string& v) { p.config.iterations = static_cast<int>(parse_int("iterations", v)); },
       [](const RunConfig& c) { return std::to_string(c.iterations); }},
      {"batch_prompts",
       [](ConfigParser& p, const std::string& v) { p.config.batch_prompts = static_cast<int>(parse_int("batch_prompts", v)); },
       [](const RunConfig& c) { return std::to_string(c.batch_prompts); }},
      {"minibatch",
       [](ConfigParser& p, const std::string& v) { p.config.minibatch = static_cast<int>(parse_int("minibatch", v)); },
       [](const RunConfig& c) { return std::to_string(c.minibatch); }},
      {"epochs",
       [](ConfigParser& p, const std::string& v) { p.config.epochs = static_cast<int>(parse_int("epochs", v)); },
       [](const RunConfig& c) { return std::to_string(c.epochs); }},
      {"max_len",
       [](ConfigParser& p, const std::string& v) { p.config.max_len = static_cast<int>(parse_int("max_len", v)); },
       [](const RunConfig& c) { return std::to_string(c.max_len); }},
      {"temperature",
       [](ConfigParser& p, const std::string& v) { p.config.temperature = parse_double("temperature", v); },
       [](const RunConfig& c) { return format_double(c.temperature); }},
      {"embed_dim",
       [](ConfigParser& p, const std::string& v) { p.config.embed_dim = static_cast<int>(parse_int("embed_dim", v)); },
       [](const RunConfig& c) { return std::to_string(c.embed_dim); }},
      {"eps_std",
       [](ConfigParser& p, const std::string& v) { p.config.eps_std = parse_double("eps_std", v); },
       [](const RunConfig& c) { return format_double(c.eps_std); }},
      {"seed",
       [](ConfigParser& p, const std::string& v) { p.config.seed = parse_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"seeds",
       [](ConfigParser& p, const std::string& v) {
         p.config.seeds.clear();
         for (const auto& item : split_list(v))
           p.config.seeds.push_back(parse_u64("seeds", item));
       },
       [](const RunConfig& c) { return join_u64(c.seeds); }},
      {"out_dir",
       [](ConfigParser& p, const std::string& v) { p.config.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
      {"checkpoint_every",
       [](ConfigParser& p, const std::string& v) { p.config.checkpoint_every = static_cast<int>(parse_int("checkpoint_every", v)); },
       [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }},
      {"dump_trajectories",
       [](ConfigParser& p, const std::string& v) { p.config.dump_trajectories = parse_bool("dump_trajectories", v); },
       [](const RunConfig& c) { return c.dump_trajectories ? "true" : "false"; }},
      {"lambda_grid",
       [](ConfigParser& p, const std::string& v) {
         p.config.lambda_grid.clear();
         for (const auto& item : split_list(v))
           p.config.lambda_grid.push_back(parse_double("lambda_grid", item));
       },
       [](const RunConfig& c) { return join_doubles(c.lambda_grid); }},
      {"eta_grid",
       [](ConfigParser& p, const std::string& v) {
         p.config.eta_grid.clear();
         for (const auto& item : split_list(v))
           p.config.eta_grid.push_back(parse_double("eta_grid", item));
       },
       [](const RunConfig& c) { return join_doubles(c.eta_grid); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

void RunConfig::validate() const {
  if (task_preset != "default" && task_preset != "tiny") {
    throw ConfigError("task_preset: expected default|tiny, got '" + task_preset + "'");
  }
  if (!(spurious_p >= 0.0 && spurious_p <= 1.0)) {
    throw ConfigError("spurious_p: must lie in [0,1]");
  }
  if (train_prompts < 1) throw ConfigError("train_prompts: must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes: must be >= 1");
  if (!(lambda_s >= 0.0 && lambda_s <= 1.0)) throw ConfigError("lambda_s: must lie in [0,1]");
  if (!(lambda_n >= 0.0 && lambda_n <= 1.0)) throw ConfigError("lambda_n: must lie in [0,1]");
  if (std::abs(lambda_s + lambda_n - 1.0) > 1e-9) {
    throw ConfigError("lambda_s/lambda_n: weights must satisfy lambda_s + lambda_n = 1");
  }
  if (!(eta >= 0.0)) throw ConfigError("eta: must be >= 0");
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) throw ConfigError("eps_clip: must lie in (0,1)");
  if (!(beta >= 0.0)) throw ConfigError("beta: must be >= 0");
  if (group_size < 2) throw ConfigError("group_size: must be >= 2");
  if (k_perturb < 1) throw ConfigError("k_perturb: must be >= 1");
  perturb_mode_from_string(perturb_mode);
  necessity_variant_from_string(necessity_variant);
  if (variant != "both" && variant != "suff-only" && variant != "nec-only" &&
      variant != "none") {
    throw ConfigError("variant: expected both|suff-only|nec-only|none, got '" +
                      variant + "'");
  }
  kl_estimator_from_string(kl_estimator);
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate: must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum: must lie in [0,1)");
  if (iterations < 0) throw ConfigError("iterations: must be >= 0");
  if (batch_prompts < 1) throw ConfigError("batch_prompts: must be >= 1");
  if (minibatch < 0) throw ConfigError("minibatch: must be >= 0");
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (max_len < 1) throw ConfigError("max_len: must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature: must be > 0");
  if (embed_dim < 1) throw ConfigError("embed_dim: must be >= 1");
  if (!(eps_std > 0.0)) throw ConfigError("eps_std: must be > 0");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every: must be >= 0");
  for (double l : lambda_grid)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda_grid: entries must lie in [0,1]");
  for (double e : eta_grid)
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("eta_grid: entries must lie in [0,1]");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

void ConfigParser::assign(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig ConfigParser::finish() {
  if (saw_lambda_s && !saw_lambda_n) {
    config.lambda_n = 1.0 - config.lambda_s;
  } else if (saw_lambda_n && !saw_lambda_s) {
    config.lambda_s = 1.0 - config.lambda_n;
  }
  config.validate();
  return config;
}

RunConfig parse_config(const std::vector<std::pair<std::string, std::string>>& kv) {
  ConfigParser parser;
  for (const auto& [key, value] : kv) parser.assign(key, value);
  return parser.finish();
}

RunConfig load_config_file(const std::string& path) {
  ConfigParser parser;
  apply_config_file(parser, path);
  return parser.finish();
}

void apply_config_file(ConfigParser& parser, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    parser.assign(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
}

void write_config_snapshot(const std::string& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "# config snapshot; replaying this file reproduces the run\n";
  for (const auto& [key, value] : config.entries()) {
    out << key << " = " << value << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace cgrl
