#include "cgrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "cgrl/errors.hpp"
#include "cgrl/rng.hpp"

namespace cgrl {

PolicyParams PolicyParams::zeros(int vocab_size, int embed_dim) {
  PolicyParams p;
  p.vocab_size = vocab_size;
  p.embed_dim = embed_dim;
  p.theta.assign(p.param_count(), 0.0);
  return p;
}

PolicyParams PolicyParams::init(int vocab_size, int embed_dim, std::uint64_t seed) {
  PolicyParams p = zeros(vocab_size, embed_dim);
  auto eng = SeedStream{seed}.engine();
  auto gauss = [&eng]() {
    // Box-Muller on the canonical uniform; std::normal_distribution's stream
    // is implementation-defined.
    double u1 = uniform01(eng);
    while (u1 <= 0.0) u1 = uniform01(eng);
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  const double scale = 0.5;
  for (int v = 0; v < vocab_size; ++v)
    for (int j = 0; j < embed_dim; ++j) p.emb(v)[j] = scale * gauss();
  for (int j = 0; j < embed_dim; ++j) p.mix()[j] = 1.0;
  double* proj = p.proj();
  for (int j = 0; j < embed_dim * vocab_size; ++j) proj[j] = scale * gauss();
  // bias stays zero
  return p;
}

namespace {

constexpr char kMagic[5] = {'C', 'G', 'R', 'L', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(params.vocab_size));
  put_u32(out, static_cast<std::uint32_t>(params.embed_dim));
  put_u32(out, static_cast<std::uint32_t>(params.theta.size()));
  for (double v : params.theta) put_f64(out, v);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint for reading: " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0) {
    throw IoError("bad checkpoint magic in " + path);
  }
  PolicyParams p;
  p.vocab_size = static_cast<int>(get_u32(in));
  p.embed_dim = static_cast<int>(get_u32(in));
  const std::uint32_t count = get_u32(in);
  if (!in || count != p.param_count()) {
    throw IoError("checkpoint parameter count mismatch in " + path);
  }
  p.theta.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) p.theta[i] = get_f64(in);
  if (!in) throw IoError("checkpoint truncated: " + path);
  return p;
}

PrefixEval::PrefixEval(const PolicyParams& params, const Episode& episode)
    : params_(&params),
      sum_(static_cast<std::size_t>(params.embed_dim), 0.0),
      mass_(static_cast<std::size_t>(params.vocab_size), 0.0) {
  if (params.theta.size() != params.param_count()) {
    throw ConfigError("policy params: theta length does not match (V,d)");
  }
  for (int t : episode.input_tokens) push(t);
}

void PrefixEval::push(int token) {
  if (token < 0 || token >= params_->vocab_size) {
    throw ConfigError("policy: token id out of range: " + std::to_string(token));
  }
  const int d = params_->embed_dim;
  const double* e = params_->emb(token);
  for (int j = 0; j < d; ++j) sum_[static_cast<std::size_t>(j)] =
      kContextDecay * sum_[static_cast<std::size_t>(j)] + e[j];
  for (auto& m : mass_) m *= kContextDecay;
  mass_[static_cast<std::size_t>(token)] += 1.0;
  z_ = kContextDecay * z_ + 1.0;
}

std::vector<double> PrefixEval::state() const {
  const int d = params_->embed_dim;
  std::vector<double> s(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j)
    s[static_cast<std::size_t>(j)] = sum_[static_cast<std::size_t>(j)] / z_;
  return s;
}

std::vector<double> PrefixEval::distribution(double temperature) const {
  if (!(temperature > 0.0)) throw ConfigError("policy: temperature must be > 0");
  const int V = params_->vocab_size;
  const int d = params_->embed_dim;
  const double* mix = params_->mix();
  const double* proj = params_->proj();
  const double* bias = params_->bias();

  std::vector<double> logits(static_cast<std::size_t>(V));
  for (int a = 0; a < V; ++a) logits[static_cast<std::size_t>(a)] = bias[a];
  for (int j = 0; j < d; ++j) {
    const double h = mix[j] * (sum_[static_cast<std::size_t>(j)] / z_);
    const double* row = proj + static_cast<std::size_t>(j) * V;
    for (int a = 0; a < V; ++a) logits[static_cast<std::size_t>(a)] += row[a] * h;
  }
  if (temperature != 1.0) {
    for (auto& l : logits) l /= temperature;
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double l : logits) max_logit = std::max(max_logit, l);
  double total = 0.0;
  std::vector<double> probs(static_cast<std::size_t>(V));
  for (int a = 0; a < V; ++a) {
    const double p = std::exp(logits[static_cast<std::size_t>(a)] - max_logit);
    probs[static_cast<std::size_t>(a)] = p;
    total += p;
  }
  for (auto& p : probs) p /= total;
  return probs;
}

std::vector<double> step_distribution(const PolicyParams& params,
                                      const Episode& episode,
                                      const std::vector<int>& prefix) {
  PrefixEval pe(params, episode);
  for (int t : prefix) pe.push(t);
  return pe.distribution();
}

namespace {

int sample_categorical(const std::vector<double>& probs, double u) {
  double cum = 0.0;
  for (std::size_t a = 0; a + 1 < probs.size(); ++a) {
    cum += probs[a];
    if (u < cum) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

int argmax_lowest_id(const std::vector<double>& probs) {
  int best = 0;
  for (std::size_t a = 1; a < probs.size(); ++a) {
    if (probs[a] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  return best;
}

}  // namespace

Trajectory sample_trajectory(const PolicyParams& params, const Vocab& vocab,
                             const Episode& episode, std::mt19937_64& rng,
                             int max_len, double temperature) {
  if (max_len < 1) throw ConfigError("sample: max_len must be >= 1");
  Trajectory traj;
  PrefixEval pe(params, episode);
  while (static_cast<int>(traj.tokens.size()) < max_len) {
    const std::vector<double> probs1 = pe.distribution();
    int token;
    if (temperature == 1.0) {
      token = sample_categorical(probs1, uniform01(rng));
    } else {
      token = sample_categorical(pe.distribution(temperature), uniform01(rng));
    }
    traj.tokens.push_back(token);
    traj.logprobs.push_back(std::log(probs1[static_cast<std::size_t>(token)]));
    pe.push(token);
    if (token == vocab.eos) {
      traj.terminated = true;
      break;
    }
  }
  traj.answer = extract_answer(traj.tokens, vocab);
  return traj;
}

Trajectory greedy_complete(const PolicyParams& params, const Vocab& vocab,
                           const Episode& episode,
                           const std::vector<int>& prefix, int max_len) {
  if (max_len < 1) throw ConfigError("greedy: max_len must be >= 1");
  Trajectory traj;
  traj.tokens = prefix;
  PrefixEval pe(params, episode);
  for (int t : prefix) {
    traj.logprobs.push_back(
        std::log(pe.distribution()[static_cast<std::size_t>(t)]));
    pe.push(t);
  }
  if (!prefix.empty() && prefix.back() == vocab.eos) {
    traj.terminated = true;
  } else {
    while (static_cast<int>(traj.tokens.size()) < max_len) {
      const std::vector<double> probs = pe.distribution();
      const int token = argmax_lowest_id(probs);
      traj.tokens.push_back(token);
      traj.logprobs.push_back(std::log(probs[static_cast<std::size_t>(token)]));
      pe.push(token);
      if (token == vocab.eos) {
        traj.terminated = true;
        break;
      }
    }
  }
  traj.answer = extract_answer(traj.tokens, vocab);
  return traj;
}

std::set<int> extract_answer(const std::vector<int>& tokens, const Vocab& vocab) {
  std::set<int> answer;
  int last_marker = -1;
  for (int i = static_cast<int>(tokens.size()) - 1; i >= 0; --i) {
    if (tokens[static_cast<std::size_t>(i)] == vocab.answer) {
      last_marker = i;
      break;
    }
  }
  if (last_marker < 0) return answer;
  for (std::size_t i = static_cast<std::size_t>(last_marker) + 1; i < tokens.size();
       ++i) {
    if (tokens[i] == vocab.eos) break;
    answer.insert(tokens[i]);
  }
  return answer;
}

std::pair<std::vector<double>, std::vector<double>> logprob_and_grad(
    const PolicyParams& params, const Episode& episode, const Trajectory& traj) {
  const int V = params.vocab_size;
  const int d = params.embed_dim;
  const double* mix = params.mix();
  const double* proj = params.proj();

  std::vector<double> logprobs;
  logprobs.reserve(traj.tokens.size());
  std::vector<double> grad(params.param_count(), 0.0);
  double* g_emb = grad.data();
  double* g_mix = grad.data() + static_cast<std::size_t>(V) * d;
  double* g_proj = g_mix + d;
  double* g_bias = g_proj + static_cast<std::size_t>(d) * V;

  PrefixEval pe(params, episode);
  for (int token : traj.tokens) {
    const std::vector<double> probs = pe.distribution();
    logprobs.push_back(std::log(probs[static_cast<std::size_t>(token)]));

    // dlogp/dlogit_a = [a == token] - p_a, chained through
    //   logit_a = sum_j P[j][a] * m_j * s_j + b_a,  s = decayed context mean
    const std::vector<double> s = pe.state();
    std::vector<double> u(static_cast<std::size_t>(d), 0.0);
    for (int a = 0; a < V; ++a) {
      const double g = (a == token ? 1.0 : 0.0) - probs[static_cast<std::size_t>(a)];
      g_bias[a] += g;
      for (int j = 0; j < d; ++j) {
        const double p_ja = proj[static_cast<std::size_t>(j) * V + a];
        g_proj[static_cast<std::size_t>(j) * V + a] += g * mix[j] * s[static_cast<std::size_t>(j)];
        u[static_cast<std::size_t>(j)] += p_ja * g;
      }
    }
    const std::vector<double>& mass = pe.token_mass();
    const double z = pe.mass_normalizer();
    for (int j = 0; j < d; ++j) {
      g_mix[j] += s[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)];
    }
    for (int v = 0; v < V; ++v) {
      const double w = mass[static_cast<std::size_t>(v)];
      if (w == 0.0) continue;
      const double wn = w / z;
      double* ge = g_emb + static_cast<std::size_t>(v) * d;
      for (int j = 0; j < d; ++j) {
        ge[j] += mix[j] * u[static_cast<std::size_t>(j)] * wn;
      }
    }
    pe.push(token);
  }
  return {std::move(logprobs), std::move(grad)};
}

std::vector<double> trajectory_logprobs(const PolicyParams& params,
                                        const Episode& episode,
                                        const std::vector<int>& tokens) {
  std::vector<double> logprobs;
  logprobs.reserve(tokens.size());
  PrefixEval pe(params, episode);
  for (int token : tokens) {
    logprobs.push_back(
        std::log(pe.distribution()[static_cast<std::size_t>(token)]));
    pe.push(token);
  }
  return logprobs;
}

std::vector<std::pair<std::vector<double>, std::vector<double>>> kl_states(
    const PolicyParams& params, const PolicyParams& ref_params,
    const Episode& episode, const Trajectory& traj) {
  if (!params.same_shape(ref_params)) {
    throw ConfigError("kl_states: parameter shapes differ");
  }
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
  pairs.reserve(traj.tokens.size());
  PrefixEval pe(params, episode);
  PrefixEval pe_ref(ref_params, episode);
  for (int token : traj.tokens) {
    pairs.emplace_back(pe.distribution(), pe_ref.distribution());
    pe.push(token);
    pe_ref.push(token);
  }
  return pairs;
}

}  // namespace cgrl
