#include "cgrl/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cgrl/errors.hpp"
#include "cgrl/rng.hpp"

namespace cgrl {

using ordered_json = nlohmann::ordered_json;

namespace {

double median(std::vector<double> xs) {
  if (xs.empty()) throw ConfigError("median: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct FinalMetrics {
  double accuracy = 0;
  double omission = 0;
  double fabrication = 0;
  double probe_f1 = 0;
};

FinalMetrics run_once(const RunConfig& config) {
  const TrainInputs inputs = make_train_inputs(config);
  const TrainResult result = train(inputs);
  const EvalReport report =
      full_report(result.params, inputs.task, inputs.eval_set, inputs.max_len,
                  SeedStream::root(config.seed).sub("probe").state);
  return {report.accuracy, report.omission_rate_s, report.fabrication_rate_i,
          report.probe_f1};
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<AblationRow> ablate(const RunConfig& base,
                                const std::function<void(const std::string&)>& log) {
  base.validate();
  const char* variants[] = {"none", "suff-only", "nec-only", "both"};
  std::vector<AblationRow> rows;
  for (const char* variant : variants) {
    std::vector<double> acc, omi, fab, comb, probe;
    for (std::uint64_t seed : base.seeds) {
      RunConfig config = base;
      config.variant = variant;
      config.seed = seed;
      if (std::string(variant) == "none") config.eta = 0.0;
      const FinalMetrics m = run_once(config);
      acc.push_back(m.accuracy);
      omi.push_back(m.omission);
      fab.push_back(m.fabrication);
      comb.push_back(m.omission + m.fabrication);
      probe.push_back(m.probe_f1);
      if (log) {
        log(std::string("ablate variant=") + variant + " seed=" +
            std::to_string(seed) + " combined=" + format_double(m.omission + m.fabrication) +
            " probe_f1=" + format_double(m.probe_f1));
      }
    }
    AblationRow row;
    row.variant = variant;
    row.median_accuracy = median(acc);
    row.median_omission = median(omi);
    row.median_fabrication = median(fab);
    row.median_combined = median(comb);
    row.median_probe_f1 = median(probe);
    row.seeds = static_cast<int>(base.seeds.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "variant,median_accuracy,median_omission,median_fabrication,"
         "median_combined,median_probe_f1,seeds\n";
  for (const auto& r : rows) {
    out << r.variant << "," << format_double(r.median_accuracy) << ","
        << format_double(r.median_omission) << "," << format_double(r.median_fabrication)
        << "," << format_double(r.median_combined) << ","
        << format_double(r.median_probe_f1) << "," << r.seeds << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_ablation_jsonl(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& r : rows) {
    ordered_json j;
    j["variant"] = r.variant;
    j["median_accuracy"] = r.median_accuracy;
    j["median_omission"] = r.median_omission;
    j["median_fabrication"] = r.median_fabrication;
    j["median_combined"] = r.median_combined;
    j["median_probe_f1"] = r.median_probe_f1;
    j["seeds"] = r.seeds;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

SweepResult sweep(const std::vector<double>& lambda_grid,
                  const std::vector<double>& eta_grid, const RunConfig& base,
                  const std::function<void(const std::string&)>& log) {
  base.validate();
  for (double l : lambda_grid)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda_grid: entries must lie in [0,1]");
  for (double e : eta_grid)
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("eta_grid: entries must lie in [0,1]");

  SweepResult result;
  double best = -1.0;
  for (double lambda_s : lambda_grid) {
    for (double eta : eta_grid) {
      std::vector<double> probes;
      for (std::uint64_t seed : base.seeds) {
        RunConfig config = base;
        config.lambda_s = lambda_s;
        config.lambda_n = 1.0 - lambda_s;
        config.eta = eta;
        config.seed = seed;
        config.variant = "both";
        const FinalMetrics m = run_once(config);
        probes.push_back(m.probe_f1);
        for (const auto& [metric, value] :
             std::initializer_list<std::pair<const char*, double>>{
                 {"accuracy", m.accuracy},
                 {"omission_rate_s", m.omission},
                 {"fabrication_rate_i", m.fabrication},
                 {"combined_hallucination", m.omission + m.fabrication},
                 {"probe_f1", m.probe_f1}}) {
          result.rows.push_back({"sweep", lambda_s, eta, seed, metric, value});
        }
        if (log) {
          log("sweep lambda_s=" + format_double(lambda_s) + " eta=" +
              format_double(eta) + " seed=" + std::to_string(seed) +
              " probe_f1=" + format_double(m.probe_f1));
        }
      }
      const double med = median(probes);
      if (med > best) {
        best = med;
        result.peak_lambda_s = lambda_s;
        result.peak_eta = eta;
        result.peak_probe_f1 = med;
      }
    }
  }
  return result;
}

void write_sweep_csv(const std::string& path, const SweepResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "variant,lambda_s,eta,seed,metric,value\n";
  for (const auto& r : result.rows) {
    out << r.variant << "," << format_double(r.lambda_s) << "," << format_double(r.eta)
        << "," << r.seed << "," << r.metric << "," << format_double(r.value) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_sweep_summary_jsonl(const std::string& path, const SweepResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  ordered_json j;
  j["peak_lambda_s"] = result.peak_lambda_s;
  j["peak_eta"] = result.peak_eta;
  j["peak_probe_f1"] = result.peak_probe_f1;
  j["reference_lambda_s"] = result.reference_lambda_s;
  j["reference_eta"] = result.reference_eta;
  j["reference_note"] =
      "full-scale reference optimum; desk-scale peak reported, not asserted";
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace cgrl
