#pragma once

#include <string>
#include <vector>

#include "cgrl/train.hpp"

namespace cgrl {

struct AblationRow {
  std::string variant;  // none | suff-only | nec-only | both
  double median_accuracy = 0;
  double median_omission = 0;
  double median_fabrication = 0;
  double median_combined = 0;
  double median_probe_f1 = 0;
  int seeds = 0;
};

// Trains every causal-component variant with shared seeds and reports
// seed-medians of the final evaluation. Row order: none, suff-only,
// nec-only, both.
std::vector<AblationRow> ablate(const RunConfig& base,
                                const std::function<void(const std::string&)>& log = {});

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);
void write_ablation_jsonl(const std::string& path, const std::vector<AblationRow>& rows);

// Plot-ready long format: one row per (lambda_s, eta, seed, metric).
struct SweepRow {
  std::string variant;
  double lambda_s = 0;
  double eta = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // Desk-scale peak of median probe F1 over the grid (reported, not asserted).
  double peak_lambda_s = 0;
  double peak_eta = 0;
  double peak_probe_f1 = 0;
  // Full-scale reference optimum, annotated for comparison.
  double reference_lambda_s = 0.5;
  double reference_eta = 0.3;
};

SweepResult sweep(const std::vector<double>& lambda_grid,
                  const std::vector<double>& eta_grid, const RunConfig& base,
                  const std::function<void(const std::string&)>& log = {});

void write_sweep_csv(const std::string& path, const SweepResult& result);
void write_sweep_summary_jsonl(const std::string& path, const SweepResult& result);

}  // namespace cgrl
