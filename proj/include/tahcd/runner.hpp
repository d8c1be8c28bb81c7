#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tahcd/config.hpp"
#include "tahcd/fusion.hpp"
#include "tahcd/metrics.hpp"

namespace tahcd {

struct SeedData {
  MultimodalDataset train;
  MultimodalDataset test;
};

// Clean data (generated or loaded, z-scored), stratified split, then the
// configured corruption applied to each side independently — train noise
// never leaks into test rows and vice versa.
SeedData build_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct EvalOutcome {
  EvalReport before;  // feed-forward only (E = 0)
  EvalReport after;   // after the full enhancement budget; = before when the loop is off
  std::vector<TtceTraceRow> trace;
};

EvalOutcome evaluate_model(const TahcdModel& model, const MultimodalDataset& test,
                           const TtceConfig& ttce);

struct SeedOutcome {
  std::uint64_t seed = 0;
  TahcdModel model;
  std::vector<HistoryRow> history;
  EvalOutcome eval;
};

// The full per-seed pipeline: build data, init, train, evaluate.
SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Mean and sample standard deviation (0 for a single seed) of the headline
// metrics across seeds.
struct Aggregate {
  int count = 0;
  double acc_mean = 0, acc_std = 0;
  double macro_f1_mean = 0, macro_f1_std = 0;
  double weighted_f1_mean = 0, weighted_f1_std = 0;
};

Aggregate aggregate_reports(const std::vector<EvalReport>& reports);

// The component-removal grid in table row order.
struct AblationVariant {
  std::string name;
  bool assa, saca, ttce;
};

const std::vector<AblationVariant>& ablation_grid();

struct AblationCell {
  std::string protocol;  // "same-noise" or "unseen-noise"
  std::string variant;
  Aggregate agg;
};

// Runs the 4-variant grid under both protocols. The [noise.test] settings
// define the corruption; same-noise applies it to the training side too,
// unseen-noise trains clean.
std::vector<AblationCell> run_ablation(const ExperimentConfig& cfg, bool verbose = false);

std::string ablation_csv(const std::vector<AblationCell>& cells);
std::string ablation_markdown(const std::vector<AblationCell>& cells);

void write_trace_csv(const std::string& path, const std::vector<TtceTraceRow>& trace);

// Per-seed metric rows (before/after stages) plus mean/std footer rows.
std::string eval_summary_csv(const std::vector<SeedOutcome>& outcomes);
std::string eval_summary_markdown(const std::vector<SeedOutcome>& outcomes);

// Collects whatever artifacts exist under dir (eval summary, ablation table,
// training histories) into one markdown report.
std::string render_report(const std::string& dir);

}  // namespace tahcd
