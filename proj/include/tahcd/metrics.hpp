#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tahcd {

struct EvalReport {
  int num_classes = 0;
  int num_samples = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<int> confusion;  // row = true class, col = predicted, row-major
  // binary-only extras (class 1 = positive)
  std::optional<double> binary_f1;
  std::optional<double> auc;

  int confusion_at(int truth, int pred) const { return confusion[std::size_t(truth) * num_classes + pred]; }
};

// Predictions vs. labels; scores (higher = more positive) are optional and
// only consumed for binary problems, where they enable AUC. Classes absent
// from the labels get F1 = 0 with a warning.
EvalReport evaluate(std::span<const int> predictions, std::span<const int> labels,
                    int num_classes, std::span<const double> scores = {});

// Rank-based AUC (Mann-Whitney); ties contribute half credit.
double auc_from_scores(std::span<const double> scores, std::span<const int> labels);

std::string metrics_csv_header(const EvalReport& r);
std::string metrics_csv_row(const EvalReport& r);
std::string format_metrics_table(const EvalReport& r);

}  // namespace tahcd
