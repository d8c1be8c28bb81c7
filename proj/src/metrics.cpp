#include "tahcd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "tahcd/errors.hpp"

namespace tahcd {

EvalReport evaluate(std::span<const int> predictions, std::span<const int> labels,
                    int num_classes, std::span<const double> scores) {
  if (predictions.size() != labels.size())
    throw ConfigError("evaluate: prediction/label counts differ");
  if (labels.empty()) throw ConfigError("evaluate: no samples");
  if (num_classes < 2) throw ConfigError("evaluate: need at least two classes");

  EvalReport r;
  r.num_classes = num_classes;
  r.num_samples = int(labels.size());
  r.confusion.assign(std::size_t(num_classes) * num_classes, 0);

  int correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int t = labels[i], p = predictions[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw ConfigError("evaluate: class id out of range at row " + std::to_string(i));
    ++r.confusion[std::size_t(t) * num_classes + p];
    if (t == p) ++correct;
  }
  r.accuracy = double(correct) / double(r.num_samples);

  r.per_class_f1.resize(static_cast<std::size_t>(num_classes));
  double weighted = 0.0, macro = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    long tp = r.confusion_at(c, c);
    long support = 0, predicted = 0;
    for (int j = 0; j < num_classes; ++j) {
      support += r.confusion_at(c, j);
      predicted += r.confusion_at(j, c);
    }
    double f1 = 0.0;
    if (support == 0) {
      std::cerr << "warning: class " << c << " absent from labels; its F1 is reported as 0\n";
    } else if (tp > 0) {
      double prec = double(tp) / double(predicted);
      double rec = double(tp) / double(support);
      f1 = 2.0 * prec * rec / (prec + rec);
    }
    r.per_class_f1[std::size_t(c)] = f1;
    macro += f1;
    weighted += f1 * double(support);
  }
  r.macro_f1 = macro / num_classes;
  r.weighted_f1 = weighted / double(r.num_samples);

  if (num_classes == 2) {
    r.binary_f1 = r.per_class_f1[1];
    if (scores.size() == labels.size()) r.auc = auc_from_scores(scores, labels);
  }
  return r;
}

double auc_from_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ConfigError("auc: score/label counts differ");
  long n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw ConfigError("auc: need both positive and negative samples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // rank sum of positives with average ranks over tied scores
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * double(i + 1 + j + 1);  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    i = j + 1;
  }
  return (rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) / (double(n_pos) * double(n_neg));
}

std::string metrics_csv_header(const EvalReport& r) {
  std::ostringstream out;
  out << "n,accuracy,weighted_f1,macro_f1";
  for (int c = 0; c < r.num_classes; ++c) out << ",f1_class" << c;
  if (r.binary_f1) out << ",binary_f1";
  if (r.auc) out << ",auc";
  return out.str();
}

std::string metrics_csv_row(const EvalReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << r.num_samples << ',' << r.accuracy << ',' << r.weighted_f1 << ',' << r.macro_f1;
  for (double f : r.per_class_f1) out << ',' << f;
  if (r.binary_f1) out << ',' << *r.binary_f1;
  if (r.auc) out << ',' << *r.auc;
  return out.str();
}

std::string format_metrics_table(const EvalReport& r) {
  std::ostringstream out;
  out.precision(4);
  out << std::fixed;
  out << "| metric | value |\n|---|---|\n";
  out << "| samples | " << r.num_samples << " |\n";
  out << "| accuracy | " << r.accuracy << " |\n";
  out << "| weighted F1 | " << r.weighted_f1 << " |\n";
  out << "| macro F1 | " << r.macro_f1 << " |\n";
  for (int c = 0; c < r.num_classes; ++c)
    out << "| F1 class " << c << " | " << r.per_class_f1[std::size_t(c)] << " |\n";
  if (r.binary_f1) out << "| binary F1 | " << *r.binary_f1 << " |\n";
  if (r.auc) out << "| AUC | " << *r.auc << " |\n";
  return out.str();
}

}  // namespace tahcd
