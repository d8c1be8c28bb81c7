#include "tahcd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "tahcd/errors.hpp"
#include "tahcd/rng.hpp"

namespace tahcd {

void MultimodalDataset::validate() const {
  if (modalities.empty()) throw ConfigError("dataset has no modalities");
  int n = modalities[0].rows;
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    if (modalities[m].rows != n)
      throw ConfigError("modality " + std::to_string(m) + " has " +
                        std::to_string(modalities[m].rows) + " rows, expected " +
                        std::to_string(n));
    if (modalities[m].cols <= 0)
      throw ConfigError("modality " + std::to_string(m) + " has no features");
    if (!all_finite(modalities[m]))
      throw ConfigError("modality " + std::to_string(m) + " contains non-finite values");
  }
  if (int(labels.size()) != n)
    throw ConfigError("have " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(n) + " rows");
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " is outside [0, " + std::to_string(num_classes) + ")");
}

MultimodalDataset MultimodalDataset::take(const std::vector<int>& indices) const {
  MultimodalDataset out;
  out.num_classes = num_classes;
  out.labels.reserve(indices.size());
  for (int i : indices) out.labels.push_back(labels[std::size_t(i)]);
  for (const Matrix& x : modalities) {
    Matrix sel(int(indices.size()), x.cols);
    for (std::size_t r = 0; r < indices.size(); ++r)
      for (int j = 0; j < x.cols; ++j) sel(int(r), j) = x(indices[r], j);
    out.modalities.push_back(std::move(sel));
  }
  return out;
}

MultimodalDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (spec.n < 4 * spec.num_classes)
    throw ConfigError("synthetic data needs at least 4 samples per class");
  if (spec.dims.empty()) throw ConfigError("synthetic data needs at least one modality");
  for (int d : spec.dims)
    if (d <= 0) throw ConfigError("modality feature widths must be positive");
  if (spec.latent_factors <= 0) throw ConfigError("latent_factors must be positive");

  int n = spec.n, c = spec.num_classes, k = spec.latent_factors;

  Rng factor_rng = substream(spec.seed, "factors");
  Rng map_rng = substream(spec.seed, "maps");
  Rng jitter_rng = substream(spec.seed, "jitter");
  Rng shuffle_rng = substream(spec.seed, "shuffle");

  // balanced labels; remainder spills onto the first classes
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[std::size_t(i)] = i % c;
  std::sort(labels.begin(), labels.end());

  Matrix centers(c, k);
  for (double& v : centers.data) v = spec.class_separation * factor_rng.normal();

  Matrix factors(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      factors(i, j) = centers(labels[std::size_t(i)], j) + spec.factor_noise * factor_rng.normal();

  MultimodalDataset ds;
  ds.num_classes = c;
  ds.labels = labels;
  for (int d : spec.dims) {
    Matrix a(d, k), b(d, k);
    double s = 1.0 / std::sqrt(double(k));
    for (double& v : a.data) v = s * map_rng.normal();
    for (double& v : b.data) v = s * map_rng.normal();

    Matrix lin = matmul_nt(factors, a);       // n x d
    Matrix curved = matmul_nt(factors, b);
    for (double& v : curved.data) v = std::tanh(v);
    Matrix x = lin;
    axpy_inplace(x, spec.nonlinearity, curved);
    for (double& v : x.data) v += spec.jitter * jitter_rng.normal();
    ds.modalities.push_back(std::move(x));
  }

  FeatureStats stats = fit_feature_stats(ds);
  apply_feature_stats(ds, stats);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  shuffle_rng.shuffle(order);
  ds = ds.take(order);

  ds.validate();
  return ds;
}

FeatureStats fit_feature_stats(const MultimodalDataset& ds) {
  FeatureStats stats;
  for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
    const Matrix& x = ds.modalities[m];
    Vec mean = col_means(x);
    Vec sd(std::size_t(x.cols), 0.0);
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < x.cols; ++j) {
        double dlt = x(i, j) - mean[std::size_t(j)];
        sd[std::size_t(j)] += dlt * dlt;
      }
    for (int j = 0; j < x.cols; ++j) {
      double v = std::sqrt(sd[std::size_t(j)] / x.rows);  // population std
      if (v < 1e-12) {
        std::cerr << "warning: modality " << m << " column " << j
                  << " is constant; leaving it unscaled\n";
        v = 1.0;
      }
      sd[std::size_t(j)] = v;
    }
    stats.mean.push_back(std::move(mean));
    stats.std.push_back(std::move(sd));
  }
  return stats;
}

void apply_feature_stats(MultimodalDataset& ds, const FeatureStats& stats) {
  if (stats.mean.size() != ds.modalities.size())
    throw ConfigError("feature stats cover " + std::to_string(stats.mean.size()) +
                      " modalities, dataset has " + std::to_string(ds.modalities.size()));
  for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
    Matrix& x = ds.modalities[m];
    if (int(stats.mean[m].size()) != x.cols)
      throw ConfigError("feature stats for modality " + std::to_string(m) +
                        " have the wrong width");
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < x.cols; ++j)
        x(i, j) = (x(i, j) - stats.mean[m][std::size_t(j)]) / stats.std[m][std::size_t(j)];
  }
}

static std::vector<int> resolve_targets(const NoiseSpec& spec, int num_modalities,
                                        bool default_all) {
  std::vector<int> targets = spec.target_modalities;
  if (targets.empty()) {
    for (int m = default_all ? 0 : 1; m < num_modalities; ++m) targets.push_back(m);
  }
  std::set<int> seen;
  for (int m : targets) {
    if (m < 0 || m >= num_modalities)
      throw ConfigError("noise target modality " + std::to_string(m) + " is out of range");
    if (!seen.insert(m).second)
      throw ConfigError("noise target modality " + std::to_string(m) + " listed twice");
  }
  return targets;
}

void inject_modality_noise(MultimodalDataset& ds, const NoiseSpec& spec) {
  if (spec.epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
  if (spec.epsilon == 0.0) return;
  for (int m : resolve_targets(spec, ds.num_modalities(), /*default_all=*/true)) {
    // one substream per modality so the target set does not shift other draws
    Rng rng = substream(spec.seed, "eps-mod-" + std::to_string(m));
    for (double& v : ds.modalities[std::size_t(m)].data) v += spec.epsilon * rng.normal();
  }
}

std::vector<int> inject_cross_modality_noise(MultimodalDataset& ds, const NoiseSpec& spec) {
  if (spec.eta < 0.0 || spec.eta > 1.0) throw ConfigError("eta must lie in [0, 1]");
  if (spec.eta == 0.0) return {};
  int n = ds.num_samples();
  int k = int(std::floor(spec.eta * n));
  if (k <= 1) {
    std::cerr << "warning: eta=" << spec.eta << " selects " << k << " of " << n
              << " rows; need at least 2 to break correspondence, skipping\n";
    return {};
  }
  std::vector<int> targets = resolve_targets(spec, ds.num_modalities(), /*default_all=*/false);
  for (int m : targets)
    if (m == 0)
      throw ConfigError(
          "cross-modality noise cannot target modality 0; labels stay anchored to it");
  if (targets.empty()) {
    std::cerr << "warning: dataset has a single modality; cross-modality noise is a no-op\n";
    return {};
  }

  // choose the affected rows: partial Fisher-Yates, then sort for stable output
  Rng select_rng = substream(spec.seed, "xmod-select");
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) std::swap(pool[std::size_t(i)], pool[std::size_t(i + select_rng.below(n - i))]);
  std::vector<int> selected(pool.begin(), pool.begin() + k);
  std::sort(selected.begin(), selected.end());

  for (int m : targets) {
    // Sattolo's algorithm: a single k-cycle, so no selected row keeps its row
    Rng perm_rng = substream(spec.seed, "xmod-perm-" + std::to_string(m));
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = k - 1; i >= 1; --i) std::swap(perm[std::size_t(i)], perm[std::size_t(perm_rng.below(i))]);

    const Matrix old = ds.modalities[std::size_t(m)];
    Matrix& x = ds.modalities[std::size_t(m)];
    for (int i = 0; i < k; ++i) {
      int dst = selected[std::size_t(i)];
      int src = selected[std::size_t(perm[std::size_t(i)])];
      for (int j = 0; j < x.cols; ++j) x(dst, j) = old(src, j);
    }
  }
  return selected;
}

SplitResult stratified_split(const MultimodalDataset& ds, double train_fraction,
                             std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  ds.validate();

  std::vector<std::vector<int>> by_class(std::size_t(ds.num_classes));
  for (int i = 0; i < ds.num_samples(); ++i)
    by_class[std::size_t(ds.labels[std::size_t(i)])].push_back(i);

  Rng rng = substream(seed, "split");
  SplitResult out;
  for (int c = 0; c < ds.num_classes; ++c) {
    auto& rows = by_class[std::size_t(c)];
    if (rows.size() < 2)
      throw ConfigError("class " + std::to_string(c) +
                        " has fewer than 2 samples; cannot split");
    rng.shuffle(rows);
    int take = int(std::llround(train_fraction * double(rows.size())));
    take = std::clamp(take, 1, int(rows.size()) - 1);
    out.train_indices.insert(out.train_indices.end(), rows.begin(), rows.begin() + take);
    out.test_indices.insert(out.test_indices.end(), rows.begin() + take, rows.end());
  }
  std::sort(out.train_indices.begin(), out.train_indices.end());
  std::sort(out.test_indices.begin(), out.test_indices.end());
  out.train = ds.take(out.train_indices);
  out.test = ds.take(out.test_indices);
  return out;
}

// ---- csv --------------------------------------------------------------

static std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (std::string& s : out) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    s.erase(0, i);
  }
  return out;
}

static double parse_double(const std::string& cell, const std::string& file, int row, int col) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ConfigError(file + " row " + std::to_string(row) + " col " + std::to_string(col) +
                      ": cannot parse '" + cell + "' as a number");
  return v;
}

static Matrix load_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("'" + path + "' is empty");
  int cols = int(split_commas(line).size());  // header row fixes the width

  std::vector<Vec> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_commas(line);
    if (int(cells.size()) != cols)
      throw ConfigError(path + " row " + std::to_string(lineno) + ": expected " +
                        std::to_string(cols) + " columns, found " +
                        std::to_string(cells.size()));
    Vec r(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) r[std::size_t(j)] = parse_double(cells[std::size_t(j)], path, lineno, j + 1);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("'" + path + "' has a header but no data rows");
  return Matrix::from_rows(rows);
}

MultimodalDataset load_csv(const std::vector<std::string>& modality_paths,
                           const std::string& label_path) {
  if (modality_paths.empty()) throw ConfigError("no modality files given");
  MultimodalDataset ds;
  for (const std::string& p : modality_paths) ds.modalities.push_back(load_numeric_csv(p));

  std::ifstream in(label_path);
  if (!in) throw ConfigError("cannot open '" + label_path + "'");
  std::string line;
  int lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_commas(line);
    if (cells.size() != 1)
      throw ConfigError(label_path + " row " + std::to_string(lineno) +
                        ": expected a single label column");
    int v = 0;
    auto [ptr, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), v);
    bool ok = ec == std::errc() && ptr == cells[0].data() + cells[0].size();
    if (!ok) {
      if (first) {  // tolerate a header line
        first = false;
        continue;
      }
      throw ConfigError(label_path + " row " + std::to_string(lineno) + ": cannot parse '" +
                        cells[0] + "' as an integer label");
    }
    first = false;
    if (v < 0)
      throw ConfigError(label_path + " row " + std::to_string(lineno) +
                        ": labels must be non-negative");
    ds.labels.push_back(v);
  }

  int n = ds.modalities[0].rows;
  for (std::size_t m = 1; m < ds.modalities.size(); ++m)
    if (ds.modalities[m].rows != n)
      throw ConfigError("'" + modality_paths[m] + "' has " +
                        std::to_string(ds.modalities[m].rows) + " rows but '" +
                        modality_paths[0] + "' has " + std::to_string(n));
  if (int(ds.labels.size()) != n)
    throw ConfigError("'" + label_path + "' has " + std::to_string(ds.labels.size()) +
                      " labels but the modalities have " + std::to_string(n) + " rows");

  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

static void write_double(std::ofstream& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.write(buf, ptr - buf);
}

void save_csv(const MultimodalDataset& ds, const std::vector<std::string>& modality_paths,
              const std::string& label_path) {
  if (modality_paths.size() != ds.modalities.size())
    throw ConfigError("need one output path per modality");
  for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
    std::ofstream out(modality_paths[m]);
    if (!out) throw ConfigError("cannot open '" + modality_paths[m] + "' for writing");
    const Matrix& x = ds.modalities[m];
    for (int j = 0; j < x.cols; ++j) out << (j ? "," : "") << 'm' << m << "_f" << j;
    out << '\n';
    for (int i = 0; i < x.rows; ++i) {
      for (int j = 0; j < x.cols; ++j) {
        if (j) out << ',';
        write_double(out, x(i, j));
      }
      out << '\n';
    }
    if (!out) throw ConfigError("write failed for '" + modality_paths[m] + "'");
  }
  std::ofstream out(label_path);
  if (!out) throw ConfigError("cannot open '" + label_path + "' for writing");
  out << "label\n";
  for (int v : ds.labels) out << v << '\n';
  if (!out) throw ConfigError("write failed for '" + label_path + "'");
}

}  // namespace tahcd
