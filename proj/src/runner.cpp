#include "tahcd/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tahcd/errors.hpp"
#include "tahcd/rng.hpp"
#include "tahcd/ttce.hpp"

namespace fs = std::filesystem;

namespace tahcd {

SeedData build_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  MultimodalDataset full;
  if (cfg.source == "synthetic") {
    full = generate_synthetic(cfg.synthetic_spec(seed));
  } else {
    full = load_csv(cfg.modality_csv, cfg.label_csv);
  }

  SplitResult split = stratified_split(full, cfg.train_fraction, substream_seed(seed, "split"));
  SeedData data{std::move(split.train), std::move(split.test)};

  if (cfg.source == "csv") {  // synthetic data is already z-scored at the source
    FeatureStats stats = fit_feature_stats(data.train);
    apply_feature_stats(data.train, stats);
    apply_feature_stats(data.test, stats);
  }

  auto corrupt = [](MultimodalDataset& side, double epsilon, double eta,
                    const std::vector<int>& eps_targets, std::uint64_t noise_seed) {
    NoiseSpec spec;
    spec.epsilon = epsilon;
    spec.eta = eta;
    spec.seed = noise_seed;
    if (epsilon > 0.0) {
      spec.target_modalities = eps_targets;
      inject_modality_noise(side, spec);
    }
    if (eta > 0.0) {
      spec.target_modalities.clear();  // the shuffle keeps its own default
      inject_cross_modality_noise(side, spec);
    }
  };
  corrupt(data.train, cfg.train_epsilon, cfg.train_eta, cfg.train_epsilon_targets,
          substream_seed(seed, "noise-train"));
  corrupt(data.test, cfg.test_epsilon, cfg.test_eta, cfg.test_epsilon_targets,
          substream_seed(seed, "noise-test"));

  return data;
}

namespace {

EvalReport report_from(const PredictionBatch& pred, const MultimodalDataset& test) {
  std::vector<double> scores;
  if (test.num_classes == 2) {
    scores.reserve(std::size_t(pred.probs.rows));
    for (int i = 0; i < pred.probs.rows; ++i) scores.push_back(pred.probs(i, 1));
  }
  return evaluate(pred.classes, test.labels, test.num_classes, scores);
}

}  // namespace

EvalOutcome evaluate_model(const TahcdModel& model, const MultimodalDataset& test,
                           const TtceConfig& ttce) {
  test.validate();
  EvalOutcome out;
  TtceConfig plain = ttce;
  plain.iterations = 0;
  PipelineResult r0 = run_pipeline(model, test.modalities, plain, test.labels);
  out.before = report_from(r0.pred, test);
  if (ttce.iterations > 0 && model.cfg.use_saca) {
    PipelineResult re = run_pipeline(model, test.modalities, ttce, test.labels);
    out.after = report_from(re.pred, test);
    out.trace = re.state.trace;
  } else {
    out.after = out.before;
    out.trace = r0.state.trace;
  }
  return out;
}

SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData data = build_experiment_data(cfg, seed);
  Rng init = substream(seed, "init");
  TahcdModel model = make_model(cfg.model_config(data.train), init);
  TrainResult tr = train(model, data.train, cfg.train_config(seed));

  SeedOutcome out;
  out.seed = seed;
  out.history = std::move(tr.history);
  out.eval = evaluate_model(model, data.test, cfg.ttce_config());
  out.model = std::move(model);
  return out;
}

Aggregate aggregate_reports(const std::vector<EvalReport>& reports) {
  Aggregate a;
  a.count = int(reports.size());
  if (reports.empty()) return a;
  auto mean_std = [&](auto get, double& mean, double& sd) {
    for (const EvalReport& r : reports) mean += get(r);
    mean /= a.count;
    if (a.count > 1) {
      for (const EvalReport& r : reports) sd += (get(r) - mean) * (get(r) - mean);
      sd = std::sqrt(sd / (a.count - 1));
    }
  };
  mean_std([](const EvalReport& r) { return r.accuracy; }, a.acc_mean, a.acc_std);
  mean_std([](const EvalReport& r) { return r.macro_f1; }, a.macro_f1_mean, a.macro_f1_std);
  mean_std([](const EvalReport& r) { return r.weighted_f1; }, a.weighted_f1_mean,
           a.weighted_f1_std);
  return a;
}

const std::vector<AblationVariant>& ablation_grid() {
  static const std::vector<AblationVariant> grid = {
      {"full", true, true, true},
      {"-TTCE", true, true, false},
      {"-TTCE-SACA", true, false, false},
      {"none", false, false, false},
  };
  return grid;
}

std::vector<AblationCell> run_ablation(const ExperimentConfig& cfg, bool verbose) {
  std::vector<AblationCell> cells;
  for (const char* protocol : {"same-noise", "unseen-noise"}) {
    ExperimentConfig proto = cfg;
    if (std::string(protocol) == "same-noise") {
      proto.train_epsilon = cfg.test_epsilon;
      proto.train_eta = cfg.test_eta;
    } else {
      proto.train_epsilon = 0.0;
      proto.train_eta = 0.0;
    }
    for (const AblationVariant& v : ablation_grid()) {
      ExperimentConfig run = proto;
      run.use_assa = v.assa;
      run.use_saca = v.saca;
      run.use_ttce = v.ttce;
      run.validate_and_normalize();
      std::vector<EvalReport> reports;
      for (std::uint64_t seed : run.seeds) {
        if (verbose)
          std::cerr << "ablate: " << protocol << " " << v.name << " seed " << seed << "\n";
        reports.push_back(run_seed(run, seed).eval.after);
      }
      cells.push_back({protocol, v.name, aggregate_reports(reports)});
    }
  }
  return cells;
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
  std::ostringstream out;
  out.precision(6);
  out << "protocol,variant,seeds,acc_mean,acc_std,macro_f1_mean,macro_f1_std,"
         "weighted_f1_mean,weighted_f1_std\n";
  for (const AblationCell& c : cells)
    out << c.protocol << ',' << c.variant << ',' << c.agg.count << ',' << c.agg.acc_mean << ','
        << c.agg.acc_std << ',' << c.agg.macro_f1_mean << ',' << c.agg.macro_f1_std << ','
        << c.agg.weighted_f1_mean << ',' << c.agg.weighted_f1_std << '\n';
  return out.str();
}

namespace {

std::string pm(double mean, double sd) {
  std::ostringstream out;
  out.precision(4);
  out << std::fixed << mean << " ± " << sd;
  return out.str();
}

}  // namespace

std::string ablation_markdown(const std::vector<AblationCell>& cells) {
  std::ostringstream out;
  std::string last_protocol;
  for (const AblationCell& c : cells) {
    if (c.protocol != last_protocol) {
      if (!last_protocol.empty()) out << "\n";
      out << "### " << c.protocol << "\n\n";
      out << "| variant | accuracy | macro F1 | weighted F1 |\n";
      out << "|---|---|---|---|\n";
      last_protocol = c.protocol;
    }
    out << "| " << c.variant << " | " << pm(c.agg.acc_mean, c.agg.acc_std) << " | "
        << pm(c.agg.macro_f1_mean, c.agg.macro_f1_std) << " | "
        << pm(c.agg.weighted_f1_mean, c.agg.weighted_f1_std) << " |\n";
  }
  return out.str();
}

void write_trace_csv(const std::string& path, const std::vector<TtceTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.precision(8);
  out << "iteration,l_re,l_nll_s,l_nll_c,accuracy\n";
  for (const TtceTraceRow& r : trace)
    out << r.iteration << ',' << r.l_re << ',' << r.nll_s << ',' << r.nll_c << ',' << r.accuracy
        << '\n';
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

std::string eval_summary_csv(const std::vector<SeedOutcome>& outcomes) {
  std::ostringstream out;
  out.precision(6);
  out << "seed,stage,accuracy,macro_f1,weighted_f1,binary_f1,auc\n";
  auto cell = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string();
  };
  for (const SeedOutcome& o : outcomes) {
    out << o.seed << ",before," << o.eval.before.accuracy << ',' << o.eval.before.macro_f1 << ','
        << o.eval.before.weighted_f1 << ',' << cell(o.eval.before.binary_f1) << ','
        << cell(o.eval.before.auc) << '\n';
    out << o.seed << ",after," << o.eval.after.accuracy << ',' << o.eval.after.macro_f1 << ','
        << o.eval.after.weighted_f1 << ',' << cell(o.eval.after.binary_f1) << ','
        << cell(o.eval.after.auc) << '\n';
  }
  for (const char* stage : {"before", "after"}) {
    std::vector<EvalReport> reports;
    for (const SeedOutcome& o : outcomes)
      reports.push_back(std::string(stage) == "before" ? o.eval.before : o.eval.after);
    Aggregate a = aggregate_reports(reports);
    out << "mean," << stage << ',' << a.acc_mean << ',' << a.macro_f1_mean << ','
        << a.weighted_f1_mean << ",,\n";
    out << "std," << stage << ',' << a.acc_std << ',' << a.macro_f1_std << ','
        << a.weighted_f1_std << ",,\n";
  }
  return out.str();
}

std::string eval_summary_markdown(const std::vector<SeedOutcome>& outcomes) {
  std::vector<EvalReport> before, after;
  for (const SeedOutcome& o : outcomes) {
    before.push_back(o.eval.before);
    after.push_back(o.eval.after);
  }
  Aggregate b = aggregate_reports(before);
  Aggregate a = aggregate_reports(after);
  std::ostringstream out;
  out << "| stage | accuracy | macro F1 | weighted F1 |\n|---|---|---|---|\n";
  out << "| feed-forward (E=0) | " << pm(b.acc_mean, b.acc_std) << " | "
      << pm(b.macro_f1_mean, b.macro_f1_std) << " | " << pm(b.weighted_f1_mean, b.weighted_f1_std)
      << " |\n";
  out << "| enhanced | " << pm(a.acc_mean, a.acc_std) << " | " << pm(a.macro_f1_mean, a.macro_f1_std)
      << " | " << pm(a.weighted_f1_mean, a.weighted_f1_std) << " |\n";
  return out.str();
}

std::string render_report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir + "' is not a directory");
  std::ostringstream out;
  out << "# Experiment report\n\n";

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  bool any = false;
  if (fs::exists(fs::path(dir) / "eval_summary.md")) {
    out << "## Evaluation\n\n" << slurp(fs::path(dir) / "eval_summary.md") << "\n";
    any = true;
  }
  if (fs::exists(fs::path(dir) / "ablation.md")) {
    out << "## Ablations\n\n" << slurp(fs::path(dir) / "ablation.md") << "\n";
    any = true;
  }

  std::vector<fs::path> histories;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("history_seed", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      histories.push_back(entry.path());
  }
  std::sort(histories.begin(), histories.end());
  if (!histories.empty()) {
    out << "## Training\n\n| run | epochs | final train acc | final L_cls |\n|---|---|---|---|\n";
    for (const fs::path& p : histories) {
      std::ifstream in(p);
      std::string line, last;
      std::getline(in, line);  // header
      int epochs = 0;
      while (std::getline(in, line))
        if (!line.empty()) {
          last = line;
          ++epochs;
        }
      if (last.empty()) continue;
      std::vector<std::string> fields;
      std::istringstream ls(last);
      std::string tok;
      while (std::getline(ls, tok, ',')) fields.push_back(tok);
      if (fields.size() < 10) continue;
      out << "| " << p.stem().string() << " | " << epochs << " | " << fields[9] << " | "
          << fields[8] << " |\n";
    }
    out << "\n";
    any = true;
  }

  std::vector<fs::path> traces;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("trace_seed", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      traces.push_back(entry.path());
  }
  std::sort(traces.begin(), traces.end());
  if (!traces.empty()) {
    out << "## Test-time enhancement\n\n"
        << "| run | iterations | L_nll_c first | L_nll_c last |\n|---|---|---|---|\n";
    for (const fs::path& p : traces) {
      std::ifstream in(p);
      std::string line, first, last;
      std::getline(in, line);  // header
      int rows = 0;
      while (std::getline(in, line))
        if (!line.empty()) {
          if (first.empty()) first = line;
          last = line;
          ++rows;
        }
      if (first.empty()) continue;
      auto field = [](const std::string& l, int idx) {
        std::istringstream ls(l);
        std::string tok;
        for (int i = 0; i <= idx; ++i) std::getline(ls, tok, ',');
        return tok;
      };
      out << "| " << p.stem().string() << " | " << rows - 1 << " | " << field(first, 3) << " | "
          << field(last, 3) << " |\n";
    }
    out << "\n";
    any = true;
  }

  if (!any) out << "No artifacts found in '" << dir << "'.\n";
  return out.str();
}

}  // namespace tahcd
