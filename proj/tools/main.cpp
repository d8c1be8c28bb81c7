// Command-line front end: train / eval / ablate / noise / report.
// Exit codes: 0 ok, 2 config error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tahcd/config.hpp"
#include "tahcd/errors.hpp"
#include "tahcd/rng.hpp"
#include "tahcd/runner.hpp"
#include "tahcd/ttce.hpp"

namespace fs = std::filesystem;
using namespace tahcd;

namespace {

std::string checkpoint_path(const std::string& dir, std::uint64_t seed) {
  return dir + "/model_seed" + std::to_string(seed) + ".bin";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

int cmd_train(const ExperimentConfig& cfg, bool verbose) {
  fs::create_directories(cfg.output_dir);
  save_experiment_config(cfg, cfg.output_dir + "/config.ini");
  for (std::uint64_t seed : cfg.seeds) {
    if (verbose) std::cerr << "train: seed " << seed << "\n";
    SeedData data = build_experiment_data(cfg, seed);
    Rng init = substream(seed, "init");
    TahcdModel model = make_model(cfg.model_config(data.train), init);
    TrainConfig tc = cfg.train_config(seed);
    tc.verbose = verbose;
    TrainResult tr = train(model, data.train, tc);
    save_model(model, checkpoint_path(cfg.output_dir, seed));
    write_history_csv(cfg.output_dir + "/history_seed" + std::to_string(seed) + ".csv",
                      tr.history);
  }
  std::cout << "trained " << cfg.seeds.size() << " seed(s) into " << cfg.output_dir << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint, bool verbose) {
  fs::create_directories(cfg.output_dir);
  std::vector<SeedOutcome> outcomes;
  for (std::uint64_t seed : cfg.seeds) {
    if (verbose) std::cerr << "eval: seed " << seed << "\n";
    std::string path = checkpoint.empty() ? checkpoint_path(cfg.output_dir, seed) : checkpoint;
    SeedOutcome o;
    o.seed = seed;
    o.model = load_model(path);
    SeedData data = build_experiment_data(cfg, seed);
    o.eval = evaluate_model(o.model, data.test, cfg.ttce_config());
    write_trace_csv(cfg.output_dir + "/trace_seed" + std::to_string(seed) + ".csv", o.eval.trace);
    std::string tables = "### feed-forward (E=0)\n\n" + format_metrics_table(o.eval.before) +
                         "\n### enhanced\n\n" + format_metrics_table(o.eval.after);
    write_text(cfg.output_dir + "/eval_seed" + std::to_string(seed) + ".md", tables);
    outcomes.push_back(std::move(o));
  }
  write_text(cfg.output_dir + "/eval_summary.csv", eval_summary_csv(outcomes));
  std::string summary = eval_summary_markdown(outcomes);
  write_text(cfg.output_dir + "/eval_summary.md", summary);
  std::cout << summary;
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, bool verbose) {
  fs::create_directories(cfg.output_dir);
  std::vector<AblationCell> cells = run_ablation(cfg, verbose);
  write_text(cfg.output_dir + "/ablation.csv", ablation_csv(cells));
  std::string md = ablation_markdown(cells);
  write_text(cfg.output_dir + "/ablation.md", md);
  std::cout << md;
  return 0;
}

int cmd_noise(const ExperimentConfig& cfg) {
  std::uint64_t seed = cfg.seeds.front();
  MultimodalDataset clean = cfg.source == "synthetic"
                                ? generate_synthetic(cfg.synthetic_spec(seed))
                                : load_csv(cfg.modality_csv, cfg.label_csv);

  auto paths = [&](const std::string& sub) {
    fs::create_directories(fs::path(cfg.output_dir) / sub);
    std::vector<std::string> mods;
    for (int m = 0; m < clean.num_modalities(); ++m)
      mods.push_back((fs::path(cfg.output_dir) / sub / ("modality" + std::to_string(m) + ".csv")).string());
    return std::pair{mods, (fs::path(cfg.output_dir) / sub / "labels.csv").string()};
  };

  auto [clean_mods, clean_labels] = paths("clean");
  save_csv(clean, clean_mods, clean_labels);

  MultimodalDataset noisy = clean;
  NoiseSpec spec;
  spec.epsilon = cfg.test_epsilon;
  spec.eta = cfg.test_eta;
  spec.seed = substream_seed(seed, "noise-test");
  std::vector<int> shuffled;
  if (spec.epsilon > 0.0) inject_modality_noise(noisy, spec);
  if (spec.eta > 0.0) shuffled = inject_cross_modality_noise(noisy, spec);

  auto [noisy_mods, noisy_labels] = paths("noisy");
  save_csv(noisy, noisy_mods, noisy_labels);
  std::ostringstream index;
  for (int i : shuffled) index << i << "\n";
  write_text((fs::path(cfg.output_dir) / "noisy" / "shuffled_rows.txt").string(), index.str());

  std::cout << "wrote clean and corrupted copies (" << shuffled.size()
            << " rows cross-modality shuffled) under " << cfg.output_dir << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  std::string report = render_report(dir);
  write_text(dir + "/report.md", report);
  std::cout << report;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"test-time adaptive hierarchical denoising for multimodal classification"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, output_override, report_dir;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "progress to stderr");

  CLI::App* c_train = app.add_subcommand("train", "train one model per seed");
  c_train->add_option("-c,--config", config_path, "experiment config file")->required();
  c_train->add_option("-o,--output", output_override, "override output directory");

  CLI::App* c_eval = app.add_subcommand("eval", "evaluate checkpoints with and without enhancement");
  c_eval->add_option("-c,--config", config_path, "experiment config file")->required();
  c_eval->add_option("-k,--checkpoint", checkpoint, "explicit checkpoint (default: per-seed files in the output dir)");
  c_eval->add_option("-o,--output", output_override, "override output directory");

  CLI::App* c_ablate = app.add_subcommand("ablate", "component-removal grid under both noise protocols");
  c_ablate->add_option("-c,--config", config_path, "experiment config file")->required();
  c_ablate->add_option("-o,--output", output_override, "override output directory");

  CLI::App* c_noise = app.add_subcommand("noise", "materialize clean and corrupted dataset CSVs");
  c_noise->add_option("-c,--config", config_path, "experiment config file")->required();
  c_noise->add_option("-o,--output", output_override, "override output directory");

  CLI::App* c_report = app.add_subcommand("report", "collect artifacts into one markdown report");
  c_report->add_option("-c,--config", config_path, "experiment config file (for its output dir)");
  c_report->add_option("-d,--dir", report_dir, "artifact directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    if (!output_override.empty()) cfg.output_dir = output_override;

    if (c_train->parsed()) return cmd_train(cfg, verbose);
    if (c_eval->parsed()) return cmd_eval(cfg, checkpoint, verbose);
    if (c_ablate->parsed()) return cmd_ablate(cfg, verbose);
    if (c_noise->parsed()) return cmd_noise(cfg);
    if (c_report->parsed()) {
      if (report_dir.empty() && config_path.empty())
        throw ConfigError("report needs --dir or --config");
      return cmd_report(report_dir.empty() ? cfg.output_dir : report_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
