#include "skelact/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>

#include "skelact/model.hpp"
#include "skelact/synth.hpp"
#include "skelact/trainer.hpp"

namespace skelact {

std::vector<SkeletonSequence> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("dataset directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 11 && name.ends_with(".skel.jsonl")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .skel.jsonl sessions under " + dir.string());
  std::vector<SkeletonSequence> sessions;
  sessions.reserve(files.size());
  for (const auto& path : files) sessions.push_back(read_session_file(path));
  return sessions;
}

namespace {

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report file " + path.string());
  out << text;
  if (!out) throw DataError("write failed for report file " + path.string());
}

// Model/training flags shared by train and ablate. Flags override config
// file values; CLI11 gives the command line precedence by default.
void add_model_options(CLI::App* cmd, ModelConfig& cfg, std::string& variant, std::string& cell,
                       std::string& forget) {
  cmd->add_option("--frames", cfg.sampled_frames, "Frames sampled per session");
  cmd->add_option("--hidden", cfg.hidden_channels, "GCN channel width");
  cmd->add_option("--scales", cfg.scales, "Multi-scale partition count K");
  cmd->add_option("--lambda", cfg.fusion_lambda, "Fusion reinforcement factor");
  cmd->add_option("--window", cfg.attention_window, "Attention window length");
  cmd->add_option("--cell-hidden", cfg.cell_hidden, "Recurrent hidden size");
  cmd->add_option("--variant", variant, "head-only | body-only | fused | fused+attention");
  cmd->add_option("--cell", cell, "lstm | slstm");
  cmd->add_option("--forget", forget, "sigmoid | exp");
  cmd->add_option("--lr", cfg.learning_rate, "Learning rate");
  cmd->add_option("--epochs", cfg.epochs, "Training epochs");
  cmd->add_option("--batch", cfg.batch_size, "Mini-batch size");
  cmd->add_option("--impute-threshold", cfg.impute_threshold, "Confidence imputation threshold");
  cmd->add_flag("--exact-distance", cfg.exact_distance_masks,
                "Exact hop-distance masks for the body stream");
  cmd->add_option("--threads", cfg.threads, "Worker threads (default 1, fully deterministic)");
  cmd->set_config("--config", "", "Key-value configuration file; flags win");
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Two-stream GCN + attention-xLSTM skeleton action recognition"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "Generate a synthetic block-play dataset");
  std::string synth_out;
  GeneratorSpec spec;
  std::string synth_mode = "clip";
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n-asd", spec.n_asd, "ASD-labeled session count")->required();
  synth->add_option("--n-td", spec.n_td, "TD-labeled session count")->required();
  synth->add_option("--seed", spec.master_seed, "Master seed")->required();
  synth->add_option("--mode", synth_mode, "clip | session");
  synth->add_option("--separation", spec.separation, "Class separation in [0, 1]");
  synth->add_option("--fps", spec.fps, "Frames per second");
  synth->add_option("--noise", spec.noise_scale, "Pixel noise scale");

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "Train a model on a session directory");
  std::string train_data, train_out;
  ModelConfig train_cfg;
  std::string train_variant = variant_to_string(train_cfg.variant);
  std::string train_cell = cell_to_string(train_cfg.cell);
  std::string train_forget = forget_to_string(train_cfg.forget);
  train_cmd->add_option("--data", train_data, "Session directory")->required();
  train_cmd->add_option("--out", train_out, "Model output file")->required();
  train_cmd->add_option("--seed", train_cfg.seed, "Training seed")->required();
  add_model_options(train_cmd, train_cfg, train_variant, train_cell, train_forget);

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a session directory");
  std::string eval_model, eval_data, eval_report;
  int eval_threads = 1;
  eval_cmd->add_option("--model", eval_model, "Model file")->required();
  eval_cmd->add_option("--data", eval_data, "Session directory")->required();
  eval_cmd->add_option("--report", eval_report, "Report output file")->required();
  eval_cmd->add_option("--threads", eval_threads, "Worker threads");

  // --- gradcheck ---
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  std::uint64_t grad_seed = 7;
  double grad_eps = 1e-5, grad_tol = 1e-4;
  grad_cmd->add_option("--seed", grad_seed, "Seed");
  grad_cmd->add_option("--eps", grad_eps, "Central-difference step");
  grad_cmd->add_option("--tol", grad_tol, "Max relative error tolerance");

  // --- ablate ---
  auto* ablate_cmd = app.add_subcommand("ablate", "Variant/cell ablation over several seeds");
  std::string ablate_data, ablate_report;
  int ablate_seeds = 1;
  std::string ablate_variants = "head-only,body-only,fused,fused+attention";
  std::string ablate_cells;
  ModelConfig ablate_cfg;
  std::string ablate_variant_unused = variant_to_string(ablate_cfg.variant);
  std::string ablate_cell = cell_to_string(ablate_cfg.cell);
  std::string ablate_forget = forget_to_string(ablate_cfg.forget);
  ablate_cmd->add_option("--data", ablate_data, "Session directory")->required();
  ablate_cmd->add_option("--seeds", ablate_seeds, "Number of seeds")->required();
  ablate_cmd->add_option("--report", ablate_report, "Report output file")->required();
  ablate_cmd->add_option("--variants", ablate_variants, "Comma-separated variant list");
  ablate_cmd->add_option("--cells", ablate_cells, "Comma-separated cell list (default: --cell)");
  ablate_cmd->add_option("--seed", ablate_cfg.seed, "Base seed");
  add_model_options(ablate_cmd, ablate_cfg, ablate_variant_unused, ablate_cell, ablate_forget);

  // --- inspect ---
  auto* inspect_cmd = app.add_subcommand("inspect", "Print a model file manifest");
  std::string inspect_path;
  inspect_cmd->add_option("--model", inspect_path, "Model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (synth->parsed()) {
    if (synth_mode == "clip") {
      spec.mode = GeneratorSpec::Mode::Clip;
    } else if (synth_mode == "session") {
      spec.mode = GeneratorSpec::Mode::Session;
    } else {
      throw UsageError("synth: unknown mode '" + synth_mode + "' (expected clip or session)");
    }
    const auto records = generate_dataset(spec, synth_out);
    std::cout << "wrote " << records.size() << " sessions and manifest.jsonl to " << synth_out
              << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    train_cfg.variant = variant_from_string(train_variant);
    train_cfg.cell = cell_from_string(train_cell);
    train_cfg.forget = forget_from_string(train_forget);
    train_cfg.validate();
    const auto data = load_dataset(train_data);
    TrainResult result = train(data, train_cfg);
    save_model(result.model, train_out);
    const EpochStats& last = result.history.back();
    std::cout << "trained " << variant_to_string(train_cfg.variant) << "/"
              << cell_to_string(train_cfg.cell) << " on " << data.size() << " sessions, "
              << train_cfg.epochs << " epochs\n";
    std::cout << "final mean loss " << last.mean_loss << ", training accuracy "
              << last.train_accuracy << "\n";
    std::cout << "model written to " << train_out << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const TwoStreamModel model = load_model(eval_model);
    const auto data = load_dataset(eval_data);
    const Metrics metrics = evaluate(model, data, eval_threads);
    write_text_file(eval_report, metrics.to_json_string() + "\n");
    std::cout << "sessions " << data.size() << ", accuracy " << metrics.accuracy << ", uar "
              << metrics.uar << "\n";
    std::cout << "confusion [[" << metrics.confusion[0][0] << "," << metrics.confusion[0][1]
              << "],[" << metrics.confusion[1][0] << "," << metrics.confusion[1][1] << "]]\n";
    std::cout << "report written to " << eval_report << "\n";
    return 0;
  }

  if (grad_cmd->parsed()) {
    const double err = gradcheck_full_model(grad_seed, grad_eps);
    std::cout << "max relative gradient error " << err << " (tolerance " << grad_tol << ")\n";
    if (!(err <= grad_tol)) {
      throw NumericalError("gradcheck: error " + std::to_string(err) + " exceeds tolerance");
    }
    return 0;
  }

  if (ablate_cmd->parsed()) {
    if (ablate_seeds < 1) throw UsageError("ablate: --seeds must be >= 1");
    ablate_cfg.forget = forget_from_string(ablate_forget);
    std::vector<Variant> variants;
    {
      std::stringstream ss(ablate_variants);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) variants.push_back(variant_from_string(item));
      }
    }
    std::vector<CellKind> cells;
    {
      std::stringstream ss(ablate_cells.empty() ? ablate_cell : ablate_cells);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) cells.push_back(cell_from_string(item));
      }
    }
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < ablate_seeds; ++i) seeds.push_back(ablate_cfg.seed + i);
    const auto data = load_dataset(ablate_data);
    const AblationReport report = ablate(data, ablate_cfg, variants, cells, seeds);
    write_text_file(ablate_report, report.to_json_string() + "\n");
    std::cout << report.to_table();
    std::cout << "report written to " << ablate_report << "\n";
    return 0;
  }

  if (inspect_cmd->parsed()) {
    std::cout << inspect_model(inspect_path);
    return 0;
  }

  throw UsageError("no subcommand given");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    return dispatch(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace skelact
