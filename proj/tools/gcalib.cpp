// Command-line surface for the graph calibration toolkit: synthetic data
// generation, split planning, calibrator fitting, evaluation, and factor
// diagnostics. Exit codes: 0 ok, 2 bad input, 3 fit diverged.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcalib/calibrators.hpp"
#include "gcalib/config.hpp"
#include "gcalib/dataset.hpp"
#include "gcalib/diagnostics.hpp"
#include "gcalib/errors.hpp"
#include "gcalib/metrics.hpp"
#include "gcalib/rng.hpp"
#include "gcalib/synth.hpp"
#include "gcalib/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace gcalib;

json metrics_json(const EvalResult& r) {
  return json{{"ece", r.ece},       {"classwise_ece", r.classwise_ece}, {"kde_ece", r.kde_ece},
              {"nll", r.nll},       {"brier", r.brier},                 {"accuracy", r.accuracy}};
}

bool has_split(const NodeMask& mask) {
  return !(mask.train.empty() && mask.val.empty() && mask.test.empty());
}

std::uint64_t manifest_seed(const std::string& manifest_path) {
  const json j = json::parse(io::read_text(manifest_path));
  return j.value("seed", std::uint64_t{0});
}

struct SplitFlags {
  std::uint64_t seed = 0;
  bool seed_given = false;
  double fraction = 0.15;
  int folds = 3;
};

// Uses the manifest's split when present, otherwise derives one from the
// split seed flags.
void ensure_split(Dataset& data, const SplitFlags& flags) {
  if (has_split(data.mask)) return;
  if (!flags.seed_given) {
    throw BadManifest("manifest has no split file; pass --split-seed to derive one");
  }
  const trainer::SplitPlan plan =
      trainer::stratified_split(data.labels, data.graph.num_nodes, flags.fraction, flags.folds, 1, flags.seed);
  for (const std::string& w : plan.warnings) std::cerr << "warning: " << w << "\n";
  data.mask = plan.assignments[0][0];
}

AblationFlags parse_ablations(const std::vector<std::string>& specs) {
  AblationFlags flags;
  for (const std::string& spec : specs) {
    std::size_t pos = 0;
    while (pos < spec.size()) {
      std::size_t comma = spec.find(',', pos);
      if (comma == std::string::npos) comma = spec.size();
      const AblationFlags f = ablation_from_name(spec.substr(pos, comma - pos));
      flags.no_t0 |= f.no_t0;
      flags.no_gamma |= f.no_gamma;
      flags.no_dconf |= f.no_dconf;
      flags.no_attention |= f.no_attention;
      flags.no_sorting |= f.no_sorting;
      pos = comma + 1;
    }
  }
  return flags;
}

Matrix probs_for(const Dataset& data, const std::string& calibrator_path) {
  if (calibrator_path.empty()) return kernels::softmax_rows(data.logits);
  const auto calibrator = calib::load_calibrator(calibrator_path);
  return calibrator->apply(data).probs;
}

int run_synth(const SynthConfig& config, const std::string& out_dir) {
  const SynthResult result = synth::generate(config);
  const std::string manifest = synth::write_dataset_files(result, config, out_dir);
  std::cout << "wrote " << manifest << "\n";
  return 0;
}

int run_split(const std::string& manifest_path, double fraction, int folds, int splits,
              std::uint64_t seed, const std::string& out_dir) {
  const Dataset data = io::load_manifest(manifest_path);
  const trainer::SplitPlan plan =
      trainer::stratified_split(data.labels, data.graph.num_nodes, fraction, folds, splits, seed);
  for (const std::string& w : plan.warnings) std::cerr << "warning: " << w << "\n";
  fs::create_directories(out_dir);
  for (int s = 0; s < splits; ++s) {
    const std::string path = (fs::path(out_dir) / ("plan_split" + std::to_string(s) + ".json")).string();
    io::write_text_atomic(path, trainer::split_plan_to_json(plan, s));
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int run_evaluate(const std::string& manifest_path, const std::string& calibrator_path, int bins,
                 const SplitFlags& split_flags, const std::string& out_path) {
  Dataset data = io::load_manifest(manifest_path);
  ensure_split(data, split_flags);
  const Matrix probs = probs_for(data, calibrator_path);
  const EvalResult result = metrics::evaluate_all(probs, data.labels, data.mask.test, bins);

  json out;
  out["format_version"] = 1;
  out["bins"] = bins;
  out["eval_set"] = "test";
  out["source"] = calibrator_path.empty() ? "uncalibrated" : calibrator_path;
  out["metrics"] = metrics_json(result);
  const std::string text = out.dump(2) + "\n";
  if (!out_path.empty()) io::write_text_atomic(out_path, text);
  std::cout << text;
  return 0;
}

int run_diagnose(const std::string& manifest_path, const std::string& calibrator_path, int bins,
                 bool all_nodes, const SplitFlags& split_flags, const std::string& out_dir) {
  Dataset data = io::load_manifest(manifest_path);
  ensure_split(data, split_flags);
  const Matrix probs = probs_for(data, calibrator_path);
  diag::write_diagnostics(data, probs, bins, all_nodes, out_dir);
  std::cout << "wrote diagnostics to " << out_dir << "\n";
  return 0;
}

struct CalibrateArgs {
  std::string manifest;
  CalibratorConfig config;
  std::vector<std::string> ablate;
  bool grid = false;
  int grid_splits = 1;
  std::string protocol;
  int protocol_splits = 5;
  int protocol_inits = 5;
  SplitFlags split_flags;
  std::string out_dir;
};

int run_protocol(const CalibrateArgs& args, const Dataset& base) {
  const int splits = args.protocol_splits;
  const int folds = args.split_flags.folds;
  const int inits = args.protocol_inits;
  const std::uint64_t split_seed =
      args.split_flags.seed_given ? args.split_flags.seed : manifest_seed(args.manifest);
  const trainer::SplitPlan plan = trainer::stratified_split(
      base.labels, base.graph.num_nodes, args.split_flags.fraction, folds, splits, split_seed);
  for (const std::string& w : plan.warnings) std::cerr << "warning: " << w << "\n";

  json runs = json::array();
  std::vector<EvalResult> results;
  for (int s = 0; s < splits; ++s) {
    for (int f = 0; f < folds; ++f) {
      for (int i = 0; i < inits; ++i) {
        CalibratorConfig config = args.config;
        config.seed = Rng::derive(args.config.seed,
                                  (static_cast<std::uint64_t>(s) * folds + f) * inits + i);
        Dataset fold_data = base;
        fold_data.mask = plan.assignments[s][f];
        const calib::FitOutcome outcome = calib::fit_calibrator_report(config, fold_data);
        const Matrix probs = outcome.calibrator->apply(fold_data).probs;
        const EvalResult r =
            metrics::evaluate_all(probs, fold_data.labels, fold_data.mask.test, config.bins);
        results.push_back(r);
        runs.push_back(json{{"split", s}, {"fold", f}, {"init", i}, {"metrics", metrics_json(r)}});
      }
    }
  }

  const auto aggregate = [&results](auto field) {
    double mean = 0.0;
    for (const EvalResult& r : results) mean += field(r);
    mean /= static_cast<double>(results.size());
    double var = 0.0;
    for (const EvalResult& r : results) var += (field(r) - mean) * (field(r) - mean);
    return json{{"mean", mean}, {"std", std::sqrt(var / results.size())}};
  };

  json out;
  out["format_version"] = 1;
  out["method"] = method_name(args.config.method);
  out["runs"] = runs;
  out["aggregate"] = {
      {"ece", aggregate([](const EvalResult& r) { return r.ece; })},
      {"classwise_ece", aggregate([](const EvalResult& r) { return r.classwise_ece; })},
      {"kde_ece", aggregate([](const EvalResult& r) { return r.kde_ece; })},
      {"nll", aggregate([](const EvalResult& r) { return r.nll; })},
      {"brier", aggregate([](const EvalResult& r) { return r.brier; })},
      {"accuracy", aggregate([](const EvalResult& r) { return r.accuracy; })},
  };
  fs::create_directories(args.out_dir);
  const std::string path = (fs::path(args.out_dir) / "protocol_results.json").string();
  io::write_text_atomic(path, out.dump(2) + "\n");
  std::cout << "aggregate ECE: " << out["aggregate"]["ece"]["mean"] << " +- "
            << out["aggregate"]["ece"]["std"] << "\nwrote " << path << "\n";
  return 0;
}

int run_calibrate(CalibrateArgs args) {
  args.config.ablations = parse_ablations(args.ablate);
  validate(args.config);

  Dataset data = io::load_manifest(args.manifest);
  if (!args.protocol.empty()) {
    if (args.protocol != "paper") throw InvalidConfig("unknown protocol: " + args.protocol);
    return run_protocol(args, data);
  }
  ensure_split(data, args.split_flags);

  fs::create_directories(args.out_dir);
  json grid_report;
  if (args.grid) {
    trainer::SplitPlan plan;
    if (args.split_flags.seed_given) {
      plan = trainer::stratified_split(data.labels, data.graph.num_nodes, args.split_flags.fraction,
                                       args.split_flags.folds, args.grid_splits, args.split_flags.seed);
    } else {
      plan.folds = 1;
      plan.splits = 1;
      plan.assignments = {{data.mask}};
    }
    const trainer::GridResult grid = trainer::grid_search(
        data, args.config, trainer::kPaperWeightDecayGrid, trainer::kPaperInitialT0Grid, plan);
    json cells = json::array();
    for (const trainer::GridCell& cell : grid.cells) {
      json c = {{"weight_decay", cell.weight_decay},
                {"initial_t0", cell.initial_t0},
                {"valid", cell.valid}};
      if (cell.valid) c["mean_monitor_nll"] = cell.mean_monitor_nll;
      cells.push_back(std::move(c));
    }
    grid_report = {{"cells", std::move(cells)}, {"best_index", grid.best_index}};
    args.config.weight_decay = grid.best_config.weight_decay;
    args.config.initial_t0 = grid.best_config.initial_t0;
  }

  const calib::FitOutcome outcome = calib::fit_calibrator_report(args.config, data);
  const std::string calibrator_path = (fs::path(args.out_dir) / "calibrator.json").string();
  calib::save_calibrator(*outcome.calibrator, calibrator_path);

  const Matrix uncal = kernels::softmax_rows(data.logits);
  const Matrix cal = outcome.calibrator->apply(data).probs;
  const EvalResult before = metrics::evaluate_all(uncal, data.labels, data.mask.test, args.config.bins);
  const EvalResult after = metrics::evaluate_all(cal, data.labels, data.mask.test, args.config.bins);

  json eval;
  eval["format_version"] = 1;
  eval["method"] = method_name(args.config.method);
  eval["bins"] = args.config.bins;
  eval["eval_set"] = "test";
  eval["uncalibrated"] = metrics_json(before);
  eval["calibrated"] = metrics_json(after);
  eval["fit"] = {{"best_monitor_nll", outcome.best_monitor_nll},
                 {"epochs_run", outcome.epochs_run},
                 {"num_learnable_parameters", outcome.calibrator->num_learnable_parameters()}};
  if (!grid_report.is_null()) eval["grid"] = grid_report;

  const std::string eval_path = (fs::path(args.out_dir) / "evaluation.json").string();
  io::write_text_atomic(eval_path, eval.dump(2) + "\n");

  std::cout << "test ECE: " << before.ece << " -> " << after.ece << "\n"
            << "wrote " << calibrator_path << " and " << eval_path << "\n";
  return 0;
}

void add_split_flags(CLI::App* cmd, SplitFlags& flags) {
  cmd->add_option("--split-seed", flags.seed, "derive a split when the manifest has none")
      ->each([&flags](const std::string&) { flags.seed_given = true; });
  cmd->add_option("--split-fraction", flags.fraction, "labeled fraction for derived splits");
  cmd->add_option("--split-folds", flags.folds, "fold count for derived splits");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-hoc calibration toolkit for node classification on graphs"};
  app.require_subcommand(1);

  // synth ---------------------------------------------------------------
  SynthConfig synth_config;
  std::string synth_out;
  std::string synth_miscal = "none";
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--out-dir", synth_out, "output directory")->required();
  synth_cmd->add_option("--nodes", synth_config.num_nodes, "node count");
  synth_cmd->add_option("--classes", synth_config.num_classes, "class (and block) count");
  synth_cmd->add_option("--intra-p", synth_config.intra_p, "intra-block edge probability");
  synth_cmd->add_option("--inter-p", synth_config.inter_p, "inter-block edge probability");
  synth_cmd->add_option("--signal", synth_config.signal, "true-class logit boost");
  synth_cmd->add_option("--noise", synth_config.noise_sigma, "logit noise sigma");
  synth_cmd->add_option("--miscal", synth_miscal, "miscalibration mode: none|global|homophily");
  synth_cmd->add_option("--t", synth_config.global_t, "global temperature for --miscal global");
  synth_cmd->add_option("--hom-a", synth_config.hom_a, "homophily temperature intercept");
  synth_cmd->add_option("--hom-b", synth_config.hom_b, "homophily temperature slope");
  synth_cmd->add_option("--fraction", synth_config.labeled_fraction, "labeled fraction");
  synth_cmd->add_option("--folds", synth_config.folds, "fold count for the emitted split");
  synth_cmd->add_option("--seed", synth_config.seed, "generator seed");

  // split ---------------------------------------------------------------
  std::string split_manifest, split_out;
  double split_fraction = 0.15;
  int split_folds = 3, split_count = 1;
  std::uint64_t split_seed = 0;
  auto* split_cmd = app.add_subcommand("split", "write stratified split plans");
  split_cmd->add_option("manifest", split_manifest, "dataset manifest")->required();
  split_cmd->add_option("--fraction", split_fraction, "labeled fraction");
  split_cmd->add_option("--folds", split_folds, "folds per split");
  split_cmd->add_option("--splits", split_count, "number of independent splits");
  split_cmd->add_option("--seed", split_seed, "split seed");
  split_cmd->add_option("--out-dir", split_out, "output directory")->required();

  // calibrate -------------------------------------------------------------
  CalibrateArgs cal;
  std::string cal_method = "ts";
  auto* cal_cmd = app.add_subcommand("calibrate", "fit a calibrator and evaluate it");
  cal_cmd->add_option("manifest", cal.manifest, "dataset manifest")->required();
  cal_cmd->add_option("--method", cal_method, "ts|vs|ets|cagcn|gats")->required();
  cal_cmd->add_option("--heads", cal.config.heads, "attention heads (gats)");
  cal_cmd->add_option("--bins", cal.config.bins, "ECE bin count");
  cal_cmd->add_option("--seed", cal.config.seed, "fit seed");
  cal_cmd->add_option("--weight-decay", cal.config.weight_decay, "coupled L2 strength");
  cal_cmd->add_option("--lr", cal.config.lr, "learning rate");
  cal_cmd->add_option("--epochs", cal.config.max_epochs, "max epochs");
  cal_cmd->add_option("--patience", cal.config.patience, "early-stopping patience");
  cal_cmd->add_option("--init-t0", cal.config.initial_t0, "initial temperature / bias");
  cal_cmd->add_option("--leaky-slope", cal.config.leaky_slope, "attention leaky-relu slope");
  cal_cmd->add_option("--cagcn-hidden", cal.config.cagcn_hidden, "cagcn hidden width");
  cal_cmd->add_option("--ablate", cal.ablate, "ablation flags (comma separated or repeated)");
  cal_cmd->add_flag("--grid", cal.grid, "search the weight-decay x initial-T0 grid first");
  cal_cmd->add_option("--grid-splits", cal.grid_splits, "splits for the grid plan (with --split-seed)");
  cal_cmd->add_option("--protocol", cal.protocol, "'paper': splits x folds x inits aggregate");
  cal_cmd->add_option("--protocol-splits", cal.protocol_splits, "splits for --protocol");
  cal_cmd->add_option("--protocol-inits", cal.protocol_inits, "inits for --protocol");
  cal_cmd->add_option("--out", cal.out_dir, "output directory")->required();
  add_split_flags(cal_cmd, cal.split_flags);

  // evaluate --------------------------------------------------------------
  std::string eval_manifest, eval_calibrator, eval_out;
  int eval_bins = 15;
  SplitFlags eval_split;
  auto* eval_cmd = app.add_subcommand("evaluate", "compute calibration metrics on the test set");
  eval_cmd->add_option("manifest", eval_manifest, "dataset manifest")->required();
  eval_cmd->add_option("--calibrator", eval_calibrator, "fitted calibrator JSON (default: raw softmax)");
  eval_cmd->add_option("--bins", eval_bins, "ECE bin count");
  eval_cmd->add_option("--out", eval_out, "write the result JSON here");
  add_split_flags(eval_cmd, eval_split);

  // diagnose --------------------------------------------------------------
  std::string diag_manifest, diag_calibrator, diag_out;
  int diag_bins = 15;
  bool diag_all_nodes = false;
  SplitFlags diag_split;
  auto* diag_cmd = app.add_subcommand("diagnose", "emit per-node factor and curve CSVs");
  diag_cmd->add_option("manifest", diag_manifest, "dataset manifest")->required();
  diag_cmd->add_option("--calibrator", diag_calibrator, "fitted calibrator JSON (default: raw softmax)");
  diag_cmd->add_option("--bins", diag_bins, "ECE bin count");
  diag_cmd->add_flag("--all-nodes", diag_all_nodes, "report every node, not just the test set");
  diag_cmd->add_option("--out-dir", diag_out, "output directory")->required();
  add_split_flags(diag_cmd, diag_split);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      synth_config.miscal_mode = miscal_from_name(synth_miscal);
      return run_synth(synth_config, synth_out);
    }
    if (split_cmd->parsed()) {
      return run_split(split_manifest, split_fraction, split_folds, split_count, split_seed, split_out);
    }
    if (cal_cmd->parsed()) {
      cal.config.method = method_from_name(cal_method);
      return run_calibrate(std::move(cal));
    }
    if (eval_cmd->parsed()) {
      return run_evaluate(eval_manifest, eval_calibrator, eval_bins, eval_split, eval_out);
    }
    if (diag_cmd->parsed()) {
      return run_diagnose(diag_manifest, diag_calibrator, diag_bins, diag_all_nodes, diag_split, diag_out);
    }
  } catch (const FitDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
