#include "gcalib/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "gcalib/errors.hpp"
#include "gcalib/graph.hpp"
#include "gcalib/rng.hpp"
#include "gcalib/trainer.hpp"

namespace fs = std::filesystem;

namespace gcalib {

MiscalMode miscal_from_name(const std::string& name) {
  if (name == "none") return MiscalMode::None;
  if (name == "global") return MiscalMode::GlobalT;
  if (name == "homophily") return MiscalMode::HomophilyT;
  throw InvalidConfig("unknown miscalibration mode: " + name);
}

std::string miscal_name(MiscalMode mode) {
  switch (mode) {
    case MiscalMode::None: return "none";
    case MiscalMode::GlobalT: return "global";
    case MiscalMode::HomophilyT: return "homophily";
  }
  throw InvalidConfig("unknown miscalibration mode");
}

namespace synth {

namespace {

void validate_config(const SynthConfig& c) {
  if (c.num_nodes < 2 || c.num_classes < 2) throw InvalidConfig("synth: need >= 2 nodes and >= 2 classes");
  if (c.num_classes > c.num_nodes) throw InvalidConfig("synth: more classes than nodes");
  if (c.intra_p < 0.0 || c.intra_p > 1.0 || c.inter_p < 0.0 || c.inter_p > 1.0) {
    throw InvalidConfig("synth: edge probabilities must lie in [0, 1]");
  }
  if (c.signal < 0.0) throw InvalidConfig("synth: signal must be >= 0");
  if (c.noise_sigma < 0.0) throw InvalidConfig("synth: noise_sigma must be >= 0");
  if (c.global_t <= 0.0) throw InvalidConfig("synth: global_t must be > 0");
}

// Samples edges in a contiguous index range [lo, hi) with probability p
// using geometric gap jumps, so cost is proportional to the edge count.
void sample_range(Rng& rng, int i, int lo, int hi, double p,
                  std::vector<std::pair<int, int>>& edges) {
  if (p <= 0.0 || lo >= hi) return;
  if (p >= 1.0) {
    for (int j = lo; j < hi; ++j) edges.emplace_back(i, j);
    return;
  }
  const double log_q = std::log1p(-p);
  int pos = lo;
  for (;;) {
    const double u = 1.0 - rng.next_double();  // (0, 1]
    const double jump = std::floor(std::log(u) / log_q);
    if (jump >= static_cast<double>(hi - pos)) break;
    pos += static_cast<int>(jump);
    edges.emplace_back(i, pos);
    ++pos;
    if (pos >= hi) break;
  }
}

}  // namespace

SynthResult generate(const SynthConfig& config) {
  validate_config(config);
  const int n = config.num_nodes;
  const int k = config.num_classes;

  // Contiguous balanced blocks, one per class.
  std::vector<int> block_bounds(k + 1);
  for (int b = 0; b <= k; ++b) block_bounds[b] = static_cast<int>(static_cast<long long>(b) * n / k);
  std::vector<int> planted(n);
  for (int b = 0; b < k; ++b) {
    for (int i = block_bounds[b]; i < block_bounds[b + 1]; ++i) planted[i] = b;
  }

  Rng edge_rng(Rng::derive(config.seed, 1));
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    const int block_end = block_bounds[planted[i] + 1];
    sample_range(edge_rng, i, i + 1, block_end, config.intra_p, edges);
    sample_range(edge_rng, i, block_end, n, config.inter_p, edges);
  }

  SynthResult result;
  result.dataset.graph = graph_core::build_graph(edges, n);
  result.dataset.num_classes = k;

  Rng noise_rng(Rng::derive(config.seed, 2));
  result.clean_logits = Matrix(n, k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      result.clean_logits(i, c) =
          (c == planted[i] ? config.signal : 0.0) + config.noise_sigma * noise_rng.next_normal();
    }
  }

  // Resample labels from the clean forecast itself, making softmax of the
  // clean logits exactly calibrated.
  const Matrix clean_probs = kernels::softmax_rows(result.clean_logits);
  Rng label_rng(Rng::derive(config.seed, 3));
  result.dataset.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const double u = label_rng.next_double();
    double acc = 0.0;
    int chosen = k - 1;
    for (int c = 0; c < k; ++c) {
      acc += clean_probs(i, c);
      if (u < acc) {
        chosen = c;
        break;
      }
    }
    result.dataset.labels[i] = chosen;
  }

  result.gen_temperature.assign(n, 1.0);
  switch (config.miscal_mode) {
    case MiscalMode::None:
      break;
    case MiscalMode::GlobalT:
      std::fill(result.gen_temperature.begin(), result.gen_temperature.end(), config.global_t);
      break;
    case MiscalMode::HomophilyT: {
      std::vector<int> pred(n);
      for (int i = 0; i < n; ++i) pred[i] = kernels::argmax(result.clean_logits.row(i));
      const std::vector<double> homophily = graph_core::node_homophily(result.dataset.graph, pred);
      for (int i = 0; i < n; ++i) {
        result.gen_temperature[i] = std::max(config.hom_a + config.hom_b * homophily[i], 0.1);
      }
      break;
    }
  }

  result.dataset.logits = Matrix(n, k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      result.dataset.logits(i, c) = result.clean_logits(i, c) * result.gen_temperature[i];
    }
  }

  const trainer::SplitPlan plan =
      trainer::stratified_split(result.dataset.labels, n, config.labeled_fraction, config.folds,
                                /*splits=*/1, Rng::derive(config.seed, 4));
  result.dataset.mask = plan.assignments[0][0];
  return result;
}

std::string write_dataset_files(const SynthResult& result, const SynthConfig& config,
                                const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  graph_core::write_edge_file((dir / "edges.txt").string(), result.dataset.graph);
  io::write_labels_file((dir / "labels.tsv").string(), result.dataset.labels);
  io::write_logits_file((dir / "logits.txt").string(), result.dataset.logits);
  io::write_split_file((dir / "split.json").string(), result.dataset.mask);

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["num_nodes"] = config.num_nodes;
  manifest["num_classes"] = config.num_classes;
  manifest["seed"] = config.seed;
  manifest["edges"] = "edges.txt";
  manifest["labels"] = "labels.tsv";
  manifest["logits"] = "logits.txt";
  manifest["split"] = "split.json";
  manifest["generator"] = {
      {"intra_p", config.intra_p},       {"inter_p", config.inter_p},
      {"signal", config.signal},         {"noise_sigma", config.noise_sigma},
      {"miscal_mode", miscal_name(config.miscal_mode)},
      {"global_t", config.global_t},     {"hom_a", config.hom_a},
      {"hom_b", config.hom_b},           {"labeled_fraction", config.labeled_fraction},
      {"folds", config.folds},
  };
  const std::string manifest_path = (dir / "manifest.json").string();
  io::write_text_atomic(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

}  // namespace synth
}  // namespace gcalib
