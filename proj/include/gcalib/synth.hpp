#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcalib/dataset.hpp"

namespace gcalib {

enum class MiscalMode { None, GlobalT, HomophilyT };

MiscalMode miscal_from_name(const std::string& name);
std::string miscal_name(MiscalMode mode);

// Deterministic block-model generator. Labels are resampled from the softmax
// of the clean logits, so with untouched logits the forecasts are calibrated
// by construction; the miscalibration modes rescale logits globally or as a
// function of node homophily.
struct SynthConfig {
  int num_nodes = 1000;
  int num_classes = 4;  // one block per class
  double intra_p = 0.05;
  double inter_p = 0.005;
  double signal = 3.0;       // true-class logit boost
  double noise_sigma = 1.0;
  MiscalMode miscal_mode = MiscalMode::None;
  double global_t = 2.0;
  double hom_a = 1.0;  // homophily_T scale: a + b * node_homophily, clamped at 0.1
  double hom_b = 0.5;
  double labeled_fraction = 0.15;
  int folds = 3;
  std::uint64_t seed = 0;
};

struct SynthResult {
  Dataset dataset;
  Matrix clean_logits;
  std::vector<double> gen_temperature;  // per-node scale applied to the clean logits
};

namespace synth {

SynthResult generate(const SynthConfig& config);

// Writes edges/labels/logits/split plus a manifest into out_dir and returns
// the manifest path.
std::string write_dataset_files(const SynthResult& result, const SynthConfig& config,
                                const std::string& out_dir);

}  // namespace synth
}  // namespace gcalib
