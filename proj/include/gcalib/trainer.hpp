#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gcalib/config.hpp"
#include "gcalib/dataset.hpp"
#include "gcalib/graph.hpp"

namespace gcalib::trainer {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled L2: added to the gradient before the moments
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState(std::size_t num_params, const AdamConfig& cfg)
      : config(cfg), m(num_params, 0.0), v(num_params, 0.0) {}
};

// One bias-corrected Adam update in place. Throws ShapeMismatch if the
// parameter and gradient lengths disagree with the state.
void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads);

// Computes loss and gradient of the fitting objective at params.
using ObjectiveGrad = std::function<double(const std::vector<double>& params, std::vector<double>& grad_out)>;
using Monitor = std::function<double(const std::vector<double>& params)>;

struct FitOptions {
  int max_epochs = 2000;
  int patience = 100;
  AdamConfig adam;
  bool use_adam = true;  // false: plain gradient descent (projected methods)
  const std::vector<bool>* frozen = nullptr;
  std::function<void(std::vector<double>&)> project;  // applied after each step
};

struct FitResult {
  std::vector<double> params;  // best snapshot under the monitor
  double best_monitor = 0.0;
  int epochs_run = 0;
  std::vector<double> monitor_history;
};

// Full-batch steps on the objective; after each epoch the monitor decides
// whether the snapshot improves. Stops after `patience` epochs without
// improvement and returns the best snapshot. Non-finite losses raise
// FitDiverged.
FitResult fit_with_early_stopping(const ObjectiveGrad& objective, const Monitor& monitor,
                                  std::vector<double> init, const FitOptions& options);

// Stratified split plan: per split, a shuffled 15%/85% labeled/unlabeled
// partition, with the labeled part dealt into near-equal stratified folds.
// assignments[split][fold] has val = that fold, train = remaining labeled
// nodes, test = the unlabeled rest.
struct SplitPlan {
  std::uint64_t seed = 0;
  double labeled_fraction = 0.15;
  int folds = 3;
  int splits = 1;
  std::vector<std::vector<NodeMask>> assignments;
  std::vector<std::string> warnings;
};

SplitPlan stratified_split(const std::vector<int>& labels, int num_nodes, double labeled_fraction,
                           int folds, int splits, std::uint64_t seed);

std::string split_plan_to_json(const SplitPlan& plan, int split_index);
NodeMask split_plan_assignment_from_json(const std::string& json_text, int num_nodes, int fold);

// Appendix-style hyperparameter grid.
extern const std::vector<double> kPaperWeightDecayGrid;  // 0 .. 3e-1
extern const std::vector<double> kPaperInitialT0Grid;    // 1, 1.5

struct GridCell {
  double weight_decay = 0.0;
  double initial_t0 = 1.0;
  double mean_monitor_nll = 0.0;
  bool valid = false;
};

struct GridResult {
  CalibratorConfig best_config;
  std::size_t best_index = 0;
  std::vector<GridCell> cells;
};

// Fits every (split, fold) of the plan per grid cell and averages the
// early-stopped monitor loss; ties resolve to the first cell in grid order
// (weight decay outer, initial T0 inner). Cells whose fits diverge are
// marked invalid; GridExhausted if none survive.
GridResult grid_search(const Dataset& base, const CalibratorConfig& base_config,
                       const std::vector<double>& weight_decays, const std::vector<double>& initial_t0s,
                       const SplitPlan& plan);

}  // namespace gcalib::trainer
