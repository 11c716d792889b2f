#include "gcalib/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "gcalib/calibrators.hpp"
#include "gcalib/errors.hpp"
#include "gcalib/rng.hpp"

namespace gcalib::trainer {

const std::vector<double> kPaperWeightDecayGrid = {0.0, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 2e-1, 3e-1};
const std::vector<double> kPaperInitialT0Grid = {1.0, 1.5};

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeMismatch("adam_step: parameter/gradient size mismatch");
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + c.weight_decay * params[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

FitResult fit_with_early_stopping(const ObjectiveGrad& objective, const Monitor& monitor,
                                  std::vector<double> init, const FitOptions& options) {
  if (options.patience > options.max_epochs) {
    throw InvalidConfig("fit_with_early_stopping: patience exceeds max_epochs");
  }
  std::vector<double> params = std::move(init);
  const std::vector<double> frozen_values = params;

  FitResult result;
  result.params = params;
  result.best_monitor = monitor(params);
  if (!std::isfinite(result.best_monitor)) throw FitDiverged("initial monitor loss is non-finite");

  AdamState adam(params.size(), options.adam);
  std::vector<double> grad(params.size(), 0.0);
  int epochs_without_improvement = 0;

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = objective(params, grad);
    if (!std::isfinite(loss)) throw FitDiverged("objective loss became non-finite");

    if (options.frozen) {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if ((*options.frozen)[i]) grad[i] = 0.0;
      }
    }
    if (options.use_adam) {
      adam_step(adam, params, grad);
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= options.adam.lr * (grad[i] + options.adam.weight_decay * params[i]);
      }
    }
    if (options.frozen) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        if ((*options.frozen)[i]) params[i] = frozen_values[i];
      }
    }
    if (options.project) options.project(params);

    const double m = monitor(params);
    if (!std::isfinite(m)) throw FitDiverged("monitor loss became non-finite");
    result.monitor_history.push_back(m);
    result.epochs_run = epoch;

    if (m < result.best_monitor) {
      result.best_monitor = m;
      result.params = params;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement > options.patience) break;
    }
  }
  return result;
}

namespace {

// Labeled quota per class: floor of the per-class share, with the remaining
// nodes (up to the rounded global target) going to the largest remainders.
std::vector<int> labeled_quota(const std::vector<std::vector<int>>& by_class, int num_nodes,
                               double fraction) {
  const int target = static_cast<int>(std::llround(fraction * num_nodes));
  const std::size_t num_classes = by_class.size();
  std::vector<int> quota(num_classes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double share = fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<int>(std::floor(share));
    assigned += quota[c];
    remainders.emplace_back(share - quota[c], c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [rem, c] : remainders) {
    if (assigned >= target) break;
    if (quota[c] < static_cast<int>(by_class[c].size())) {
      quota[c] += 1;
      assigned += 1;
    }
  }
  return quota;
}

}  // namespace

SplitPlan stratified_split(const std::vector<int>& labels, int num_nodes, double labeled_fraction,
                           int folds, int splits, std::uint64_t seed) {
  if (num_nodes <= 0 || static_cast<int>(labels.size()) != num_nodes) {
    throw InvalidConfig("stratified_split: labels length must equal num_nodes");
  }
  if (labeled_fraction <= 0.0 || labeled_fraction > 1.0) {
    throw InvalidConfig("stratified_split: labeled_fraction must lie in (0, 1]");
  }
  if (folds < 1 || splits < 1) throw InvalidConfig("stratified_split: folds and splits must be >= 1");

  const int num_classes = 1 + *std::max_element(labels.begin(), labels.end());
  std::vector<std::vector<int>> by_class(num_classes);
  for (int i = 0; i < num_nodes; ++i) by_class[labels[i]].push_back(i);
  for (int c = 0; c < num_classes; ++c) {
    if (by_class[c].empty()) throw InvalidConfig("stratified_split: class " + std::to_string(c) + " has no nodes");
  }

  SplitPlan plan;
  plan.seed = seed;
  plan.labeled_fraction = labeled_fraction;
  plan.folds = folds;
  plan.splits = splits;

  const std::vector<int> quota = labeled_quota(by_class, num_nodes, labeled_fraction);
  for (int c = 0; c < num_classes; ++c) {
    if (quota[c] > 0 && quota[c] < folds) {
      plan.warnings.push_back("class " + std::to_string(c) + " has fewer labeled nodes (" +
                              std::to_string(quota[c]) + ") than folds; assigning round-robin");
    }
  }

  for (int s = 0; s < splits; ++s) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(s)));
    std::vector<std::vector<int>> fold_nodes(folds);
    std::vector<int> unlabeled;
    for (int c = 0; c < num_classes; ++c) {
      std::vector<int> nodes = by_class[c];
      rng.shuffle(nodes);
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (static_cast<int>(k) < quota[c]) {
          fold_nodes[(static_cast<int>(k) + c) % folds].push_back(nodes[k]);
        } else {
          unlabeled.push_back(nodes[k]);
        }
      }
    }
    std::sort(unlabeled.begin(), unlabeled.end());
    for (auto& f : fold_nodes) std::sort(f.begin(), f.end());

    std::vector<NodeMask> per_fold(folds);
    for (int f = 0; f < folds; ++f) {
      NodeMask mask;
      mask.val = fold_nodes[f];
      for (int other = 0; other < folds; ++other) {
        if (other == f) continue;
        mask.train.insert(mask.train.end(), fold_nodes[other].begin(), fold_nodes[other].end());
      }
      std::sort(mask.train.begin(), mask.train.end());
      mask.test = unlabeled;
      per_fold[f] = std::move(mask);
    }
    plan.assignments.push_back(std::move(per_fold));
  }
  return plan;
}

std::string split_plan_to_json(const SplitPlan& plan, int split_index) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["seed"] = plan.seed;
  j["labeled_fraction"] = plan.labeled_fraction;
  j["folds"] = plan.folds;
  j["split_index"] = split_index;
  nlohmann::json assignments = nlohmann::json::array();
  for (const NodeMask& mask : plan.assignments.at(split_index)) {
    nlohmann::json a;
    a["train"] = mask.train;
    a["val"] = mask.val;
    a["test"] = mask.test;
    assignments.push_back(std::move(a));
  }
  j["assignments"] = std::move(assignments);
  return j.dump(2) + "\n";
}

NodeMask split_plan_assignment_from_json(const std::string& json_text, int num_nodes, int fold) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  const auto& assignments = j.at("assignments");
  if (fold < 0 || fold >= static_cast<int>(assignments.size())) {
    throw BadManifest("split plan has no fold " + std::to_string(fold));
  }
  NodeMask mask;
  mask.train = assignments.at(fold).at("train").get<std::vector<int>>();
  mask.val = assignments.at(fold).at("val").get<std::vector<int>>();
  mask.test = assignments.at(fold).at("test").get<std::vector<int>>();
  for (const auto* part : {&mask.train, &mask.val, &mask.test}) {
    for (int i : *part) {
      if (i < 0 || i >= num_nodes) throw BadManifest("split plan node id out of range");
    }
  }
  return mask;
}

GridResult grid_search(const Dataset& base, const CalibratorConfig& base_config,
                       const std::vector<double>& weight_decays, const std::vector<double>& initial_t0s,
                       const SplitPlan& plan) {
  if (weight_decays.empty() || initial_t0s.empty()) throw InvalidConfig("grid_search: empty grid");

  GridResult result;
  bool any_valid = false;
  std::size_t index = 0;
  for (double wd : weight_decays) {
    for (double t0 : initial_t0s) {
      GridCell cell;
      cell.weight_decay = wd;
      cell.initial_t0 = t0;
      double total = 0.0;
      int runs = 0;
      bool diverged = false;
      for (int s = 0; s < plan.splits && !diverged; ++s) {
        for (int f = 0; f < plan.folds && !diverged; ++f) {
          CalibratorConfig config = base_config;
          config.weight_decay = wd;
          config.initial_t0 = t0;
          config.seed = Rng::derive(base_config.seed, static_cast<std::uint64_t>(s) * plan.folds + f);
          Dataset fold_data = base;
          fold_data.mask = plan.assignments[s][f];
          try {
            calib::FitOutcome outcome = calib::fit_calibrator_report(config, fold_data);
            total += outcome.best_monitor_nll;
            ++runs;
          } catch (const FitDiverged&) {
            diverged = true;
          }
        }
      }
      cell.valid = !diverged && runs > 0;
      cell.mean_monitor_nll = cell.valid ? total / runs : std::numeric_limits<double>::quiet_NaN();
      // Strict comparison keeps the first cell on ties.
      if (cell.valid &&
          (!any_valid || cell.mean_monitor_nll < result.cells[result.best_index].mean_monitor_nll)) {
        result.best_index = index;
        any_valid = true;
      }
      result.cells.push_back(cell);
      ++index;
    }
  }
  if (!any_valid) throw GridExhausted("grid_search: every cell diverged");
  result.best_config = base_config;
  result.best_config.weight_decay = result.cells[result.best_index].weight_decay;
  result.best_config.initial_t0 = result.cells[result.best_index].initial_t0;
  return result;
}

}  // namespace gcalib::trainer
