#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "gcalib/errors.hpp"
#include "gcalib/trainer.hpp"

using namespace gcalib;
using namespace gcalib::trainer;

TEST_CASE("first adam step moves by roughly the learning rate") {
  AdamConfig config;  // lr 0.01
  AdamState state(1, config);
  std::vector<double> params = {1.0};
  adam_step(state, params, {2.0});
  CHECK(params[0] == doctest::Approx(0.99).epsilon(1e-7));
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
  AdamState state(3, AdamConfig{});
  std::vector<double> params = {1.0, -2.0, 0.5};
  const std::vector<double> before = params;
  adam_step(state, params, {0.0, 0.0, 0.0});
  CHECK(params == before);
}

TEST_CASE("adam trajectories are bit-identical across runs") {
  const auto run = [] {
    AdamState state(2, AdamConfig{});
    std::vector<double> params = {1.0, -1.0};
    for (int i = 0; i < 50; ++i) adam_step(state, params, {params[0], 3.0 * params[1]});
    return params;
  };
  CHECK(run() == run());
}

TEST_CASE("adam rejects shape mismatches") {
  AdamState state(2, AdamConfig{});
  std::vector<double> params = {1.0};
  CHECK_THROWS_AS(adam_step(state, params, {1.0}), ShapeMismatch);
}

TEST_CASE("early stopping converges on a convex quadratic") {
  const std::vector<double> target = {2.0, -1.5, 0.25};
  const auto objective = [&](const std::vector<double>& p, std::vector<double>& grad) {
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      loss += (p[i] - target[i]) * (p[i] - target[i]);
      grad[i] = 2.0 * (p[i] - target[i]);
    }
    return loss;
  };
  const auto monitor = [&](const std::vector<double>& p) {
    std::vector<double> dummy(p.size());
    return objective(p, dummy);
  };
  FitOptions options;
  const FitResult result = fit_with_early_stopping(objective, monitor, {0.0, 0.0, 0.0}, options);
  CHECK(result.best_monitor < 1e-6);
  for (std::size_t i = 0; i < target.size(); ++i) {
    CHECK(result.params[i] == doctest::Approx(target[i]).epsilon(1e-3));
  }
}

TEST_CASE("patience 0 returns the initial parameters when nothing improves") {
  // Objective grows away from 0, so the first step cannot improve.
  const auto objective = [](const std::vector<double>& p, std::vector<double>& grad) {
    grad[0] = -1.0;  // pushes the parameter up
    return p[0];
  };
  const auto monitor = [](const std::vector<double>& p) { return 1.0 + std::abs(p[0]); };
  FitOptions options;
  options.patience = 0;
  const FitResult result = fit_with_early_stopping(objective, monitor, {0.0}, options);
  CHECK(result.epochs_run == 1);
  CHECK(result.params[0] == 0.0);
}

TEST_CASE("constant monitor stops after exactly patience + 1 epochs") {
  const auto objective = [](const std::vector<double>& p, std::vector<double>& grad) {
    grad[0] = 1.0;
    return p[0];
  };
  const auto monitor = [](const std::vector<double>&) { return 5.0; };
  FitOptions options;
  options.patience = 7;
  const FitResult result = fit_with_early_stopping(objective, monitor, {0.0}, options);
  CHECK(result.epochs_run == 8);
}

TEST_CASE("best-so-far monitor sequence is nonincreasing") {
  const auto objective = [](const std::vector<double>& p, std::vector<double>& grad) {
    grad[0] = 2.0 * p[0];
    return p[0] * p[0];
  };
  const auto monitor = [](const std::vector<double>& p) { return p[0] * p[0]; };
  FitOptions options;
  options.max_epochs = 300;
  const FitResult result = fit_with_early_stopping(objective, monitor, {3.0}, options);
  double best = std::numeric_limits<double>::infinity();
  for (double m : result.monitor_history) {
    best = std::min(best, m);
    CHECK(result.best_monitor <= m);
  }
  CHECK(result.best_monitor == best);
}

TEST_CASE("divergence raises FitDiverged") {
  const auto objective = [](const std::vector<double>& p, std::vector<double>& grad) {
    grad[0] = 0.0;
    return p[0] * 0.0 + std::nan("");
  };
  const auto monitor = [](const std::vector<double>&) { return 0.0; };
  CHECK_THROWS_AS(fit_with_early_stopping(objective, monitor, {1.0}, FitOptions{}), FitDiverged);
}

TEST_CASE("frozen parameters never move") {
  const auto objective = [](const std::vector<double>& p, std::vector<double>& grad) {
    grad[0] = 2.0 * p[0];
    grad[1] = 2.0 * p[1];
    return p[0] * p[0] + p[1] * p[1];
  };
  const auto monitor = [&](const std::vector<double>& p) { return p[0] * p[0] + p[1] * p[1]; };
  FitOptions options;
  options.max_epochs = 100;
  options.adam.weight_decay = 0.1;  // decay must not leak into frozen entries
  const std::vector<bool> frozen = {false, true};
  options.frozen = &frozen;
  const FitResult result = fit_with_early_stopping(objective, monitor, {2.0, 1.5}, options);
  CHECK(result.params[1] == 1.5);
  CHECK(std::abs(result.params[0]) < 1.0);
}

TEST_CASE("stratified split matches the balanced example") {
  std::vector<int> labels(200);
  for (int i = 0; i < 200; ++i) labels[i] = i % 2;
  const SplitPlan plan = stratified_split(labels, 200, 0.15, 3, 1, 9);
  REQUIRE(plan.assignments.size() == 1);
  REQUIRE(plan.assignments[0].size() == 3);
  int labeled = 0;
  for (int f = 0; f < 3; ++f) {
    const NodeMask& mask = plan.assignments[0][f];
    CHECK(mask.val.size() == 10);
    CHECK(mask.train.size() == 20);
    CHECK(mask.test.size() == 170);
    labeled = static_cast<int>(mask.val.size() + mask.train.size());
  }
  CHECK(labeled == 30);
}

TEST_CASE("stratified split is deterministic and disjoint-exhaustive") {
  std::vector<int> labels(157);
  for (int i = 0; i < 157; ++i) labels[i] = i % 4;
  const SplitPlan a = stratified_split(labels, 157, 0.15, 3, 2, 1234);
  const SplitPlan b = stratified_split(labels, 157, 0.15, 3, 2, 1234);
  for (int s = 0; s < 2; ++s) {
    for (int f = 0; f < 3; ++f) {
      CHECK(a.assignments[s][f].train == b.assignments[s][f].train);
      CHECK(a.assignments[s][f].val == b.assignments[s][f].val);
      CHECK(a.assignments[s][f].test == b.assignments[s][f].test);

      std::set<int> all;
      const NodeMask& mask = a.assignments[s][f];
      for (const auto* part : {&mask.train, &mask.val, &mask.test}) {
        for (int i : *part) CHECK(all.insert(i).second);
      }
      CHECK(all.size() == 157);
    }
  }
  // Per-class labeled counts stay within one node of the 15% target.
  std::map<int, int> class_size, labeled_per_class;
  for (int i = 0; i < 157; ++i) class_size[labels[i]]++;
  const NodeMask& mask = a.assignments[0][0];
  for (const auto* part : {&mask.train, &mask.val}) {
    for (int i : *part) labeled_per_class[labels[i]]++;
  }
  for (const auto& [cls, size] : class_size) {
    CHECK(std::abs(labeled_per_class[cls] - 0.15 * size) <= 1.0);
  }
}

TEST_CASE("largest remainder rounding matches the (100, 5) example") {
  std::vector<int> labels(105, 0);
  for (int i = 100; i < 105; ++i) labels[i] = 1;
  const SplitPlan plan = stratified_split(labels, 105, 0.15, 3, 1, 77);
  const NodeMask& mask = plan.assignments[0][0];
  int labeled0 = 0, labeled1 = 0;
  for (const auto* part : {&mask.train, &mask.val}) {
    for (int i : *part) (labels[i] == 0 ? labeled0 : labeled1)++;
  }
  CHECK(labeled0 == 15);
  CHECK(labeled1 == 1);
  CHECK(!plan.warnings.empty());  // class 1 has fewer labeled nodes than folds
}

TEST_CASE("split plan JSON round-trips through the reader") {
  std::vector<int> labels(60);
  for (int i = 0; i < 60; ++i) labels[i] = i % 3;
  const SplitPlan plan = stratified_split(labels, 60, 0.2, 3, 2, 5);
  const std::string text = split_plan_to_json(plan, 1);
  const NodeMask mask = split_plan_assignment_from_json(text, 60, 2);
  CHECK(mask.train == plan.assignments[1][2].train);
  CHECK(mask.val == plan.assignments[1][2].val);
  CHECK(mask.test == plan.assignments[1][2].test);
}

TEST_CASE("stratified split rejects bad arguments") {
  CHECK_THROWS_AS(stratified_split({0, 1}, 2, 0.0, 3, 1, 0), InvalidConfig);
  CHECK_THROWS_AS(stratified_split({0, 0}, 3, 0.15, 3, 1, 0), InvalidConfig);  // length mismatch
}
