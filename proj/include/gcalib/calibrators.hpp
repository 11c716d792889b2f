#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "gcalib/config.hpp"
#include "gcalib/dataset.hpp"
#include "gcalib/graph.hpp"
#include "gcalib/kernels.hpp"

namespace gcalib {

struct CalibratedOutput {
  Matrix probs;
  // Present for temperature-producing methods (TS, CaGCN, GATS).
  std::optional<std::vector<double>> temperatures;
};

// Attention temperature parameters: global bias, relative-confidence
// coefficient, train/neighbor scaling factors, and one weight vector per
// head applied to the transformed logits.
struct GatsParams {
  double t0 = 1.0;
  double omega = 0.0;
  double gamma_t = 1.0;
  double gamma_n = 1.0;
  Matrix theta;  // heads x num_classes
};

struct GatsStructure {
  double leaky_slope = 0.2;
  AblationFlags ablations;
};

namespace calib {

// Nodewise temperatures from the attention formulation: for each node,
// averaged softplus head responses over the closed neighborhood plus the
// global bias, clamped below at 1e-3. neighbor_mask must hold the direct
// neighbors of train_mask minus train_mask.
std::vector<double> gats_node_temperatures(const GatsParams& params, const Matrix& logits, const Graph& g,
                                           const std::vector<int>& train_mask,
                                           const std::vector<int>& neighbor_mask,
                                           const GatsStructure& structure = {});

// Symmetric-normalized adjacency with self-loops, CSR with values.
struct SparseMatrix {
  int rows = 0;
  std::vector<int> row_offsets;
  std::vector<int> col_indices;
  std::vector<double> values;
};

SparseMatrix normalized_adjacency(const Graph& g);

class Calibrator {
 public:
  virtual ~Calibrator() = default;
  virtual Method method() const = 0;
  virtual int num_classes() const = 0;
  virtual std::size_t num_learnable_parameters() const = 0;
  virtual CalibratedOutput apply(const Dataset& data) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

struct FitOutcome {
  std::unique_ptr<Calibrator> calibrator;
  double best_monitor_nll = 0.0;
  int epochs_run = 0;
};

// Fits the configured method by minimizing NLL on the val mask, early
// stopping on the train mask. Deterministic given config.seed.
FitOutcome fit_calibrator_report(const CalibratorConfig& config, const Dataset& data);
std::unique_ptr<Calibrator> fit_calibrator(const CalibratorConfig& config, const Dataset& data);

// The fitting loss (mean NLL over `nodes`) and its analytic gradient at a
// packed parameter vector, running through the same code paths the fits use.
// Exposed so the finite-difference checker can verify every gradient.
// Layouts: ts [T]; vs [w(K), b(K)]; ets [w1, w2, w3] (for a fixed inner
// temperature); cagcn [W1 row-major, b1, W2, b2]; gats [t0, omega, gamma_t,
// gamma_n, theta head-major].
double fit_objective(const CalibratorConfig& config, const Dataset& data, const std::vector<int>& nodes,
                     const std::vector<double>& params, std::vector<double>* grad,
                     double ets_inner_temperature = 1.5);

std::unique_ptr<Calibrator> calibrator_from_json(const nlohmann::json& j);
std::unique_ptr<Calibrator> load_calibrator(const std::string& path);
void save_calibrator(const Calibrator& c, const std::string& path);

// Concrete calibrators, exposed for tests and serialization.

class TsCalibrator final : public Calibrator {
 public:
  TsCalibrator(double temperature, int num_classes, const CalibratorConfig& config)
      : temperature_(temperature), num_classes_(num_classes), config_(config) {}
  Method method() const override { return Method::TS; }
  int num_classes() const override { return num_classes_; }
  std::size_t num_learnable_parameters() const override { return 1; }
  CalibratedOutput apply(const Dataset& data) const override;
  nlohmann::json to_json() const override;
  double temperature() const { return temperature_; }

 private:
  double temperature_;
  int num_classes_;
  CalibratorConfig config_;
};

class VsCalibrator final : public Calibrator {
 public:
  VsCalibrator(std::vector<double> w, std::vector<double> b, const CalibratorConfig& config)
      : w_(std::move(w)), b_(std::move(b)), config_(config) {}
  Method method() const override { return Method::VS; }
  int num_classes() const override { return static_cast<int>(w_.size()); }
  std::size_t num_learnable_parameters() const override { return w_.size() + b_.size(); }
  CalibratedOutput apply(const Dataset& data) const override;
  nlohmann::json to_json() const override;
  const std::vector<double>& weights() const { return w_; }
  const std::vector<double>& biases() const { return b_; }

 private:
  std::vector<double> w_, b_;
  CalibratorConfig config_;
};

class EtsCalibrator final : public Calibrator {
 public:
  EtsCalibrator(double ts_temperature, std::array<double, 3> weights, int num_classes,
                const CalibratorConfig& config)
      : ts_temperature_(ts_temperature), weights_(weights), num_classes_(num_classes), config_(config) {}
  Method method() const override { return Method::ETS; }
  int num_classes() const override { return num_classes_; }
  std::size_t num_learnable_parameters() const override { return 4; }  // simplex weights + inner T
  CalibratedOutput apply(const Dataset& data) const override;
  nlohmann::json to_json() const override;
  double ts_temperature() const { return ts_temperature_; }
  const std::array<double, 3>& mixture_weights() const { return weights_; }

 private:
  double ts_temperature_;
  std::array<double, 3> weights_;
  int num_classes_;
  CalibratorConfig config_;
};

class CagcnCalibrator final : public Calibrator {
 public:
  CagcnCalibrator(Matrix w1, std::vector<double> b1, std::vector<double> w2, double b2,
                  const CalibratorConfig& config)
      : w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)), b2_(b2), config_(config) {}
  Method method() const override { return Method::CaGCN; }
  int num_classes() const override { return w1_.rows; }
  std::size_t num_learnable_parameters() const override {
    return w1_.data.size() + b1_.size() + w2_.size() + 1;
  }
  CalibratedOutput apply(const Dataset& data) const override;
  nlohmann::json to_json() const override;
  std::vector<double> node_temperatures(const Dataset& data) const;

 private:
  Matrix w1_;                // num_classes x hidden
  std::vector<double> b1_;   // hidden
  std::vector<double> w2_;   // hidden
  double b2_;
  CalibratorConfig config_;
};

class GatsCalibrator final : public Calibrator {
 public:
  GatsCalibrator(GatsParams params, const CalibratorConfig& config)
      : params_(std::move(params)), config_(config) {}
  Method method() const override { return Method::GATS; }
  int num_classes() const override { return params_.theta.cols; }
  std::size_t num_learnable_parameters() const override;
  CalibratedOutput apply(const Dataset& data) const override;
  nlohmann::json to_json() const override;
  const GatsParams& params() const { return params_; }
  const CalibratorConfig& config() const { return config_; }

 private:
  GatsParams params_;
  CalibratorConfig config_;
};

}  // namespace calib
}  // namespace gcalib
