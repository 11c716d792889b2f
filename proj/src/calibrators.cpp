#include "gcalib/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "calib_detail.hpp"
#include "gcalib/errors.hpp"
#include "gcalib/trainer.hpp"

namespace gcalib::calib {

namespace detail {

double nll_temp_objective(const Matrix& logits, const std::vector<int>& labels,
                          const std::vector<int>& nodes, const std::vector<double>& temps_by_node,
                          std::vector<double>* grad_by_node) {
  const int num_classes = logits.cols;
  const double n = static_cast<double>(nodes.size());
  double loss = 0.0;
  for (int i : nodes) {
    const double t = temps_by_node[i];
    const auto z = logits.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : z) mx = std::max(mx, v / t);
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) sum += std::exp(z[k] / t - mx);
    const double lse = mx + std::log(sum);
    loss += lse - z[labels[i]] / t;
    if (grad_by_node) {
      double expected = 0.0;
      for (int k = 0; k < num_classes; ++k) expected += std::exp(z[k] / t - lse) * z[k];
      (*grad_by_node)[i] = (z[labels[i]] - expected) / (t * t * n);
    }
  }
  return loss / n;
}

std::vector<double> project_to_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, lambda = 0.0;
  int rho = 0;
  double running = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    running += u[j];
    const double candidate = (1.0 - running) / static_cast<double>(j + 1);
    if (u[j] + candidate > 0.0) {
      rho = static_cast<int>(j + 1);
      css = running;
    }
  }
  lambda = (1.0 - css) / rho;
  for (double& x : v) x = std::max(0.0, x + lambda);
  return v;
}

Matrix scaled_softmax(const Matrix& logits, const std::vector<double>& temps) {
  Matrix scaled(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    for (int k = 0; k < logits.cols; ++k) scaled(i, k) = logits(i, k) / temps[i];
  }
  return kernels::softmax_rows(scaled);
}

void check_classes(int expected, const Dataset& data, const char* method) {
  if (data.num_classes != expected || data.logits.cols != expected) {
    throw ShapeMismatch(std::string(method) + ": dataset has " + std::to_string(data.num_classes) +
                        " classes, calibrator was fitted with " + std::to_string(expected));
  }
}

nlohmann::json config_to_json(const CalibratorConfig& config) {
  nlohmann::json j;
  j["method"] = method_name(config.method);
  j["heads"] = config.heads;
  j["bins"] = config.bins;
  j["weight_decay"] = config.weight_decay;
  j["initial_t0"] = config.initial_t0;
  j["leaky_slope"] = config.leaky_slope;
  j["ablations"] = ablation_names(config.ablations);
  j["cagcn_hidden"] = config.cagcn_hidden;
  j["lr"] = config.lr;
  j["max_epochs"] = config.max_epochs;
  j["patience"] = config.patience;
  return j;
}

CalibratorConfig config_from_json(const nlohmann::json& j) {
  CalibratorConfig config;
  config.method = method_from_name(j.at("method").get<std::string>());
  config.heads = j.value("heads", config.heads);
  config.bins = j.value("bins", config.bins);
  config.weight_decay = j.value("weight_decay", config.weight_decay);
  config.initial_t0 = j.value("initial_t0", config.initial_t0);
  config.leaky_slope = j.value("leaky_slope", config.leaky_slope);
  config.cagcn_hidden = j.value("cagcn_hidden", config.cagcn_hidden);
  config.lr = j.value("lr", config.lr);
  config.max_epochs = j.value("max_epochs", config.max_epochs);
  config.patience = j.value("patience", config.patience);
  const std::string flags = j.value("ablations", std::string());
  std::size_t pos = 0;
  while (pos < flags.size()) {
    std::size_t comma = flags.find(',', pos);
    if (comma == std::string::npos) comma = flags.size();
    const AblationFlags f = ablation_from_name(flags.substr(pos, comma - pos));
    config.ablations.no_t0 |= f.no_t0;
    config.ablations.no_gamma |= f.no_gamma;
    config.ablations.no_dconf |= f.no_dconf;
    config.ablations.no_attention |= f.no_attention;
    config.ablations.no_sorting |= f.no_sorting;
    pos = comma + 1;
  }
  return config;
}

nlohmann::json hex_array(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(io::double_to_hex(x));
  return a;
}

std::vector<double> hex_array_to_doubles(const nlohmann::json& a) {
  std::vector<double> v;
  v.reserve(a.size());
  for (const auto& s : a) v.push_back(io::hex_to_double(s.get<std::string>()));
  return v;
}

nlohmann::json common_json(const Calibrator& c, const CalibratorConfig& config) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["method"] = method_name(c.method());
  j["num_classes"] = c.num_classes();
  j["seed"] = config.seed;
  j["config"] = config_to_json(config);
  return j;
}

trainer::FitOptions fit_options_for(const CalibratorConfig& config, double weight_decay) {
  trainer::FitOptions options;
  options.max_epochs = config.max_epochs;
  options.patience = config.patience;
  options.adam.lr = config.lr;
  options.adam.weight_decay = weight_decay;
  return options;
}

double vs_loss(const Matrix& logits, const std::vector<int>& labels, const std::vector<int>& nodes,
               const std::vector<double>& params, std::vector<double>* grad) {
  const int num_classes = logits.cols;
  const double n = static_cast<double>(nodes.size());
  double loss = 0.0;
  std::vector<double> u(num_classes), p(num_classes);
  for (int i : nodes) {
    const auto z = logits.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < num_classes; ++k) {
      u[k] = params[k] * z[k] + params[num_classes + k];
      mx = std::max(mx, u[k]);
    }
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) sum += std::exp(u[k] - mx);
    const double lse = mx + std::log(sum);
    loss += lse - u[labels[i]];
    if (grad) {
      for (int k = 0; k < num_classes; ++k) {
        p[k] = std::exp(u[k] - lse);
        const double delta = (p[k] - (labels[i] == k ? 1.0 : 0.0)) / n;
        (*grad)[k] += delta * z[k];
        (*grad)[num_classes + k] += delta;
      }
    }
  }
  return loss / n;
}

double ets_mixture_loss(const Matrix& sharpened, const Matrix& raw, const std::vector<int>& labels,
                        const std::vector<int>& nodes, int num_classes, const std::vector<double>& w,
                        std::vector<double>* grad) {
  const double uniform = 1.0 / num_classes;
  const double n = static_cast<double>(nodes.size());
  double loss = 0.0;
  for (int i : nodes) {
    const int y = labels[i];
    const double q1 = sharpened(i, y), q2 = raw(i, y);
    const double p = std::max(w[0] * q1 + w[1] * q2 + w[2] * uniform, 1e-12);
    loss -= std::log(p);
    if (grad) {
      (*grad)[0] -= q1 / (p * n);
      (*grad)[1] -= q2 / (p * n);
      (*grad)[2] -= uniform / (p * n);
    }
  }
  return loss / n;
}

}  // namespace detail

namespace {

using detail::check_classes;
using detail::kTempFloor;
using detail::scaled_softmax;

void check_fit_masks(const Dataset& data) {
  if (data.mask.val.empty()) throw EmptyCalibrationSet("fit_calibrator: empty val set");
  if (data.mask.train.empty()) throw EmptyCalibrationSet("fit_calibrator: empty train set (early-stopping monitor)");
}

// --- temperature scaling -------------------------------------------------

struct TsFit {
  double temperature = 1.0;
  double best_monitor = 0.0;
  int epochs = 0;
};

TsFit fit_ts_core(const CalibratorConfig& config, const Dataset& data) {
  const int n = data.graph.num_nodes;
  std::vector<double> temps(n, 1.0);
  std::vector<double> dtemp(n, 0.0);

  const auto objective = [&](const std::vector<double>& params, std::vector<double>& grad) {
    std::fill(temps.begin(), temps.end(), params[0]);
    const double loss = detail::nll_temp_objective(data.logits, data.labels, data.mask.val, temps, &dtemp);
    double g = 0.0;
    for (int i : data.mask.val) g += dtemp[i];
    grad[0] = g;
    return loss;
  };
  const auto monitor = [&](const std::vector<double>& params) {
    std::fill(temps.begin(), temps.end(), params[0]);
    return detail::nll_temp_objective(data.logits, data.labels, data.mask.train, temps, nullptr);
  };

  // Weight decay stays 0 for plain temperature scaling; the floor keeps the
  // scaling strictly positive so argmax is never disturbed.
  trainer::FitOptions options = detail::fit_options_for(config, 0.0);
  options.project = [](std::vector<double>& p) { p[0] = std::max(p[0], kTempFloor); };

  const trainer::FitResult result =
      trainer::fit_with_early_stopping(objective, monitor, {config.initial_t0}, options);
  return {result.params[0], result.best_monitor, result.epochs_run};
}

FitOutcome fit_ts(const CalibratorConfig& config, const Dataset& data) {
  const TsFit fit = fit_ts_core(config, data);
  FitOutcome outcome;
  outcome.calibrator = std::make_unique<TsCalibrator>(fit.temperature, data.num_classes, config);
  outcome.best_monitor_nll = fit.best_monitor;
  outcome.epochs_run = fit.epochs;
  return outcome;
}

// --- vector scaling -------------------------------------------------------

FitOutcome fit_vs(const CalibratorConfig& config, const Dataset& data) {
  const int num_classes = data.num_classes;

  const auto objective = [&](const std::vector<double>& params, std::vector<double>& grad) {
    return detail::vs_loss(data.logits, data.labels, data.mask.val, params, &grad);
  };
  const auto monitor = [&](const std::vector<double>& params) {
    return detail::vs_loss(data.logits, data.labels, data.mask.train, params, nullptr);
  };

  std::vector<double> init(2 * num_classes, 0.0);
  for (int k = 0; k < num_classes; ++k) init[k] = 1.0;

  const trainer::FitOptions options = detail::fit_options_for(config, 0.0);
  const trainer::FitResult result = trainer::fit_with_early_stopping(objective, monitor, init, options);

  std::vector<double> w(result.params.begin(), result.params.begin() + num_classes);
  std::vector<double> b(result.params.begin() + num_classes, result.params.end());
  FitOutcome outcome;
  outcome.calibrator = std::make_unique<VsCalibrator>(std::move(w), std::move(b), config);
  outcome.best_monitor_nll = result.best_monitor;
  outcome.epochs_run = result.epochs_run;
  return outcome;
}

// --- ensemble temperature scaling ------------------------------------------

FitOutcome fit_ets(const CalibratorConfig& config, const Dataset& data) {
  const TsFit ts = fit_ts_core(config, data);
  const int num_classes = data.num_classes;

  const Matrix sharpened = scaled_softmax(data.logits, std::vector<double>(data.graph.num_nodes, ts.temperature));
  const Matrix raw = kernels::softmax_rows(data.logits);

  const auto objective = [&](const std::vector<double>& w, std::vector<double>& grad) {
    return detail::ets_mixture_loss(sharpened, raw, data.labels, data.mask.val, num_classes, w, &grad);
  };
  const auto monitor = [&](const std::vector<double>& w) {
    return detail::ets_mixture_loss(sharpened, raw, data.labels, data.mask.train, num_classes, w, nullptr);
  };

  // Projected plain gradient descent over the 2-simplex, started at the
  // pure-TS corner.
  trainer::FitOptions options = detail::fit_options_for(config, 0.0);
  options.use_adam = false;
  options.project = [](std::vector<double>& w) { w = detail::project_to_simplex(std::move(w)); };

  const trainer::FitResult result =
      trainer::fit_with_early_stopping(objective, monitor, {1.0, 0.0, 0.0}, options);

  FitOutcome outcome;
  outcome.calibrator = std::make_unique<EtsCalibrator>(
      ts.temperature, std::array<double, 3>{result.params[0], result.params[1], result.params[2]},
      num_classes, config);
  outcome.best_monitor_nll = result.best_monitor;
  outcome.epochs_run = ts.epochs + result.epochs_run;
  return outcome;
}

}  // namespace

// Defined in gats.cpp / cagcn.cpp.
FitOutcome fit_gats(const CalibratorConfig& config, const Dataset& data);
FitOutcome fit_cagcn(const CalibratorConfig& config, const Dataset& data);

FitOutcome fit_calibrator_report(const CalibratorConfig& config, const Dataset& data) {
  validate(config);
  check_fit_masks(data);
  switch (config.method) {
    case Method::TS: return fit_ts(config, data);
    case Method::VS: return fit_vs(config, data);
    case Method::ETS: return fit_ets(config, data);
    case Method::CaGCN: return fit_cagcn(config, data);
    case Method::GATS: return fit_gats(config, data);
  }
  throw InvalidConfig("unknown method");
}

std::unique_ptr<Calibrator> fit_calibrator(const CalibratorConfig& config, const Dataset& data) {
  return fit_calibrator_report(config, data).calibrator;
}

double fit_objective(const CalibratorConfig& config, const Dataset& data, const std::vector<int>& nodes,
                     const std::vector<double>& params, std::vector<double>* grad,
                     double ets_inner_temperature) {
  if (grad) grad->assign(params.size(), 0.0);
  switch (config.method) {
    case Method::TS: {
      std::vector<double> temps(data.graph.num_nodes, params[0]);
      std::vector<double> dtemp(data.graph.num_nodes, 0.0);
      const double loss =
          detail::nll_temp_objective(data.logits, data.labels, nodes, temps, grad ? &dtemp : nullptr);
      if (grad) {
        for (int i : nodes) (*grad)[0] += dtemp[i];
      }
      return loss;
    }
    case Method::VS:
      return detail::vs_loss(data.logits, data.labels, nodes, params, grad);
    case Method::ETS: {
      const Matrix sharpened = scaled_softmax(
          data.logits, std::vector<double>(data.graph.num_nodes, ets_inner_temperature));
      const Matrix raw = kernels::softmax_rows(data.logits);
      return detail::ets_mixture_loss(sharpened, raw, data.labels, nodes, data.num_classes, params, grad);
    }
    case Method::CaGCN:
      return detail::cagcn_objective(config, data, nodes, params, grad);
    case Method::GATS:
      return detail::gats_objective(config, data, nodes, params, grad);
  }
  throw InvalidConfig("unknown method");
}

// --- apply -----------------------------------------------------------------

CalibratedOutput TsCalibrator::apply(const Dataset& data) const {
  check_classes(num_classes_, data, "ts");
  std::vector<double> temps(data.graph.num_nodes, temperature_);
  CalibratedOutput out;
  out.probs = scaled_softmax(data.logits, temps);
  out.temperatures = std::move(temps);
  return out;
}

CalibratedOutput VsCalibrator::apply(const Dataset& data) const {
  check_classes(static_cast<int>(w_.size()), data, "vs");
  Matrix scaled(data.logits.rows, data.logits.cols);
  for (int i = 0; i < data.logits.rows; ++i) {
    for (int k = 0; k < data.logits.cols; ++k) scaled(i, k) = w_[k] * data.logits(i, k) + b_[k];
  }
  CalibratedOutput out;
  out.probs = kernels::softmax_rows(scaled);
  return out;
}

CalibratedOutput EtsCalibrator::apply(const Dataset& data) const {
  check_classes(num_classes_, data, "ets");
  const Matrix sharpened =
      scaled_softmax(data.logits, std::vector<double>(data.graph.num_nodes, ts_temperature_));
  const Matrix raw = kernels::softmax_rows(data.logits);
  Matrix probs(data.logits.rows, data.logits.cols);
  const double uniform = 1.0 / num_classes_;
  for (int i = 0; i < probs.rows; ++i) {
    for (int k = 0; k < probs.cols; ++k) {
      probs(i, k) = weights_[0] * sharpened(i, k) + weights_[1] * raw(i, k) + weights_[2] * uniform;
    }
  }
  CalibratedOutput out;
  out.probs = std::move(probs);
  return out;
}

// --- serialization -----------------------------------------------------------

using detail::common_json;
using detail::config_from_json;
using detail::hex_array;
using detail::hex_array_to_doubles;

nlohmann::json TsCalibrator::to_json() const {
  nlohmann::json j = common_json(*this, config_);
  j["params"]["temperature"] = io::double_to_hex(temperature_);
  return j;
}

nlohmann::json VsCalibrator::to_json() const {
  nlohmann::json j = common_json(*this, config_);
  j["params"]["w"] = hex_array(w_);
  j["params"]["b"] = hex_array(b_);
  return j;
}

nlohmann::json EtsCalibrator::to_json() const {
  nlohmann::json j = common_json(*this, config_);
  j["params"]["ts_temperature"] = io::double_to_hex(ts_temperature_);
  j["params"]["weights"] = hex_array({weights_[0], weights_[1], weights_[2]});
  return j;
}

std::unique_ptr<Calibrator> calibrator_from_json(const nlohmann::json& j) {
  const CalibratorConfig config = config_from_json(j.at("config"));
  const int num_classes = j.at("num_classes").get<int>();
  const Method method = method_from_name(j.at("method").get<std::string>());
  const nlohmann::json& params = j.at("params");

  switch (method) {
    case Method::TS:
      return std::make_unique<TsCalibrator>(io::hex_to_double(params.at("temperature").get<std::string>()),
                                            num_classes, config);
    case Method::VS:
      return std::make_unique<VsCalibrator>(hex_array_to_doubles(params.at("w")),
                                            hex_array_to_doubles(params.at("b")), config);
    case Method::ETS: {
      const auto w = hex_array_to_doubles(params.at("weights"));
      return std::make_unique<EtsCalibrator>(io::hex_to_double(params.at("ts_temperature").get<std::string>()),
                                             std::array<double, 3>{w[0], w[1], w[2]}, num_classes, config);
    }
    case Method::CaGCN: {
      const int hidden = config.cagcn_hidden;
      Matrix w1(num_classes, hidden);
      w1.data = hex_array_to_doubles(params.at("w1"));
      if (static_cast<int>(w1.data.size()) != num_classes * hidden) {
        throw BadManifest("cagcn w1 size mismatch");
      }
      return std::make_unique<CagcnCalibrator>(std::move(w1), hex_array_to_doubles(params.at("b1")),
                                               hex_array_to_doubles(params.at("w2")),
                                               io::hex_to_double(params.at("b2").get<std::string>()), config);
    }
    case Method::GATS: {
      GatsParams gp;
      gp.t0 = io::hex_to_double(params.at("t0").get<std::string>());
      gp.omega = io::hex_to_double(params.at("omega").get<std::string>());
      gp.gamma_t = io::hex_to_double(params.at("gamma_t").get<std::string>());
      gp.gamma_n = io::hex_to_double(params.at("gamma_n").get<std::string>());
      gp.theta = Matrix(config.heads, num_classes);
      gp.theta.data = hex_array_to_doubles(params.at("theta"));
      if (static_cast<int>(gp.theta.data.size()) != config.heads * num_classes) {
        throw BadManifest("gats theta size mismatch");
      }
      return std::make_unique<GatsCalibrator>(std::move(gp), config);
    }
  }
  throw BadManifest("unknown calibrator method in JSON");
}

std::unique_ptr<Calibrator> load_calibrator(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw BadManifest(path + ": invalid JSON: " + e.what());
  }
  try {
    return calibrator_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw BadManifest(path + ": " + e.what());
  }
}

void save_calibrator(const Calibrator& c, const std::string& path) {
  io::write_text_atomic(path, c.to_json().dump(2) + "\n");
}

}  // namespace gcalib::calib
