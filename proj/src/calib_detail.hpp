#pragma once

#include <vector>

#include <json.hpp>

#include "gcalib/calibrators.hpp"
#include "gcalib/config.hpp"
#include "gcalib/kernels.hpp"
#include "gcalib/trainer.hpp"

namespace gcalib::calib::detail {

constexpr double kTempFloor = 1e-3;

// Mean NLL of softmax(z_i / T_i) over the given nodes, computed in the log
// domain. When grad_by_node is set, writes d(mean loss)/dT_i at each
// evaluated node (other entries untouched).
double nll_temp_objective(const Matrix& logits, const std::vector<int>& labels,
                          const std::vector<int>& nodes, const std::vector<double>& temps_by_node,
                          std::vector<double>* grad_by_node);

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::vector<double> v);

// Shared method losses; both the fit closures and the public fit_objective
// go through these.
double vs_loss(const Matrix& logits, const std::vector<int>& labels, const std::vector<int>& nodes,
               const std::vector<double>& params, std::vector<double>* grad);
double ets_mixture_loss(const Matrix& sharpened, const Matrix& raw, const std::vector<int>& labels,
                        const std::vector<int>& nodes, int num_classes, const std::vector<double>& w,
                        std::vector<double>* grad);
double gats_objective(const CalibratorConfig& config, const Dataset& data, const std::vector<int>& nodes,
                      const std::vector<double>& params, std::vector<double>* grad);
double cagcn_objective(const CalibratorConfig& config, const Dataset& data, const std::vector<int>& nodes,
                       const std::vector<double>& params, std::vector<double>* grad);

Matrix scaled_softmax(const Matrix& logits, const std::vector<double>& temps);

void check_classes(int expected, const Dataset& data, const char* method);

// Early-stopping schedule and Adam settings shared by every method.
trainer::FitOptions fit_options_for(const CalibratorConfig& config, double weight_decay);

nlohmann::json config_to_json(const CalibratorConfig& config);
CalibratorConfig config_from_json(const nlohmann::json& j);
nlohmann::json hex_array(const std::vector<double>& v);
std::vector<double> hex_array_to_doubles(const nlohmann::json& a);
nlohmann::json common_json(const Calibrator& c, const CalibratorConfig& config);

}  // namespace gcalib::calib::detail
