#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "laganom/errors.hpp"
#include "laganom/lagreg.hpp"

namespace laganom {

/// Per-lag-variable coefficient of the logit-linear residual relation.
struct BayesCoeff {
  int series = 0;
  int lag = 1;
  double c = 0.0;
};

struct BayesCalibration {
  int series_id = 0;
  double min_eps = 0.0;
  double max_eps = 0.0;
  std::vector<BayesCoeff> c;  // one per active lag variable, sorted by (j, k)
  double alpha = 1.0;
  double cv_f1 = 0.0;
  bool logit_rank_deficient = false;
};

/// (eps - min + 1) / (max - min + 2); strictly inside (0, 1) for eps within
/// the training range. Out-of-range eps is clamped to the extremes first.
double normalize_residual(double eps, double min_eps, double max_eps);

Eigen::VectorXd normalize_residuals(const Eigen::VectorXd& eps, double min_eps,
                                    double max_eps);

struct LogitFit {
  Eigen::VectorXd c;
  bool rank_deficient = false;
  Eigen::Index rank = 0;
};

/// Ordinary least squares of logit(eps_norm) on the active lag variables.
/// Rank-deficient systems take the minimum-norm solution and are flagged.
LogitFit fit_logit_linear(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& eps_norm);

double anomaly_probability(double eps_norm, double alpha);

/// 1 iff anomaly_probability(eps_norm, alpha) > 0.5 (strict).
int classify(double eps_norm, double alpha);

/// Standardized design columns restricted to the model's active support,
/// ordered like model.coeffs.
Eigen::MatrixXd active_design(const LagDesign& design, const LagModel& model);

std::vector<double> default_alpha_grid();

/// Picks the grid alpha with the best mean k-fold F1 of classify; folds are
/// contiguous time blocks; ties break toward smaller alpha.
BayesCalibration calibrate_alpha(const Eigen::VectorXd& eps_norm,
                                 std::span<const std::uint8_t> labels,
                                 std::span<const double> alpha_grid, int folds = 5);

/// Full pipeline for one series: residuals -> normalization constants ->
/// logit-linear fit on the active lag variables -> alpha calibration against
/// labels shifted by `horizon` (1 = the label at t+1, per the prediction
/// problem; 0 = the label at t).
BayesCalibration fit_bayes(const Panel& panel, const LagDesign& design,
                           const LagModel& model, int horizon,
                           std::span<const double> alpha_grid, int folds = 5);

void save_calibration(const BayesCalibration& calibration,
                      const std::filesystem::path& path);
BayesCalibration load_calibration(const std::filesystem::path& path);

}  // namespace laganom
