#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <span>
#include <vector>

#include "laganom/errors.hpp"
#include "laganom/panel.hpp"

namespace laganom {

/// Joint multivariate-Gaussian generative detector over the n-vector of
/// simultaneous observations.
class GaussianModel {
public:
  GaussianModel(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  Eigen::Index dimension() const { return mean_.size(); }

  double log_density(std::span<const double> point) const;
  double mahalanobis_squared(std::span<const double> point) const;
  /// Series with the largest standardized deviation, for alert attribution.
  int attributed_series(std::span<const double> point) const;

  double log_density_threshold = std::numeric_limits<double>::quiet_NaN();
  // Set by fit_gaussian when h <= n, where the ridge term dominates the fit.
  bool underdetermined = false;

private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
};

/// Sample mean/covariance across timesteps, ridge-regularized to strict
/// positive definiteness. Warns (via return metadata) when h <= n.
GaussianModel fit_gaussian(const Panel& panel);

struct GaussianVerdict {
  long t = 0;
  int attributed_series = 0;
  double log_density = 0.0;
  bool alert = false;
};

/// Alert iff the point's log-density falls below the threshold.
GaussianVerdict gaussian_detect(const GaussianModel& model,
                                std::span<const double> point, double threshold,
                                long t = 0);

std::vector<GaussianVerdict> gaussian_detect_panel(const GaussianModel& model,
                                                   const Panel& panel,
                                                   double threshold,
                                                   long t_begin = 0);

/// Log-density cutoff maximizing per-cell F1 on a labeled panel.
double choose_gaussian_threshold(const GaussianModel& model, const Panel& labeled);

struct PipelineConfig {
  int window = 10;
  double lambda = 1.0;
  double p_value_threshold = 1e-5;
  int d = 1;
  double tol = 1e-8;
  int max_iter = 100000;
};

/// Train-on-test reference score: fits the full lag-regression + detection
/// pipeline on the evaluation panel itself and scores per-cell F1 on it.
/// An upper reference, never a generalization estimate.
double oracle_f1(const Panel& panel, const PipelineConfig& config);

}  // namespace laganom
