#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "laganom/errors.hpp"
#include "laganom/panel.hpp"

namespace laganom {

/// Gaussian-kernel density estimate in 1 or 2 dimensions with a single
/// isotropic bandwidth.
class KdeModel {
public:
  KdeModel(Eigen::MatrixXd samples, double bandwidth);

  /// Bandwidth chosen from the grid by 5-fold held-out log-likelihood.
  static KdeModel fit(const Eigen::MatrixXd& samples,
                      std::span<const double> bandwidth_grid, int folds = 5);

  int dimension() const { return static_cast<int>(samples_.cols()); }
  double bandwidth() const { return bandwidth_; }
  Eigen::Index sample_count() const { return samples_.rows(); }
  const Eigen::MatrixXd& samples() const { return samples_; }

  double density(double x) const;
  double density(double x, double y) const;
  Eigen::VectorXd density_grid(const Eigen::VectorXd& xs) const;
  /// Joint density on the tensor grid; entry (a, b) is p(xs[a], ys[b]).
  Eigen::MatrixXd density_grid(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) const;

private:
  Eigen::MatrixXd samples_;  // N x dim
  double bandwidth_;
};

/// Rule-of-thumb bandwidths bracketing Silverman's value, for hyperparameter
/// search when the caller has no better grid.
std::vector<double> default_bandwidth_grid(const Eigen::MatrixXd& samples);

struct MiEstimate {
  double value = 0.0;  // clamped at 0
  double raw = 0.0;    // pre-clamp quadrature result
  double bandwidth = 0.0;
};

/// Plug-in estimate of I(X; Y) in nats: midpoint quadrature of the joint and
/// marginal KDE densities over the data box padded by 3 bandwidths. The
/// marginals share the joint fit's bandwidth, so they are the joint
/// estimate's exact marginals.
MiEstimate estimate_mutual_information(std::span<const double> xs,
                                       std::span<const double> ys, int resolution);

double mutual_information(std::span<const double> xs, std::span<const double> ys,
                          int resolution);

struct MiFailure {
  int row = 0;
  int col = 0;
  std::string reason;
};

struct MiGrid {
  std::vector<int> series_ids;
  Eigen::MatrixXd values;  // NaN where missing
  int grid_resolution = 0;
  std::vector<MiFailure> missing;
};

/// Pairwise MI over z-scored series. Symmetric by shared code path; per-pair
/// failures land in `missing` instead of aborting the grid.
MiGrid mi_grid(const Panel& panel, std::span<const int> series_ids, int resolution);

void store_mi_csv(const MiGrid& grid, const std::filesystem::path& path);

}  // namespace laganom
