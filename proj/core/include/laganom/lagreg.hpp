#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "laganom/errors.hpp"
#include "laganom/panel.hpp"

namespace laganom {

/// One sparse coefficient: weight on series `series`, `lag` steps back.
struct LagCoeff {
  int series = 0;
  int lag = 1;  // 1..w, "lag steps before the target time"
  double beta = 0.0;
};

/// Lag design matrix over a panel: (h-w) rows, w*n columns. Row r targets
/// time t = w + r and holds s_{t-k}^{(j)} at column_of(j, k).
class LagDesign {
public:
  static LagDesign build(const Panel& panel, int w);

  /// Dimension arithmetic without materializing anything.
  static std::pair<Eigen::Index, Eigen::Index> shape(Eigen::Index n, Eigen::Index h,
                                                     Eigen::Index w);

  Eigen::Index rows() const { return matrix_.rows(); }
  Eigen::Index cols() const { return matrix_.cols(); }
  int window() const { return w_; }
  int series_count() const { return n_; }
  Eigen::Index series_length() const { return rows() + w_; }

  Eigen::Index column_of(int series, int lag) const;
  std::pair<int, int> series_lag_of(Eigen::Index column) const;

  const Eigen::MatrixXd& matrix() const { return matrix_; }
  /// Target vector p^{(i)}: values of series i at times w..h-1.
  Eigen::VectorXd target(int series_id) const;

  const Eigen::VectorXd& column_means() const;
  /// Population standard deviation per column.
  const Eigen::VectorXd& column_stds() const;
  /// Gram matrix of the standardized columns; computed once, thread-safe.
  const Eigen::MatrixXd& standardized_gram() const;

private:
  LagDesign() = default;

  void ensure_column_stats() const;

  Eigen::MatrixXd matrix_;   // (h-w) x (w*n)
  Eigen::MatrixXd targets_;  // (h-w) x n
  int n_ = 0;
  int w_ = 0;

  struct Cache {
    std::once_flag stats_once;
    std::once_flag gram_once;
    Eigen::VectorXd means;
    Eigen::VectorXd stds;
    Eigen::MatrixXd gram;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

/// Per-series sparse distributed-lag model in original (unstandardized) units.
struct LagModel {
  int series_id = 0;
  int w = 0;
  double lambda = 0.0;
  double intercept = 0.0;
  double sigma = 0.0;
  int m = 0;                     // non-zero coefficient count
  std::vector<LagCoeff> coeffs;  // sorted by (series, lag), all non-zero
};

struct LassoOptions {
  double lambda = 1.0;
  double tol = 1e-8;      // max KKT violation at exit
  int max_iter = 100000;  // coordinate sweeps
  bool standardize = true;
  bool fit_intercept = true;
};

struct SolverDiagnostics {
  int sweeps = 0;
  double kkt_violation = 0.0;
  std::vector<double> objective_trace;  // J after each sweep
};

/// Coordinate descent for  min ||y - X b||^2 + lambda ||b||_1  on the matrix
/// as given (no standardization, no intercept). Covariance updates: the Gram
/// matrix is formed once and residual correlations are maintained.
Eigen::VectorXd solve_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double lambda, double tol = 1e-8, int max_iter = 100000,
                            SolverDiagnostics* diagnostics = nullptr);

/// Max coordinate-wise subgradient violation of the solution candidate.
double lasso_kkt_violation(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta, double lambda);

LagModel fit_lasso(const LagDesign& design, int series_id, const LassoOptions& options,
                   SolverDiagnostics* diagnostics = nullptr);

struct IteratedRidgeOptions {
  double lambda = 1.0;
  int steps = 1;
  Eigen::Index dense_solve_cap = 5000;  // max design columns for the dense path
};

/// Verification-grade alternative solver: repeats the dense update
///   b <- (X^T X + lambda diag(|b|)^{-1})^{-1} X^T p
/// over the support given by beta0 (all entries non-zero), in the same
/// standardized space fit_lasso uses. steps = 0 returns beta0 unchanged.
LagModel fit_iterated_ridge(const LagDesign& design, int series_id,
                            const std::vector<LagCoeff>& beta0,
                            const IteratedRidgeOptions& options);

/// Residual vector e_r = targets[r] - intercept - sparse dot of model coeffs
/// with design row r. Shares the summation order with streaming prediction.
Eigen::VectorXd residuals(const LagModel& model, const LagDesign& design);

/// sqrt( sum e_t^2 / (h - m) ); h is the series length, not the residual count.
double estimate_sigma(const Eigen::VectorXd& residuals, Eigen::Index h, Eigen::Index m);

/// One model per series; per-series fits run concurrently.
std::vector<LagModel> train_all(const Panel& panel, int w, double lambda,
                                double tol = 1e-8, int max_iter = 100000);

void save_model(const LagModel& model, const std::filesystem::path& path);
LagModel load_model(const std::filesystem::path& path);
/// Loads every model_*.json / *.json under a directory, ordered by series_id.
std::vector<LagModel> load_models(const std::filesystem::path& directory);
void save_models(const std::vector<LagModel>& models, const std::filesystem::path& directory);

}  // namespace laganom
