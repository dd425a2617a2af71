#include "laganom/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "laganom/eval.hpp"

namespace laganom {

GaussianModel::GaussianModel(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  if (mean_.size() == 0 || covariance_.rows() != mean_.size() ||
      covariance_.cols() != mean_.size()) {
    throw Error(ErrorKind::empty_input, "mean/covariance dimensions are inconsistent");
  }
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw Error(ErrorKind::invalid_argument, "covariance must be symmetric");
  }
  llt_.compute(covariance_);
  if (llt_.info() != Eigen::Success) {
    throw Error(ErrorKind::singular_system, "covariance is not positive definite");
  }
  log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double GaussianModel::mahalanobis_squared(std::span<const double> point) const {
  if (static_cast<Eigen::Index>(point.size()) != dimension()) {
    throw Error(ErrorKind::shape, "point arity does not match the model dimension");
  }
  Eigen::VectorXd diff(dimension());
  for (Eigen::Index i = 0; i < dimension(); ++i) diff[i] = point[static_cast<std::size_t>(i)] - mean_[i];
  return diff.dot(llt_.solve(diff));
}

double GaussianModel::log_density(std::span<const double> point) const {
  const double n = static_cast<double>(dimension());
  return -0.5 * (n * std::log(2.0 * M_PI) + log_det_ + mahalanobis_squared(point));
}

int GaussianModel::attributed_series(std::span<const double> point) const {
  if (static_cast<Eigen::Index>(point.size()) != dimension()) {
    throw Error(ErrorKind::shape, "point arity does not match the model dimension");
  }
  int best = 0;
  double best_dev = -1.0;
  for (Eigen::Index i = 0; i < dimension(); ++i) {
    const double dev = std::abs(point[static_cast<std::size_t>(i)] - mean_[i]) /
                       std::sqrt(covariance_(i, i));
    if (dev > best_dev) {
      best_dev = dev;
      best = static_cast<int>(i);
    }
  }
  return best;
}

GaussianModel fit_gaussian(const Panel& panel) {
  const Eigen::Index n = panel.n();
  const Eigen::Index h = panel.h();
  if (n == 0 || h == 0) {
    throw Error(ErrorKind::empty_input, "cannot fit a Gaussian on an empty panel");
  }

  const Eigen::VectorXd mean = panel.values.colwise().mean();
  Eigen::MatrixXd centered = panel.values.rowwise() - mean.transpose();
  const double denom = h > 1 ? static_cast<double>(h - 1) : 1.0;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  cov = 0.5 * (cov + cov.transpose());  // exact symmetry

  // Constant panels leave a trace at roundoff scale; treat that as zero and
  // fall back to a unit ridge so the factorization stays positive definite.
  const double mean_scale = mean.cwiseAbs().maxCoeff();
  const double roundoff_var = std::pow(1e-12 * (1.0 + mean_scale), 2);
  double delta = 1e-6 * cov.trace() / static_cast<double>(n);
  if (cov.trace() / static_cast<double>(n) <= roundoff_var) delta = 1e-6;
  cov.diagonal().array() += delta;
  GaussianModel model(mean, std::move(cov));
  model.underdetermined = h <= n;
  return model;
}

GaussianVerdict gaussian_detect(const GaussianModel& model,
                                std::span<const double> point, double threshold,
                                long t) {
  GaussianVerdict verdict;
  verdict.t = t;
  verdict.log_density = model.log_density(point);
  verdict.attributed_series = model.attributed_series(point);
  verdict.alert = verdict.log_density < threshold;
  return verdict;
}

std::vector<GaussianVerdict> gaussian_detect_panel(const GaussianModel& model,
                                                   const Panel& panel, double threshold,
                                                   long t_begin) {
  std::vector<GaussianVerdict> verdicts;
  verdicts.reserve(static_cast<std::size_t>(panel.h()));
  std::vector<double> point(static_cast<std::size_t>(panel.n()));
  for (Eigen::Index t = 0; t < panel.h(); ++t) {
    for (Eigen::Index i = 0; i < panel.n(); ++i) point[static_cast<std::size_t>(i)] = panel.values(t, i);
    verdicts.push_back(gaussian_detect(model, point, threshold, t_begin + t));
  }
  return verdicts;
}

double choose_gaussian_threshold(const GaussianModel& model, const Panel& labeled) {
  if (!labeled.has_labels()) {
    throw Error(ErrorKind::missing_labels, "threshold selection needs a labeled panel");
  }
  const Eigen::Index h = labeled.h();
  long positives = 0;
  for (Eigen::Index t = 0; t < h; ++t)
    for (Eigen::Index i = 0; i < labeled.n(); ++i) positives += labeled.label(t, i) ? 1 : 0;
  if (positives == 0) {
    throw Error(ErrorKind::undefined_f1, "no positive labels to tune the threshold on");
  }

  struct Row {
    double log_density;
    bool hit;  // attribution matches a labeled cell
  };
  std::vector<Row> rows;
  rows.reserve(static_cast<std::size_t>(h));
  std::vector<double> point(static_cast<std::size_t>(labeled.n()));
  for (Eigen::Index t = 0; t < h; ++t) {
    for (Eigen::Index i = 0; i < labeled.n(); ++i) point[static_cast<std::size_t>(i)] = labeled.values(t, i);
    const int attributed = model.attributed_series(point);
    rows.push_back(Row{model.log_density(point), labeled.label(t, attributed)});
  }
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.log_density < b.log_density; });

  // Sweep candidate cutoffs upward; timesteps alert once their density drops
  // below the cutoff. Candidate after index k alerts rows 0..k.
  long tp = 0, fp = 0;
  double best_f1 = -1.0;
  double best_threshold = rows.front().log_density;  // alerts nothing
  for (std::size_t k = 0; k < rows.size(); ++k) {
    tp += rows[k].hit ? 1 : 0;
    fp += rows[k].hit ? 0 : 1;
    const long fn = positives - tp;
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = k + 1 < rows.size()
                           ? 0.5 * (rows[k].log_density + rows[k + 1].log_density)
                           : rows[k].log_density + 1.0;
    }
  }
  return best_threshold;
}

double oracle_f1(const Panel& panel, const PipelineConfig& config) {
  if (!panel.has_labels()) {
    throw Error(ErrorKind::missing_labels, "oracle evaluation needs a labeled panel");
  }
  const std::vector<LagModel> models =
      train_all(panel, config.window, config.lambda, config.tol, config.max_iter);
  DetectorConfig detector;
  detector.p_value_threshold = config.p_value_threshold;
  detector.d = config.d;
  const std::vector<AnomalyVerdict> verdicts = replay_panel(panel, models, detector);
  const ConfusionCounts counts =
      count_confusion(verdicts, panel, config.window, panel.h());
  return f1_score(counts);
}

}  // namespace laganom
