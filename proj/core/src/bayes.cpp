#include "laganom/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace laganom {
namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

struct FoldScore {
  double f1 = 0.0;
  bool defined = false;
};

FoldScore fold_f1(const Eigen::VectorXd& eps_norm, std::span<const std::uint8_t> labels,
                  Eigen::Index begin, Eigen::Index end, double alpha) {
  long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index t = begin; t < end; ++t) {
    const int predicted = classify(eps_norm[t], alpha);
    const int actual = labels[static_cast<std::size_t>(t)] ? 1 : 0;
    tp += predicted && actual;
    fp += predicted && !actual;
    fn += !predicted && actual;
  }
  FoldScore score;
  if (tp + fp + fn > 0) {
    score.f1 = 2.0 * static_cast<double>(tp) /
               static_cast<double>(2 * tp + fp + fn);
    score.defined = true;
  }
  return score;
}

}  // namespace

double normalize_residual(double eps, double min_eps, double max_eps) {
  if (max_eps <= min_eps) {
    throw Error(ErrorKind::degenerate_range,
                "max_eps must exceed min_eps, got [" + std::to_string(min_eps) + ", " +
                    std::to_string(max_eps) + "]");
  }
  const double clamped = std::clamp(eps, min_eps, max_eps);
  return (clamped - min_eps + 1.0) / (max_eps - min_eps + 2.0);
}

Eigen::VectorXd normalize_residuals(const Eigen::VectorXd& eps, double min_eps,
                                    double max_eps) {
  Eigen::VectorXd out(eps.size());
  for (Eigen::Index t = 0; t < eps.size(); ++t) {
    out[t] = normalize_residual(eps[t], min_eps, max_eps);
  }
  return out;
}

LogitFit fit_logit_linear(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& eps_norm) {
  if (gamma.rows() != eps_norm.size()) {
    throw Error(ErrorKind::shape, "design rows must align with the residual vector");
  }
  Eigen::VectorXd target(eps_norm.size());
  for (Eigen::Index t = 0; t < eps_norm.size(); ++t) {
    const double e = eps_norm[t];
    if (!(e > 0.0 && e < 1.0)) {
      throw Error(ErrorKind::invalid_argument,
                  "normalized residuals must lie strictly in (0, 1)");
    }
    target[t] = logit(e);
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gamma);
  LogitFit fit;
  fit.c = cod.solve(target);
  fit.rank = cod.rank();
  fit.rank_deficient = fit.rank < gamma.cols();
  return fit;
}

double anomaly_probability(double eps_norm, double alpha) {
  if (!(eps_norm > 0.0 && eps_norm < 1.0)) {
    throw Error(ErrorKind::invalid_argument,
                "eps_norm must lie strictly in (0, 1), got " + std::to_string(eps_norm));
  }
  if (!(alpha > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "alpha must be positive");
  }
  return std::min(1.0, alpha * eps_norm);
}

int classify(double eps_norm, double alpha) {
  return anomaly_probability(eps_norm, alpha) > 0.5 ? 1 : 0;
}

Eigen::MatrixXd active_design(const LagDesign& design, const LagModel& model) {
  if (model.w != design.window()) {
    throw Error(ErrorKind::incompatible_design, "model window differs from the design");
  }
  const auto& means = design.column_means();
  const auto& stds = design.column_stds();
  Eigen::MatrixXd gamma(design.rows(), static_cast<Eigen::Index>(model.coeffs.size()));
  for (std::size_t l = 0; l < model.coeffs.size(); ++l) {
    const Eigen::Index col = design.column_of(model.coeffs[l].series, model.coeffs[l].lag);
    const double scale = stds[col] > 0.0 ? stds[col] : 1.0;
    gamma.col(static_cast<Eigen::Index>(l)) =
        (design.matrix().col(col).array() - means[col]) / scale;
  }
  return gamma;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  grid.reserve(41);
  for (int i = 0; i <= 40; ++i) grid.push_back(0.1 + 0.1 * i);
  return grid;
}

BayesCalibration calibrate_alpha(const Eigen::VectorXd& eps_norm,
                                 std::span<const std::uint8_t> labels,
                                 std::span<const double> alpha_grid, int folds) {
  if (static_cast<Eigen::Index>(labels.size()) != eps_norm.size()) {
    throw Error(ErrorKind::shape, "labels must align with the residual timestamps");
  }
  if (alpha_grid.empty()) {
    throw Error(ErrorKind::invalid_argument, "alpha grid is empty");
  }
  if (eps_norm.size() < 1) {
    throw Error(ErrorKind::empty_input, "no residuals to calibrate on");
  }
  folds = std::clamp<int>(folds, 2, static_cast<int>(eps_norm.size()));

  bool any_positive = false;
  for (const auto l : labels) any_positive |= l != 0;
  if (!any_positive) {
    throw Error(ErrorKind::undefined_f1,
                "no positive labels in any fold; use stratified folds or supply "
                "labeled anomalies");
  }

  // Contiguous time blocks, respecting serial dependence.
  const Eigen::Index T = eps_norm.size();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index begin = T * f / folds;
    const Eigen::Index end = T * (f + 1) / folds;
    if (begin < end) blocks.emplace_back(begin, end);
  }

  double best_alpha = alpha_grid[0];
  double best_f1 = -1.0;
  for (const double alpha : alpha_grid) {
    double total = 0.0;
    int defined = 0;
    for (const auto& [begin, end] : blocks) {
      const FoldScore score = fold_f1(eps_norm, labels, begin, end, alpha);
      if (score.defined) {
        total += score.f1;
        ++defined;
      }
    }
    if (defined == 0) continue;
    const double mean_f1 = total / defined;
    if (mean_f1 > best_f1 + 1e-15 ||
        (std::abs(mean_f1 - best_f1) <= 1e-15 && alpha < best_alpha)) {
      best_f1 = mean_f1;
      best_alpha = alpha;
    }
  }
  if (best_f1 < 0.0) {
    throw Error(ErrorKind::undefined_f1, "F1 undefined on every fold");
  }

  BayesCalibration calibration;
  calibration.alpha = best_alpha;
  calibration.cv_f1 = best_f1;
  return calibration;
}

BayesCalibration fit_bayes(const Panel& panel, const LagDesign& design,
                           const LagModel& model, int horizon,
                           std::span<const double> alpha_grid, int folds) {
  if (!panel.has_labels()) {
    throw Error(ErrorKind::missing_labels, "alpha calibration needs a labeled panel");
  }
  if (horizon != 0 && horizon != 1) {
    throw Error(ErrorKind::invalid_argument, "horizon must be 0 or 1");
  }

  const Eigen::VectorXd eps = residuals(model, design);
  const double min_eps = eps.minCoeff();
  const double max_eps = eps.maxCoeff();
  const Eigen::VectorXd eps_norm = normalize_residuals(eps, min_eps, max_eps);

  const Eigen::MatrixXd gamma = active_design(design, model);
  LogitFit logit_fit;
  if (gamma.cols() > 0) {
    logit_fit = fit_logit_linear(gamma, eps_norm);
  }

  // Residual row r targets time w + r; the label row is shifted by horizon.
  const int w = design.window();
  const Eigen::Index rows = design.rows() - horizon;
  if (rows < 1) {
    throw Error(ErrorKind::insufficient_history, "not enough rows for the horizon");
  }
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    labels[static_cast<std::size_t>(r)] =
        panel.label(w + r + horizon, model.series_id) ? 1 : 0;
  }

  BayesCalibration calibration =
      calibrate_alpha(eps_norm.head(rows), labels, alpha_grid, folds);
  calibration.series_id = model.series_id;
  calibration.min_eps = min_eps;
  calibration.max_eps = max_eps;
  calibration.logit_rank_deficient = logit_fit.rank_deficient;
  calibration.c.reserve(model.coeffs.size());
  for (std::size_t l = 0; l < model.coeffs.size(); ++l) {
    calibration.c.push_back(BayesCoeff{model.coeffs[l].series, model.coeffs[l].lag,
                                       logit_fit.c[static_cast<Eigen::Index>(l)]});
  }
  return calibration;
}

void save_calibration(const BayesCalibration& calibration,
                      const std::filesystem::path& path) {
  nlohmann::json obj;
  obj["series_id"] = calibration.series_id;
  obj["min_eps"] = calibration.min_eps;
  obj["max_eps"] = calibration.max_eps;
  obj["alpha"] = calibration.alpha;
  obj["cv_f1"] = calibration.cv_f1;
  obj["logit_rank_deficient"] = calibration.logit_rank_deficient;
  auto& coeffs = obj["c"] = nlohmann::json::array();
  for (const auto& c : calibration.c) {
    coeffs.push_back({{"j", c.series}, {"k", c.lag}, {"c", c.c}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << obj.dump(2) << '\n';
}

BayesCalibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
  BayesCalibration calibration;
  calibration.series_id = obj.at("series_id").get<int>();
  calibration.min_eps = obj.at("min_eps").get<double>();
  calibration.max_eps = obj.at("max_eps").get<double>();
  calibration.alpha = obj.at("alpha").get<double>();
  calibration.cv_f1 = obj.at("cv_f1").get<double>();
  calibration.logit_rank_deficient = obj.value("logit_rank_deficient", false);
  for (const auto& c : obj.at("c")) {
    calibration.c.push_back(BayesCoeff{c.at("j").get<int>(), c.at("k").get<int>(),
                                       c.at("c").get<double>()});
  }
  return calibration;
}

}  // namespace laganom
