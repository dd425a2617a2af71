#include "laganom/lagreg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

namespace laganom {
namespace {

constexpr double kPruneThreshold = 1e-10;

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Relation of model coefficients to design columns, validated.
void check_compatible(const LagModel& model, const LagDesign& design) {
  if (model.w != design.window()) {
    throw Error(ErrorKind::incompatible_design,
                "model window " + std::to_string(model.w) + " != design window " +
                    std::to_string(design.window()));
  }
  for (const auto& c : model.coeffs) {
    if (c.series < 0 || c.series >= design.series_count() || c.lag < 1 || c.lag > model.w) {
      throw Error(ErrorKind::incompatible_design,
                  "coefficient (" + std::to_string(c.series) + "," + std::to_string(c.lag) +
                      ") outside the design column index");
    }
  }
}

struct GramProblem {
  Eigen::MatrixXd gram;   // used only when the design cache is not applicable
  const Eigen::MatrixXd* gram_ptr = nullptr;
  Eigen::VectorXd xty;
  double ynorm2 = 0.0;
};

/// Coordinate descent on the Gram formulation. Maintains q = G b; residual
/// correlations are xty - q.
Eigen::VectorXd cd_lasso_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                              double ynorm2, double lambda, double tol, int max_iter,
                              SolverDiagnostics* diagnostics) {
  const Eigen::Index p = gram.cols();
  const double half_lambda = lambda / 2.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(p);  // G * beta

  auto kkt_violation = [&]() {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (gram(j, j) <= 0.0) continue;  // constant column, pinned at zero
      const double corr = xty[j] - q[j];
      const double v = beta[j] == 0.0
                           ? std::max(std::abs(corr) - half_lambda, 0.0)
                           : std::abs(corr - half_lambda * (beta[j] > 0 ? 1.0 : -1.0));
      worst = std::max(worst, v);
    }
    return worst;
  };

  if (diagnostics) {
    diagnostics->objective_trace.clear();
    diagnostics->sweeps = 0;
  }

  int sweep = 0;
  for (; sweep < max_iter; ++sweep) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double gjj = gram(j, j);
      if (gjj <= 0.0) continue;
      const double z = xty[j] - q[j] + gjj * beta[j];
      const double updated = soft_threshold(z, half_lambda) / gjj;
      const double delta = updated - beta[j];
      if (delta != 0.0) {
        q.noalias() += delta * gram.col(j);
        beta[j] = updated;
      }
    }
    if (diagnostics) {
      const double objective =
          ynorm2 - 2.0 * beta.dot(xty) + beta.dot(q) + lambda * beta.lpNorm<1>();
      diagnostics->objective_trace.push_back(objective);
      diagnostics->sweeps = sweep + 1;
    }
    if (kkt_violation() <= tol) {
      // Refresh q once against accumulated drift before declaring victory.
      q.noalias() = gram.selfadjointView<Eigen::Lower>() * beta;
      const double exact = kkt_violation();
      if (exact <= tol) {
        if (diagnostics) diagnostics->kkt_violation = exact;
        return beta;
      }
    }
  }

  // Duality gap for the equivalent problem (1/2)||y-Xb||^2 + (lambda/2)||b||_1,
  // doubled back into this objective's scale.
  q.noalias() = gram.selfadjointView<Eigen::Lower>() * beta;
  const double rnorm2 = std::max(ynorm2 - 2.0 * beta.dot(xty) + beta.dot(q), 0.0);
  const double rty = ynorm2 - beta.dot(xty);
  const double corr_inf = (xty - q).lpNorm<Eigen::Infinity>();
  const double scale = corr_inf > half_lambda && corr_inf > 0.0 ? half_lambda / corr_inf : 1.0;
  const double gap_half = 0.5 * rnorm2 + half_lambda * beta.lpNorm<1>() +
                          0.5 * scale * scale * rnorm2 - scale * rty;
  throw ConvergenceError("coordinate descent did not reach tol " + std::to_string(tol) +
                             " within " + std::to_string(max_iter) + " sweeps",
                         2.0 * gap_half);
}

GramProblem assemble_problem(const LagDesign& design, const Eigen::VectorXd& y,
                             bool standardize, bool fit_intercept) {
  const Eigen::Index N = design.rows();
  const auto& X = design.matrix();
  GramProblem prob;

  const double ybar = fit_intercept ? y.mean() : 0.0;
  Eigen::VectorXd xty_raw = X.transpose() * y;

  if (standardize && fit_intercept) {
    prob.gram_ptr = &design.standardized_gram();
    const auto& means = design.column_means();
    const auto& stds = design.column_stds();
    prob.xty.resize(design.cols());
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
      const double scale = stds[j] > 0.0 ? stds[j] : 1.0;
      prob.xty[j] = (xty_raw[j] - static_cast<double>(N) * means[j] * ybar) / scale;
    }
    prob.ynorm2 = (y.array() - ybar).matrix().squaredNorm();
    return prob;
  }

  // Uncached combinations: build the (possibly centered/scaled) Gram locally.
  Eigen::VectorXd center = fit_intercept ? design.column_means()
                                         : Eigen::VectorXd::Zero(design.cols());
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(design.cols());
  if (standardize) {
    const auto& stds = design.column_stds();
    for (Eigen::Index j = 0; j < design.cols(); ++j) scale[j] = stds[j] > 0.0 ? stds[j] : 1.0;
  }
  Eigen::MatrixXd gram = X.transpose() * X;
  gram.noalias() -= static_cast<double>(N) * center * center.transpose();
  gram = gram.array().colwise() / scale.array();
  gram = gram.array().rowwise() / scale.transpose().array();
  prob.gram = std::move(gram);
  prob.gram_ptr = &prob.gram;
  prob.xty.resize(design.cols());
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    prob.xty[j] = (xty_raw[j] - static_cast<double>(N) * center[j] * ybar) / scale[j];
  }
  prob.ynorm2 = (y.array() - ybar).matrix().squaredNorm();
  return prob;
}

LagModel finalize_model(const LagDesign& design, int series_id, double lambda,
                        const Eigen::VectorXd& beta_std, bool standardize,
                        bool fit_intercept, const Eigen::VectorXd& y) {
  const auto& means = design.column_means();
  const auto& stds = design.column_stds();
  const double ybar = fit_intercept ? y.mean() : 0.0;

  LagModel model;
  model.series_id = series_id;
  model.w = design.window();
  model.lambda = lambda;

  double intercept = ybar;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    if (beta_std[j] == 0.0) continue;
    const double scale = standardize && stds[j] > 0.0 ? stds[j] : 1.0;
    const double coeff = beta_std[j] / scale;
    if (fit_intercept) intercept -= coeff * means[j];
    if (std::abs(coeff) > kPruneThreshold) {
      const auto [series, lag] = design.series_lag_of(j);
      model.coeffs.push_back(LagCoeff{series, lag, coeff});
    }
  }
  model.intercept = fit_intercept ? intercept : 0.0;
  model.m = static_cast<int>(model.coeffs.size());

  const Eigen::VectorXd res = residuals(model, design);
  model.sigma = estimate_sigma(res, design.series_length(), model.m);
  return model;
}

}  // namespace

LagDesign LagDesign::build(const Panel& panel, int w) {
  const Eigen::Index h = panel.h();
  const Eigen::Index n = panel.n();
  if (w < 1) throw Error(ErrorKind::invalid_argument, "window must be >= 1");
  if (w >= h) {
    throw Error(ErrorKind::insufficient_history,
                "window " + std::to_string(w) + " needs more than " + std::to_string(h) +
                    " timesteps of history");
  }
  LagDesign design;
  design.n_ = static_cast<int>(n);
  design.w_ = w;
  const auto [rows, cols] = shape(n, h, w);
  design.matrix_.resize(rows, cols);
  design.targets_.resize(rows, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    design.targets_.col(j) = panel.values.col(j).segment(w, rows);
    for (int k = 1; k <= w; ++k) {
      design.matrix_.col(design.column_of(static_cast<int>(j), k)) =
          panel.values.col(j).segment(w - k, rows);
    }
  }
  return design;
}

std::pair<Eigen::Index, Eigen::Index> LagDesign::shape(Eigen::Index n, Eigen::Index h,
                                                       Eigen::Index w) {
  return {h - w, w * n};
}

Eigen::Index LagDesign::column_of(int series, int lag) const {
  if (series < 0 || series >= n_ || lag < 1 || lag > w_) {
    throw Error(ErrorKind::invalid_argument,
                "no column for series " + std::to_string(series) + ", lag " +
                    std::to_string(lag));
  }
  return static_cast<Eigen::Index>(series) * w_ + (lag - 1);
}

std::pair<int, int> LagDesign::series_lag_of(Eigen::Index column) const {
  if (column < 0 || column >= cols()) {
    throw Error(ErrorKind::invalid_argument, "column out of range");
  }
  return {static_cast<int>(column / w_), static_cast<int>(column % w_) + 1};
}

Eigen::VectorXd LagDesign::target(int series_id) const {
  if (series_id < 0 || series_id >= n_) {
    throw Error(ErrorKind::invalid_argument, "series_id out of range");
  }
  return targets_.col(series_id);
}

void LagDesign::ensure_column_stats() const {
  std::call_once(cache_->stats_once, [this] {
    const Eigen::Index N = matrix_.rows();
    cache_->means = matrix_.colwise().mean();
    Eigen::VectorXd sq = matrix_.colwise().squaredNorm();
    cache_->stds =
        ((sq.array() / static_cast<double>(N)) - cache_->means.array().square())
            .max(0.0)
            .sqrt();
  });
}

const Eigen::VectorXd& LagDesign::column_means() const {
  ensure_column_stats();
  return cache_->means;
}

const Eigen::VectorXd& LagDesign::column_stds() const {
  ensure_column_stats();
  return cache_->stds;
}

const Eigen::MatrixXd& LagDesign::standardized_gram() const {
  ensure_column_stats();
  std::call_once(cache_->gram_once, [this] {
    const Eigen::Index N = matrix_.rows();
    Eigen::MatrixXd gram = matrix_.transpose() * matrix_;
    gram.noalias() -=
        static_cast<double>(N) * cache_->means * cache_->means.transpose();
    Eigen::VectorXd scale = cache_->stds;
    for (Eigen::Index j = 0; j < scale.size(); ++j)
      if (scale[j] <= 0.0) scale[j] = 1.0;
    gram = gram.array().colwise() / scale.array();
    gram = gram.array().rowwise() / scale.transpose().array();
    cache_->gram = std::move(gram);
  });
  return cache_->gram;
}

Eigen::VectorXd solve_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double lambda, double tol, int max_iter,
                            SolverDiagnostics* diagnostics) {
  if (lambda < 0.0) throw Error(ErrorKind::invalid_argument, "lambda must be >= 0");
  if (X.rows() != y.size()) {
    throw Error(ErrorKind::shape, "X rows and y length differ");
  }
  Eigen::MatrixXd gram = X.transpose() * X;
  Eigen::VectorXd xty = X.transpose() * y;
  return cd_lasso_gram(gram, xty, y.squaredNorm(), lambda, tol, max_iter, diagnostics);
}

double lasso_kkt_violation(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta, double lambda) {
  const Eigen::VectorXd corr = X.transpose() * (y - X * beta);
  const double half_lambda = lambda / 2.0;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double v = beta[j] == 0.0
                         ? std::max(std::abs(corr[j]) - half_lambda, 0.0)
                         : std::abs(corr[j] - half_lambda * (beta[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

LagModel fit_lasso(const LagDesign& design, int series_id, const LassoOptions& options,
                   SolverDiagnostics* diagnostics) {
  if (options.lambda < 0.0) {
    throw Error(ErrorKind::invalid_argument, "lambda must be >= 0");
  }
  const Eigen::VectorXd y = design.target(series_id);
  const GramProblem prob =
      assemble_problem(design, y, options.standardize, options.fit_intercept);
  const Eigen::VectorXd beta_std =
      cd_lasso_gram(*prob.gram_ptr, prob.xty, prob.ynorm2, options.lambda, options.tol,
                    options.max_iter, diagnostics);
  return finalize_model(design, series_id, options.lambda, beta_std,
                        options.standardize, options.fit_intercept, y);
}

LagModel fit_iterated_ridge(const LagDesign& design, int series_id,
                            const std::vector<LagCoeff>& beta0,
                            const IteratedRidgeOptions& options) {
  if (design.cols() > options.dense_solve_cap) {
    throw Error(ErrorKind::invalid_argument,
                "design has " + std::to_string(design.cols()) +
                    " columns, above the dense-solve cap of " +
                    std::to_string(options.dense_solve_cap));
  }
  if (options.lambda < 0.0) {
    throw Error(ErrorKind::invalid_argument, "lambda must be >= 0");
  }
  if (options.steps < 0) {
    throw Error(ErrorKind::invalid_argument, "steps must be >= 0");
  }
  if (beta0.empty()) {
    throw Error(ErrorKind::invalid_argument, "beta0 must name at least one column");
  }
  for (const auto& c : beta0) {
    if (c.beta == 0.0) {
      throw Error(ErrorKind::degenerate_weight,
                  "beta0 entry (" + std::to_string(c.series) + "," +
                      std::to_string(c.lag) + ") is exactly zero");
    }
  }

  std::vector<LagCoeff> support = beta0;
  std::sort(support.begin(), support.end(), [](const LagCoeff& a, const LagCoeff& b) {
    return std::tie(a.series, a.lag) < std::tie(b.series, b.lag);
  });

  const Eigen::Index N = design.rows();
  const Eigen::Index s = static_cast<Eigen::Index>(support.size());
  const auto& means = design.column_means();
  const auto& stds = design.column_stds();
  const Eigen::VectorXd y = design.target(series_id);
  const double ybar = y.mean();

  Eigen::MatrixXd Xs(N, s);
  Eigen::VectorXd beta_std(s);
  Eigen::VectorXd col_means(s);
  Eigen::VectorXd col_scales(s);
  for (Eigen::Index l = 0; l < s; ++l) {
    const Eigen::Index col = design.column_of(support[l].series, support[l].lag);
    const double scale = stds[col] > 0.0 ? stds[col] : 1.0;
    Xs.col(l) = (design.matrix().col(col).array() - means[col]) / scale;
    beta_std[l] = support[l].beta * scale;
    col_means[l] = means[col];
    col_scales[l] = scale;
  }

  const Eigen::MatrixXd gram = Xs.transpose() * Xs;
  const Eigen::VectorXd rhs = Xs.transpose() * (y.array() - ybar).matrix();

  for (int step = 0; step < options.steps; ++step) {
    Eigen::MatrixXd system = gram;
    if (options.lambda > 0.0) {
      for (Eigen::Index l = 0; l < s; ++l) {
        if (beta_std[l] == 0.0) {
          throw Error(ErrorKind::degenerate_weight,
                      "iterate hit an exact zero at step " + std::to_string(step));
        }
        system(l, l) += options.lambda / std::abs(beta_std[l]);
      }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    const Eigen::VectorXd pivots = ldlt.vectorD();
    const double pivot_max = pivots.cwiseAbs().maxCoeff();
    const bool singular = ldlt.info() != Eigen::Success || pivot_max <= 0.0 ||
                          pivots.minCoeff() < -1e-12 * pivot_max ||
                          pivots.cwiseAbs().minCoeff() <= 1e-12 * pivot_max;
    if (singular) {
      throw Error(ErrorKind::singular_system,
                  "dense system is singular at step " + std::to_string(step));
    }
    beta_std = ldlt.solve(rhs);
  }

  LagModel model;
  model.series_id = series_id;
  model.w = design.window();
  model.lambda = options.lambda;
  double intercept = ybar;
  for (Eigen::Index l = 0; l < s; ++l) {
    const double coeff = beta_std[l] / col_scales[l];
    intercept -= coeff * col_means[l];
    if (std::abs(coeff) > kPruneThreshold) {
      model.coeffs.push_back(LagCoeff{support[l].series, support[l].lag, coeff});
    }
  }
  model.intercept = intercept;
  model.m = static_cast<int>(model.coeffs.size());
  const Eigen::VectorXd res = residuals(model, design);
  model.sigma = estimate_sigma(res, design.series_length(), model.m);
  return model;
}

Eigen::VectorXd residuals(const LagModel& model, const LagDesign& design) {
  check_compatible(model, design);
  const Eigen::VectorXd y = design.target(model.series_id);
  const auto& X = design.matrix();

  std::vector<Eigen::Index> columns;
  columns.reserve(model.coeffs.size());
  for (const auto& c : model.coeffs) columns.push_back(design.column_of(c.series, c.lag));

  Eigen::VectorXd out(design.rows());
  for (Eigen::Index r = 0; r < design.rows(); ++r) {
    double pred = model.intercept;
    for (std::size_t l = 0; l < columns.size(); ++l) {
      pred += model.coeffs[l].beta * X(r, columns[l]);
    }
    out[r] = y[r] - pred;
  }
  return out;
}

double estimate_sigma(const Eigen::VectorXd& residuals, Eigen::Index h, Eigen::Index m) {
  if (h - m <= 0) {
    throw Error(ErrorKind::degenerate_dof,
                "h - m = " + std::to_string(h - m) + " leaves sigma undefined");
  }
  return std::sqrt(residuals.squaredNorm() / static_cast<double>(h - m));
}

std::vector<LagModel> train_all(const Panel& panel, int w, double lambda, double tol,
                                int max_iter) {
  const LagDesign design = LagDesign::build(panel, w);
  design.standardized_gram();  // shared read-only from here on

  const int n = design.series_count();
  std::vector<LagModel> models(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(n));

  LassoOptions options;
  options.lambda = lambda;
  options.tol = tol;
  options.max_iter = max_iter;

  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned worker = 0; worker < workers; ++worker) {
    pool.emplace_back([&, worker] {
      for (int i = static_cast<int>(worker); i < n; i += static_cast<int>(workers)) {
        try {
          models[static_cast<std::size_t>(i)] = fit_lasso(design, i, options);
        } catch (...) {
          failures[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();

  for (int i = 0; i < n; ++i) {
    if (!failures[static_cast<std::size_t>(i)]) continue;
    try {
      std::rethrow_exception(failures[static_cast<std::size_t>(i)]);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("series " + std::to_string(i) + ": " + e.what(),
                             e.duality_gap());
    } catch (const Error& e) {
      throw Error(e.kind(), "series " + std::to_string(i) + ": " + e.what());
    }
  }
  return models;
}

void save_model(const LagModel& model, const std::filesystem::path& path) {
  nlohmann::json obj;
  obj["series_id"] = model.series_id;
  obj["w"] = model.w;
  obj["lambda"] = model.lambda;
  obj["intercept"] = model.intercept;
  obj["sigma"] = model.sigma;
  obj["m"] = model.m;
  auto& coeffs = obj["coeffs"] = nlohmann::json::array();
  for (const auto& c : model.coeffs) {
    coeffs.push_back({{"j", c.series}, {"k", c.lag}, {"beta", c.beta}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << obj.dump(2) << '\n';
}

LagModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
  LagModel model;
  model.series_id = obj.at("series_id").get<int>();
  model.w = obj.at("w").get<int>();
  model.lambda = obj.at("lambda").get<double>();
  model.intercept = obj.at("intercept").get<double>();
  model.sigma = obj.at("sigma").get<double>();
  model.m = obj.at("m").get<int>();
  for (const auto& c : obj.at("coeffs")) {
    model.coeffs.push_back(LagCoeff{c.at("j").get<int>(), c.at("k").get<int>(),
                                    c.at("beta").get<double>()});
  }
  std::sort(model.coeffs.begin(), model.coeffs.end(),
            [](const LagCoeff& a, const LagCoeff& b) {
              return std::tie(a.series, a.lag) < std::tie(b.series, b.lag);
            });
  return model;
}

std::vector<LagModel> load_models(const std::filesystem::path& directory) {
  std::vector<LagModel> models;
  if (!std::filesystem::is_directory(directory)) {
    throw Error(ErrorKind::io, directory.string() + " is not a directory");
  }
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (entry.path().extension() == ".json") models.push_back(load_model(entry.path()));
  }
  if (models.empty()) {
    throw Error(ErrorKind::io, "no model *.json files under " + directory.string());
  }
  std::sort(models.begin(), models.end(),
            [](const LagModel& a, const LagModel& b) { return a.series_id < b.series_id; });
  return models;
}

void save_models(const std::vector<LagModel>& models,
                 const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  for (const auto& model : models) {
    save_model(model, directory / (std::to_string(model.series_id) + ".json"));
  }
}

}  // namespace laganom
