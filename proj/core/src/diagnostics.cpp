#include "laganom/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace laganom {
namespace {

constexpr double kDensityFloor = 1e-300;
constexpr int kMaxGridSeries = 50;

double log_norm_constant(int dim, double bandwidth, Eigen::Index count) {
  const double log_kernel = dim == 1 ? 0.5 * std::log(2.0 * M_PI) + std::log(bandwidth)
                                     : std::log(2.0 * M_PI) + 2.0 * std::log(bandwidth);
  return -std::log(static_cast<double>(count)) - log_kernel;
}

/// Squared distances between every eval row and every sample row.
Eigen::MatrixXd pairwise_sq_dist(const Eigen::MatrixXd& eval,
                                 const Eigen::MatrixXd& samples) {
  Eigen::MatrixXd dist = -2.0 * eval * samples.transpose();
  dist.colwise() += eval.rowwise().squaredNorm();
  dist.rowwise() += samples.rowwise().squaredNorm().transpose();
  return dist.cwiseMax(0.0);
}

}  // namespace

KdeModel::KdeModel(Eigen::MatrixXd samples, double bandwidth)
    : samples_(std::move(samples)), bandwidth_(bandwidth) {
  if (samples_.rows() < 1 || (samples_.cols() != 1 && samples_.cols() != 2)) {
    throw Error(ErrorKind::invalid_argument, "samples must be N x 1 or N x 2");
  }
  if (!(bandwidth_ > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "bandwidth must be positive");
  }
}

KdeModel KdeModel::fit(const Eigen::MatrixXd& samples,
                       std::span<const double> bandwidth_grid, int folds) {
  if (samples.rows() < 10) {
    throw Error(ErrorKind::invalid_argument, "KDE fit needs at least 10 samples");
  }
  if (samples.cols() != 1 && samples.cols() != 2) {
    throw Error(ErrorKind::invalid_argument, "samples must be N x 1 or N x 2");
  }
  if (bandwidth_grid.empty()) {
    throw Error(ErrorKind::invalid_argument, "bandwidth grid is empty");
  }
  for (const double h : bandwidth_grid) {
    if (!(h > 0.0)) {
      throw Error(ErrorKind::invalid_argument, "bandwidth grid must be positive");
    }
  }
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const double mean = samples.col(c).mean();
    const double var = (samples.col(c).array() - mean).square().mean();
    if (var <= 0.0) {
      throw Error(ErrorKind::degenerate_samples,
                  "samples have zero variance in dimension " + std::to_string(c));
    }
  }
  folds = std::max(2, folds);

  const Eigen::Index N = samples.rows();
  const int dim = static_cast<int>(samples.cols());
  std::vector<double> score(bandwidth_grid.size(), 0.0);

  for (int fold = 0; fold < folds; ++fold) {
    // Strided split keeps folds deterministic without an RNG.
    std::vector<Eigen::Index> held, train;
    for (Eigen::Index i = 0; i < N; ++i) {
      (i % folds == fold ? held : train).push_back(i);
    }
    if (held.empty() || train.empty()) continue;
    Eigen::MatrixXd held_m(static_cast<Eigen::Index>(held.size()), dim);
    Eigen::MatrixXd train_m(static_cast<Eigen::Index>(train.size()), dim);
    for (std::size_t i = 0; i < held.size(); ++i) held_m.row(static_cast<Eigen::Index>(i)) = samples.row(held[i]);
    for (std::size_t i = 0; i < train.size(); ++i) train_m.row(static_cast<Eigen::Index>(i)) = samples.row(train[i]);

    // One distance matrix per fold, shared by every candidate bandwidth.
    const Eigen::MatrixXd dist = pairwise_sq_dist(held_m, train_m);
    for (std::size_t b = 0; b < bandwidth_grid.size(); ++b) {
      const double h = bandwidth_grid[b];
      const Eigen::ArrayXd sums =
          (-dist.array() / (2.0 * h * h)).exp().rowwise().sum();
      const double log_norm = log_norm_constant(dim, h, train_m.rows());
      score[b] += (sums.max(kDensityFloor).log() + log_norm).sum();
    }
  }

  std::size_t best = 0;
  for (std::size_t b = 1; b < bandwidth_grid.size(); ++b) {
    if (score[b] > score[best]) best = b;
  }
  return KdeModel(samples, bandwidth_grid[best]);
}

double KdeModel::density(double x) const {
  if (dimension() != 1) {
    throw Error(ErrorKind::invalid_argument, "1-D evaluation of a 2-D model");
  }
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  const double sum = ((samples_.col(0).array() - x).square() * -inv).exp().sum();
  return sum * std::exp(log_norm_constant(1, bandwidth_, samples_.rows()));
}

double KdeModel::density(double x, double y) const {
  if (dimension() != 2) {
    throw Error(ErrorKind::invalid_argument, "2-D evaluation of a 1-D model");
  }
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  const Eigen::ArrayXd sq = (samples_.col(0).array() - x).square() +
                            (samples_.col(1).array() - y).square();
  return (sq * -inv).exp().sum() *
         std::exp(log_norm_constant(2, bandwidth_, samples_.rows()));
}

Eigen::VectorXd KdeModel::density_grid(const Eigen::VectorXd& xs) const {
  if (dimension() != 1) {
    throw Error(ErrorKind::invalid_argument, "1-D evaluation of a 2-D model");
  }
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  const double norm = std::exp(log_norm_constant(1, bandwidth_, samples_.rows()));
  Eigen::VectorXd out(xs.size());
  for (Eigen::Index a = 0; a < xs.size(); ++a) {
    out[a] = ((samples_.col(0).array() - xs[a]).square() * -inv).exp().sum() * norm;
  }
  return out;
}

Eigen::MatrixXd KdeModel::density_grid(const Eigen::VectorXd& xs,
                                       const Eigen::VectorXd& ys) const {
  if (dimension() != 2) {
    throw Error(ErrorKind::invalid_argument, "2-D evaluation of a 1-D model");
  }
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  // Separable kernel: p(x_a, y_b) = norm * sum_i A(a,i) B(b,i).
  Eigen::MatrixXd kx(xs.size(), samples_.rows());
  Eigen::MatrixXd ky(ys.size(), samples_.rows());
  for (Eigen::Index a = 0; a < xs.size(); ++a) {
    kx.row(a) = ((samples_.col(0).array() - xs[a]).square() * -inv).exp();
  }
  for (Eigen::Index b = 0; b < ys.size(); ++b) {
    ky.row(b) = ((samples_.col(1).array() - ys[b]).square() * -inv).exp();
  }
  const double norm = std::exp(log_norm_constant(2, bandwidth_, samples_.rows()));
  return norm * (kx * ky.transpose());
}

std::vector<double> default_bandwidth_grid(const Eigen::MatrixXd& samples) {
  const Eigen::Index N = samples.rows();
  double sigma = 0.0;
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const double mean = samples.col(c).mean();
    sigma += std::sqrt((samples.col(c).array() - mean).square().mean());
  }
  sigma /= static_cast<double>(samples.cols());
  if (sigma <= 0.0) sigma = 1.0;
  const double exponent = samples.cols() == 1 ? -0.2 : -1.0 / 6.0;
  const double pilot = 1.06 * sigma * std::pow(static_cast<double>(N), exponent);
  std::vector<double> grid;
  for (const double f : {0.25, 0.4, 0.63, 1.0, 1.6, 2.5, 4.0}) grid.push_back(pilot * f);
  return grid;
}

MiEstimate estimate_mutual_information(std::span<const double> xs,
                                       std::span<const double> ys, int resolution) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorKind::shape, "sample vectors differ in length");
  }
  if (xs.size() < 100) {
    throw Error(ErrorKind::invalid_argument, "MI estimation needs >= 100 samples");
  }
  if (resolution < 32) {
    throw Error(ErrorKind::invalid_argument, "resolution must be >= 32");
  }

  const Eigen::Index N = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd joint(N, 2);
  for (Eigen::Index i = 0; i < N; ++i) {
    joint(i, 0) = xs[static_cast<std::size_t>(i)];
    joint(i, 1) = ys[static_cast<std::size_t>(i)];
  }

  const std::vector<double> grid = default_bandwidth_grid(joint);
  const KdeModel joint_kde = KdeModel::fit(joint, grid);
  const double h = joint_kde.bandwidth();
  // Same bandwidth on each axis: these are the joint estimate's marginals.
  const KdeModel marginal_x(joint.col(0), h);
  const KdeModel marginal_y(joint.col(1), h);

  auto axis_grid = [&](const Eigen::VectorXd& column) {
    const double lo = column.minCoeff() - 3.0 * h;
    const double hi = column.maxCoeff() + 3.0 * h;
    const double step = (hi - lo) / static_cast<double>(resolution);
    Eigen::VectorXd mids(resolution);
    for (int a = 0; a < resolution; ++a) mids[a] = lo + (a + 0.5) * step;
    return std::make_pair(mids, step);
  };
  const auto [gx, dx] = axis_grid(joint.col(0));
  const auto [gy, dy] = axis_grid(joint.col(1));

  const Eigen::MatrixXd pj = joint_kde.density_grid(gx, gy);
  const Eigen::VectorXd px = marginal_x.density_grid(gx);
  const Eigen::VectorXd py = marginal_y.density_grid(gy);

  double raw = 0.0;
  for (int a = 0; a < resolution; ++a) {
    for (int b = 0; b < resolution; ++b) {
      const double p = pj(a, b);
      if (p <= kDensityFloor) continue;
      const double denom = std::max(px[a] * py[b], kDensityFloor);
      raw += p * std::log(p / denom);
    }
  }
  raw *= dx * dy;

  MiEstimate out;
  out.raw = raw;
  out.value = std::max(0.0, raw);
  out.bandwidth = h;
  return out;
}

double mutual_information(std::span<const double> xs, std::span<const double> ys,
                          int resolution) {
  return estimate_mutual_information(xs, ys, resolution).value;
}

MiGrid mi_grid(const Panel& panel, std::span<const int> series_ids, int resolution) {
  if (series_ids.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "mi_grid needs at least 2 series");
  }
  if (series_ids.size() > kMaxGridSeries) {
    throw Error(ErrorKind::invalid_argument,
                "mi_grid caps at " + std::to_string(kMaxGridSeries) + " series");
  }
  for (const int id : series_ids) {
    if (id < 0 || id >= panel.n()) {
      throw Error(ErrorKind::invalid_argument, "series id " + std::to_string(id) +
                                                   " out of range");
    }
  }

  const int k = static_cast<int>(series_ids.size());
  MiGrid grid;
  grid.series_ids.assign(series_ids.begin(), series_ids.end());
  grid.grid_resolution = resolution;
  grid.values = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());

  // z-score each selected series once
  std::vector<std::vector<double>> normalized(static_cast<std::size_t>(k));
  std::vector<std::string> normalize_failure(static_cast<std::size_t>(k));
  for (int a = 0; a < k; ++a) {
    const Eigen::VectorXd col = panel.values.col(series_ids[static_cast<std::size_t>(a)]);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    if (sd <= 0.0) {
      normalize_failure[static_cast<std::size_t>(a)] = "zero-variance series";
      continue;
    }
    auto& dst = normalized[static_cast<std::size_t>(a)];
    dst.resize(static_cast<std::size_t>(col.size()));
    for (Eigen::Index t = 0; t < col.size(); ++t) dst[static_cast<std::size_t>(t)] = (col[t] - mean) / sd;
  }

  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      const auto& fa = normalize_failure[static_cast<std::size_t>(a)];
      const auto& fb = normalize_failure[static_cast<std::size_t>(b)];
      if (!fa.empty() || !fb.empty()) {
        grid.missing.push_back(MiFailure{a, b, !fa.empty() ? fa : fb});
        continue;
      }
      try {
        const double value = mutual_information(normalized[static_cast<std::size_t>(a)],
                                                normalized[static_cast<std::size_t>(b)],
                                                resolution);
        grid.values(a, b) = value;
        grid.values(b, a) = value;
      } catch (const Error& e) {
        grid.missing.push_back(MiFailure{a, b, e.what()});
      }
    }
  }
  return grid;
}

void store_mi_csv(const MiGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << "series";
  for (const int id : grid.series_ids) out << ",s" << id;
  out << '\n';
  out.precision(12);
  for (Eigen::Index a = 0; a < grid.values.rows(); ++a) {
    out << 's' << grid.series_ids[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < grid.values.cols(); ++b) {
      out << ',';
      if (std::isnan(grid.values(a, b))) {
        out << "nan";
      } else {
        out << grid.values(a, b);
      }
    }
    out << '\n';
  }
}

}  // namespace laganom
