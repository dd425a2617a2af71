#include "laganom/detector.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace laganom {
namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / M_SQRT2); }

void check_config(const DetectorConfig& config) {
  if (config.p_value_threshold <= 0.0 || config.p_value_threshold >= 1.0) {
    throw Error(ErrorKind::invalid_argument, "p_value_threshold must lie in (0, 1)");
  }
  if (config.d < 1) {
    throw Error(ErrorKind::invalid_argument, "smoothing width d must be >= 1");
  }
}

}  // namespace

StreamState::StreamState(int series_count, int capacity)
    : n_(series_count), capacity_(capacity) {
  if (series_count < 1 || capacity < 1) {
    throw Error(ErrorKind::invalid_argument, "stream needs >= 1 series and capacity");
  }
  buffer_.assign(static_cast<std::size_t>(n_) * capacity_, 0.0);
}

void StreamState::push(std::span<const double> point) {
  if (static_cast<int>(point.size()) != n_) {
    throw Error(ErrorKind::shape, "point has " + std::to_string(point.size()) +
                                      " entries, stream has " + std::to_string(n_) +
                                      " series");
  }
  const int slot = static_cast<int>(cursor_ % capacity_);
  for (int i = 0; i < n_; ++i) {
    buffer_[static_cast<std::size_t>(i) * capacity_ + slot] = point[static_cast<std::size_t>(i)];
  }
  ++cursor_;
}

double StreamState::lagged(int series, int lag) const {
  if (series < 0 || series >= n_) {
    throw Error(ErrorKind::invalid_argument, "series out of range");
  }
  if (lag < 1 || lag > capacity_ || lag > cursor_) {
    throw Error(ErrorKind::insufficient_history,
                "lag " + std::to_string(lag) + " not buffered yet");
  }
  const long idx = cursor_ - lag;
  return buffer_[static_cast<std::size_t>(series) * capacity_ +
                 static_cast<std::size_t>(idx % capacity_)];
}

double predict_next(const StreamState& state, const LagModel& model, StepStats* stats) {
  if (!state.warmed(model.w)) {
    throw Error(ErrorKind::insufficient_history,
                "stream holds " + std::to_string(state.cursor()) + " points, window is " +
                    std::to_string(model.w));
  }
  double prediction = model.intercept;
  for (const auto& c : model.coeffs) {
    prediction += c.beta * state.lagged(c.series, c.lag);
  }
  if (stats) stats->coefficient_ops += static_cast<std::uint64_t>(model.coeffs.size());
  return prediction;
}

double t_statistic(double observed, double predicted, double sigma) {
  if (sigma <= 0.0) {
    throw Error(ErrorKind::invalid_scale, "sigma must be positive, got " +
                                              std::to_string(sigma));
  }
  return (observed - predicted) / sigma;
}

double smoothed_t_statistic(std::span<const double> samples, double predicted,
                            double sigma) {
  if (samples.empty()) {
    throw Error(ErrorKind::arity, "smoothed test needs at least one sample");
  }
  if (sigma <= 0.0) {
    throw Error(ErrorKind::invalid_scale, "sigma must be positive, got " +
                                              std::to_string(sigma));
  }
  double sum = 0.0;
  for (const double s : samples) sum += s;
  const double d = static_cast<double>(samples.size());
  return (sum / d - predicted) / (sigma / std::sqrt(d));
}

double p_value(double t, Sidedness sidedness) {
  switch (sidedness) {
    case Sidedness::two_sided:
      return std::erfc(std::abs(t) / M_SQRT2);  // 2 * Phi(-|t|)
    case Sidedness::one_sided_upper:
      return normal_cdf(-t);
    case Sidedness::one_sided_lower:
      return normal_cdf(t);
  }
  throw Error(ErrorKind::invalid_argument, "unknown sidedness");
}

std::vector<AnomalyVerdict> step(StreamState& state, const std::vector<LagModel>& models,
                                 const DetectorConfig& config,
                                 std::span<const double> new_point, StepStats* stats) {
  check_config(config);
  if (static_cast<int>(new_point.size()) != state.series_count() ||
      static_cast<int>(models.size()) != state.series_count()) {
    throw Error(ErrorKind::shape, "point/models arity does not match the stream");
  }

  const long now = state.cursor();  // time index of the incoming point
  const double sqrt_d = std::sqrt(static_cast<double>(config.d));
  std::vector<AnomalyVerdict> verdicts;
  verdicts.reserve(models.size());

  for (std::size_t i = 0; i < models.size(); ++i) {
    const LagModel& model = models[i];
    const double prediction = predict_next(state, model, stats);

    // Window of the last d observations of series i, ending at the new point.
    double sum = new_point[i];
    for (int back = 1; back < config.d; ++back) {
      sum += state.lagged(static_cast<int>(i), back);
    }
    if (stats) stats->smoothing_ops += static_cast<std::uint64_t>(config.d);
    const double mean = sum / static_cast<double>(config.d);

    const double t = (mean - prediction) / (model.sigma / sqrt_d);
    const double p = p_value(t, config.sidedness);
    verdicts.push_back(AnomalyVerdict{static_cast<int>(i), now, prediction, mean, t, p,
                                      p < config.p_value_threshold});
  }
  state.push(new_point);
  return verdicts;
}

StreamDetector::StreamDetector(std::vector<LagModel> models, DetectorConfig config)
    : models_(std::move(models)),
      config_(config),
      w_(models_.empty() ? 0 : models_.front().w),
      state_(std::max<int>(1, static_cast<int>(models_.size())),
             std::max(std::max(w_, config.d), 1)) {
  check_config(config_);
  if (models_.empty()) {
    throw Error(ErrorKind::empty_input, "detector needs at least one model");
  }
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const LagModel& model = models_[i];
    if (model.series_id != static_cast<int>(i)) {
      throw Error(ErrorKind::shape, "models must be ordered by series_id");
    }
    if (model.w != w_) {
      throw Error(ErrorKind::incompatible_design, "models disagree on the window size");
    }
    if (model.sigma <= 0.0) {
      throw Error(ErrorKind::invalid_scale,
                  "model " + std::to_string(i) + " has sigma <= 0");
    }
    for (const auto& c : model.coeffs) {
      if (c.series < 0 || c.series >= static_cast<int>(models_.size()) || c.lag < 1 ||
          c.lag > w_) {
        throw Error(ErrorKind::incompatible_design,
                    "model " + std::to_string(i) + " references an out-of-window lag");
      }
    }
  }
}

void StreamDetector::observe(std::span<const double> point) { state_.push(point); }

std::vector<AnomalyVerdict> StreamDetector::step(std::span<const double> point) {
  const int needed = warmup_needed(w_, config_.d);
  if (!state_.warmed(needed)) {
    throw Error(ErrorKind::insufficient_history,
                "detector needs " + std::to_string(needed) + " warm-up points, has " +
                    std::to_string(state_.cursor()));
  }
  return laganom::step(state_, models_, config_, point, &stats_);
}

std::vector<Incident> collapse_incidents(const std::vector<AnomalyVerdict>& verdicts) {
  // Verdicts arrive time-ordered per series; track one open run per series.
  std::vector<Incident> incidents;
  std::vector<long> open_start;
  std::vector<long> open_end;
  for (const auto& v : verdicts) {
    const std::size_t i = static_cast<std::size_t>(v.series_id);
    if (open_start.size() <= i) {
      open_start.resize(i + 1, -1);
      open_end.resize(i + 1, -1);
    }
    if (v.is_anomaly) {
      if (open_start[i] >= 0 && v.t == open_end[i] + 1) {
        open_end[i] = v.t;
      } else {
        if (open_start[i] >= 0) {
          incidents.push_back(Incident{v.series_id, open_start[i], open_end[i]});
        }
        open_start[i] = v.t;
        open_end[i] = v.t;
      }
    } else if (open_start[i] >= 0 && v.t > open_end[i]) {
      incidents.push_back(Incident{v.series_id, open_start[i], open_end[i]});
      open_start[i] = -1;
    }
  }
  for (std::size_t i = 0; i < open_start.size(); ++i) {
    if (open_start[i] >= 0) {
      incidents.push_back(Incident{static_cast<int>(i), open_start[i], open_end[i]});
    }
  }
  return incidents;
}

std::vector<AnomalyVerdict> replay_panel(const Panel& panel,
                                         const std::vector<LagModel>& models,
                                         const DetectorConfig& config, StepStats* stats) {
  StreamDetector detector(models, config);
  const int warm = warmup_needed(detector.window(), config.d);
  if (panel.h() <= warm) {
    throw Error(ErrorKind::insufficient_history,
                "panel has " + std::to_string(panel.h()) + " steps, warm-up needs " +
                    std::to_string(warm));
  }
  std::vector<AnomalyVerdict> verdicts;
  verdicts.reserve(static_cast<std::size_t>((panel.h() - warm) * panel.n()));
  std::vector<double> point(static_cast<std::size_t>(panel.n()));
  for (Eigen::Index t = 0; t < panel.h(); ++t) {
    for (Eigen::Index i = 0; i < panel.n(); ++i) point[static_cast<std::size_t>(i)] = panel.values(t, i);
    if (t < warm) {
      detector.observe(point);
      continue;
    }
    auto step_verdicts = detector.step(point);
    verdicts.insert(verdicts.end(), step_verdicts.begin(), step_verdicts.end());
  }
  if (stats) *stats = detector.stats();
  return verdicts;
}

void write_verdicts_jsonl(const std::vector<AnomalyVerdict>& verdicts,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const auto& v : verdicts) {
    nlohmann::json obj;
    obj["series_id"] = v.series_id;
    obj["t"] = v.t;
    obj["prediction"] = v.prediction;
    obj["observed"] = v.observed;
    obj["t_stat"] = v.t_stat;
    obj["p_value"] = v.p_value;
    obj["is_anomaly"] = v.is_anomaly;
    out << obj.dump() << '\n';
  }
}

Sidedness sidedness_from_string(const std::string& name) {
  if (name == "two-sided") return Sidedness::two_sided;
  if (name == "one-sided-upper") return Sidedness::one_sided_upper;
  if (name == "one-sided-lower") return Sidedness::one_sided_lower;
  throw Error(ErrorKind::invalid_argument, "unknown sidedness: " + name);
}

std::string to_string(Sidedness sidedness) {
  switch (sidedness) {
    case Sidedness::two_sided: return "two-sided";
    case Sidedness::one_sided_upper: return "one-sided-upper";
    case Sidedness::one_sided_lower: return "one-sided-lower";
  }
  return "two-sided";
}

}  // namespace laganom
