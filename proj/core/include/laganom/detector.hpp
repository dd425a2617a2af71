#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "laganom/errors.hpp"
#include "laganom/lagreg.hpp"

namespace laganom {

enum class Sidedness { two_sided, one_sided_upper, one_sided_lower };

struct DetectorConfig {
  double p_value_threshold = 1e-5;
  int d = 1;  // smoothing sample size
  Sidedness sidedness = Sidedness::two_sided;
  // The test uses the standard-normal approximation throughout: at the
  // intended h - m the Student-t tail agrees far beyond the 1e-5 threshold.
};

struct AnomalyVerdict {
  int series_id = 0;
  long t = 0;
  double prediction = 0.0;
  double observed = 0.0;  // s_now, or the d-sample mean when d > 1
  double t_stat = 0.0;
  double p_value = 1.0;
  bool is_anomaly = false;
};

/// Arithmetic performed inside one step: per-series coefficient touches plus
/// the smoothing-window sums. Total must equal sum(m_i) + n*d.
struct StepStats {
  std::uint64_t coefficient_ops = 0;
  std::uint64_t smoothing_ops = 0;
  std::uint64_t total() const { return coefficient_ops + smoothing_ops; }
};

/// Ring buffer of the most recent observations per series. Single writer;
/// reads are restricted to the lag window by construction.
class StreamState {
public:
  StreamState(int series_count, int capacity);

  int series_count() const { return n_; }
  int capacity() const { return capacity_; }
  long cursor() const { return cursor_; }
  bool warmed(int w) const { return cursor_ >= w; }

  void push(std::span<const double> point);
  /// Value of `series`, `lag` steps before the next (not yet pushed) point.
  double lagged(int series, int lag) const;

private:
  int n_;
  int capacity_;
  long cursor_ = 0;  // points seen so far
  std::vector<double> buffer_;  // series-major rings
};

/// Sparse one-step prediction: intercept + sum of coeffs over buffered lags.
/// Touches exactly m buffered values.
double predict_next(const StreamState& state, const LagModel& model,
                    StepStats* stats = nullptr);

double t_statistic(double observed, double predicted, double sigma);

/// (mean(samples) - predicted) / (sigma / sqrt(d)); d = samples.size().
double smoothed_t_statistic(std::span<const double> samples, double predicted,
                            double sigma);

double p_value(double t, Sidedness sidedness);

/// History a detector must buffer before its first step: the lag window for
/// prediction plus d-1 points for the smoothing window.
inline int warmup_needed(int w, int d) { return std::max(w, d - 1); }

/// Detects on the incoming point (one verdict per series), then advances the
/// buffer. Prediction uses history strictly before the new point; the
/// d-sample window ends at the new point.
std::vector<AnomalyVerdict> step(StreamState& state, const std::vector<LagModel>& models,
                                 const DetectorConfig& config,
                                 std::span<const double> new_point,
                                 StepStats* stats = nullptr);

/// Owns the stream state and validates models (shared window, sigma > 0,
/// one model per series) at construction.
class StreamDetector {
public:
  StreamDetector(std::vector<LagModel> models, DetectorConfig config);

  int window() const { return w_; }
  int series_count() const { return static_cast<int>(models_.size()); }
  bool warmed() const { return state_.warmed(warmup_needed(w_, config_.d)); }
  const StepStats& stats() const { return stats_; }
  void reset_stats() { stats_ = StepStats{}; }

  /// Buffers a point without testing it (warm-up).
  void observe(std::span<const double> point);
  std::vector<AnomalyVerdict> step(std::span<const double> point);

private:
  std::vector<LagModel> models_;
  DetectorConfig config_;
  int w_;
  StreamState state_;
  StepStats stats_;
};

struct Incident {
  int series_id = 0;
  long start = 0;
  long end = 0;  // inclusive
};

/// Optional post-filter: consecutive anomalous timestamps per series collapse
/// into one incident. Off by default everywhere.
std::vector<Incident> collapse_incidents(const std::vector<AnomalyVerdict>& verdicts);

/// Replays a panel: the first warmup_needed(w, d) points warm the buffer,
/// the rest are tested.
std::vector<AnomalyVerdict> replay_panel(const Panel& panel,
                                         const std::vector<LagModel>& models,
                                         const DetectorConfig& config,
                                         StepStats* stats = nullptr);

void write_verdicts_jsonl(const std::vector<AnomalyVerdict>& verdicts,
                          const std::filesystem::path& path);

Sidedness sidedness_from_string(const std::string& name);
std::string to_string(Sidedness sidedness);

}  // namespace laganom
