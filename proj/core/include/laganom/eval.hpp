#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "laganom/detector.hpp"
#include "laganom/errors.hpp"
#include "laganom/lagreg.hpp"
#include "laganom/panel.hpp"

namespace laganom {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
  long total() const { return tp + fp + fn + tn; }
};

/// 2tp / (2tp + fp + fn); undefined (error) when tp = fp = fn = 0.
double f1_score(const ConfusionCounts& counts);

/// Per-(series, timestep) cells over [t_begin, t_end) against panel labels.
ConfusionCounts count_confusion(const std::vector<AnomalyVerdict>& verdicts,
                                const Panel& panel, long t_begin, long t_end);

struct LatencyReport {
  double p50_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
  std::uint64_t op_count_per_step = 0;
  long measured_steps = 0;
  int warmup_steps = 0;
};

/// Per-step detection wall time over `repetitions` replays of the stream;
/// warm-up and I/O excluded. The op count is the instrumented
/// sum(m_i) + n*d work bound.
LatencyReport bench_detection(const std::vector<LagModel>& models, const Panel& stream,
                              const DetectorConfig& config, int repetitions = 1);

struct SplitSpec {
  // Fraction form: [0, train_end) trains, [test_start, h) tests with
  // train_end = test_start = floor(fraction * h). Explicit form overrides.
  double fraction = 0.7;
  std::optional<long> train_end;
  std::optional<long> test_start;
};

struct ExperimentConfig {
  std::optional<std::filesystem::path> panel_path;
  std::optional<GeneratorSpec> generator;
  int window = 10;
  double lambda = 1.0;
  double threshold = 1e-5;
  int d = 1;
  Sidedness sidedness = Sidedness::two_sided;
  std::vector<double> alpha_grid;  // empty -> default grid
  SplitSpec split;
  std::uint64_t seed = 0;
  int horizon = 1;
  int folds = 5;
  double tol = 1e-8;
  int max_iter = 100000;
  int bench_repetitions = 1;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// generate -> train -> detect -> calibrate -> score, one JSON report.
/// Deterministic except the latency timing fields.
nlohmann::json run_experiment(const ExperimentConfig& config);

}  // namespace laganom
