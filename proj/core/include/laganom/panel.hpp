#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "laganom/errors.hpp"

namespace laganom {

using LabelGrid = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Rectangular store of n equally-long time series, column per series.
/// Immutable after construction; timestamps are implicit indices 0..h-1.
struct Panel {
  Eigen::MatrixXd values;            // h x n
  std::optional<LabelGrid> labels;   // h x n, 0/1
  double sample_period_minutes = 1.0;

  Eigen::Index n() const { return values.cols(); }
  Eigen::Index h() const { return values.rows(); }
  bool has_labels() const { return labels.has_value(); }
  bool label(Eigen::Index t, Eigen::Index series) const {
    return labels && (*labels)(t, series) != 0;
  }
};

/// One planted ground-truth dependency: target <- weight * source(t - lag).
struct SupportEntry {
  int target = 0;
  int source = 0;
  int lag = 1;
  double weight = 0.0;
};

struct GeneratorSpec {
  int n = 1;
  long h = 100;
  int w_true = 1;
  std::vector<SupportEntry> support;
  double noise_sigma = 1.0;
  double anomaly_rate = 0.0;
  double anomaly_magnitude = 8.0;  // spike size in units of noise_sigma
  std::uint64_t seed = 0;
};

enum class PanelFormat { csv, jsonl };

/// Guessed from the extension; ".jsonl" -> jsonl, anything else -> csv.
PanelFormat format_for_path(const std::filesystem::path& path);

Panel load_panel(const std::filesystem::path& path, PanelFormat format);
Panel load_panel(const std::filesystem::path& path);
void store_panel(const Panel& panel, const std::filesystem::path& path,
                 PanelFormat format);
void store_panel(const Panel& panel, const std::filesystem::path& path);

/// Synthesizes a panel from planted lag dependencies plus Gaussian noise.
///
/// The first w_true steps are pure noise and never carry anomalies. Planted
/// spikes are additive and stay in the series, so they feed later lag terms.
/// Deterministic for a fixed spec (including seed).
Panel generate_panel(const GeneratorSpec& spec);

/// Contiguous sub-panel covering timesteps [t_begin, t_end).
Panel slice_panel(const Panel& panel, Eigen::Index t_begin, Eigen::Index t_end);

GeneratorSpec load_generator_spec(const std::filesystem::path& path);

}  // namespace laganom
