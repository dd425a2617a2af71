#include "laganom/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "laganom/baselines.hpp"
#include "laganom/bayes.hpp"

namespace laganom {
namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::min(sorted.size() - 1, rank == 0 ? 0 : rank - 1)];
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage ") + stage + ": " + e.what());
  }
}

struct ResolvedSplit {
  long train_end = 0;
  long test_start = 0;
};

ResolvedSplit resolve_split(const SplitSpec& split, long h, int window) {
  ResolvedSplit out;
  if (split.train_end || split.test_start) {
    if (!split.train_end || !split.test_start) {
      throw Error(ErrorKind::validation,
                  "explicit split needs both train_end and test_start");
    }
    out.train_end = *split.train_end;
    out.test_start = *split.test_start;
  } else {
    if (!(split.fraction > 0.0 && split.fraction < 1.0)) {
      throw Error(ErrorKind::validation, "split fraction must lie in (0, 1)");
    }
    out.train_end = static_cast<long>(split.fraction * static_cast<double>(h));
    out.test_start = out.train_end;
  }
  if (out.test_start < out.train_end) {
    throw Error(ErrorKind::validation, "train period overlaps the test period");
  }
  if (out.train_end <= window) {
    throw Error(ErrorKind::validation, "train period shorter than the window");
  }
  if (out.test_start < window || out.test_start >= h) {
    throw Error(ErrorKind::validation, "test period is empty or starts inside the warm-up");
  }
  if (h - out.test_start <= window) {
    throw Error(ErrorKind::validation, "test period shorter than the window");
  }
  return out;
}

}  // namespace

double f1_score(const ConfusionCounts& counts) {
  if (counts.tp + counts.fp + counts.fn == 0) {
    throw Error(ErrorKind::undefined_f1, "tp = fp = fn = 0 leaves F1 undefined");
  }
  return 2.0 * static_cast<double>(counts.tp) /
         static_cast<double>(2 * counts.tp + counts.fp + counts.fn);
}

ConfusionCounts count_confusion(const std::vector<AnomalyVerdict>& verdicts,
                                const Panel& panel, long t_begin, long t_end) {
  if (!panel.has_labels()) {
    throw Error(ErrorKind::missing_labels, "confusion counting needs a labeled panel");
  }
  ConfusionCounts counts;
  for (const auto& v : verdicts) {
    if (v.t < t_begin || v.t >= t_end) continue;
    const bool actual = panel.label(v.t, v.series_id);
    if (v.is_anomaly && actual) ++counts.tp;
    else if (v.is_anomaly && !actual) ++counts.fp;
    else if (!v.is_anomaly && actual) ++counts.fn;
    else ++counts.tn;
  }
  return counts;
}

LatencyReport bench_detection(const std::vector<LagModel>& models, const Panel& stream,
                              const DetectorConfig& config, int repetitions) {
  if (repetitions < 1) {
    throw Error(ErrorKind::invalid_argument, "repetitions must be >= 1");
  }
  const int warm = warmup_needed(models.empty() ? 0 : models.front().w, config.d);
  if (stream.h() <= warm) {
    throw Error(ErrorKind::insufficient_history,
                "stream has " + std::to_string(stream.h()) +
                    " points; warm-up needs more than " + std::to_string(warm));
  }

  const long steps = stream.h() - warm;
  std::vector<double> durations_us;
  durations_us.reserve(static_cast<std::size_t>(steps) * repetitions);
  std::vector<double> point(static_cast<std::size_t>(stream.n()));
  std::uint64_t total_ops = 0;

  using clock = std::chrono::steady_clock;
  for (int rep = 0; rep < repetitions; ++rep) {
    StreamDetector detector(models, config);
    for (Eigen::Index t = 0; t < stream.h(); ++t) {
      for (Eigen::Index i = 0; i < stream.n(); ++i) point[static_cast<std::size_t>(i)] = stream.values(t, i);
      if (t < warm) {
        detector.observe(point);
        continue;
      }
      const auto begin = clock::now();
      const auto verdicts = detector.step(point);
      const auto end = clock::now();
      durations_us.push_back(
          std::chrono::duration<double, std::micro>(end - begin).count());
      (void)verdicts;
    }
    total_ops += detector.stats().total();
  }

  std::sort(durations_us.begin(), durations_us.end());
  LatencyReport report;
  report.p50_us = quantile_sorted(durations_us, 0.50);
  report.p99_us = quantile_sorted(durations_us, 0.99);
  report.max_us = durations_us.back();
  report.measured_steps = static_cast<long>(durations_us.size());
  report.warmup_steps = warm;
  report.op_count_per_step = total_ops / static_cast<std::uint64_t>(durations_us.size());
  return report;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }

  ExperimentConfig config;
  if (!obj.contains("panel")) {
    throw Error(ErrorKind::validation, "config needs a panel path or generator object");
  }
  config.seed = obj.value("seed", std::uint64_t{0});
  if (obj["panel"].is_string()) {
    config.panel_path = std::filesystem::path(obj["panel"].get<std::string>());
  } else if (obj["panel"].is_object()) {
    const auto& g = obj["panel"];
    GeneratorSpec spec;
    spec.n = g.at("n").get<int>();
    spec.h = g.at("h").get<long>();
    spec.w_true = g.at("w_true").get<int>();
    spec.noise_sigma = g.value("noise_sigma", 1.0);
    spec.anomaly_rate = g.value("anomaly_rate", 0.0);
    spec.anomaly_magnitude = g.value("anomaly_magnitude", 8.0);
    spec.seed = g.value("seed", config.seed);
    if (g.contains("support")) {
      for (const auto& e : g["support"]) {
        spec.support.push_back(SupportEntry{e.at("target").get<int>(),
                                            e.at("source").get<int>(),
                                            e.at("lag").get<int>(),
                                            e.at("weight").get<double>()});
      }
    }
    config.generator = std::move(spec);
  } else {
    throw Error(ErrorKind::validation, "panel must be a path or a generator object");
  }

  config.window = obj.at("window").get<int>();
  config.lambda = obj.at("lambda").get<double>();
  config.threshold = obj.value("threshold", 1e-5);
  config.d = obj.value("d", 1);
  if (obj.contains("sidedness")) {
    config.sidedness = sidedness_from_string(obj["sidedness"].get<std::string>());
  }
  if (obj.contains("alpha_grid")) {
    config.alpha_grid = obj["alpha_grid"].get<std::vector<double>>();
  }
  if (obj.contains("split")) {
    if (obj["split"].is_number()) {
      config.split.fraction = obj["split"].get<double>();
    } else {
      config.split.train_end = obj["split"].at("train_end").get<long>();
      config.split.test_start = obj["split"].at("test_start").get<long>();
    }
  }
  config.horizon = obj.value("horizon", 1);
  config.folds = obj.value("folds", 5);
  config.tol = obj.value("tol", 1e-8);
  config.max_iter = obj.value("max_iter", 100000);
  config.bench_repetitions = obj.value("bench_repetitions", 1);
  return config;
}

nlohmann::json run_experiment(const ExperimentConfig& config) {
  const Panel panel = run_stage("panel", [&] {
    if (config.generator) return generate_panel(*config.generator);
    if (config.panel_path) return load_panel(*config.panel_path);
    throw Error(ErrorKind::validation, "config names neither a panel nor a generator");
  });
  if (!panel.has_labels()) {
    throw Error(ErrorKind::missing_labels,
                "stage panel: experiments need a labeled panel");
  }

  const ResolvedSplit split = run_stage(
      "split", [&] { return resolve_split(config.split, panel.h(), config.window); });

  const Panel train_panel = slice_panel(panel, 0, split.train_end);
  const std::vector<LagModel> models = run_stage("train", [&] {
    return train_all(train_panel, config.window, config.lambda, config.tol,
                     config.max_iter);
  });

  DetectorConfig detector_config;
  detector_config.p_value_threshold = config.threshold;
  detector_config.d = config.d;
  detector_config.sidedness = config.sidedness;

  const long replay_begin = split.test_start - config.window;
  const Panel test_stream = slice_panel(panel, replay_begin, panel.h());

  const ConfusionCounts detection_counts = run_stage("detect", [&] {
    std::vector<AnomalyVerdict> verdicts = replay_panel(test_stream, models, detector_config);
    for (auto& v : verdicts) v.t += replay_begin;
    return count_confusion(verdicts, panel, split.test_start, panel.h());
  });

  const auto [gaussian_f1, gaussian_threshold] = run_stage("baseline", [&] {
    const GaussianModel gaussian = fit_gaussian(train_panel);
    const double threshold = choose_gaussian_threshold(gaussian, train_panel);
    const Panel test_panel = slice_panel(panel, split.test_start, panel.h());
    const auto verdicts =
        gaussian_detect_panel(gaussian, test_panel, threshold, split.test_start);
    ConfusionCounts counts;
    for (const auto& v : verdicts) {
      for (Eigen::Index i = 0; i < panel.n(); ++i) {
        const bool predicted = v.alert && v.attributed_series == static_cast<int>(i);
        const bool actual = panel.label(v.t, i);
        if (predicted && actual) ++counts.tp;
        else if (predicted && !actual) ++counts.fp;
        else if (!predicted && actual) ++counts.fn;
        else ++counts.tn;
      }
    }
    return std::make_pair(f1_score(counts), threshold);
  });

  const double oracle = run_stage("oracle", [&] {
    PipelineConfig pipeline;
    pipeline.window = config.window;
    pipeline.lambda = config.lambda;
    pipeline.p_value_threshold = config.threshold;
    pipeline.d = config.d;
    pipeline.tol = config.tol;
    pipeline.max_iter = config.max_iter;
    return oracle_f1(slice_panel(panel, split.test_start, panel.h()), pipeline);
  });

  const std::vector<double> alpha_grid =
      config.alpha_grid.empty() ? default_alpha_grid() : config.alpha_grid;
  const nlohmann::json bayes_report = run_stage("calibrate", [&] {
    const LagDesign design = LagDesign::build(train_panel, config.window);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& model : models) {
      const BayesCalibration calibration = fit_bayes(
          train_panel, design, model, config.horizon, alpha_grid, config.folds);
      out.push_back({{"series_id", calibration.series_id},
                     {"alpha", calibration.alpha},
                     {"cv_f1", calibration.cv_f1},
                     {"active_variables", calibration.c.size()},
                     {"logit_rank_deficient", calibration.logit_rank_deficient}});
    }
    return out;
  });

  const LatencyReport latency = run_stage("bench", [&] {
    return bench_detection(models, test_stream, detector_config,
                           config.bench_repetitions);
  });

  long anomaly_cells = 0;
  for (Eigen::Index t = 0; t < panel.h(); ++t)
    for (Eigen::Index i = 0; i < panel.n(); ++i) anomaly_cells += panel.label(t, i) ? 1 : 0;

  nlohmann::json models_summary = nlohmann::json::array();
  for (const auto& model : models) {
    models_summary.push_back(
        {{"series_id", model.series_id}, {"m", model.m}, {"sigma", model.sigma}});
  }

  nlohmann::json report;
  report["config"] = {{"window", config.window},
                      {"lambda", config.lambda},
                      {"threshold", config.threshold},
                      {"d", config.d},
                      {"sidedness", to_string(config.sidedness)},
                      {"alpha_grid_size", alpha_grid.size()},
                      {"seed", config.seed},
                      {"horizon", config.horizon},
                      {"folds", config.folds},
                      {"tol", config.tol},
                      {"max_iter", config.max_iter}};
  report["panel"] = {{"n", panel.n()}, {"h", panel.h()}, {"anomaly_cells", anomaly_cells}};
  report["split"] = {{"train_end", split.train_end}, {"test_start", split.test_start}};
  report["models"] = models_summary;
  report["detection"] = {{"f1", f1_score(detection_counts)},
                         {"tp", detection_counts.tp},
                         {"fp", detection_counts.fp},
                         {"fn", detection_counts.fn},
                         {"tn", detection_counts.tn}};
  report["gaussian"] = {{"f1", gaussian_f1}, {"threshold", gaussian_threshold}};
  report["oracle"] = {{"f1", oracle}};
  report["bayes"] = bayes_report;
  report["latency"] = {{"p50_us", latency.p50_us},
                       {"p99_us", latency.p99_us},
                       {"max_us", latency.max_us},
                       {"op_count_per_step", latency.op_count_per_step},
                       {"measured_steps", latency.measured_steps},
                       {"warmup_steps", latency.warmup_steps}};
  return report;
}

}  // namespace laganom
