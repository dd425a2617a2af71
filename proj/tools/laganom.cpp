// laganom: train sparse distributed-lag models over time-series panels and
// detect anomalies on streams, plus the supporting diagnostics, baselines,
// calibration, and benchmarking verbs.

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>

#include "laganom/baselines.hpp"
#include "laganom/bayes.hpp"
#include "laganom/detector.hpp"
#include "laganom/diagnostics.hpp"
#include "laganom/eval.hpp"
#include "laganom/lagreg.hpp"
#include "laganom/panel.hpp"

namespace {

using namespace laganom;

std::vector<int> parse_series_list(const std::string& text) {
  std::vector<int> ids;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    for (int i = lo; i <= hi; ++i) ids.push_back(i);
    return ids;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string token =
        text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!token.empty()) ids.push_back(std::stoi(token));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return ids;
}

nlohmann::json verdict_json(const AnomalyVerdict& v) {
  return {{"series_id", v.series_id}, {"t", v.t},
          {"prediction", v.prediction}, {"observed", v.observed},
          {"t_stat", v.t_stat},         {"p_value", v.p_value},
          {"is_anomaly", v.is_anomaly}};
}

int cmd_generate(const std::string& spec_path, const std::string& out_path) {
  const GeneratorSpec spec = load_generator_spec(spec_path);
  const Panel panel = generate_panel(spec);
  store_panel(panel, out_path);
  std::cerr << "wrote " << panel.n() << " series x " << panel.h() << " steps to "
            << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& panel_path, int window, double lambda,
              const std::string& out_dir, double tol, int max_iter) {
  const Panel panel = load_panel(panel_path);
  const auto models = train_all(panel, window, lambda, tol, max_iter);
  save_models(models, out_dir);
  for (const auto& model : models) {
    std::cerr << "series " << model.series_id << ": m = " << model.m
              << ", sigma = " << model.sigma << "\n";
  }
  return 0;
}

int cmd_detect(const std::string& panel_path, const std::string& models_dir,
               double threshold, int d, const std::string& sidedness,
               const std::string& out_path, bool dedup) {
  const Panel panel = load_panel(panel_path);
  const auto models = load_models(models_dir);
  DetectorConfig config;
  config.p_value_threshold = threshold;
  config.d = d;
  config.sidedness = sidedness_from_string(sidedness);
  const auto verdicts = replay_panel(panel, models, config);
  if (dedup) {
    std::ofstream out(out_path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + out_path);
    for (const auto& incident : collapse_incidents(verdicts)) {
      out << nlohmann::json{{"series_id", incident.series_id},
                            {"start", incident.start},
                            {"end", incident.end}}
                 .dump()
          << '\n';
    }
  } else {
    write_verdicts_jsonl(verdicts, out_path);
  }
  long alerts = 0;
  for (const auto& v : verdicts) alerts += v.is_anomaly;
  std::cerr << verdicts.size() << " verdicts, " << alerts << " alerts -> " << out_path
            << "\n";
  return 0;
}

int cmd_stream(const std::string& models_dir, double threshold, int d,
               const std::string& sidedness) {
  const auto models = load_models(models_dir);
  DetectorConfig config;
  config.p_value_threshold = threshold;
  config.d = d;
  config.sidedness = sidedness_from_string(sidedness);
  StreamDetector detector(models, config);

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    const nlohmann::json obj = nlohmann::json::parse(line);
    const auto values = obj.at("values").get<std::vector<double>>();
    if (detector.warmed()) {
      for (const auto& v : detector.step(values)) {
        std::cout << verdict_json(v).dump() << '\n';
      }
      std::cout.flush();
    } else {
      detector.observe(values);
    }
  }
  return 0;
}

int cmd_mi(const std::string& panel_path, const std::string& series,
           const std::string& out_path, int resolution) {
  const Panel panel = load_panel(panel_path);
  const auto ids = parse_series_list(series);
  const MiGrid grid = mi_grid(panel, ids, resolution);
  store_mi_csv(grid, out_path);
  for (const auto& failure : grid.missing) {
    std::cerr << "pair (" << failure.row << ", " << failure.col
              << ") missing: " << failure.reason << "\n";
  }
  std::cerr << "wrote " << ids.size() << "x" << ids.size() << " MI grid to " << out_path
            << "\n";
  return 0;
}

int cmd_bayes_fit(const std::string& panel_path, const std::string& model_path,
                  const std::string& out_path, int horizon, int folds) {
  const Panel panel = load_panel(panel_path);
  const LagModel model = load_model(model_path);
  const LagDesign design = LagDesign::build(panel, model.w);
  const BayesCalibration calibration =
      fit_bayes(panel, design, model, horizon, default_alpha_grid(), folds);
  save_calibration(calibration, out_path);
  std::cerr << "series " << calibration.series_id << ": alpha = " << calibration.alpha
            << ", cv F1 = " << calibration.cv_f1 << " -> " << out_path << "\n";
  return 0;
}

int cmd_baseline_gaussian(const std::string& panel_path, const std::string& out_path,
                          double threshold, bool auto_threshold) {
  const Panel panel = load_panel(panel_path);
  const GaussianModel model = fit_gaussian(panel);
  if (model.underdetermined) {
    std::cerr << "warning: h <= n, the covariance ridge dominates the fit\n";
  }
  const double cutoff =
      auto_threshold ? choose_gaussian_threshold(model, panel) : threshold;
  const auto verdicts = gaussian_detect_panel(model, panel, cutoff);
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + out_path);
  long alerts = 0;
  for (const auto& v : verdicts) {
    alerts += v.alert;
    out << nlohmann::json{{"t", v.t},
                          {"attributed_series", v.attributed_series},
                          {"log_density", v.log_density},
                          {"alert", v.alert}}
               .dump()
        << '\n';
  }
  std::cerr << alerts << " alerts at log-density threshold " << cutoff << " -> "
            << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& panel_path, const std::string& models_dir, int d,
              int repetitions, const std::string& out_path) {
  const Panel panel = load_panel(panel_path);
  const auto models = load_models(models_dir);
  DetectorConfig config;
  config.d = d;
  const LatencyReport report = bench_detection(models, panel, config, repetitions);
  const nlohmann::json obj = {{"p50_us", report.p50_us},
                              {"p99_us", report.p99_us},
                              {"max_us", report.max_us},
                              {"op_count_per_step", report.op_count_per_step},
                              {"measured_steps", report.measured_steps},
                              {"warmup_steps", report.warmup_steps}};
  if (out_path.empty()) {
    std::cout << obj.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    out << obj.dump(2) << "\n";
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_path) {
  const ExperimentConfig config = load_experiment_config(config_path);
  const nlohmann::json report = run_experiment(config);
  if (out_path.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + out_path);
    out << report.dump(2) << "\n";
    std::cerr << "report -> " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse distributed-lag anomaly detection over time-series panels"};
  app.require_subcommand(1);

  std::string spec_path, panel_path, out_path, models_dir, model_path, series,
      sidedness = "two-sided", config_path;
  int window = 10, d = 1, resolution = 128, horizon = 1, folds = 5,
      max_iter = 100000, repetitions = 1;
  double lambda = 1.0, threshold = 1e-5, tol = 1e-8, gaussian_threshold = 0.0;
  bool dedup = false;

  auto* generate = app.add_subcommand("generate", "synthesize a labeled panel");
  generate->add_option("--spec", spec_path, "generator spec JSON")->required();
  generate->add_option("--out", out_path, "panel output (.csv or .jsonl)")->required();

  auto* train = app.add_subcommand("train", "fit one sparse lag model per series");
  train->add_option("--panel", panel_path)->required();
  train->add_option("--window", window, "lag window w")->required();
  train->add_option("--lambda", lambda, "L1 penalty")->required();
  train->add_option("--out", models_dir, "model output directory")->required();
  train->add_option("--tol", tol, "KKT tolerance");
  train->add_option("--max-iter", max_iter, "max coordinate sweeps");

  auto* detect = app.add_subcommand("detect", "batch replay a panel through the detector");
  detect->add_option("--panel", panel_path)->required();
  detect->add_option("--models", models_dir)->required();
  detect->add_option("--threshold", threshold, "p-value threshold");
  detect->add_option("--d", d, "smoothing sample size");
  detect->add_option("--sidedness", sidedness, "two-sided|one-sided-upper|one-sided-lower");
  detect->add_option("--out", out_path, "verdict JSONL output")->required();
  detect->add_flag("--dedup", dedup, "emit collapsed incidents instead of verdicts");

  auto* stream = app.add_subcommand("stream", "JSONL points on stdin, verdicts on stdout");
  stream->add_option("--models", models_dir)->required();
  stream->add_option("--threshold", threshold);
  stream->add_option("--d", d);
  stream->add_option("--sidedness", sidedness);

  auto* mi = app.add_subcommand("mi", "pairwise mutual-information grid");
  mi->add_option("--panel", panel_path)->required();
  mi->add_option("--series", series, "ids: 0..18 or 0,3,7")->required();
  mi->add_option("--out", out_path, "grid CSV output")->required();
  mi->add_option("--resolution", resolution, "quadrature points per axis");

  auto* bayes = app.add_subcommand("bayes-fit", "residual calibration for one series");
  bayes->add_option("--panel", panel_path)->required();
  bayes->add_option("--model", model_path, "trained model JSON")->required();
  bayes->add_option("--out", out_path, "calibration JSON output")->required();
  bayes->add_option("--horizon", horizon, "label at t+horizon (0 or 1)");
  bayes->add_option("--folds", folds, "cross-validation folds");

  auto* gaussian = app.add_subcommand("baseline-gaussian", "multivariate-Gaussian detector");
  gaussian->add_option("--panel", panel_path)->required();
  gaussian->add_option("--out", out_path, "verdict JSONL output")->required();
  auto* threshold_option =
      gaussian->add_option("--threshold", gaussian_threshold,
                           "log-density cutoff; omit to tune on the panel labels");

  auto* bench = app.add_subcommand("bench", "per-step detection latency");
  bench->add_option("--panel", panel_path)->required();
  bench->add_option("--models", models_dir)->required();
  bench->add_option("--d", d);
  bench->add_option("--repetitions", repetitions);
  bench->add_option("--out", out_path, "report JSON (default: stdout)");

  auto* run = app.add_subcommand("run", "orchestrate generate/train/detect/calibrate/score");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--out", out_path, "report JSON (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(spec_path, out_path);
    if (train->parsed()) return cmd_train(panel_path, window, lambda, models_dir, tol, max_iter);
    if (detect->parsed())
      return cmd_detect(panel_path, models_dir, threshold, d, sidedness, out_path, dedup);
    if (stream->parsed()) return cmd_stream(models_dir, threshold, d, sidedness);
    if (mi->parsed()) return cmd_mi(panel_path, series, out_path, resolution);
    if (bayes->parsed()) return cmd_bayes_fit(panel_path, model_path, out_path, horizon, folds);
    if (gaussian->parsed())
      return cmd_baseline_gaussian(panel_path, out_path, gaussian_threshold,
                                   threshold_option->count() == 0);
    if (bench->parsed()) return cmd_bench(panel_path, models_dir, d, repetitions, out_path);
    if (run->parsed()) return cmd_run(config_path, out_path);
  } catch (const laganom::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
