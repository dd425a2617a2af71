#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "laganom/eval.hpp"

using namespace laganom;
namespace fs = std::filesystem;

namespace {

GeneratorSpec experiment_generator() {
  GeneratorSpec spec;
  spec.n = 3;
  spec.h = 3000;
  spec.w_true = 4;
  spec.support = {{0, 0, 1, 0.5}, {0, 1, 2, 0.3}, {1, 2, 1, 0.4},
                  {2, 0, 3, -0.35}, {1, 1, 1, 0.45}};
  spec.anomaly_rate = 0.01;
  spec.anomaly_magnitude = 10.0;
  spec.seed = 2024;
  return spec;
}

ExperimentConfig experiment_config() {
  ExperimentConfig config;
  config.generator = experiment_generator();
  config.window = 4;
  config.lambda = 1.0;
  config.threshold = 1e-5;
  config.d = 1;
  config.seed = 2024;
  return config;
}

void collect_key_paths(const nlohmann::json& node, const std::string& prefix,
                       std::vector<std::string>& out) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items()) {
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      out.push_back(path);
      collect_key_paths(value, path, out);
    }
  } else if (node.is_array() && !node.empty()) {
    collect_key_paths(node.front(), prefix + "[]", out);
  }
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("f1 arithmetic") {
  CHECK(f1_score(ConfusionCounts{10, 0, 0, 90}) == 1.0);
  CHECK(f1_score(ConfusionCounts{1, 1, 1, 0}) == 0.5);
  try {
    f1_score(ConfusionCounts{0, 0, 0, 50});
    FAIL("expected undefined F1");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::undefined_f1);
  }
}

TEST_CASE("f1 is invariant under joint permutation") {
  std::mt19937 rng(55);
  std::vector<std::pair<bool, bool>> cells;  // (predicted, actual)
  for (int i = 0; i < 500; ++i) cells.emplace_back(rng() % 3 == 0, rng() % 5 == 0);

  auto score = [](const std::vector<std::pair<bool, bool>>& data) {
    ConfusionCounts counts;
    for (const auto& [predicted, actual] : data) {
      if (predicted && actual) ++counts.tp;
      else if (predicted && !actual) ++counts.fp;
      else if (!predicted && actual) ++counts.fn;
      else ++counts.tn;
    }
    return f1_score(counts);
  };
  const double before = score(cells);
  std::shuffle(cells.begin(), cells.end(), rng);
  CHECK(score(cells) == before);
}

TEST_CASE("confusion counts cover every evaluated cell") {
  const Panel panel = generate_panel(experiment_generator());
  const auto models = train_all(panel, 4, 1.0);
  const auto verdicts = replay_panel(panel, models, DetectorConfig{1e-5, 1, Sidedness::two_sided});
  const ConfusionCounts counts = count_confusion(verdicts, panel, 4, panel.h());
  CHECK(counts.total() == (panel.h() - 4) * panel.n());
}

TEST_CASE("bench: op count is exact, quantiles ordered, warm-up excluded") {
  const Panel panel = generate_panel(experiment_generator());
  const auto models = train_all(panel, 4, 1.0);
  std::uint64_t total_m = 0;
  for (const auto& model : models) total_m += static_cast<std::uint64_t>(model.m);

  const int d = 3;
  const LatencyReport report =
      bench_detection(models, panel, DetectorConfig{1e-5, d, Sidedness::two_sided}, 2);
  CHECK(report.op_count_per_step == total_m + static_cast<std::uint64_t>(panel.n() * d));
  CHECK(report.p50_us <= report.p99_us);
  CHECK(report.p99_us <= report.max_us);
  CHECK(report.measured_steps == 2 * (panel.h() - 4));
  CHECK(report.warmup_steps == 4);
}

TEST_CASE("bench refuses a stream shorter than the window") {
  const Panel panel = generate_panel(experiment_generator());
  const auto models = train_all(panel, 4, 1.0);
  const Panel stub = slice_panel(panel, 0, 4);
  try {
    bench_detection(models, stub, DetectorConfig{});
    FAIL("expected insufficient history");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_history);
  }
}

TEST_CASE("experiment config parsing") {
  const fs::path dir = fs::temp_directory_path() / "laganom_tests";
  fs::create_directories(dir);
  const fs::path path = dir / "config.json";
  std::ofstream(path) << R"({
    "panel": {"n": 2, "h": 400, "w_true": 3, "anomaly_rate": 0.02, "seed": 5,
              "support": [{"target": 0, "source": 1, "lag": 2, "weight": 0.4}]},
    "window": 3,
    "lambda": 0.5,
    "threshold": 1e-4,
    "d": 2,
    "split": {"train_end": 250, "test_start": 260},
    "seed": 5
  })";
  const ExperimentConfig config = load_experiment_config(path);
  CHECK(config.window == 3);
  CHECK(config.lambda == 0.5);
  CHECK(config.d == 2);
  REQUIRE(config.generator.has_value());
  CHECK(config.generator->support.size() == 1);
  REQUIRE(config.split.train_end.has_value());
  CHECK(*config.split.test_start == 260);
}

TEST_CASE("overlapping train/test split is rejected") {
  ExperimentConfig config = experiment_config();
  config.split.train_end = 2000;
  config.split.test_start = 1500;
  try {
    run_experiment(config);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(std::string(e.what()).find("overlap") != std::string::npos);
  }
}

TEST_CASE("experiment report is deterministic minus timing fields") {
  const ExperimentConfig config = experiment_config();
  nlohmann::json a = run_experiment(config);
  nlohmann::json b = run_experiment(config);
  for (auto* report : {&a, &b}) {
    (*report)["latency"].erase("p50_us");
    (*report)["latency"].erase("p99_us");
    (*report)["latency"].erase("max_us");
  }
  CHECK(a.dump() == b.dump());

  // the pipeline stages all ran
  CHECK(a.contains("detection"));
  CHECK(a["detection"]["f1"].get<double>() > 0.0);
  CHECK(a.contains("gaussian"));
  CHECK(a.contains("oracle"));
  CHECK(a["bayes"].size() == 3);
  CHECK(a["latency"]["op_count_per_step"].get<std::uint64_t>() > 0);
}

TEST_CASE("report schema matches the golden file") {
  const nlohmann::json report = run_experiment(experiment_config());
  std::vector<std::string> paths;
  collect_key_paths(report, "", paths);
  std::sort(paths.begin(), paths.end());

  const fs::path golden = fs::path(TEST_DATA_DIR) / "report_schema.txt";
  REQUIRE(fs::exists(golden));
  std::ifstream in(golden);
  std::vector<std::string> expected;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) expected.push_back(line);
  }
  CHECK(paths == expected);
}

TEST_SUITE_END();
