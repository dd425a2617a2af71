#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "laganom/panel.hpp"

using namespace laganom;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "laganom_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_SUITE_BEGIN("panel");

TEST_CASE("csv without label columns") {
  const auto path = temp_file("plain.csv");
  write_file(path, "series_0,series_1\n1.5,2\n-3,4.25\n5,6\n");
  const Panel panel = load_panel(path, PanelFormat::csv);
  CHECK(panel.n() == 2);
  CHECK(panel.h() == 3);
  CHECK_FALSE(panel.has_labels());
  CHECK(panel.values(0, 0) == 1.5);
  CHECK(panel.values(2, 1) == 6.0);
}

TEST_CASE("csv with label columns") {
  const auto path = temp_file("labeled.csv");
  write_file(path, "series_0,series_1,label_0,label_1\n1,2,0,1\n3,4,1,0\n");
  const Panel panel = load_panel(path);
  REQUIRE(panel.has_labels());
  CHECK(panel.label(0, 1));
  CHECK(panel.label(1, 0));
  CHECK_FALSE(panel.label(0, 0));
}

TEST_CASE("ragged row is named") {
  const auto path = temp_file("ragged.csv");
  write_file(path, "series_0,series_1,series_2\n1,2,3\n4,5\n");
  try {
    load_panel(path);
    FAIL("expected a structural error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ragged_row);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("NaN cell is a gap") {
  const auto path = temp_file("gap.csv");
  write_file(path, "series_0\n1\nNaN\n");
  CHECK_THROWS_WITH_AS(load_panel(path), doctest::Contains("row 2"), Error);
  try {
    load_panel(path);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::gap);
  }
}

TEST_CASE("non-numeric cell carries coordinates") {
  const auto path = temp_file("alpha.csv");
  write_file(path, "series_0,series_1\n1,2\n3,oops\n");
  try {
    load_panel(path);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("column 1") != std::string::npos);
  }
}

TEST_CASE("empty cell is a gap") {
  const auto path = temp_file("empty_cell.csv");
  write_file(path, "series_0,series_1\n1,\n");
  try {
    load_panel(path);
    FAIL("expected a gap error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::gap);
  }
}

TEST_CASE("jsonl round trip with labels") {
  GeneratorSpec spec;
  spec.n = 3;
  spec.h = 40;
  spec.w_true = 2;
  spec.anomaly_rate = 0.1;
  spec.seed = 7;
  const Panel panel = generate_panel(spec);

  const auto path = temp_file("roundtrip.jsonl");
  store_panel(panel, path, PanelFormat::jsonl);
  const Panel loaded = load_panel(path, PanelFormat::jsonl);
  CHECK(loaded.n() == panel.n());
  CHECK(loaded.h() == panel.h());
  CHECK(loaded.values == panel.values);
  REQUIRE(loaded.has_labels());
  CHECK(*loaded.labels == *panel.labels);
}

TEST_CASE("jsonl rejects out-of-order t") {
  const auto path = temp_file("bad_t.jsonl");
  write_file(path, "{\"t\":0,\"values\":[1]}\n{\"t\":2,\"values\":[2]}\n");
  CHECK_THROWS_AS(load_panel(path, PanelFormat::jsonl), Error);
}

TEST_CASE("csv store/load round-trips bit-exactly") {
  GeneratorSpec spec;
  spec.n = 2;
  spec.h = 200;
  spec.w_true = 3;
  spec.support = {{0, 1, 2, 0.4}, {1, 0, 1, -0.3}};
  spec.noise_sigma = 0.37;
  spec.anomaly_rate = 0.02;
  spec.seed = 99;
  const Panel panel = generate_panel(spec);

  const auto path = temp_file("bitexact.csv");
  store_panel(panel, path);
  const Panel loaded = load_panel(path);
  REQUIRE(loaded.h() == panel.h());
  for (Eigen::Index t = 0; t < panel.h(); ++t) {
    for (Eigen::Index i = 0; i < panel.n(); ++i) {
      CHECK(loaded.values(t, i) == panel.values(t, i));  // bit-exact
    }
  }
  CHECK(*loaded.labels == *panel.labels);
}

TEST_CASE("white-noise degenerate spec") {
  GeneratorSpec spec;
  spec.n = 2;
  spec.h = 500;
  spec.w_true = 4;
  spec.anomaly_rate = 0.0;
  spec.seed = 3;
  const Panel panel = generate_panel(spec);
  REQUIRE(panel.has_labels());
  CHECK(panel.labels->cast<int>().sum() == 0);
  // noise only: sample sd should be near noise_sigma
  const double sd = std::sqrt(panel.values.col(0).squaredNorm() / panel.h());
  CHECK(sd == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("paper-scale spec is accepted") {
  GeneratorSpec spec;
  spec.n = 4;
  spec.h = 43200;
  spec.w_true = 7200;
  spec.support = {{0, 1, 7200, 0.2}, {2, 3, 100, -0.4}};
  spec.anomaly_rate = 0.001;
  spec.seed = 11;
  const Panel panel = generate_panel(spec);
  CHECK(panel.n() == 4);
  CHECK(panel.h() == 43200);
}

TEST_CASE("fixed seed reproduces bit-identical panels") {
  GeneratorSpec spec;
  spec.n = 3;
  spec.h = 300;
  spec.w_true = 5;
  spec.support = {{0, 2, 3, 0.5}, {1, 0, 1, 0.2}};
  spec.anomaly_rate = 0.05;
  spec.seed = 1234;
  const Panel a = generate_panel(spec);
  const Panel b = generate_panel(spec);
  CHECK(a.values == b.values);
  CHECK(*a.labels == *b.labels);
}

TEST_CASE("no anomalies in the warm-up region") {
  GeneratorSpec spec;
  spec.n = 2;
  spec.h = 100;
  spec.w_true = 30;
  spec.anomaly_rate = 0.5;
  spec.seed = 5;
  const Panel panel = generate_panel(spec);
  for (int t = 0; t < spec.w_true; ++t) {
    for (int i = 0; i < spec.n; ++i) CHECK_FALSE(panel.label(t, i));
  }
  // and plenty after it at this rate
  CHECK(panel.labels->cast<int>().sum() > 20);
}

TEST_CASE("plant-recovery linkage at vanishing noise") {
  GeneratorSpec spec;
  spec.n = 2;
  spec.h = 400;
  spec.w_true = 3;
  spec.support = {{0, 0, 1, 0.6}, {0, 1, 2, -0.3}, {1, 1, 1, 0.5}};
  spec.noise_sigma = 1e-12;
  spec.anomaly_rate = 0.0;
  spec.seed = 17;
  const Panel panel = generate_panel(spec);

  for (long t = spec.w_true; t < spec.h; ++t) {
    for (int i = 0; i < spec.n; ++i) {
      double predicted = 0.0;
      for (const auto& e : spec.support) {
        if (e.target != i) continue;
        predicted += e.weight * panel.values(t - e.lag, e.source);
      }
      CHECK(std::abs(panel.values(t, i) - predicted) < 1e-9);
    }
  }
}

TEST_CASE("explosive support triggers the instability guard") {
  GeneratorSpec spec;
  spec.n = 1;
  spec.h = 5000;
  spec.w_true = 1;
  spec.support = {{0, 0, 1, 2.0}};
  spec.seed = 2;
  try {
    generate_panel(spec);
    FAIL("expected instability");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::instability);
    CHECK(std::string(e.what()).find("smaller") != std::string::npos);
  }
}

TEST_CASE("generator spec invariants") {
  GeneratorSpec spec;
  spec.n = 2;
  spec.h = 10;
  spec.w_true = 3;
  spec.support = {{0, 1, 4, 0.1}};  // lag beyond w_true
  CHECK_THROWS_AS(generate_panel(spec), Error);
  spec.support = {{0, 1, 2, 0.1}};
  spec.anomaly_rate = 1.0;
  CHECK_THROWS_AS(generate_panel(spec), Error);
  spec.anomaly_rate = 0.0;
  spec.noise_sigma = 0.0;
  CHECK_THROWS_AS(generate_panel(spec), Error);
}

TEST_CASE("round-trip property over generated panels") {
  std::mt19937 rng(131);
  for (int draw = 0; draw < 4; ++draw) {
    GeneratorSpec spec;
    spec.n = 1 + static_cast<int>(rng() % 5);
    spec.h = 20 + static_cast<long>(rng() % 300);
    spec.w_true = 1 + static_cast<int>(rng() % 4);
    spec.noise_sigma = std::pow(10.0, static_cast<double>(rng() % 9) - 4.0);
    spec.anomaly_rate = (rng() % 2) ? 0.05 : 0.0;
    spec.seed = rng();
    if (spec.n > 1) {
      spec.support.push_back(
          {1 % spec.n, 0, 1 + static_cast<int>(rng() % spec.w_true), 0.3});
    }
    const Panel panel = generate_panel(spec);
    for (const auto format : {PanelFormat::csv, PanelFormat::jsonl}) {
      const auto path = temp_file("prop_roundtrip");
      store_panel(panel, path, format);
      const Panel loaded = load_panel(path, format);
      REQUIRE(loaded.h() == panel.h());
      REQUIRE(loaded.n() == panel.n());
      CHECK(loaded.values == panel.values);
      CHECK(*loaded.labels == *panel.labels);
    }
  }
}

TEST_CASE("header-only csv is rejected") {
  const auto path = temp_file("header_only.csv");
  write_file(path, "series_0,series_1\n");
  try {
    load_panel(path);
    FAIL("expected empty input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::empty_input);
  }
}

TEST_CASE("slice keeps values and labels aligned") {
  GeneratorSpec spec;
  spec.n = 2;
  spec.h = 50;
  spec.w_true = 2;
  spec.anomaly_rate = 0.3;
  spec.seed = 23;
  const Panel panel = generate_panel(spec);
  const Panel sliced = slice_panel(panel, 10, 30);
  CHECK(sliced.h() == 20);
  for (Eigen::Index t = 0; t < 20; ++t) {
    CHECK(sliced.values(t, 1) == panel.values(10 + t, 1));
    CHECK(sliced.label(t, 0) == panel.label(10 + t, 0));
  }
  CHECK_THROWS_AS(slice_panel(panel, 30, 10), Error);
}

TEST_SUITE_END();
