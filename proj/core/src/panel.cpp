#include "laganom/panel.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace laganom {
namespace {

constexpr double kOverflowGuard = 1e12;

/// Deterministic standard-normal sampler. Box-Muller over explicit 64-bit
/// draws, so the stream does not depend on the standard library's
/// distribution implementation.
class NormalSampler {
public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double uniform() {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

private:
  std::mt19937_64 rng_;
};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_cell(std::string_view cell, long row, long col) {
  cell = trim(cell);
  if (cell.empty()) {
    throw Error(ErrorKind::gap, "missing value at row " + std::to_string(row) +
                                    ", column " + std::to_string(col));
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw Error(ErrorKind::parse, "non-numeric cell '" + std::string(cell) +
                                      "' at row " + std::to_string(row) +
                                      ", column " + std::to_string(col));
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::gap, "non-finite value at row " + std::to_string(row) +
                                    ", column " + std::to_string(col));
  }
  return value;
}

std::uint8_t parse_label(std::string_view cell, long row, long col) {
  cell = trim(cell);
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw Error(ErrorKind::parse, "label cell must be 0 or 1, got '" + std::string(cell) +
                                    "' at row " + std::to_string(row) + ", column " +
                                    std::to_string(col));
}

Panel load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());

  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw Error(ErrorKind::ragged_row, "empty file: " + path.string());
  }
  const auto header = split_fields(header_line);

  // Header is series_0..series_{n-1}[,label_0..label_{n-1}].
  Eigen::Index n = 0;
  while (n < static_cast<Eigen::Index>(header.size()) &&
         trim(header[static_cast<std::size_t>(n)]) == "series_" + std::to_string(n)) {
    ++n;
  }
  if (n == 0) {
    throw Error(ErrorKind::ragged_row,
                "header must start with series_0: " + path.string());
  }
  bool with_labels = false;
  if (static_cast<Eigen::Index>(header.size()) == 2 * n) {
    with_labels = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (trim(header[static_cast<std::size_t>(n + i)]) != "label_" + std::to_string(i)) {
        throw Error(ErrorKind::ragged_row, "malformed label header in " + path.string());
      }
    }
  } else if (static_cast<Eigen::Index>(header.size()) != n) {
    throw Error(ErrorKind::ragged_row, "malformed header in " + path.string());
  }

  std::vector<double> values;
  std::vector<std::uint8_t> labels;
  long row = 0;
  std::string line;
  const std::size_t expected = static_cast<std::size_t>(with_labels ? 2 * n : n);
  while (std::getline(in, line)) {
    if (trim(line).empty() && in.peek() == EOF) break;  // trailing newline
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != expected) {
      throw Error(ErrorKind::ragged_row,
                  "ragged row " + std::to_string(row) + ": expected " +
                      std::to_string(expected) + " fields, got " +
                      std::to_string(fields.size()));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      values.push_back(parse_cell(fields[static_cast<std::size_t>(i)], row, i));
    }
    if (with_labels) {
      for (Eigen::Index i = 0; i < n; ++i) {
        labels.push_back(parse_label(fields[static_cast<std::size_t>(n + i)], row, n + i));
      }
    }
  }

  if (values.empty()) {
    throw Error(ErrorKind::empty_input, "no data rows in " + path.string());
  }
  const Eigen::Index h = static_cast<Eigen::Index>(values.size()) / n;
  Panel panel;
  panel.values.resize(h, n);
  for (Eigen::Index t = 0; t < h; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      panel.values(t, i) = values[static_cast<std::size_t>(t * n + i)];
  if (with_labels) {
    LabelGrid grid(h, n);
    for (Eigen::Index t = 0; t < h; ++t)
      for (Eigen::Index i = 0; i < n; ++i)
        grid(t, i) = labels[static_cast<std::size_t>(t * n + i)];
    panel.labels = std::move(grid);
  }
  return panel;
}

Panel load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());

  std::vector<double> values;
  std::vector<std::uint8_t> labels;
  Eigen::Index n = -1;
  bool with_labels = false;
  long row = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse, "row " + std::to_string(row + 1) + ": " + e.what());
    }
    if (!obj.contains("t") || !obj.contains("values") || !obj["values"].is_array()) {
      throw Error(ErrorKind::ragged_row,
                  "row " + std::to_string(row + 1) + ": object needs t and values");
    }
    if (obj["t"].get<long>() != row) {
      throw Error(ErrorKind::ragged_row, "row " + std::to_string(row + 1) +
                                             ": t must equal the line index " +
                                             std::to_string(row));
    }
    const auto& vals = obj["values"];
    if (n < 0) {
      n = static_cast<Eigen::Index>(vals.size());
      with_labels = obj.contains("labels");
      if (n == 0) throw Error(ErrorKind::empty_input, "values array is empty");
    }
    if (static_cast<Eigen::Index>(vals.size()) != n) {
      throw Error(ErrorKind::ragged_row,
                  "ragged row " + std::to_string(row + 1) + ": expected " +
                      std::to_string(n) + " values");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& v = vals[static_cast<std::size_t>(i)];
      if (!v.is_number()) {
        throw Error(ErrorKind::gap, "missing value at row " + std::to_string(row + 1) +
                                        ", series " + std::to_string(i));
      }
      const double x = v.get<double>();
      if (!std::isfinite(x)) {
        throw Error(ErrorKind::gap, "non-finite value at row " + std::to_string(row + 1) +
                                        ", series " + std::to_string(i));
      }
      values.push_back(x);
    }
    if (with_labels != obj.contains("labels")) {
      throw Error(ErrorKind::ragged_row,
                  "row " + std::to_string(row + 1) +
                      ": labels must be present on all rows or none");
    }
    if (with_labels) {
      const auto& labs = obj["labels"];
      if (!labs.is_array() || static_cast<Eigen::Index>(labs.size()) != n) {
        throw Error(ErrorKind::ragged_row,
                    "row " + std::to_string(row + 1) + ": labels must hold " +
                        std::to_string(n) + " booleans");
      }
      for (const auto& b : labs) labels.push_back(b.get<bool>() ? 1 : 0);
    }
    ++row;
  }
  if (n <= 0) throw Error(ErrorKind::empty_input, "no rows in " + path.string());

  Panel panel;
  panel.values.resize(row, n);
  for (long t = 0; t < row; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      panel.values(t, i) = values[static_cast<std::size_t>(t * n + i)];
  if (with_labels) {
    LabelGrid grid(row, n);
    for (long t = 0; t < row; ++t)
      for (Eigen::Index i = 0; i < n; ++i)
        grid(t, i) = labels[static_cast<std::size_t>(t * n + i)];
    panel.labels = std::move(grid);
  }
  return panel;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
  (void)ec;
}

void store_csv(const Panel& panel, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  std::string line;
  for (Eigen::Index i = 0; i < panel.n(); ++i) {
    if (i) line += ',';
    line += "series_" + std::to_string(i);
  }
  if (panel.has_labels()) {
    for (Eigen::Index i = 0; i < panel.n(); ++i) {
      line += ",label_" + std::to_string(i);
    }
  }
  out << line << '\n';
  for (Eigen::Index t = 0; t < panel.h(); ++t) {
    line.clear();
    for (Eigen::Index i = 0; i < panel.n(); ++i) {
      if (i) line += ',';
      append_double(line, panel.values(t, i));
    }
    if (panel.has_labels()) {
      for (Eigen::Index i = 0; i < panel.n(); ++i) {
        line += panel.label(t, i) ? ",1" : ",0";
      }
    }
    out << line << '\n';
  }
}

void store_jsonl(const Panel& panel, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (Eigen::Index t = 0; t < panel.h(); ++t) {
    nlohmann::json obj;
    obj["t"] = t;
    auto& vals = obj["values"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < panel.n(); ++i) vals.push_back(panel.values(t, i));
    if (panel.has_labels()) {
      auto& labs = obj["labels"] = nlohmann::json::array();
      for (Eigen::Index i = 0; i < panel.n(); ++i) labs.push_back(panel.label(t, i));
    }
    out << obj.dump() << '\n';
  }
}

}  // namespace

PanelFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".jsonl" ? PanelFormat::jsonl : PanelFormat::csv;
}

Panel load_panel(const std::filesystem::path& path, PanelFormat format) {
  return format == PanelFormat::csv ? load_csv(path) : load_jsonl(path);
}

Panel load_panel(const std::filesystem::path& path) {
  return load_panel(path, format_for_path(path));
}

void store_panel(const Panel& panel, const std::filesystem::path& path,
                 PanelFormat format) {
  if (format == PanelFormat::csv) {
    store_csv(panel, path);
  } else {
    store_jsonl(panel, path);
  }
}

void store_panel(const Panel& panel, const std::filesystem::path& path) {
  store_panel(panel, path, format_for_path(path));
}

Panel generate_panel(const GeneratorSpec& spec) {
  if (spec.n <= 0 || spec.h <= 0) {
    throw Error(ErrorKind::invalid_argument, "generator needs n > 0 and h > 0");
  }
  if (spec.noise_sigma <= 0.0) {
    throw Error(ErrorKind::invalid_argument, "noise_sigma must be positive");
  }
  if (spec.anomaly_rate < 0.0 || spec.anomaly_rate >= 1.0) {
    throw Error(ErrorKind::invalid_argument, "anomaly_rate must lie in [0, 1)");
  }
  if (spec.w_true < 1) {
    throw Error(ErrorKind::invalid_argument, "w_true must be >= 1");
  }
  for (const auto& e : spec.support) {
    if (e.target < 0 || e.target >= spec.n || e.source < 0 || e.source >= spec.n) {
      throw Error(ErrorKind::invalid_argument, "support entry references an unknown series");
    }
    if (e.lag < 1 || e.lag > spec.w_true) {
      throw Error(ErrorKind::invalid_argument,
                  "support lag must satisfy 1 <= k <= w_true");
    }
  }

  // Per-target entries, ordered as given.
  std::vector<std::vector<SupportEntry>> by_target(static_cast<std::size_t>(spec.n));
  for (const auto& e : spec.support) by_target[static_cast<std::size_t>(e.target)].push_back(e);

  NormalSampler sampler(spec.seed);
  Panel panel;
  panel.values.resize(spec.h, spec.n);
  LabelGrid labels = LabelGrid::Zero(spec.h, spec.n);

  const double spike = spec.anomaly_magnitude * spec.noise_sigma;
  for (long t = 0; t < spec.h; ++t) {
    for (int i = 0; i < spec.n; ++i) {
      double value = spec.noise_sigma * sampler.normal();
      if (t >= spec.w_true) {
        for (const auto& e : by_target[static_cast<std::size_t>(i)]) {
          value += e.weight * panel.values(t - e.lag, e.source);
        }
        if (spec.anomaly_rate > 0.0 && sampler.uniform() < spec.anomaly_rate) {
          value += sampler.uniform() < 0.5 ? spike : -spike;
          labels(t, i) = 1;
        }
      }
      if (!std::isfinite(value) || std::abs(value) > kOverflowGuard) {
        throw Error(ErrorKind::instability,
                    "generated |value| exceeded " + std::to_string(kOverflowGuard) +
                        " at t=" + std::to_string(t) + ", series " + std::to_string(i) +
                        "; use smaller support weights");
      }
      panel.values(t, i) = value;
    }
  }
  panel.labels = std::move(labels);
  return panel;
}

Panel slice_panel(const Panel& panel, Eigen::Index t_begin, Eigen::Index t_end) {
  if (t_begin < 0 || t_end > panel.h() || t_begin >= t_end) {
    throw Error(ErrorKind::invalid_argument, "bad slice range [" +
                                                 std::to_string(t_begin) + ", " +
                                                 std::to_string(t_end) + ")");
  }
  Panel out;
  out.values = panel.values.middleRows(t_begin, t_end - t_begin);
  if (panel.has_labels()) {
    out.labels = panel.labels->middleRows(t_begin, t_end - t_begin);
  }
  out.sample_period_minutes = panel.sample_period_minutes;
  return out;
}

GeneratorSpec load_generator_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
  GeneratorSpec spec;
  spec.n = obj.at("n").get<int>();
  spec.h = obj.at("h").get<long>();
  spec.w_true = obj.at("w_true").get<int>();
  spec.noise_sigma = obj.value("noise_sigma", 1.0);
  spec.anomaly_rate = obj.value("anomaly_rate", 0.0);
  spec.anomaly_magnitude = obj.value("anomaly_magnitude", 8.0);
  spec.seed = obj.value("seed", std::uint64_t{0});
  if (obj.contains("support")) {
    for (const auto& e : obj["support"]) {
      spec.support.push_back(SupportEntry{
          e.at("target").get<int>(), e.at("source").get<int>(),
          e.at("lag").get<int>(), e.at("weight").get<double>()});
    }
  }
  return spec;
}

}  // namespace laganom
