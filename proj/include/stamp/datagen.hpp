#pragma once

// Synthetic source data, shifted target streams with unseen-class outliers,
// the test-time augmentation operator, and the CSV dataset format.
//
// Geometry: class c has its mean on a circle of radius 4 at angle 2*pi*c/C in
// the (x0, x1) plane; remaining coordinates are centered at zero. Clusters are
// isotropic Gaussians with sigma 0.5. Held-out-class outliers use the same
// circle at the angular midpoints between source classes.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stamp/common.hpp"

namespace stamp {

inline constexpr int kOutlierLabel = -1;

/// Evaluation-only ground truth. Adaptation code never sees this.
struct Truth {
  int label = kOutlierLabel;
  bool outlier = true;

  bool operator==(const Truth&) const = default;
};

struct Dataset {
  Matrix features;
  std::vector<Truth> truth;

  std::size_t size() const { return truth.size(); }
  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(truth.size());
    for (const auto& t : truth) out.push_back(t.label);
    return out;
  }
};

struct Batch {
  std::size_t first_index = 0;  // stream position of row 0
  Matrix features;
  std::vector<Truth> truth;
};

enum class OutlierMode { HeldOutClass, BackgroundUniform };

inline std::string_view to_string(OutlierMode m) {
  return m == OutlierMode::HeldOutClass ? "held-out-class" : "background-uniform";
}

inline OutlierMode outlier_mode_from_string(std::string_view s) {
  if (s == "held-out-class") return OutlierMode::HeldOutClass;
  if (s == "background-uniform") return OutlierMode::BackgroundUniform;
  throw ConfigError("unknown outlier mode '" + std::string(s) + "'");
}

struct Geometry {
  std::size_t classes = 4;
  std::size_t dim = 2;
  double radius = 4.0;
  double sigma = 0.5;

  void validate() const {
    if (classes < 2) throw ConfigError("need at least two classes");
    if (dim < 2) throw ConfigError("input dimension must be at least 2");
    if (!(radius > 0.0) || !(sigma > 0.0)) throw ConfigError("radius and sigma must be positive");
  }

  Vector on_circle(double angle) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
    v(0) = radius * std::cos(angle);
    v(1) = radius * std::sin(angle);
    return v;
  }

  Vector class_center(std::size_t c) const {
    return on_circle(2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes));
  }

  /// Unused circle positions, halfway between neighbouring classes.
  Vector outlier_center(std::size_t j) const {
    return on_circle(2.0 * std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(classes));
  }

  /// Half-width of the box that holds essentially all source mass.
  double box_half_width() const { return radius + 3.0 * sigma; }
};

namespace detail {

inline void rotate_plane(Eigen::Ref<Vector> x, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double a = x(0), b = x(1);
  x(0) = c * a - s * b;
  x(1) = s * a + c * b;
}

inline constexpr double kDegree = std::numbers::pi / 180.0;

}  // namespace detail

/// Balanced labeled clusters: sample i has label i mod C.
inline Dataset gen_source(const Geometry& geom, std::size_t n, std::uint64_t seed) {
  geom.validate();
  const std::size_t classes = geom.classes, dim = geom.dim;
  if (n < classes * 10) throw ConfigError("source set needs at least 10 samples per class");
  std::mt19937_64 rng(mix_seed(seed, 0x50));
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.truth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    Vector x = geom.class_center(c);
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += geom.sigma * normal(rng);
    ds.features.row(static_cast<Eigen::Index>(i)) = x.transpose();
    ds.truth[i] = {static_cast<int>(c), false};
  }
  return ds;
}

inline Dataset gen_source(std::size_t classes, std::size_t dim, std::size_t n, std::uint64_t seed) {
  return gen_source(Geometry{classes, dim}, n, seed);
}

struct CorruptionOptions {
  double severity = 0.0;
  bool noise = true;
};

/// Rotation by severity*9 degrees in the (x0, x1) plane, per-coordinate
/// scaling by 1 + 0.04*severity, then additive N(0, (0.08*severity)^2) noise.
inline Vector corrupt(const Vector& x, const CorruptionOptions& opt, std::uint64_t seed) {
  if (opt.severity < 0.0 || opt.severity > 5.0) throw ConfigError("severity must lie in [0, 5]");
  if (opt.severity == 0.0) return x;
  Vector y = x;
  detail::rotate_plane(y, opt.severity * 9.0 * detail::kDegree);
  y *= 1.0 + 0.04 * opt.severity;
  if (opt.noise) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.08 * opt.severity);
    for (Eigen::Index k = 0; k < y.size(); ++k) y(k) += normal(rng);
  }
  return y;
}

inline Vector corrupt(const Vector& x, double severity, std::uint64_t seed) {
  return corrupt(x, CorruptionOptions{severity, true}, seed);
}

struct StreamConfig {
  std::size_t classes = 4;
  std::size_t dim = 2;
  std::size_t samples = 10000;
  std::size_t batch_size = 64;
  double severity = 5.0;
  double outlier_ratio = 0.2;
  OutlierMode outlier_mode = OutlierMode::HeldOutClass;
  std::uint64_t seed = 0;
  Geometry geometry() const { return Geometry{classes, dim}; }

  void validate() const {
    geometry().validate();
    if (batch_size < 2) throw ConfigError("batch size must be at least 2");
    if (!(outlier_ratio >= 0.0 && outlier_ratio < 1.0)) throw ConfigError("outlier ratio must lie in [0, 1)");
    if (samples == 0) throw ConfigError("stream is empty");
    if (samples % batch_size == 1) throw ConfigError("trailing batch would hold a single sample");
    if (severity < 0.0 || severity > 5.0) throw ConfigError("severity must lie in [0, 5]");
  }
};

/// The target stream, cut into ceil(N/B) batches in arrival order.
inline std::vector<Batch> gen_stream(const StreamConfig& cfg) {
  cfg.validate();
  const Geometry geom = cfg.geometry();
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x57));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_class(0, cfg.classes - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double half = geom.box_half_width();
  std::uniform_real_distribution<double> box(-half, half);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < cfg.samples; start += cfg.batch_size) {
    const std::size_t n = std::min(cfg.batch_size, cfg.samples - start);
    Batch b;
    b.first_index = start;
    b.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.dim));
    b.truth.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool outlier = unit(rng) < cfg.outlier_ratio;
      Vector x;
      if (!outlier) {
        const std::size_t c = pick_class(rng);
        x = geom.class_center(c);
        b.truth[i] = {static_cast<int>(c), false};
      } else if (cfg.outlier_mode == OutlierMode::HeldOutClass) {
        x = geom.outlier_center(pick_class(rng));
      } else {
        x = Vector::Zero(static_cast<Eigen::Index>(cfg.dim));
        x(0) = box(rng);
        x(1) = box(rng);
      }
      if (!outlier || cfg.outlier_mode == OutlierMode::HeldOutClass)
        for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += geom.sigma * normal(rng);
      else
        for (Eigen::Index k = 2; k < x.size(); ++k) x(k) += geom.sigma * normal(rng);
      b.features.row(static_cast<Eigen::Index>(i)) =
          corrupt(x, cfg.severity, mix_seed(cfg.seed, 0xc0, start + i)).transpose();
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

inline Dataset flatten(const std::vector<Batch>& batches) {
  Dataset ds;
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : batches) rows += b.features.rows(), cols = b.features.cols();
  ds.features.resize(rows, cols);
  Eigen::Index r = 0;
  for (const auto& b : batches) {
    ds.features.middleRows(r, b.features.rows()) = b.features;
    r += b.features.rows();
    ds.truth.insert(ds.truth.end(), b.truth.begin(), b.truth.end());
  }
  return ds;
}

/// K views: rotation by U(-10*strength, 10*strength) degrees plus
/// N(0, (0.05*strength)^2) noise, seeded per (seed, sample id, view).
inline std::vector<Vector> augment_views(const Vector& x, std::size_t views, double strength, std::uint64_t seed,
                                         std::uint64_t sample_id) {
  if (views == 0) throw ConfigError("augmentation needs at least one view");
  if (strength < 0.0) throw ConfigError("augmentation strength must be non-negative");
  std::vector<Vector> out(views, x);
  if (strength == 0.0) return out;
  const double max_angle = strength * 10.0 * detail::kDegree;
  for (std::size_t k = 0; k < views; ++k) {
    std::mt19937_64 rng(mix_seed(seed, sample_id, k));
    std::uniform_real_distribution<double> angle(-max_angle, max_angle);
    std::normal_distribution<double> noise(0.0, 0.05 * strength);
    detail::rotate_plane(out[k], angle(rng));
    for (Eigen::Index j = 0; j < x.size(); ++j) out[k](j) += noise(rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV dataset format: header x0,...,x{d-1},label,outlier

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    cells.push_back(line.substr(pos, comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

template <typename T>
T parse_cell(std::string_view cell, std::size_t line_no) {
  T v{};
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(cell) + "'");
  return v;
}

}  // namespace detail

inline std::string dataset_header(std::size_t dim) {
  std::string h;
  for (std::size_t k = 0; k < dim; ++k) h += "x" + std::to_string(k) + ",";
  return h + "label,outlier";
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  const auto dim = static_cast<std::size_t>(ds.features.cols());
  os << dataset_header(dim) << '\n';
  std::string line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line.clear();
    for (std::size_t k = 0; k < dim; ++k) {
      detail::append_double(line, ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      line += ',';
    }
    line += std::to_string(ds.truth[i].label);
    line += ds.truth[i].outlier ? ",1\n" : ",0\n";
    os << line;
  }
}

/// Reads the CSV format; the dimension is taken from the header.
inline Dataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("line 1: missing header");
  const auto head = detail::split_csv(line);
  if (head.size() < 3) throw ParseError("line 1: header too short");
  const std::size_t dim = head.size() - 2;
  if (line != dataset_header(dim)) throw ParseError("line 1: header mismatch, expected '" + dataset_header(dim) + "'");

  std::vector<double> values;
  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != dim + 2)
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) + " fields");
    for (std::size_t k = 0; k < dim; ++k) values.push_back(detail::parse_cell<double>(cells[k], line_no));
    const int label = detail::parse_cell<int>(cells[dim], line_no);
    const int flag = detail::parse_cell<int>(cells[dim + 1], line_no);
    if (flag != 0 && flag != 1) throw ParseError("line " + std::to_string(line_no) + ": outlier flag must be 0 or 1");
    if ((flag == 1) != (label == kOutlierLabel))
      throw ParseError("line " + std::to_string(line_no) + ": outlier flag inconsistent with label");
    if (label < kOutlierLabel) throw ParseError("line " + std::to_string(line_no) + ": negative label");
    ds.truth.push_back({label, flag == 1});
  }
  ds.features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(ds.truth.size()),
                                   static_cast<Eigen::Index>(dim));
  return ds;
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(os, ds);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path);
  return read_dataset(is);
}

}  // namespace stamp
