#pragma once

// Accuracy over in-distribution samples, AUROC with outliers as the positive
// class, H-score, and ROC curve points.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "stamp/common.hpp"
#include "stamp/datagen.hpp"

namespace stamp {

struct EvalRecord {
  std::size_t index = 0;
  int pred = 0;
  double score = 0.0;  // OOD score, larger means more likely an outlier
  Truth truth;

  bool operator==(const EvalRecord&) const = default;
};

/// Fraction of non-outlier records predicted correctly.
inline double accuracy(std::span<const EvalRecord> records) {
  std::size_t normals = 0, correct = 0;
  for (const auto& r : records) {
    if (r.truth.outlier) continue;
    ++normals;
    if (r.pred == r.truth.label) ++correct;
  }
  if (normals == 0) throw std::invalid_argument("accuracy: no in-distribution records");
  return static_cast<double>(correct) / static_cast<double>(normals);
}

namespace detail {

inline void check_two_classes(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("auroc: size mismatch");
  const auto pos = std::count(positive.begin(), positive.end(), true);
  if (pos == 0 || static_cast<std::size_t>(pos) == positive.size())
    throw std::invalid_argument("auroc: need at least one outlier and one normal sample");
}

inline std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace detail

/// Mann-Whitney AUROC with midranks. Ranks are kept doubled so the statistic
/// is an exact integer until the final division.
inline double auroc(std::span<const double> scores, std::span<const bool> positive) {
  detail::check_two_classes(scores, positive);
  const auto order = detail::order_by_score(scores);
  std::int64_t rank_sum2 = 0, n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const auto mid2 = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k)
      if (positive[order[k]]) rank_sum2 += mid2, ++n_pos;
    i = j + 1;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(scores.size()) - n_pos;
  const std::int64_t u2 = rank_sum2 - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / static_cast<double>(2 * n_pos * n_neg);
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Points for every distinct-score threshold (score >= threshold flagged),
/// from (0,0) to (1,1).
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const bool> positive) {
  detail::check_two_classes(scores, positive);
  auto order = detail::order_by_score(scores);
  std::reverse(order.begin(), order.end());
  const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  const auto n_neg = static_cast<double>(scores.size()) - n_pos;
  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) (positive[order[j]] ? tp : fp)++;
    pts.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
    i = j;
  }
  return pts;
}

inline double trapezoid_area(std::span<const RocPoint> pts) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
  return area;
}

/// Harmonic mean of accuracy and AUROC.
inline double h_score(double acc, double auc) {
  if (acc + auc == 0.0) return 0.0;
  return 2.0 * acc * auc / (acc + auc);
}

struct MetricsSummary {
  double acc = 0.0;
  std::optional<double> auc;      // absent without outliers
  std::optional<double> h_score;  // likewise
  std::size_t normals = 0;
  std::size_t outliers = 0;
};

inline MetricsSummary summarize(std::span<const EvalRecord> records) {
  MetricsSummary s;
  s.acc = accuracy(records);
  std::vector<double> scores;
  const auto flags = std::make_unique<bool[]>(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    scores.push_back(records[i].score);
    flags[i] = records[i].truth.outlier;
    (records[i].truth.outlier ? s.outliers : s.normals)++;
  }
  if (s.outliers > 0) {
    s.auc = auroc(scores, {flags.get(), records.size()});
    s.h_score = stamp::h_score(s.acc, *s.auc);
  }
  return s;
}

inline nlohmann::ordered_json to_json(const MetricsSummary& s) {
  nlohmann::ordered_json j;
  j["acc"] = s.acc;
  j["auc"] = s.auc ? nlohmann::ordered_json(*s.auc) : nlohmann::ordered_json(nullptr);
  j["h_score"] = s.h_score ? nlohmann::ordered_json(*s.h_score) : nlohmann::ordered_json(nullptr);
  j["normals"] = s.normals;
  j["outliers"] = s.outliers;
  return j;
}

inline void write_roc(std::ostream& os, std::span<const RocPoint> pts) {
  os << "fpr,tpr\n";
  std::string line;
  for (const auto& p : pts) {
    line.clear();
    detail::append_double(line, p.fpr);
    line += ',';
    detail::append_double(line, p.tpr);
    os << line << '\n';
  }
}

}  // namespace stamp
