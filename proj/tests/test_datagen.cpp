#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "stamp/datagen.hpp"

using namespace stamp;

namespace {

double nearest_centroid_accuracy(const Dataset& ds, std::size_t classes) {
  Matrix centroids = Matrix::Zero(static_cast<Eigen::Index>(classes), ds.features.cols());
  std::vector<double> counts(classes, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(ds.truth[i].label);
    centroids.row(c) += ds.features.row(static_cast<Eigen::Index>(i));
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  for (std::size_t c = 0; c < classes; ++c) centroids.row(static_cast<Eigen::Index>(c)) /= counts[c];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Eigen::Index best = 0;
    (centroids.rowwise() - ds.features.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
    hits += best == ds.truth[i].label;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

bool same(const Dataset& a, const Dataset& b) {
  return a.truth == b.truth && a.features.rows() == b.features.rows() && a.features == b.features;
}

}  // namespace

TEST(GenSource, BalancedLabels) {
  const Dataset ds = gen_source(4, 2, 4000, 3);
  std::vector<int> counts(4, 0);
  for (const auto& t : ds.truth) {
    EXPECT_FALSE(t.outlier);
    ++counts[static_cast<std::size_t>(t.label)];
  }
  EXPECT_EQ(counts, std::vector<int>(4, 1000));
}

TEST(GenSource, DeterministicPerSeed) {
  EXPECT_TRUE(same(gen_source(4, 2, 400, 3), gen_source(4, 2, 400, 3)));
  EXPECT_FALSE(same(gen_source(4, 2, 400, 3), gen_source(4, 2, 400, 4)));
}

TEST(GenSource, NearestCentroidSeparates) {
  EXPECT_GT(nearest_centroid_accuracy(gen_source(4, 2, 4000, 3), 4), 0.95);
  EXPECT_GT(nearest_centroid_accuracy(gen_source(6, 5, 3000, 8), 6), 0.95);
}

TEST(GenSource, Errors) {
  EXPECT_THROW(gen_source(4, 2, 39, 1), ConfigError);
  EXPECT_THROW(gen_source(4, 1, 400, 1), ConfigError);
  EXPECT_NO_THROW(gen_source(4, 2, 40, 1));
}

TEST(Geometry, OutliersSitBetweenClasses) {
  const Geometry g{4, 2};
  for (std::size_t j = 0; j < 4; ++j) {
    const Vector o = g.outlier_center(j);
    EXPECT_NEAR(o.norm(), g.radius, 1e-12);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_GT((o - g.class_center(c)).norm(), 2.0 * g.radius * std::sin(std::numbers::pi / 8) - 1e-9);
  }
}

TEST(Corrupt, SeverityZeroIsIdentity) {
  Vector x(3);
  x << 1.5, -2.0, 0.25;
  EXPECT_EQ(corrupt(x, 0.0, 17), x);
}

TEST(Corrupt, RotationWithoutNoiseScalesNorm) {
  Vector x(2);
  x << 3.0, -1.0;
  const Vector y = corrupt(x, CorruptionOptions{5.0, false}, 1);
  EXPECT_NEAR(y.norm() / (1.0 + 0.04 * 5.0), x.norm(), 1e-9);
  // 45 degrees counter-clockwise.
  const double angle = std::atan2(y(1), y(0)) - std::atan2(x(1), x(0));
  EXPECT_NEAR(angle, std::numbers::pi / 4, 1e-12);
}

TEST(Corrupt, DeterministicAndValidated) {
  Vector x(2);
  x << 1.0, 2.0;
  EXPECT_EQ(corrupt(x, 5.0, 9), corrupt(x, 5.0, 9));
  EXPECT_NE(corrupt(x, 5.0, 9), corrupt(x, 5.0, 10));
  EXPECT_THROW(corrupt(x, 5.5, 9), ConfigError);
  EXPECT_THROW(corrupt(x, -0.1, 9), ConfigError);
}

TEST(Corrupt, CentroidShiftNondecreasingInSeverity) {
  const Dataset ds = gen_source(4, 2, 2000, 5);
  double previous = -1.0;
  for (double s : {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}) {
    double shift = 0.0;
    for (int c = 0; c < 4; ++c) {
      Vector clean = Vector::Zero(2), moved = Vector::Zero(2);
      int n = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.truth[i].label != c) continue;
        const Vector x = ds.features.row(static_cast<Eigen::Index>(i)).transpose();
        clean += x;
        moved += corrupt(x, s, i);
        ++n;
      }
      shift += (moved - clean).norm() / n;
    }
    EXPECT_GE(shift, previous) << "severity " << s;
    previous = shift;
  }
  EXPECT_GT(previous, 0.0);
}

TEST(GenStream, NoOutliersAtZeroRatio) {
  StreamConfig cfg;
  cfg.samples = 1000;
  cfg.outlier_ratio = 0.0;
  cfg.seed = 2;
  const auto batches = gen_stream(cfg);
  EXPECT_EQ(batches.size(), 16u);
  EXPECT_EQ(batches.back().features.rows(), 1000 - 15 * 64);
  for (const auto& b : batches)
    for (const auto& t : b.truth) {
      EXPECT_FALSE(t.outlier);
      EXPECT_GE(t.label, 0);
      EXPECT_LT(t.label, 4);
    }
}

TEST(GenStream, OutlierCountNearRatio) {
  // sd of the binomial count is 40, so [1800, 2200] is a 5-sigma window.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    StreamConfig cfg;
    cfg.seed = seed;
    const Dataset ds = flatten(gen_stream(cfg));
    ASSERT_EQ(ds.size(), 10000u);
    std::size_t outliers = 0;
    for (const auto& t : ds.truth) {
      EXPECT_EQ(t.outlier, t.label == kOutlierLabel);
      outliers += t.outlier;
    }
    EXPECT_GE(outliers, 1800u);
    EXPECT_LE(outliers, 2200u);
  }
}

TEST(GenStream, DeterministicOrderAndIndices) {
  StreamConfig cfg;
  cfg.samples = 500;
  cfg.seed = 4;
  cfg.outlier_mode = OutlierMode::BackgroundUniform;
  const auto a = gen_stream(cfg), b = gen_stream(cfg);
  ASSERT_EQ(a.size(), b.size());
  std::size_t expected_first = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first_index, expected_first);
    EXPECT_EQ(a[i].features, b[i].features);
    EXPECT_EQ(a[i].truth, b[i].truth);
    expected_first += static_cast<std::size_t>(a[i].features.rows());
  }
}

TEST(GenStream, ConfigErrors) {
  StreamConfig cfg;
  cfg.outlier_ratio = 1.0;
  EXPECT_THROW(gen_stream(cfg), ConfigError);
  cfg = {};
  cfg.samples = 0;
  EXPECT_THROW(gen_stream(cfg), ConfigError);
  cfg = {};
  cfg.samples = 129;
  EXPECT_THROW(gen_stream(cfg), ConfigError);
}

TEST(AugmentViews, ZeroStrengthCopies) {
  Vector x(2);
  x << 0.3, -1.2;
  const auto views = augment_views(x, 16, 0.0, 1, 2);
  ASSERT_EQ(views.size(), 16u);
  for (const auto& v : views) EXPECT_EQ(v, x);
  const auto one = augment_views(x, 1, 0.0, 1, 2);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], x);
  EXPECT_THROW(augment_views(x, 0, 1.0, 1, 2), ConfigError);
}

TEST(AugmentViews, DeterministicPerSampleAndView) {
  Vector x(2);
  x << 2.0, 1.0;
  const auto a = augment_views(x, 4, 1.0, 7, 11), b = augment_views(x, 4, 1.0, 7, 11);
  const auto c = augment_views(x, 4, 1.0, 7, 12);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a[k], b[k]);
    EXPECT_NE(a[k], c[k]);
  }
  EXPECT_NE(a[0], a[1]);
  // The first views agree when more are requested.
  EXPECT_EQ(augment_views(x, 8, 1.0, 7, 11)[3], a[3]);
}

TEST(AugmentViews, MeanOfViewsNearRotationAverage) {
  Vector x(2);
  x << 4.0, 1.0;
  const double a = 10.0 * std::numbers::pi / 180.0;
  const Vector expected = x * (std::sin(a) / a);
  constexpr int kSeeds = 1000;
  std::vector<Vector> means;
  Vector sq = Vector::Zero(2);
  for (int s = 0; s < kSeeds; ++s) {
    const auto views = augment_views(x, 16, 1.0, static_cast<std::uint64_t>(s), 0);
    Vector m = Vector::Zero(2);
    for (const auto& v : views) {
      m += v;
      sq += (v - expected).cwiseAbs2();
    }
    means.push_back(m / 16.0);
  }
  const Vector sigma = (sq / (16.0 * kSeeds)).cwiseSqrt();
  int inside = 0;
  for (const auto& m : means) inside += ((m - expected).array().abs() <= 3.0 * sigma.array() / 4.0).all();
  EXPECT_GE(inside, 980);
}

TEST(DatasetIo, RoundTripIsExact) {
  StreamConfig cfg;
  cfg.samples = 300;
  cfg.seed = 9;
  const Dataset ds = flatten(gen_stream(cfg));
  std::stringstream ss;
  write_dataset(ss, ds);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "x0,x1,label,outlier");
  EXPECT_TRUE(same(read_dataset(ss), ds));
}

TEST(DatasetIo, PathRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "stamp_dataset_io.csv";
  const Dataset ds = gen_source(3, 4, 60, 1);
  write_dataset(path.string(), ds);
  EXPECT_TRUE(same(read_dataset(path.string()), ds));
  std::filesystem::remove(path);
  EXPECT_THROW(read_dataset(path.string()), std::runtime_error);
}

TEST(DatasetIo, EmptyBodyGivesEmptyDataset) {
  std::stringstream ss("x0,x1,label,outlier\n");
  const Dataset ds = read_dataset(ss);
  EXPECT_EQ(ds.size(), 0u);
  EXPECT_EQ(ds.features.cols(), 2);
}

TEST(DatasetIo, MalformedRowsNameTheLine) {
  auto message = [](const std::string& text) {
    std::stringstream ss(text);
    try {
      read_dataset(ss);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("x0,x1,label,outlier\n1,2,0,0\n1,2,3,1\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("x0,x1,label,outlier\n1,2,0\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("x0,x1,label,outlier\n1,abc,0,0\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("x0,x1,label,outlier\n1,2,-1,0\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("a,b,label,outlier\n").find("header"), std::string::npos);
  EXPECT_NE(message("").find("line 1"), std::string::npos);
}
