#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cgx/dataset.hpp"
#include "cgx/rng.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cgx;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

DatasetSplit tiny_dataset() {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.rois_per_class = 3;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  spec.nuclei_min = 5;
  spec.nuclei_max = 8;
  spec.cluster_min = 2;
  spec.cluster_max = 3;
  spec.seed = 42;
  return generate_synthetic(spec);
}

bool files_identical(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return sa == sb;
}

}  // namespace

TEST_CASE("dataset round-trips through JSON") {
  const DatasetSplit ds = tiny_dataset();
  const std::string p1 = temp_path("cgx_ds_roundtrip1.json");
  const std::string p2 = temp_path("cgx_ds_roundtrip2.json");
  write_dataset(ds, p1);
  const DatasetSplit back = parse_dataset(p1);
  write_dataset(back, p2);
  CHECK(files_identical(p1, p2));

  REQUIRE(back.train.size() == ds.train.size());
  CHECK(back.train[0].id == ds.train[0].id);
  CHECK(back.train[0].nuclei[0].features == ds.train[0].nuclei[0].features);
  CHECK(back.feature_dim == ds.feature_dim);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("parse rejects malformed datasets") {
  const std::string p = temp_path("cgx_ds_bad.json");

  SUBCASE("duplicate id across splits") {
    DatasetSplit ds = tiny_dataset();
    ds.val[0].id = ds.train[0].id;
    write_dataset(ds, p);
    CHECK_THROWS_WITH_AS(parse_dataset(p), doctest::Contains("split overlap"),
                         std::runtime_error);
  }

  SUBCASE("label out of range") {
    DatasetSplit ds = tiny_dataset();
    ds.train[0].label = 7;
    write_dataset(ds, p);
    CHECK_THROWS_WITH_AS(parse_dataset(p), doctest::Contains("label out of range"),
                         std::runtime_error);
  }

  SUBCASE("minimal valid file parses") {
    nlohmann::json j;
    j["class_names"] = {"a", "b"};
    const nlohmann::json roi = {{"id", "r1"},
                                {"w", 10},
                                {"h", 10},
                                {"label", 0},
                                {"nuclei", {{{"x", 1.0}, {"y", 2.0}, {"f", {0.5}}}}}};
    nlohmann::json roi2 = roi, roi3 = roi;
    roi2["id"] = "r2";
    roi3["id"] = "r3";
    j["splits"] = {{"train", {roi}}, {"val", {roi2}}, {"test", {roi3}}};
    std::ofstream(p) << j.dump();
    const DatasetSplit ds = parse_dataset(p);
    CHECK(ds.train.size() == 1);
    CHECK(ds.feature_dim == 1);
    CHECK(ds.feature_stats.mean[0] == doctest::Approx(0.5));
  }
  fs::remove(p);
}

TEST_CASE("normalize_features") {
  DatasetSplit ds = tiny_dataset();

  SUBCASE("train columns become zero-mean unit-variance") {
    const DatasetSplit norm = normalize_features(ds);
    for (int d = 0; d < norm.feature_dim; ++d) {
      if (norm.feature_stats.constant[static_cast<std::size_t>(d)]) continue;
      CHECK(std::abs(norm.feature_stats.mean[static_cast<std::size_t>(d)]) < 1e-9);
      CHECK(norm.feature_stats.stddev[static_cast<std::size_t>(d)] == doctest::Approx(1.0));
    }
    // idempotent
    const DatasetSplit twice = normalize_features(norm);
    CHECK(twice.train[0].nuclei[0].features[0] ==
          doctest::Approx(norm.train[0].nuclei[0].features[0]).epsilon(1e-9));
  }

  SUBCASE("constant column left unscaled and flagged") {
    for (auto* split : {&ds.train, &ds.val, &ds.test})
      for (auto& roi : *split)
        for (auto& n : roi.nuclei) n.features[0] = 3.25;
    ds.feature_stats = compute_feature_stats(ds.train, ds.feature_dim);
    const DatasetSplit norm = normalize_features(ds);
    CHECK(norm.feature_stats.constant[0]);
    CHECK(norm.train[0].nuclei[0].features[0] == 3.25);
  }

  SUBCASE("two-point column maps to plus/minus one") {
    // column with values {0, 2}: mean 1, population std 1
    std::vector<double> vals;
    DatasetSplit two = ds;
    bool flip = false;
    for (auto& roi : two.train)
      for (auto& n : roi.nuclei) {
        n.features[1] = flip ? 0.0 : 2.0;
        flip = !flip;
      }
    two.feature_stats = compute_feature_stats(two.train, two.feature_dim);
    if (two.feature_stats.stddev[1] == doctest::Approx(1.0)) {
      const DatasetSplit norm = normalize_features(two);
      for (const auto& n : norm.train[0].nuclei)
        CHECK(std::abs(std::abs(n.features[1]) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("generate_synthetic determinism and structure") {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.rois_per_class = 4;
  spec.val_per_class = 2;
  spec.test_per_class = 2;
  spec.seed = 123;

  const DatasetSplit a = generate_synthetic(spec);
  const DatasetSplit b = generate_synthetic(spec);
  const std::string p1 = temp_path("cgx_synth_a.json");
  const std::string p2 = temp_path("cgx_synth_b.json");
  write_dataset(a, p1);
  write_dataset(b, p2);
  CHECK(files_identical(p1, p2));
  fs::remove(p1);
  fs::remove(p2);

  for (const auto& roi : a.train) {
    if (roi.label == 0)
      CHECK(roi.planted.empty());
    else
      CHECK(!roi.planted.empty());
    for (int p : roi.planted) CHECK(p < static_cast<int>(roi.nuclei.size()));
  }
  CHECK(a.train.size() == 12);
  CHECK(a.val.size() == 6);
  CHECK(a.class_names.size() == 3);
}

TEST_CASE("planted features are linearly separable") {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.rois_per_class = 100;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  spec.seed = 99;
  const DatasetSplit ds = generate_synthetic(spec);

  // least-squares one-hot regression on per-RoI mean features (planted mean
  // for planted classes, global mean for background) as a separability oracle
  const int F = ds.feature_dim;
  std::vector<std::vector<double>> X;
  std::vector<int> y;
  for (const auto& roi : ds.train) {
    std::vector<double> mean(static_cast<std::size_t>(F), 0.0);
    const auto& idx = roi.planted;
    if (idx.empty()) {
      for (const auto& n : roi.nuclei)
        for (int d = 0; d < F; ++d) mean[static_cast<std::size_t>(d)] += n.features[static_cast<std::size_t>(d)];
      for (auto& m : mean) m /= static_cast<double>(roi.nuclei.size());
    } else {
      for (int i : idx)
        for (int d = 0; d < F; ++d)
          mean[static_cast<std::size_t>(d)] += roi.nuclei[static_cast<std::size_t>(i)].features[static_cast<std::size_t>(d)];
      for (auto& m : mean) m /= static_cast<double>(idx.size());
    }
    mean.push_back(1.0);  // bias
    X.push_back(std::move(mean));
    y.push_back(roi.label);
  }

  const int D = F + 1, C = 3;
  // normal equations with small ridge, solved by Gaussian elimination
  std::vector<std::vector<double>> A(static_cast<std::size_t>(D), std::vector<double>(static_cast<std::size_t>(D), 0.0));
  std::vector<std::vector<double>> B(static_cast<std::size_t>(D), std::vector<double>(static_cast<std::size_t>(C), 0.0));
  for (std::size_t n = 0; n < X.size(); ++n) {
    for (int i = 0; i < D; ++i) {
      for (int j = 0; j < D; ++j) A[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += X[n][static_cast<std::size_t>(i)] * X[n][static_cast<std::size_t>(j)];
      B[static_cast<std::size_t>(i)][static_cast<std::size_t>(y[n])] += X[n][static_cast<std::size_t>(i)];
    }
  }
  for (int i = 0; i < D; ++i) A[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += 1e-6;
  for (int col = 0; col < D; ++col) {
    int piv = col;
    for (int r = col + 1; r < D; ++r)
      if (std::abs(A[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) > std::abs(A[static_cast<std::size_t>(piv)][static_cast<std::size_t>(col)])) piv = r;
    std::swap(A[static_cast<std::size_t>(col)], A[static_cast<std::size_t>(piv)]);
    std::swap(B[static_cast<std::size_t>(col)], B[static_cast<std::size_t>(piv)]);
    const double d = A[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    for (int j = 0; j < D; ++j) A[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)] /= d;
    for (int j = 0; j < C; ++j) B[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)] /= d;
    for (int r = 0; r < D; ++r) {
      if (r == col) continue;
      const double f = A[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
      if (f == 0.0) continue;
      for (int j = 0; j < D; ++j) A[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] -= f * A[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)];
      for (int j = 0; j < C; ++j) B[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] -= f * B[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)];
    }
  }

  int correct = 0;
  for (std::size_t n = 0; n < X.size(); ++n) {
    int best = 0;
    double best_score = -1e30;
    for (int c = 0; c < C; ++c) {
      double score = 0.0;
      for (int d = 0; d < D; ++d) score += X[n][static_cast<std::size_t>(d)] * B[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)];
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    if (best == y[n]) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(X.size()) > 0.95);
}

TEST_CASE("merge_labels remaps classes") {
  DatasetSplit ds = tiny_dataset();
  const DatasetSplit merged = merge_labels(ds, {0, 0}, {"all"});
  for (const auto& roi : merged.train) CHECK(roi.label == 0);
  CHECK(merged.class_names == std::vector<std::string>{"all"});
  CHECK_THROWS_AS(merge_labels(ds, {0}, {"x"}), std::invalid_argument);
}
