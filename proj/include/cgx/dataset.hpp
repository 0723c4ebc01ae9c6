#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgx/graph.hpp"

namespace cgx {

// One region of interest: the per-sample unit. planted is non-empty only for
// synthetic data where the relevant nodes are known by construction.
struct RoiRecord {
  std::string id;
  double image_w = 0.0;
  double image_h = 0.0;
  int label = 0;
  std::vector<NucleusRecord> nuclei;
  std::vector<int> planted;
};

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;  // flagged dimensions are left unscaled
};

struct DatasetSplit {
  std::vector<RoiRecord> train, val, test;
  std::vector<std::string> class_names;
  FeatureStats feature_stats;  // computed on train only
  int feature_dim = 0;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

struct SynthSpec {
  int num_classes = 3;  // 2, 3, or 5
  int rois_per_class = 100;
  // val/test default to rois_per_class / 5 when left negative
  int val_per_class = -1;
  int test_per_class = -1;
  int nuclei_min = 40;
  int nuclei_max = 80;
  int cluster_min = 8;
  int cluster_max = 16;
  int feature_dim = 16;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
};

DatasetSplit parse_dataset(const std::string& path);
void write_dataset(const DatasetSplit& ds, const std::string& path);

// z-scores the F hand-crafted dimensions by train statistics; constant
// dimensions stay unscaled and flagged. Stats are recomputed afterwards, so
// applying twice is a no-op.
DatasetSplit normalize_features(DatasetSplit ds);

// Background scatter plus, for classes >= 1, a spatial cluster of planted
// nuclei with a class-specific feature shift. Cluster size and radius grow
// with the class index. Deterministic given the seed.
DatasetSplit generate_synthetic(const SynthSpec& spec);

// Remaps labels through table (new_label = table[old_label]) and renames
// classes accordingly; used for the merged 2/3-class scenarios.
DatasetSplit merge_labels(DatasetSplit ds, const std::vector<int>& table,
                          const std::vector<std::string>& merged_names);

FeatureStats compute_feature_stats(const std::vector<RoiRecord>& rois, int feature_dim);

}  // namespace cgx
