#include "cgx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cgx/rng.hpp"
#include "json.hpp"

namespace cgx {

namespace {

using nlohmann::json;

constexpr double kConstantStd = 1e-12;

RoiRecord parse_roi(const json& j, const std::string& split, int num_classes, int& feature_dim) {
  RoiRecord roi;
  if (!j.contains("id") || !j["id"].is_string())
    throw std::runtime_error("dataset: missing string field 'id' in split " + split);
  roi.id = j["id"].get<std::string>();
  const auto need = [&](const char* field) -> const json& {
    if (!j.contains(field))
      throw std::runtime_error("dataset: missing field '" + std::string(field) + "' in RoI " + roi.id);
    return j[field];
  };
  roi.image_w = need("w").get<double>();
  roi.image_h = need("h").get<double>();
  roi.label = need("label").get<int>();
  if (roi.image_w <= 0 || roi.image_h <= 0)
    throw std::runtime_error("dataset: non-positive image size in RoI " + roi.id);
  if (roi.label < 0 || roi.label >= num_classes)
    throw std::runtime_error("dataset: label out of range in RoI " + roi.id);
  const json& nuclei = need("nuclei");
  if (!nuclei.is_array() || nuclei.empty())
    throw std::runtime_error("dataset: empty 'nuclei' in RoI " + roi.id);
  for (const auto& n : nuclei) {
    NucleusRecord rec;
    if (!n.contains("x") || !n.contains("y") || !n.contains("f"))
      throw std::runtime_error("dataset: nucleus missing x/y/f in RoI " + roi.id);
    rec.x = n["x"].get<double>();
    rec.y = n["y"].get<double>();
    rec.features = n["f"].get<std::vector<double>>();
    if (rec.x < 0 || rec.y < 0 || !std::isfinite(rec.x) || !std::isfinite(rec.y))
      throw std::runtime_error("dataset: invalid centroid in RoI " + roi.id);
    for (double f : rec.features)
      if (!std::isfinite(f)) throw std::runtime_error("dataset: non-finite feature in RoI " + roi.id);
    if (feature_dim < 0)
      feature_dim = static_cast<int>(rec.features.size());
    else if (static_cast<int>(rec.features.size()) != feature_dim)
      throw std::runtime_error("dataset: inconsistent feature length in RoI " + roi.id);
    roi.nuclei.push_back(std::move(rec));
  }
  if (j.contains("planted")) {
    roi.planted = j["planted"].get<std::vector<int>>();
    for (int p : roi.planted)
      if (p < 0 || p >= static_cast<int>(roi.nuclei.size()))
        throw std::runtime_error("dataset: planted index out of range in RoI " + roi.id);
  }
  return roi;
}

json roi_to_json(const RoiRecord& roi) {
  json j;
  j["id"] = roi.id;
  j["w"] = roi.image_w;
  j["h"] = roi.image_h;
  j["label"] = roi.label;
  json nuclei = json::array();
  for (const auto& n : roi.nuclei) {
    json nj;
    nj["x"] = n.x;
    nj["y"] = n.y;
    nj["f"] = n.features;
    nuclei.push_back(std::move(nj));
  }
  j["nuclei"] = std::move(nuclei);
  if (!roi.planted.empty()) j["planted"] = roi.planted;
  return j;
}

std::vector<std::string> default_class_names(int c) {
  if (c == 2) return {"benign", "malignant"};
  if (c == 3) return {"benign", "atypical", "malignant"};
  if (c == 5) return {"N", "B", "A", "D", "I"};
  std::vector<std::string> names;
  for (int i = 0; i < c; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

}  // namespace

FeatureStats compute_feature_stats(const std::vector<RoiRecord>& rois, int feature_dim) {
  FeatureStats stats;
  stats.mean.assign(static_cast<std::size_t>(feature_dim), 0.0);
  stats.stddev.assign(static_cast<std::size_t>(feature_dim), 0.0);
  stats.constant.assign(static_cast<std::size_t>(feature_dim), false);
  std::size_t count = 0;
  for (const auto& roi : rois)
    for (const auto& n : roi.nuclei) {
      for (int d = 0; d < feature_dim; ++d) stats.mean[static_cast<std::size_t>(d)] += n.features[static_cast<std::size_t>(d)];
      ++count;
    }
  if (count == 0) throw std::runtime_error("feature stats: no nuclei in train split");
  for (double& m : stats.mean) m /= static_cast<double>(count);
  for (const auto& roi : rois)
    for (const auto& n : roi.nuclei)
      for (int d = 0; d < feature_dim; ++d) {
        const double diff = n.features[static_cast<std::size_t>(d)] - stats.mean[static_cast<std::size_t>(d)];
        stats.stddev[static_cast<std::size_t>(d)] += diff * diff;
      }
  for (int d = 0; d < feature_dim; ++d) {
    auto& sd = stats.stddev[static_cast<std::size_t>(d)];
    sd = std::sqrt(sd / static_cast<double>(count));
    if (sd <= kConstantStd) {
      stats.constant[static_cast<std::size_t>(d)] = true;
      sd = 0.0;
    }
  }
  return stats;
}

DatasetSplit parse_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("dataset: JSON parse failure in " + path + ": " + e.what());
  }
  if (!j.contains("class_names") || !j.contains("splits"))
    throw std::runtime_error("dataset: missing 'class_names' or 'splits'");
  DatasetSplit ds;
  ds.class_names = j["class_names"].get<std::vector<std::string>>();
  if (ds.class_names.size() < 2) throw std::runtime_error("dataset: need at least 2 classes");
  int feature_dim = -1;
  const json& splits = j["splits"];
  for (const char* name : {"train", "val", "test"}) {
    if (!splits.contains(name))
      throw std::runtime_error("dataset: missing split '" + std::string(name) + "'");
    auto& target = std::string(name) == "train" ? ds.train : (std::string(name) == "val" ? ds.val : ds.test);
    for (const auto& rj : splits[name])
      target.push_back(parse_roi(rj, name, ds.num_classes(), feature_dim));
  }
  if (feature_dim < 0) throw std::runtime_error("dataset: no RoIs present");
  ds.feature_dim = feature_dim;

  std::set<std::string> seen;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& roi : *split)
      if (!seen.insert(roi.id).second)
        throw std::runtime_error("split overlap: duplicate RoI id " + roi.id);

  ds.feature_stats = compute_feature_stats(ds.train, ds.feature_dim);
  return ds;
}

void write_dataset(const DatasetSplit& ds, const std::string& path) {
  json j;
  j["class_names"] = ds.class_names;
  json splits;
  const std::pair<const char*, const std::vector<RoiRecord>*> parts[] = {
      {"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}};
  for (const auto& [name, rois] : parts) {
    json arr = json::array();
    for (const auto& roi : *rois) arr.push_back(roi_to_json(roi));
    splits[name] = std::move(arr);
  }
  j["splits"] = std::move(splits);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dataset: cannot write " + path);
  out << j.dump(2) << "\n";
}

DatasetSplit normalize_features(DatasetSplit ds) {
  const FeatureStats& stats = ds.feature_stats;
  if (stats.mean.empty()) throw std::runtime_error("normalize_features: feature stats missing");
  for (auto* split : {&ds.train, &ds.val, &ds.test})
    for (auto& roi : *split)
      for (auto& n : roi.nuclei)
        for (int d = 0; d < ds.feature_dim; ++d) {
          if (stats.constant[static_cast<std::size_t>(d)]) continue;
          auto& v = n.features[static_cast<std::size_t>(d)];
          v = (v - stats.mean[static_cast<std::size_t>(d)]) / stats.stddev[static_cast<std::size_t>(d)];
        }
  ds.feature_stats = compute_feature_stats(ds.train, ds.feature_dim);
  return ds;
}

DatasetSplit generate_synthetic(const SynthSpec& spec) {
  if (spec.num_classes < 2 || spec.rois_per_class < 1 || spec.nuclei_min < 1 ||
      spec.nuclei_max < spec.nuclei_min || spec.cluster_min < 1 ||
      spec.cluster_max < spec.cluster_min || spec.feature_dim < 1 || spec.noise_scale < 0.0)
    throw std::invalid_argument("generate_synthetic: invalid spec");

  const double image_w = 1000.0, image_h = 1000.0;
  const int val_pc = spec.val_per_class >= 0 ? spec.val_per_class : std::max(1, spec.rois_per_class / 5);
  const int test_pc = spec.test_per_class >= 0 ? spec.test_per_class : std::max(1, spec.rois_per_class / 5);
  // Inter-class shifts shrink as the class count grows, mirroring the
  // increasing task difficulty of the finer scenarios.
  const double shift = 6.0 / static_cast<double>(spec.num_classes);

  DatasetSplit ds;
  ds.class_names = default_class_names(spec.num_classes);
  ds.feature_dim = spec.feature_dim;

  std::uint64_t ordinal = 0;
  const auto make_roi = [&](const std::string& split, int cls, int idx) {
    Rng rng(mix_seed(spec.seed, ordinal++));
    RoiRecord roi;
    roi.id = "synth-" + split + "-c" + std::to_string(cls) + "-" + std::to_string(idx);
    roi.image_w = image_w;
    roi.image_h = image_h;
    roi.label = cls;
    const int n_bg = rng.uniform_int(spec.nuclei_min, spec.nuclei_max);
    for (int i = 0; i < n_bg; ++i) {
      NucleusRecord rec;
      rec.x = rng.uniform(0.0, image_w);
      rec.y = rng.uniform(0.0, image_h);
      rec.features.resize(static_cast<std::size_t>(spec.feature_dim));
      for (auto& f : rec.features) f = rng.normal(0.0, spec.noise_scale);
      roi.nuclei.push_back(std::move(rec));
    }
    if (cls >= 1) {
      // Cap the cluster at a sixth of the background so no single RoI is
      // dominated by planted nuclei; keeps classifier confidence off the
      // saturation ceiling where mask gradients vanish.
      const int sampled = rng.uniform_int(spec.cluster_min, spec.cluster_max);
      const int csize = std::max(3, std::min(sampled, n_bg / 6)) + 2 * (cls - 1);
      const double radius = 40.0 + 12.0 * (cls - 1);
      const double cx = rng.uniform(radius, image_w - radius);
      const double cy = rng.uniform(radius, image_h - radius);
      const int base = (3 * (cls - 1)) % spec.feature_dim;
      for (int i = 0; i < csize; ++i) {
        NucleusRecord rec;
        rec.x = std::clamp(cx + rng.normal(0.0, radius / 2.0), 0.0, image_w);
        rec.y = std::clamp(cy + rng.normal(0.0, radius / 2.0), 0.0, image_h);
        rec.features.resize(static_cast<std::size_t>(spec.feature_dim));
        for (auto& f : rec.features) f = rng.normal(0.0, spec.noise_scale);
        for (int d = 0; d < 3; ++d)
          rec.features[static_cast<std::size_t>((base + d) % spec.feature_dim)] += shift;
        roi.planted.push_back(n_bg + i);
        roi.nuclei.push_back(std::move(rec));
      }
    }
    return roi;
  };

  const std::pair<const char*, int> parts[] = {
      {"train", spec.rois_per_class}, {"val", val_pc}, {"test", test_pc}};
  for (const auto& [split, count] : parts) {
    auto& target = std::string(split) == "train" ? ds.train : (std::string(split) == "val" ? ds.val : ds.test);
    for (int cls = 0; cls < spec.num_classes; ++cls)
      for (int i = 0; i < count; ++i) target.push_back(make_roi(split, cls, i));
  }

  ds.feature_stats = compute_feature_stats(ds.train, ds.feature_dim);
  return ds;
}

DatasetSplit merge_labels(DatasetSplit ds, const std::vector<int>& table,
                          const std::vector<std::string>& merged_names) {
  if (table.size() != ds.class_names.size())
    throw std::invalid_argument("merge_labels: table length must equal class count");
  for (int t : table)
    if (t < 0 || t >= static_cast<int>(merged_names.size()))
      throw std::invalid_argument("merge_labels: table entry out of range");
  for (auto* split : {&ds.train, &ds.val, &ds.test})
    for (auto& roi : *split) roi.label = table[static_cast<std::size_t>(roi.label)];
  ds.class_names = merged_names;
  return ds;
}

}  // namespace cgx
