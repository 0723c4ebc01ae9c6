#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cgx/dataset.hpp"
#include "cgx/explainer.hpp"
#include "cgx/explanation_io.hpp"
#include "cgx/gradcheck.hpp"
#include "cgx/manifest.hpp"
#include "cgx/metrics.hpp"
#include "cgx/model.hpp"
#include "cgx/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cgx;

namespace {

class Stopwatch {
 public:
  std::int64_t elapsed_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

const std::vector<RoiRecord>& pick_split(const DatasetSplit& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw std::runtime_error("unknown split: " + split);
}

std::vector<int> parse_merge_table(const std::string& s) {
  std::vector<int> table;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) table.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return table;
}

std::vector<std::string> parse_names(const std::string& s) {
  std::vector<std::string> names;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) names.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return names;
}

int cmd_synth(const SynthSpec& spec, const std::string& out) {
  Stopwatch sw;
  const DatasetSplit ds = generate_synthetic(spec);
  write_dataset(ds, out);

  RunManifest m;
  m.command = "synth";
  json cfg = {{"classes", spec.num_classes},
              {"rois_per_class", spec.rois_per_class},
              {"val_per_class", spec.val_per_class},
              {"test_per_class", spec.test_per_class},
              {"nuclei_min", spec.nuclei_min},
              {"nuclei_max", spec.nuclei_max},
              {"cluster_min", spec.cluster_min},
              {"cluster_max", spec.cluster_max},
              {"feature_dim", spec.feature_dim},
              {"noise_scale", spec.noise_scale}};
  m.config_json = cfg.dump();
  m.seeds = {spec.seed};
  m.outputs = {out};
  m.duration_ms = sw.elapsed_ms();
  write_manifest(m, out + ".manifest.json");
  std::cout << "wrote " << out << " (" << ds.train.size() << " train / " << ds.val.size()
            << " val / " << ds.test.size() << " test RoIs)\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& out, CgnnConfig cfg,
              GraphConfig gcfg, const std::string& merge, const std::string& merge_names) {
  Stopwatch sw;
  DatasetSplit ds = normalize_features(parse_dataset(dataset_path));
  if (!merge.empty()) {
    const std::vector<int> table = parse_merge_table(merge);
    std::vector<std::string> names = parse_names(merge_names);
    if (names.empty()) {
      int c = 0;
      for (int t : table) c = std::max(c, t + 1);
      for (int i = 0; i < c; ++i) names.push_back("merged" + std::to_string(i));
    }
    ds = merge_labels(std::move(ds), table, names);
  }

  const TrainResult result = train(ds, cfg, gcfg);
  save_model(result.model, out);

  json history = json::array();
  for (const auto& e : result.history)
    history.push_back({{"train_loss", e.train_loss}, {"val_weighted_f1", e.val_weighted_f1}});
  {
    std::ofstream h(out + ".history.json");
    h << json({{"best_epoch", result.model.best_epoch}, {"epochs", history}}).dump(2) << "\n";
  }

  RunManifest m;
  m.command = "train";
  json c = {{"epochs", cfg.epochs},       {"lr", cfg.lr},
            {"weight_decay", cfg.weight_decay}, {"batch_size", cfg.batch_size},
            {"hidden_dim", cfg.hidden_dim},     {"classifier_hidden", cfg.classifier_hidden},
            {"readout", cfg.readout == Readout::Mean ? "mean" : "sum"},
            {"k", gcfg.k},              {"max_edge_px", gcfg.max_edge_px},
            {"mutual", gcfg.mutual},    {"merge", merge}};
  m.config_json = c.dump();
  m.seeds = {cfg.seed};
  m.inputs = {{dataset_path, file_content_hash(dataset_path)}};
  m.outputs = {out, out + ".history.json"};
  m.duration_ms = sw.elapsed_ms();
  write_manifest(m, out + ".manifest.json");

  const int best = result.model.best_epoch;
  std::cout << "trained " << cfg.epochs << " epochs, best val weighted F1 "
            << (best >= 0 ? result.history[static_cast<std::size_t>(best)].val_weighted_f1 : 0.0)
            << " at epoch " << best << "\n";
  return 0;
}

int cmd_explain(const std::string& model_path, const std::string& dataset_path,
                const std::string& split, const std::string& out_dir, ExplainerConfig ecfg,
                int workers) {
  Stopwatch sw;
  const CgnnModel model = load_model(model_path);
  const DatasetSplit ds = normalize_features(parse_dataset(dataset_path));
  std::vector<const RoiRecord*> rois;
  for (const auto& roi : pick_split(ds, split)) rois.push_back(&roi);
  std::sort(rois.begin(), rois.end(),
            [](const RoiRecord* a, const RoiRecord* b) { return a->id < b->id; });

  fs::create_directories(out_dir);

  const auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < rois.size(); i += step) {
      const RoiRecord& roi = *rois[i];
      const CellGraph graph =
          build_cell_graph(roi.nuclei, roi.image_w, roi.image_h, model.graph_cfg);
      ExplainerConfig local = ecfg;
      local.seed = mix_seed(ecfg.seed, i);
      const Explanation expl = explain(model, graph, local, roi.id);
      write_explanation(expl, out_dir + "/" + roi.id + ".expl.json");
      write_overlay(expl, graph, out_dir + "/" + roi.id + ".overlay.json");
    }
  };
  if (workers < 1) workers = 1;
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(work, static_cast<std::size_t>(w), static_cast<std::size_t>(workers));
    for (auto& t : pool) t.join();
  }

  RunManifest m;
  m.command = "explain";
  json c = {{"split", split},
            {"alpha_mask", ecfg.alpha_mask},
            {"alpha_entropy", ecfg.alpha_entropy},
            {"lr", ecfg.lr},
            {"max_iters", ecfg.max_iters},
            {"threshold", ecfg.binarize_threshold},
            {"distill_temperature", ecfg.distill_temperature},
            {"workers", workers}};
  m.config_json = c.dump();
  m.seeds = {ecfg.seed};
  m.inputs = {{"model", file_content_hash(model_path)},
              {"dataset", file_content_hash(dataset_path)}};
  for (const RoiRecord* roi : rois) m.outputs.push_back(out_dir + "/" + roi->id + ".expl.json");
  m.duration_ms = sw.elapsed_ms();
  write_manifest(m, out_dir + "/manifest.json");
  std::cout << "explained " << rois.size() << " RoIs into " << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& dataset_path,
                 const std::string& split, const std::string& expl_dir, const std::string& out,
                 std::uint64_t seed, int random_seeds) {
  Stopwatch sw;
  const RunManifest expl_manifest = read_manifest(expl_dir + "/manifest.json");
  const std::string model_hash = file_content_hash(model_path);
  const auto it = expl_manifest.inputs.find("model");
  if (it == expl_manifest.inputs.end() || it->second != model_hash)
    throw std::runtime_error("evaluate: explanations in " + expl_dir +
                             " were produced with a different model (hash mismatch)");

  const CgnnModel model = load_model(model_path);
  const DatasetSplit ds = normalize_features(parse_dataset(dataset_path));
  std::vector<const RoiRecord*> rois;
  for (const auto& roi : pick_split(ds, split)) rois.push_back(&roi);
  std::sort(rois.begin(), rois.end(),
            [](const RoiRecord* a, const RoiRecord* b) { return a->id < b->id; });

  std::vector<CellGraph> originals, expl_graphs;
  std::vector<std::vector<CellGraph>> randoms(static_cast<std::size_t>(random_seeds));
  std::vector<int> labels, preds;
  std::vector<std::vector<int>> kept_sets, planted_sets;
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const RoiRecord& roi = *rois[i];
    originals.push_back(build_cell_graph(roi.nuclei, roi.image_w, roi.image_h, model.graph_cfg));
    const Explanation expl = read_explanation(expl_dir + "/" + roi.id + ".expl.json");
    if (static_cast<int>(expl.mask.logits.size()) != originals.back().num_nodes)
      throw std::runtime_error("evaluate: explanation for " + roi.id +
                               " does not match the graph size");
    expl_graphs.push_back(extract_subgraph(originals.back(), expl.kept_nodes).graph);
    for (int s = 0; s < random_seeds; ++s)
      randoms[static_cast<std::size_t>(s)].push_back(random_explanation(
          originals.back(), static_cast<int>(expl.kept_nodes.size()),
          static_cast<int>(expl.kept_edges.size()),
          mix_seed(seed, i * static_cast<std::size_t>(random_seeds) + static_cast<std::size_t>(s))));
    labels.push_back(roi.label);
    preds.push_back(predict(model, originals.back()).predicted_class);
    if (!roi.planted.empty()) {
      kept_sets.push_back(expl.kept_nodes);
      planted_sets.push_back(roi.planted);
    }
  }

  const int C = model.num_classes;
  std::vector<const CellGraph*> orig_ptr, expl_ptr;
  for (const auto& g : originals) orig_ptr.push_back(&g);
  for (const auto& g : expl_graphs) expl_ptr.push_back(&g);

  EvalReport report;
  report.class_names = model.class_names;
  report.f1_all = weighted_f1(preds, labels);
  // per-class F1 via one-vs-rest restriction of the confusion matrix
  for (int c = 0; c < C; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c && preds[i] == c) ++tp;
      if (labels[i] != c && preds[i] == c) ++fp;
      if (labels[i] == c && preds[i] != c) ++fn;
    }
    const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    report.f1_per_class.push_back(p + r > 0 ? 2 * p * r / (p + r) : 0.0);
  }
  report.reductions = reduction_stats(orig_ptr, expl_ptr, labels, C);
  report.sample_counts = report.reductions.node_pct.counts;

  // CE triplet, random column averaged over the baseline seeds
  CeTriplet ce;
  for (int s = 0; s < random_seeds; ++s) {
    std::vector<const CellGraph*> rand_ptr;
    for (const auto& g : randoms[static_cast<std::size_t>(s)]) rand_ptr.push_back(&g);
    const CeTriplet t = ce_report(model, orig_ptr, expl_ptr, rand_ptr, labels, C);
    if (s == 0) {
      ce = t;
      for (auto& v : ce.random.per_class) v /= random_seeds;
      ce.random.all /= random_seeds;
    } else {
      for (std::size_t c = 0; c < t.random.per_class.size(); ++c)
        ce.random.per_class[c] += t.random.per_class[c] / random_seeds;
      ce.random.all += t.random.all / random_seeds;
    }
  }
  report.ce = ce;

  if (!kept_sets.empty()) {
    const PlantedRelevance pr = planted_relevance(kept_sets, planted_sets);
    report.has_planted = true;
    report.planted_mean_precision = pr.mean_precision;
    report.planted_mean_recall = pr.mean_recall;
  }

  {
    std::ofstream js(out + ".json");
    js << report_json(report) << "\n";
    std::ofstream txt(out + ".txt");
    txt << report_table(report);
  }
  std::cout << report_table(report);

  RunManifest m;
  m.command = "evaluate";
  m.config_json = json({{"split", split}, {"random_seeds", random_seeds}}).dump();
  m.seeds = {seed};
  m.inputs = {{"model", model_hash},
              {"dataset", file_content_hash(dataset_path)},
              {"explanations", expl_dir}};
  m.outputs = {out + ".json", out + ".txt"};
  m.duration_ms = sw.elapsed_ms();
  write_manifest(m, out + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cell-graph classifier and node-mask explainer"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthSpec spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output dataset path")->required();
  synth->add_option("--classes", spec.num_classes, "number of classes (2, 3, or 5)")
      ->check(CLI::IsMember({2, 3, 5}));
  synth->add_option("--rois-per-class", spec.rois_per_class, "train RoIs per class");
  synth->add_option("--val-per-class", spec.val_per_class, "val RoIs per class");
  synth->add_option("--test-per-class", spec.test_per_class, "test RoIs per class");
  synth->add_option("--nuclei-min", spec.nuclei_min);
  synth->add_option("--nuclei-max", spec.nuclei_max);
  synth->add_option("--cluster-min", spec.cluster_min);
  synth->add_option("--cluster-max", spec.cluster_max);
  synth->add_option("--feature-dim", spec.feature_dim);
  synth->add_option("--noise", spec.noise_scale);
  synth->add_option("--seed", spec.seed);

  // train
  auto* tr = app.add_subcommand("train", "train the graph classifier");
  std::string tr_dataset, tr_out, tr_readout = "mean", tr_merge, tr_merge_names;
  CgnnConfig ccfg;
  GraphConfig gcfg;
  tr->add_option("--dataset", tr_dataset)->required();
  tr->add_option("--out", tr_out, "model checkpoint path")->required();
  tr->add_option("--epochs", ccfg.epochs);
  tr->add_option("--lr", ccfg.lr);
  tr->add_option("--weight-decay", ccfg.weight_decay);
  tr->add_option("--batch-size", ccfg.batch_size);
  tr->add_option("--hidden", ccfg.hidden_dim);
  tr->add_option("--classifier-hidden", ccfg.classifier_hidden);
  tr->add_option("--readout", tr_readout)->check(CLI::IsMember({"mean", "sum"}));
  tr->add_flag("--coupled-decay", ccfg.coupled_decay, "fold weight decay into the gradient");
  tr->add_option("--seed", ccfg.seed);
  tr->add_option("--k", gcfg.k);
  tr->add_option("--max-edge-px", gcfg.max_edge_px);
  tr->add_flag("--mutual", gcfg.mutual, "mutual kNN symmetrization");
  tr->add_option("--merge", tr_merge, "label merge table, e.g. 0,0,1,1,2");
  tr->add_option("--merge-names", tr_merge_names, "names for merged classes");

  // explain
  auto* ex = app.add_subcommand("explain", "explain RoIs of a split");
  std::string ex_model, ex_dataset, ex_split = "test", ex_out, ex_init = "zeros";
  ExplainerConfig ecfg;
  int workers = static_cast<int>(std::thread::hardware_concurrency());
  ex->add_option("--model", ex_model)->required();
  ex->add_option("--dataset", ex_dataset)->required();
  ex->add_option("--split", ex_split)->check(CLI::IsMember({"train", "val", "test"}));
  ex->add_option("--out", ex_out, "output directory")->required();
  ex->add_option("--alpha-mask", ecfg.alpha_mask);
  ex->add_option("--alpha-entropy", ecfg.alpha_entropy);
  ex->add_option("--explainer-lr", ecfg.lr);
  ex->add_option("--max-iters", ecfg.max_iters);
  ex->add_option("--threshold", ecfg.binarize_threshold);
  ex->add_option("--temperature", ecfg.distill_temperature);
  ex->add_option("--mask-init", ex_init)->check(CLI::IsMember({"zeros", "normal"}));
  ex->add_option("--seed", ecfg.seed);
  ex->add_option("--workers", workers);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate explanations against random baselines");
  std::string ev_model, ev_dataset, ev_split = "test", ev_dir, ev_out;
  std::uint64_t ev_seed = 0;
  int ev_random_seeds = 5;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--dataset", ev_dataset)->required();
  ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--explanations", ev_dir, "directory produced by explain")->required();
  ev->add_option("--out", ev_out, "report path prefix")->required();
  ev->add_option("--seed", ev_seed);
  ev->add_option("--random-seeds", ev_random_seeds, "number of random-baseline seeds");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of all gradients");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(spec, synth_out);
    if (*tr) {
      ccfg.readout = tr_readout == "sum" ? Readout::Sum : Readout::Mean;
      return cmd_train(tr_dataset, tr_out, ccfg, gcfg, tr_merge, tr_merge_names);
    }
    if (*ex) {
      ecfg.mask_init = ex_init == "normal" ? MaskInit::Normal : MaskInit::Zeros;
      return cmd_explain(ex_model, ex_dataset, ex_split, ex_out, ecfg, workers);
    }
    if (*ev)
      return cmd_evaluate(ev_model, ev_dataset, ev_split, ev_dir, ev_out, ev_seed,
                          ev_random_seeds);
    if (*gc) return run_gradcheck(gc_seed, std::cout) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
