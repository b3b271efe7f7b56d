// wsod: command-line harness for the weakly supervised crater detector.
//
// Subcommands: generate, train, detect, eval, analyze.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "wsod/analyze.hpp"
#include "wsod/checkpoint.hpp"
#include "wsod/common.hpp"
#include "wsod/config.hpp"
#include "wsod/data.hpp"
#include "wsod/eval.hpp"
#include "wsod/model.hpp"

namespace fs = std::filesystem;
using namespace wsod;

namespace {

std::uint64_t scene_seed(std::uint64_t base, std::size_t index) {
  return base ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(index) + 1));
}

std::vector<std::string> collect_classes(const std::vector<SceneRecord>& scenes) {
  std::set<std::string> names;
  for (const auto& s : scenes) names.insert(s.classes.begin(), s.classes.end());
  std::vector<std::string> out(names.begin(), names.end());
  if (out.empty()) out.push_back("crater");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << text;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

struct LoadedModel {
  RunConfig run_config;
  std::unique_ptr<WsodModel> model;
};

// Model directories carry run_config.txt, classes.txt and checkpoint.bin.
LoadedModel load_model_dir(const std::string& dir) {
  LoadedModel lm;
  lm.run_config = RunConfig::from_file((fs::path(dir) / "run_config.txt").string());
  const auto classes = read_lines((fs::path(dir) / "classes.txt").string());
  lm.model = std::make_unique<WsodModel>(
      ModelConfig::from_run_config(lm.run_config, classes), lm.run_config.train_seed);
  load_checkpoint((fs::path(dir) / "checkpoint.bin").string(), lm.model->params());
  return lm;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  SceneSpec spec;
  spec.size = cfg.data_scene_size;
  spec.count_min = cfg.data_count_min;
  spec.count_max = cfg.data_count_max;
  spec.radius_min = cfg.data_radius_min;
  spec.radius_max = cfg.data_radius_max;
  spec.noise = cfg.data_noise;
  spec.class_label = cfg.data_class;

  std::vector<SceneRecord> scenes;
  std::map<std::size_t, std::size_t> histogram;
  for (std::size_t i = 0; i < cfg.data_scenes; ++i) {
    SceneRecord scene = generate_synthetic_scene(scene_seed(cfg.data_seed, i), spec);
    scene.id = "scene_" + std::to_string(i);
    ++histogram[scene.count];
    scenes.push_back(std::move(scene));
  }
  const std::string manifest = save_dataset(out_dir, scenes);
  write_text((fs::path(out_dir) / "generate_config.txt").string(), cfg.resolved());

  std::cout << "wrote " << scenes.size() << " scenes to " << manifest << "\n";
  std::cout << "count histogram:";
  for (const auto& [count, n] : histogram) std::cout << " " << count << ":" << n;
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const std::string& manifest, const std::string& out_dir) {
  const auto scenes = load_dataset(manifest);
  if (scenes.empty()) throw DataError("train: empty dataset " + manifest);
  const auto classes = collect_classes(scenes);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("train: cannot create " + out_dir);

  WsodModel model(ModelConfig::from_run_config(cfg, classes), cfg.train_seed);
  OptimizerConfig opt = cfg.optimizer();

  std::ofstream log((fs::path(out_dir) / "train_log.txt").string(), std::ios::trunc);
  log << "# resolved configuration\n" << cfg.resolved() << "# training\n";
  log.precision(10);

  // Checkpoints at every schedule boundary make the stop-and-retune protocol
  // reproducible from disk.
  std::set<long> boundaries;
  for (const auto& [s, lr] : opt.schedule) boundaries.insert(s);
  if (opt.batch_norm_enabled_from_step != OptimizerConfig::kNever) {
    boundaries.insert(opt.batch_norm_enabled_from_step);
  }

  const std::string final_ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
  {
    std::ostringstream cls;
    for (const auto& c : classes) cls << c << "\n";
    write_text((fs::path(out_dir) / "classes.txt").string(), cls.str());
  }
  write_text((fs::path(out_dir) / "run_config.txt").string(), cfg.resolved());

  Rng shuffle_rng(cfg.train_seed ^ 0xA5A5A5A5ull);
  long step = 0;
  bool aborted = false;
  for (std::size_t epoch = 1; epoch <= cfg.train_epochs && !aborted; ++epoch) {
    std::vector<std::size_t> order(scenes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[(std::size_t)shuffle_rng.uniform_int(0, (int)i - 1)]);
    }

    double sum_total = 0.0, sum_rpn = 0.0, sum_cls = 0.0, sum_refine = 0.0;
    std::size_t count_hits = 0;
    for (std::size_t idx : order) {
      if (boundaries.count(step)) {
        save_checkpoint(
            (fs::path(out_dir) / ("checkpoint_step_" + std::to_string(step) + ".bin")).string(),
            model.params());
        log << "checkpoint step " << step << " lr " << opt.learning_rate_at(step)
            << " batchnorm " << (model.batch_norm_enabled() ? 1 : 0) << "\n";
      }
      WsodModel::StepResult r;
      try {
        r = model.train_step(scenes[idx], step, opt);
      } catch (const NumericError& e) {
        log << "abort: " << e.what() << "\n";
        std::cerr << "wsod train: " << e.what() << "; last checkpoint retained at " << final_ckpt
                  << "\n";
        aborted = true;
        break;
      }
      sum_total += r.total;
      sum_rpn += r.rpn_loss;
      sum_cls += r.classifier_loss;
      for (double v : r.refinement_losses) sum_refine += v;
      if (r.decoded_count == scenes[idx].count) ++count_hits;
      ++step;
    }
    if (aborted) break;

    const double n = static_cast<double>(scenes.size());
    log << "epoch " << epoch << " step " << step << " loss " << sum_total / n << " rpn "
        << sum_rpn / n << " cls " << sum_cls / n << " refine " << sum_refine / n << " count_acc "
        << static_cast<double>(count_hits) / n << " lr " << opt.learning_rate_at(step - 1)
        << "\n";
    log.flush();
    save_checkpoint(final_ckpt, model.params());
  }
  if (aborted) return 3;

  save_checkpoint(final_ckpt, model.params());
  std::cout << "trained " << cfg.train_epochs << " epochs (" << step << " steps); checkpoint at "
            << final_ckpt << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

int cmd_detect(const std::string& model_dir, const std::string& manifest,
               const std::string& out_csv) {
  LoadedModel lm = load_model_dir(model_dir);
  const auto scenes = load_dataset(manifest);
  const auto& classes = lm.model->config().classes;

  std::vector<DetectionRecord> detections;
  const auto t0 = std::chrono::steady_clock::now();
  for (const SceneRecord& scene : scenes) {
    auto result = lm.model->detect(scene.image, lm.run_config.eval_nms,
                                   lm.run_config.eval_score_min);
    for (const Detection& d : result.detections) {
      detections.push_back({scene.id, classes[d.class_idx], d.box, d.score});
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  const double ips = secs > 0.0 ? static_cast<double>(scenes.size()) / secs : 0.0;

  write_detections_csv(out_csv, detections, ips);
  std::cout << "detected " << detections.size() << " boxes over " << scenes.size() << " images ("
            << ips << " images/sec) -> " << out_csv << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& detections_csv, const std::string& manifest, double iou_threshold,
             const std::string& out_csv) {
  double ips = 0.0;
  const auto detections = read_detections_csv(detections_csv, &ips);
  const auto scenes = load_dataset(manifest);
  EvalReport report = evaluate_detections(detections, scenes, iou_threshold);
  report.images_per_sec = ips;

  for (const auto& [cls, ap] : report.per_class_ap) {
    std::cout << "AP[" << cls << "] = " << ap << "\n";
  }
  std::cout << "mAP@" << iou_threshold << " = " << report.map << "\n";
  if (ips > 0.0) std::cout << "runtime " << ips << " images/sec (from detect pass)\n";
  if (!out_csv.empty()) write_eval_report_csv(out_csv, report);
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

int cmd_analyze(const std::string& model_dir, const std::string& manifest,
                const std::string& out_dir) {
  LoadedModel lm = load_model_dir(model_dir);
  const auto scenes = load_dataset(manifest);
  if (scenes.size() < 2) throw DataError("analyze: need at least two scenes");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("analyze: cannot create " + out_dir);

  std::vector<std::vector<double>> features;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    auto result = lm.model->detect(scenes[i].image, lm.run_config.eval_nms,
                                   lm.run_config.eval_score_min);
    features.push_back(result.image_feature);
    counts.push_back(scenes[i].count);
    if (i < 4) {
      write_png((fs::path(out_dir) / ("attention_" + scenes[i].id + ".png")).string(),
                render_heatmap(result.attention.weights,
                               std::max<std::size_t>(1, scenes[i].image.width /
                                                            result.attention.weights.dim(0))));
    }
  }

  PcaResult pca = pca_top2(features);
  {
    std::ofstream os((fs::path(out_dir) / "pca_projection.csv").string(), std::ios::trunc);
    os.precision(17);
    os << "image_id,count,pc1,pc2\n";
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      os << scenes[i].id << "," << counts[i] << "," << pca.projected[i][0] << ","
         << pca.projected[i][1] << "\n";
    }
  }
  write_png((fs::path(out_dir) / "pca_scatter.png").string(),
            render_scatter(pca.projected, counts));

  // Mean feature per object count, then the pairwise cosine matrix.
  std::map<std::size_t, std::vector<std::size_t>> by_count;
  for (std::size_t i = 0; i < counts.size(); ++i) by_count[counts[i]].push_back(i);
  std::vector<std::vector<double>> means;
  std::vector<std::size_t> mean_counts;
  for (const auto& [count, idxs] : by_count) {
    std::vector<double> mean(features[0].size(), 0.0);
    for (std::size_t i : idxs) {
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += features[i][j];
    }
    for (double& v : mean) v /= static_cast<double>(idxs.size());
    means.push_back(std::move(mean));
    mean_counts.push_back(count);
  }
  Tensor cosine = cosine_similarity_matrix(means);
  {
    std::ofstream os((fs::path(out_dir) / "cosine_similarity.csv").string(), std::ios::trunc);
    os.precision(17);
    os << "count";
    for (std::size_t c : mean_counts) os << ",count_" << c;
    os << "\n";
    for (std::size_t i = 0; i < means.size(); ++i) {
      os << "count_" << mean_counts[i];
      for (std::size_t j = 0; j < means.size(); ++j) os << "," << cosine.at(i, j);
      os << "\n";
    }
  }

  std::cout << "analysis written to " << out_dir << " (pca_projection.csv, pca_scatter.png, "
            << "cosine_similarity.csv, attention_*.png)\n";
  std::cout << "top-2 explained variance: " << pca.explained[0] << ", " << pca.explained[1]
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised object detection harness"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, model_dir, detections_csv;
  long seed_override = -1;
  double iou_override = -1.0;

  auto* generate = app.add_subcommand("generate", "write a synthetic count-labeled dataset");
  generate->add_option("--out", out_path, "output directory")->required();
  generate->add_option("--config", config_path, "key=value config file");
  generate->add_option("--seed", seed_override, "override data.seed and train.seed");

  auto* train = app.add_subcommand("train", "train a detector on a dataset manifest");
  train->add_option("--data", data_path, "manifest.jsonl path")->required();
  train->add_option("--out", out_path, "model output directory")->required();
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--seed", seed_override, "override data.seed and train.seed");

  auto* detect = app.add_subcommand("detect", "run detection over a dataset");
  detect->add_option("--model", model_dir, "model directory from train")->required();
  detect->add_option("--data", data_path, "manifest.jsonl path")->required();
  detect->add_option("--out", out_path, "detections CSV path")->required();

  auto* eval = app.add_subcommand("eval", "score detections against ground truth");
  eval->add_option("--detections", detections_csv, "detections CSV")->required();
  eval->add_option("--data", data_path, "manifest.jsonl path")->required();
  eval->add_option("--out", out_path, "optional report CSV path");
  eval->add_option("--config", config_path, "key=value config file");
  eval->add_option("--iou", iou_override, "override eval.iou");

  auto* analyze = app.add_subcommand("analyze", "PCA + cosine-similarity feature analysis");
  analyze->add_option("--model", model_dir, "model directory from train")->required();
  analyze->add_option("--data", data_path, "manifest.jsonl path")->required();
  analyze->add_option("--out", out_path, "analysis output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // anything but clean help output is a usage error
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.apply_file(config_path);
    if (seed_override >= 0) {
      cfg.data_seed = static_cast<std::uint64_t>(seed_override);
      cfg.train_seed = static_cast<std::uint64_t>(seed_override);
    }

    if (generate->parsed()) return cmd_generate(cfg, out_path);
    if (train->parsed()) return cmd_train(cfg, data_path, out_path);
    if (detect->parsed()) return cmd_detect(model_dir, data_path, out_path);
    if (eval->parsed()) {
      const double thr = iou_override > 0.0 ? iou_override : cfg.eval_iou;
      return cmd_eval(detections_csv, data_path, thr, out_path);
    }
    if (analyze->parsed()) return cmd_analyze(model_dir, data_path, out_path);
  } catch (const NumericError& e) {
    std::cerr << "wsod: numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "wsod: data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "wsod: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "wsod: error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
