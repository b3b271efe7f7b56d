#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wsod/ctc.hpp"
#include "wsod/nn.hpp"
#include "wsod/scan.hpp"

namespace wsod {

// Flat key=value run configuration. Every run echoes the resolved map so the
// log alone reproduces it; unknown keys are rejected outright.
struct RunConfig {
  // data.*
  std::size_t data_scene_size = 64;
  std::size_t data_scenes = 500;
  std::size_t data_count_min = 1;
  std::size_t data_count_max = 4;
  double data_radius_min = 7.0;
  double data_radius_max = 9.0;
  double data_noise = 0.12;
  std::string data_class = "crater";
  std::uint64_t data_seed = 1;

  // model.*
  ScanStyle model_scan_style = ScanStyle::Serpentine;
  std::size_t model_depth = 16;
  std::size_t model_hidden = 32;
  std::vector<int> model_strides = {2, 2, 1};
  std::vector<double> model_scales = {8.0, 16.0, 32.0};  // pixels
  std::vector<double> model_ratios = {0.5, 1.0, 2.0};
  std::size_t model_stages = 3;
  std::size_t model_roi = 3;
  double model_merge_radius = 1.0;
  CriticalPointRule model_critical_point = CriticalPointRule::RunMedian;
  double model_r_threshold = 0.5;
  double model_couple_iou = 0.5;
  double model_refine_iou = 0.5;

  // train.*
  double train_lr = 0.001;
  std::vector<std::pair<long, double>> train_schedule;  // (step, lr)
  long train_batchnorm_step = OptimizerConfig::kNever;
  std::size_t train_epochs = 30;
  std::uint64_t train_seed = 1;

  // eval.*
  double eval_iou = 0.5;
  double eval_nms = 0.3;
  double eval_score_min = 0.05;

  OptimizerConfig optimizer() const;

  // Parse "key=value" lines ('#' comments); later files/sets win.
  static RunConfig from_file(const std::string& path);
  void apply(const std::string& key, const std::string& value);
  void apply_file(const std::string& path);

  // Sorted key=value lines of the resolved configuration.
  std::string resolved() const;
};

}  // namespace wsod
