#pragma once

#include <map>
#include <string>
#include <vector>

#include "wsod/data.hpp"
#include "wsod/proposal.hpp"

namespace wsod {

struct DetectionRecord {
  std::string image_id;
  std::string class_name;
  BBox box;  // image space
  double score = 0.0;
};

struct EvalReport {
  std::map<std::string, double> per_class_ap;
  double map = 0.0;
  std::size_t total_detections = 0;
  std::size_t total_ground_truth = 0;
  double images_per_sec = 0.0;  // carried over from the detect pass when known
  // Classes detected but absent from the manifest; excluded from the mean.
  std::vector<std::string> unknown_classes;
};

// Single-threshold PASCAL-style evaluation: detections sorted by score,
// greedy one-to-one matching at IoU >= threshold, all-points interpolated AP,
// mAP = mean over manifest classes.
EvalReport evaluate_detections(const std::vector<DetectionRecord>& detections,
                               const std::vector<SceneRecord>& scenes, double iou_threshold);

// All-points interpolated AP from a ranked TP/FP sequence.
double average_precision(const std::vector<bool>& is_tp_by_rank, std::size_t num_ground_truth);

// Detections CSV: header image_id,class,cx,cy,w,h,score with optional
// "# key=value" comment lines (images_per_sec rides along here).
void write_detections_csv(const std::string& path, const std::vector<DetectionRecord>& detections,
                          double images_per_sec);
std::vector<DetectionRecord> read_detections_csv(const std::string& path,
                                                 double* images_per_sec = nullptr);

void write_eval_report_csv(const std::string& path, const EvalReport& report);

}  // namespace wsod
