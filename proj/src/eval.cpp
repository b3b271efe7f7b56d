#include "wsod/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "wsod/common.hpp"

namespace wsod {

double average_precision(const std::vector<bool>& is_tp_by_rank, std::size_t num_ground_truth) {
  if (num_ground_truth == 0) return 0.0;
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < is_tp_by_rank.size(); ++k) {
    if (is_tp_by_rank[k]) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_ground_truth));
  }
  // All-points interpolation: integrate max-to-the-right precision over
  // recall increments.
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    if (recall[k] <= prev_recall) continue;
    double p_max = 0.0;
    for (std::size_t j = k; j < precision.size(); ++j) p_max = std::max(p_max, precision[j]);
    ap += (recall[k] - prev_recall) * p_max;
    prev_recall = recall[k];
  }
  return ap;
}

EvalReport evaluate_detections(const std::vector<DetectionRecord>& detections,
                               const std::vector<SceneRecord>& scenes, double iou_threshold) {
  EvalReport report;
  report.total_detections = detections.size();

  // Per image and class: ground-truth boxes (single-class scenes carry their
  // class set for every box).
  std::set<std::string> classes;
  std::map<std::string, std::map<std::string, std::vector<BBox>>> gt;  // class -> image -> boxes
  for (const SceneRecord& scene : scenes) {
    for (const std::string& cls : scene.classes) {
      classes.insert(cls);
      auto& boxes = gt[cls][scene.id];
      boxes.insert(boxes.end(), scene.gt_boxes.begin(), scene.gt_boxes.end());
      report.total_ground_truth += scene.gt_boxes.size();
    }
  }

  std::set<std::string> det_classes;
  for (const auto& d : detections) det_classes.insert(d.class_name);
  for (const std::string& cls : det_classes) {
    if (!classes.count(cls)) {
      report.unknown_classes.push_back(cls);
      std::cerr << "[wsod] eval: class '" << cls
                << "' has detections but no ground truth; excluded from mAP\n";
    }
  }

  for (const std::string& cls : classes) {
    // Rank this class's detections by score (stable on ties).
    std::vector<const DetectionRecord*> ranked;
    for (const auto& d : detections) {
      if (d.class_name == cls) ranked.push_back(&d);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const DetectionRecord* a, const DetectionRecord* b) {
                       return a->score > b->score;
                     });

    std::size_t num_gt = 0;
    for (const auto& [img, boxes] : gt[cls]) num_gt += boxes.size();

    std::map<std::string, std::vector<bool>> used;
    for (const auto& [img, boxes] : gt[cls]) used[img].assign(boxes.size(), false);

    std::vector<bool> tp;
    for (const DetectionRecord* d : ranked) {
      bool matched = false;
      auto it = gt[cls].find(d->image_id);
      if (it != gt[cls].end()) {
        const auto& boxes = it->second;
        auto& flags = used[d->image_id];
        double best = iou_threshold;
        std::size_t best_idx = boxes.size();
        for (std::size_t g = 0; g < boxes.size(); ++g) {
          if (flags[g]) continue;
          const double v = iou(d->box, boxes[g]);
          if (v >= best) {
            best = v;
            best_idx = g;
          }
        }
        if (best_idx < boxes.size()) {
          flags[best_idx] = true;
          matched = true;
        }
      }
      tp.push_back(matched);
    }
    report.per_class_ap[cls] = average_precision(tp, num_gt);
  }

  if (!report.per_class_ap.empty()) {
    double sum = 0.0;
    for (const auto& [cls, ap] : report.per_class_ap) sum += ap;
    report.map = sum / static_cast<double>(report.per_class_ap.size());
  }
  return report;
}

void write_detections_csv(const std::string& path, const std::vector<DetectionRecord>& detections,
                          double images_per_sec) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("write_detections_csv: cannot open " + path);
  os.precision(17);
  if (images_per_sec > 0.0) os << "# images_per_sec=" << images_per_sec << "\n";
  os << "image_id,class,cx,cy,w,h,score\n";
  for (const auto& d : detections) {
    os << d.image_id << "," << d.class_name << "," << d.box.cx << "," << d.box.cy << ","
       << d.box.w << "," << d.box.h << "," << d.score << "\n";
  }
}

std::vector<DetectionRecord> read_detections_csv(const std::string& path,
                                                 double* images_per_sec) {
  std::ifstream is(path);
  if (!is) throw DataError("read_detections_csv: cannot open " + path);
  std::vector<DetectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("images_per_sec=");
      if (pos != std::string::npos && images_per_sec) {
        *images_per_sec = std::stod(line.substr(pos + 15));
      }
      continue;
    }
    if (!header_seen) {
      if (line != "image_id,class,cx,cy,w,h,score") {
        throw DataError("read_detections_csv: unexpected header at line " +
                        std::to_string(line_no));
      }
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7) {
      throw DataError("read_detections_csv: line " + std::to_string(line_no) +
                      ": expected 7 fields");
    }
    DetectionRecord d;
    d.image_id = fields[0];
    d.class_name = fields[1];
    try {
      d.box = BBox{std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4]),
                   std::stod(fields[5]), BoxSpace::Image};
      d.score = std::stod(fields[6]);
    } catch (const std::exception&) {
      throw DataError("read_detections_csv: line " + std::to_string(line_no) + ": bad number");
    }
    out.push_back(std::move(d));
  }
  if (!header_seen) throw DataError("read_detections_csv: missing header in " + path);
  return out;
}

void write_eval_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("write_eval_report_csv: cannot open " + path);
  os.precision(17);
  os << "metric,value\n";
  for (const auto& [cls, ap] : report.per_class_ap) os << "ap_" << cls << "," << ap << "\n";
  os << "map," << report.map << "\n";
  os << "detections," << report.total_detections << "\n";
  os << "ground_truth," << report.total_ground_truth << "\n";
  os << "images_per_sec," << report.images_per_sec << "\n";
}

}  // namespace wsod
