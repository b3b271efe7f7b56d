#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsod/attention.hpp"
#include "wsod/classifier.hpp"
#include "wsod/config.hpp"
#include "wsod/ctc.hpp"
#include "wsod/data.hpp"
#include "wsod/nn.hpp"
#include "wsod/proposal.hpp"
#include "wsod/scan.hpp"

namespace wsod {

// Everything the network needs to be rebuilt for a checkpoint.
struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t depth = 16;   // backbone output channels
  std::size_t hidden = 32;  // LSTM hidden width
  std::size_t fc_dim = 64;  // classifier trunk width
  std::vector<int> strides = {2, 2, 1};
  ScanStyle scan_style = ScanStyle::Serpentine;
  std::vector<double> scales_px = {8.0, 16.0, 32.0};
  std::vector<double> ratios = {0.5, 1.0, 2.0};
  std::size_t stages = 3;
  std::size_t roi = 3;
  double merge_radius = 1.0;
  CriticalPointRule critical_rule = CriticalPointRule::RunMedian;
  double r_threshold = 0.5;
  double couple_iou = 0.5;
  double refine_iou = 0.5;
  std::vector<std::string> classes = {"crater"};

  static ModelConfig from_run_config(const RunConfig& rc, std::vector<std::string> classes);
};

struct Detection {
  BBox box;  // image space
  std::size_t class_idx = 0;
  double score = 0.0;
};

// The four-scanner region proposal network plus the coupled two-stream
// classifier, wired for per-image SGD with hand-derived gradients.
class WsodModel {
 public:
  WsodModel(const ModelConfig& cfg, std::uint64_t seed);

  struct StepResult {
    double rpn_loss = 0.0;
    double classifier_loss = 0.0;
    std::vector<double> refinement_losses;
    double total = 0.0;
    bool had_proposals = false;
    std::size_t merged_count = 0;   // cluster count after point merging
    std::size_t decoded_count = 0;  // lower median of the scanners' run counts
  };

  // Forward + backward + SGD on one scene. Throws NumericError on a
  // non-finite loss, leaving parameters untouched for that step.
  StepResult train_step(const SceneRecord& scene, long step, const OptimizerConfig& opt);

  struct ForwardResult {
    Tensor enhanced;  // X'
    AttentionMap attention;
    std::vector<std::vector<GridPoint>> scanner_points;
    std::vector<std::size_t> scanner_counts;
    std::vector<GridPoint> merged_points;
    ProposalSet proposals;  // feature space
    std::vector<Detection> detections;
    std::vector<double> image_feature;  // global average of X'
  };

  // Inference pass; deterministic given the checkpoint.
  ForwardResult detect(const GrayImage& image, double nms_threshold, double score_min);

  // Decoded count only (the cheap part of detect), for count accuracy.
  std::size_t decoded_count(const GrayImage& image);

  // Lower median of the four scanners' decoded run counts.
  static std::size_t median_count(const std::vector<std::size_t>& scanner_counts);

  ParamSet& params() { return params_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t feature_stride() const { return stride_product_; }
  std::size_t grid_size() const { return grid_; }

  // Flip the batch-norm layers live (the schedule's insertion event).
  void enable_batch_norm();
  bool batch_norm_enabled() const;

 private:
  struct Scanner {
    LstmLayer lstm;
    Linear head;  // hidden -> 2 logits per frame
    ScanOrder order;
  };

  struct Pipeline;  // full forward state for one image (internal)
  void forward_shared(const GrayImage& image, bool training, Pipeline& pipe);

  ModelConfig cfg_;
  std::size_t stride_product_ = 1;
  std::size_t grid_ = 0;

  std::vector<ConvLayer> backbone_;
  BatchNorm bn_map_;
  AttentionLayer attention_;
  std::vector<Scanner> scanners_;
  BatchNorm bn_roi_;
  Linear trunk_;
  Linear midn_det1_, midn_cls1_, midn_det2_, midn_cls2_;
  std::vector<Linear> refine_heads_;
  ParamSet params_;
};

// Attention-derived segmentation mask: cells at or above the mean weight.
SegmentationMask attention_mask(const AttentionMap& att);

Tensor image_to_tensor(const GrayImage& image);

}  // namespace wsod
