#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "wsod/proposal.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

// Two-stream multiple-instance scoring plus the coupled selection and
// multi-stage refinement that sit on top of it. Matrices are
// [classes x proposals] throughout.

struct CombinedScores {
  Tensor p;          // elementwise product of the two normalized streams
  Tensor det_probs;  // softmax over proposals, per class row
  Tensor cls_probs;  // softmax over classes, per proposal column
};

// Stream A softmaxes each class row over proposals (where is class c?);
// stream B softmaxes each proposal column over classes (what is region r?).
CombinedScores midn_combine(const Tensor& det_logits, const Tensor& cls_logits);

// phi_c = sum_r p[c][r]
std::vector<double> image_scores(const CombinedScores& scores);

// Per-class binary cross entropy over the image scores.
double classification_loss(const std::vector<double>& phi, const std::vector<int>& labels);

// d(loss)/d(phi_c)
std::vector<double> classification_loss_grad(const std::vector<double>& phi,
                                             const std::vector<int>& labels);

// Given d(loss)/dp, pushes gradients back through both softmax streams to the
// two logit matrices.
struct MidnGrads {
  Tensor det_logits;
  Tensor cls_logits;
};
MidnGrads midn_backward(const CombinedScores& scores, const Tensor& grad_p);

// Boolean mask on the grid a box is compared against.
struct SegmentationMask {
  Tensor pixels;  // [H x W], entries 0/1
};

// |mask inside box| / |mask|; a cell counts as inside when its center falls
// in the box. Empty mask gives 0.
double seg_overlap(const SegmentationMask& mask, const BBox& box);

// Coupled-selection filter: for each class whose top box overlaps its
// segmentation mask too little, drop that box and its IoU > iou_threshold
// neighbors from the second classifier's input. Returns the retained
// proposal indices (ascending).
std::vector<std::size_t> couple_filter(const std::vector<std::optional<std::size_t>>& top_per_class,
                                       const std::vector<SegmentationMask>& masks,
                                       const std::vector<BBox>& proposals, double r_threshold,
                                       double iou_threshold);

struct ScoredBox {
  BBox box;
  double score = 0.0;
};

// Over 50% IoU the second classifier's box wins; otherwise keep both.
std::vector<ScoredBox> select_final(const ScoredBox& top1, const ScoredBox& top2);

// Per-proposal stage labels; values in [0, num_classes) are object classes,
// num_classes is background.
struct RefinementLabels {
  std::vector<std::size_t> label;
  std::size_t background = 0;
};

// stage_scores is [(C+1) x R] with the last row background. For each image
// class c: the argmax proposal (ties toward the lowest index) becomes pseudo
// ground truth; it and every proposal with IoU >= iou_threshold against it
// get label c; the rest stay background. Later classes overwrite earlier.
RefinementLabels assign_refinement_labels(const Tensor& stage_scores,
                                          const std::vector<std::size_t>& image_classes,
                                          const std::vector<BBox>& proposals, double iou_threshold);

// Mean cross entropy of the labeled entries of a column-stochastic
// [(C+1) x R] probability matrix; probabilities clamp at 1e-12.
double refinement_loss(const Tensor& stage_probs, const RefinementLabels& labels);

// d(loss)/d(stage_probs); pair with a column softmax backward.
Tensor refinement_loss_grad(const Tensor& stage_probs, const RefinementLabels& labels);

// Unweighted sum of the pipeline objectives.
double total_loss(double rpn_loss, double classifier_loss,
                  const std::vector<double>& refinement_losses);

}  // namespace wsod
