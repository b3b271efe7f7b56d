#include "wsod/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "wsod/nn.hpp"

namespace wsod {

namespace {
void check_matrix_pair(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("midn: score matrices must be 2-D");
  if (!a.same_shape(b)) {
    throw std::invalid_argument("midn: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  if (a.dim(0) == 0 || a.dim(1) == 0) throw std::invalid_argument("midn: empty score matrix");
}
}  // namespace

CombinedScores midn_combine(const Tensor& det_logits, const Tensor& cls_logits) {
  check_matrix_pair(det_logits, cls_logits);
  const std::size_t c = det_logits.dim(0), r = det_logits.dim(1);

  CombinedScores out;
  out.det_probs = det_logits;
  softmax_rows(out.det_probs);  // over proposals, per class

  out.cls_probs = Tensor({c, r});
  std::vector<double> col(c), sm;
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < c; ++i) col[i] = cls_logits.at(i, j);
    sm = softmax(col);  // over classes, per proposal
    for (std::size_t i = 0; i < c; ++i) out.cls_probs.at(i, j) = sm[i];
  }

  out.p = Tensor({c, r});
  for (std::size_t i = 0; i < c * r; ++i) out.p[i] = out.det_probs[i] * out.cls_probs[i];
  return out;
}

std::vector<double> image_scores(const CombinedScores& scores) {
  const std::size_t c = scores.p.dim(0), r = scores.p.dim(1);
  std::vector<double> phi(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < r; ++j) phi[i] += scores.p.at(i, j);
  }
  return phi;
}

double classification_loss(const std::vector<double>& phi, const std::vector<int>& labels) {
  if (phi.size() != labels.size()) throw std::invalid_argument("classification_loss: size mismatch");
  double loss = 0.0;
  for (std::size_t c = 0; c < phi.size(); ++c) {
    if (!(phi[c] > 0.0 && phi[c] < 1.0)) {
      throw std::invalid_argument("classification_loss: phi[" + std::to_string(c) +
                                  "] = " + std::to_string(phi[c]) + " outside (0,1)");
    }
    if (labels[c] != 0 && labels[c] != 1) {
      throw std::invalid_argument("classification_loss: labels must be 0/1");
    }
    loss -= labels[c] == 1 ? std::log(phi[c]) : std::log(1.0 - phi[c]);
  }
  return loss;
}

std::vector<double> classification_loss_grad(const std::vector<double>& phi,
                                             const std::vector<int>& labels) {
  std::vector<double> g(phi.size());
  for (std::size_t c = 0; c < phi.size(); ++c) {
    g[c] = labels[c] == 1 ? -1.0 / phi[c] : 1.0 / (1.0 - phi[c]);
  }
  return g;
}

MidnGrads midn_backward(const CombinedScores& scores, const Tensor& grad_p) {
  const std::size_t c = scores.p.dim(0), r = scores.p.dim(1);
  if (!grad_p.same_shape(scores.p)) throw std::invalid_argument("midn_backward: grad shape");

  MidnGrads g;
  g.det_logits = Tensor::zeros({c, r});
  g.cls_logits = Tensor::zeros({c, r});

  // d/dA = grad_p .* B, then row-softmax backward per class.
  std::vector<double> row_y(r), row_g(r), row_out(r);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      row_y[j] = scores.det_probs.at(i, j);
      row_g[j] = grad_p.at(i, j) * scores.cls_probs.at(i, j);
    }
    softmax_backward_row(row_y, row_g, row_out);
    for (std::size_t j = 0; j < r; ++j) g.det_logits.at(i, j) = row_out[j];
  }

  // d/dB = grad_p .* A, then column-softmax backward per proposal.
  std::vector<double> col_y(c), col_g(c), col_out(c);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < c; ++i) {
      col_y[i] = scores.cls_probs.at(i, j);
      col_g[i] = grad_p.at(i, j) * scores.det_probs.at(i, j);
    }
    softmax_backward_row(col_y, col_g, col_out);
    for (std::size_t i = 0; i < c; ++i) g.cls_logits.at(i, j) = col_out[i];
  }
  return g;
}

double seg_overlap(const SegmentationMask& mask, const BBox& box) {
  if (mask.pixels.rank() != 2) throw std::invalid_argument("seg_overlap: mask must be 2-D");
  const std::size_t h = mask.pixels.dim(0), w = mask.pixels.dim(1);
  std::size_t total = 0, inside = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (mask.pixels.at(r, c) == 0.0) continue;
      ++total;
      const double x = static_cast<double>(c) + 0.5, y = static_cast<double>(r) + 0.5;
      if (x >= box.x0() && x <= box.x1() && y >= box.y0() && y <= box.y1()) ++inside;
    }
  }
  if (total == 0) {
    std::cerr << "[wsod] warning: seg_overlap on empty mask, returning 0\n";
    return 0.0;
  }
  return static_cast<double>(inside) / static_cast<double>(total);
}

std::vector<std::size_t> couple_filter(const std::vector<std::optional<std::size_t>>& top_per_class,
                                       const std::vector<SegmentationMask>& masks,
                                       const std::vector<BBox>& proposals, double r_threshold,
                                       double iou_threshold) {
  if (top_per_class.size() != masks.size()) {
    throw std::invalid_argument("couple_filter: one mask per class required");
  }
  if (r_threshold < 0.0 || r_threshold > 1.0 || iou_threshold < 0.0 || iou_threshold > 1.0) {
    throw std::invalid_argument("couple_filter: thresholds must lie in [0,1]");
  }
  std::vector<bool> removed(proposals.size(), false);
  for (std::size_t c = 0; c < top_per_class.size(); ++c) {
    if (!top_per_class[c].has_value()) continue;
    const std::size_t top = *top_per_class[c];
    if (top >= proposals.size()) throw std::invalid_argument("couple_filter: top index out of range");
    const double rc = seg_overlap(masks[c], proposals[top]);
    if (rc >= r_threshold) continue;  // overlap fine, keep everything
    removed[top] = true;
    for (std::size_t j = 0; j < proposals.size(); ++j) {
      if (j != top && iou(proposals[top], proposals[j]) > iou_threshold) removed[j] = true;
    }
  }
  std::vector<std::size_t> retained;
  for (std::size_t j = 0; j < proposals.size(); ++j) {
    if (!removed[j]) retained.push_back(j);
  }
  return retained;
}

std::vector<ScoredBox> select_final(const ScoredBox& top1, const ScoredBox& top2) {
  if (iou(top1.box, top2.box) > 0.5) return {top2};
  return {top1, top2};
}

RefinementLabels assign_refinement_labels(const Tensor& stage_scores,
                                          const std::vector<std::size_t>& image_classes,
                                          const std::vector<BBox>& proposals,
                                          double iou_threshold) {
  if (stage_scores.rank() != 2) throw std::invalid_argument("assign_refinement_labels: 2-D scores");
  if (stage_scores.dim(0) < 2) {
    throw std::invalid_argument("assign_refinement_labels: need a background row");
  }
  const std::size_t num_classes = stage_scores.dim(0) - 1;
  const std::size_t num_props = stage_scores.dim(1);
  if (num_props == 0 || proposals.size() != num_props) {
    throw std::invalid_argument("assign_refinement_labels: no proposals or count mismatch");
  }

  RefinementLabels out;
  out.background = num_classes;
  out.label.assign(num_props, num_classes);
  for (std::size_t c : image_classes) {
    if (c >= num_classes) throw std::invalid_argument("assign_refinement_labels: class out of range");
    std::size_t best = 0;
    for (std::size_t r = 1; r < num_props; ++r) {
      if (stage_scores.at(c, r) > stage_scores.at(c, best)) best = r;  // ties keep lowest index
    }
    out.label[best] = c;
    for (std::size_t r = 0; r < num_props; ++r) {
      if (r != best && iou(proposals[best], proposals[r]) >= iou_threshold) out.label[r] = c;
    }
  }
  return out;
}

double refinement_loss(const Tensor& stage_probs, const RefinementLabels& labels) {
  if (stage_probs.rank() != 2) throw std::invalid_argument("refinement_loss: 2-D probs expected");
  const std::size_t num_props = stage_probs.dim(1);
  if (labels.label.size() != num_props) throw std::invalid_argument("refinement_loss: label count");
  double loss = 0.0;
  bool clamped = false;
  for (std::size_t r = 0; r < num_props; ++r) {
    double p = stage_probs.at(labels.label[r], r);
    if (p < 1e-12) {
      p = 1e-12;
      clamped = true;
    }
    loss -= std::log(p);
  }
  if (clamped) {
    std::cerr << "[wsod] warning: refinement_loss clamped a zero probability at 1e-12\n";
  }
  return loss / static_cast<double>(num_props);
}

Tensor refinement_loss_grad(const Tensor& stage_probs, const RefinementLabels& labels) {
  const std::size_t num_props = stage_probs.dim(1);
  Tensor g = Tensor::zeros(stage_probs.shape());
  for (std::size_t r = 0; r < num_props; ++r) {
    const double p = std::max(1e-12, stage_probs.at(labels.label[r], r));
    g.at(labels.label[r], r) = -1.0 / (p * static_cast<double>(num_props));
  }
  return g;
}

double total_loss(double rpn_loss, double classifier_loss,
                  const std::vector<double>& refinement_losses) {
  double total = rpn_loss + classifier_loss;
  for (double l : refinement_losses) total += l;
  return total;
}

}  // namespace wsod
