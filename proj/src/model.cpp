#include "wsod/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wsod/common.hpp"

namespace wsod {

namespace {

constexpr double kPhiClamp = 1e-12;

Tensor transpose(const Tensor& m) {
  Tensor out({m.dim(1), m.dim(0)});
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < m.dim(1); ++j) out.at(j, i) = m.at(i, j);
  return out;
}

// Softmax over classes, per proposal column, of a [C x R] matrix.
Tensor softmax_columns(const Tensor& m) {
  const std::size_t c = m.dim(0), r = m.dim(1);
  Tensor out({c, r});
  std::vector<double> col(c);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < c; ++i) col[i] = m.at(i, j);
    auto sm = softmax(col);
    for (std::size_t i = 0; i < c; ++i) out.at(i, j) = sm[i];
  }
  return out;
}

Tensor softmax_columns_backward(const Tensor& probs, const Tensor& grad_probs) {
  const std::size_t c = probs.dim(0), r = probs.dim(1);
  Tensor out({c, r});
  std::vector<double> y(c), gy(c), gz(c);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < c; ++i) {
      y[i] = probs.at(i, j);
      gy[i] = grad_probs.at(i, j);
    }
    softmax_backward_row(y, gy, gz);
    for (std::size_t i = 0; i < c; ++i) out.at(i, j) = gz[i];
  }
  return out;
}

}  // namespace

ModelConfig ModelConfig::from_run_config(const RunConfig& rc, std::vector<std::string> classes) {
  ModelConfig mc;
  mc.image_size = rc.data_scene_size;
  mc.depth = rc.model_depth;
  mc.hidden = rc.model_hidden;
  mc.strides = rc.model_strides;
  mc.scan_style = rc.model_scan_style;
  mc.scales_px = rc.model_scales;
  mc.ratios = rc.model_ratios;
  mc.stages = rc.model_stages;
  mc.roi = rc.model_roi;
  mc.merge_radius = rc.model_merge_radius;
  mc.critical_rule = rc.model_critical_point;
  mc.r_threshold = rc.model_r_threshold;
  mc.couple_iou = rc.model_couple_iou;
  mc.refine_iou = rc.model_refine_iou;
  if (!classes.empty()) mc.classes = std::move(classes);
  return mc;
}

Tensor image_to_tensor(const GrayImage& image) {
  Tensor t({image.height, image.width, 1});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    t[i] = static_cast<double>(image.pixels[i]) / 255.0;
  }
  return t;
}

SegmentationMask attention_mask(const AttentionMap& att) {
  SegmentationMask mask;
  mask.pixels = Tensor::zeros(att.weights.shape());
  double mean = 0.0;
  for (std::size_t i = 0; i < att.weights.size(); ++i) mean += att.weights[i];
  mean /= static_cast<double>(att.weights.size());
  for (std::size_t i = 0; i < att.weights.size(); ++i) {
    mask.pixels[i] = att.weights[i] >= mean ? 1.0 : 0.0;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

WsodModel::WsodModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.strides.size() != 3) throw std::invalid_argument("WsodModel: need three conv strides");
  if (cfg_.classes.empty()) throw std::invalid_argument("WsodModel: empty class set");
  Rng rng(seed);

  // Backbone: three 3x3 conv+ReLU layers, channel ramp 1 -> d/2 -> d -> d.
  const std::size_t mid = std::max<std::size_t>(4, cfg_.depth / 2);
  backbone_.emplace_back(3, 1, mid, cfg_.strides[0], 1, true, rng);
  backbone_.emplace_back(3, mid, cfg_.depth, cfg_.strides[1], 1, true, rng);
  backbone_.emplace_back(3, cfg_.depth, cfg_.depth, cfg_.strides[2], 1, true, rng);

  stride_product_ = 1;
  std::size_t g = cfg_.image_size;
  for (int s : cfg_.strides) {
    if (s < 1) throw std::invalid_argument("WsodModel: strides must be >= 1");
    stride_product_ *= static_cast<std::size_t>(s);
    g = (g + 2 - 3) / static_cast<std::size_t>(s) + 1;
  }
  grid_ = g;

  bn_map_ = BatchNorm(cfg_.depth);
  attention_ = AttentionLayer(cfg_.depth, rng);

  const ScanOrder orders[4] = {ScanOrder::RowPrime, ScanOrder::RowPrimeReversed,
                               ScanOrder::ColPrime, ScanOrder::ColPrimeReversed};
  for (ScanOrder order : orders) {
    Scanner s;
    // Input-driven start: content has to beat the positional shortcut, so
    // the recurrent block begins at zero and the per-frame head also sees
    // the raw frame next to the LSTM state.
    s.lstm = LstmLayer(cfg_.depth, cfg_.hidden, rng, /*zero_recurrent_init=*/true);
    s.head = Linear(cfg_.hidden + cfg_.depth, 2, rng);
    s.order = order;
    scanners_.push_back(std::move(s));
  }

  const std::size_t pooled_dim = cfg_.roi * cfg_.roi * cfg_.depth;
  const std::size_t C = cfg_.classes.size();
  trunk_ = Linear(pooled_dim, cfg_.fc_dim, rng);
  midn_det1_ = Linear(cfg_.fc_dim, C, rng);
  midn_cls1_ = Linear(cfg_.fc_dim, C, rng);
  midn_det2_ = Linear(cfg_.fc_dim, C, rng);
  midn_cls2_ = Linear(cfg_.fc_dim, C, rng);
  for (std::size_t k = 0; k < cfg_.stages; ++k) {
    refine_heads_.emplace_back(cfg_.fc_dim, C + 1, rng);
  }

  for (std::size_t i = 0; i < backbone_.size(); ++i) {
    backbone_[i].register_params(params_, "backbone.conv" + std::to_string(i));
  }
  bn_map_.register_params(params_, "backbone.bn");
  attention_.register_params(params_, "attention");
  for (std::size_t i = 0; i < scanners_.size(); ++i) {
    const std::string prefix = "scanner" + std::to_string(i);
    scanners_[i].lstm.register_params(params_, prefix + ".lstm");
    scanners_[i].head.register_params(params_, prefix + ".head");
  }
  trunk_.register_params(params_, "classifier.trunk");
  midn_det1_.register_params(params_, "classifier.det1");
  midn_cls1_.register_params(params_, "classifier.cls1");
  midn_det2_.register_params(params_, "classifier.det2");
  midn_cls2_.register_params(params_, "classifier.cls2");
  for (std::size_t k = 0; k < refine_heads_.size(); ++k) {
    refine_heads_[k].register_params(params_, "classifier.refine" + std::to_string(k));
  }
}

void WsodModel::enable_batch_norm() { bn_map_.enable(); }
bool WsodModel::batch_norm_enabled() const { return bn_map_.enabled(); }

// ---------------------------------------------------------------------------
// Shared forward state
// ---------------------------------------------------------------------------

struct WsodModel::Pipeline {
  Tensor input;
  std::vector<Tensor> conv_outs;  // per backbone layer
  Tensor bn_out;
  Tensor enhanced;

  std::vector<std::vector<std::vector<double>>> frames;  // per scanner: T x D
  std::vector<Tensor> logits;                            // per scanner: T x 2
  std::vector<Tensor> posteriors;
  std::vector<std::vector<int>> paths;
  std::vector<std::vector<GridPoint>> points;
  std::vector<GridPoint> merged;
  ProposalSet proposals;

  Tensor pooled;     // P x roi^2*depth
  Tensor trunk_pre;  // P x fc
  Tensor trunk_act;
  Tensor det1, cls1, det2, cls2;  // P x C
  CombinedScores s1, s2;
  std::vector<std::size_t> retained;
  std::vector<double> phi1, phi2;
  std::vector<Tensor> refine_probs;  // per stage: (C+1) x P
  std::vector<RefinementLabels> refine_labels;
  std::vector<std::size_t> image_class_idx;
};

void WsodModel::forward_shared(const GrayImage& image, bool training, Pipeline& pipe) {
  if (image.width != cfg_.image_size || image.height != cfg_.image_size) {
    throw std::invalid_argument("WsodModel: image size " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + " does not match configured " +
                                std::to_string(cfg_.image_size));
  }
  pipe.input = image_to_tensor(image);

  Tensor x = pipe.input;
  for (auto& conv : backbone_) {
    x = conv.forward(x);
    pipe.conv_outs.push_back(x);
  }
  pipe.bn_out = bn_map_.forward(x, training);
  pipe.enhanced = attention_.forward(pipe.bn_out);

  const std::size_t h = grid_, w = grid_;
  for (auto& scanner : scanners_) {
    FeatureSequence seq = serialize(pipe.enhanced, scanner.order, cfg_.scan_style);
    auto hidden = scanner.lstm.forward(seq.frames);
    const std::size_t head_in = cfg_.hidden + cfg_.depth;
    Tensor hmat({hidden.size(), head_in});
    for (std::size_t t = 0; t < hidden.size(); ++t) {
      std::copy(hidden[t].begin(), hidden[t].end(), hmat.data() + t * head_in);
      std::copy(seq.frames[t].begin(), seq.frames[t].end(),
                hmat.data() + t * head_in + cfg_.hidden);
    }
    Tensor logits = scanner.head.forward(hmat);
    Tensor post = logits;
    softmax_rows(post);
    auto path = decode_best_path(post);
    pipe.points.push_back(critical_points(path, scanner.order, h, w, cfg_.scan_style,
                                          cfg_.critical_rule, &post));
    pipe.frames.push_back(std::move(seq.frames));
    pipe.logits.push_back(std::move(logits));
    pipe.posteriors.push_back(std::move(post));
    pipe.paths.push_back(std::move(path));
  }
  pipe.merged = merge_critical_points(pipe.points, cfg_.merge_radius);

  std::vector<double> feature_scales;
  for (double s : cfg_.scales_px) {
    feature_scales.push_back(s / static_cast<double>(stride_product_));
  }
  pipe.proposals = generate_proposals(pipe.merged, feature_scales, cfg_.ratios, h, w);
  const std::size_t P = pipe.proposals.proposals.size();
  if (P == 0) return;

  // RoI features -> shared trunk.
  const std::size_t pooled_dim = cfg_.roi * cfg_.roi * cfg_.depth;
  pipe.pooled = Tensor({P, pooled_dim});
  for (std::size_t p = 0; p < P; ++p) {
    Tensor roi = roi_pool(pipe.enhanced, pipe.proposals.proposals[p].box, cfg_.roi, cfg_.roi);
    std::copy(roi.values().begin(), roi.values().end(), pipe.pooled.data() + p * pooled_dim);
  }
  pipe.trunk_pre = trunk_.forward(pipe.pooled);
  pipe.trunk_act = pipe.trunk_pre;
  for (double& v : pipe.trunk_act.values()) v = std::max(0.0, v);

  pipe.det1 = midn_det1_.forward(pipe.trunk_act);
  pipe.cls1 = midn_cls1_.forward(pipe.trunk_act);
  pipe.s1 = midn_combine(transpose(pipe.det1), transpose(pipe.cls1));
  pipe.phi1 = image_scores(pipe.s1);

  // Coupling: the first classifier's winners are checked against the
  // attention-derived mask; failures vanish from the second stream's input.
  const std::size_t C = cfg_.classes.size();
  SegmentationMask mask = attention_mask(attention_.last_attention());
  std::vector<SegmentationMask> masks(C, mask);
  std::vector<std::optional<std::size_t>> tops(C);
  std::vector<BBox> boxes;
  for (const auto& prop : pipe.proposals.proposals) boxes.push_back(prop.box);
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < P; ++r) {
      if (pipe.s1.p.at(c, r) > pipe.s1.p.at(c, best)) best = r;
    }
    tops[c] = best;
  }
  pipe.retained = couple_filter(tops, masks, boxes, cfg_.r_threshold, cfg_.couple_iou);

  pipe.det2 = midn_det2_.forward(pipe.trunk_act);
  pipe.cls2 = midn_cls2_.forward(pipe.trunk_act);
  if (!pipe.retained.empty()) {
    Tensor det2t({C, pipe.retained.size()}), cls2t({C, pipe.retained.size()});
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t j = 0; j < pipe.retained.size(); ++j) {
        det2t.at(c, j) = pipe.det2.at(pipe.retained[j], c);
        cls2t.at(c, j) = pipe.cls2.at(pipe.retained[j], c);
      }
    }
    pipe.s2 = midn_combine(det2t, cls2t);
    pipe.phi2 = image_scores(pipe.s2);
  }

  for (std::size_t k = 0; k < refine_heads_.size(); ++k) {
    Tensor logits = refine_heads_[k].forward(pipe.trunk_act);  // P x (C+1)
    pipe.refine_probs.push_back(softmax_columns(transpose(logits)));
  }
}

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

WsodModel::StepResult WsodModel::train_step(const SceneRecord& scene, long step,
                                            const OptimizerConfig& opt) {
  if (opt.batch_norm_enabled_from_step != OptimizerConfig::kNever &&
      step >= opt.batch_norm_enabled_from_step && !bn_map_.enabled()) {
    bn_map_.enable();
  }

  params_.zero_grads();
  Pipeline pipe;
  forward_shared(scene.image, true, pipe);

  StepResult result;
  result.merged_count = pipe.merged.size();
  {
    std::vector<std::size_t> counts;
    for (const auto& path : pipe.paths) counts.push_back(collapse(path));
    result.decoded_count = median_count(counts);
  }
  const std::size_t C = cfg_.classes.size();
  const std::size_t P = pipe.proposals.proposals.size();

  // Image-level class indices and presence labels.
  std::vector<int> labels(C, 0);
  for (const std::string& name : scene.classes) {
    for (std::size_t c = 0; c < C; ++c) {
      if (cfg_.classes[c] == name) {
        labels[c] = 1;
        pipe.image_class_idx.push_back(c);
      }
    }
  }

  Tensor grad_enhanced = Tensor::zeros(pipe.enhanced.shape());

  // --- RPN: four count-supervised CTC losses through the scanners.
  for (std::size_t i = 0; i < scanners_.size(); ++i) {
    CtcGradient g = ctc_gradient(pipe.logits[i], scene.count);
    result.rpn_loss += g.loss;
    if (!g.satisfiable) continue;
    Tensor ghead = scanners_[i].head.backward(g.logit_grads);
    const std::size_t head_in = cfg_.hidden + cfg_.depth;
    const std::size_t T = ghead.dim(0);
    std::vector<std::vector<double>> gh(T, std::vector<double>(cfg_.hidden));
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(ghead.data() + t * head_in, ghead.data() + t * head_in + cfg_.hidden,
                gh[t].begin());
    }
    auto gframes = scanners_[i].lstm.backward(gh);
    for (std::size_t t = 0; t < T; ++t) {  // skip-path gradient joins the frame gradient
      const double* gx = ghead.data() + t * head_in + cfg_.hidden;
      for (std::size_t q = 0; q < cfg_.depth; ++q) gframes[t][q] += gx[q];
    }
    deserialize_accumulate(gframes, scanners_[i].order, cfg_.scan_style, grad_enhanced);
  }

  // --- Classifier: both MIDN streams plus the refinement stages.
  if (P > 0) {
    result.had_proposals = true;
    Tensor grad_trunk_act = Tensor::zeros({P, cfg_.fc_dim});

    auto stream_backward = [&](const CombinedScores& s, const std::vector<double>& phi,
                               const std::vector<std::size_t>& columns, Linear& det_head,
                               Linear& cls_head) {
      // BCE on clamped phi; a clamped coordinate contributes no gradient.
      double loss = 0.0;
      std::vector<double> gphi(C, 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        const double p = std::clamp(phi[c], kPhiClamp, 1.0 - kPhiClamp);
        loss -= labels[c] == 1 ? std::log(p) : std::log(1.0 - p);
        if (phi[c] > kPhiClamp && phi[c] < 1.0 - kPhiClamp) {
          gphi[c] = labels[c] == 1 ? -1.0 / p : 1.0 / (1.0 - p);
        }
      }
      Tensor gp({C, columns.size()});
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < columns.size(); ++j) gp.at(c, j) = gphi[c];
      }
      MidnGrads gm = midn_backward(s, gp);
      // Scatter the column subset back over the full proposal set.
      Tensor gdet = Tensor::zeros({P, C}), gcls = Tensor::zeros({P, C});
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
          gdet.at(columns[j], c) = gm.det_logits.at(c, j);
          gcls.at(columns[j], c) = gm.cls_logits.at(c, j);
        }
      }
      axpy(1.0, det_head.backward(gdet), grad_trunk_act);
      axpy(1.0, cls_head.backward(gcls), grad_trunk_act);
      return loss;
    };

    std::vector<std::size_t> all_columns(P);
    for (std::size_t r = 0; r < P; ++r) all_columns[r] = r;
    result.classifier_loss +=
        stream_backward(pipe.s1, pipe.phi1, all_columns, midn_det1_, midn_cls1_);
    if (!pipe.retained.empty()) {
      result.classifier_loss +=
          stream_backward(pipe.s2, pipe.phi2, pipe.retained, midn_det2_, midn_cls2_);
    }

    // Refinement supervision. Stage 0 is seeded by the coupled initial
    // detection: the second stream's scores on the retained proposals (the
    // first stream fills in when the filter removed everything).
    Tensor seed = Tensor::zeros({C + 1, P});
    if (!pipe.retained.empty()) {
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < pipe.retained.size(); ++j) {
          seed.at(c, pipe.retained[j]) = pipe.s2.p.at(c, j);
        }
      }
    } else {
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t r = 0; r < P; ++r) seed.at(c, r) = pipe.s1.p.at(c, r);
      }
    }

    std::vector<BBox> boxes;
    for (const auto& prop : pipe.proposals.proposals) boxes.push_back(prop.box);
    const Tensor* prev_scores = &seed;
    for (std::size_t k = 0; k < refine_heads_.size(); ++k) {
      RefinementLabels rl =
          assign_refinement_labels(*prev_scores, pipe.image_class_idx, boxes, cfg_.refine_iou);
      const double lk = refinement_loss(pipe.refine_probs[k], rl);
      result.refinement_losses.push_back(lk);
      Tensor gprobs = refinement_loss_grad(pipe.refine_probs[k], rl);
      Tensor glogits_t = softmax_columns_backward(pipe.refine_probs[k], gprobs);
      axpy(1.0, refine_heads_[k].backward(transpose(glogits_t)), grad_trunk_act);
      pipe.refine_labels.push_back(std::move(rl));
      prev_scores = &pipe.refine_probs[k];
    }

    // Trunk, RoI pooling, back to the enhanced map.
    for (std::size_t i = 0; i < grad_trunk_act.size(); ++i) {
      if (pipe.trunk_pre[i] <= 0.0) grad_trunk_act[i] = 0.0;
    }
    Tensor grad_pooled = trunk_.backward(grad_trunk_act);
    const std::size_t pooled_dim = cfg_.roi * cfg_.roi * cfg_.depth;
    for (std::size_t p = 0; p < P; ++p) {
      Tensor g({cfg_.roi, cfg_.roi, cfg_.depth},
               std::vector<double>(grad_pooled.data() + p * pooled_dim,
                                   grad_pooled.data() + (p + 1) * pooled_dim));
      roi_pool_backward(pipe.enhanced, pipe.proposals.proposals[p].box, cfg_.roi, cfg_.roi, g,
                        grad_enhanced);
    }
  }

  // --- Shared tail: attention, batch norm, backbone.
  Tensor grad = attention_.backward(grad_enhanced);
  grad = bn_map_.backward(grad);
  for (std::size_t i = backbone_.size(); i-- > 0;) {
    grad = backbone_[i].backward(grad);
  }

  result.total = total_loss(result.rpn_loss, result.classifier_loss, result.refinement_losses);
  if (!std::isfinite(result.total)) {
    throw NumericError("train_step: non-finite loss at step " + std::to_string(step));
  }

  for (auto& [name, pg] : params_.entries()) {
    if (pg.second == nullptr) continue;  // running statistics etc.
    sgd_update(*pg.first, *pg.second, step, opt);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

WsodModel::ForwardResult WsodModel::detect(const GrayImage& image, double nms_threshold,
                                           double score_min) {
  Pipeline pipe;
  forward_shared(image, false, pipe);

  ForwardResult out;
  out.enhanced = pipe.enhanced;
  out.attention = attention_.last_attention();
  out.scanner_points = pipe.points;
  for (const auto& path : pipe.paths) out.scanner_counts.push_back(collapse(path));
  out.merged_points = pipe.merged;
  out.proposals = pipe.proposals;

  // Global average pooled image descriptor (used by the analysis pass).
  out.image_feature.assign(cfg_.depth, 0.0);
  const std::size_t cells = grid_ * grid_;
  for (std::size_t p = 0; p < cells; ++p) {
    for (std::size_t d = 0; d < cfg_.depth; ++d) {
      out.image_feature[d] += pipe.enhanced[p * cfg_.depth + d];
    }
  }
  for (double& v : out.image_feature) v /= static_cast<double>(cells);

  const std::size_t P = pipe.proposals.proposals.size();
  if (P == 0) return out;
  const std::size_t C = cfg_.classes.size();

  std::vector<BBox> image_boxes;
  for (const auto& prop : pipe.proposals.proposals) {
    image_boxes.push_back(
        prop.box.scaled(static_cast<double>(stride_product_), BoxSpace::Image));
  }

  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> scores(P, 0.0);
    if (!refine_heads_.empty()) {
      // Standard multistage inference: average the stages' class posteriors.
      for (std::size_t r = 0; r < P; ++r) {
        double acc = 0.0;
        for (const Tensor& probs : pipe.refine_probs) acc += probs.at(c, r);
        scores[r] = acc / static_cast<double>(pipe.refine_probs.size());
      }
    } else {
      // No refinement configured: fall back to the coupled initial detection.
      std::size_t top1 = 0;
      for (std::size_t r = 1; r < P; ++r) {
        if (pipe.s1.p.at(c, r) > pipe.s1.p.at(c, top1)) top1 = r;
      }
      ScoredBox b1{image_boxes[top1], pipe.s1.p.at(c, top1)};
      if (!pipe.retained.empty()) {
        std::size_t top2 = 0;
        for (std::size_t j = 1; j < pipe.retained.size(); ++j) {
          if (pipe.s2.p.at(c, j) > pipe.s2.p.at(c, top2)) top2 = j;
        }
        ScoredBox b2{image_boxes[pipe.retained[top2]], pipe.s2.p.at(c, top2)};
        for (const ScoredBox& sel : select_final(b1, b2)) {
          if (sel.score >= score_min) out.detections.push_back({sel.box, c, sel.score});
        }
      } else if (b1.score >= score_min) {
        out.detections.push_back({b1.box, c, b1.score});
      }
      continue;
    }

    const auto keep = nms(image_boxes, scores, nms_threshold);
    for (std::size_t idx : keep) {
      if (scores[idx] >= score_min) {
        out.detections.push_back({image_boxes[idx], c, scores[idx]});
      }
    }
  }
  return out;
}

std::size_t WsodModel::decoded_count(const GrayImage& image) {
  Pipeline pipe;
  forward_shared(image, false, pipe);
  std::vector<std::size_t> counts;
  for (const auto& path : pipe.paths) counts.push_back(collapse(path));
  return median_count(counts);
}

std::size_t WsodModel::median_count(const std::vector<std::size_t>& scanner_counts) {
  if (scanner_counts.empty()) return 0;
  std::vector<std::size_t> sorted = scanner_counts;
  std::sort(sorted.begin(), sorted.end());
  return sorted[(sorted.size() - 1) / 2];
}

}  // namespace wsod
