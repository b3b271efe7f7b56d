// Test-side network assemblies for finite-difference verification. These
// compose the production layers exactly the way the model does, but with the
// discrete structure (proposal boxes, refinement labels) held fixed so the
// loss is differentiable everywhere the analytic gradient claims to be.
#pragma once

#include <vector>

#include "wsod/attention.hpp"
#include "wsod/classifier.hpp"
#include "wsod/ctc.hpp"
#include "wsod/nn.hpp"
#include "wsod/proposal.hpp"
#include "wsod/rng.hpp"
#include "wsod/scan.hpp"

namespace wsod::testing {

// conv -> ReLU -> attention -> four scanners -> summed count-CTC loss.
struct RpnTestNet {
  ConvLayer conv;
  AttentionLayer attention;
  struct Scanner {
    LstmLayer lstm;
    Linear head;
    ScanOrder order;
  };
  std::vector<Scanner> scanners;
  ParamSet params;

  RpnTestNet(std::size_t depth, std::size_t hidden, Rng& rng)
      : conv(3, 1, depth, 2, 1, true, rng), attention(depth, rng) {
    const ScanOrder orders[4] = {ScanOrder::RowPrime, ScanOrder::RowPrimeReversed,
                                 ScanOrder::ColPrime, ScanOrder::ColPrimeReversed};
    for (ScanOrder o : orders) {
      scanners.push_back({LstmLayer(depth, hidden, rng, /*zero_recurrent_init=*/true),
                          Linear(hidden + depth, 2, rng), o});
    }
    conv.register_params(params, "conv");
    attention.register_params(params, "attention");
    for (std::size_t i = 0; i < 4; ++i) {
      scanners[i].lstm.register_params(params, "s" + std::to_string(i) + ".lstm");
      scanners[i].head.register_params(params, "s" + std::to_string(i) + ".head");
    }
  }

  double loss(const Tensor& image, std::size_t count) {
    Tensor x = conv.forward(image);
    Tensor enhanced = attention.forward(x);
    double total = 0.0;
    for (auto& s : scanners) {
      FeatureSequence seq = serialize(enhanced, s.order);
      auto hs = s.lstm.forward(seq.frames);
      const std::size_t hid = hs[0].size(), depth = seq.frames[0].size();
      Tensor hmat({hs.size(), hid + depth});
      for (std::size_t t = 0; t < hs.size(); ++t) {
        std::copy(hs[t].begin(), hs[t].end(), hmat.data() + t * (hid + depth));
        std::copy(seq.frames[t].begin(), seq.frames[t].end(),
                  hmat.data() + t * (hid + depth) + hid);
      }
      Tensor logits = s.head.forward(hmat);
      Tensor post = logits;
      softmax_rows(post);
      total += ctc_loss(post, count);
    }
    return total;
  }

  // Forward + backward, leaving gradients in `params`.
  double loss_and_grads(const Tensor& image, std::size_t count) {
    params.zero_grads();
    Tensor x = conv.forward(image);
    Tensor enhanced = attention.forward(x);
    Tensor grad_enhanced = Tensor::zeros(enhanced.shape());
    double total = 0.0;
    const std::size_t h = enhanced.dim(0), w = enhanced.dim(1);
    for (auto& s : scanners) {
      FeatureSequence seq = serialize(enhanced, s.order);
      auto hs = s.lstm.forward(seq.frames);
      const std::size_t hid = hs[0].size(), depth = seq.frames[0].size();
      const std::size_t head_in = hid + depth;
      Tensor hmat({hs.size(), head_in});
      for (std::size_t t = 0; t < hs.size(); ++t) {
        std::copy(hs[t].begin(), hs[t].end(), hmat.data() + t * head_in);
        std::copy(seq.frames[t].begin(), seq.frames[t].end(),
                  hmat.data() + t * head_in + hid);
      }
      Tensor logits = s.head.forward(hmat);
      CtcGradient g = ctc_gradient(logits, count);
      total += g.loss;
      Tensor ghead = s.head.backward(g.logit_grads);
      std::vector<std::vector<double>> gh(hs.size(), std::vector<double>(hid));
      for (std::size_t t = 0; t < hs.size(); ++t) {
        std::copy(ghead.data() + t * head_in, ghead.data() + t * head_in + hid, gh[t].begin());
      }
      auto gframes = s.lstm.backward(gh);
      for (std::size_t t = 0; t < hs.size(); ++t) {
        const double* gx = ghead.data() + t * head_in + hid;
        for (std::size_t q = 0; q < depth; ++q) gframes[t][q] += gx[q];
      }
      deserialize_accumulate(gframes, s.order, ScanStyle::Serpentine, grad_enhanced);
    }
    (void)h;
    (void)w;
    Tensor gx = attention.backward(grad_enhanced);
    conv.backward(gx);
    return total;
  }
};

// Fixed proposals/labels classifier head stack: roi_pool -> trunk -> ReLU ->
// two-stream MIDN + one refinement stage, gradients w.r.t. the feature map.
struct HeadTestNet {
  Linear trunk, det, cls, refine;
  std::vector<BBox> boxes;
  std::vector<int> labels;           // per class, image-level
  RefinementLabels refine_labels;    // per proposal, fixed
  std::size_t roi, depth, fc, C;
  ParamSet params;

  HeadTestNet(std::size_t roi_, std::size_t depth_, std::size_t fc_, std::size_t classes,
              std::vector<BBox> boxes_, std::vector<int> labels_, RefinementLabels rl, Rng& rng)
      : trunk(roi_ * roi_ * depth_, fc_, rng),
        det(fc_, classes, rng),
        cls(fc_, classes, rng),
        refine(fc_, classes + 1, rng),
        boxes(std::move(boxes_)),
        labels(std::move(labels_)),
        refine_labels(std::move(rl)),
        roi(roi_),
        depth(depth_),
        fc(fc_),
        C(classes) {
    trunk.register_params(params, "trunk");
    det.register_params(params, "det");
    cls.register_params(params, "cls");
    refine.register_params(params, "refine");
  }

  Tensor pool(const Tensor& map) {
    const std::size_t P = boxes.size(), dim = roi * roi * depth;
    Tensor pooled({P, dim});
    for (std::size_t p = 0; p < P; ++p) {
      Tensor r = roi_pool(map, boxes[p], roi, roi);
      std::copy(r.values().begin(), r.values().end(), pooled.data() + p * dim);
    }
    return pooled;
  }

  static Tensor transpose(const Tensor& m) {
    Tensor out({m.dim(1), m.dim(0)});
    for (std::size_t i = 0; i < m.dim(0); ++i)
      for (std::size_t j = 0; j < m.dim(1); ++j) out.at(j, i) = m.at(i, j);
    return out;
  }

  static Tensor softmax_cols(const Tensor& m) {
    Tensor out({m.dim(0), m.dim(1)});
    std::vector<double> col(m.dim(0));
    for (std::size_t j = 0; j < m.dim(1); ++j) {
      for (std::size_t i = 0; i < m.dim(0); ++i) col[i] = m.at(i, j);
      auto sm = softmax(col);
      for (std::size_t i = 0; i < m.dim(0); ++i) out.at(i, j) = sm[i];
    }
    return out;
  }

  double loss(const Tensor& map) {
    Tensor pooled = pool(map);
    Tensor pre = trunk.forward(pooled);
    Tensor act = pre;
    for (double& v : act.values()) v = std::max(0.0, v);
    CombinedScores s = midn_combine(transpose(det.forward(act)), transpose(cls.forward(act)));
    const double cls_loss = classification_loss(image_scores(s), labels);
    Tensor probs = softmax_cols(transpose(refine.forward(act)));
    return cls_loss + refinement_loss(probs, refine_labels);
  }

  // Gradient of loss w.r.t. the feature map, with head params fixed.
  Tensor map_grads(const Tensor& map) {
    params.zero_grads();
    const std::size_t P = boxes.size(), dim = roi * roi * depth;
    Tensor pooled = pool(map);
    Tensor pre = trunk.forward(pooled);
    Tensor act = pre;
    for (double& v : act.values()) v = std::max(0.0, v);

    Tensor det_logits = det.forward(act), cls_logits = cls.forward(act);
    CombinedScores s = midn_combine(transpose(det_logits), transpose(cls_logits));
    auto phi = image_scores(s);
    auto gphi = classification_loss_grad(phi, labels);
    Tensor gp({C, P});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t r = 0; r < P; ++r) gp.at(c, r) = gphi[c];
    MidnGrads gm = midn_backward(s, gp);

    Tensor grad_act = det.backward(transpose(gm.det_logits));
    axpy(1.0, cls.backward(transpose(gm.cls_logits)), grad_act);

    Tensor refine_logits = refine.forward(act);
    Tensor probs = softmax_cols(transpose(refine_logits));
    Tensor gprobs = refinement_loss_grad(probs, refine_labels);
    Tensor gz({C + 1, P});
    std::vector<double> y(C + 1), gy(C + 1), out(C + 1);
    for (std::size_t j = 0; j < P; ++j) {
      for (std::size_t i = 0; i <= C; ++i) {
        y[i] = probs.at(i, j);
        gy[i] = gprobs.at(i, j);
      }
      softmax_backward_row(y, gy, out);
      for (std::size_t i = 0; i <= C; ++i) gz.at(i, j) = out[i];
    }
    axpy(1.0, refine.backward(transpose(gz)), grad_act);

    for (std::size_t i = 0; i < grad_act.size(); ++i) {
      if (pre[i] <= 0.0) grad_act[i] = 0.0;
    }
    Tensor grad_pooled = trunk.backward(grad_act);
    Tensor grad_map = Tensor::zeros(map.shape());
    for (std::size_t p = 0; p < P; ++p) {
      Tensor g({roi, roi, depth},
               std::vector<double>(grad_pooled.data() + p * dim,
                                   grad_pooled.data() + (p + 1) * dim));
      roi_pool_backward(map, boxes[p], roi, roi, g, grad_map);
    }
    return grad_map;
  }
};

}  // namespace wsod::testing
