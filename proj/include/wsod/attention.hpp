#pragma once

#include <string>

#include "wsod/nn.hpp"
#include "wsod/rng.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

// Spatially normalized attention: a learned 1x1 projection of the depth
// dimension to a scalar per cell, softmaxed over all H*W cells, so the
// weights are nonnegative and sum to 1.
struct AttentionMap {
  Tensor weights;  // [H x W]
};

AttentionMap compute_attention(const Tensor& map, const Tensor& projection);

// X'[i,j,d] = X[i,j,d] * (1 + A[i,j])
Tensor enhance(const Tensor& map, const AttentionMap& att);

// Attention + enhancement as one trainable block: backward() routes gradients
// both through the direct X path and through the projection.
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(std::size_t depth, Rng& rng);

  Tensor forward(const Tensor& map);  // returns the enhanced map
  Tensor backward(const Tensor& grad_enhanced);

  const AttentionMap& last_attention() const { return last_att_; }
  Tensor& projection() { return projection_; }
  void register_params(ParamSet& ps, const std::string& prefix);

 private:
  Tensor projection_, gproj_;
  Tensor last_input_;
  AttentionMap last_att_;
};

}  // namespace wsod
