#include "wsod/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace wsod {

AttentionMap compute_attention(const Tensor& map, const Tensor& projection) {
  if (map.rank() != 3) {
    throw std::invalid_argument("compute_attention: map must be H x W x D, got " + map.shape_str());
  }
  const std::size_t h = map.dim(0), w = map.dim(1), d = map.dim(2);
  if (projection.size() != d) {
    throw std::invalid_argument("compute_attention: projection size " +
                                std::to_string(projection.size()) + " != depth " +
                                std::to_string(d));
  }
  std::vector<double> scores(h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    const double* cell = map.data() + p * d;
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) s += cell[q] * projection[q];
    scores[p] = s;
  }
  auto weights = softmax(scores);
  AttentionMap att;
  att.weights = Tensor({h, w}, std::move(weights));
  return att;
}

Tensor enhance(const Tensor& map, const AttentionMap& att) {
  if (map.rank() != 3 || att.weights.rank() != 2 || map.dim(0) != att.weights.dim(0) ||
      map.dim(1) != att.weights.dim(1)) {
    throw std::invalid_argument("enhance: attention dims " + att.weights.shape_str() +
                                " do not match map " + map.shape_str());
  }
  const std::size_t cells = att.weights.size(), d = map.dim(2);
  Tensor out(map.shape());
  for (std::size_t p = 0; p < cells; ++p) {
    // x + x*a rather than x*(1+a): recomputing X + X.A then reproduces the
    // output bit for bit.
    const double a = att.weights[p];
    const double* in = map.data() + p * d;
    double* dst = out.data() + p * d;
    for (std::size_t q = 0; q < d; ++q) dst[q] = in[q] + in[q] * a;
  }
  return out;
}

AttentionLayer::AttentionLayer(std::size_t depth, Rng& rng)
    : projection_({depth}), gproj_(Tensor::zeros({depth})) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(depth));
  rng.fill_uniform(projection_, -bound, bound);
}

Tensor AttentionLayer::forward(const Tensor& map) {
  last_input_ = map;
  last_att_ = compute_attention(map, projection_);
  return enhance(map, last_att_);
}

Tensor AttentionLayer::backward(const Tensor& grad_enhanced) {
  const std::size_t cells = last_att_.weights.size(), d = last_input_.dim(2);
  if (!grad_enhanced.same_shape(last_input_)) {
    throw std::invalid_argument("AttentionLayer: grad shape mismatch");
  }

  Tensor grad_map(last_input_.shape());
  std::vector<double> grad_att(cells, 0.0);
  for (std::size_t p = 0; p < cells; ++p) {
    const double scale = 1.0 + last_att_.weights[p];
    const double* gin = grad_enhanced.data() + p * d;
    const double* x = last_input_.data() + p * d;
    double* gout = grad_map.data() + p * d;
    double ga = 0.0;
    for (std::size_t q = 0; q < d; ++q) {
      gout[q] = gin[q] * scale;
      ga += gin[q] * x[q];
    }
    grad_att[p] = ga;
  }

  // Through the spatial softmax back to the raw scores.
  std::vector<double> grad_scores(cells);
  softmax_backward_row(std::span<const double>(last_att_.weights.data(), cells), grad_att,
                       grad_scores);

  // Scores are cell . projection: split the gradient between both factors.
  for (std::size_t p = 0; p < cells; ++p) {
    const double gs = grad_scores[p];
    const double* x = last_input_.data() + p * d;
    double* gout = grad_map.data() + p * d;
    for (std::size_t q = 0; q < d; ++q) {
      gproj_[q] += gs * x[q];
      gout[q] += gs * projection_[q];
    }
  }
  return grad_map;
}

void AttentionLayer::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".projection", &projection_, &gproj_);
}

}  // namespace wsod
