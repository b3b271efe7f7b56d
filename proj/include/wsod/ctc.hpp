#pragma once

#include <cstddef>
#include <vector>

#include "wsod/scan.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

// Count-supervised CTC over the binary alphabet {0 = background/blank,
// 1 = foreground}. The label for count n is n ones; collapsing a per-frame
// path merges repeated 1s and deletes 0s, so two objects need a separating
// background frame.

// Loss reported for instances with zero path probability.
constexpr double kUnsatisfiableCtcLoss = 1e9;

// Largest count reachable in T frames: n runs need n - 1 separators.
inline std::size_t max_satisfiable_count(std::size_t frames) { return (frames + 1) / 2; }

// Number of maximal runs of consecutive 1s.
std::size_t collapse(const std::vector<int>& path);

// Throws if rows are not probability pairs (sum 1 within 1e-9, entries in
// [0,1]). posteriors is [T x 2], column k = y_t^k.
void validate_posteriors(const Tensor& posteriors);

// log p(count = n | x); -inf when n > max_satisfiable_count(T).
double ctc_log_probability(const Tensor& posteriors, std::size_t count);

// Sum over all paths collapsing to n of the framewise product.
double ctc_probability(const Tensor& posteriors, std::size_t count);

// -ln p, or kUnsatisfiableCtcLoss when p = 0.
double ctc_loss(const Tensor& posteriors, std::size_t count);

struct CtcGradient {
  double loss = 0.0;
  Tensor logit_grads;  // [T x 2], d(loss)/d(pre-softmax logits)
  bool satisfiable = true;
};

// Loss and gradient w.r.t. pre-softmax logits [T x 2], via forward-backward
// occupancy: d/dz_t^k = y_t^k - gamma_t^k / p. Unsatisfiable instances get
// the sentinel loss and zero gradient.
CtcGradient ctc_gradient(const Tensor& logits, std::size_t count);

// Framewise argmax path (frames are conditionally independent); ties break
// toward background.
std::vector<int> decode_best_path(const Tensor& posteriors);

enum class CriticalPointRule { RunMedian, RunPeak };

// One grid point per maximal 1-run. RunMedian takes the run's median frame
// (lower median for even runs); RunPeak takes the frame with the highest
// foreground posterior, which needs `posteriors`.
std::vector<GridPoint> critical_points(const std::vector<int>& path, ScanOrder order,
                                       std::size_t height, std::size_t width,
                                       ScanStyle style = ScanStyle::Serpentine,
                                       CriticalPointRule rule = CriticalPointRule::RunMedian,
                                       const Tensor* posteriors = nullptr);

}  // namespace wsod
