#include "wsod/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wsod/nn.hpp"

namespace wsod {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

// Forward table over states (runs completed, last symbol). alpha[t] is laid
// out as [(cap + 1) x 2]; alpha[t][r][s] = log probability of all length-t
// prefixes that have completed r runs and end in symbol s.
std::vector<std::vector<double>> ctc_forward(const Tensor& y, std::size_t cap) {
  const std::size_t T = y.dim(0);
  const std::size_t states = (cap + 1) * 2;
  std::vector<std::vector<double>> alpha(T, std::vector<double>(states, kLogZero));

  alpha[0][0 * 2 + 0] = safe_log(y.at(0, 0));
  if (cap >= 1) alpha[0][1 * 2 + 1] = safe_log(y.at(0, 1));
  for (std::size_t t = 1; t < T; ++t) {
    const double ly0 = safe_log(y.at(t, 0));
    const double ly1 = safe_log(y.at(t, 1));
    for (std::size_t r = 0; r <= cap; ++r) {
      // Background continues or closes the current run.
      const double into0 = log_sum_exp(alpha[t - 1][r * 2 + 0], alpha[t - 1][r * 2 + 1]);
      if (into0 != kLogZero) alpha[t][r * 2 + 0] = ly0 + into0;
      // Foreground extends a run or (from background) opens run r.
      double into1 = alpha[t - 1][r * 2 + 1];
      if (r >= 1) into1 = log_sum_exp(into1, alpha[t - 1][(r - 1) * 2 + 0]);
      if (into1 != kLogZero) alpha[t][r * 2 + 1] = ly1 + into1;
    }
  }
  return alpha;
}

// Backward table: beta[t][r][s] = log probability of the suffix t+1..T given
// state (r, s) at t, over suffixes that end with exactly `count` runs total.
std::vector<std::vector<double>> ctc_backward(const Tensor& y, std::size_t count) {
  const std::size_t T = y.dim(0);
  const std::size_t states = (count + 1) * 2;
  std::vector<std::vector<double>> beta(T, std::vector<double>(states, kLogZero));

  beta[T - 1][count * 2 + 0] = 0.0;
  beta[T - 1][count * 2 + 1] = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    const double ly0 = safe_log(y.at(t + 1, 0));
    const double ly1 = safe_log(y.at(t + 1, 1));
    for (std::size_t r = 0; r <= count; ++r) {
      for (int s = 0; s < 2; ++s) {
        double acc = kLogZero;
        const double via0 = beta[t + 1][r * 2 + 0];
        if (via0 != kLogZero) acc = ly0 + via0;
        const std::size_t r1 = s == 0 ? r + 1 : r;  // 1 after 0 opens a run
        if (r1 <= count) {
          const double via1 = beta[t + 1][r1 * 2 + 1];
          if (via1 != kLogZero) acc = log_sum_exp(acc, ly1 + via1);
        }
        beta[t][r * 2 + s] = acc;
      }
    }
  }
  return beta;
}

}  // namespace

std::size_t collapse(const std::vector<int>& path) {
  std::size_t runs = 0;
  int prev = 0;
  for (int v : path) {
    if (v != 0 && v != 1) {
      throw std::invalid_argument("collapse: path entries must be 0 or 1, got " +
                                  std::to_string(v));
    }
    if (v == 1 && prev == 0) ++runs;
    prev = v;
  }
  return runs;
}

void validate_posteriors(const Tensor& posteriors) {
  if (posteriors.rank() != 2 || posteriors.dim(1) != 2 || posteriors.dim(0) == 0) {
    throw std::invalid_argument("posteriors must be [T x 2], got " + posteriors.shape_str());
  }
  for (std::size_t t = 0; t < posteriors.dim(0); ++t) {
    const double y0 = posteriors.at(t, 0), y1 = posteriors.at(t, 1);
    if (!(y0 >= 0.0 && y0 <= 1.0 && y1 >= 0.0 && y1 <= 1.0)) {
      throw std::invalid_argument("posteriors: entries outside [0,1] at frame " +
                                  std::to_string(t));
    }
    if (std::abs(y0 + y1 - 1.0) > 1e-9) {
      throw std::invalid_argument("posteriors: row " + std::to_string(t) +
                                  " sums to " + std::to_string(y0 + y1) + ", expected 1");
    }
  }
}

double ctc_log_probability(const Tensor& posteriors, std::size_t count) {
  validate_posteriors(posteriors);
  const std::size_t T = posteriors.dim(0);
  if (count > max_satisfiable_count(T)) return kLogZero;
  const auto alpha = ctc_forward(posteriors, count);
  return log_sum_exp(alpha[T - 1][count * 2 + 0], alpha[T - 1][count * 2 + 1]);
}

double ctc_probability(const Tensor& posteriors, std::size_t count) {
  const double lp = ctc_log_probability(posteriors, count);
  return lp == kLogZero ? 0.0 : std::exp(lp);
}

double ctc_loss(const Tensor& posteriors, std::size_t count) {
  const double lp = ctc_log_probability(posteriors, count);
  if (lp == kLogZero) return kUnsatisfiableCtcLoss;
  return -lp;
}

CtcGradient ctc_gradient(const Tensor& logits, std::size_t count) {
  if (logits.rank() != 2 || logits.dim(1) != 2 || logits.dim(0) == 0) {
    throw std::invalid_argument("ctc_gradient: logits must be [T x 2], got " + logits.shape_str());
  }
  const std::size_t T = logits.dim(0);

  Tensor y = logits;
  softmax_rows(y);

  CtcGradient out;
  out.logit_grads = Tensor::zeros({T, 2});
  if (count > max_satisfiable_count(T)) {
    out.loss = kUnsatisfiableCtcLoss;
    out.satisfiable = false;
    return out;
  }

  const auto alpha = ctc_forward(y, count);
  const auto beta = ctc_backward(y, count);
  const double log_p = log_sum_exp(alpha[T - 1][count * 2 + 0], alpha[T - 1][count * 2 + 1]);
  if (log_p == kLogZero) {
    // Possible only if a needed posterior is exactly zero.
    out.loss = kUnsatisfiableCtcLoss;
    out.satisfiable = false;
    return out;
  }
  out.loss = -log_p;

  for (std::size_t t = 0; t < T; ++t) {
    for (int k = 0; k < 2; ++k) {
      double log_gamma = kLogZero;
      for (std::size_t r = 0; r <= count; ++r) {
        const double a = alpha[t][r * 2 + k];
        const double b = beta[t][r * 2 + k];
        if (a != kLogZero && b != kLogZero) log_gamma = log_sum_exp(log_gamma, a + b);
      }
      const double occupancy = log_gamma == kLogZero ? 0.0 : std::exp(log_gamma - log_p);
      out.logit_grads.at(t, k) = y.at(t, k) - occupancy;
    }
  }
  return out;
}

std::vector<int> decode_best_path(const Tensor& posteriors) {
  validate_posteriors(posteriors);
  std::vector<int> path(posteriors.dim(0));
  for (std::size_t t = 0; t < path.size(); ++t) {
    path[t] = posteriors.at(t, 1) > posteriors.at(t, 0) ? 1 : 0;
  }
  return path;
}

std::vector<GridPoint> critical_points(const std::vector<int>& path, ScanOrder order,
                                       std::size_t height, std::size_t width, ScanStyle style,
                                       CriticalPointRule rule, const Tensor* posteriors) {
  if (path.size() != height * width) {
    throw std::invalid_argument("critical_points: path length does not match grid");
  }
  if (rule == CriticalPointRule::RunPeak && posteriors == nullptr) {
    throw std::invalid_argument("critical_points: RunPeak rule needs posteriors");
  }
  std::vector<GridPoint> points;
  std::size_t t = 0;
  while (t < path.size()) {
    if (path[t] != 1) {
      ++t;
      continue;
    }
    const std::size_t start = t;
    while (t < path.size() && path[t] == 1) ++t;
    const std::size_t end = t - 1;

    std::size_t pick;
    if (rule == CriticalPointRule::RunMedian) {
      pick = (start + end) / 2;
    } else {
      pick = start;
      for (std::size_t q = start + 1; q <= end; ++q) {
        if (posteriors->at(q, 1) > posteriors->at(pick, 1)) pick = q;
      }
    }
    points.push_back(deserialize_point(pick, order, height, width, style));
  }
  return points;
}

}  // namespace wsod
