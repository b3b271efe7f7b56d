#include "wsod/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsod {

EigenResult symmetric_eigen(const Tensor& matrix, int max_sweeps) {
  if (matrix.rank() != 2 || matrix.dim(0) != matrix.dim(1)) {
    throw std::invalid_argument("symmetric_eigen: square matrix required");
  }
  const std::size_t n = matrix.dim(0);
  Tensor a = matrix;
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    }
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a.at(p, q)) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  EigenResult result;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a.at(i, i);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return diag[x] > diag[y];
  });
  result.values.resize(n);
  result.vectors = Tensor({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    result.values[j] = diag[order[j]];
    for (std::size_t i = 0; i < n; ++i) result.vectors.at(i, j) = v.at(i, order[j]);
  }
  return result;
}

PcaResult pca_top2(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw std::invalid_argument("pca_top2: need at least two samples");
  const std::size_t n = features.size(), d = features[0].size();
  for (const auto& f : features) {
    if (f.size() != d) throw std::invalid_argument("pca_top2: ragged feature vectors");
  }

  PcaResult result;
  result.mean.assign(d, 0.0);
  for (const auto& f : features) {
    for (std::size_t j = 0; j < d; ++j) result.mean[j] += f[j];
  }
  for (double& m : result.mean) m /= static_cast<double>(n);

  Tensor cov({d, d});
  for (const auto& f : features) {
    for (std::size_t i = 0; i < d; ++i) {
      const double fi = f[i] - result.mean[i];
      for (std::size_t j = i; j < d; ++j) {
        cov.at(i, j) += fi * (f[j] - result.mean[j]);
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov.at(i, j) /= static_cast<double>(n - 1);
      cov.at(j, i) = cov.at(i, j);
    }
  }

  EigenResult eig = symmetric_eigen(cov);
  result.components = Tensor({2, d});
  result.explained = {eig.values.size() > 0 ? eig.values[0] : 0.0,
                      eig.values.size() > 1 ? eig.values[1] : 0.0};
  for (std::size_t axis = 0; axis < 2 && axis < d; ++axis) {
    for (std::size_t j = 0; j < d; ++j) result.components.at(axis, j) = eig.vectors.at(j, axis);
  }

  for (const auto& f : features) {
    std::array<double, 2> p{0.0, 0.0};
    for (std::size_t axis = 0; axis < 2 && axis < d; ++axis) {
      for (std::size_t j = 0; j < d; ++j) {
        p[axis] += (f[j] - result.mean[j]) * result.components.at(axis, j);
      }
    }
    result.projected.push_back(p);
  }
  return result;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor cosine_similarity_matrix(const std::vector<std::vector<double>>& vectors) {
  const std::size_t n = vectors.size();
  Tensor m({std::max<std::size_t>(n, 1), std::max<std::size_t>(n, 1)});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m.at(i, j) = cosine_similarity(vectors[i], vectors[j]);
  }
  return m;
}

RgbImage render_scatter(const std::vector<std::array<double, 2>>& points,
                        const std::vector<std::size_t>& groups, std::size_t size) {
  RgbImage img;
  img.width = img.height = size;
  img.pixels.assign(size * size * 3, 255);
  if (points.empty()) return img;

  double min_x = points[0][0], max_x = points[0][0];
  double min_y = points[0][1], max_y = points[0][1];
  for (const auto& p : points) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  const double span_x = std::max(max_x - min_x, 1e-12);
  const double span_y = std::max(max_y - min_y, 1e-12);

  // A small fixed palette cycled by group id.
  static const std::uint8_t palette[][3] = {{31, 119, 180}, {255, 127, 14},  {44, 160, 44},
                                            {214, 39, 40},  {148, 103, 189}, {140, 86, 75},
                                            {227, 119, 194}};
  const std::size_t margin = 12;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double fx = (points[i][0] - min_x) / span_x;
    const double fy = (points[i][1] - min_y) / span_y;
    const long cx = (long)(margin + fx * (size - 2 * margin));
    const long cy = (long)(size - 1 - (margin + fy * (size - 2 * margin)));
    const auto& color = palette[(i < groups.size() ? groups[i] : 0) % 7];
    for (long dy = -2; dy <= 2; ++dy) {
      for (long dx = -2; dx <= 2; ++dx) {
        const long x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= (long)size || y >= (long)size) continue;
        img.set((std::size_t)y, (std::size_t)x, color[0], color[1], color[2]);
      }
    }
  }
  return img;
}

GrayImage render_heatmap(const Tensor& map, std::size_t scale) {
  if (map.rank() != 2) throw std::invalid_argument("render_heatmap: 2-D map required");
  const std::size_t h = map.dim(0), w = map.dim(1);
  double lo = map[0], hi = map[0];
  for (std::size_t i = 0; i < map.size(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  const double span = std::max(hi - lo, 1e-12);
  GrayImage img;
  img.width = w * scale;
  img.height = h * scale;
  img.pixels.resize(img.width * img.height);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double v = (map.at(r / scale, c / scale) - lo) / span;
      img.pixels[r * img.width + c] = static_cast<std::uint8_t>(v * 255.0);
    }
  }
  return img;
}

}  // namespace wsod
