#include "wsod/proposal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace wsod {

BBox BBox::from_corners(double x0, double y0, double x1, double y1, BoxSpace space) {
  if (x1 <= x0 || y1 <= y0) throw std::invalid_argument("BBox: corners give nonpositive extent");
  return BBox{(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0, space};
}

BBox BBox::from_xywh(double x, double y, double w, double h, BoxSpace space) {
  if (w <= 0.0 || h <= 0.0) throw std::invalid_argument("BBox: extents must be positive");
  return BBox{x + w / 2.0, y + h / 2.0, w, h, space};
}

BBox BBox::scaled(double factor, BoxSpace new_space) const {
  return BBox{cx * factor, cy * factor, w * factor, h * factor, new_space};
}

double iou(const BBox& a, const BBox& b) {
  if (a.space != b.space) {
    throw std::invalid_argument("iou: boxes live in different coordinate spaces");
  }
  const double ix = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double iy = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

namespace {
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};
}  // namespace

std::vector<GridPoint> merge_critical_points(const std::vector<std::vector<GridPoint>>& point_lists,
                                             double merge_radius) {
  if (merge_radius < 0.0) throw std::invalid_argument("merge_critical_points: negative radius");
  std::vector<GridPoint> all;
  for (const auto& list : point_lists) all.insert(all.end(), list.begin(), list.end());
  if (all.empty()) return {};

  UnionFind uf(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      const double dr = static_cast<double>(all[i].row) - static_cast<double>(all[j].row);
      const double dc = static_cast<double>(all[i].col) - static_cast<double>(all[j].col);
      if (std::sqrt(dr * dr + dc * dc) <= merge_radius) uf.unite(i, j);
    }
  }

  // Cluster centroids; duplicated points weight the centroid by vote count.
  std::vector<double> sum_r(all.size(), 0.0), sum_c(all.size(), 0.0);
  std::vector<std::size_t> count(all.size(), 0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::size_t root = uf.find(i);
    sum_r[root] += static_cast<double>(all[i].row);
    sum_c[root] += static_cast<double>(all[i].col);
    ++count[root];
  }
  std::vector<GridPoint> merged;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (count[i] == 0) continue;
    const double n = static_cast<double>(count[i]);
    // round half up
    merged.push_back({static_cast<std::size_t>(std::floor(sum_r[i] / n + 0.5)),
                      static_cast<std::size_t>(std::floor(sum_c[i] / n + 0.5))});
  }
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  return merged;
}

ProposalSet generate_proposals(const std::vector<GridPoint>& points,
                               const std::vector<double>& scales,
                               const std::vector<double>& ratios, std::size_t height,
                               std::size_t width) {
  if (scales.empty() || ratios.empty()) {
    throw std::invalid_argument("generate_proposals: scales and ratios must be nonempty");
  }
  for (double s : scales) {
    if (s <= 0.0) throw std::invalid_argument("generate_proposals: scales must be positive");
  }
  for (double r : ratios) {
    if (r <= 0.0) throw std::invalid_argument("generate_proposals: ratios must be positive");
  }

  ProposalSet set;
  set.points = points;
  const double bw = static_cast<double>(width), bh = static_cast<double>(height);
  for (const GridPoint& p : points) {
    const double cx = static_cast<double>(p.col) + 0.5;
    const double cy = static_cast<double>(p.row) + 0.5;
    for (double s : scales) {
      for (double r : ratios) {
        const double w = s * std::sqrt(r);
        const double h = s / std::sqrt(r);
        // Clip to the grid; skip anything left without area.
        const double x0 = std::max(0.0, cx - w / 2.0), x1 = std::min(bw, cx + w / 2.0);
        const double y0 = std::max(0.0, cy - h / 2.0), y1 = std::min(bh, cy + h / 2.0);
        if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) continue;
        set.proposals.push_back({BBox::from_corners(x0, y0, x1, y1, BoxSpace::Feature), p, s, r});
      }
    }
  }
  return set;
}

namespace {
struct CellRange {
  long begin = 0, end = 0;  // half-open
  bool empty() const { return end <= begin; }
};

CellRange round_range(double lo, double hi, long bound) {
  CellRange r;
  r.begin = std::max(0L, static_cast<long>(std::floor(lo + 0.5)));
  r.end = std::min(bound, static_cast<long>(std::floor(hi + 0.5)));
  return r;
}
}  // namespace

Tensor roi_pool(const Tensor& map, const BBox& box, std::size_t out_rows, std::size_t out_cols) {
  if (map.rank() != 3) throw std::invalid_argument("roi_pool: map must be H x W x D");
  if (box.space != BoxSpace::Feature) {
    throw std::invalid_argument("roi_pool: box must be in feature space");
  }
  if (out_rows == 0 || out_cols == 0) throw std::invalid_argument("roi_pool: empty output shape");
  const long h = static_cast<long>(map.dim(0)), w = static_cast<long>(map.dim(1));
  const std::size_t d = map.dim(2);

  const double x0 = std::max(0.0, box.x0()), x1 = std::min(static_cast<double>(w), box.x1());
  const double y0 = std::max(0.0, box.y0()), y1 = std::min(static_cast<double>(h), box.y1());
  if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) {
    throw std::invalid_argument("roi_pool: box degenerate after clipping to map bounds");
  }
  const CellRange rows = round_range(y0, y1, h), cols = round_range(x0, x1, w);
  const long row_lo = std::min(rows.begin, h - 1), row_hi = std::max(rows.end - 1, rows.begin);
  const long col_lo = std::min(cols.begin, w - 1), col_hi = std::max(cols.end - 1, cols.begin);

  Tensor out({out_rows, out_cols, d});
  for (std::size_t bi = 0; bi < out_rows; ++bi) {
    for (std::size_t bj = 0; bj < out_cols; ++bj) {
      const double by0 = y0 + (y1 - y0) * static_cast<double>(bi) / static_cast<double>(out_rows);
      const double by1 = y0 + (y1 - y0) * static_cast<double>(bi + 1) / static_cast<double>(out_rows);
      const double bx0 = x0 + (x1 - x0) * static_cast<double>(bj) / static_cast<double>(out_cols);
      const double bx1 = x0 + (x1 - x0) * static_cast<double>(bj + 1) / static_cast<double>(out_cols);
      CellRange br = round_range(by0, by1, h), bc = round_range(bx0, bx1, w);
      if (br.empty()) {
        // Small box: snap to the nearest covered row.
        br.begin = std::clamp(br.begin, row_lo, std::min(row_hi, h - 1));
        br.end = br.begin + 1;
      }
      if (bc.empty()) {
        bc.begin = std::clamp(bc.begin, col_lo, std::min(col_hi, w - 1));
        bc.end = bc.begin + 1;
      }
      for (std::size_t q = 0; q < d; ++q) {
        double best = -std::numeric_limits<double>::infinity();
        for (long r = br.begin; r < br.end; ++r) {
          for (long c = bc.begin; c < bc.end; ++c) {
            best = std::max(best, map.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), q));
          }
        }
        out.at(bi, bj, q) = best;
      }
    }
  }
  return out;
}

void roi_pool_backward(const Tensor& map, const BBox& box, std::size_t out_rows,
                       std::size_t out_cols, const Tensor& grad_output, Tensor& grad_map) {
  if (!grad_map.same_shape(map)) throw std::invalid_argument("roi_pool_backward: grad map shape");
  const long h = static_cast<long>(map.dim(0)), w = static_cast<long>(map.dim(1));
  const std::size_t d = map.dim(2);

  const double x0 = std::max(0.0, box.x0()), x1 = std::min(static_cast<double>(w), box.x1());
  const double y0 = std::max(0.0, box.y0()), y1 = std::min(static_cast<double>(h), box.y1());
  if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) {
    throw std::invalid_argument("roi_pool_backward: box degenerate after clipping");
  }
  const CellRange rows = round_range(y0, y1, h), cols = round_range(x0, x1, w);
  const long row_lo = std::min(rows.begin, h - 1), row_hi = std::max(rows.end - 1, rows.begin);
  const long col_lo = std::min(cols.begin, w - 1), col_hi = std::max(cols.end - 1, cols.begin);

  for (std::size_t bi = 0; bi < out_rows; ++bi) {
    for (std::size_t bj = 0; bj < out_cols; ++bj) {
      const double by0 = y0 + (y1 - y0) * static_cast<double>(bi) / static_cast<double>(out_rows);
      const double by1 = y0 + (y1 - y0) * static_cast<double>(bi + 1) / static_cast<double>(out_rows);
      const double bx0 = x0 + (x1 - x0) * static_cast<double>(bj) / static_cast<double>(out_cols);
      const double bx1 = x0 + (x1 - x0) * static_cast<double>(bj + 1) / static_cast<double>(out_cols);
      CellRange br = round_range(by0, by1, h), bc = round_range(bx0, bx1, w);
      if (br.empty()) {
        br.begin = std::clamp(br.begin, row_lo, std::min(row_hi, h - 1));
        br.end = br.begin + 1;
      }
      if (bc.empty()) {
        bc.begin = std::clamp(bc.begin, col_lo, std::min(col_hi, w - 1));
        bc.end = bc.begin + 1;
      }
      for (std::size_t q = 0; q < d; ++q) {
        long best_r = br.begin, best_c = bc.begin;
        double best = -std::numeric_limits<double>::infinity();
        for (long r = br.begin; r < br.end; ++r) {
          for (long c = bc.begin; c < bc.end; ++c) {
            const double v = map.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), q);
            if (v > best) {
              best = v;
              best_r = r;
              best_c = c;
            }
          }
        }
        grad_map.at(static_cast<std::size_t>(best_r), static_cast<std::size_t>(best_c), q) +=
            grad_output.at(bi, bj, q);
      }
    }
  }
}

std::vector<std::size_t> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("nms: size mismatch");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> keep;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t i : order) {
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t j : order) {
      if (j != i && !suppressed[j] && iou(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = true;
    }
  }
  return keep;
}

}  // namespace wsod
