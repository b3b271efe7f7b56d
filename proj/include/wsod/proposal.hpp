#pragma once

#include <cstddef>
#include <vector>

#include "wsod/scan.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

// Coordinate space of a box. Feature boxes live on the backbone grid (one
// unit per cell); image boxes are in pixels. Geometric ops reject mixes.
enum class BoxSpace { Feature, Image };

struct BBox {
  double cx = 0.0, cy = 0.0;  // center
  double w = 0.0, h = 0.0;    // extents, > 0
  BoxSpace space = BoxSpace::Feature;

  double x0() const { return cx - w / 2.0; }
  double y0() const { return cy - h / 2.0; }
  double x1() const { return cx + w / 2.0; }
  double y1() const { return cy + h / 2.0; }
  double area() const { return w * h; }

  static BBox from_corners(double x0, double y0, double x1, double y1,
                           BoxSpace space = BoxSpace::Feature);
  // (x, y) top-left corner plus extents.
  static BBox from_xywh(double x, double y, double w, double h,
                        BoxSpace space = BoxSpace::Feature);
  BBox scaled(double factor, BoxSpace new_space) const;
};

double iou(const BBox& a, const BBox& b);

struct Proposal {
  BBox box;
  GridPoint source;  // critical point the box was grown from
  double scale = 0.0;
  double ratio = 1.0;
};

struct ProposalSet {
  std::vector<Proposal> proposals;
  std::vector<GridPoint> points;
};

// Single-linkage clustering of the scanners' critical points: points within
// merge_radius (Euclidean) chain into one cluster, each replaced by its
// centroid rounded half-up to the nearest cell. Output sorted by (row, col).
std::vector<GridPoint> merge_critical_points(const std::vector<std::vector<GridPoint>>& point_lists,
                                             double merge_radius);

// One box per point x scale x ratio: w = s*sqrt(r), h = s/sqrt(r), centered
// on the cell center, clipped to the H x W grid; boxes fully outside are
// dropped. Scales are in grid cells here.
ProposalSet generate_proposals(const std::vector<GridPoint>& points,
                               const std::vector<double>& scales,
                               const std::vector<double>& ratios, std::size_t height,
                               std::size_t width);

// Max-pools the box into a fixed [p x q x D] output. Bin boundaries by
// rounding; bins that round to empty take the nearest covered cell.
Tensor roi_pool(const Tensor& map, const BBox& box, std::size_t out_rows, std::size_t out_cols);

// Backward companion: routes grad_output entries to the argmax cells chosen
// by the matching roi_pool call, accumulating into grad_map.
void roi_pool_backward(const Tensor& map, const BBox& box, std::size_t out_rows,
                       std::size_t out_cols, const Tensor& grad_output, Tensor& grad_map);

// Greedy non-maximum suppression; returns indices of kept boxes in
// descending-score order.
std::vector<std::size_t> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                             double iou_threshold);

}  // namespace wsod
