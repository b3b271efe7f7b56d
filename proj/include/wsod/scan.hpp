#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wsod/tensor.hpp"

namespace wsod {

// The four traversal directions used by the object scanners.
enum class ScanOrder { RowPrime, RowPrimeReversed, ColPrime, ColPrimeReversed };

// Serpentine alternates direction every line so consecutive sequence
// positions stay grid-adjacent; raster restarts each line from the same side.
enum class ScanStyle { Serpentine, Raster };

constexpr ScanOrder kAllScanOrders[] = {ScanOrder::RowPrime, ScanOrder::RowPrimeReversed,
                                        ScanOrder::ColPrime, ScanOrder::ColPrimeReversed};

std::string to_string(ScanOrder order);
ScanStyle scan_style_from_string(const std::string& s);

struct GridPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridPoint&) const = default;
  bool operator<(const GridPoint& o) const {
    return row != o.row ? row < o.row : col < o.col;
  }
};

// Bijection from sequence position t in [0, H*W) onto the grid.
GridPoint scan_index(std::size_t t, ScanOrder order, std::size_t height, std::size_t width,
                     ScanStyle style = ScanStyle::Serpentine);

// Same mapping under the name the proposal engine uses when walking CTC
// activations back to grid coordinates.
inline GridPoint deserialize_point(std::size_t t, ScanOrder order, std::size_t height,
                                   std::size_t width, ScanStyle style = ScanStyle::Serpentine) {
  return scan_index(t, order, height, width, style);
}

// Length H*W list of depth vectors in traversal order.
struct FeatureSequence {
  std::vector<std::vector<double>> frames;
  ScanOrder order = ScanOrder::RowPrime;
  std::size_t height = 0;
  std::size_t width = 0;
};

// map is [H x W x D]; frames[t] = map[scan_index(t)].
FeatureSequence serialize(const Tensor& map, ScanOrder order,
                          ScanStyle style = ScanStyle::Serpentine);

// Inverse of serialize; rebuilds the [H x W x D] map.
Tensor deserialize(const FeatureSequence& seq, ScanStyle style = ScanStyle::Serpentine);

// Scatter-adds per-frame gradients back onto the grid; used by the scanners'
// backward pass. grad_frames[t] accumulates into cell scan_index(t).
void deserialize_accumulate(const std::vector<std::vector<double>>& grad_frames, ScanOrder order,
                            ScanStyle style, Tensor& grad_map);

}  // namespace wsod
