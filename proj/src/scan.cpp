#include "wsod/scan.hpp"

#include <stdexcept>

namespace wsod {

std::string to_string(ScanOrder order) {
  switch (order) {
    case ScanOrder::RowPrime: return "row-prime";
    case ScanOrder::RowPrimeReversed: return "row-prime-reversed";
    case ScanOrder::ColPrime: return "col-prime";
    case ScanOrder::ColPrimeReversed: return "col-prime-reversed";
  }
  return "?";
}

ScanStyle scan_style_from_string(const std::string& s) {
  if (s == "serpentine") return ScanStyle::Serpentine;
  if (s == "raster") return ScanStyle::Raster;
  throw std::invalid_argument("unknown scan style '" + s + "' (serpentine|raster)");
}

GridPoint scan_index(std::size_t t, ScanOrder order, std::size_t height, std::size_t width,
                     ScanStyle style) {
  const std::size_t total = height * width;
  if (height == 0 || width == 0) throw std::invalid_argument("scan_index: empty grid");
  if (t >= total) {
    throw std::invalid_argument("scan_index: position " + std::to_string(t) +
                                " out of range for " + std::to_string(height) + "x" +
                                std::to_string(width) + " grid");
  }
  // Reversed variants traverse the base order backwards.
  if (order == ScanOrder::RowPrimeReversed) {
    return scan_index(total - 1 - t, ScanOrder::RowPrime, height, width, style);
  }
  if (order == ScanOrder::ColPrimeReversed) {
    return scan_index(total - 1 - t, ScanOrder::ColPrime, height, width, style);
  }

  if (order == ScanOrder::RowPrime) {
    const std::size_t row = t / width;
    const std::size_t offset = t % width;
    const bool flip = style == ScanStyle::Serpentine && (row % 2 == 1);
    return {row, flip ? width - 1 - offset : offset};
  }
  // ColPrime is the transpose of RowPrime.
  const std::size_t col = t / height;
  const std::size_t offset = t % height;
  const bool flip = style == ScanStyle::Serpentine && (col % 2 == 1);
  return {flip ? height - 1 - offset : offset, col};
}

FeatureSequence serialize(const Tensor& map, ScanOrder order, ScanStyle style) {
  if (map.rank() != 3) {
    throw std::invalid_argument("serialize: feature map must be H x W x D, got " + map.shape_str());
  }
  const std::size_t h = map.dim(0), w = map.dim(1), d = map.dim(2);
  FeatureSequence seq;
  seq.order = order;
  seq.height = h;
  seq.width = w;
  seq.frames.resize(h * w);
  for (std::size_t t = 0; t < h * w; ++t) {
    const GridPoint p = scan_index(t, order, h, w, style);
    const double* cell = map.data() + (p.row * w + p.col) * d;
    seq.frames[t].assign(cell, cell + d);
  }
  return seq;
}

Tensor deserialize(const FeatureSequence& seq, ScanStyle style) {
  if (seq.frames.empty() || seq.frames.size() != seq.height * seq.width) {
    throw std::invalid_argument("deserialize: frame count does not match grid dims");
  }
  const std::size_t d = seq.frames[0].size();
  Tensor map({seq.height, seq.width, d});
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    if (seq.frames[t].size() != d) throw std::invalid_argument("deserialize: ragged frames");
    const GridPoint p = scan_index(t, seq.order, seq.height, seq.width, style);
    double* cell = map.data() + (p.row * seq.width + p.col) * d;
    for (std::size_t q = 0; q < d; ++q) cell[q] = seq.frames[t][q];
  }
  return map;
}

void deserialize_accumulate(const std::vector<std::vector<double>>& grad_frames, ScanOrder order,
                            ScanStyle style, Tensor& grad_map) {
  const std::size_t h = grad_map.dim(0), w = grad_map.dim(1), d = grad_map.dim(2);
  if (grad_frames.size() != h * w) {
    throw std::invalid_argument("deserialize_accumulate: frame count mismatch");
  }
  for (std::size_t t = 0; t < grad_frames.size(); ++t) {
    const GridPoint p = scan_index(t, order, h, w, style);
    double* cell = grad_map.data() + (p.row * w + p.col) * d;
    for (std::size_t q = 0; q < d; ++q) cell[q] += grad_frames[t][q];
  }
}

}  // namespace wsod
