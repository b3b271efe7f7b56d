#pragma once

#include <array>
#include <string>
#include <vector>

#include "wsod/png_io.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

// Symmetric eigendecomposition by cyclic Jacobi rotations; eigenvalues sorted
// descending with matching columns in `vectors`.
struct EigenResult {
  std::vector<double> values;
  Tensor vectors;  // [n x n], column j = eigenvector j
};
EigenResult symmetric_eigen(const Tensor& matrix, int max_sweeps = 64);

struct PcaResult {
  std::vector<double> mean;
  Tensor components;                     // [2 x D], rows are the top-2 axes
  std::vector<double> explained;        // top-2 eigenvalues
  std::vector<std::array<double, 2>> projected;  // one point per sample
};

// Covariance PCA onto the top two components. Needs at least two samples.
PcaResult pca_top2(const std::vector<std::vector<double>>& features);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Pairwise cosine similarities of a set of mean feature vectors.
Tensor cosine_similarity_matrix(const std::vector<std::vector<double>>& vectors);

// Scatter plot of the projected points (colored by group) rendered to RGB.
RgbImage render_scatter(const std::vector<std::array<double, 2>>& points,
                        const std::vector<std::size_t>& groups, std::size_t size = 512);

// Grayscale rendering of a [H x W] map scaled to the image size.
GrayImage render_heatmap(const Tensor& map, std::size_t scale = 8);

}  // namespace wsod
