#include "wsod/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace wsod {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: zero-length dimension in " + Tensor::shape_str(shape));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (product(shape_) != data_.size()) {
    std::ostringstream os;
    os << "Tensor: shape " << shape_str() << " wants " << product(shape_)
       << " values, got " << data_.size();
    throw std::invalid_argument(os.str());
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

std::string Tensor::shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void axpy(double a, const Tensor& x, Tensor& y) {
  if (!x.same_shape(y)) {
    throw std::invalid_argument("axpy: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  }
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] += a * xs[i];
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("dot: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace wsod
