#include "equipose/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "equipose/common.hpp"

namespace equipose::ad {
namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(std::initializer_list<std::size_t> shape)
    : Tensor(std::vector<std::size_t>(shape)) {}

Tensor Tensor::zeros(std::initializer_list<std::size_t> shape) { return Tensor(shape); }

Tensor Tensor::full(std::initializer_list<std::size_t> shape, double v) {
  Tensor t(shape);
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t[0] = v;
  return t;
}

Tensor Tensor::row(const std::vector<double>& v) {
  Tensor t({1, v.size()});
  std::memcpy(t.data(), v.data(), v.size() * sizeof(double));
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return 1;
  EQP_REQUIRE(shape_.size() == 2, "tensor: 2-D view of rank-3 tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return shape_[0];
  return shape_[1];
}

MatMap Tensor::mat() {
  return MatMap(data(), static_cast<Eigen::Index>(rows()),
                static_cast<Eigen::Index>(cols()));
}

ConstMatMap Tensor::mat() const {
  return ConstMatMap(data(), static_cast<Eigen::Index>(rows()),
                     static_cast<Eigen::Index>(cols()));
}

MatMap Tensor::slab(std::size_t k) {
  EQP_REQUIRE(rank() == 3 && k < shape_[0], "tensor: slab out of range");
  return MatMap(data() + k * shape_[1] * shape_[2],
                static_cast<Eigen::Index>(shape_[1]),
                static_cast<Eigen::Index>(shape_[2]));
}

ConstMatMap Tensor::slab(std::size_t k) const {
  EQP_REQUIRE(rank() == 3 && k < shape_[0], "tensor: slab out of range");
  return ConstMatMap(data() + k * shape_[1] * shape_[2],
                     static_cast<Eigen::Index>(shape_[1]),
                     static_cast<Eigen::Index>(shape_[2]));
}

VecMap Tensor::vec() { return VecMap(data(), static_cast<Eigen::Index>(size())); }

ConstVecMap Tensor::vec() const {
  return ConstVecMap(data(), static_cast<Eigen::Index>(size()));
}

void Tensor::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EQP_REQUIRE(a.shape() == b.shape(), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace equipose::ad
