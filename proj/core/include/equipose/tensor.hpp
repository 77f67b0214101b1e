#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace equipose::ad {

using MatMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Dense row-major double tensor with a dynamic shape. Rank 1..3 is what the
/// library actually uses (vectors, matrices, kernel stacks).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::initializer_list<std::size_t> shape);

  static Tensor zeros(std::initializer_list<std::size_t> shape);
  static Tensor full(std::initializer_list<std::size_t> shape, double v);
  static Tensor scalar(double v);
  static Tensor row(const std::vector<double>& v);  // shape {1, v.size()}

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// 2-D Eigen view; rank-1 tensors map to a single row.
  MatMap mat();
  ConstMatMap mat() const;
  /// Slice [k] of a rank-3 tensor viewed as a matrix dim1 x dim2.
  MatMap slab(std::size_t k);
  ConstMatMap slab(std::size_t k) const;
  VecMap vec();
  ConstVecMap vec() const;

  void set_zero();
  bool all_finite() const;
  double max_abs() const;

  /// Rows and columns for the 2-D view (rank-1 -> 1 x n).
  std::size_t rows() const;
  std::size_t cols() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace equipose::ad
