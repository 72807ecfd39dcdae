#ifndef BITTA_TENSOR_HPP
#define BITTA_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bitta {

/// Dense row-major tensor of doubles. Value type: copy/move freely, no
/// sharing. Rank 0 (empty shape) is a scalar with one element.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, double fill);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element access for rank 2 / rank 3 hot paths.
  double& at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  double item() const;  // requires size() == 1

  bool same_shape(const Tensor& other) const noexcept {
    return shape_ == other.shape_;
  }
  bool all_finite() const noexcept;

  static std::size_t shape_size(std::span<const std::size_t> shape) noexcept;
  static std::string shape_str(std::span<const std::size_t> shape);
  std::string shape_str() const { return shape_str(shape_); }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace bitta

#endif  // BITTA_TENSOR_HPP
