#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace wsense {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// An empty shape denotes a scalar holding one element. Extents may be zero,
/// in which case the tensor holds no data.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// 1-D tensor from a value list.
  static Tensor vector(std::initializer_list<double> values);
  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  /// Row-major flat offset of a multi-index; throws DimensionError when the
  /// index rank or any coordinate is out of range.
  std::size_t offset(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
  double at(std::span<const std::size_t> index) const { return data_[offset(index)]; }

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws ValueError naming `context` if any element is NaN or infinite.
void require_finite(const Tensor& t, const std::string& context);

Tensor matmul(const Tensor& a, const Tensor& b);

enum class EwOp { add, sub, mul, div, max };

/// Elementwise a (op) b. `b` may have the same shape as `a` or broadcast into
/// it: aligned on trailing axes, each extent of `b` equal to the matching
/// extent of `a` or 1, missing leading axes replicated.
Tensor ew(EwOp op, const Tensor& a, const Tensor& b);
Tensor ew(EwOp op, const Tensor& a, double b);

enum class ReduceKind { max, mean, sum };

/// Reduces along `axis`, removing it from the shape.
Tensor reduce(ReduceKind kind, const Tensor& x, std::size_t axis);

// Binary container: "WSNT", rank and extents as u64 little-endian, then the
// f64 little-endian payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

using TensorSet = std::map<std::string, Tensor>;

// Named set: "WSNS", entry count (u64), then per entry a u64 name length,
// the name bytes and one tensor record.
void write_tensor_set(std::ostream& out, const TensorSet& set);
TensorSet read_tensor_set(std::istream& in);
void save_tensor_set(const std::filesystem::path& path, const TensorSet& set);
TensorSet load_tensor_set(const std::filesystem::path& path);

}  // namespace wsense
