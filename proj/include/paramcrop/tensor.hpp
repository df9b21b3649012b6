#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace paramcrop {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. The product of the shape always equals
// the number of stored values; an empty shape denotes a scalar.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape, double fill = 0.0);
  // Throws DimensionError on a size mismatch, NumericError on non-finite data.
  DenseArray(Shape shape, std::vector<double> values);

  static DenseArray identity(std::size_t n);
  static DenseArray from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  // Rank-2 element access, unchecked beyond the usual vector bounds.
  double at(std::size_t row, std::size_t col) const { return values_[row * shape_[1] + col]; }
  double& at(std::size_t row, std::size_t col) { return values_[row * shape_[1] + col]; }

  bool all_finite() const noexcept;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

enum class ElementwiseOp { add, sub, mul, sigmoid, relu };
enum class ReduceOp { sum, mean, max };

double sigmoid(double x) noexcept;

DenseArray matmul(const DenseArray& a, const DenseArray& b);

// Unary form: sigmoid, relu. Binary form: add, sub, mul on equal shapes.
DenseArray elementwise(ElementwiseOp op, const DenseArray& a);
DenseArray elementwise(ElementwiseOp op, const DenseArray& a, const DenseArray& b);

// Full reduction returns a scalar (empty shape). Reduction along an axis
// drops that axis. Accumulation runs left to right in index order.
DenseArray reduce(ReduceOp op, const DenseArray& a, std::optional<std::size_t> axis = std::nullopt);

// Raw tensor file: "PCT1", u32 LE rank, rank x u32 LE dims, f64 LE values.
void write_raw_tensor(std::ostream& out, const DenseArray& a);
DenseArray read_raw_tensor(std::istream& in);
void save_raw_tensor(const std::filesystem::path& path, const DenseArray& a);
DenseArray load_raw_tensor(const std::filesystem::path& path);

}  // namespace paramcrop
