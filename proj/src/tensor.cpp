#include "paramcrop/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "paramcrop/errors.hpp"

namespace paramcrop {

namespace {

constexpr std::array<char, 4> kMagic{'P', 'C', 'T', '1'};

void require_finite(const DenseArray& a, const char* op) {
  if (!a.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in result");
  }
}

void require_same_shape(const DenseArray& a, const DenseArray& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<unsigned char, 4> bytes{};
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<unsigned char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <std::size_t N>
std::array<unsigned char, N> get_bytes(std::istream& in) {
  std::array<unsigned char, N> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), N);
  if (!in) throw IoError("raw tensor: truncated stream");
  return bytes;
}

std::uint32_t get_u32(std::istream& in) {
  const auto bytes = get_bytes<4>(in);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  const auto bytes = get_bytes<8>(in);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::size_t shape_volume(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

DenseArray::DenseArray(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_volume(shape_), fill) {}

DenseArray::DenseArray(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_volume(shape_) != values_.size()) {
    throw DimensionError("DenseArray: shape " + shape_to_string(shape_) + " does not hold " +
                         std::to_string(values_.size()) + " values");
  }
  require_finite(*this, "DenseArray");
}

DenseArray DenseArray::identity(std::size_t n) {
  DenseArray a({n, n});
  for (std::size_t i = 0; i < n; ++i) a.at(i, i) = 1.0;
  return a;
}

DenseArray DenseArray::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return DenseArray({r, c}, std::move(values));
}

std::size_t DenseArray::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(shape_.size()));
  }
  return shape_[axis];
}

bool DenseArray::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be rank 2");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  DenseArray out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  }
  require_finite(out, "matmul");
  return out;
}

DenseArray elementwise(ElementwiseOp op, const DenseArray& a) {
  DenseArray out(a.shape());
  switch (op) {
    case ElementwiseOp::sigmoid:
      std::transform(a.values().begin(), a.values().end(), out.values().begin(), sigmoid);
      break;
    case ElementwiseOp::relu:
      std::transform(a.values().begin(), a.values().end(), out.values().begin(),
                     [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    default:
      throw DimensionError("elementwise: binary op called with one operand");
  }
  require_finite(out, "elementwise");
  return out;
}

DenseArray elementwise(ElementwiseOp op, const DenseArray& a, const DenseArray& b) {
  require_same_shape(a, b, "elementwise");
  DenseArray out(a.shape());
  const auto av = a.values();
  const auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    switch (op) {
      case ElementwiseOp::add: ov[i] = av[i] + bv[i]; break;
      case ElementwiseOp::sub: ov[i] = av[i] - bv[i]; break;
      case ElementwiseOp::mul: ov[i] = av[i] * bv[i]; break;
      default: throw DimensionError("elementwise: unary op called with two operands");
    }
  }
  require_finite(out, "elementwise");
  return out;
}

DenseArray reduce(ReduceOp op, const DenseArray& a, std::optional<std::size_t> axis) {
  // View the array as [outer, len, inner] around the reduced axis.
  std::size_t outer = 1, len = a.size(), inner = 1;
  Shape out_shape;
  if (axis) {
    if (*axis >= a.rank()) {
      throw DimensionError("reduce: axis " + std::to_string(*axis) + " invalid for rank " +
                           std::to_string(a.rank()));
    }
    len = a.shape()[*axis];
    for (std::size_t i = 0; i < *axis; ++i) outer *= a.shape()[i];
    for (std::size_t i = *axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
  }
  if (len == 0 && op != ReduceOp::sum) throw DimensionError("reduce: empty reduction axis");

  DenseArray out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = op == ReduceOp::max ? a[o * len * inner + i] : 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double x = a[(o * len + l) * inner + i];
        if (op == ReduceOp::max) {
          acc = std::max(acc, x);
        } else {
          acc += x;
        }
      }
      if (op == ReduceOp::mean) acc /= static_cast<double>(len);
      out[o * inner + i] = acc;
    }
  }
  require_finite(out, "reduce");
  return out;
}

void write_raw_tensor(std::ostream& out, const DenseArray& a) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(a.rank()));
  for (auto d : a.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : a.values()) put_f64(out, v);
  if (!out) throw IoError("raw tensor: write failed");
}

DenseArray read_raw_tensor(std::istream& in) {
  const auto magic = get_bytes<4>(in);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin(),
                  [](unsigned char m, char k) { return m == static_cast<unsigned char>(k); })) {
    throw IoError("raw tensor: bad magic");
  }
  const std::uint32_t rank = get_u32(in);
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(in);
  std::vector<double> values(shape_volume(shape));
  for (auto& v : values) v = get_f64(in);
  return DenseArray(std::move(shape), std::move(values));
}

void save_raw_tensor(const std::filesystem::path& path, const DenseArray& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_raw_tensor(out, a);
}

DenseArray load_raw_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_raw_tensor(in);
}

}  // namespace paramcrop
