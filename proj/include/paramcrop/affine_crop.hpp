#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "paramcrop/tensor.hpp"

namespace paramcrop {

// Index of each crop parameter in six-vectors (unit params, gradients).
enum ParamIndex : std::size_t {
  kScaleSpatial = 0,
  kScaleTemporal = 1,
  kRotation = 2,
  kOffsetX = 3,
  kOffsetY = 4,
  kOffsetT = 5,
};
inline constexpr std::size_t kNumParams = 6;

using ParamVector = std::array<double, kNumParams>;

// Crop parameters in normalized coordinates. The spatial scale is shared by
// both spatial axes; offsets are cube centers in the source frame.
struct AffineParams {
  double scale_spatial = 1.0;
  double scale_temporal = 1.0;
  double theta = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double dt = 0.0;

  ParamVector as_vector() const { return {scale_spatial, scale_temporal, theta, dx, dy, dt}; }
  static AffineParams from_vector(const ParamVector& p) { return {p[0], p[1], p[2], p[3], p[4], p[5]}; }

  // Scales in (0, 1] and each offset within 1 - scale of the origin.
  bool valid() const;
};

// Raw generator output, every entry in [0, 1].
struct UnitParams {
  ParamVector v{0.5, 0.5, 0.5, 0.5, 0.5, 0.5};

  double operator[](std::size_t i) const { return v[i]; }
  double& operator[](std::size_t i) { return v[i]; }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Static ranges for the scales and rotation. Offset ranges are not stored:
// they are derived from the mapped scales so crops stay inside the source.
struct ParamBounds {
  Interval scale_spatial{0.5, 1.0};
  Interval scale_temporal{0.5, 1.0};
  Interval theta{0.0, 0.0};
  double detach_bound = 0.2;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Offset interval [s - 1, 1 - s] for an already-mapped scale.
Interval offset_bounds(double scale);

// Row-major 3x4 matrix mapping homogeneous crop coordinates (x, y, t, 1)
// to source coordinates.
struct AffineMatrix {
  std::array<double, 12> m{};

  double operator()(std::size_t row, std::size_t col) const { return m[row * 4 + col]; }
  double& operator()(std::size_t row, std::size_t col) { return m[row * 4 + col]; }
};

// True entries let gradient flow back into the generator.
using GradientMask = std::array<bool, kNumParams>;

// T x H x W x 3 array of (x, y, t) coordinates.
class SamplingGrid {
 public:
  SamplingGrid() = default;
  SamplingGrid(std::size_t frames, std::size_t height, std::size_t width);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t points() const noexcept { return frames_ * height_ * width_; }

  std::span<const double> coords() const noexcept { return coords_; }
  std::span<double> coords() noexcept { return coords_; }

  // Coordinate triple of point p (flattened t, y, x order).
  const double* point(std::size_t p) const { return coords_.data() + 3 * p; }
  double* point(std::size_t p) { return coords_.data() + 3 * p; }

  bool same_shape(const SamplingGrid& other) const noexcept {
    return frames_ == other.frames_ && height_ == other.height_ && width_ == other.width_;
  }

  DenseArray to_array() const;

  friend bool operator==(const SamplingGrid&, const SamplingGrid&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> coords_;
};

// Normalized coordinate of index i on an axis of length len (align corners).
double axis_coordinate(std::size_t i, std::size_t len);

AffineMatrix build_affine_matrix(const AffineParams& p);

struct EarlyStopResult {
  UnitParams values;
  GradientMask mask{};
};

// Passes values through; entry i keeps its gradient iff |v_i - 0.5| <= 0.5 - b.
EarlyStopResult apply_early_stop(const UnitParams& v, double detach_bound);

AffineParams clamp_params(const UnitParams& v, const ParamBounds& bounds);

// Gradient of a scalar with respect to v given its gradient with respect to
// the clamped params. Includes the path through the scale-dependent offset
// ranges; masked-out entries receive zero.
ParamVector clamp_params_backward(const ParamVector& grad_params, const UnitParams& v,
                                  const ParamBounds& bounds, const GradientMask& mask);

SamplingGrid generate_grid(std::size_t frames, std::size_t height, std::size_t width);

SamplingGrid transform_grid(const SamplingGrid& grid, const AffineMatrix& a);

// Gradient with respect to the six params of a scalar whose gradient with
// respect to the transformed coordinates is grad_coords. `grid` is the
// untransformed grid.
ParamVector transform_grid_backward(const SamplingGrid& grad_coords, const SamplingGrid& grid,
                                    const AffineParams& p);

}  // namespace paramcrop
