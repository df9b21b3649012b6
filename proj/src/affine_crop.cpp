#include "paramcrop/affine_crop.hpp"

#include <cmath>

#include "paramcrop/errors.hpp"

namespace paramcrop {

namespace {

double map_interval(const Interval& range, double v) { return range.lo + v * (range.hi - range.lo); }

void validate_scale(const Interval& range, const char* field) {
  if (!(range.lo > 0.0) || !(range.hi <= 1.0) || !(range.lo <= range.hi)) {
    throw ConfigError(field, "scale range must satisfy 0 < min <= max <= 1");
  }
}

}  // namespace

bool AffineParams::valid() const {
  const auto in_scale = [](double s) { return s > 0.0 && s <= 1.0; };
  return in_scale(scale_spatial) && in_scale(scale_temporal) &&
         std::abs(dx) <= 1.0 - scale_spatial && std::abs(dy) <= 1.0 - scale_spatial &&
         std::abs(dt) <= 1.0 - scale_temporal;
}

void ParamBounds::validate() const {
  validate_scale(scale_spatial, "scale_spatial");
  validate_scale(scale_temporal, "scale_temporal");
  if (!(theta.lo <= theta.hi) || !std::isfinite(theta.lo) || !std::isfinite(theta.hi)) {
    throw ConfigError("theta", "rotation range must satisfy min <= max");
  }
  if (!(detach_bound >= 0.0 && detach_bound <= 0.5)) {
    throw ConfigError("detach_bound", "must lie in [0, 0.5]");
  }
}

Interval offset_bounds(double scale) { return {scale - 1.0, 1.0 - scale}; }

SamplingGrid::SamplingGrid(std::size_t frames, std::size_t height, std::size_t width)
    : frames_(frames), height_(height), width_(width), coords_(3 * frames * height * width, 0.0) {}

DenseArray SamplingGrid::to_array() const {
  return DenseArray({frames_, height_, width_, 3}, coords_);
}

double axis_coordinate(std::size_t i, std::size_t len) {
  if (len == 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(len - 1);
}

AffineMatrix build_affine_matrix(const AffineParams& p) {
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  AffineMatrix a;
  // The rotation terms are deliberately left unscaled by the spatial scale.
  a(0, 0) = p.scale_spatial * c;
  a(0, 1) = -s;
  a(0, 3) = p.dx;
  a(1, 0) = s;
  a(1, 1) = p.scale_spatial * c;
  a(1, 3) = p.dy;
  a(2, 2) = p.scale_temporal;
  a(2, 3) = p.dt;
  return a;
}

EarlyStopResult apply_early_stop(const UnitParams& v, double detach_bound) {
  if (!(detach_bound >= 0.0 && detach_bound <= 0.5)) {
    throw ConfigError("detach_bound", "must lie in [0, 0.5]");
  }
  EarlyStopResult out{v, {}};
  for (std::size_t i = 0; i < kNumParams; ++i) {
    out.mask[i] = std::abs(v[i] - 0.5) <= 0.5 - detach_bound;
  }
  return out;
}

AffineParams clamp_params(const UnitParams& v, const ParamBounds& bounds) {
  AffineParams p;
  p.scale_spatial = map_interval(bounds.scale_spatial, v[kScaleSpatial]);
  p.scale_temporal = map_interval(bounds.scale_temporal, v[kScaleTemporal]);
  p.theta = map_interval(bounds.theta, v[kRotation]);
  p.dx = map_interval(offset_bounds(p.scale_spatial), v[kOffsetX]);
  p.dy = map_interval(offset_bounds(p.scale_spatial), v[kOffsetY]);
  p.dt = map_interval(offset_bounds(p.scale_temporal), v[kOffsetT]);
  return p;
}

ParamVector clamp_params_backward(const ParamVector& grad_params, const UnitParams& v,
                                  const ParamBounds& bounds, const GradientMask& mask) {
  const double span_sp = bounds.scale_spatial.hi - bounds.scale_spatial.lo;
  const double span_st = bounds.scale_temporal.hi - bounds.scale_temporal.lo;
  const double span_theta = bounds.theta.hi - bounds.theta.lo;
  const double sp = bounds.scale_spatial.lo + v[kScaleSpatial] * span_sp;
  const double st = bounds.scale_temporal.lo + v[kScaleTemporal] * span_st;

  // offset = (s - 1) + v_off * 2 (1 - s)  =>  d offset / d s = 1 - 2 v_off.
  const double g_sp = grad_params[kScaleSpatial] +
                      grad_params[kOffsetX] * (1.0 - 2.0 * v[kOffsetX]) +
                      grad_params[kOffsetY] * (1.0 - 2.0 * v[kOffsetY]);
  const double g_st = grad_params[kScaleTemporal] + grad_params[kOffsetT] * (1.0 - 2.0 * v[kOffsetT]);

  ParamVector g{};
  g[kScaleSpatial] = g_sp * span_sp;
  g[kScaleTemporal] = g_st * span_st;
  g[kRotation] = grad_params[kRotation] * span_theta;
  g[kOffsetX] = grad_params[kOffsetX] * 2.0 * (1.0 - sp);
  g[kOffsetY] = grad_params[kOffsetY] * 2.0 * (1.0 - sp);
  g[kOffsetT] = grad_params[kOffsetT] * 2.0 * (1.0 - st);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!mask[i]) g[i] = 0.0;
  }
  return g;
}

SamplingGrid generate_grid(std::size_t frames, std::size_t height, std::size_t width) {
  if (frames == 0 || height == 0 || width == 0) {
    throw DimensionError("generate_grid: every axis length must be >= 1");
  }
  SamplingGrid grid(frames, height, width);
  std::size_t p = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const double ct = axis_coordinate(t, frames);
    for (std::size_t y = 0; y < height; ++y) {
      const double cy = axis_coordinate(y, height);
      for (std::size_t x = 0; x < width; ++x, ++p) {
        double* c = grid.point(p);
        c[0] = axis_coordinate(x, width);
        c[1] = cy;
        c[2] = ct;
      }
    }
  }
  return grid;
}

SamplingGrid transform_grid(const SamplingGrid& grid, const AffineMatrix& a) {
  SamplingGrid out(grid.frames(), grid.height(), grid.width());
  for (std::size_t p = 0; p < grid.points(); ++p) {
    const double* in = grid.point(p);
    double* o = out.point(p);
    for (std::size_t r = 0; r < 3; ++r) {
      o[r] = a(r, 0) * in[0] + a(r, 1) * in[1] + a(r, 2) * in[2] + a(r, 3);
    }
  }
  return out;
}

ParamVector transform_grid_backward(const SamplingGrid& grad_coords, const SamplingGrid& grid,
                                    const AffineParams& p) {
  if (!grad_coords.same_shape(grid)) {
    throw DimensionError("transform_grid_backward: gradient and grid shapes differ");
  }
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  ParamVector g{};
  for (std::size_t i = 0; i < grid.points(); ++i) {
    const double* in = grid.point(i);
    const double* go = grad_coords.point(i);
    const double x = in[0], y = in[1], t = in[2];
    g[kScaleSpatial] += go[0] * c * x + go[1] * c * y;
    g[kScaleTemporal] += go[2] * t;
    g[kRotation] += go[0] * (-p.scale_spatial * s * x - c * y) + go[1] * (c * x - p.scale_spatial * s * y);
    g[kOffsetX] += go[0];
    g[kOffsetY] += go[1];
    g[kOffsetT] += go[2];
  }
  return g;
}

}  // namespace paramcrop
