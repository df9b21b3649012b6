#include "paramcrop/sampler.hpp"

#include <cmath>

#include "paramcrop/errors.hpp"

namespace paramcrop {

namespace {

// Positions this close to an integer index are snapped onto it, so that
// grids landing on voxel centers reproduce them bit-exactly.
constexpr double kSnap = 1e-10;

struct AxisCell {
  std::size_t lo = 0;
  double frac = 0.0;
  double dpos = 0.0;  // d(index position) / d(coordinate); zero when clamped
};

AxisCell locate(double coord, std::size_t len) {
  if (!std::isfinite(coord)) throw NumericError("sample: non-finite grid coordinate");
  const double half_span = 0.5 * static_cast<double>(len - 1);
  AxisCell cell;
  double pos;
  if (coord < -1.0) {
    pos = 0.0;
  } else if (coord > 1.0) {
    pos = static_cast<double>(len - 1);
  } else {
    pos = (coord + 1.0) * half_span;
    cell.dpos = half_span;
  }
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) < kSnap) pos = nearest;
  auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo >= len - 1) lo = len - 2;
  cell.lo = lo;
  cell.frac = pos - static_cast<double>(lo);
  return cell;
}

struct VideoDims {
  std::size_t channels, frames, height, width;
};

VideoDims checked_dims(const VideoTensor& video) {
  if (video.rank() != 4) throw DimensionError("sample: video must be rank 4 (C x T x H x W)");
  VideoDims d{video.dim(0), video.dim(1), video.dim(2), video.dim(3)};
  if (d.frames < 2 || d.height < 2 || d.width < 2) {
    throw DimensionError("sample: T, H and W must each be >= 2, got " + shape_to_string(video.shape()));
  }
  return d;
}

}  // namespace

VideoTensor sample(const VideoTensor& video, const SamplingGrid& grid) {
  const VideoDims d = checked_dims(video);
  VideoTensor out({d.channels, grid.frames(), grid.height(), grid.width()});
  const std::size_t points = grid.points();
  const std::size_t plane = d.height * d.width;
  const std::size_t volume = d.frames * plane;
  const double* src = video.data();
  double* dst = out.data();

  for (std::size_t p = 0; p < points; ++p) {
    const double* c = grid.point(p);
    const AxisCell cx = locate(c[0], d.width);
    const AxisCell cy = locate(c[1], d.height);
    const AxisCell ct = locate(c[2], d.frames);
    const double wx[2] = {1.0 - cx.frac, cx.frac};
    const double wy[2] = {1.0 - cy.frac, cy.frac};
    const double wt[2] = {1.0 - ct.frac, ct.frac};
    const std::size_t base = ct.lo * plane + cy.lo * d.width + cx.lo;
    for (std::size_t ch = 0; ch < d.channels; ++ch) {
      const double* v = src + ch * volume + base;
      double acc = 0.0;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const double* row = v + a * plane + b * d.width;
          acc += wt[a] * wy[b] * (wx[0] * row[0] + wx[1] * row[1]);
        }
      }
      dst[ch * points + p] = acc;
    }
  }
  return out;
}

SamplingGrid sample_backward(const VideoTensor& grad_out, const VideoTensor& video,
                             const SamplingGrid& grid) {
  const VideoDims d = checked_dims(video);
  const Shape expected{d.channels, grid.frames(), grid.height(), grid.width()};
  if (grad_out.shape() != expected) {
    throw DimensionError("sample_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                         " does not match " + shape_to_string(expected));
  }
  SamplingGrid grad(grid.frames(), grid.height(), grid.width());
  const std::size_t points = grid.points();
  const std::size_t plane = d.height * d.width;
  const std::size_t volume = d.frames * plane;
  const double* src = video.data();
  const double* go = grad_out.data();

  for (std::size_t p = 0; p < points; ++p) {
    const double* c = grid.point(p);
    const AxisCell cx = locate(c[0], d.width);
    const AxisCell cy = locate(c[1], d.height);
    const AxisCell ct = locate(c[2], d.frames);
    const double wx[2] = {1.0 - cx.frac, cx.frac};
    const double wy[2] = {1.0 - cy.frac, cy.frac};
    const double wt[2] = {1.0 - ct.frac, ct.frac};
    const std::size_t base = ct.lo * plane + cy.lo * d.width + cx.lo;
    double gx = 0.0, gy = 0.0, gt = 0.0;
    for (std::size_t ch = 0; ch < d.channels; ++ch) {
      const double g = go[ch * points + p];
      if (g == 0.0) continue;
      const double* v = src + ch * volume + base;
      // Derivatives of the interpolant with respect to each fractional position.
      double dfx = 0.0, dfy = 0.0, dft = 0.0;
      for (int a = 0; a < 2; ++a) {
        const double st = a ? 1.0 : -1.0;
        for (int b = 0; b < 2; ++b) {
          const double sy = b ? 1.0 : -1.0;
          const double* row = v + a * plane + b * d.width;
          dfx += wt[a] * wy[b] * (row[1] - row[0]);
          const double lerp_x = wx[0] * row[0] + wx[1] * row[1];
          dfy += wt[a] * sy * lerp_x;
          dft += st * wy[b] * lerp_x;
        }
      }
      gx += g * dfx;
      gy += g * dfy;
      gt += g * dft;
    }
    double* out = grad.point(p);
    out[0] = gx * cx.dpos;
    out[1] = gy * cy.dpos;
    out[2] = gt * ct.dpos;
  }
  return grad;
}

}  // namespace paramcrop
