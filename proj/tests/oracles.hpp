#pragma once

// Test-side reference implementations, written without the library's
// kernels so they can serve as independent oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace oracle {

inline std::vector<double> finite_difference(const std::function<double()>& f, std::span<double> x,
                                             double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
  double d = 0, s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
    s = std::max({s, std::abs(a[i]), std::abs(b[i])});
  }
  return s == 0 ? 0 : d / s;
}

// Row-major naive triple loop.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                                  std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
      c[i * m + j] = s;
    }
  return c;
}

// NT-Xent written straight from the definition: for each anchor i,
// l_i = -log( exp(s_i,pos / tau) / sum_{k != i} exp(s_ik / tau) ),
// with cosine similarity computed from raw rows.
inline double nt_xent(const std::vector<std::vector<double>>& rows, double tau) {
  const std::size_t n2 = rows.size();
  const auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t d = 0; d < a.size(); ++d) {
      ab += a[d] * b[d];
      aa += a[d] * a[d];
      bb += b[d] * b[d];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
  };
  double total = 0;
  for (std::size_t i = 0; i < n2; ++i) {
    const std::size_t pos = (i % 2 == 0) ? i + 1 : i - 1;
    double denom = 0;
    for (std::size_t k = 0; k < n2; ++k) {
      if (k != i) denom += std::exp(cosine(rows[i], rows[k]) / tau);
    }
    total += -std::log(std::exp(cosine(rows[i], rows[pos]) / tau) / denom);
  }
  return total / static_cast<double>(n2);
}

// Fraction of `samples` uniform points in [-1,1]^3 inside both boxes over the
// fraction inside either. Boxes are {lo[3], hi[3]}.
struct Box {
  double lo[3];
  double hi[3];
  bool contains(const double* p) const {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    }
    return true;
  }
};

inline double monte_carlo_iou(const Box& a, const Box& b, std::size_t samples, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t inter = 0, uni = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double p[3] = {u(rng), u(rng), u(rng)};
    const bool ia = a.contains(p), ib = b.contains(p);
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Trilinear interpolation at a fractional voxel position of a single-channel
// T x H x W volume, written as an explicit eight-corner sum.
inline double trilinear(const std::vector<double>& vol, std::size_t T, std::size_t H, std::size_t W, double t,
                        double y, double x) {
  const auto idx = [&](std::size_t a, std::size_t b, std::size_t c) { return (a * H + b) * W + c; };
  const double ft = std::floor(t), fy = std::floor(y), fx = std::floor(x);
  double acc = 0;
  for (int dt = 0; dt <= 1; ++dt)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const double wt = dt ? t - ft : 1 - (t - ft);
        const double wy = dy ? y - fy : 1 - (y - fy);
        const double wx = dx ? x - fx : 1 - (x - fx);
        const double w = wt * wy * wx;
        if (w == 0) continue;
        const auto ct = std::min<std::size_t>(static_cast<std::size_t>(ft) + dt, T - 1);
        const auto cy = std::min<std::size_t>(static_cast<std::size_t>(fy) + dy, H - 1);
        const auto cx = std::min<std::size_t>(static_cast<std::size_t>(fx) + dx, W - 1);
        acc += w * vol[idx(ct, cy, cx)];
      }
  return acc;
}

}  // namespace oracle
