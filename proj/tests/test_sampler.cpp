#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "paramcrop/errors.hpp"
#include "paramcrop/sampler.hpp"

using namespace paramcrop;

namespace {

VideoTensor random_video(std::mt19937_64& rng, const Shape& shape) {
  std::uniform_real_distribution<double> u(-1, 1);
  VideoTensor v(shape);
  for (double& x : v.values()) x = u(rng);
  return v;
}

// f(x) = x in coordinate units along width, constant in t and y.
VideoTensor ramp_video(std::size_t C, std::size_t T, std::size_t H, std::size_t W) {
  VideoTensor v({C, T, H, W});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = axis_coordinate(i % W, W);
  return v;
}

double coord_to_pos(double c, std::size_t len) { return (c + 1.0) * 0.5 * static_cast<double>(len - 1); }

}  // namespace

TEST_CASE("identity grid reproduces the source exactly") {
  std::mt19937_64 rng(1);
  for (const Shape& s : {Shape{1, 2, 2, 2}, Shape{3, 5, 7, 9}, Shape{2, 16, 32, 32}}) {
    const VideoTensor v = random_video(rng, s);
    const VideoTensor out = sample(v, generate_grid(s[1], s[2], s[3]));
    REQUIRE(out.shape() == s);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(out[i] == v[i]);
  }
}

TEST_CASE("constant video samples to the constant") {
  const VideoTensor v({2, 4, 4, 4}, 0.37);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  SamplingGrid g(3, 3, 3);
  for (double& c : g.coords()) c = u(rng);
  const VideoTensor out = sample(v, g);
  for (double x : out.values()) CHECK(x == doctest::Approx(0.37).epsilon(1e-15));
  const SamplingGrid grad = sample_backward(VideoTensor({2, 3, 3, 3}, 1.0), v, g);
  for (double x : grad.coords()) CHECK(x == doctest::Approx(0.0).epsilon(1e-12).scale(1));
}

TEST_CASE("linear ramp is reproduced and has unit slope") {
  const VideoTensor v = ramp_video(1, 3, 4, 6);
  SamplingGrid g(1, 1, 1);
  g.point(0)[0] = 0.3;
  g.point(0)[1] = -0.2;
  g.point(0)[2] = 0.1;
  CHECK(sample(v, g)[0] == doctest::Approx(0.3).epsilon(1e-14));
  const SamplingGrid d = sample_backward(VideoTensor({1, 1, 1, 1}, 2.0), v, g);
  CHECK(d.point(0)[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::abs(d.point(0)[1]) < 1e-14);
  CHECK(std::abs(d.point(0)[2]) < 1e-14);
}

TEST_CASE("agrees with an explicit eight-corner interpolation") {
  std::mt19937_64 rng(3);
  const std::size_t T = 4, H = 5, W = 6;
  const VideoTensor v = random_video(rng, {1, T, H, W});
  const std::vector<double> vol(v.values().begin(), v.values().end());
  std::uniform_real_distribution<double> u(-1, 1);
  SamplingGrid g(4, 4, 4);
  for (double& c : g.coords()) c = u(rng);
  const VideoTensor out = sample(v, g);
  for (std::size_t p = 0; p < g.points(); ++p) {
    const double* c = g.point(p);
    const double expect = oracle::trilinear(vol, T, H, W, coord_to_pos(c[2], T), coord_to_pos(c[1], H),
                                            coord_to_pos(c[0], W));
    CHECK(out[p] == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("outputs are convex combinations of neighboring voxels") {
  std::mt19937_64 rng(4);
  const std::size_t T = 3, H = 4, W = 5;
  const VideoTensor v = random_video(rng, {1, T, H, W});
  std::uniform_real_distribution<double> u(-1, 1);
  SamplingGrid g(5, 5, 5);
  for (double& c : g.coords()) c = u(rng);
  const VideoTensor out = sample(v, g);
  for (std::size_t p = 0; p < g.points(); ++p) {
    const double* c = g.point(p);
    const double pos[3] = {coord_to_pos(c[2], T), coord_to_pos(c[1], H), coord_to_pos(c[0], W)};
    double lo = 1e9, hi = -1e9;
    for (int corner = 0; corner < 8; ++corner) {
      const auto at = [&](int axis, std::size_t len) {
        const auto f = static_cast<std::size_t>(std::floor(pos[axis]));
        return std::min(f + ((corner >> axis) & 1), len - 1);
      };
      const double x = v[(at(0, T) * H + at(1, H)) * W + at(2, W)];
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    CHECK(out[p] >= lo - 1e-15);
    CHECK(out[p] <= hi + 1e-15);
  }
}

TEST_CASE("out-of-range coordinates clamp to the border with zero gradient in that axis") {
  std::mt19937_64 rng(5);
  const VideoTensor v = random_video(rng, {1, 3, 3, 3});
  SamplingGrid inside(1, 1, 1), outside(1, 1, 1);
  inside.point(0)[0] = 1.0;
  inside.point(0)[1] = 0.3;
  inside.point(0)[2] = -0.4;
  outside.point(0)[0] = 1.7;
  outside.point(0)[1] = 0.3;
  outside.point(0)[2] = -0.4;
  CHECK(sample(v, outside)[0] == sample(v, inside)[0]);
  const SamplingGrid d = sample_backward(VideoTensor({1, 1, 1, 1}, 1.0), v, outside);
  CHECK(d.point(0)[0] == 0.0);
  CHECK(d.point(0)[1] != 0.0);
}

TEST_CASE("voxel-boundary gradient uses the upper cell") {
  // Piecewise-linear along x with a kink at the middle voxel.
  VideoTensor v({1, 2, 2, 3});
  const double row[3] = {0.0, 1.0, 5.0};
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = row[i % 3];
  SamplingGrid g(1, 1, 1);
  g.point(0)[0] = 0.0;  // exactly on voxel 1
  const SamplingGrid d = sample_backward(VideoTensor({1, 1, 1, 1}, 1.0), v, g);
  // Upper cell slope is (5 - 1) per voxel, times (W - 1) / 2 = 1 voxel per coordinate unit.
  CHECK(d.point(0)[0] == doctest::Approx(4.0));
  g.point(0)[0] = -1.0;  // lower border, upper cell is [0, 1]
  CHECK(sample_backward(VideoTensor({1, 1, 1, 1}, 1.0), v, g).point(0)[0] == doctest::Approx(1.0));
}

TEST_CASE("sample_backward matches finite differences away from voxel boundaries") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  const Shape shape{2, 4, 5, 6};
  for (int trial = 0; trial < 20; ++trial) {
    const VideoTensor v = random_video(rng, shape);
    SamplingGrid g(2, 2, 3);
    for (std::size_t p = 0; p < g.points(); ++p) {
      for (std::size_t a = 0; a < 3; ++a) {
        const std::size_t len = shape[3 - a];
        double c;
        do {
          c = u(rng);
        } while (std::abs(coord_to_pos(c, len) - std::round(coord_to_pos(c, len))) < 1e-4);
        g.point(p)[a] = c;
      }
    }
    const VideoTensor w = random_video(rng, {2, 2, 2, 3});
    const auto f = [&] {
      const VideoTensor out = sample(v, g);
      double s = 0;
      for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
      return s;
    };
    const SamplingGrid analytic = sample_backward(w, v, g);
    const auto numeric = oracle::finite_difference(f, g.coords());
    CHECK(oracle::max_rel_error(analytic.coords(), numeric) < 1e-5);
  }
}

TEST_CASE("dimension errors") {
  CHECK_THROWS_AS(sample(VideoTensor({1, 1, 4, 4}), generate_grid(2, 2, 2)), DimensionError);
  CHECK_THROWS_AS(sample(VideoTensor({4, 4, 4}), generate_grid(2, 2, 2)), DimensionError);
  const VideoTensor v({1, 2, 2, 2});
  CHECK_THROWS_AS(sample_backward(VideoTensor({1, 3, 2, 2}), v, generate_grid(2, 2, 2)), DimensionError);
  SamplingGrid g(1, 1, 1);
  g.point(0)[0] = std::nan("");
  CHECK_THROWS_AS(sample(v, g), NumericError);
}
