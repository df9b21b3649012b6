#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "paramcrop/contrastive.hpp"
#include "paramcrop/errors.hpp"

using namespace paramcrop;

namespace {

DenseArray random_rows(std::mt19937_64& rng, std::size_t rows, std::size_t dim) {
  std::normal_distribution<double> nd;
  DenseArray z({rows, dim});
  for (double& x : z.values()) x = nd(rng);
  return z;
}

std::vector<std::vector<double>> as_rows(const DenseArray& a) {
  std::vector<std::vector<double>> out(a.dim(0));
  for (std::size_t i = 0; i < a.dim(0); ++i) out[i].assign(a.data() + i * a.dim(1), a.data() + (i + 1) * a.dim(1));
  return out;
}

}  // namespace

TEST_CASE("cosine_matrix") {
  const DenseArray same = DenseArray::from_rows({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}});
  const DenseArray cs = cosine_matrix(same);
  for (double x : cs.values()) CHECK(x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_matrix(DenseArray::identity(3)) == DenseArray::identity(3));
  const DenseArray anti = DenseArray::from_rows({{0.6, 0.8}, {-0.6, -0.8}});
  CHECK(cosine_matrix(anti).at(0, 1) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_matrix(DenseArray::from_rows({{1.0, 1.0}, {1.0, 0.0}})), ContractError);
  CHECK_NOTHROW(cosine_matrix(DenseArray::from_rows({{0.0, 0.0}, {1.0, 0.0}})));
}

TEST_CASE("nt_xent matches the brute-force definition") {
  std::mt19937_64 rng(31);
  for (std::size_t n = 1; n <= 4; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const DenseArray e = l2_normalize_rows(random_rows(rng, 2 * n, 8));
      const double tau = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
      CHECK(std::abs(nt_xent(e, {tau}) - oracle::nt_xent(as_rows(e), tau)) <= 1e-12);
    }
  }
}

TEST_CASE("nt_xent hand cases") {
  SUBCASE("single pair is always zero") {
    std::mt19937_64 rng(1);
    CHECK(nt_xent(l2_normalize_rows(random_rows(rng, 2, 5)), {0.1}) == 0.0);
    const DenseArray g = nt_xent_backward(l2_normalize_rows(random_rows(rng, 2, 5)), {0.1});
    for (double x : g.values()) CHECK(x == 0.0);
  }
  SUBCASE("all rows identical") {
    for (std::size_t n = 1; n <= 4; ++n) {
      const DenseArray e({2 * n, 3}, std::vector<double>(6 * n, 1.0 / std::sqrt(3.0)));
      for (double tau : {0.05, 0.1, 1.0, 3.0}) {
        CHECK(std::abs(nt_xent(e, {tau}) - std::log(2.0 * n - 1.0)) <= 1e-12);
      }
    }
  }
  SUBCASE("two pairs, identical positives, orthogonal negatives") {
    const DenseArray e = DenseArray::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
    CHECK(std::abs(nt_xent(e, {1.0}) - std::log(1.0 + 2.0 / std::exp(1.0))) <= 1e-9);
    CHECK(nt_xent(e, {1.0}) == doctest::Approx(0.551445).epsilon(1e-5));
  }
  CHECK_THROWS_AS(nt_xent(DenseArray({0, 3}), {0.1}), DimensionError);
  CHECK_THROWS_AS(nt_xent(DenseArray::from_rows({{1, 0}, {1, 0}, {0, 1}}), {0.1}), DimensionError);
  CHECK_THROWS_AS(nt_xent(DenseArray::from_rows({{1, 0}, {1, 0}}), {0.0}), ConfigError);
}

TEST_CASE("nt_xent properties") {
  std::mt19937_64 rng(77);
  SUBCASE("invariant under a shared orthogonal rotation") {
    const DenseArray e = l2_normalize_rows(random_rows(rng, 6, 2));
    const double a = 0.83;
    DenseArray r(e.shape());
    for (std::size_t i = 0; i < 6; ++i) {
      r.at(i, 0) = std::cos(a) * e.at(i, 0) - std::sin(a) * e.at(i, 1);
      r.at(i, 1) = std::sin(a) * e.at(i, 0) + std::cos(a) * e.at(i, 1);
    }
    CHECK(nt_xent(r, {0.2}) == doctest::Approx(nt_xent(e, {0.2})).epsilon(1e-12));
  }
  SUBCASE("non-negative") {
    for (int i = 0; i < 50; ++i) CHECK(nt_xent(l2_normalize_rows(random_rows(rng, 8, 4)), {0.1}) >= 0.0);
  }
  SUBCASE("large similarities stay finite at small temperature") {
    const DenseArray e = DenseArray::from_rows({{1, 0}, {1, 0}, {-1, 0}, {-1, 0}});
    CHECK(std::isfinite(nt_xent(e, {1e-3})));
  }
  SUBCASE("swapping pair order permutes the gradient identically") {
    const DenseArray e = l2_normalize_rows(random_rows(rng, 6, 5));
    DenseArray s(e.shape());
    const std::size_t perm[6] = {2, 3, 0, 1, 5, 4};
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t d = 0; d < 5; ++d) s.at(i, d) = e.at(perm[i], d);
    }
    const DenseArray ge = nt_xent_backward(e, {0.1});
    const DenseArray gs = nt_xent_backward(s, {0.1});
    CHECK(nt_xent(s, {0.1}) == doctest::Approx(nt_xent(e, {0.1})).epsilon(1e-13));
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t d = 0; d < 5; ++d) CHECK(gs.at(i, d) == doctest::Approx(ge.at(perm[i], d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("nt_xent gradient through normalization matches finite differences") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    DenseArray z = random_rows(rng, 8, 8);
    const LossConfig cfg{0.1};
    const auto f = [&] { return oracle::nt_xent(as_rows(z), cfg.temperature); };
    const DenseArray analytic = l2_normalize_rows_backward(z, nt_xent_backward(l2_normalize_rows(z), cfg));
    const auto numeric = oracle::finite_difference(f, z.values());
    CHECK(oracle::max_rel_error(analytic.values(), numeric) < 1e-6);
  }
}

TEST_CASE("l2 normalization") {
  const DenseArray z = DenseArray::from_rows({{3, 4}, {0, 0}});
  const DenseArray n = l2_normalize_rows(z);
  CHECK(n.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.at(1, 0) == 0.0);
  CHECK(n.at(1, 1) == 0.0);
  const DenseArray g = l2_normalize_rows_backward(z, DenseArray::from_rows({{1, 1}, {1, 1}}));
  CHECK(g.at(1, 0) == 0.0);
  CHECK(g.at(1, 1) == 0.0);
  CHECK(g.all_finite());
}

TEST_CASE("encoder") {
  std::mt19937_64 rng(9);
  EncoderConfig cfg;
  cfg.in_channels = 2;
  cfg.features = 4;
  cfg.embed_dim = 5;
  ToyEncoder enc = init_encoder(cfg, rng);
  for (double b : enc.proj_b.values()) CHECK(b == 0.0);

  SUBCASE("output is a unit row") {
    std::uniform_real_distribution<double> u(-1, 1);
    VideoTensor v({2, 4, 6, 6});
    for (double& x : v.values()) x = u(rng);
    const DenseArray e = encode(v, enc);
    CHECK(e.shape() == Shape{1, 5});
    double s = 0;
    for (double x : e.values()) s += x * x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero input with zero biases maps to the zero direction") {
    ToyEncoder z = enc;
    for (double& b : z.conv_b.values()) b = 0.0;
    const DenseArray e = encode(VideoTensor({2, 4, 6, 6}), z);
    for (double x : e.values()) CHECK(x == 0.0);
    CHECK(encode(VideoTensor({2, 4, 6, 6}), enc).all_finite());
  }
  SUBCASE("positive scaling of the input leaves the embedding unchanged without biases") {
    ToyEncoder z = enc;
    for (double& b : z.conv_b.values()) b = 0.0;
    std::uniform_real_distribution<double> u(-1, 1);
    VideoTensor v({2, 4, 6, 6});
    for (double& x : v.values()) x = u(rng);
    VideoTensor v2 = v;
    for (double& x : v2.values()) x *= 2;
    const DenseArray a = encode(v, z), b = encode(v2, z);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-13));
  }
  SUBCASE("weight and input gradients match finite differences") {
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 10; ++trial) {
      VideoTensor v({2, 4, 5, 5});
      for (double& x : v.values()) x = u(rng);
      ToyEncoder e2 = init_encoder(cfg, rng);
      const EncoderForward fwd = encoder_forward(v, e2);
      bool near_kink = false;
      for (double p : fwd.conv_pre.values()) near_kink |= std::abs(p) < 1e-4;
      if (near_kink) continue;
      DenseArray w({1, 5});
      for (double& x : w.values()) x = u(rng);
      const auto f = [&] {
        const DenseArray e = encode(v, e2);
        double s = 0;
        for (std::size_t i = 0; i < 5; ++i) s += w[i] * e[i];
        return s;
      };
      const DenseArray z({1, 5}, fwd.projection);
      const EncoderBackward eb = encoder_backward(l2_normalize_rows_backward(z, w).values(), v, fwd, e2);
      CHECK(oracle::max_rel_error(eb.weights.conv_w.values(), oracle::finite_difference(f, e2.conv_w.values())) < 1e-5);
      CHECK(oracle::max_rel_error(eb.weights.conv_b.values(), oracle::finite_difference(f, e2.conv_b.values())) < 1e-5);
      CHECK(oracle::max_rel_error(eb.weights.proj_w.values(), oracle::finite_difference(f, e2.proj_w.values())) < 1e-5);
      CHECK(oracle::max_rel_error(eb.weights.proj_b.values(), oracle::finite_difference(f, e2.proj_b.values())) < 1e-5);
      CHECK(oracle::max_rel_error(eb.input.values(), oracle::finite_difference(f, v.values())) < 1e-5);
    }
  }
  CHECK_THROWS_AS(encode(VideoTensor({3, 4, 6, 6}), enc), DimensionError);
}
