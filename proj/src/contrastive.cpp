#include "paramcrop/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "paramcrop/errors.hpp"

namespace paramcrop {

namespace {

constexpr double kUnitTolerance = 1e-9;

std::size_t checked_rows(const EmbeddingBatch& e) {
  if (e.rank() != 2) throw DimensionError("embeddings must be a rank-2 batch");
  const std::size_t rows = e.dim(0);
  if (rows == 0 || rows % 2 != 0) {
    throw DimensionError("embedding batch needs 2N rows with N >= 1, got " + std::to_string(rows));
  }
  return rows;
}

std::size_t partner(std::size_t i) { return i ^ 1u; }

// Softmax over row i of sim / tau excluding the diagonal; returns the
// log-sum-exp and fills probs (probs[i] = 0).
double row_softmax(const DenseArray& sim, std::size_t i, double tau, std::vector<double>& probs) {
  const std::size_t n = sim.dim(0);
  double max_logit = -INFINITY;
  for (std::size_t k = 0; k < n; ++k) {
    if (k != i) max_logit = std::max(max_logit, sim.at(i, k) / tau);
  }
  double denom = 0.0;
  probs.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (k == i) continue;
    probs[k] = std::exp(sim.at(i, k) / tau - max_logit);
    denom += probs[k];
  }
  for (auto& p : probs) p /= denom;
  return max_logit + std::log(denom);
}

std::size_t conv_out_len(std::size_t len, const EncoderConfig& c) {
  if (len + 2 * c.padding < c.kernel) throw DimensionError("encoder: input smaller than kernel");
  return (len + 2 * c.padding - c.kernel) / c.stride + 1;
}

DenseArray uniform(Shape shape, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  DenseArray a(std::move(shape));
  for (auto& x : a.values()) x = dist(rng);
  return a;
}

}  // namespace

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature", "must be a finite value > 0");
  }
}

DenseArray cosine_matrix(const EmbeddingBatch& e) {
  if (e.rank() != 2) throw DimensionError("cosine_matrix: embeddings must be rank 2");
  const std::size_t n = e.dim(0), d = e.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += e.at(i, j) * e.at(i, j);
    if (sq != 0.0 && std::abs(std::sqrt(sq) - 1.0) > kUnitTolerance) {
      throw ContractError("cosine_matrix: row " + std::to_string(i) + " is not unit-norm");
    }
  }
  DenseArray sim({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += e.at(i, k) * e.at(j, k);
      sim.at(i, j) = dot;
      sim.at(j, i) = dot;
    }
  }
  return sim;
}

double nt_xent(const EmbeddingBatch& e, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t rows = checked_rows(e);
  const DenseArray sim = cosine_matrix(e);
  std::vector<double> probs;
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double lse = row_softmax(sim, i, cfg.temperature, probs);
    total += lse - sim.at(i, partner(i)) / cfg.temperature;
  }
  return total / static_cast<double>(rows);
}

DenseArray nt_xent_backward(const EmbeddingBatch& e, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t rows = checked_rows(e);
  const std::size_t d = e.dim(1);
  const DenseArray sim = cosine_matrix(e);

  // coeff(i, k) = dL / d sim(i, k) for k != i.
  DenseArray coeff({rows, rows});
  const double scale = 1.0 / (static_cast<double>(rows) * cfg.temperature);
  std::vector<double> probs;
  for (std::size_t i = 0; i < rows; ++i) {
    row_softmax(sim, i, cfg.temperature, probs);
    for (std::size_t k = 0; k < rows; ++k) {
      if (k == i) continue;
      coeff.at(i, k) = scale * (probs[k] - (k == partner(i) ? 1.0 : 0.0));
    }
  }
  DenseArray grad({rows, d});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < rows; ++k) {
      if (k == i) continue;
      const double c = coeff.at(i, k) + coeff.at(k, i);
      for (std::size_t j = 0; j < d; ++j) grad.at(i, j) += c * e.at(k, j);
    }
  }
  return grad;
}

DenseArray l2_normalize_rows(const DenseArray& z) {
  if (z.rank() != 2) throw DimensionError("l2_normalize_rows: input must be rank 2");
  DenseArray out(z.shape());
  const std::size_t n = z.dim(0), d = z.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += z.at(i, j) * z.at(i, j);
    const double norm = std::sqrt(sq);
    if (norm <= kNormEpsilon) continue;
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = z.at(i, j) / norm;
  }
  return out;
}

DenseArray l2_normalize_rows_backward(const DenseArray& z, const DenseArray& grad_normalized) {
  if (z.shape() != grad_normalized.shape() || z.rank() != 2) {
    throw DimensionError("l2_normalize_rows_backward: shape mismatch");
  }
  DenseArray out(z.shape());
  const std::size_t n = z.dim(0), d = z.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += z.at(i, j) * z.at(i, j);
    const double norm = std::sqrt(sq);
    if (norm <= kNormEpsilon) continue;
    // (I - u u^T) g / |z| with u = z / |z|.
    double u_dot_g = 0.0;
    for (std::size_t j = 0; j < d; ++j) u_dot_g += z.at(i, j) / norm * grad_normalized.at(i, j);
    for (std::size_t j = 0; j < d; ++j) {
      out.at(i, j) = (grad_normalized.at(i, j) - u_dot_g * z.at(i, j) / norm) / norm;
    }
  }
  return out;
}

ToyEncoder init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.in_channels == 0 || cfg.features == 0 || cfg.embed_dim == 0 || cfg.kernel == 0 ||
      cfg.stride == 0) {
    throw DimensionError("init_encoder: every encoder dimension must be >= 1");
  }
  const std::size_t k = cfg.kernel;
  const double fan_in = static_cast<double>(cfg.in_channels * k * k * k);
  ToyEncoder enc;
  enc.config = cfg;
  enc.conv_w = uniform({cfg.features, cfg.in_channels, k, k, k}, std::sqrt(3.0 / fan_in), rng);
  enc.conv_b = uniform({cfg.features}, 0.1, rng);
  enc.proj_w = uniform({cfg.embed_dim, cfg.features}, std::sqrt(3.0 / static_cast<double>(cfg.features)), rng);
  enc.proj_b = DenseArray({cfg.embed_dim});
  return enc;
}

EncoderGradients EncoderGradients::zeros_like(const ToyEncoder& enc) {
  return {DenseArray(enc.conv_w.shape()), DenseArray(enc.conv_b.shape()), DenseArray(enc.proj_w.shape()),
          DenseArray(enc.proj_b.shape())};
}

void EncoderGradients::accumulate(const EncoderGradients& g) {
  const auto add = [](DenseArray& a, const DenseArray& b) {
    if (a.shape() != b.shape()) throw DimensionError("EncoderGradients: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  add(conv_w, g.conv_w);
  add(conv_b, g.conv_b);
  add(proj_w, g.proj_w);
  add(proj_b, g.proj_b);
}

bool EncoderGradients::all_finite() const {
  return conv_w.all_finite() && conv_b.all_finite() && proj_w.all_finite() && proj_b.all_finite();
}

EncoderForward encoder_forward(const VideoTensor& video, const ToyEncoder& enc) {
  const EncoderConfig& c = enc.config;
  if (video.rank() != 4 || video.dim(0) != c.in_channels) {
    throw DimensionError("encoder: expected " + std::to_string(c.in_channels) + " x T x H x W input, got " +
                         shape_to_string(video.shape()));
  }
  const std::size_t T = video.dim(1), H = video.dim(2), W = video.dim(3);
  const std::size_t To = conv_out_len(T, c), Ho = conv_out_len(H, c), Wo = conv_out_len(W, c);
  const std::size_t k = c.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(c.padding);

  EncoderForward fwd;
  fwd.input_shape = video.shape();
  fwd.conv_shape = {c.features, To, Ho, Wo};
  fwd.conv_pre = DenseArray(fwd.conv_shape);
  fwd.pooled.assign(c.features, 0.0);
  const std::size_t positions = To * Ho * Wo;
  const double* x = video.data();
  const double* w = enc.conv_w.data();

  for (std::size_t f = 0; f < c.features; ++f) {
    double pool = 0.0;
    for (std::size_t ot = 0; ot < To; ++ot) {
      for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double acc = enc.conv_b[f];
          for (std::size_t ch = 0; ch < c.in_channels; ++ch) {
            for (std::size_t kt = 0; kt < k; ++kt) {
              const auto it = static_cast<std::ptrdiff_t>(ot * c.stride + kt) - pad;
              if (it < 0 || it >= static_cast<std::ptrdiff_t>(T)) continue;
              for (std::size_t kh = 0; kh < k; ++kh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * c.stride + kh) - pad;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                const double* xrow = x + ((ch * T + it) * H + ih) * W;
                const double* wrow = w + (((f * c.in_channels + ch) * k + kt) * k + kh) * k;
                for (std::size_t kw = 0; kw < k; ++kw) {
                  const auto iw = static_cast<std::ptrdiff_t>(ow * c.stride + kw) - pad;
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                  acc += wrow[kw] * xrow[iw];
                }
              }
            }
          }
          fwd.conv_pre[((f * To + ot) * Ho + oh) * Wo + ow] = acc;
          if (acc > 0.0) pool += acc;
        }
      }
    }
    fwd.pooled[f] = pool / static_cast<double>(positions);
  }

  fwd.projection.assign(c.embed_dim, 0.0);
  for (std::size_t i = 0; i < c.embed_dim; ++i) {
    double acc = enc.proj_b[i];
    for (std::size_t f = 0; f < c.features; ++f) acc += enc.proj_w.at(i, f) * fwd.pooled[f];
    fwd.projection[i] = acc;
  }
  return fwd;
}

EncoderBackward encoder_backward(std::span<const double> grad_projection, const VideoTensor& video,
                                 const EncoderForward& fwd, const ToyEncoder& enc) {
  const EncoderConfig& c = enc.config;
  if (grad_projection.size() != c.embed_dim || video.shape() != fwd.input_shape) {
    throw DimensionError("encoder_backward: inputs inconsistent with the forward pass");
  }
  const std::size_t T = video.dim(1), H = video.dim(2), W = video.dim(3);
  const std::size_t To = fwd.conv_shape[1], Ho = fwd.conv_shape[2], Wo = fwd.conv_shape[3];
  const std::size_t k = c.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(c.padding);
  const double inv_positions = 1.0 / static_cast<double>(To * Ho * Wo);

  EncoderBackward out{EncoderGradients::zeros_like(enc), VideoTensor(video.shape())};
  std::vector<double> grad_pooled(c.features, 0.0);
  for (std::size_t i = 0; i < c.embed_dim; ++i) {
    out.weights.proj_b[i] = grad_projection[i];
    for (std::size_t f = 0; f < c.features; ++f) {
      out.weights.proj_w.at(i, f) = grad_projection[i] * fwd.pooled[f];
      grad_pooled[f] += enc.proj_w.at(i, f) * grad_projection[i];
    }
  }

  const double* x = video.data();
  const double* w = enc.conv_w.data();
  double* gw = out.weights.conv_w.data();
  double* gx = out.input.data();
  for (std::size_t f = 0; f < c.features; ++f) {
    const double g = grad_pooled[f] * inv_positions;
    if (g == 0.0) continue;
    for (std::size_t ot = 0; ot < To; ++ot) {
      for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          if (!(fwd.conv_pre[((f * To + ot) * Ho + oh) * Wo + ow] > 0.0)) continue;
          out.weights.conv_b[f] += g;
          for (std::size_t ch = 0; ch < c.in_channels; ++ch) {
            for (std::size_t kt = 0; kt < k; ++kt) {
              const auto it = static_cast<std::ptrdiff_t>(ot * c.stride + kt) - pad;
              if (it < 0 || it >= static_cast<std::ptrdiff_t>(T)) continue;
              for (std::size_t kh = 0; kh < k; ++kh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * c.stride + kh) - pad;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                const std::size_t xoff = ((ch * T + it) * H + ih) * W;
                const std::size_t woff = (((f * c.in_channels + ch) * k + kt) * k + kh) * k;
                for (std::size_t kw = 0; kw < k; ++kw) {
                  const auto iw = static_cast<std::ptrdiff_t>(ow * c.stride + kw) - pad;
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                  gw[woff + kw] += g * x[xoff + iw];
                  gx[xoff + iw] += g * w[woff + kw];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

DenseArray encode(const VideoTensor& video, const ToyEncoder& enc) {
  const EncoderForward fwd = encoder_forward(video, enc);
  return l2_normalize_rows(DenseArray({1, fwd.projection.size()}, fwd.projection));
}

void update_encoder(ToyEncoder& enc, const EncoderGradients& g, SgdMomentum& optimizer) {
  optimizer.step(0, enc.conv_w.values(), g.conv_w.values());
  optimizer.step(1, enc.conv_b.values(), g.conv_b.values());
  optimizer.step(2, enc.proj_w.values(), g.proj_w.values());
  optimizer.step(3, enc.proj_b.values(), g.proj_b.values());
}

}  // namespace paramcrop
