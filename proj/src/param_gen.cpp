#include "paramcrop/param_gen.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "paramcrop/errors.hpp"
#include "paramcrop/kv_text.hpp"

namespace paramcrop {

namespace {

DenseArray uniform_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  DenseArray a({rows, cols});
  for (auto& x : a.values()) x = dist(rng);
  return a;
}

double parse_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError(key, "missing from checkpoint manifest");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError(key, "not a number: " + it->second);
  }
}

}  // namespace

CropperState init_cropper(std::size_t noise_dim, std::size_t hidden_dim, const ParamBounds& bounds,
                          Rng& rng, double init_scale) {
  if (noise_dim == 0 || hidden_dim == 0) throw DimensionError("init_cropper: dimensions must be >= 1");
  bounds.validate();
  CropperState s;
  s.w1 = uniform_matrix(hidden_dim, noise_dim, init_scale, rng);
  s.w2 = uniform_matrix(kNumParams, hidden_dim, init_scale, rng);
  s.bounds = bounds;
  return s;
}

std::vector<double> sample_noise(Rng& rng, std::size_t m) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> n(m);
  for (auto& x : n) x = dist(rng);
  return n;
}

MlpForward mlp_forward(std::span<const double> noise, const CropperState& s) {
  if (noise.size() != s.noise_dim()) {
    throw DimensionError("mlp_forward: noise length " + std::to_string(noise.size()) + " != " +
                         std::to_string(s.noise_dim()));
  }
  const DenseArray n({noise.size(), 1}, std::vector<double>(noise.begin(), noise.end()));
  const DenseArray pre = matmul(s.w1, n);
  const DenseArray hidden = elementwise(ElementwiseOp::relu, pre);
  const DenseArray v = elementwise(ElementwiseOp::sigmoid, matmul(s.w2, hidden));

  MlpForward out;
  out.noise.assign(noise.begin(), noise.end());
  out.pre_hidden.assign(pre.values().begin(), pre.values().end());
  out.hidden.assign(hidden.values().begin(), hidden.values().end());
  for (std::size_t i = 0; i < kNumParams; ++i) out.v[i] = v[i];
  return out;
}

double MlpGradients::squared_norm() const {
  double acc = 0.0;
  for (double g : w1.values()) acc += g * g;
  for (double g : w2.values()) acc += g * g;
  return acc;
}

bool MlpGradients::is_zero() const {
  for (double g : w1.values()) {
    if (g != 0.0) return false;
  }
  for (double g : w2.values()) {
    if (g != 0.0) return false;
  }
  return true;
}

MlpGradients mlp_backward(const ParamVector& grad_v, const MlpForward& fwd, const CropperState& s) {
  const std::size_t d = s.hidden_dim();
  const std::size_t m = s.noise_dim();
  MlpGradients g{DenseArray({d, m}), DenseArray({kNumParams, d})};

  std::array<double, kNumParams> grad_logit{};
  for (std::size_t i = 0; i < kNumParams; ++i) {
    grad_logit[i] = grad_v[i] * fwd.v[i] * (1.0 - fwd.v[i]);
  }
  std::vector<double> grad_hidden(d, 0.0);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      g.w2.at(i, j) = grad_logit[i] * fwd.hidden[j];
      grad_hidden[j] += s.w2.at(i, j) * grad_logit[i];
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (!(fwd.pre_hidden[j] > 0.0)) continue;
    for (std::size_t k = 0; k < m; ++k) g.w1.at(j, k) = grad_hidden[j] * fwd.noise[k];
  }
  return g;
}

ParamVector reverse_gradient(const ParamVector& g) {
  ParamVector out;
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = -g[i];
  return out;
}

DenseArray reverse_gradient(const DenseArray& g) {
  DenseArray out = g;
  for (auto& x : out.values()) x = -x;
  return out;
}

void accumulate(MlpGradients& into, const MlpGradients& g) {
  if (into.w1.shape() != g.w1.shape() || into.w2.shape() != g.w2.shape()) {
    throw DimensionError("accumulate: gradient shapes differ");
  }
  for (std::size_t i = 0; i < g.w1.size(); ++i) into.w1[i] += g.w1[i];
  for (std::size_t i = 0; i < g.w2.size(); ++i) into.w2[i] += g.w2[i];
}

void update_weights(CropperState& s, const MlpGradients& grads, SgdMomentum& optimizer, std::size_t step) {
  if (grads.w1.shape() != s.w1.shape() || grads.w2.shape() != s.w2.shape()) {
    throw DimensionError("update_weights: gradient shapes do not match the generator");
  }
  if (!all_finite(grads.w1.values()) || !all_finite(grads.w2.values())) {
    throw TrainingError(step, "non-finite cropper gradient");
  }
  optimizer.step(0, s.w1.values(), grads.w1.values());
  optimizer.step(1, s.w2.values(), grads.w2.values());
}

void save_checkpoint(const std::filesystem::path& dir, const std::string& prefix, const CropperState& s,
                     std::uint64_t seed) {
  save_raw_tensor(dir / (prefix + "_w1.pct"), s.w1);
  save_raw_tensor(dir / (prefix + "_w2.pct"), s.w2);
  std::ofstream out(dir / (prefix + ".manifest"));
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
  out << std::setprecision(17);
  out << "noise_dim = " << s.noise_dim() << '\n'
      << "hidden_dim = " << s.hidden_dim() << '\n'
      << "scale_spatial_min = " << s.bounds.scale_spatial.lo << '\n'
      << "scale_spatial_max = " << s.bounds.scale_spatial.hi << '\n'
      << "scale_temporal_min = " << s.bounds.scale_temporal.lo << '\n'
      << "scale_temporal_max = " << s.bounds.scale_temporal.hi << '\n'
      << "theta_min = " << s.bounds.theta.lo << '\n'
      << "theta_max = " << s.bounds.theta.hi << '\n'
      << "detach_bound = " << s.bounds.detach_bound << '\n'
      << "seed = " << seed << '\n';
  if (!out) throw IoError("checkpoint manifest write failed");
}

CropperState load_checkpoint(const std::filesystem::path& dir, const std::string& prefix) {
  const auto kv = load_key_values(dir / (prefix + ".manifest")).section("");
  CropperState s;
  s.w1 = load_raw_tensor(dir / (prefix + "_w1.pct"));
  s.w2 = load_raw_tensor(dir / (prefix + "_w2.pct"));
  s.bounds.scale_spatial = {parse_double(kv, "scale_spatial_min"), parse_double(kv, "scale_spatial_max")};
  s.bounds.scale_temporal = {parse_double(kv, "scale_temporal_min"), parse_double(kv, "scale_temporal_max")};
  s.bounds.theta = {parse_double(kv, "theta_min"), parse_double(kv, "theta_max")};
  s.bounds.detach_bound = parse_double(kv, "detach_bound");
  s.bounds.validate();
  const auto m = static_cast<std::size_t>(parse_double(kv, "noise_dim"));
  const auto d = static_cast<std::size_t>(parse_double(kv, "hidden_dim"));
  if (s.w1.shape() != Shape{d, m} || s.w2.shape() != Shape{kNumParams, d}) {
    throw DimensionError("load_checkpoint: weight shapes disagree with manifest");
  }
  return s;
}

}  // namespace paramcrop
