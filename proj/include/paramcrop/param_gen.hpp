#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "paramcrop/affine_crop.hpp"
#include "paramcrop/optim.hpp"
#include "paramcrop/tensor.hpp"

namespace paramcrop {

using Rng = std::mt19937_64;

// Two-layer bias-free generator v = sigmoid(W2 relu(W1 n)) for one view
// branch. W1 is hidden_dim x noise_dim, W2 is 6 x hidden_dim.
struct CropperState {
  DenseArray w1;
  DenseArray w2;
  ParamBounds bounds;

  std::size_t noise_dim() const { return w1.dim(1); }
  std::size_t hidden_dim() const { return w1.dim(0); }
};

// Weights drawn from Uniform[-init_scale, init_scale].
CropperState init_cropper(std::size_t noise_dim, std::size_t hidden_dim, const ParamBounds& bounds,
                          Rng& rng, double init_scale = 0.01);

// m draws from Uniform[0, 1).
std::vector<double> sample_noise(Rng& rng, std::size_t m);

// Activations kept for the backward pass.
struct MlpForward {
  std::vector<double> noise;
  std::vector<double> pre_hidden;  // W1 n
  std::vector<double> hidden;      // relu(W1 n)
  UnitParams v;
};

MlpForward mlp_forward(std::span<const double> noise, const CropperState& s);

struct MlpGradients {
  DenseArray w1;
  DenseArray w2;

  double squared_norm() const;
  bool is_zero() const;
};

// Chain rule through sigmoid and relu; relu passes no gradient at exactly 0.
MlpGradients mlp_backward(const ParamVector& grad_v, const MlpForward& fwd, const CropperState& s);

// Identity forward, negated gradient backward.
ParamVector reverse_gradient(const ParamVector& g);
DenseArray reverse_gradient(const DenseArray& g);

void accumulate(MlpGradients& into, const MlpGradients& g);

// One optimizer step. Throws TrainingError carrying `step` on non-finite
// gradients (weights are left untouched in that case).
void update_weights(CropperState& s, const MlpGradients& grads, SgdMomentum& optimizer, std::size_t step);

// Writes <prefix>_w1.pct, <prefix>_w2.pct and <prefix>.manifest in `dir`.
void save_checkpoint(const std::filesystem::path& dir, const std::string& prefix, const CropperState& s,
                     std::uint64_t seed);
CropperState load_checkpoint(const std::filesystem::path& dir, const std::string& prefix);

}  // namespace paramcrop
