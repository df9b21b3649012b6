#pragma once

#include <cstddef>
#include <random>

#include "paramcrop/optim.hpp"
#include "paramcrop/sampler.hpp"
#include "paramcrop/tensor.hpp"

namespace paramcrop {

// 2N x D embeddings; rows 2k and 2k+1 are the two views of sample k.
using EmbeddingBatch = DenseArray;

struct LossConfig {
  double temperature = 0.1;

  void validate() const;
};

// Norm guard: rows with norm at or below this map to the zero vector.
inline constexpr double kNormEpsilon = 1e-12;

// Entry (i, j) is the dot product of rows i and j. Rows must have unit norm
// (within 1e-9) or be exactly zero; otherwise throws ContractError.
DenseArray cosine_matrix(const EmbeddingBatch& e);

// Mean over all 2N anchors of -log softmax of the positive similarity among
// the other 2N - 1 rows, with similarities divided by the temperature.
// Throws DimensionError for an empty or odd row count.
double nt_xent(const EmbeddingBatch& e, const LossConfig& cfg);

// Gradient of nt_xent with respect to each row of e, holding the rows as
// free variables (c_ij = e_i . e_j).
DenseArray nt_xent_backward(const EmbeddingBatch& e, const LossConfig& cfg);

// Row-wise z / max(|z|, eps) and its vector-Jacobian product.
DenseArray l2_normalize_rows(const DenseArray& z);
DenseArray l2_normalize_rows_backward(const DenseArray& z, const DenseArray& grad_normalized);

struct EncoderConfig {
  std::size_t in_channels = 3;
  std::size_t features = 16;
  std::size_t embed_dim = 32;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;
};

// conv3d (stride 2, zero padding) -> relu -> global mean pool -> linear.
struct ToyEncoder {
  EncoderConfig config;
  DenseArray conv_w;  // F x C x k x k x k
  DenseArray conv_b;  // F
  DenseArray proj_w;  // D x F
  DenseArray proj_b;  // D
};

ToyEncoder init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

struct EncoderForward {
  Shape input_shape;
  Shape conv_shape;    // F x To x Ho x Wo
  DenseArray conv_pre; // pre-activation
  std::vector<double> pooled;
  std::vector<double> projection;  // raw, before normalization
};

struct EncoderGradients {
  DenseArray conv_w;
  DenseArray conv_b;
  DenseArray proj_w;
  DenseArray proj_b;

  static EncoderGradients zeros_like(const ToyEncoder& enc);
  void accumulate(const EncoderGradients& g);
  bool all_finite() const;
};

EncoderForward encoder_forward(const VideoTensor& video, const ToyEncoder& enc);

struct EncoderBackward {
  EncoderGradients weights;
  VideoTensor input;  // gradient with respect to the input voxels
};

// Backward from a gradient on the raw projection.
EncoderBackward encoder_backward(std::span<const double> grad_projection, const VideoTensor& video,
                                 const EncoderForward& fwd, const ToyEncoder& enc);

// Normalized embedding of a single video (1 x D).
DenseArray encode(const VideoTensor& video, const ToyEncoder& enc);

// Descent step on every encoder tensor.
void update_encoder(ToyEncoder& enc, const EncoderGradients& g, SgdMomentum& optimizer);

}  // namespace paramcrop
