#pragma once

#include "paramcrop/affine_crop.hpp"
#include "paramcrop/tensor.hpp"

namespace paramcrop {

// C x T x H x W video. Axis index i maps to normalized coordinate
// -1 + 2i / (L - 1); x runs along W, y along H, t along T.
using VideoTensor = DenseArray;

// Trilinear interpolation of `video` at every grid coordinate; output is
// C x T_c x H_c x W_c. Coordinates outside [-1, 1] are clamped to the border.
// Throws DimensionError unless the video is rank 4 with T, H, W >= 2.
VideoTensor sample(const VideoTensor& video, const SamplingGrid& grid);

// Gradient of a scalar with respect to the grid coordinates, given its
// gradient `grad_out` with respect to sample(video, grid). Clamped axes get
// zero gradient; on a voxel boundary the cell above the coordinate is used.
SamplingGrid sample_backward(const VideoTensor& grad_out, const VideoTensor& video,
                             const SamplingGrid& grid);

}  // namespace paramcrop
