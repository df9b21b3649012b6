#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "paramcrop/affine_crop.hpp"
#include "paramcrop/contrastive.hpp"
#include "paramcrop/param_gen.hpp"
#include "paramcrop/sampler.hpp"

namespace paramcrop {

// ---------------------------------------------------------------------------
// Crop geometry and disparity metrics

// Axis-aligned crop volume in normalized source coordinates.
struct CropCube {
  Interval x;
  Interval y;
  Interval t;

  double center(std::size_t axis) const;
  double extent(std::size_t axis) const;
  double volume() const;
  bool inside_unit_cube() const;
};

// Throws UnsupportedMetricError for rotated crops (theta != 0).
CropCube crop_cube_from_params(const AffineParams& p);

double st_iou(const CropCube& a, const CropCube& b);

struct CenterDistance {
  double raw = 0.0;
  // raw divided by the largest raw distance the two scales allow; 0 when
  // neither crop can move.
  double normalized = 0.0;
};

CenterDistance center_manhattan(const CropCube& a, const CropCube& b);

// ---------------------------------------------------------------------------
// Cropping strategies

enum class Strategy { paramcrop, random, simple, hard, manual };

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy s);

struct ViewPair {
  std::array<UnitParams, 2> unit;
  std::array<AffineParams, 2> params;
};

// Fixed-rule crops for the non-learned strategies. `manual_breakpoint` in
// [0, 1) holds the manual schedule at zero distance for that fraction of
// training before ramping linearly to the maximum.
ViewPair baseline_params(Strategy strategy, std::size_t step, std::size_t total_steps, Rng& rng,
                         const ParamBounds& bounds, double manual_breakpoint = 0.0);

// Target normalized distance of the manual schedule at `step`.
double manual_schedule(std::size_t step, std::size_t total_steps, double breakpoint);

// ---------------------------------------------------------------------------
// Synthetic data

// Gaussian blob moving linearly in (x, y) over the clip. Coordinates are
// normalized; the center is the position at t = 0 and velocity is per unit t.
struct BlobSpec {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double sigma = 0.35;
  std::vector<double> color;  // one amplitude per channel
};

// shape is C x T x H x W. Background noise is uniform in [-amplitude, amplitude].
VideoTensor render_blob_video(const BlobSpec& blob, const Shape& shape, Rng& rng, double noise_amplitude);

BlobSpec random_blob(Rng& rng, std::size_t channels);

std::vector<VideoTensor> make_synthetic_batch(Rng& rng, std::size_t n, const Shape& input_shape,
                                              double noise_amplitude = 0.05);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  Shape input_shape{3, 16, 32, 32};  // C x T x H x W
  Shape crop_shape{8, 16, 16};       // T x H x W
  double lr_encoder = 0.05;
  double lr_cropper = 0.1;
  double momentum = 0.9;
  double temperature = 0.1;
  ParamBounds bounds;
  Strategy strategy = Strategy::paramcrop;
  std::uint64_t seed = 0;
  std::size_t noise_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t embed_dim = 32;
  std::size_t encoder_features = 16;
  double init_scale = 0.01;
  double noise_amplitude = 0.05;
  bool flip = false;
  bool random_precrop = false;
  bool gradient_reversal = true;
  double manual_breakpoint = 0.0;
  std::size_t probe_samples = 64;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double iou = 0.0;
  double dist_raw = 0.0;
  double dist_norm = 0.0;
  ParamVector v_mean{};
  // Squared norm of the gradient delivered to both generators this step.
  double cropper_grad_sq = 0.0;
};

struct DisparityProbe {
  double iou = 0.0;
  double dist_raw = 0.0;
  double dist_norm = 0.0;
};

struct MetricsLog {
  std::vector<StepRecord> records;
  DisparityProbe initial_probe;
};

// Mean of a metric over records [first, last).
double mean_over(const MetricsLog& log, double StepRecord::*field, std::size_t first, std::size_t last);

// The two-branch adversarial loop: generators T1/T2 ascend the contrastive
// loss through gradient reversal while the encoder descends it.
class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  const TrainConfig& config() const noexcept { return config_; }
  std::size_t step_index() const noexcept { return step_; }

  // One optimization step on `batch` (N videos of config().input_shape).
  StepRecord train_step(const std::vector<VideoTensor>& batch);

  // Draws the next synthetic batch and trains on it.
  StepRecord train_step();

  // Disparity of `samples` fresh view pairs under the current generators
  // (or strategy), drawn from a dedicated stream.
  DisparityProbe probe(std::size_t samples);

  const ToyEncoder& encoder() const noexcept { return encoder_; }
  const CropperState& cropper(std::size_t branch) const { return croppers_.at(branch); }
  // Replaces a generator's weights; shapes must match the configured ones.
  void set_cropper(std::size_t branch, CropperState state);
  // Gradients handed to each generator's optimizer in the last step.
  const MlpGradients& last_cropper_gradients(std::size_t branch) const { return last_grads_.at(branch); }

 private:
  struct View;

  View make_view(const VideoTensor& video, std::size_t branch, const ViewPair* fixed, std::size_t which);
  ViewPair draw_pair(Rng& rng, std::array<Rng, 2>* noise);

  TrainConfig config_;
  LossConfig loss_;
  ToyEncoder encoder_;
  SgdMomentum encoder_opt_;
  std::array<CropperState, 2> croppers_;
  std::array<SgdMomentum, 2> cropper_opts_;
  std::array<MlpGradients, 2> last_grads_;
  SamplingGrid base_grid_;
  Rng data_rng_;
  std::array<Rng, 2> noise_rngs_;
  Rng baseline_rng_;
  Rng augment_rng_;
  Rng probe_rng_;
  std::array<Rng, 2> probe_noise_rngs_;
  std::size_t step_ = 0;
};

// Probe, then config.steps training steps. Deterministic under config.seed.
MetricsLog run_training(const TrainConfig& config);

inline constexpr const char* kMetricsCsvHeader =
    "step,loss,iou,dist_raw,dist_norm,v_sp,v_st,v_theta,v_dx,v_dy,v_dt";

void write_metrics_csv(std::ostream& out, const MetricsLog& log);
// Metric fields of one record, comma-separated, 9 significant digits.
std::string format_record(const StepRecord& r);

}  // namespace paramcrop
