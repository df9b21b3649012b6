#include "paramcrop/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "paramcrop/errors.hpp"

namespace paramcrop {

namespace {

// Independent generator per purpose so that, e.g., the data stream is the
// same regardless of strategy.
enum class Stream : std::uint32_t { init = 1, data, noise0, noise1, baseline, augment, probe, probe_noise0, probe_noise1 };

Rng make_stream(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

double overlap(const Interval& a, const Interval& b) {
  return std::max(0.0, std::min(a.hi, b.hi) - std::max(a.lo, b.lo));
}

const Interval& axis_of(const CropCube& c, std::size_t axis) {
  switch (axis) {
    case 0: return c.x;
    case 1: return c.y;
    default: return c.t;
  }
}

UnitParams uniform_unit(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  UnitParams u;
  for (auto& x : u.v) x = dist(rng);
  return u;
}

VideoTensor flip_width(const VideoTensor& video) {
  VideoTensor out(video.shape());
  const std::size_t w = video.dim(3);
  const std::size_t rows = video.size() / w;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = 0; x < w; ++x) out[r * w + x] = video[r * w + (w - 1 - x)];
  }
  return out;
}

std::string describe_v(const std::vector<UnitParams>& vs) {
  std::ostringstream os;
  os << "v statistics over " << vs.size() << " views:";
  static constexpr const char* names[] = {"sp", "st", "theta", "dx", "dy", "dt"};
  for (std::size_t i = 0; i < kNumParams; ++i) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    for (const auto& u : vs) {
      lo = std::min(lo, u[i]);
      hi = std::max(hi, u[i]);
      sum += u[i];
    }
    os << ' ' << names[i] << "[mean " << sum / static_cast<double>(vs.size()) << ", min " << lo << ", max " << hi
       << ']';
  }
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

double CropCube::center(std::size_t axis) const {
  const Interval& i = axis_of(*this, axis);
  return 0.5 * (i.lo + i.hi);
}

double CropCube::extent(std::size_t axis) const {
  const Interval& i = axis_of(*this, axis);
  return i.hi - i.lo;
}

double CropCube::volume() const { return extent(0) * extent(1) * extent(2); }

bool CropCube::inside_unit_cube() const {
  for (std::size_t a = 0; a < 3; ++a) {
    const Interval& i = axis_of(*this, a);
    if (i.lo < -1.0 || i.hi > 1.0) return false;
  }
  return true;
}

CropCube crop_cube_from_params(const AffineParams& p) {
  if (p.theta != 0.0) throw UnsupportedMetricError("crop cube metrics require theta = 0");
  return {{p.dx - p.scale_spatial, p.dx + p.scale_spatial},
          {p.dy - p.scale_spatial, p.dy + p.scale_spatial},
          {p.dt - p.scale_temporal, p.dt + p.scale_temporal}};
}

double st_iou(const CropCube& a, const CropCube& b) {
  const double inter = overlap(a.x, b.x) * overlap(a.y, b.y) * overlap(a.t, b.t);
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

CenterDistance center_manhattan(const CropCube& a, const CropCube& b) {
  CenterDistance d;
  double room = 0.0;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    d.raw += std::abs(a.center(axis) - b.center(axis));
    // A crop of half-extent s can sit at most 1 - s from the origin.
    room += (1.0 - 0.5 * a.extent(axis)) + (1.0 - 0.5 * b.extent(axis));
  }
  d.normalized = room > 0.0 ? d.raw / room : 0.0;
  return d;
}

// ---------------------------------------------------------------------------

Strategy parse_strategy(const std::string& name) {
  if (name == "paramcrop") return Strategy::paramcrop;
  if (name == "random") return Strategy::random;
  if (name == "simple") return Strategy::simple;
  if (name == "hard") return Strategy::hard;
  if (name == "manual") return Strategy::manual;
  throw ConfigError("strategy", "unknown strategy '" + name + "'");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::paramcrop: return "paramcrop";
    case Strategy::random: return "random";
    case Strategy::simple: return "simple";
    case Strategy::hard: return "hard";
    case Strategy::manual: return "manual";
  }
  return "unknown";
}

double manual_schedule(std::size_t step, std::size_t total_steps, double breakpoint) {
  if (total_steps <= 1) return step == 0 ? 0.0 : 1.0;
  const double progress =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
  if (progress <= breakpoint) return 0.0;
  return (progress - breakpoint) / (1.0 - breakpoint);
}

ViewPair baseline_params(Strategy strategy, std::size_t step, std::size_t total_steps, Rng& rng,
                         const ParamBounds& bounds, double manual_breakpoint) {
  ViewPair pair;
  switch (strategy) {
    case Strategy::random:
      pair.unit = {uniform_unit(rng), uniform_unit(rng)};
      break;
    case Strategy::simple:
      // Full-scale crops leave no room to translate: both views are the source.
      pair.unit[0].v = {1.0, 1.0, 0.5, 0.5, 0.5, 0.5};
      pair.unit[1] = pair.unit[0];
      break;
    case Strategy::hard: {
      // Minimum-scale crops in opposite corners, nudged inward by up to 0.02.
      std::uniform_real_distribution<double> jitter(0.0, 0.02);
      pair.unit[0].v = {0.0, 0.0, 0.5, jitter(rng), jitter(rng), jitter(rng)};
      pair.unit[1].v = {0.0, 0.0, 0.5, 1.0 - jitter(rng), 1.0 - jitter(rng), 1.0 - jitter(rng)};
      break;
    }
    case Strategy::manual: {
      // Mid-range scales; offsets +-r (1 - s) along the main diagonal give a
      // normalized center distance of exactly r.
      const double r = manual_schedule(step, total_steps, manual_breakpoint);
      pair.unit[0].v = {0.5, 0.5, 0.5, 0.5 - 0.5 * r, 0.5 - 0.5 * r, 0.5 - 0.5 * r};
      pair.unit[1].v = {0.5, 0.5, 0.5, 0.5 + 0.5 * r, 0.5 + 0.5 * r, 0.5 + 0.5 * r};
      break;
    }
    case Strategy::paramcrop:
      throw ConfigError("strategy", "paramcrop crops come from the learned generators, not a baseline rule");
  }
  for (std::size_t b = 0; b < 2; ++b) pair.params[b] = clamp_params(pair.unit[b], bounds);
  return pair;
}

// ---------------------------------------------------------------------------

VideoTensor render_blob_video(const BlobSpec& blob, const Shape& shape, Rng& rng, double noise_amplitude) {
  if (shape.size() != 4) throw DimensionError("render_blob_video: shape must be C x T x H x W");
  const std::size_t C = shape[0], T = shape[1], H = shape[2], W = shape[3];
  if (blob.color.size() != C) throw DimensionError("render_blob_video: one color amplitude per channel");
  VideoTensor video(shape);
  std::uniform_real_distribution<double> noise(-noise_amplitude, noise_amplitude);
  const double inv_two_var = 1.0 / (2.0 * blob.sigma * blob.sigma);
  std::vector<double> profile(T * H * W);
  for (std::size_t t = 0; t < T; ++t) {
    const double tn = axis_coordinate(t, T);
    const double cx = blob.x + blob.vx * tn;
    const double cy = blob.y + blob.vy * tn;
    for (std::size_t y = 0; y < H; ++y) {
      const double dy = axis_coordinate(y, H) - cy;
      for (std::size_t x = 0; x < W; ++x) {
        const double dx = axis_coordinate(x, W) - cx;
        profile[(t * H + y) * W + x] = std::exp(-(dx * dx + dy * dy) * inv_two_var);
      }
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < profile.size(); ++i) {
      const double n = noise_amplitude > 0.0 ? noise(rng) : 0.0;
      video[c * profile.size() + i] = blob.color[c] * profile[i] + n;
    }
  }
  return video;
}

BlobSpec random_blob(Rng& rng, std::size_t channels) {
  std::uniform_real_distribution<double> pos(-0.6, 0.6);
  std::uniform_real_distribution<double> vel(-0.3, 0.3);
  std::uniform_real_distribution<double> sigma(0.25, 0.4);
  std::uniform_real_distribution<double> color(0.2, 1.0);
  BlobSpec b;
  b.x = pos(rng);
  b.y = pos(rng);
  b.vx = vel(rng);
  b.vy = vel(rng);
  b.sigma = sigma(rng);
  b.color.resize(channels);
  for (auto& c : b.color) c = color(rng);
  return b;
}

std::vector<VideoTensor> make_synthetic_batch(Rng& rng, std::size_t n, const Shape& input_shape,
                                              double noise_amplitude) {
  if (input_shape.size() != 4) throw DimensionError("make_synthetic_batch: shape must be C x T x H x W");
  std::vector<VideoTensor> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const BlobSpec blob = random_blob(rng, input_shape[0]);
    batch.push_back(render_blob_video(blob, input_shape, rng, noise_amplitude));
  }
  return batch;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("batch", "must be >= 1");
  if (input_shape.size() != 4) throw ConfigError("input_shape", "expected C x T x H x W");
  if (crop_shape.size() != 3) throw ConfigError("crop_shape", "expected T x H x W");
  for (std::size_t i = 1; i < 4; ++i) {
    if (input_shape[i] < 2) throw ConfigError("input_shape", "T, H and W must be >= 2");
  }
  if (input_shape[0] < 1) throw ConfigError("input_shape", "need at least one channel");
  for (std::size_t i = 0; i < 3; ++i) {
    if (crop_shape[i] < 1 || crop_shape[i] > input_shape[i + 1]) {
      throw ConfigError("crop_shape", "each axis must lie in [1, input axis length]");
    }
  }
  if (!(lr_encoder >= 0.0) || !std::isfinite(lr_encoder)) throw ConfigError("lr_encoder", "must be >= 0");
  if (!(lr_cropper >= 0.0) || !std::isfinite(lr_cropper)) throw ConfigError("lr_cropper", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must lie in [0, 1)");
  LossConfig{temperature}.validate();
  bounds.validate();
  if (bounds.theta.lo != 0.0 || bounds.theta.hi != 0.0) {
    throw ConfigError("theta", "disparity metrics need axis-aligned crops; rotation bounds must be 0");
  }
  if (noise_dim < 1) throw ConfigError("noise_dim", "must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim", "must be >= 1");
  if (embed_dim < 1) throw ConfigError("embed_dim", "must be >= 1");
  if (encoder_features < 1) throw ConfigError("encoder_features", "must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale", "must be >= 0");
  if (!(noise_amplitude >= 0.0)) throw ConfigError("noise_amplitude", "must be >= 0");
  if (!(manual_breakpoint >= 0.0 && manual_breakpoint < 1.0)) {
    throw ConfigError("manual_breakpoint", "must lie in [0, 1)");
  }
  if (probe_samples < 1) throw ConfigError("probe_samples", "must be >= 1");
}

double mean_over(const MetricsLog& log, double StepRecord::*field, std::size_t first, std::size_t last) {
  last = std::min(last, log.records.size());
  if (first >= last) throw DimensionError("mean_over: empty record range");
  double acc = 0.0;
  for (std::size_t i = first; i < last; ++i) acc += log.records[i].*field;
  return acc / static_cast<double>(last - first);
}

struct Trainer::View {
  VideoTensor source;
  MlpForward mlp;
  GradientMask mask{};
  UnitParams unit;
  AffineParams params;
  SamplingGrid grid;
  VideoTensor crop;
  EncoderForward enc;
};

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)),
      loss_{config_.temperature},
      encoder_opt_({config_.lr_encoder, config_.momentum}),
      cropper_opts_{SgdMomentum({config_.lr_cropper, config_.momentum}),
                    SgdMomentum({config_.lr_cropper, config_.momentum})},
      data_rng_(make_stream(config_.seed, Stream::data)),
      noise_rngs_{make_stream(config_.seed, Stream::noise0), make_stream(config_.seed, Stream::noise1)},
      baseline_rng_(make_stream(config_.seed, Stream::baseline)),
      augment_rng_(make_stream(config_.seed, Stream::augment)),
      probe_rng_(make_stream(config_.seed, Stream::probe)),
      probe_noise_rngs_{make_stream(config_.seed, Stream::probe_noise0),
                        make_stream(config_.seed, Stream::probe_noise1)} {
  config_.validate();
  Rng init = make_stream(config_.seed, Stream::init);
  EncoderConfig enc;
  enc.in_channels = config_.input_shape[0];
  enc.features = config_.encoder_features;
  enc.embed_dim = config_.embed_dim;
  encoder_ = init_encoder(enc, init);
  for (auto& c : croppers_) {
    c = init_cropper(config_.noise_dim, config_.hidden_dim, config_.bounds, init, config_.init_scale);
  }
  for (std::size_t b = 0; b < 2; ++b) {
    last_grads_[b] = {DenseArray(croppers_[b].w1.shape()), DenseArray(croppers_[b].w2.shape())};
  }
  base_grid_ = generate_grid(config_.crop_shape[0], config_.crop_shape[1], config_.crop_shape[2]);
}

Trainer::View Trainer::make_view(const VideoTensor& video, std::size_t branch, const ViewPair* fixed,
                                 std::size_t which) {
  View view;
  view.source = video;
  if (config_.random_precrop) {
    const AffineParams pre = clamp_params(uniform_unit(augment_rng_), config_.bounds);
    const SamplingGrid full =
        generate_grid(config_.input_shape[1], config_.input_shape[2], config_.input_shape[3]);
    view.source = sample(view.source, transform_grid(full, build_affine_matrix(pre)));
  }
  if (config_.flip && std::uniform_int_distribution<int>(0, 1)(augment_rng_) == 1) {
    view.source = flip_width(view.source);
  }
  if (fixed) {
    view.unit = fixed->unit[which];
    view.params = fixed->params[which];
    view.mask.fill(false);
  } else {
    const auto noise = sample_noise(noise_rngs_[branch], config_.noise_dim);
    view.mlp = mlp_forward(noise, croppers_[branch]);
    const EarlyStopResult es = apply_early_stop(view.mlp.v, config_.bounds.detach_bound);
    view.unit = es.values;
    view.mask = es.mask;
    view.params = clamp_params(view.unit, config_.bounds);
  }
  view.grid = transform_grid(base_grid_, build_affine_matrix(view.params));
  view.crop = sample(view.source, view.grid);
  view.enc = encoder_forward(view.crop, encoder_);
  return view;
}

StepRecord Trainer::train_step(const std::vector<VideoTensor>& batch) {
  if (batch.size() != config_.batch) {
    throw DimensionError("train_step: expected " + std::to_string(config_.batch) + " videos, got " +
                         std::to_string(batch.size()));
  }
  for (const auto& v : batch) {
    if (v.shape() != config_.input_shape) {
      throw DimensionError("train_step: video shape " + shape_to_string(v.shape()) + " != " +
                           shape_to_string(config_.input_shape));
    }
  }
  const bool learned = config_.strategy == Strategy::paramcrop;
  const std::size_t n = batch.size();
  const std::size_t views = 2 * n;
  const std::size_t dim = config_.embed_dim;

  std::vector<View> vs;
  vs.reserve(views);
  for (std::size_t k = 0; k < n; ++k) {
    if (learned) {
      for (std::size_t b = 0; b < 2; ++b) vs.push_back(make_view(batch[k], b, nullptr, b));
    } else {
      const ViewPair pair = baseline_params(config_.strategy, step_, config_.steps, baseline_rng_,
                                            config_.bounds, config_.manual_breakpoint);
      for (std::size_t b = 0; b < 2; ++b) vs.push_back(make_view(batch[k], b, &pair, b));
    }
  }

  DenseArray z({views, dim});
  for (std::size_t r = 0; r < views; ++r) {
    std::copy(vs[r].enc.projection.begin(), vs[r].enc.projection.end(), z.data() + r * dim);
  }
  const DenseArray e = l2_normalize_rows(z);
  const double loss = nt_xent(e, loss_);
  if (!std::isfinite(loss)) {
    std::vector<UnitParams> units;
    for (const auto& v : vs) units.push_back(v.unit);
    throw TrainingError(step_, "non-finite contrastive loss; " + describe_v(units));
  }
  const DenseArray grad_z = l2_normalize_rows_backward(z, nt_xent_backward(e, loss_));

  EncoderGradients enc_grads = EncoderGradients::zeros_like(encoder_);
  std::array<MlpGradients, 2> crop_grads;
  for (std::size_t b = 0; b < 2; ++b) {
    crop_grads[b] = {DenseArray(croppers_[b].w1.shape()), DenseArray(croppers_[b].w2.shape())};
  }
  for (std::size_t r = 0; r < views; ++r) {
    const View& v = vs[r];
    const EncoderBackward eb =
        encoder_backward(std::span<const double>(grad_z.data() + r * dim, dim), v.crop, v.enc, encoder_);
    enc_grads.accumulate(eb.weights);
    if (!learned) continue;
    const std::size_t branch = r % 2;
    const SamplingGrid grid_grad = sample_backward(eb.input, v.source, v.grid);
    const ParamVector grad_params = transform_grid_backward(grid_grad, base_grid_, v.params);
    ParamVector grad_v = clamp_params_backward(grad_params, v.unit, config_.bounds, v.mask);
    if (config_.gradient_reversal) grad_v = reverse_gradient(grad_v);
    accumulate(crop_grads[branch], mlp_backward(grad_v, v.mlp, croppers_[branch]));
  }

  if (!enc_grads.all_finite()) throw TrainingError(step_, "non-finite encoder gradient");
  update_encoder(encoder_, enc_grads, encoder_opt_);
  StepRecord rec;
  rec.step = step_;
  rec.loss = loss;
  if (learned) {
    for (std::size_t b = 0; b < 2; ++b) {
      update_weights(croppers_[b], crop_grads[b], cropper_opts_[b], step_);
      rec.cropper_grad_sq += crop_grads[b].squared_norm();
    }
  }
  last_grads_ = std::move(crop_grads);

  for (std::size_t k = 0; k < n; ++k) {
    const CropCube a = crop_cube_from_params(vs[2 * k].params);
    const CropCube b = crop_cube_from_params(vs[2 * k + 1].params);
    if (!a.inside_unit_cube() || !b.inside_unit_cube()) {
      throw TrainingError(step_, "crop cube left the source volume");
    }
    const CenterDistance d = center_manhattan(a, b);
    rec.iou += st_iou(a, b);
    rec.dist_raw += d.raw;
    rec.dist_norm += d.normalized;
  }
  rec.iou /= static_cast<double>(n);
  rec.dist_raw /= static_cast<double>(n);
  rec.dist_norm /= static_cast<double>(n);
  for (const auto& v : vs) {
    for (std::size_t i = 0; i < kNumParams; ++i) rec.v_mean[i] += v.unit[i];
  }
  for (auto& m : rec.v_mean) m /= static_cast<double>(views);
  ++step_;
  return rec;
}

void Trainer::set_cropper(std::size_t branch, CropperState state) {
  CropperState& slot = croppers_.at(branch);
  if (state.w1.shape() != slot.w1.shape() || state.w2.shape() != slot.w2.shape()) {
    throw DimensionError("set_cropper: weight shapes differ from the configured generator");
  }
  slot = std::move(state);
}

StepRecord Trainer::train_step() {
  const auto batch = make_synthetic_batch(data_rng_, config_.batch, config_.input_shape, config_.noise_amplitude);
  return train_step(batch);
}

ViewPair Trainer::draw_pair(Rng& rng, std::array<Rng, 2>* noise) {
  if (config_.strategy != Strategy::paramcrop) {
    return baseline_params(config_.strategy, step_, config_.steps, rng, config_.bounds, config_.manual_breakpoint);
  }
  ViewPair pair;
  for (std::size_t b = 0; b < 2; ++b) {
    const auto n = sample_noise((*noise)[b], config_.noise_dim);
    pair.unit[b] = mlp_forward(n, croppers_[b]).v;
    pair.params[b] = clamp_params(pair.unit[b], config_.bounds);
  }
  return pair;
}

DisparityProbe Trainer::probe(std::size_t samples) {
  if (samples == 0) throw DimensionError("probe: need at least one sample");
  DisparityProbe p;
  for (std::size_t i = 0; i < samples; ++i) {
    const ViewPair pair = draw_pair(probe_rng_, &probe_noise_rngs_);
    const CropCube a = crop_cube_from_params(pair.params[0]);
    const CropCube b = crop_cube_from_params(pair.params[1]);
    const CenterDistance d = center_manhattan(a, b);
    p.iou += st_iou(a, b);
    p.dist_raw += d.raw;
    p.dist_norm += d.normalized;
  }
  const double s = static_cast<double>(samples);
  p.iou /= s;
  p.dist_raw /= s;
  p.dist_norm /= s;
  return p;
}

MetricsLog run_training(const TrainConfig& config) {
  Trainer trainer(config);
  MetricsLog log;
  log.initial_probe = trainer.probe(config.probe_samples);
  log.records.reserve(config.steps);
  for (std::size_t s = 0; s < config.steps; ++s) log.records.push_back(trainer.train_step());
  return log;
}

std::string format_record(const StepRecord& r) {
  char buf[64];
  std::string out = std::to_string(r.step);
  const auto put = [&](double x) {
    std::snprintf(buf, sizeof buf, ",%.9g", x);
    out += buf;
  };
  put(r.loss);
  put(r.iou);
  put(r.dist_raw);
  put(r.dist_norm);
  for (double v : r.v_mean) put(v);
  return out;
}

void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : log.records) out << format_record(r) << '\n';
}

}  // namespace paramcrop
