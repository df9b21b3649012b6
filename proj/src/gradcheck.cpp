#include "paramcrop/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "paramcrop/affine_crop.hpp"
#include "paramcrop/contrastive.hpp"
#include "paramcrop/errors.hpp"
#include "paramcrop/param_gen.hpp"
#include "paramcrop/sampler.hpp"

namespace paramcrop {

namespace {

// Instances whose kinks (relu zeros, voxel boundaries) lie closer than this
// are redrawn; a finite difference across a kink measures the wrong slope.
constexpr double kKinkMargin = 1e-4;
constexpr std::size_t kMaxRedraws = 1000;

Rng trial_rng(std::uint64_t seed, std::size_t check, std::size_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(check), static_cast<std::uint32_t>(trial), 0x67636b75u};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

DenseArray random_array(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  DenseArray a(shape);
  for (double& x : a.values()) x = uniform(rng, lo, hi);
  return a;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void append(std::vector<double>& out, std::span<const double> xs) { out.insert(out.end(), xs.begin(), xs.end()); }

double min_abs(std::span<const double> xs) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::min(m, std::abs(x));
  return m;
}

// Distance of each coordinate from the nearest voxel index on its axis.
double grid_margin(const SamplingGrid& grid, const Shape& video_shape) {
  const std::array<std::size_t, 3> len{video_shape[3], video_shape[2], video_shape[1]};
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < grid.points(); ++p) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double pos = (grid.point(p)[a] + 1.0) * 0.5 * static_cast<double>(len[a] - 1);
      m = std::min(m, std::abs(pos - std::round(pos)));
    }
  }
  return m;
}

struct Instance {
  std::function<double()> f;
  std::vector<std::span<double>> inputs;
  std::vector<double> analytic;
};

template <typename Make>
CheckResult run_check(const std::string& name, std::size_t index, const GradcheckConfig& cfg, Make make) {
  CheckResult result;
  result.name = name;
  result.trials = cfg.trials;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    Rng rng = trial_rng(cfg.seed, index, trial);
    std::size_t attempts = 0;
    for (;;) {
      // Instances too close to a kink come back with ok == false.
      auto state = make(rng);
      if (state && state->ok) {
        Instance inst = state->instance();
        std::vector<double> numeric;
        for (auto x : inst.inputs) append(numeric, central_difference(inst.f, x, cfg.step));
        result.max_rel_error = std::max(result.max_rel_error, relative_error(inst.analytic, numeric));
        break;
      }
      ++result.redrawn;
      if (++attempts > kMaxRedraws) throw NumericError("gradcheck " + name + ": no kink-free instance found");
    }
  }
  result.passed = result.max_rel_error < cfg.tolerance;
  return result;
}

// Trilinear sampler with respect to grid coordinates.
struct SamplerCase {
  bool ok = true;
  VideoTensor video;
  SamplingGrid grid;
  DenseArray weights;

  explicit SamplerCase(Rng& rng) : video(random_array(rng, {2, 4, 5, 6})), grid(2, 3, 3) {
    for (double& c : grid.coords()) c = uniform(rng, -0.999, 0.999);
    weights = random_array(rng, {2, 2, 3, 3});
    ok = grid_margin(grid, video.shape()) > kKinkMargin;
  }
  Instance instance() {
    Instance inst;
    inst.f = [this] { return dot(weights.values(), sample(video, grid).values()); };
    inst.inputs = {grid.coords()};
    append(inst.analytic, sample_backward(weights, video, grid).coords());
    return inst;
  }
};

// clamp_params with scale-dependent offset ranges.
struct ClampCase {
  bool ok = true;
  UnitParams v;
  ParamBounds bounds;
  ParamVector weights{};

  explicit ClampCase(Rng& rng) {
    bounds.scale_spatial.lo = uniform(rng, 0.2, 0.6);
    bounds.scale_spatial.hi = uniform(rng, bounds.scale_spatial.lo, 1.0);
    bounds.scale_temporal.lo = uniform(rng, 0.2, 0.6);
    bounds.scale_temporal.hi = uniform(rng, bounds.scale_temporal.lo, 1.0);
    bounds.theta.lo = uniform(rng, -0.5, 0.0);
    bounds.theta.hi = uniform(rng, 0.0, 0.5);
    bounds.detach_bound = 0.0;
    for (double& x : v.v) x = uniform(rng, 0.01, 0.99);
    for (double& w : weights) w = uniform(rng, -1.0, 1.0);
  }
  Instance instance() {
    Instance inst;
    inst.f = [this] {
      const ParamVector p = clamp_params(v, bounds).as_vector();
      return dot(weights, p);
    };
    inst.inputs = {std::span<double>(v.v)};
    GradientMask all;
    all.fill(true);
    append(inst.analytic, clamp_params_backward(weights, v, bounds, all));
    return inst;
  }
};

// transform_grid with respect to the six affine parameters.
struct TransformCase {
  bool ok = true;
  ParamVector p{};
  SamplingGrid base = generate_grid(3, 4, 5);
  SamplingGrid weights{3, 4, 5};

  explicit TransformCase(Rng& rng) {
    p = {uniform(rng, 0.3, 1.0), uniform(rng, 0.3, 1.0), uniform(rng, -std::numbers::pi, std::numbers::pi),
         uniform(rng, -0.7, 0.7), uniform(rng, -0.7, 0.7), uniform(rng, -0.7, 0.7)};
    for (double& w : weights.coords()) w = uniform(rng, -1.0, 1.0);
  }
  Instance instance() {
    Instance inst;
    inst.f = [this] {
      const SamplingGrid g = transform_grid(base, build_affine_matrix(AffineParams::from_vector(p)));
      return dot(weights.coords(), g.coords());
    };
    inst.inputs = {std::span<double>(p)};
    append(inst.analytic, transform_grid_backward(weights, base, AffineParams::from_vector(p)));
    return inst;
  }
};

// Generator weights through the whole view pipeline and the loss.
struct ChainCase {
  static constexpr std::size_t kSamples = 2;
  bool ok = true;
  std::vector<VideoTensor> videos;
  std::array<CropperState, 2> croppers;
  std::vector<std::vector<double>> noise;  // one per view; view r uses branch r % 2
  ToyEncoder encoder;
  SamplingGrid base = generate_grid(3, 4, 4);
  ParamBounds bounds;
  LossConfig loss{0.5};

  struct Views {
    std::vector<MlpForward> mlp;
    std::vector<UnitParams> unit;
    std::vector<GradientMask> mask;
    std::vector<AffineParams> params;
    std::vector<SamplingGrid> grid;
    std::vector<VideoTensor> crop;
    std::vector<EncoderForward> enc;
    DenseArray z;
  };

  explicit ChainCase(Rng& rng) {
    bounds.detach_bound = 0.0;
    for (std::size_t k = 0; k < kSamples; ++k) videos.push_back(random_array(rng, {2, 5, 6, 6}));
    for (auto& c : croppers) {
      c = init_cropper(3, 4, bounds, rng, 1.5);
    }
    for (std::size_t r = 0; r < 2 * kSamples; ++r) noise.push_back(sample_noise(rng, 3));
    EncoderConfig ec;
    ec.in_channels = 2;
    ec.features = 3;
    ec.embed_dim = 4;
    encoder = init_encoder(ec, rng);
    const Views v = forward();
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < v.mlp.size(); ++r) {
      margin = std::min(margin, min_abs(v.mlp[r].pre_hidden));
      margin = std::min(margin, grid_margin(v.grid[r], videos[r / 2].shape()));
      margin = std::min(margin, min_abs(v.enc[r].conv_pre.values()));
    }
    ok = margin > kKinkMargin;
  }

  Views forward() const {
    Views v;
    const std::size_t views = 2 * kSamples;
    v.z = DenseArray({views, encoder.config.embed_dim});
    for (std::size_t r = 0; r < views; ++r) {
      v.mlp.push_back(mlp_forward(noise[r], croppers[r % 2]));
      const EarlyStopResult es = apply_early_stop(v.mlp.back().v, bounds.detach_bound);
      v.unit.push_back(es.values);
      v.mask.push_back(es.mask);
      v.params.push_back(clamp_params(es.values, bounds));
      v.grid.push_back(transform_grid(base, build_affine_matrix(v.params.back())));
      v.crop.push_back(sample(videos[r / 2], v.grid.back()));
      v.enc.push_back(encoder_forward(v.crop.back(), encoder));
      std::copy(v.enc.back().projection.begin(), v.enc.back().projection.end(),
                v.z.data() + r * encoder.config.embed_dim);
    }
    return v;
  }

  double value() const { return nt_xent(l2_normalize_rows(forward().z), loss); }

  Instance instance() {
    const Views v = forward();
    const std::size_t dim = encoder.config.embed_dim;
    const DenseArray grad_z = l2_normalize_rows_backward(v.z, nt_xent_backward(l2_normalize_rows(v.z), loss));
    std::array<MlpGradients, 2> grads;
    for (std::size_t b = 0; b < 2; ++b) {
      grads[b] = {DenseArray(croppers[b].w1.shape()), DenseArray(croppers[b].w2.shape())};
    }
    for (std::size_t r = 0; r < v.mlp.size(); ++r) {
      const EncoderBackward eb = encoder_backward(std::span<const double>(grad_z.data() + r * dim, dim),
                                                  v.crop[r], v.enc[r], encoder);
      const SamplingGrid gg = sample_backward(eb.input, videos[r / 2], v.grid[r]);
      const ParamVector gp = transform_grid_backward(gg, base, v.params[r]);
      const ParamVector gv = clamp_params_backward(gp, v.unit[r], bounds, v.mask[r]);
      accumulate(grads[r % 2], mlp_backward(gv, v.mlp[r], croppers[r % 2]));
    }
    Instance inst;
    inst.f = [this] { return value(); };
    for (std::size_t b = 0; b < 2; ++b) {
      inst.inputs.push_back(croppers[b].w1.values());
      inst.inputs.push_back(croppers[b].w2.values());
      append(inst.analytic, grads[b].w1.values());
      append(inst.analytic, grads[b].w2.values());
    }
    return inst;
  }
};

// NT-Xent with respect to unnormalized embeddings.
struct NtXentCase {
  bool ok = true;
  DenseArray z;
  LossConfig loss;

  explicit NtXentCase(Rng& rng) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    z = DenseArray({2 * n, 6});
    std::normal_distribution<double> normal;
    for (double& x : z.values()) x = normal(rng);
    loss.temperature = uniform(rng, 0.1, 1.0);
  }
  Instance instance() {
    Instance inst;
    inst.f = [this] { return nt_xent(l2_normalize_rows(z), loss); };
    inst.inputs = {z.values()};
    append(inst.analytic, l2_normalize_rows_backward(z, nt_xent_backward(l2_normalize_rows(z), loss)).values());
    return inst;
  }
};

// Generator MLP alone.
struct MlpCase {
  bool ok = true;
  CropperState state;
  std::vector<double> noise;
  ParamVector weights{};

  explicit MlpCase(Rng& rng) {
    state = init_cropper(4, 6, ParamBounds{}, rng, 1.0);
    noise = sample_noise(rng, 4);
    for (double& w : weights) w = uniform(rng, -1.0, 1.0);
    ok = min_abs(mlp_forward(noise, state).pre_hidden) > kKinkMargin;
  }
  Instance instance() {
    Instance inst;
    inst.f = [this] { return dot(weights, mlp_forward(noise, state).v.v); };
    inst.inputs = {state.w1.values(), state.w2.values()};
    const MlpGradients g = mlp_backward(weights, mlp_forward(noise, state), state);
    append(inst.analytic, g.w1.values());
    append(inst.analytic, g.w2.values());
    return inst;
  }
};

// Encoder weights and input voxels through the normalized embedding.
struct EncoderCase {
  bool ok = true;
  VideoTensor video;
  ToyEncoder encoder;
  DenseArray weights;

  explicit EncoderCase(Rng& rng) : video(random_array(rng, {2, 4, 5, 5})) {
    EncoderConfig ec;
    ec.in_channels = 2;
    ec.features = 3;
    ec.embed_dim = 4;
    encoder = init_encoder(ec, rng);
    weights = random_array(rng, {1, 4});
    ok = min_abs(encoder_forward(video, encoder).conv_pre.values()) > kKinkMargin;
  }
  Instance instance() {
    Instance inst;
    inst.f = [this] { return dot(weights.values(), encode(video, encoder).values()); };
    inst.inputs = {encoder.conv_w.values(), encoder.conv_b.values(), encoder.proj_w.values(),
                   encoder.proj_b.values(), video.values()};
    const EncoderForward fwd = encoder_forward(video, encoder);
    const DenseArray z({1, fwd.projection.size()}, fwd.projection);
    const DenseArray gz = l2_normalize_rows_backward(z, weights);
    const EncoderBackward eb = encoder_backward(gz.values(), video, fwd, encoder);
    append(inst.analytic, eb.weights.conv_w.values());
    append(inst.analytic, eb.weights.conv_b.values());
    append(inst.analytic, eb.weights.proj_w.values());
    append(inst.analytic, eb.weights.proj_b.values());
    append(inst.analytic, eb.input.values());
    return inst;
  }
};

template <typename Case>
auto maker() {
  return [](Rng& rng) { return std::make_unique<Case>(rng); };
}

}  // namespace

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("relative_error: size mismatch");
  double diff = 0.0, a = 0.0, n = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    a = std::max(a, std::abs(analytic[i]));
    n = std::max(n, std::abs(numeric[i]));
  }
  const double scale = std::max(a, n);
  if (scale == 0.0) return 0.0;
  return diff / scale;
}

std::vector<double> central_difference(const std::function<double()>& f, std::span<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f();
    x[i] = orig - h;
    const double down = f();
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

bool GradcheckReport::passed() const { return first_failure() == nullptr; }

const CheckResult* GradcheckReport::first_failure() const {
  for (const auto& c : checks) {
    if (!c.passed) return &c;
  }
  return nullptr;
}

std::string GradcheckReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%-15s max_rel_error %.3e  trials %zu  redrawn %zu  %s\n", c.name.c_str(),
                  c.max_rel_error, c.trials, c.redrawn, c.passed ? "PASS" : "FAIL");
    os << buf;
  }
  if (const CheckResult* f = first_failure()) {
    os << "gradcheck FAILED: first failing check is " << f->name << '\n';
  } else {
    os << "gradcheck passed\n";
  }
  return os.str();
}

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  if (cfg.trials == 0) throw ConfigError("trials", "gradcheck needs at least one trial");
  if (!(cfg.step > 0.0)) throw ConfigError("step", "finite-difference step must be positive");
  if (!(cfg.tolerance >= 0.0)) throw ConfigError("tolerance", "tolerance must be non-negative");
  GradcheckReport report;
  report.checks.push_back(run_check("sampler", 0, cfg, maker<SamplerCase>()));
  report.checks.push_back(run_check("clamp_params", 1, cfg, maker<ClampCase>()));
  report.checks.push_back(run_check("transform_grid", 2, cfg, maker<TransformCase>()));
  report.checks.push_back(run_check("mlp_chain", 3, cfg, maker<ChainCase>()));
  report.checks.push_back(run_check("nt_xent", 4, cfg, maker<NtXentCase>()));
  report.checks.push_back(run_check("mlp", 5, cfg, maker<MlpCase>()));
  report.checks.push_back(run_check("encoder", 6, cfg, maker<EncoderCase>()));
  return report;
}

}  // namespace paramcrop
