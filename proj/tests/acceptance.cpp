// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "paramcrop/affine_crop.hpp"
#include "paramcrop/contrastive.hpp"
#include "paramcrop/gradcheck.hpp"
#include "paramcrop/sampler.hpp"
#include "paramcrop/simulator.hpp"

using namespace paramcrop;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("[%s] criterion %d: %s | %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct TimedLog {
  MetricsLog log;
  double seconds = 0;
};

TimedLog timed_run(const TrainConfig& c) {
  const auto t0 = Clock::now();
  TimedLog r{run_training(c), 0};
  r.seconds = seconds_since(t0);
  return r;
}

double tenth_mean(const MetricsLog& log, double StepRecord::*f, bool last) {
  const std::size_t n = log.records.size();
  const std::size_t k = std::max<std::size_t>(1, n / 10);
  return last ? mean_over(log, f, n - k, n) : mean_over(log, f, 0, k);
}

std::string csv_of(const MetricsLog& log) {
  std::ostringstream os;
  write_metrics_csv(os, log);
  return os.str();
}

void criterion_gradcheck() {
  const auto t0 = Clock::now();
  const GradcheckReport r = run_gradcheck({});
  const double secs = seconds_since(t0);
  std::string detail;
  bool ok = r.passed() && secs < 120.0;
  for (const auto& c : r.checks) {
    ok = ok && c.trials >= 20 && c.max_rel_error < 1e-5;
    detail += c.name + "=" + fmt("%.2e", c.max_rel_error) + " ";
  }
  detail += fmt("(%.2f s)", secs);
  report(1, ok, "gradient fidelity (finite differences, h=1e-6, 20 seeds, rel err < 1e-5)", detail);
}

void criterion_reversal() {
  bool ok = true;
  double largest = 0;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    TrainConfig c;
    c.seed = seed;
    TrainConfig plain = c;
    plain.gradient_reversal = false;
    Trainer rev(c), fwd(plain);
    Rng data(seed + 100);
    const auto batch = make_synthetic_batch(data, c.batch, c.input_shape, c.noise_amplitude);
    rev.train_step(batch);
    fwd.train_step(batch);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto& g = rev.last_cropper_gradients(b);
      const auto& h = fwd.last_cropper_gradients(b);
      ok = ok && !h.is_zero();
      for (std::size_t i = 0; i < g.w1.size(); ++i) ok = ok && g.w1[i] == -h.w1[i];
      for (std::size_t i = 0; i < g.w2.size(); ++i) ok = ok && g.w2[i] == -h.w2[i];
      largest = std::max(largest, h.squared_norm());
    }
  }
  report(2, ok, "reversed generator gradient == -1 x unreversed (bit-exact)",
         "3 seeds x 2 branches, max |g|^2 " + fmt("%.3e", largest));
}

void criterion_identity() {
  Rng rng(5);
  double worst = 0;
  for (const Shape& s : {TrainConfig{}.input_shape, Shape{1, 2, 2, 2}, Shape{2, 7, 5, 3}}) {
    for (const auto& v : make_synthetic_batch(rng, 2, s, 0.05)) {
      const VideoTensor out = sample(v, generate_grid(s[1], s[2], s[3]));
      for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(out[i] - v[i]));
    }
  }
  report(3, worst <= 1e-12, "identity crop reproduces the source (<= 1e-12)", "max abs err " + fmt("%.3e", worst));
}

void criterion_containment() {
  const TrainConfig cfg;
  const SamplingGrid base = generate_grid(cfg.crop_shape[0], cfg.crop_shape[1], cfg.crop_shape[2]);
  ParamBounds bounds;
  bounds.scale_spatial = {0.5, 1.0};
  bounds.scale_temporal = {0.5, 1.0};
  bounds.theta = {0.0, 0.0};
  Rng rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0, coords = 0;
  for (int i = 0; i < 10000; ++i) {
    UnitParams v;
    for (double& x : v.v) x = u(rng);
    const SamplingGrid g = transform_grid(base, build_affine_matrix(clamp_params(v, bounds)));
    for (double c : g.coords()) {
      violations += (c < -1.0 || c > 1.0);
      ++coords;
    }
  }
  report(4, violations == 0, "containment over 10^4 random unit params",
         std::to_string(violations) + " violations in " + std::to_string(coords) + " coordinates");
}

void criterion_dynamics(const TimedLog& run) {
  const MetricsLog& log = run.log;
  const double probe_iou = log.initial_probe.iou, probe_dist = log.initial_probe.dist_norm;
  const double d0 = tenth_mean(log, &StepRecord::dist_norm, false), d1 = tenth_mean(log, &StepRecord::dist_norm, true);
  const double i0 = tenth_mean(log, &StepRecord::iou, false), i1 = tenth_mean(log, &StepRecord::iou, true);
  const bool ok = probe_iou > 0.7 && probe_dist < 0.15 && d1 >= 2 * d0 && i1 < i0 && run.seconds < 600;
  report(5, ok, "disparity dynamics (default paramcrop run, 2000 steps, N=8, seed 0, b=0.2)",
         "probe iou " + fmt("%.4f", probe_iou) + " dist " + fmt("%.4f", probe_dist) + "; dist first10 " +
             fmt("%.4f", d0) + " last10 " + fmt("%.4f", d1) + "; iou first10 " + fmt("%.4f", i0) + " last10 " +
             fmt("%.4f", i1) + fmt("; %.1f s", run.seconds));
}

void criterion_detach(const TimedLog& base, const TimedLog& half, const TimedLog& zero) {
  bool grads_zero = true;
  for (const auto& r : half.log.records) grads_zero = grads_zero && r.cropper_grad_sq == 0.0;
  const auto& hp = half.log.initial_probe;
  const double hd = tenth_mean(half.log, &StepRecord::dist_norm, true);
  const double hr = tenth_mean(half.log, &StepRecord::dist_raw, true);
  const double hi = tenth_mean(half.log, &StepRecord::iou, true);
  const bool frozen = std::abs(hd - hp.dist_norm) <= 0.05 && std::abs(hr - hp.dist_raw) <= 0.05 &&
                      std::abs(hi - hp.iou) <= 0.05;
  const double d0 = tenth_mean(zero.log, &StepRecord::dist_norm, true);
  const double d2 = tenth_mean(base.log, &StepRecord::dist_norm, true);
  report(6, grads_zero && frozen && d0 >= d2, "detach-bound semantics",
         std::string("b=0.5: grads ") + (grads_zero ? "all zero" : "NONZERO") + ", last10 dist " + fmt("%.4f", hd) +
             " vs probe " + fmt("%.4f", hp.dist_norm) + ", iou " + fmt("%.4f", hi) + " vs " + fmt("%.4f", hp.iou) +
             "; last10 dist b=0 " + fmt("%.4f", d0) + " >= b=0.2 " + fmt("%.4f", d2));
}

void criterion_loss_oracles() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  double worst_brute = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (int trial = 0; trial < 25; ++trial) {
      DenseArray z({2 * n, 8});
      for (double& x : z.values()) x = nd(rng);
      const DenseArray e = l2_normalize_rows(z);
      std::vector<std::vector<double>> rows(2 * n);
      for (std::size_t i = 0; i < 2 * n; ++i) rows[i].assign(e.data() + 8 * i, e.data() + 8 * (i + 1));
      const double tau = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
      worst_brute = std::max(worst_brute, std::abs(nt_xent(e, {tau}) - oracle::nt_xent(rows, tau)));
    }
  }
  const DenseArray hand = DenseArray::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const double hand_err = std::abs(nt_xent(hand, {1.0}) - std::log(1.0 + 2.0 / std::exp(1.0)));
  double worst_same = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const DenseArray same({2 * n, 4}, 0.5);
    for (double tau : {0.1, 0.5, 1.0}) {
      worst_same = std::max(worst_same, std::abs(nt_xent(same, {tau}) - std::log(2.0 * n - 1.0)));
    }
  }
  report(7, worst_brute <= 1e-12 && hand_err <= 1e-9 && worst_same <= 1e-12, "NT-Xent oracles",
         "brute-force max err " + fmt("%.2e", worst_brute) + ", hand case err " + fmt("%.2e", hand_err) +
             ", identical-rows err " + fmt("%.2e", worst_same));
}

void criterion_iou_oracle() {
  Rng prng(77);
  std::mt19937_64 mc(78);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    UnitParams va, vb;
    for (double& x : va.v) x = u(prng);
    for (double& x : vb.v) x = u(prng);
    const CropCube a = crop_cube_from_params(clamp_params(va, ParamBounds{}));
    const CropCube b = crop_cube_from_params(clamp_params(vb, ParamBounds{}));
    const oracle::Box ba{{a.x.lo, a.y.lo, a.t.lo}, {a.x.hi, a.y.hi, a.t.hi}};
    const oracle::Box bb{{b.x.lo, b.y.lo, b.t.lo}, {b.x.hi, b.y.hi, b.t.hi}};
    worst = std::max(worst, std::abs(st_iou(a, b) - oracle::monte_carlo_iou(ba, bb, 1000000, mc)));
  }
  const double hand = st_iou(crop_cube_from_params({0.5, 0.5, 0, 0, 0, 0}), crop_cube_from_params({0.5, 0.5, 0, 0.5, 0, 0}));
  const double hand_err = std::abs(hand - 1.0 / 3.0);
  report(8, worst < 0.01 && hand_err <= 1e-12, "IoU vs 10^6-point Monte-Carlo on 100 pairs; hand case 1/3",
         "max MC diff " + fmt("%.4f", worst) + ", hand err " + fmt("%.2e", hand_err));
}

void criterion_random(const TimedLog& run) {
  const MetricsLog& log = run.log;
  const std::size_t n = log.records.size(), q = n / 4;
  const double first = mean_over(log, &StepRecord::dist_norm, 0, q);
  const double last = mean_over(log, &StepRecord::dist_norm, n - q, n);
  const double rel = std::abs(last - first) / first;
  report(9, rel < 0.05, "random-strategy stationarity (first vs last quartile < 5%)",
         "first " + fmt("%.4f", first) + " last " + fmt("%.4f", last) + " rel diff " + fmt("%.4f", rel));
}

void criterion_determinism(const TimedLog& base) {
  bool ok = true;
  std::string detail;
  for (Strategy s : {Strategy::paramcrop, Strategy::random, Strategy::simple, Strategy::hard, Strategy::manual}) {
    TrainConfig c;
    c.steps = 60;
    c.strategy = s;
    c.flip = s == Strategy::random;
    const bool same = csv_of(run_training(c)) == csv_of(run_training(c));
    ok = ok && same;
    detail += to_string(s) + (same ? "=same " : "=DIFFERENT ");
  }
  TrainConfig c;
  const bool full_same = csv_of(run_training(c)) == csv_of(base.log);
  ok = ok && full_same;
  detail += std::string("default 2000-step rerun=") + (full_same ? "same" : "DIFFERENT");
  report(10, ok, "determinism (rerun yields byte-identical CSV)", detail);
}

}  // namespace

int main() {
  criterion_gradcheck();
  criterion_reversal();
  criterion_identity();
  criterion_containment();

  TrainConfig base_cfg;  // defaults: 2000 steps, N = 8, seed 0, b = 0.2
  const TimedLog base = timed_run(base_cfg);
  criterion_dynamics(base);

  TrainConfig half_cfg = base_cfg, zero_cfg = base_cfg;
  half_cfg.bounds.detach_bound = 0.5;
  zero_cfg.bounds.detach_bound = 0.0;
  criterion_detach(base, timed_run(half_cfg), timed_run(zero_cfg));

  criterion_loss_oracles();
  criterion_iou_oracle();

  TrainConfig random_cfg = base_cfg;
  random_cfg.strategy = Strategy::random;
  criterion_random(timed_run(random_cfg));

  criterion_determinism(base);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
