#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace paramcrop {

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

// SGD with heavy-ball momentum, one velocity buffer per parameter tensor:
//   velocity = momentum * velocity + grad;  weights -= lr * velocity
class SgdMomentum {
 public:
  SgdMomentum() = default;
  explicit SgdMomentum(SgdConfig config) : config_(config) {}

  const SgdConfig& config() const noexcept { return config_; }

  // `slot` identifies the parameter tensor; buffers are created on first use.
  void step(std::size_t slot, std::span<double> weights, std::span<const double> grads);

 private:
  SgdConfig config_;
  std::vector<std::vector<double>> velocity_;
};

bool all_finite(std::span<const double> values) noexcept;

}  // namespace paramcrop
