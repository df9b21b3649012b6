#include "paramcrop/optim.hpp"

#include <algorithm>
#include <cmath>

#include "paramcrop/errors.hpp"

namespace paramcrop {

void SgdMomentum::step(std::size_t slot, std::span<double> weights, std::span<const double> grads) {
  if (weights.size() != grads.size()) throw DimensionError("SgdMomentum: weight/gradient size mismatch");
  if (velocity_.size() <= slot) velocity_.resize(slot + 1);
  auto& vel = velocity_[slot];
  if (vel.empty()) vel.assign(weights.size(), 0.0);
  if (vel.size() != weights.size()) throw DimensionError("SgdMomentum: slot reused with a new size");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    vel[i] = config_.momentum * vel[i] + grads[i];
    weights[i] -= config_.learning_rate * vel[i];
  }
}

bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace paramcrop
