#pragma once

#include <cstdint>
#include <vector>

namespace marksweep {

struct OptimState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<float> m;
  std::vector<float> v;

  explicit OptimState(std::size_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
};

/// Bias-corrected Adam update. Returns false (and leaves everything untouched)
/// when any gradient is non-finite.
bool adam_step(std::vector<float>& theta, const std::vector<float>& grads, OptimState& state, double lr);
bool adam_step(std::vector<double>& theta, const std::vector<double>& grads, OptimState& state, double lr);

struct Schedule {
  double base_lr = 1e-3;
  int warmup_steps = 150;
  int total_steps = 3000;
};

/// Linear warmup from 0, then half-cosine decay to 0 at total_steps.
double lr_at(int step, const Schedule& s);

}  // namespace marksweep
