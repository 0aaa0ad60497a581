#include "marksweep/optim.hpp"

#include <cmath>
#include <numbers>

#include "marksweep/error.hpp"

namespace marksweep {

namespace {

template <class T>
bool adam_impl(std::vector<T>& theta, const std::vector<T>& grads, OptimState& st, double lr) {
  require(theta.size() == grads.size(), ErrorCode::kDimensionMismatch, "adam_step: gradient length mismatch");
  if (st.m.empty() && st.v.empty()) st = OptimState(theta.size());
  require(st.m.size() == theta.size() && st.v.size() == theta.size(), ErrorCode::kDimensionMismatch,
          "adam_step: optimizer state length mismatch");
  for (T g : grads)
    if (!std::isfinite(static_cast<double>(g))) return false;
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grads[i];
    const double m = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    const double v = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    st.m[i] = static_cast<float>(m);
    st.v[i] = static_cast<float>(v);
    theta[i] = static_cast<T>(theta[i] - lr * (m / bc1) / (std::sqrt(v / bc2) + st.eps));
  }
  return true;
}

}  // namespace

bool adam_step(std::vector<float>& theta, const std::vector<float>& grads, OptimState& state, double lr) {
  return adam_impl(theta, grads, state, lr);
}

bool adam_step(std::vector<double>& theta, const std::vector<double>& grads, OptimState& state, double lr) {
  return adam_impl(theta, grads, state, lr);
}

double lr_at(int step, const Schedule& s) {
  require(s.warmup_steps >= 0 && s.warmup_steps < s.total_steps, ErrorCode::kInvalidArgument,
          "schedule needs 0 <= warmup_steps < total_steps");
  require(step >= 0 && step <= s.total_steps, ErrorCode::kInvalidArgument, "step outside [0, total_steps]");
  if (step < s.warmup_steps) return s.base_lr * step / s.warmup_steps;
  const double t = static_cast<double>(step - s.warmup_steps) / (s.total_steps - s.warmup_steps);
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace marksweep
