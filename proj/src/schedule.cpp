#include "noisefuse/schedule.hpp"

#include <cmath>
#include <string>

namespace noisefuse {
namespace {

void check_levels(double abar_t, double abar_next, const char* op) {
  const auto in_unit = [](double a) { return a > 0.0 && a < 1.0; };
  if (!in_unit(abar_t) || !in_unit(abar_next)) {
    throw Error(Errc::out_of_range, std::string(op) + ": alphas_cumprod must lie in (0, 1)");
  }
  if (abar_next > abar_t) {
    throw Error(Errc::out_of_range,
                std::string(op) + ": abar_next must not exceed abar_t");
  }
}

// Evaluates a * z + b * eps per element in double, rounding once to T.
template <class T>
Tensor<T> affine(const Tensor<T>& z, const Tensor<T>& eps, double a, double b) {
  Tensor<T> out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = static_cast<T>(a * static_cast<double>(z[i]) + b * static_cast<double>(eps[i]));
  }
  return out;
}

template <class T>
Tensor<T> invert_step(const Tensor<T>& z_t, const Tensor<T>& eps, double abar_t,
                      double abar_next) {
  require_same_shape(z_t, eps, "ddim_invert_step");
  check_levels(abar_t, abar_next, "ddim_invert_step");
  const double scale = std::sqrt(abar_next / abar_t);
  const double noise = std::sqrt(1.0 / abar_next - 1.0) - std::sqrt(1.0 / abar_t - 1.0);
  return affine(z_t, eps, scale, noise);
}

template <class T>
Tensor<T> sample_step(const Tensor<T>& z_next, const Tensor<T>& eps, double abar_t,
                      double abar_next, InversionFormula formula) {
  require_same_shape(z_next, eps, "ddim_sample_step");
  check_levels(abar_t, abar_next, "ddim_sample_step");
  if (formula == InversionFormula::paper_exact_inverse) {
    const double scale = std::sqrt(abar_next / abar_t);
    const double noise = std::sqrt(1.0 / abar_next - 1.0) - std::sqrt(1.0 / abar_t - 1.0);
    return affine(z_next, eps, 1.0 / scale, -noise / scale);
  }
  // z_t = sqrt(a) x0 + sqrt(1 - a) eps, x0 = (z' - sqrt(1 - a') eps) / sqrt(a')
  const double ratio = std::sqrt(abar_t / abar_next);
  const double noise = std::sqrt(1.0 - abar_t) - ratio * std::sqrt(1.0 - abar_next);
  return affine(z_next, eps, ratio, noise);
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> alphas_cumprod, double beta_start,
                             double beta_end)
    : alphas_cumprod_(std::move(alphas_cumprod)),
      beta_start_(beta_start),
      beta_end_(beta_end) {
  if (alphas_cumprod_.empty()) {
    throw Error(Errc::invalid_argument, "noise schedule needs at least one step");
  }
  double prev = 1.0;
  for (std::size_t t = 0; t < alphas_cumprod_.size(); ++t) {
    const double a = alphas_cumprod_[t];
    if (!(a > 0.0 && a < 1.0) || !(a < prev)) {
      throw Error(Errc::out_of_range,
                  "alphas_cumprod[" + std::to_string(t) +
                      "] breaks (0, 1) range or strict decrease");
    }
    prev = a;
  }
}

NoiseSchedule build_schedule(std::size_t num_train_steps, double beta_start,
                             double beta_end) {
  if (num_train_steps == 0) {
    throw Error(Errc::invalid_argument, "build_schedule: zero training steps");
  }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error(Errc::invalid_argument,
                "build_schedule: need 0 < beta_start <= beta_end < 1");
  }
  const double lo = std::sqrt(beta_start);
  const double hi = std::sqrt(beta_end);
  std::vector<double> alphas_cumprod(num_train_steps);
  double running = 1.0;
  for (std::size_t s = 0; s < num_train_steps; ++s) {
    const double frac = num_train_steps == 1
                            ? 0.0
                            : static_cast<double>(s) / static_cast<double>(num_train_steps - 1);
    const double root = lo + (hi - lo) * frac;
    running *= 1.0 - root * root;
    alphas_cumprod[s] = running;
  }
  return NoiseSchedule(std::move(alphas_cumprod), beta_start, beta_end);
}

TimestepSequence::TimestepSequence(std::vector<std::size_t> steps,
                                   std::size_t num_train_steps)
    : steps_(std::move(steps)) {
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (steps_[i] >= num_train_steps) {
      throw Error(Errc::out_of_range, "timestep " + std::to_string(steps_[i]) +
                                          " is not below " +
                                          std::to_string(num_train_steps));
    }
    if (i > 0 && steps_[i] <= steps_[i - 1]) {
      throw Error(Errc::invalid_argument, "timesteps must be strictly ascending");
    }
  }
}

TimestepSequence select_timesteps(const NoiseSchedule& s, std::size_t num_ddim_steps) {
  const std::size_t total = s.num_train_steps();
  if (num_ddim_steps == 0) {
    throw Error(Errc::invalid_argument, "select_timesteps: zero steps requested");
  }
  if (num_ddim_steps > total) {
    throw Error(Errc::out_of_range, "select_timesteps: more DDIM steps than training steps");
  }
  const std::size_t stride = total / num_ddim_steps;
  std::vector<std::size_t> steps(num_ddim_steps);
  for (std::size_t i = 0; i < num_ddim_steps; ++i) steps[i] = i * stride;
  return TimestepSequence(std::move(steps), total);
}

std::vector<double> trajectory_levels(const NoiseSchedule& s, const TimestepSequence& steps) {
  std::vector<double> levels;
  if (steps.empty()) return levels;
  levels.reserve(steps.size() + 1);
  levels.push_back(s.alpha_cumprod(steps[0]));
  for (std::size_t t : steps.steps()) levels.push_back(s.alpha_cumprod(t));
  return levels;
}

Tensor32 ddim_invert_step(const Tensor32& z_t, const Tensor32& eps, double abar_t,
                          double abar_next) {
  return invert_step(z_t, eps, abar_t, abar_next);
}

Tensor64 ddim_invert_step(const Tensor64& z_t, const Tensor64& eps, double abar_t,
                          double abar_next) {
  return invert_step(z_t, eps, abar_t, abar_next);
}

Tensor32 ddim_sample_step(const Tensor32& z_next, const Tensor32& eps, double abar_t,
                          double abar_next, InversionFormula formula) {
  return sample_step(z_next, eps, abar_t, abar_next, formula);
}

Tensor64 ddim_sample_step(const Tensor64& z_next, const Tensor64& eps, double abar_t,
                          double abar_next, InversionFormula formula) {
  return sample_step(z_next, eps, abar_t, abar_next, formula);
}

}  // namespace noisefuse
