#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "noisefuse/config.hpp"
#include "noisefuse/tensor.hpp"

namespace noisefuse {

/// Cumulative signal coefficients over the training timesteps.
///
/// Invariant: every entry lies in (0, 1) and the sequence is strictly
/// decreasing.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> alphas_cumprod, double beta_start,
                double beta_end);

  std::span<const double> alphas_cumprod() const noexcept { return alphas_cumprod_; }
  double alpha_cumprod(std::size_t t) const { return alphas_cumprod_.at(t); }
  std::size_t num_train_steps() const noexcept { return alphas_cumprod_.size(); }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }

 private:
  std::vector<double> alphas_cumprod_;
  double beta_start_;
  double beta_end_;
};

/// Scaled-linear schedule: sqrt(beta) is interpolated linearly between the
/// endpoints, then squared; alphas_cumprod is the running product of 1 - beta.
NoiseSchedule build_schedule(std::size_t num_train_steps, double beta_start,
                             double beta_end);

inline NoiseSchedule build_schedule(const PipelineConfig& c) {
  return build_schedule(c.num_train_steps, c.beta_start, c.beta_end);
}

/// Ascending training-timestep indices visited by DDIM.
class TimestepSequence {
 public:
  TimestepSequence() = default;
  /// Validates strict ascent and `t < num_train_steps` for every entry.
  TimestepSequence(std::vector<std::size_t> steps, std::size_t num_train_steps);

  std::span<const std::size_t> steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_.size(); }
  bool empty() const noexcept { return steps_.empty(); }
  std::size_t operator[](std::size_t i) const noexcept { return steps_[i]; }

 private:
  std::vector<std::size_t> steps_;
};

/// Indices {0, k, 2k, ...} with stride k = floor(T / num_ddim_steps).
TimestepSequence select_timesteps(const NoiseSchedule& s, std::size_t num_ddim_steps);

/// Noise levels of the latents along a trajectory: entry 0 is the level the
/// clean latent is taken to sit at (alphas_cumprod of the first visited
/// timestep) and entry k + 1 is alphas_cumprod[steps[k]]. The first
/// inversion transition is therefore the identity, and an n-step sequence
/// yields n + 1 latents.
std::vector<double> trajectory_levels(const NoiseSchedule& s, const TimestepSequence& steps);

/// One inversion step toward noise:
///   z' = sqrt(a'/a) z + (sqrt(1/a' - 1) - sqrt(1/a - 1)) eps
/// with a = abar_t, a' = abar_next, 0 < a' <= a < 1.
/// Arithmetic runs in double; the Tensor32 overload rounds once per element.
Tensor32 ddim_invert_step(const Tensor32& z_t, const Tensor32& eps, double abar_t,
                          double abar_next);
Tensor64 ddim_invert_step(const Tensor64& z_t, const Tensor64& eps, double abar_t,
                          double abar_next);

/// One sampling step from the level abar_next back to abar_t.
///
/// paper_exact_inverse undoes ddim_invert_step algebraically;
/// standard_ddim goes through x0 = (z' - sqrt(1 - a') eps) / sqrt(a') and
/// returns sqrt(a) x0 + sqrt(1 - a) eps.
Tensor32 ddim_sample_step(const Tensor32& z_next, const Tensor32& eps, double abar_t,
                          double abar_next, InversionFormula formula);
Tensor64 ddim_sample_step(const Tensor64& z_next, const Tensor64& eps, double abar_t,
                          double abar_next, InversionFormula formula);

}  // namespace noisefuse
