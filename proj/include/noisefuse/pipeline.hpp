#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "noisefuse/bridge.hpp"
#include "noisefuse/config.hpp"
#include "noisefuse/denoiser.hpp"
#include "noisefuse/fusion.hpp"
#include "noisefuse/schedule.hpp"
#include "noisefuse/tensor.hpp"

namespace noisefuse {

/// Latents along one pass. Entry 0 of an inversion is the clean latent and
/// entry k + 1 the latent after transition k; an editing trajectory is stored
/// in the order it was produced (noise first).
struct Trajectory {
  struct Point {
    std::size_t position;  // index into trajectory_levels()
    Tensor32 latent;
  };
  std::vector<Point> points;

  std::size_t size() const noexcept { return points.size(); }
  /// Stacks all latents into one (size x latent-shape) tensor.
  Tensor32 stacked() const;
};

/// Stepping runs in double; `noise` is the float rounding of `noise_state`.
struct InversionResult {
  Tensor32 noise;
  Tensor64 noise_state;
  Trajectory trajectory;
  FeatureStore features;
};

/// DDIM inversion of `z0` under the inversion prompt. With `capture` set,
/// the implied clean sample of every transition lands in `features`.
InversionResult run_inversion(const Tensor32& z0, const PromptEmbedding& inv_prompt,
                              const Denoiser& d, const NoiseSchedule& s,
                              const TimestepSequence& steps, bool capture);

struct EditOptions {
  FusionMode mode = FusionMode::adaptive;
  InversionFormula formula = InversionFormula::paper_exact_inverse;
  std::size_t patch_size = 1;
  double blend = 0.0;
  std::optional<Guidance> guidance;
  bool keep_trajectory = false;

  static EditOptions from_config(const PipelineConfig& c);
};

struct EditResult {
  Tensor32 latent;
  FusionTrace trace;
  Trajectory trajectory;  // filled only with keep_trajectory
};

/// Multi-prompt sampling from zT back to the clean level. Each transition
/// queries every prompt plus the inversion prompt, fuses by `mode`, and takes
/// one sampling step. `hooks`, when given, is injected with `options.blend`.
EditResult run_edit(const Tensor32& zT, std::span<const PromptEmbedding> prompts,
                    const PromptEmbedding& inv_prompt, const Denoiser& d,
                    const NoiseSchedule& s, const TimestepSequence& steps,
                    const EditOptions& options, const FeatureStore* hooks = nullptr);
/// Same, starting from an unrounded latent such as InversionResult::noise_state.
EditResult run_edit(const Tensor64& zT, std::span<const PromptEmbedding> prompts,
                    const PromptEmbedding& inv_prompt, const Denoiser& d,
                    const NoiseSchedule& s, const TimestepSequence& steps,
                    const EditOptions& options, const FeatureStore* hooks = nullptr);

struct Reconstruction {
  Tensor32 latent;
  double max_abs_error = 0.0;
};

/// Inversion followed by single-prompt sampling with the inversion prompt,
/// handing the unrounded noise latent from one pass to the other.
Reconstruction run_reconstruction(
    const Tensor32& z0, const PromptEmbedding& inv_prompt, const Denoiser& d,
    const NoiseSchedule& s, const TimestepSequence& steps,
    InversionFormula formula = InversionFormula::paper_exact_inverse);

}  // namespace noisefuse
