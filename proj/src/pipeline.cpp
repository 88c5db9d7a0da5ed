#include "noisefuse/pipeline.hpp"

#include <string>

namespace noisefuse {

Tensor32 Trajectory::stacked() const {
  if (points.empty()) return Tensor32(Shape{0});
  Shape shape{points.size()};
  const Shape& inner = points.front().latent.shape();
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<float> values;
  values.reserve(element_count(shape));
  for (const auto& p : points) {
    if (p.latent.shape() != inner) {
      throw Error(Errc::shape_mismatch, "trajectory latents differ in shape");
    }
    values.insert(values.end(), p.latent.data().begin(), p.latent.data().end());
  }
  return Tensor32(std::move(shape), std::move(values));
}

EditOptions EditOptions::from_config(const PipelineConfig& c) {
  EditOptions o;
  o.mode = c.fusion_mode;
  o.formula = c.inversion_formula;
  o.patch_size = c.patch_size;
  o.blend = c.blend;
  return o;
}

InversionResult run_inversion(const Tensor32& z0, const PromptEmbedding& inv_prompt,
                              const Denoiser& d, const NoiseSchedule& s,
                              const TimestepSequence& steps, bool capture) {
  InversionResult out;
  const CapturingDenoiser capturing(d, out.features);
  const Denoiser& active = capture ? static_cast<const Denoiser&>(capturing) : d;

  const std::vector<double> levels = trajectory_levels(s, steps);
  // The running latent is carried in double; the denoiser and the trajectory
  // see its float rounding.
  Tensor64 state = tensor_cast<double>(z0);
  Tensor32 z = z0;
  out.trajectory.points.push_back({0, z});
  for (std::size_t k = 0; k < steps.size(); ++k) {
    try {
      const Tensor32 eps = active.predict(z, {k, levels[k]}, inv_prompt).eps;
      state = ddim_invert_step(state, tensor_cast<double>(eps), levels[k], levels[k + 1]);
      z = tensor_cast<float>(state);
    } catch (const Error& e) {
      rethrow_with_context(e, "inversion step " + std::to_string(k));
    }
    out.trajectory.points.push_back({k + 1, z});
  }
  out.noise = std::move(z);
  out.noise_state = std::move(state);
  return out;
}

EditResult run_edit(const Tensor32& zT, std::span<const PromptEmbedding> prompts,
                    const PromptEmbedding& inv_prompt, const Denoiser& d,
                    const NoiseSchedule& s, const TimestepSequence& steps,
                    const EditOptions& options, const FeatureStore* hooks) {
  return run_edit(tensor_cast<double>(zT), prompts, inv_prompt, d, s, steps, options, hooks);
}

EditResult run_edit(const Tensor64& zT, std::span<const PromptEmbedding> prompts,
                    const PromptEmbedding& inv_prompt, const Denoiser& d,
                    const NoiseSchedule& s, const TimestepSequence& steps,
                    const EditOptions& options, const FeatureStore* hooks) {
  if (prompts.empty()) throw Error(Errc::invalid_argument, "run_edit: no editing prompts");
  std::optional<InjectingDenoiser> injecting;
  if (hooks != nullptr) injecting.emplace(d, *hooks, options.blend);
  const Denoiser& active = injecting ? static_cast<const Denoiser&>(*injecting) : d;

  const std::vector<double> levels = trajectory_levels(s, steps);
  EditResult out;
  Tensor64 state = zT;
  Tensor32 z = tensor_cast<float>(zT);
  if (options.keep_trajectory) out.trajectory.points.push_back({steps.size(), z});
  for (std::size_t k = steps.size(); k-- > 0;) {
    try {
      const StepInfo step{k, levels[k + 1]};
      const BranchSet branches =
          branch_predictions(active, z, step, prompts, inv_prompt, options.guidance);
      Tensor32 fused;
      switch (options.mode) {
        case FusionMode::adaptive: {
          AdaptiveFusion a = fuse_adaptive(branches, options.patch_size);
          record_diagnostics(branches, a.fused, &a.selection, out.trace, k);
          fused = std::move(a.fused);
          break;
        }
        case FusionMode::mean:
          fused = fuse_mean(branches);
          record_diagnostics(branches, fused, nullptr, out.trace, k);
          break;
        case FusionMode::single: {
          fused = branches.eps[0];
          const NormMap grid = residual_norm_map(fused, options.patch_size);
          SelectionMap first;
          first.rows = grid.rows;
          first.cols = grid.cols;
          first.values.assign(grid.values.size(), 0);
          record_diagnostics(branches, fused, &first, out.trace, k);
          break;
        }
      }
      state = ddim_sample_step(state, tensor_cast<double>(fused), levels[k], levels[k + 1],
                               options.formula);
      z = tensor_cast<float>(state);
    } catch (const Error& e) {
      rethrow_with_context(e, "editing step " + std::to_string(k));
    }
    if (options.keep_trajectory) out.trajectory.points.push_back({k, z});
  }
  out.latent = std::move(z);
  return out;
}

Reconstruction run_reconstruction(const Tensor32& z0, const PromptEmbedding& inv_prompt,
                                  const Denoiser& d, const NoiseSchedule& s,
                                  const TimestepSequence& steps, InversionFormula formula) {
  if (steps.empty()) return {z0, 0.0};
  const InversionResult inv = run_inversion(z0, inv_prompt, d, s, steps, false);
  EditOptions options;
  options.mode = FusionMode::single;
  options.formula = formula;
  const PromptEmbedding prompts[] = {inv_prompt};
  EditResult edit = run_edit(inv.noise_state, prompts, inv_prompt, d, s, steps, options);
  const double err = max_abs_diff(edit.latent, z0);
  return {std::move(edit.latent), err};
}

}  // namespace noisefuse
