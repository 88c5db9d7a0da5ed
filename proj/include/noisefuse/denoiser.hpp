#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include "noisefuse/bridge.hpp"
#include "noisefuse/tensor.hpp"

namespace noisefuse {

/// Where a denoiser call sits on the trajectory. `index` is the transition
/// number (0-based, shared by the inversion and the sampling pass that undoes
/// it) and `abar` the noise level the prediction is made at.
struct StepInfo {
  std::size_t index = 0;
  double abar = 0.5;
};

/// Noise prediction together with the clean sample it implies.
struct Prediction {
  Tensor32 eps;
  Tensor32 x0;
};

/// x0 = (z - sqrt(1 - a) eps) / sqrt(a)
Tensor32 implied_x0(const Tensor32& z, const Tensor32& eps, double abar);
/// eps = (z - sqrt(a) x0) / sqrt(1 - a)
Tensor32 eps_from_x0(const Tensor32& z, const Tensor32& x0, double abar);

/// The frozen noise predictor eps(z_t, t, C) as a black box.
///
/// Implementations must be deterministic and return tensors shaped like `z`.
/// predict() may be called concurrently unless a wrapper says otherwise.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Prediction predict(const Tensor32& z, const StepInfo& step,
                             const PromptEmbedding& cond) const = 0;
};

using DenoiserPtr = std::shared_ptr<const Denoiser>;

/// Features keyed by (step index, layer tag). Each key is written once.
class FeatureStore {
 public:
  using Key = std::pair<std::size_t, std::string>;

  void put(std::size_t step, std::string tag, Tensor32 value);
  const Tensor32& get(std::size_t step, std::string_view tag) const;
  bool contains(std::size_t step, std::string_view tag) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t count(std::string_view tag) const;
  bool empty() const noexcept { return entries_.empty(); }

  const std::map<Key, Tensor32, std::less<>>& entries() const noexcept { return entries_; }

 private:
  std::map<Key, Tensor32, std::less<>> entries_;
};

inline constexpr std::string_view kX0Tag = "x0";

/// Always predicts `c`, whatever the latent, level or condition.
DenoiserPtr constant_denoiser(Tensor32 c);

/// Maps a prompt to the lookup key of its target.
using ConditionKeyRule = std::function<std::string(const PromptEmbedding&)>;
/// Maps a prompt straight to a target tensor.
using TargetRule = std::function<Tensor32(const PromptEmbedding&)>;

/// 16 hex digits of the FNV-1a hash of the middle row's bytes (row L / 2).
std::string middle_row_key(const PromptEmbedding& cond);

/// Predicts eps = (z - sqrt(a) target(C)) / sqrt(1 - a): the exact noise whose
/// implied clean sample is the target. x0 of the prediction is the target
/// itself.
DenoiserPtr attractor_denoiser(std::map<std::string, Tensor32> targets,
                               ConditionKeyRule key_of = middle_row_key);

/// Attractor whose target is computed from the prompt rather than looked up.
DenoiserPtr attractor_denoiser(TargetRule target_of);

/// Records every prediction's x0 into `store` under (step.index, "x0").
/// Mutates the store, so calls must not run concurrently.
class CapturingDenoiser final : public Denoiser {
 public:
  CapturingDenoiser(const Denoiser& inner, FeatureStore& store)
      : inner_(inner), store_(store) {}
  Prediction predict(const Tensor32& z, const StepInfo& step,
                     const PromptEmbedding& cond) const override;

 private:
  const Denoiser& inner_;
  FeatureStore& store_;
};

/// Blends each prediction's x0 toward the stored one,
/// x0' = (1 - blend) x0 + blend stored, and recomputes eps from x0'.
/// blend = 0 passes predictions through untouched.
class InjectingDenoiser final : public Denoiser {
 public:
  InjectingDenoiser(const Denoiser& inner, const FeatureStore& store, double blend);
  Prediction predict(const Tensor32& z, const StepInfo& step,
                     const PromptEmbedding& cond) const override;

 private:
  const Denoiser& inner_;
  const FeatureStore& store_;
  double blend_;
};

/// Owning variants of the wrappers above; both keep `inner` alive.
DenoiserPtr capture_features(DenoiserPtr inner, FeatureStore& store);
DenoiserPtr inject_features(DenoiserPtr inner, const FeatureStore& store, double blend);

/// Reads `key = path` lines; relative paths resolve against `base_dir`.
std::map<std::string, Tensor32> load_target_map(std::string_view manifest,
                                                const std::filesystem::path& base_dir);

}  // namespace noisefuse
