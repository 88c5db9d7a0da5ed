#include "noisefuse/denoiser.hpp"

#include <cmath>
#include <cstdio>

#include "noisefuse/config.hpp"
#include "noisefuse/tensor_io.hpp"

namespace noisefuse {
namespace {

void check_level(double abar, const char* op) {
  if (!(abar > 0.0 && abar < 1.0)) {
    throw Error(Errc::out_of_range, std::string(op) + ": abar must lie in (0, 1)");
  }
}

class ConstantDenoiser final : public Denoiser {
 public:
  explicit ConstantDenoiser(Tensor32 c) : c_(std::move(c)) {}

  Prediction predict(const Tensor32& z, const StepInfo& step,
                     const PromptEmbedding&) const override {
    require_same_shape(z, c_, "constant_denoiser");
    return {c_, implied_x0(z, c_, step.abar)};
  }

 private:
  Tensor32 c_;
};

class AttractorDenoiser final : public Denoiser {
 public:
  explicit AttractorDenoiser(TargetRule target_of) : target_of_(std::move(target_of)) {}

  Prediction predict(const Tensor32& z, const StepInfo& step,
                     const PromptEmbedding& cond) const override {
    Tensor32 target = target_of_(cond);
    require_same_shape(z, target, "attractor_denoiser");
    Tensor32 eps = eps_from_x0(z, target, step.abar);
    return {std::move(eps), std::move(target)};
  }

 private:
  TargetRule target_of_;
};

template <class Wrapper, class Store>
class Owning final : public Denoiser {
 public:
  template <class... Args>
  Owning(DenoiserPtr inner, Store& store, Args... args)
      : inner_(std::move(inner)), wrapper_(*inner_, store, args...) {}

  Prediction predict(const Tensor32& z, const StepInfo& step,
                     const PromptEmbedding& cond) const override {
    return wrapper_.predict(z, step, cond);
  }

 private:
  DenoiserPtr inner_;
  Wrapper wrapper_;
};

}  // namespace

Tensor32 implied_x0(const Tensor32& z, const Tensor32& eps, double abar) {
  require_same_shape(z, eps, "implied_x0");
  check_level(abar, "implied_x0");
  const double root = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  Tensor32 out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(z[i]) - noise * eps[i]) / root);
  }
  return out;
}

Tensor32 eps_from_x0(const Tensor32& z, const Tensor32& x0, double abar) {
  require_same_shape(z, x0, "eps_from_x0");
  check_level(abar, "eps_from_x0");
  const double root = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  Tensor32 out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(z[i]) - root * x0[i]) / noise);
  }
  return out;
}

void FeatureStore::put(std::size_t step, std::string tag, Tensor32 value) {
  Key key{step, std::move(tag)};
  if (entries_.contains(key)) {
    throw Error(Errc::duplicate_key, "feature store already holds step " +
                                         std::to_string(step) + " tag '" + key.second + "'");
  }
  entries_.emplace(std::move(key), std::move(value));
}

const Tensor32& FeatureStore::get(std::size_t step, std::string_view tag) const {
  const auto it = entries_.find(Key{step, std::string(tag)});
  if (it == entries_.end()) {
    throw Error(Errc::missing_key, "feature store has no step " + std::to_string(step) +
                                       " tag '" + std::string(tag) + "'");
  }
  return it->second;
}

bool FeatureStore::contains(std::size_t step, std::string_view tag) const {
  return entries_.contains(Key{step, std::string(tag)});
}

std::size_t FeatureStore::count(std::string_view tag) const {
  std::size_t n = 0;
  for (const auto& [key, value] : entries_) n += key.second == tag;
  return n;
}

DenoiserPtr constant_denoiser(Tensor32 c) {
  return std::make_shared<ConstantDenoiser>(std::move(c));
}

std::string middle_row_key(const PromptEmbedding& cond) {
  const auto row = cond.row(cond.length() / 2);
  std::uint64_t h = 14695981039346656037ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(row.data());
  for (std::size_t i = 0; i < row.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DenoiserPtr attractor_denoiser(std::map<std::string, Tensor32> targets,
                               ConditionKeyRule key_of) {
  if (targets.empty()) {
    throw Error(Errc::invalid_argument, "attractor_denoiser: no targets");
  }
  const Shape& shape = targets.begin()->second.shape();
  for (const auto& [key, t] : targets) {
    if (t.shape() != shape) {
      throw Error(Errc::shape_mismatch, "attractor_denoiser: target '" + key +
                                            "' has shape " + shape_to_string(t.shape()));
    }
  }
  return attractor_denoiser(
      [targets = std::move(targets), key_of = std::move(key_of)](const PromptEmbedding& c) {
        const std::string key = key_of(c);
        const auto it = targets.find(key);
        if (it == targets.end()) {
          throw Error(Errc::unknown_condition,
                      "attractor_denoiser: no target for condition key '" + key + "'");
        }
        return it->second;
      });
}

DenoiserPtr attractor_denoiser(TargetRule target_of) {
  return std::make_shared<AttractorDenoiser>(std::move(target_of));
}

Prediction CapturingDenoiser::predict(const Tensor32& z, const StepInfo& step,
                                      const PromptEmbedding& cond) const {
  Prediction p = inner_.predict(z, step, cond);
  store_.put(step.index, std::string(kX0Tag), p.x0);
  return p;
}

InjectingDenoiser::InjectingDenoiser(const Denoiser& inner, const FeatureStore& store,
                                     double blend)
    : inner_(inner), store_(store), blend_(blend) {
  if (!(blend >= 0.0 && blend <= 1.0)) {
    throw Error(Errc::invalid_argument, "inject_features: blend must lie in [0, 1]");
  }
}

Prediction InjectingDenoiser::predict(const Tensor32& z, const StepInfo& step,
                                      const PromptEmbedding& cond) const {
  Prediction p = inner_.predict(z, step, cond);
  if (blend_ == 0.0) return p;
  const Tensor32& stored = store_.get(step.index, kX0Tag);
  require_same_shape(p.x0, stored, "inject_features");
  Tensor32 x0(p.x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    x0[i] = static_cast<float>((1.0 - blend_) * p.x0[i] + blend_ * stored[i]);
  }
  Tensor32 eps = eps_from_x0(z, x0, step.abar);
  return {std::move(eps), std::move(x0)};
}

DenoiserPtr capture_features(DenoiserPtr inner, FeatureStore& store) {
  return std::make_shared<Owning<CapturingDenoiser, FeatureStore>>(std::move(inner), store);
}

DenoiserPtr inject_features(DenoiserPtr inner, const FeatureStore& store, double blend) {
  return std::make_shared<Owning<InjectingDenoiser, const FeatureStore>>(std::move(inner),
                                                                        store, blend);
}

std::map<std::string, Tensor32> load_target_map(std::string_view manifest,
                                                const std::filesystem::path& base_dir) {
  std::map<std::string, Tensor32> targets;
  for (const auto& [key, value] : parse_key_values(manifest)) {
    std::filesystem::path path(value);
    if (path.is_relative()) path = base_dir / path;
    if (!targets.emplace(key, load_tensor_as<float>(path)).second) {
      throw Error(Errc::duplicate_key, "target map lists key '" + key + "' twice");
    }
  }
  return targets;
}

}  // namespace noisefuse
