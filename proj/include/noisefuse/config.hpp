#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace noisefuse {

/// How the sampler undoes an inversion step.
enum class InversionFormula {
  /// Exact algebraic inverse of the inversion update as printed.
  paper_exact_inverse,
  /// Textbook DDIM update through the predicted clean sample.
  standard_ddim,
};

enum class FusionMode { adaptive, mean, single };

enum class PoolingKind { last_token, index, mean };

struct Pooling {
  PoolingKind kind = PoolingKind::last_token;
  std::size_t index = 0;  // only read for PoolingKind::index
};

/// Which norm scales the audio vector before it is pulled back.
enum class InversionNorm {
  pooled,    // Euclidean norm of the pooled inversion embedding
  sequence,  // Frobenius norm of the full inversion token sequence
};

struct PipelineConfig {
  std::size_t num_train_steps = 1000;
  std::size_t num_ddim_steps = 50;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  double lambda = 1e-5;
  InversionFormula inversion_formula = InversionFormula::paper_exact_inverse;
  std::size_t patch_size = 1;
  // 0 selects the length-matching rule (inversion prompt length - 2).
  std::size_t replication_count = 0;
  double guidance_scale = 1.0;
  FusionMode fusion_mode = FusionMode::adaptive;
  double blend = 0.0;
  Pooling pooling{};
  InversionNorm inversion_norm = InversionNorm::pooled;
  std::uint64_t seed = 1;
};

/// Throws Error(constraint_violation) on the first broken invariant.
void validate(const PipelineConfig& config);

/// Parses a flat `key = value` document. Blank lines and lines starting with
/// `#` are ignored. Missing keys keep their defaults.
PipelineConfig parse_config(std::string_view text);

/// Applies one `key = value` pair on top of `config` (no validation).
void apply_config_entry(PipelineConfig& config, std::string_view key,
                        std::string_view value);

/// Renders every key; parse_config(format_config(c)) reproduces c.
std::string format_config(const PipelineConfig& config);

using KeyValue = std::pair<std::string, std::string>;

/// Splits a flat key-value document into ordered entries. Keys may repeat.
std::vector<KeyValue> parse_key_values(std::string_view text);

const char* to_string(InversionFormula f) noexcept;
const char* to_string(FusionMode m) noexcept;
const char* to_string(InversionNorm n) noexcept;
std::string to_string(const Pooling& p);

InversionFormula parse_inversion_formula(std::string_view s);
FusionMode parse_fusion_mode(std::string_view s);
InversionNorm parse_inversion_norm(std::string_view s);
Pooling parse_pooling(std::string_view s);

}  // namespace noisefuse
