#pragma once

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "noisefuse/config.hpp"
#include "noisefuse/scenarios.hpp"

namespace noisefuse {

/// One editing prompt of an edit manifest.
///
///   prompt = text  PATH [target=PATH]
///   prompt = audio PATH [scale=S] [target=PATH]
///
/// Text prompts are token-embedding matrices used as-is; audio prompts are
/// aligned-space vectors bridged through the manifest's `map`.
struct PromptSource {
  enum class Kind { text, audio };
  Kind kind = Kind::text;
  std::filesystem::path path;
  std::optional<double> scale;
  std::optional<std::filesystem::path> target;
};

/// Parsed edit manifest. Keys:
///
///   latent = PATH                  clean latent to invert (required)
///   inversion_prompt = PATH        L x d token embedding (required)
///   prompt = ...                   repeatable, at least one
///   map = PATH                     d_clip x d_sd matrix, needed by audio prompts
///   inversion_target = PATH        attractor target of the inversion prompt
///   targets = PATH                 extra `key = path` target list
///   eps = PATH                     use a constant denoiser predicting this tensor
///   unconditional = PATH           prompt for classifier-free guidance
///   unconditional_target = PATH
///   config = PATH                  pipeline config document
///   reference = PATH               tensor the report measures distances to
///   region = Y0 Y1 X0 X1           repeatable; report distances per region
///
/// Relative paths resolve against the manifest's directory; every referenced
/// file must exist.
struct EditRequest {
  std::filesystem::path latent;
  std::filesystem::path inversion_prompt;
  std::vector<PromptSource> prompts;
  std::optional<std::filesystem::path> map;
  std::optional<std::filesystem::path> inversion_target;
  std::optional<std::filesystem::path> targets;
  std::optional<std::filesystem::path> eps;
  std::optional<std::filesystem::path> unconditional;
  std::optional<std::filesystem::path> unconditional_target;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> reference;
  std::vector<Region> regions;
};

EditRequest parse_edit_request(std::string_view text, const std::filesystem::path& base_dir);

}  // namespace noisefuse
