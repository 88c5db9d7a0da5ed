#include "noisefuse/request.hpp"

#include <charconv>
#include <sstream>
#include <string>

#include "noisefuse/error.hpp"

namespace noisefuse {
namespace {

std::vector<std::string> split_words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::filesystem::path resolve(std::string_view value, const std::filesystem::path& base) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) {
    throw Error(Errc::io, "manifest references missing file " + p.string());
  }
  return p;
}

double parse_scale(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw Error(Errc::type_mismatch, "manifest: bad scale '" + std::string(s) + "'");
  }
  return v;
}

PromptSource parse_prompt(std::string_view value, const std::filesystem::path& base) {
  const auto words = split_words(value);
  if (words.size() < 2 || (words[0] != "text" && words[0] != "audio")) {
    throw Error(Errc::type_mismatch,
                "manifest: prompt must read 'text PATH ...' or 'audio PATH ...'");
  }
  PromptSource p;
  p.kind = words[0] == "text" ? PromptSource::Kind::text : PromptSource::Kind::audio;
  p.path = resolve(words[1], base);
  for (std::size_t i = 2; i < words.size(); ++i) {
    const std::string_view w = words[i];
    if (w.starts_with("target=")) {
      p.target = resolve(w.substr(7), base);
    } else if (w.starts_with("scale=") && p.kind == PromptSource::Kind::audio) {
      p.scale = parse_scale(w.substr(6));
    } else {
      throw Error(Errc::unknown_key, "manifest: unexpected prompt option '" + std::string(w) + "'");
    }
  }
  return p;
}

Region parse_region(std::string_view value) {
  const auto words = split_words(value);
  std::size_t v[4] = {};
  bool ok = words.size() == 4;
  for (std::size_t i = 0; ok && i < 4; ++i) {
    const auto& w = words[i];
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v[i]);
    ok = ec == std::errc{} && ptr == w.data() + w.size();
  }
  if (!ok || v[0] >= v[1] || v[2] >= v[3]) {
    throw Error(Errc::type_mismatch, "manifest: region must be 'Y0 Y1 X0 X1' with Y0<Y1, X0<X1");
  }
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

EditRequest parse_edit_request(std::string_view text, const std::filesystem::path& base_dir) {
  EditRequest r;
  bool have_latent = false;
  bool have_inv = false;
  const auto set_once = [](std::optional<std::filesystem::path>& slot, const std::string& key,
                           std::filesystem::path p) {
    if (slot) throw Error(Errc::duplicate_key, "manifest: key '" + key + "' given twice");
    slot = std::move(p);
  };
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "latent" || key == "inversion_prompt") {
      bool& seen = key == "latent" ? have_latent : have_inv;
      if (seen) throw Error(Errc::duplicate_key, "manifest: key '" + key + "' given twice");
      seen = true;
      (key == "latent" ? r.latent : r.inversion_prompt) = resolve(value, base_dir);
    } else if (key == "prompt") {
      r.prompts.push_back(parse_prompt(value, base_dir));
    } else if (key == "map") {
      set_once(r.map, key, resolve(value, base_dir));
    } else if (key == "inversion_target") {
      set_once(r.inversion_target, key, resolve(value, base_dir));
    } else if (key == "targets") {
      set_once(r.targets, key, resolve(value, base_dir));
    } else if (key == "eps") {
      set_once(r.eps, key, resolve(value, base_dir));
    } else if (key == "unconditional") {
      set_once(r.unconditional, key, resolve(value, base_dir));
    } else if (key == "unconditional_target") {
      set_once(r.unconditional_target, key, resolve(value, base_dir));
    } else if (key == "config") {
      set_once(r.config, key, resolve(value, base_dir));
    } else if (key == "reference") {
      set_once(r.reference, key, resolve(value, base_dir));
    } else if (key == "region") {
      r.regions.push_back(parse_region(value));
    } else {
      throw Error(Errc::unknown_key, "manifest: unknown key '" + key + "'");
    }
  }
  if (!have_latent) throw Error(Errc::missing_key, "manifest: 'latent' is required");
  if (!have_inv) throw Error(Errc::missing_key, "manifest: 'inversion_prompt' is required");
  if (r.prompts.empty()) throw Error(Errc::missing_key, "manifest: at least one 'prompt'");
  for (const auto& p : r.prompts) {
    if (p.kind == PromptSource::Kind::audio && !r.map) {
      throw Error(Errc::missing_key, "manifest: audio prompts need 'map'");
    }
  }
  if (!r.eps && !r.inversion_target && !r.targets) {
    throw Error(Errc::missing_key,
                "manifest: give 'eps' (constant denoiser) or attractor targets");
  }
  return r;
}

}  // namespace noisefuse
