#include "noisefuse/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "noisefuse/error.hpp"

namespace noisefuse {
namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

[[noreturn]] void type_error(std::string_view key, std::string_view value,
                             const char* expected) {
  throw Error(Errc::type_mismatch, "config key '" + std::string(key) +
                                       "': expected " + expected + ", got '" +
                                       std::string(value) + "'");
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
    type_error(key, value, "a non-negative integer");
  }
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
    type_error(key, value, "an unsigned integer");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty() ||
      !std::isfinite(out)) {
    type_error(key, value, "a finite number");
  }
  return out;
}

template <class Enum, class Parse>
Enum parse_enum(std::string_view key, std::string_view value, Parse parse) {
  try {
    return parse(value);
  } catch (const Error&) {
    type_error(key, value, "one of the documented values");
  }
}

[[noreturn]] void violation(const std::string& what) {
  throw Error(Errc::constraint_violation, "config: " + what);
}

}  // namespace

const char* to_string(InversionFormula f) noexcept {
  return f == InversionFormula::paper_exact_inverse ? "paper-exact-inverse"
                                                    : "standard-ddim";
}

const char* to_string(FusionMode m) noexcept {
  switch (m) {
    case FusionMode::adaptive: return "adaptive";
    case FusionMode::mean: return "mean";
    case FusionMode::single: return "single";
  }
  return "adaptive";
}

const char* to_string(InversionNorm n) noexcept {
  return n == InversionNorm::pooled ? "pooled" : "sequence";
}

std::string to_string(const Pooling& p) {
  switch (p.kind) {
    case PoolingKind::last_token: return "last-token";
    case PoolingKind::mean: return "mean";
    case PoolingKind::index: return "index:" + std::to_string(p.index);
  }
  return "last-token";
}

InversionFormula parse_inversion_formula(std::string_view s) {
  if (s == "paper-exact-inverse" || s == "paper") return InversionFormula::paper_exact_inverse;
  if (s == "standard-ddim" || s == "standard") return InversionFormula::standard_ddim;
  throw Error(Errc::invalid_argument, "unknown inversion formula '" + std::string(s) + "'");
}

FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "adaptive") return FusionMode::adaptive;
  if (s == "mean") return FusionMode::mean;
  if (s == "single") return FusionMode::single;
  throw Error(Errc::invalid_argument, "unknown fusion mode '" + std::string(s) + "'");
}

InversionNorm parse_inversion_norm(std::string_view s) {
  if (s == "pooled") return InversionNorm::pooled;
  if (s == "sequence") return InversionNorm::sequence;
  throw Error(Errc::invalid_argument, "unknown inversion norm '" + std::string(s) + "'");
}

Pooling parse_pooling(std::string_view s) {
  if (s == "last-token") return {PoolingKind::last_token, 0};
  if (s == "mean") return {PoolingKind::mean, 0};
  if (s.starts_with("index:")) {
    const auto digits = s.substr(6);
    std::size_t k = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec == std::errc{} && ptr == digits.data() + digits.size() && !digits.empty()) {
      return {PoolingKind::index, k};
    }
  }
  throw Error(Errc::invalid_argument, "unknown pooling '" + std::string(s) + "'");
}

std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> entries;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::type_mismatch,
                  "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(Errc::type_mismatch, "line " + std::to_string(line_no) + ": empty key");
    }
    entries.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return entries;
}

void apply_config_entry(PipelineConfig& c, std::string_view key, std::string_view value) {
  if (key == "num_train_steps") {
    c.num_train_steps = parse_count(key, value);
  } else if (key == "num_ddim_steps") {
    c.num_ddim_steps = parse_count(key, value);
  } else if (key == "beta_start") {
    c.beta_start = parse_real(key, value);
  } else if (key == "beta_end") {
    c.beta_end = parse_real(key, value);
  } else if (key == "lambda") {
    c.lambda = parse_real(key, value);
  } else if (key == "inversion_formula") {
    c.inversion_formula = parse_enum<InversionFormula>(key, value, parse_inversion_formula);
  } else if (key == "patch_size") {
    c.patch_size = parse_count(key, value);
  } else if (key == "replication_count") {
    c.replication_count = parse_count(key, value);
  } else if (key == "guidance_scale") {
    c.guidance_scale = parse_real(key, value);
  } else if (key == "fusion_mode") {
    c.fusion_mode = parse_enum<FusionMode>(key, value, parse_fusion_mode);
  } else if (key == "blend") {
    c.blend = parse_real(key, value);
  } else if (key == "pooling") {
    c.pooling = parse_enum<Pooling>(key, value, parse_pooling);
  } else if (key == "inversion_norm") {
    c.inversion_norm = parse_enum<InversionNorm>(key, value, parse_inversion_norm);
  } else if (key == "seed") {
    c.seed = parse_u64(key, value);
  } else {
    throw Error(Errc::unknown_key, "unknown config key '" + std::string(key) + "'");
  }
}

void validate(const PipelineConfig& c) {
  if (c.num_train_steps == 0) violation("num_train_steps must be positive");
  if (c.num_ddim_steps == 0) violation("num_ddim_steps must be positive");
  if (c.num_ddim_steps > c.num_train_steps) {
    violation("num_ddim_steps must not exceed num_train_steps");
  }
  if (!(c.beta_start > 0.0 && c.beta_start <= c.beta_end && c.beta_end < 1.0)) {
    violation("need 0 < beta_start <= beta_end < 1");
  }
  if (!(c.lambda > 0.0)) violation("lambda must be positive");
  if (c.patch_size < 1) violation("patch_size must be at least 1");
  if (!(c.blend >= 0.0 && c.blend <= 1.0)) violation("blend must lie in [0, 1]");
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig c;
  std::vector<std::string> seen;
  for (const auto& [key, value] : parse_key_values(text)) {
    for (const auto& s : seen) {
      if (s == key) {
        throw Error(Errc::duplicate_key, "config key '" + key + "' given twice");
      }
    }
    seen.push_back(key);
    apply_config_entry(c, key, value);
  }
  validate(c);
  return c;
}

std::string format_config(const PipelineConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "num_train_steps = " << c.num_train_steps << '\n'
      << "num_ddim_steps = " << c.num_ddim_steps << '\n'
      << "beta_start = " << c.beta_start << '\n'
      << "beta_end = " << c.beta_end << '\n'
      << "lambda = " << c.lambda << '\n'
      << "inversion_formula = " << to_string(c.inversion_formula) << '\n'
      << "patch_size = " << c.patch_size << '\n'
      << "replication_count = " << c.replication_count << '\n'
      << "guidance_scale = " << c.guidance_scale << '\n'
      << "fusion_mode = " << to_string(c.fusion_mode) << '\n'
      << "blend = " << c.blend << '\n'
      << "pooling = " << to_string(c.pooling) << '\n'
      << "inversion_norm = " << to_string(c.inversion_norm) << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

}  // namespace noisefuse
