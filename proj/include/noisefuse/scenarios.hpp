#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "noisefuse/bridge.hpp"
#include "noisefuse/config.hpp"
#include "noisefuse/tensor.hpp"

namespace noisefuse {

// Fixture synthesis. Everything random in the engine goes through these,
// seeded from PipelineConfig::seed; the diffusion math itself is
// deterministic.

using Rng = std::mt19937_64;

Tensor32 random_normal(const Shape& shape, Rng& rng);
PromptEmbedding random_prompt(std::size_t length, std::size_t dim, Rng& rng);
EmbeddingVector random_unit_vector(std::size_t dim, Rng& rng);

/// U diag(s) V^T with Haar-like orthogonal U, V and singular values drawn
/// uniformly from [1, max_condition], so cond(M) <= max_condition.
LinearMap random_well_conditioned_map(std::size_t clip_dim, std::size_t sd_dim,
                                      double max_condition, Rng& rng);

/// Axis-aligned spatial block [y0, y1) x [x0, x1), all channels.
struct Region {
  std::size_t y0, y1, x0, x1;
};

/// Euclidean distance between a and b restricted to `r` (a, b are c x h x w).
double region_distance(const Tensor32& a, const Tensor32& b, const Region& r);

/// Copy of `base` with `r` overwritten from `source`.
Tensor32 paste_region(const Tensor32& base, const Tensor32& source, const Region& r);

/// Outcome of a named demo: pass/fail, printable metrics, and artifacts.
struct ScenarioReport {
  std::string name;
  bool passed = false;
  std::vector<std::pair<std::string, std::string>> metrics;
  std::vector<std::pair<std::string, Tensor32>> tensors;  // file stem -> tensor
  std::vector<std::pair<std::string, std::string>> texts; // file name -> content

  void metric(std::string key, double value);
  void metric(std::string key, std::string value);
  std::string render() const;
  /// Writes report.txt, <stem>.nbt for every tensor and every text file.
  void write(const std::filesystem::path& dir) const;
};

const std::vector<std::string>& scenario_names();

/// Runs `roundtrip`, `disjoint`, `magnitude` or `ablation`.
/// `scale` multiplies the audio magnitudes used by the bridged scenarios.
ScenarioReport run_scenario(const std::string& name, const PipelineConfig& config,
                            double scale = 1.0);

ScenarioReport roundtrip_scenario(const PipelineConfig& config);
ScenarioReport disjoint_scenario(const PipelineConfig& config);
ScenarioReport magnitude_scenario(const PipelineConfig& config, double scale = 1.0);
ScenarioReport ablation_scenario(const PipelineConfig& config, double scale = 1.0);

}  // namespace noisefuse
