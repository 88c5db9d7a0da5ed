#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisefuse/bridge.hpp"
#include "noisefuse/denoiser.hpp"
#include "noisefuse/tensor.hpp"

namespace noisefuse {

/// Noise predictions for one latent: the inversion prompt's and one per
/// editing prompt. All tensors are c x h x w and share one shape.
struct BranchSet {
  Tensor32 eps_inv;
  std::vector<Tensor32> eps;
  std::vector<std::string> prompt_ids;

  std::size_t size() const noexcept { return eps.size(); }
};

/// Throws unless N >= 1 and every tensor is rank 3 with one common shape.
void validate(const BranchSet& b);

/// Classifier-free guidance applied to every branch before fusion:
/// eps <- eps_uncond + scale (eps - eps_uncond).
struct Guidance {
  PromptEmbedding unconditional;
  double scale = 1.0;
};

BranchSet branch_predictions(const Denoiser& d, const Tensor32& z, const StepInfo& step,
                             std::span<const PromptEmbedding> prompts,
                             const PromptEmbedding& inv_prompt,
                             const std::optional<Guidance>& guidance = std::nullopt);

/// Row-major 2-D grid of values over the patch grid.
template <class T>
struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  T& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

using NormMap = PatchGrid<double>;
/// Winning branch per patch; ceil(h / patch) x ceil(w / patch).
using SelectionMap = PatchGrid<std::uint32_t>;

/// Channel-wise l2 norm per patch: the root of the summed squares over all
/// channels and every location of the (possibly partial) patch block.
NormMap residual_norm_map(const Tensor32& delta, std::size_t patch_size);

/// Elementwise mean of the editing branches (eps_inv is not included).
Tensor32 fuse_mean(const BranchSet& b);

struct AdaptiveFusion {
  Tensor32 fused;
  SelectionMap selection;
  /// The residual actually carried at each location: eps[i*] - eps_inv.
  Tensor32 residual;
};

/// For every patch keep the residual with the largest norm (lowest branch
/// index on ties) and add it back onto eps_inv. eps_inv + (eps[i*] - eps_inv)
/// is eps[i*] exactly, so the winning branch's values are copied bit for bit
/// rather than re-rounded through a float subtraction and addition.
AdaptiveFusion fuse_adaptive(const BranchSet& b, std::size_t patch_size);

/// Per-step magnitudes of the branches and the fused prediction.
struct FusionTrace {
  struct Record {
    std::size_t step = 0;
    std::vector<double> branch_mean_norm;    // mean of per-location residual norms
    std::vector<double> branch_global_norm;  // Frobenius norm of the residual
    double fused_mean_norm = 0.0;
    double fused_global_norm = 0.0;
    std::vector<double> selected_fraction;   // sums to 1
  };
  std::vector<Record> records;

  /// One line per branch and one `fused` line per step:
  /// `step branch mean_residual_norm global_norm selected_fraction`.
  void write(std::ostream& out) const;
};

/// Appends one record. `sel` may be null for averaged fusion, in which case
/// every branch is credited 1 / N.
void record_diagnostics(const BranchSet& b, const Tensor32& fused, const SelectionMap* sel,
                        FusionTrace& trace, std::size_t step);

}  // namespace noisefuse
