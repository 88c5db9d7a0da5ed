#include "noisefuse/fusion.hpp"

#include <cmath>
#include <ostream>

namespace noisefuse {
namespace {

struct Dims {
  std::size_t c, h, w;
};

Dims dims_of(const Tensor32& t, const char* op) {
  if (t.rank() != 3) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": expected c x h x w, got " +
                                          shape_to_string(t.shape()));
  }
  return {t.extent(0), t.extent(1), t.extent(2)};
}

Tensor32 subtract(const Tensor32& a, const Tensor32& b) {
  Tensor32 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor32 guided(const Tensor32& eps, const Tensor32& uncond, double scale) {
  require_same_shape(eps, uncond, "guidance");
  Tensor32 out(eps.shape());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    out[i] = static_cast<float>(uncond[i] + scale * (static_cast<double>(eps[i]) - uncond[i]));
  }
  return out;
}

double grid_mean(const NormMap& m) {
  double s = 0.0;
  for (double v : m.values) s += v;
  return m.values.empty() ? 0.0 : s / static_cast<double>(m.values.size());
}

}  // namespace

void validate(const BranchSet& b) {
  if (b.eps.empty()) throw Error(Errc::invalid_argument, "branch set needs at least one branch");
  dims_of(b.eps_inv, "branch set");
  for (std::size_t i = 0; i < b.eps.size(); ++i) {
    require_same_shape(b.eps_inv, b.eps[i], "branch set");
  }
}

BranchSet branch_predictions(const Denoiser& d, const Tensor32& z, const StepInfo& step,
                             std::span<const PromptEmbedding> prompts,
                             const PromptEmbedding& inv_prompt,
                             const std::optional<Guidance>& guidance) {
  if (prompts.empty()) {
    throw Error(Errc::invalid_argument, "branch_predictions: no editing prompts");
  }
  std::optional<Tensor32> uncond;
  if (guidance && guidance->scale != 1.0) {
    uncond = d.predict(z, step, guidance->unconditional).eps;
  }
  const auto query = [&](const PromptEmbedding& p) {
    Tensor32 eps = d.predict(z, step, p).eps;
    require_same_shape(z, eps, "denoiser output");
    return uncond ? guided(eps, *uncond, guidance->scale) : eps;
  };

  BranchSet out;
  try {
    out.eps_inv = query(inv_prompt);
  } catch (const Error& e) {
    rethrow_with_context(e, "inversion branch");
  }
  out.eps.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    try {
      out.eps.push_back(query(prompts[i]));
    } catch (const Error& e) {
      rethrow_with_context(e, "branch " + std::to_string(i));
    }
    out.prompt_ids.push_back("prompt" + std::to_string(i));
  }
  return out;
}

NormMap residual_norm_map(const Tensor32& delta, std::size_t patch_size) {
  const auto [c, h, w] = dims_of(delta, "residual_norm_map");
  if (patch_size < 1) throw Error(Errc::invalid_argument, "patch_size must be at least 1");
  NormMap m;
  m.rows = (h + patch_size - 1) / patch_size;
  m.cols = (w + patch_size - 1) / patch_size;
  m.values.assign(m.rows * m.cols, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double v = delta[(ch * h + y) * w + x];
        m.at(y / patch_size, x / patch_size) += v * v;
      }
    }
  }
  for (double& v : m.values) v = std::sqrt(v);
  return m;
}

Tensor32 fuse_mean(const BranchSet& b) {
  validate(b);
  const double n = static_cast<double>(b.size());
  Tensor32 out(b.eps_inv.shape());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double s = 0.0;
    for (const auto& e : b.eps) s += e[k];
    out[k] = static_cast<float>(s / n);
  }
  return out;
}

AdaptiveFusion fuse_adaptive(const BranchSet& b, std::size_t patch_size) {
  validate(b);
  const auto [c, h, w] = dims_of(b.eps_inv, "fuse_adaptive");

  std::vector<Tensor32> residuals;
  residuals.reserve(b.size());
  for (const auto& e : b.eps) residuals.push_back(subtract(e, b.eps_inv));

  SelectionMap sel;
  NormMap best = residual_norm_map(residuals[0], patch_size);
  sel.rows = best.rows;
  sel.cols = best.cols;
  sel.values.assign(best.values.size(), 0);
  for (std::uint32_t i = 1; i < residuals.size(); ++i) {
    const NormMap m = residual_norm_map(residuals[i], patch_size);
    for (std::size_t p = 0; p < m.values.size(); ++p) {
      if (m.values[p] > best.values[p]) {
        best.values[p] = m.values[p];
        sel.values[p] = i;
      }
    }
  }

  AdaptiveFusion out{Tensor32(b.eps_inv.shape()), std::move(sel), Tensor32(b.eps_inv.shape())};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint32_t i = out.selection.at(y / patch_size, x / patch_size);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t k = (ch * h + y) * w + x;
        out.residual[k] = residuals[i][k];
        out.fused[k] = b.eps[i][k];
      }
    }
  }
  return out;
}

void record_diagnostics(const BranchSet& b, const Tensor32& fused, const SelectionMap* sel,
                        FusionTrace& trace, std::size_t step) {
  validate(b);
  require_same_shape(b.eps_inv, fused, "record_diagnostics");
  FusionTrace::Record r;
  r.step = step;
  const std::size_t n = b.size();
  for (const auto& e : b.eps) {
    const Tensor32 delta = subtract(e, b.eps_inv);
    r.branch_mean_norm.push_back(grid_mean(residual_norm_map(delta, 1)));
    r.branch_global_norm.push_back(l2_norm(delta));
  }
  const Tensor32 fused_delta = subtract(fused, b.eps_inv);
  r.fused_mean_norm = grid_mean(residual_norm_map(fused_delta, 1));
  r.fused_global_norm = l2_norm(fused_delta);

  r.selected_fraction.assign(n, 0.0);
  if (sel == nullptr) {
    for (double& f : r.selected_fraction) f = 1.0 / static_cast<double>(n);
  } else {
    for (std::uint32_t i : sel->values) {
      if (i >= n) throw Error(Errc::out_of_range, "selection map names a missing branch");
      r.selected_fraction[i] += 1.0;
    }
    for (double& f : r.selected_fraction) f /= static_cast<double>(sel->values.size());
  }
  trace.records.push_back(std::move(r));
}

void FusionTrace::write(std::ostream& out) const {
  const auto old_precision = out.precision(9);
  out << "# step branch mean_residual_norm global_norm selected_fraction\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.branch_mean_norm.size(); ++i) {
      out << r.step << ' ' << i << ' ' << r.branch_mean_norm[i] << ' '
          << r.branch_global_norm[i] << ' ' << r.selected_fraction[i] << '\n';
    }
    out << r.step << " fused " << r.fused_mean_norm << ' ' << r.fused_global_norm << " 1\n";
  }
  out.precision(old_precision);
}

}  // namespace noisefuse
