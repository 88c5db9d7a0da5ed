#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "noisefuse/config.hpp"
#include "noisefuse/tensor.hpp"

namespace noisefuse {

/// A single vector in either conditioning space. Stored in double because
/// every bridge computation runs in 64-bit.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);
  /// Accepts rank-1 tensors, or rank-2 tensors with a single row.
  static EmbeddingVector from_tensor(const Tensor64& t);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double norm() const noexcept;

  Tensor64 to_tensor() const;

 private:
  std::vector<double> values_;
};

/// Token sequence in the diffusion model's conditioning space, L x d.
/// Row 0 and row L - 1 are the special start/end tokens.
class PromptEmbedding {
 public:
  PromptEmbedding() = default;
  explicit PromptEmbedding(Tensor32 tokens);

  const Tensor32& tokens() const noexcept { return tokens_; }
  std::size_t length() const noexcept { return tokens_.extent(0); }
  std::size_t dim() const noexcept { return tokens_.extent(1); }
  std::span<const float> row(std::size_t i) const;
  std::size_t first_index() const noexcept { return 0; }
  std::size_t last_index() const noexcept { return length() - 1; }

 private:
  Tensor32 tokens_{Shape{1, 1}};
};

/// Bias-free linear map from the diffusion conditioning space (d_sd) to the
/// aligned multi-modal space (d_clip); stored as a d_clip x d_sd matrix.
class LinearMap {
 public:
  explicit LinearMap(Tensor64 matrix);

  const Tensor64& matrix() const noexcept { return matrix_; }
  std::size_t clip_dim() const noexcept { return matrix_.extent(0); }
  std::size_t sd_dim() const noexcept { return matrix_.extent(1); }

 private:
  Tensor64 matrix_;
};

EmbeddingVector pool_embedding(const PromptEmbedding& seq, const Pooling& strategy);

/// M c / |M c|. Throws Errc::zero_norm when the projection vanishes.
EmbeddingVector project_to_clip(const EmbeddingVector& c_pooled, const LinearMap& map);

/// x = (M^T M + lambda I)^-1 M^T rhs, solved in double through a Cholesky
/// factorization of the regularized normal matrix.
EmbeddingVector solve_tikhonov(const LinearMap& map, const EmbeddingVector& rhs,
                               double lambda);

/// Pulls an aligned-space vector back into the diffusion conditioning space:
/// solve_tikhonov(map, inv_norm * c_audio, lambda).
EmbeddingVector invert_to_sd(const EmbeddingVector& c_audio, const LinearMap& map,
                             double inv_norm, double lambda);

/// [inv row 0] ++ replication x c_tilde ++ [inv row L-1].
PromptEmbedding assemble_prompt(const EmbeddingVector& c_tilde,
                                const PromptEmbedding& inv_seq, std::size_t replication);

/// s * c_audio for s > 0.
EmbeddingVector scale_magnitude(const EmbeddingVector& c_audio, double s);

/// Norm of the inversion prompt that rescales the audio vector.
double inversion_norm(const PromptEmbedding& inv_seq, const Pooling& pooling,
                      InversionNorm kind);

/// Replication count used when the config leaves it at 0: enough copies to
/// match the inversion prompt length, and at least one.
std::size_t default_replication(const PromptEmbedding& inv_seq) noexcept;

/// Everything between an audio embedding and a ready-to-use prompt:
/// scale, pull back with the configured norm and lambda, then assemble.
PromptEmbedding bridge_audio_prompt(const EmbeddingVector& c_audio, double scale,
                                    const LinearMap& map, const PromptEmbedding& inv_seq,
                                    const PipelineConfig& config);

}  // namespace noisefuse
