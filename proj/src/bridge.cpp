#include "noisefuse/bridge.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace noisefuse {
namespace {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMatrix> as_matrix(const Tensor64& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.extent(0)),
          static_cast<Eigen::Index>(m.extent(1))};
}

Eigen::Map<const Eigen::VectorXd> as_vector(const EmbeddingVector& v) {
  return {v.values().data(), static_cast<Eigen::Index>(v.dim())};
}

void require_dim(std::size_t got, std::size_t want, const char* op, const char* what) {
  if (got != want) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": " + what + " has dimension " +
                                          std::to_string(got) + ", expected " +
                                          std::to_string(want));
  }
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(Errc::non_finite, "embedding has a non-finite entry");
  }
}

EmbeddingVector EmbeddingVector::from_tensor(const Tensor64& t) {
  const bool row = t.rank() == 2 && t.extent(0) == 1;
  if (t.rank() != 1 && !row) {
    throw Error(Errc::shape_mismatch,
                "embedding vector must be rank 1, got shape " + shape_to_string(t.shape()));
  }
  return EmbeddingVector(std::vector<double>(t.data().begin(), t.data().end()));
}

double EmbeddingVector::norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

Tensor64 EmbeddingVector::to_tensor() const { return Tensor64(Shape{values_.size()}, values_); }

PromptEmbedding::PromptEmbedding(Tensor32 tokens) : tokens_(std::move(tokens)) {
  if (tokens_.rank() != 2 || tokens_.extent(0) < 1 || tokens_.extent(1) < 1) {
    throw Error(Errc::shape_mismatch, "prompt embedding must be L x d with L, d >= 1, got " +
                                          shape_to_string(tokens_.shape()));
  }
  if (!tokens_.all_finite()) {
    throw Error(Errc::non_finite, "prompt embedding has a non-finite entry");
  }
}

std::span<const float> PromptEmbedding::row(std::size_t i) const {
  if (i >= length()) {
    throw Error(Errc::out_of_range, "prompt row " + std::to_string(i) + " out of range");
  }
  return tokens_.data().subspan(i * dim(), dim());
}

LinearMap::LinearMap(Tensor64 matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rank() != 2 || matrix_.extent(0) < 1 || matrix_.extent(1) < 1) {
    throw Error(Errc::shape_mismatch, "linear map must be a non-empty matrix, got " +
                                          shape_to_string(matrix_.shape()));
  }
  if (!matrix_.all_finite()) throw Error(Errc::non_finite, "linear map has a non-finite entry");
}

EmbeddingVector pool_embedding(const PromptEmbedding& seq, const Pooling& strategy) {
  const std::size_t d = seq.dim();
  std::vector<double> out(d, 0.0);
  switch (strategy.kind) {
    case PoolingKind::last_token:
    case PoolingKind::index: {
      const std::size_t k =
          strategy.kind == PoolingKind::last_token ? seq.last_index() : strategy.index;
      if (k >= seq.length()) {
        throw Error(Errc::out_of_range, "pool_embedding: index " + std::to_string(k) +
                                            " out of range for length " +
                                            std::to_string(seq.length()));
      }
      const auto r = seq.row(k);
      for (std::size_t j = 0; j < d; ++j) out[j] = r[j];
      break;
    }
    case PoolingKind::mean: {
      for (std::size_t i = 0; i < seq.length(); ++i) {
        const auto r = seq.row(i);
        for (std::size_t j = 0; j < d; ++j) out[j] += r[j];
      }
      for (double& v : out) v /= static_cast<double>(seq.length());
      break;
    }
  }
  return EmbeddingVector(std::move(out));
}

EmbeddingVector project_to_clip(const EmbeddingVector& c_pooled, const LinearMap& map) {
  require_dim(c_pooled.dim(), map.sd_dim(), "project_to_clip", "pooled embedding");
  const Eigen::VectorXd y = as_matrix(map.matrix()) * as_vector(c_pooled);
  const double n = y.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::zero_norm, "project_to_clip: projection has zero norm");
  }
  const Eigen::VectorXd unit = y / n;
  return EmbeddingVector(std::vector<double>(unit.data(), unit.data() + unit.size()));
}

EmbeddingVector solve_tikhonov(const LinearMap& map, const EmbeddingVector& rhs,
                               double lambda) {
  require_dim(rhs.dim(), map.clip_dim(), "solve_tikhonov", "right-hand side");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(Errc::invalid_argument, "solve_tikhonov: lambda must be positive");
  }
  const auto m = as_matrix(map.matrix());
  Eigen::MatrixXd normal = m.transpose() * m;
  normal.diagonal().array() += lambda;
  const Eigen::VectorXd mt_rhs = m.transpose() * as_vector(rhs);

  const Eigen::LLT<Eigen::MatrixXd> llt(normal);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (!(rcond > std::numeric_limits<double>::epsilon())) {
    std::ostringstream msg;
    msg << "solve_tikhonov: regularized normal matrix is numerically singular"
        << " (condition estimate " << (rcond > 0.0 ? 1.0 / rcond : INFINITY) << ")";
    throw Error(Errc::singular, msg.str());
  }
  const Eigen::VectorXd x = llt.solve(mt_rhs);
  return EmbeddingVector(std::vector<double>(x.data(), x.data() + x.size()));
}

EmbeddingVector invert_to_sd(const EmbeddingVector& c_audio, const LinearMap& map,
                             double inv_norm, double lambda) {
  if (!(inv_norm > 0.0) || !std::isfinite(inv_norm)) {
    throw Error(Errc::invalid_argument, "invert_to_sd: inv_norm must be positive");
  }
  std::vector<double> scaled(c_audio.values().begin(), c_audio.values().end());
  for (double& v : scaled) v *= inv_norm;
  return solve_tikhonov(map, EmbeddingVector(std::move(scaled)), lambda);
}

PromptEmbedding assemble_prompt(const EmbeddingVector& c_tilde, const PromptEmbedding& inv_seq,
                                std::size_t replication) {
  require_dim(c_tilde.dim(), inv_seq.dim(), "assemble_prompt", "inverted feature");
  if (replication < 1) {
    throw Error(Errc::invalid_argument, "assemble_prompt: replication must be at least 1");
  }
  const std::size_t d = inv_seq.dim();
  std::vector<float> rows;
  rows.reserve((replication + 2) * d);
  const auto first = inv_seq.row(inv_seq.first_index());
  rows.insert(rows.end(), first.begin(), first.end());
  for (std::size_t r = 0; r < replication; ++r) {
    for (double v : c_tilde.values()) rows.push_back(static_cast<float>(v));
  }
  const auto last = inv_seq.row(inv_seq.last_index());
  rows.insert(rows.end(), last.begin(), last.end());
  return PromptEmbedding(Tensor32(Shape{replication + 2, d}, std::move(rows)));
}

EmbeddingVector scale_magnitude(const EmbeddingVector& c_audio, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw Error(Errc::invalid_argument, "scale_magnitude: scale must be positive");
  }
  std::vector<double> out(c_audio.values().begin(), c_audio.values().end());
  for (double& v : out) v *= s;
  return EmbeddingVector(std::move(out));
}

double inversion_norm(const PromptEmbedding& inv_seq, const Pooling& pooling,
                      InversionNorm kind) {
  if (kind == InversionNorm::pooled) return pool_embedding(inv_seq, pooling).norm();
  return l2_norm(inv_seq.tokens());
}

std::size_t default_replication(const PromptEmbedding& inv_seq) noexcept {
  return inv_seq.length() >= 3 ? inv_seq.length() - 2 : 1;
}

PromptEmbedding bridge_audio_prompt(const EmbeddingVector& c_audio, double scale,
                                    const LinearMap& map, const PromptEmbedding& inv_seq,
                                    const PipelineConfig& config) {
  const double norm = inversion_norm(inv_seq, config.pooling, config.inversion_norm);
  const auto c_tilde =
      invert_to_sd(scale_magnitude(c_audio, scale), map, norm, config.lambda);
  const std::size_t replication =
      config.replication_count ? config.replication_count : default_replication(inv_seq);
  return assemble_prompt(c_tilde, inv_seq, replication);
}

}  // namespace noisefuse
