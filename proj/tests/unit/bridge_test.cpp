#include <doctest.h>

#include <cmath>

#include "noisefuse/bridge.hpp"
#include "noisefuse/scenarios.hpp"
#include "oracles.hpp"

using namespace noisefuse;

namespace {

LinearMap diag_map(std::vector<double> d) {
  const std::size_t n = d.size();
  Tensor64 m(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = d[i];
  return LinearMap(std::move(m));
}

PromptEmbedding prompt(std::size_t rows, std::size_t cols, std::vector<float> v) {
  return PromptEmbedding(Tensor32(Shape{rows, cols}, std::move(v)));
}

oracle::Matrix to_oracle(const LinearMap& map) {
  const auto& m = map.matrix();
  return {m.extent(0), m.extent(1), std::vector<double>(m.data().begin(), m.data().end())};
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
  return dot / (a.norm() * b.norm());
}

}  // namespace

TEST_CASE("pooling strategies") {
  const PromptEmbedding p = prompt(2, 2, {1, 2, 3, 4});
  auto last = pool_embedding(p, {PoolingKind::last_token, 0});
  CHECK(last[0] == 3.0);
  CHECK(last[1] == 4.0);
  auto mean = pool_embedding(p, {PoolingKind::mean, 0});
  CHECK(mean[0] == 2.0);
  CHECK(mean[1] == 3.0);
  auto first = pool_embedding(p, {PoolingKind::index, 0});
  CHECK(first[1] == 2.0);
  CHECK(oracle::error_code([&] { pool_embedding(p, {PoolingKind::index, 2}); }) ==
        Errc::out_of_range);

  const PromptEmbedding single = prompt(1, 2, {5, 5});
  for (PoolingKind k : {PoolingKind::last_token, PoolingKind::mean, PoolingKind::index}) {
    const auto v = pool_embedding(single, {k, 0});
    CHECK(v[0] == 5.0);
    CHECK(v[1] == 5.0);
  }
}

TEST_CASE("projection normalizes") {
  const auto v = project_to_clip(EmbeddingVector({3, 4}), diag_map({1, 1}));
  CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(oracle::error_code([] { project_to_clip(EmbeddingVector({0, 0}), diag_map({1, 1})); }) ==
        Errc::zero_norm);
  CHECK(oracle::error_code([] { project_to_clip(EmbeddingVector({1, 2, 3}), diag_map({1, 1})); }) ==
        Errc::shape_mismatch);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const LinearMap m = random_well_conditioned_map(24, 16, 10.0, rng);
    const auto u = project_to_clip(random_unit_vector(16, rng), m);
    CHECK(std::abs(u.norm() - 1.0) <= 1e-6);
  }
}

TEST_CASE("tikhonov diagonal closed forms") {
  const double lambda = 1e-5;
  const auto a = solve_tikhonov(diag_map({1, 1}), EmbeddingVector({2, 0}), lambda);
  CHECK(std::abs(a[0] - 2.0 / (1.0 + lambda)) <= 1e-12);
  CHECK(std::abs(a[1]) <= 1e-12);
  const auto b = solve_tikhonov(diag_map({1, 2}), EmbeddingVector({0, 1}), lambda);
  CHECK(std::abs(b[0]) <= 1e-12);
  CHECK(std::abs(b[1] - 2.0 / (4.0 + lambda)) <= 1e-12);

  const auto c = invert_to_sd(EmbeddingVector({1, 0}), diag_map({1, 1}), 2.0, lambda);
  CHECK(std::abs(c[0] - 2.0 / (1.0 + lambda)) <= 1e-12);
  CHECK(std::abs(c[1]) <= 1e-12);
}

TEST_CASE("tikhonov matches explicit normal equations on rectangular maps") {
  Rng rng(17);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor64 m(Shape{4, 3});
    for (auto& v : m.data()) v = n01(rng);
    std::vector<double> rhs(4);
    for (auto& v : rhs) v = n01(rng);
    const LinearMap map(m);
    const auto x = solve_tikhonov(map, EmbeddingVector(rhs), 1e-5);
    const auto ref = oracle::normal_equations(to_oracle(map), rhs, 1e-5);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      err = std::max(err, std::abs(x[i] - ref[i]));
      scale = std::max(scale, std::abs(ref[i]));
    }
    CHECK(err <= 1e-8 * scale);
  }
}

TEST_CASE("tikhonov error cases") {
  using oracle::error_code;
  CHECK(error_code([] { solve_tikhonov(diag_map({1, 1}), EmbeddingVector({1, 1}), 0.0); }) ==
        Errc::invalid_argument);
  CHECK(error_code([] { solve_tikhonov(diag_map({1, 1}), EmbeddingVector({1}), 1e-5); }) ==
        Errc::shape_mismatch);
  CHECK(error_code([] { solve_tikhonov(diag_map({1e12, 0}), EmbeddingVector({1, 1}), 1e-5); }) ==
        Errc::singular);
  CHECK(error_code([] { invert_to_sd(EmbeddingVector({1, 0}), diag_map({1, 1}), 0.0, 1e-5); }) ==
        Errc::invalid_argument);
}

TEST_CASE("projecting the pulled-back vector recovers its direction") {
  Rng rng(23);
  double previous = 0.0;
  // deviation shrinks with lambda on a fixed map
  const LinearMap m = random_well_conditioned_map(32, 32, 10.0, rng);
  const EmbeddingVector c = random_unit_vector(32, rng);
  for (double lambda : {1e-1, 1e-3, 1e-5}) {
    const double dev = 1.0 - cosine(project_to_clip(invert_to_sd(c, m, 1.0, lambda), m), c);
    CAPTURE(lambda);
    if (previous > 0.0) CHECK(dev < previous);
    previous = dev;
  }
  CHECK(previous < 1e-9);
}

TEST_CASE("prompt assembly") {
  const PromptEmbedding inv = prompt(2, 2, {1, 1, 9, 9});
  const PromptEmbedding one = assemble_prompt(EmbeddingVector({4, 5}), inv, 1);
  CHECK(bitwise_equal(one.tokens(), Tensor32(Shape{3, 2}, {1, 1, 4, 5, 9, 9})));

  const PromptEmbedding three = assemble_prompt(EmbeddingVector({4, 5}), inv, 3);
  CHECK(three.length() == 5);
  for (std::size_t r = 1; r <= 3; ++r) {
    CHECK(three.row(r)[0] == 4.0f);
    CHECK(three.row(r)[1] == 5.0f);
  }

  Rng rng(3);
  const PromptEmbedding seven = random_prompt(7, 4, rng);
  CHECK(default_replication(seven) == 5);
  CHECK(assemble_prompt(EmbeddingVector({1, 2, 3, 4}), seven, default_replication(seven))
            .length() == seven.length());
  CHECK(default_replication(prompt(1, 1, {1})) == 1);
  CHECK(oracle::error_code([&] { assemble_prompt(EmbeddingVector({1}), inv, 1); }) ==
        Errc::shape_mismatch);
  CHECK(oracle::error_code([&] { assemble_prompt(EmbeddingVector({1, 2}), inv, 0); }) ==
        Errc::invalid_argument);
}

TEST_CASE("magnitude scaling") {
  const EmbeddingVector v({1, 0});
  CHECK(scale_magnitude(v, 1.0)[0] == 1.0);
  CHECK(scale_magnitude(v, 2.0)[0] == 2.0);
  CHECK(scale_magnitude(v, 2.0)[1] == 0.0);
  CHECK(oracle::error_code([&] { scale_magnitude(v, 0.0); }) == Errc::invalid_argument);
  CHECK(oracle::error_code([&] { scale_magnitude(v, -1.0); }) == Errc::invalid_argument);
}

TEST_CASE("bridged prompt is linear in the magnitude") {
  Rng rng(29);
  const LinearMap m = random_well_conditioned_map(8, 8, 5.0, rng);
  const PromptEmbedding inv = random_prompt(5, 8, rng);
  const EmbeddingVector c = random_unit_vector(8, rng);
  const PipelineConfig config;
  const PromptEmbedding p1 = bridge_audio_prompt(c, 1.0, m, inv, config);
  const PromptEmbedding p3 = bridge_audio_prompt(c, 3.0, m, inv, config);
  REQUIRE(p1.length() == 5);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(p3.row(2)[j] == doctest::Approx(3.0 * p1.row(2)[j]).epsilon(1e-6));
    CHECK(p3.row(0)[j] == inv.row(0)[j]);
    CHECK(p3.row(4)[j] == inv.row(4)[j]);
  }
}

TEST_CASE("embedding validation") {
  using oracle::error_code;
  CHECK(error_code([] { PromptEmbedding(Tensor32(Shape{4})); }) == Errc::shape_mismatch);
  CHECK(error_code([] { PromptEmbedding(Tensor32(Shape{0, 4})); }) == Errc::shape_mismatch);
  CHECK(error_code([] { LinearMap(Tensor64(Shape{3})); }) == Errc::shape_mismatch);
  CHECK(error_code([] { EmbeddingVector::from_tensor(Tensor64(Shape{2, 2})); }) ==
        Errc::shape_mismatch);
  CHECK(EmbeddingVector::from_tensor(Tensor64(Shape{1, 3})).dim() == 3);
}
