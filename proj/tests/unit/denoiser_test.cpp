#include <doctest.h>

#include <cmath>
#include <fstream>

#include "noisefuse/denoiser.hpp"
#include "noisefuse/pipeline.hpp"
#include "noisefuse/scenarios.hpp"
#include "noisefuse/tensor_io.hpp"
#include "oracles.hpp"

using namespace noisefuse;

TEST_CASE("constant denoiser ignores its inputs") {
  Rng rng(1);
  const Tensor32 c = random_normal(Shape{2, 3, 3}, rng);
  const DenoiserPtr d = constant_denoiser(c);
  const PromptEmbedding p1 = random_prompt(3, 4, rng);
  const PromptEmbedding p2 = random_prompt(5, 2, rng);
  const Tensor32 z1 = random_normal(c.shape(), rng);
  const Tensor32 z2 = random_normal(c.shape(), rng);
  CHECK(bitwise_equal(d->predict(z1, {0, 0.9}, p1).eps, c));
  CHECK(bitwise_equal(d->predict(z2, {7, 0.1}, p2).eps, c));
  CHECK(oracle::error_code([&] { d->predict(Tensor32(Shape{3}), {0, 0.5}, p1); }) ==
        Errc::shape_mismatch);
}

TEST_CASE("zero constant makes inversion a pure rescaling") {
  const NoiseSchedule s({0.25, 0.16}, 0, 0);
  const TimestepSequence steps({0, 1}, 2);
  const DenoiserPtr d = constant_denoiser(Tensor32(Shape{1}));
  Rng rng(1);
  const PromptEmbedding p = random_prompt(2, 2, rng);
  const InversionResult r =
      run_inversion(Tensor32::filled(Shape{1}, 1.0f), p, *d, s, steps, false);
  CHECK(r.noise[0] == doctest::Approx(0.8).epsilon(1e-7));
  CHECK(r.trajectory.size() == 3);
}

TEST_CASE("attractor predicts the noise that implies its target") {
  Rng rng(2);
  const Tensor32 target = random_normal(Shape{1, 4, 4}, rng);
  const PromptEmbedding p = random_prompt(3, 4, rng);
  const DenoiserPtr d = attractor_denoiser({{middle_row_key(p), target}});

  const double a = 0.36;
  Tensor32 z(target.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(0.6 * target[i]);
  const Prediction at_target = d->predict(z, {0, a}, p);
  for (float v : at_target.eps.data()) CHECK(std::abs(v) <= 1e-6f);
  CHECK(bitwise_equal(at_target.x0, target));

  const Tensor32 z2 = random_normal(target.shape(), rng);
  const Prediction pr = d->predict(z2, {0, a}, p);
  for (std::size_t i = 0; i < z2.size(); ++i) {
    const double ref = (double(z2[i]) - 0.6 * target[i]) / 0.8;
    CHECK(pr.eps[i] == doctest::Approx(ref).epsilon(1e-6));
  }

  const PromptEmbedding stranger = random_prompt(3, 4, rng);
  CHECK(oracle::error_code([&] { d->predict(z2, {0, a}, stranger); }) ==
        Errc::unknown_condition);
  CHECK(oracle::error_code([&] { d->predict(z2, {0, 1.0}, p); }) == Errc::out_of_range);
}

TEST_CASE("attractor residuals live only where targets differ") {
  Rng rng(3);
  const Shape shape{2, 8, 8};
  const Region r{0, 4, 0, 4};
  const Tensor32 t_inv = random_normal(shape, rng);
  const Tensor32 t_a = paste_region(t_inv, random_normal(shape, rng), r);
  const PromptEmbedding p_inv = random_prompt(4, 3, rng);
  const PromptEmbedding p_a = random_prompt(4, 3, rng);
  const DenoiserPtr d =
      attractor_denoiser({{middle_row_key(p_inv), t_inv}, {middle_row_key(p_a), t_a}});
  const Tensor32 z = random_normal(shape, rng);
  const double a = 0.7;
  const Tensor32 e_inv = d->predict(z, {0, a}, p_inv).eps;
  const Tensor32 e_a = d->predict(z, {0, a}, p_a).eps;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t y = 0; y < 8; ++y) {
      for (std::size_t x = 0; x < 8; ++x) {
        const std::size_t k = (c * 8 + y) * 8 + x;
        const double delta = double(e_a[k]) - double(e_inv[k]);
        if (y < 4 && x < 4) {
          const double ref = -std::sqrt(a) * (double(t_a[k]) - t_inv[k]) / std::sqrt(1 - a);
          CHECK(delta == doctest::Approx(ref).epsilon(1e-5).scale(1.0));
        } else {
          CHECK(delta == 0.0);
        }
      }
    }
  }
}

TEST_CASE("feature store keys") {
  FeatureStore s;
  s.put(0, "x0", Tensor32(Shape{1}));
  s.put(1, "x0", Tensor32(Shape{1}));
  s.put(1, "attn", Tensor32(Shape{1}));
  CHECK(s.size() == 3);
  CHECK(s.count("x0") == 2);
  CHECK(s.contains(1, "attn"));
  CHECK_FALSE(s.contains(2, "x0"));
  CHECK(oracle::error_code([&] { s.put(0, "x0", Tensor32(Shape{1})); }) == Errc::duplicate_key);
  CHECK(oracle::error_code([&] { s.get(5, "x0"); }) == Errc::missing_key);
}

TEST_CASE("capture records one x0 per inversion step, deterministically") {
  Rng rng(4);
  const Shape shape{2, 4, 4};
  const Tensor32 target = random_normal(shape, rng);
  const PromptEmbedding p = random_prompt(3, 4, rng);
  const DenoiserPtr d = attractor_denoiser({{middle_row_key(p), target}});
  const NoiseSchedule s = build_schedule(PipelineConfig{});
  const TimestepSequence steps = select_timesteps(s, 50);
  const Tensor32 z0 = random_normal(shape, rng);

  const InversionResult a = run_inversion(z0, p, *d, s, steps, true);
  const InversionResult b = run_inversion(z0, p, *d, s, steps, true);
  CHECK(a.features.count(kX0Tag) == 50);
  for (const auto& [key, value] : a.features.entries()) {
    CHECK(bitwise_equal(value, b.features.get(key.first, key.second)));
  }
}

TEST_CASE("injection blends the clean-sample estimate") {
  Rng rng(5);
  const Shape shape{1, 1, 1};
  const PromptEmbedding p = random_prompt(3, 2, rng);
  const DenoiserPtr d = attractor_denoiser({{middle_row_key(p), Tensor32::filled(shape, 2.0f)}});
  FeatureStore store;
  store.put(0, std::string(kX0Tag), Tensor32::filled(shape, 4.0f));
  const Tensor32 z = Tensor32::filled(shape, 0.3f);

  const Prediction plain = d->predict(z, {0, 0.5}, p);
  const Prediction none = inject_features(d, store, 0.0)->predict(z, {0, 0.5}, p);
  CHECK(bitwise_equal(none.eps, plain.eps));
  CHECK(bitwise_equal(none.x0, plain.x0));

  const Prediction half = inject_features(d, store, 0.5)->predict(z, {0, 0.5}, p);
  CHECK(half.x0[0] == 3.0f);
  CHECK(half.eps[0] == doctest::Approx((0.3 - std::sqrt(0.5) * 3.0) / std::sqrt(0.5)));

  CHECK(oracle::error_code([&] { inject_features(d, store, 1.5); }) == Errc::invalid_argument);
  CHECK(oracle::error_code([&] { inject_features(d, store, 1.0)->predict(z, {3, 0.5}, p); }) ==
        Errc::missing_key);
}

TEST_CASE("full injection reproduces captured predictions") {
  Rng rng(6);
  const Shape shape{2, 4, 4};
  const PromptEmbedding p = random_prompt(3, 4, rng);
  const PromptEmbedding other = random_prompt(3, 4, rng);
  const DenoiserPtr d = attractor_denoiser(
      {{middle_row_key(p), random_normal(shape, rng)}, {middle_row_key(other), random_normal(shape, rng)}});
  FeatureStore store;
  const DenoiserPtr capturing = capture_features(d, store);
  std::vector<Tensor32> zs;
  std::vector<Prediction> original;
  for (std::size_t k = 0; k < 5; ++k) {
    zs.push_back(random_normal(shape, rng));
    original.push_back(capturing->predict(zs[k], {k, 0.9 - 0.1 * k}, p));
  }
  const DenoiserPtr injecting = inject_features(d, store, 1.0);
  for (std::size_t k = 0; k < 5; ++k) {
    // even a different condition is pulled back onto the captured prediction
    const Prediction again = injecting->predict(zs[k], {k, 0.9 - 0.1 * k}, other);
    CHECK(bitwise_equal(again.eps, original[k].eps));
    CHECK(bitwise_equal(again.x0, original[k].x0));
  }
}

TEST_CASE("target manifest loading") {
  const auto dir = oracle::scratch_dir("targets");
  save_tensor(dir / "a.nbt", Tensor32::filled(Shape{2}, 1.0f));
  save_tensor(dir / "b.nbt", Tensor64::filled(Shape{2}, 2.0));
  const auto map = load_target_map("# targets\nfirst = a.nbt\nsecond = " +
                                       (dir / "b.nbt").string() + "\n",
                                   dir);
  REQUIRE(map.size() == 2);
  CHECK(map.at("first")[1] == 1.0f);
  CHECK(map.at("second")[0] == 2.0f);
  CHECK(oracle::error_code([&] { load_target_map("x = missing.nbt", dir); }) == Errc::io);
  CHECK(oracle::error_code([&] { load_target_map("x = a.nbt\nx = a.nbt", dir); }) ==
        Errc::duplicate_key);
}

TEST_CASE("condition keys follow the middle row bytes") {
  const PromptEmbedding a(Tensor32(Shape{3, 1}, {1, 2, 3}));
  const PromptEmbedding b(Tensor32(Shape{3, 1}, {9, 2, 9}));
  const PromptEmbedding c(Tensor32(Shape{3, 1}, {1, -2, 3}));
  CHECK(middle_row_key(a) == middle_row_key(b));
  CHECK(middle_row_key(a) != middle_row_key(c));
  CHECK(middle_row_key(a).size() == 16);
}
