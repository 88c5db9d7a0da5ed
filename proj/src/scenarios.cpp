#include "noisefuse/scenarios.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "noisefuse/denoiser.hpp"
#include "noisefuse/pipeline.hpp"
#include "noisefuse/tensor_io.hpp"

namespace noisefuse {
namespace {

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(9);
  out << v;
  return out.str();
}

Eigen::MatrixXd random_orthogonal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix the column signs against R's diagonal so Q is uniformly distributed.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

struct Fixture {
  NoiseSchedule schedule;
  TimestepSequence steps;
};

Fixture make_fixture(const PipelineConfig& config) {
  validate(config);
  NoiseSchedule s = build_schedule(config);
  TimestepSequence steps = select_timesteps(s, config.num_ddim_steps);
  return {std::move(s), std::move(steps)};
}

std::string trace_text(const FusionTrace& trace) {
  std::ostringstream out;
  trace.write(out);
  return out.str();
}

// Shared tail of the two composition scenarios: adaptive, mean and
// merged-target runs from one inversion, compared per quadrant.
void compare_compositions(ScenarioReport& report, const PipelineConfig& config,
                          const Fixture& fx, const Denoiser& d, const Tensor32& z0,
                          const PromptEmbedding& p_inv,
                          const std::vector<PromptEmbedding>& prompts,
                          const PromptEmbedding& p_merged, const Tensor32& merged_target,
                          const std::vector<Region>& regions, bool check_traces) {
  const bool inject = config.blend > 0.0;
  const InversionResult inv = run_inversion(z0, p_inv, d, fx.schedule, fx.steps, inject);
  const FeatureStore* hooks = inject ? &inv.features : nullptr;

  EditOptions options = EditOptions::from_config(config);
  options.mode = FusionMode::adaptive;
  const EditResult adaptive =
      run_edit(inv.noise_state, prompts, p_inv, d, fx.schedule, fx.steps, options, hooks);
  options.mode = FusionMode::mean;
  const EditResult mean =
      run_edit(inv.noise_state, prompts, p_inv, d, fx.schedule, fx.steps, options, hooks);
  options.mode = FusionMode::single;
  const std::vector<PromptEmbedding> merged_prompt{p_merged};
  const EditResult merged =
      run_edit(inv.noise_state, merged_prompt, p_inv, d, fx.schedule, fx.steps, options, hooks);

  const double gap = max_abs_diff(adaptive.latent, merged.latent);
  report.metric("adaptive_vs_merged_max_abs", gap);
  bool passed = gap <= 1e-5;
  for (std::size_t q = 0; q < regions.size(); ++q) {
    const double da = region_distance(adaptive.latent, merged_target, regions[q]);
    const double dm = region_distance(mean.latent, merged_target, regions[q]);
    report.metric("region" + std::to_string(q) + "_adaptive_distance", da);
    report.metric("region" + std::to_string(q) + "_mean_distance", dm);
    passed = passed && dm > da;
  }

  if (check_traces) {
    bool variance_kept = true;
    bool attenuated = true;
    for (const auto& r : adaptive.trace.records) {
      const double top = *std::max_element(r.branch_mean_norm.begin(), r.branch_mean_norm.end());
      variance_kept = variance_kept && r.fused_mean_norm >= top;
    }
    for (const auto& r : mean.trace.records) {
      const double top = *std::max_element(r.branch_mean_norm.begin(), r.branch_mean_norm.end());
      attenuated = attenuated && r.fused_mean_norm < top;
    }
    report.metric("adaptive_keeps_strongest_branch", variance_kept ? "yes" : "no");
    report.metric("mean_attenuates_branches", attenuated ? "yes" : "no");
    passed = passed && variance_kept && attenuated;
  }

  report.passed = passed;
  report.tensors.emplace_back("z0", z0);
  report.tensors.emplace_back("noise", inv.noise);
  report.tensors.emplace_back("edited_adaptive", adaptive.latent);
  report.tensors.emplace_back("edited_mean", mean.latent);
  report.tensors.emplace_back("merged", merged.latent);
  report.tensors.emplace_back("merged_target", merged_target);
  report.texts.emplace_back("trace_adaptive.txt", trace_text(adaptive.trace));
  report.texts.emplace_back("trace_mean.txt", trace_text(mean.trace));
}

}  // namespace

Tensor32 random_normal(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> normal;
  Tensor32 t(shape);
  for (float& v : t.data()) v = static_cast<float>(normal(rng));
  return t;
}

PromptEmbedding random_prompt(std::size_t length, std::size_t dim, Rng& rng) {
  return PromptEmbedding(random_normal(Shape{length, dim}, rng));
}

EmbeddingVector random_unit_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  double n = 0.0;
  while (!(n > 0.0)) {
    for (double& x : v) x = normal(rng);
    n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
  }
  for (double& x : v) x /= n;
  return EmbeddingVector(std::move(v));
}

LinearMap random_well_conditioned_map(std::size_t clip_dim, std::size_t sd_dim,
                                      double max_condition, Rng& rng) {
  if (!(max_condition >= 1.0)) {
    throw Error(Errc::invalid_argument, "max_condition must be at least 1");
  }
  const Eigen::MatrixXd u = random_orthogonal(clip_dim, rng);
  const Eigen::MatrixXd v = random_orthogonal(sd_dim, rng);
  const std::size_t k = std::min(clip_dim, sd_dim);
  std::uniform_real_distribution<double> sv(1.0, max_condition);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(clip_dim, sd_dim);
  for (std::size_t i = 0; i < k; ++i) {
    sigma(i, i) = i == 0 ? 1.0 : (i == 1 ? max_condition : sv(rng));
  }
  const Eigen::MatrixXd m = u * sigma * v.transpose();
  Tensor64 out(Shape{clip_dim, sd_dim});
  for (std::size_t i = 0; i < clip_dim; ++i) {
    for (std::size_t j = 0; j < sd_dim; ++j) out[i * sd_dim + j] = m(i, j);
  }
  return LinearMap(std::move(out));
}

double region_distance(const Tensor32& a, const Tensor32& b, const Region& r) {
  require_same_shape(a, b, "region_distance");
  const std::size_t c = a.extent(0), h = a.extent(1), w = a.extent(2);
  double s = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = r.y0; y < std::min(r.y1, h); ++y) {
      for (std::size_t x = r.x0; x < std::min(r.x1, w); ++x) {
        const std::size_t k = (ch * h + y) * w + x;
        const double d = static_cast<double>(a[k]) - b[k];
        s += d * d;
      }
    }
  }
  return std::sqrt(s);
}

Tensor32 paste_region(const Tensor32& base, const Tensor32& source, const Region& r) {
  require_same_shape(base, source, "paste_region");
  Tensor32 out = base;
  const std::size_t c = base.extent(0), h = base.extent(1), w = base.extent(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = r.y0; y < std::min(r.y1, h); ++y) {
      for (std::size_t x = r.x0; x < std::min(r.x1, w); ++x) {
        const std::size_t k = (ch * h + y) * w + x;
        out[k] = source[k];
      }
    }
  }
  return out;
}

void ScenarioReport::metric(std::string key, double value) {
  metrics.emplace_back(std::move(key), format_number(value));
}

void ScenarioReport::metric(std::string key, std::string value) {
  metrics.emplace_back(std::move(key), std::move(value));
}

std::string ScenarioReport::render() const {
  std::ostringstream out;
  out << "scenario: " << name << '\n' << "result: " << (passed ? "PASS" : "FAIL") << '\n';
  for (const auto& [k, v] : metrics) out << k << ": " << v << '\n';
  return out.str();
}

void ScenarioReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.txt", std::ios::binary | std::ios::trunc);
    out << render();
    if (!out) throw Error(Errc::io, "cannot write " + (dir / "report.txt").string());
  }
  for (const auto& [stem, t] : tensors) save_tensor(dir / (stem + ".nbt"), t);
  for (const auto& [file, text] : texts) {
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(Errc::io, "cannot write " + (dir / file).string());
  }
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"roundtrip", "disjoint", "magnitude", "ablation"};
  return names;
}

ScenarioReport run_scenario(const std::string& name, const PipelineConfig& config,
                            double scale) {
  if (name == "roundtrip") return roundtrip_scenario(config);
  if (name == "disjoint") return disjoint_scenario(config);
  if (name == "magnitude") return magnitude_scenario(config, scale);
  if (name == "ablation") return ablation_scenario(config, scale);
  throw Error(Errc::invalid_argument, "unknown scenario '" + name + "'");
}

ScenarioReport roundtrip_scenario(const PipelineConfig& config) {
  const Fixture fx = make_fixture(config);
  Rng rng(config.seed);
  const Shape shape{4, 8, 8};
  const Tensor32 z0 = random_normal(shape, rng);
  const Tensor32 c = random_normal(shape, rng);
  const PromptEmbedding p_inv = random_prompt(4, 16, rng);
  const DenoiserPtr d = constant_denoiser(c);

  const InversionResult inv = run_inversion(z0, p_inv, *d, fx.schedule, fx.steps, false);
  const Reconstruction rec = run_reconstruction(z0, p_inv, *d, fx.schedule, fx.steps,
                                                InversionFormula::paper_exact_inverse);
  ScenarioReport report;
  report.name = "roundtrip";
  report.metric("steps", static_cast<double>(fx.steps.size()));
  report.metric("reconstruction_max_abs_error", rec.max_abs_error);
  report.metric("tolerance", 1e-5);
  report.passed = rec.max_abs_error <= 1e-5;
  report.tensors.emplace_back("z0", z0);
  report.tensors.emplace_back("noise", inv.noise);
  report.tensors.emplace_back("reconstructed", rec.latent);
  return report;
}

ScenarioReport disjoint_scenario(const PipelineConfig& config) {
  const Fixture fx = make_fixture(config);
  Rng rng(config.seed);
  const Shape shape{4, 16, 16};
  const Region qa{0, 8, 0, 8};
  const Region qb{8, 16, 8, 16};
  const Tensor32 t_inv = random_normal(shape, rng);
  const Tensor32 t_a = paste_region(t_inv, random_normal(shape, rng), qa);
  const Tensor32 t_b = paste_region(t_inv, random_normal(shape, rng), qb);
  const Tensor32 t_merged = paste_region(t_a, t_b, qb);
  const PromptEmbedding p_inv = random_prompt(6, 16, rng);
  const PromptEmbedding p_a = random_prompt(6, 16, rng);
  const PromptEmbedding p_b = random_prompt(6, 16, rng);
  const PromptEmbedding p_merged = random_prompt(6, 16, rng);
  const DenoiserPtr d = attractor_denoiser({{middle_row_key(p_inv), t_inv},
                                            {middle_row_key(p_a), t_a},
                                            {middle_row_key(p_b), t_b},
                                            {middle_row_key(p_merged), t_merged}});
  ScenarioReport report;
  report.name = "disjoint";
  compare_compositions(report, config, fx, *d, t_inv, p_inv, {p_a, p_b}, p_merged, t_merged,
                       {qa, qb}, false);

  // Inputs for replaying the edit through `noisefuse edit`.
  report.tensors.emplace_back("prompt_inv", p_inv.tokens());
  report.tensors.emplace_back("prompt_a", p_a.tokens());
  report.tensors.emplace_back("prompt_b", p_b.tokens());
  report.tensors.emplace_back("target_a", t_a);
  report.tensors.emplace_back("target_b", t_b);
  report.texts.emplace_back("edit.manifest",
                            "latent = z0.nbt\n"
                            "inversion_prompt = prompt_inv.nbt\n"
                            "inversion_target = z0.nbt\n"
                            "prompt = text prompt_a.nbt target=target_a.nbt\n"
                            "prompt = text prompt_b.nbt target=target_b.nbt\n"
                            "reference = merged_target.nbt\n"
                            "region = 0 8 0 8\n"
                            "region = 8 16 8 16\n");
  return report;
}

ScenarioReport magnitude_scenario(const PipelineConfig& config, double scale) {
  const Fixture fx = make_fixture(config);
  Rng rng(config.seed);
  const std::size_t dim = 16;
  const Shape shape{4, 16, 16};
  const Tensor32 t_inv = random_normal(shape, rng);
  const PromptEmbedding p_inv = random_prompt(6, dim, rng);
  const LinearMap map = random_well_conditioned_map(dim, dim, 10.0, rng);
  const EmbeddingVector c_audio = random_unit_vector(dim, rng);
  const Tensor32 readout = random_normal(Shape{t_inv.size(), dim}, rng);

  // The edit target moves linearly with the prompt's middle row, so a
  // stronger bridged vector pulls the latent further from the original.
  const std::string inv_key = middle_row_key(p_inv);
  const DenoiserPtr d = attractor_denoiser([=](const PromptEmbedding& cond) {
    if (middle_row_key(cond) == inv_key) return t_inv;
    const auto mid = cond.row(cond.length() / 2);
    if (mid.size() != dim) throw Error(Errc::shape_mismatch, "readout expects d = 16");
    Tensor32 t = t_inv;
    for (std::size_t k = 0; k < t.size(); ++k) {
      double shift = 0.0;
      for (std::size_t j = 0; j < dim; ++j) shift += readout[k * dim + j] * mid[j];
      t[k] = static_cast<float>(t[k] + shift / std::sqrt(static_cast<double>(dim)));
    }
    return t;
  });

  const InversionResult inv = run_inversion(t_inv, p_inv, *d, fx.schedule, fx.steps, false);
  EditOptions options = EditOptions::from_config(config);
  options.mode = FusionMode::single;
  const std::vector<PromptEmbedding> recon_prompt{p_inv};
  const EditResult recon =
      run_edit(inv.noise_state, recon_prompt, p_inv, *d, fx.schedule, fx.steps, options);

  ScenarioReport report;
  report.name = "magnitude";
  report.tensors.emplace_back("z0", t_inv);
  report.tensors.emplace_back("reconstructed", recon.latent);
  options.mode = FusionMode::adaptive;
  const double factors[] = {0.5, 1.0, 2.0};
  double previous = -1.0;
  bool increasing = true;
  for (std::size_t i = 0; i < 3; ++i) {
    const double s = factors[i] * scale;
    const std::vector<PromptEmbedding> prompt{
        bridge_audio_prompt(c_audio, s, map, p_inv, config)};
    const EditResult edit =
        run_edit(inv.noise_state, prompt, p_inv, *d, fx.schedule, fx.steps, options);
    Tensor32 diff(edit.latent.shape());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = edit.latent[k] - recon.latent[k];
    const double displacement = l2_norm(diff);
    report.metric("scale_" + std::to_string(i), s);
    report.metric("displacement_" + std::to_string(i), displacement);
    increasing = increasing && displacement > previous;
    previous = displacement;
    report.tensors.emplace_back("edited_" + std::to_string(i), edit.latent);
  }
  report.metric("strictly_increasing", increasing ? "yes" : "no");
  report.passed = increasing;
  return report;
}

ScenarioReport ablation_scenario(const PipelineConfig& config, double scale) {
  const Fixture fx = make_fixture(config);
  Rng rng(config.seed);
  const std::size_t dim = 16;
  const Shape shape{4, 16, 16};
  const Region q_text{0, 8, 0, 8};
  const Region q_audio{8, 16, 8, 16};
  const Tensor32 t_inv = random_normal(shape, rng);
  const Tensor32 t_text = paste_region(t_inv, random_normal(shape, rng), q_text);
  const Tensor32 t_audio = paste_region(t_inv, random_normal(shape, rng), q_audio);
  const Tensor32 t_merged = paste_region(t_text, t_audio, q_audio);
  const PromptEmbedding p_inv = random_prompt(6, dim, rng);
  const PromptEmbedding p_text = random_prompt(6, dim, rng);
  const PromptEmbedding p_merged = random_prompt(6, dim, rng);
  const LinearMap map = random_well_conditioned_map(dim, dim, 10.0, rng);
  const EmbeddingVector c_audio = random_unit_vector(dim, rng);
  const PromptEmbedding p_audio = bridge_audio_prompt(c_audio, scale, map, p_inv, config);

  const DenoiserPtr d = attractor_denoiser({{middle_row_key(p_inv), t_inv},
                                            {middle_row_key(p_text), t_text},
                                            {middle_row_key(p_audio), t_audio},
                                            {middle_row_key(p_merged), t_merged}});
  ScenarioReport report;
  report.name = "ablation";
  compare_compositions(report, config, fx, *d, t_inv, p_inv, {p_text, p_audio}, p_merged,
                       t_merged, {q_text, q_audio}, true);
  report.tensors.emplace_back("audio_prompt", p_audio.tokens());
  return report;
}

}  // namespace noisefuse
