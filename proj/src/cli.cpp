#include "noisefuse/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "noisefuse/bridge.hpp"
#include "noisefuse/denoiser.hpp"
#include "noisefuse/pipeline.hpp"
#include "noisefuse/request.hpp"
#include "noisefuse/scenarios.hpp"
#include "noisefuse/tensor_io.hpp"

namespace noisefuse {
namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
}

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(9);
  out << v;
  return out.str();
}

struct Overrides {
  std::string config_path;
  std::string out_dir;
  std::string fusion;
  std::string formula;
  std::size_t steps = 0;
  double scale = 1.0;
  double blend = -1.0;
  bool save_trajectory = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool editing) {
  cmd->add_option("--config", o.config_path, "pipeline config document (key = value)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--steps", o.steps, "number of DDIM steps")->check(CLI::PositiveNumber);
  if (editing) {
    cmd->add_option("--fusion", o.fusion, "adaptive | mean | single")
        ->check(CLI::IsMember({"adaptive", "mean", "single"}));
    cmd->add_option("--formula", o.formula, "sampling formula: paper-exact-inverse | standard-ddim")
        ->check(CLI::IsMember({"paper", "standard", "paper-exact-inverse", "standard-ddim"}));
    cmd->add_option("--blend", o.blend, "feature injection blend in [0, 1]")
        ->check(CLI::Range(0.0, 1.0));
  }
  cmd->add_option("--scale", o.scale, "audio magnitude scale")->check(CLI::PositiveNumber);
  cmd->add_flag("--save-trajectory", o.save_trajectory, "also write the stacked trajectory");
}

PipelineConfig resolve_config(const Overrides& o, const std::optional<fs::path>& fallback) {
  PipelineConfig c;
  if (!o.config_path.empty()) {
    c = parse_config(read_text(o.config_path));
  } else if (fallback) {
    c = parse_config(read_text(*fallback));
  }
  if (o.steps) c.num_ddim_steps = o.steps;
  if (!o.fusion.empty()) c.fusion_mode = parse_fusion_mode(o.fusion);
  if (!o.formula.empty()) c.inversion_formula = parse_inversion_formula(o.formula);
  if (o.blend >= 0.0) c.blend = o.blend;
  validate(c);
  return c;
}

fs::path output_dir(const Overrides& o, const std::string& fallback) {
  fs::path dir = o.out_dir.empty() ? fs::path(fallback) : fs::path(o.out_dir);
  fs::create_directories(dir);
  return dir;
}

PromptEmbedding load_prompt(const fs::path& p) {
  return PromptEmbedding(load_tensor_as<float>(p));
}

struct InvertArgs {
  std::string latent, prompt, target, eps;
};

int run_invert(const InvertArgs& a, const Overrides& o, std::ostream& out) {
  const PipelineConfig config = resolve_config(o, std::nullopt);
  const Tensor32 z0 = load_tensor_as<float>(a.latent);
  const PromptEmbedding inv = load_prompt(a.prompt);
  DenoiserPtr d;
  if (!a.target.empty()) {
    std::map<std::string, Tensor32> single{{"target", load_tensor_as<float>(a.target)}};
    d = attractor_denoiser(std::move(single), [](const PromptEmbedding&) { return "target"; });
  } else if (!a.eps.empty()) {
    d = constant_denoiser(load_tensor_as<float>(a.eps));
  } else {
    d = constant_denoiser(Tensor32(z0.shape()));
  }
  const NoiseSchedule s = build_schedule(config);
  const TimestepSequence steps = select_timesteps(s, config.num_ddim_steps);
  const InversionResult r = run_inversion(z0, inv, *d, s, steps, false);

  const fs::path dir = output_dir(o, ".");
  save_tensor(dir / "noise.nbt", r.noise);
  out << "noise: " << (dir / "noise.nbt").string() << '\n';
  if (o.save_trajectory) {
    save_tensor(dir / "trajectory.nbt", r.trajectory.stacked());
    out << "trajectory: " << (dir / "trajectory.nbt").string() << " (" << r.trajectory.size()
        << " latents)\n";
  }
  return kExitOk;
}

struct BridgeArgs {
  std::string audio, map, inversion_prompt;
};

int run_bridge(const BridgeArgs& a, const Overrides& o, std::ostream& out) {
  const PipelineConfig config = resolve_config(o, std::nullopt);
  const EmbeddingVector c_audio =
      EmbeddingVector::from_tensor(load_tensor_as<double>(a.audio));
  const LinearMap map(load_tensor_as<double>(a.map));
  const PromptEmbedding inv = load_prompt(a.inversion_prompt);
  const PromptEmbedding prompt = bridge_audio_prompt(c_audio, o.scale, map, inv, config);

  const fs::path dir = output_dir(o, ".");
  save_tensor(dir / "prompt.nbt", prompt.tokens());
  out << "prompt: " << (dir / "prompt.nbt").string() << " (" << prompt.length() << " x "
      << prompt.dim() << ")\n";
  return kExitOk;
}

struct EditArgs {
  std::string manifest;
};

int run_edit_command(const EditArgs& a, const Overrides& o, std::ostream& out) {
  const fs::path manifest_path(a.manifest);
  const EditRequest req =
      parse_edit_request(read_text(manifest_path), manifest_path.parent_path());
  const PipelineConfig config = resolve_config(o, req.config);

  const Tensor32 z0 = load_tensor_as<float>(req.latent);
  const PromptEmbedding inv = load_prompt(req.inversion_prompt);
  std::optional<LinearMap> map;
  if (req.map) map.emplace(load_tensor_as<double>(*req.map));

  std::map<std::string, Tensor32> targets;
  if (req.targets) targets = load_target_map(read_text(*req.targets), req.targets->parent_path());
  const auto add_target = [&](const PromptEmbedding& p, const fs::path& path) {
    targets.insert_or_assign(middle_row_key(p), load_tensor_as<float>(path));
  };
  if (req.inversion_target) add_target(inv, *req.inversion_target);

  std::vector<PromptEmbedding> prompts;
  for (const auto& src : req.prompts) {
    if (src.kind == PromptSource::Kind::text) {
      prompts.push_back(load_prompt(src.path));
    } else {
      const auto c_audio = EmbeddingVector::from_tensor(load_tensor_as<double>(src.path));
      prompts.push_back(bridge_audio_prompt(c_audio, src.scale.value_or(o.scale), *map, inv, config));
    }
    if (src.target) add_target(prompts.back(), *src.target);
  }

  EditOptions options = EditOptions::from_config(config);
  options.keep_trajectory = o.save_trajectory;
  if (req.unconditional) {
    Guidance g{load_prompt(*req.unconditional), config.guidance_scale};
    if (req.unconditional_target) add_target(g.unconditional, *req.unconditional_target);
    options.guidance = std::move(g);
  } else if (config.guidance_scale != 1.0) {
    throw Error(Errc::missing_key, "guidance_scale != 1 needs an 'unconditional' prompt");
  }

  const DenoiserPtr d = req.eps ? constant_denoiser(load_tensor_as<float>(*req.eps))
                                : attractor_denoiser(std::move(targets));
  const NoiseSchedule s = build_schedule(config);
  const TimestepSequence steps = select_timesteps(s, config.num_ddim_steps);
  const bool inject = config.blend > 0.0;
  const InversionResult inversion = run_inversion(z0, inv, *d, s, steps, inject);
  const EditResult edit = run_edit(inversion.noise_state, prompts, inv, *d, s, steps, options,
                                   inject ? &inversion.features : nullptr);

  const fs::path dir = output_dir(o, ".");
  save_tensor(dir / "edited.nbt", edit.latent);
  save_tensor(dir / "noise.nbt", inversion.noise);
  std::ostringstream trace;
  edit.trace.write(trace);
  write_text(dir / "trace.txt", trace.str());
  if (o.save_trajectory) {
    save_tensor(dir / "inversion_trajectory.nbt", inversion.trajectory.stacked());
    save_tensor(dir / "edit_trajectory.nbt", edit.trajectory.stacked());
  }

  std::ostringstream report;
  report << "fusion_mode: " << to_string(config.fusion_mode) << '\n'
         << "formula: " << to_string(config.inversion_formula) << '\n'
         << "steps: " << steps.size() << '\n'
         << "prompts: " << prompts.size() << '\n';
  if (req.reference) {
    const Tensor32 ref = load_tensor_as<float>(*req.reference);
    report << "distance_to_reference: " << format_number(max_abs_diff(edit.latent, ref)) << '\n';
    for (std::size_t q = 0; q < req.regions.size(); ++q) {
      report << "region" << q << "_distance: "
             << format_number(region_distance(edit.latent, ref, req.regions[q])) << '\n';
    }
  }
  write_text(dir / "report.txt", report.str());
  out << report.str();
  return kExitOk;
}

struct DemoArgs {
  std::string name;
};

int run_demo(const DemoArgs& a, const Overrides& o, std::ostream& out) {
  const PipelineConfig config = resolve_config(o, std::nullopt);
  const ScenarioReport report = run_scenario(a.name, config, o.scale);
  report.write(output_dir(o, "demo-" + a.name));
  out << report.render();
  return report.passed ? kExitOk : kExitRuntime;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-free multi-prompt diffusion editing engine", "noisefuse"};
  app.require_subcommand(1);
  Overrides o;

  InvertArgs inv;
  auto* invert = app.add_subcommand("invert", "DDIM-invert a latent under an inversion prompt");
  invert->add_option("--latent", inv.latent, "clean latent (.nbt)")->required();
  invert->add_option("--prompt", inv.prompt, "inversion prompt embedding (.nbt)")->required();
  invert->add_option("--target", inv.target, "attractor target (.nbt)");
  invert->add_option("--eps", inv.eps, "constant noise prediction (.nbt)");
  add_common(invert, o, false);

  EditArgs ed;
  auto* edit = app.add_subcommand("edit", "run an edit manifest");
  edit->add_option("--manifest", ed.manifest, "edit manifest (key = value)")->required();
  add_common(edit, o, true);

  BridgeArgs br;
  auto* bridge = app.add_subcommand("bridge", "bridge an audio embedding into a prompt");
  bridge->add_option("--audio", br.audio, "aligned-space audio embedding (.nbt)")->required();
  bridge->add_option("--map", br.map, "projection matrix d_clip x d_sd (.nbt)")->required();
  bridge->add_option("--inversion-prompt", br.inversion_prompt, "inversion prompt (.nbt)")
      ->required();
  add_common(bridge, o, false);

  DemoArgs dm;
  auto* demo = app.add_subcommand("demo", "run a built-in scenario");
  demo->add_option("name", dm.name, "roundtrip | disjoint | magnitude | ablation")
      ->required()
      ->check(CLI::IsMember(scenario_names()));
  add_common(demo, o, true);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (invert->parsed()) return run_invert(inv, o, out);
    if (edit->parsed()) return run_edit_command(ed, o, out);
    if (bridge->parsed()) return run_bridge(br, o, out);
    return run_demo(dm, o, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitRuntime;
}

}  // namespace noisefuse
