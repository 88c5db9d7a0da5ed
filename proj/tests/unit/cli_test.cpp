#include <doctest.h>

#include <fstream>
#include <sstream>

#include "noisefuse/bridge.hpp"
#include "noisefuse/cli.hpp"
#include "noisefuse/request.hpp"
#include "noisefuse/tensor_io.hpp"
#include "oracles.hpp"

using namespace noisefuse;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"demo"}).code == kExitUsage);
  CHECK(cli({"demo", "nonsense"}).code == kExitUsage);
  CHECK(cli({"edit", "--manifest", "m", "--fusion", "max"}).code == kExitUsage);
  const Run r = cli({"bridge", "--audio", "a.nbt"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("--map") != std::string::npos);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("bridge with an identity map keeps the scaled audio direction") {
  const auto dir = oracle::scratch_dir("cli_bridge");
  save_tensor(dir / "audio.nbt", Tensor64(Shape{2}, {0.6, 0.8}));
  save_tensor(dir / "map.nbt", Tensor64(Shape{2, 2}, {1, 0, 0, 1}));
  save_tensor(dir / "inv.nbt", Tensor32(Shape{4, 2}, {1, 0, 2, 2, 3, 3, 0, 5}));

  const Run r = cli({"bridge", "--audio", (dir / "audio.nbt").string(), "--map",
                     (dir / "map.nbt").string(), "--inversion-prompt", (dir / "inv.nbt").string(),
                     "--scale", "2", "--out", (dir / "out").string()});
  REQUIRE(r.code == kExitOk);
  const Tensor32 p = load_tensor_as<float>(dir / "out" / "prompt.nbt");
  REQUIRE(p.shape() == Shape{4, 2});
  // |pooled inversion row| = 5, scale 2, identity map: rows 1..2 = 10 (0.6, 0.8) / (1 + lambda)
  for (std::size_t row : {1u, 2u}) {
    CHECK(p[row * 2 + 0] == doctest::Approx(6.0 / (1 + 1e-5)).epsilon(1e-6));
    CHECK(p[row * 2 + 1] == doctest::Approx(8.0 / (1 + 1e-5)).epsilon(1e-6));
  }
  CHECK(p[0] == 1.0f);
  CHECK(p[7] == 5.0f);
}

TEST_CASE("invert writes noise and trajectory") {
  const auto dir = oracle::scratch_dir("cli_invert");
  save_tensor(dir / "z.nbt", Tensor32::filled(Shape{1, 2, 2}, 1.0f));
  save_tensor(dir / "p.nbt", Tensor32(Shape{2, 2}, {1, 2, 3, 4}));
  write_file(dir / "c.cfg", "num_ddim_steps = 5\n");
  const Run r = cli({"invert", "--latent", (dir / "z.nbt").string(), "--prompt",
                     (dir / "p.nbt").string(), "--config", (dir / "c.cfg").string(),
                     "--save-trajectory", "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(load_tensor_as<float>(dir / "trajectory.nbt").shape() == Shape{6, 1, 2, 2});
  CHECK(load_tensor_as<float>(dir / "noise.nbt").shape() == Shape{1, 2, 2});
}

TEST_CASE("runtime failures exit 1 with a typed message") {
  const auto dir = oracle::scratch_dir("cli_fail");
  const Run missing = cli({"invert", "--latent", (dir / "none.nbt").string(), "--prompt",
                           (dir / "none.nbt").string(), "--out", dir.string()});
  CHECK(missing.code == kExitRuntime);
  CHECK(missing.err.find("[io]") != std::string::npos);

  write_file(dir / "bad.cfg", "lambda = -1\n");
  save_tensor(dir / "z.nbt", Tensor32(Shape{1, 1, 1}));
  const Run cfg = cli({"invert", "--latent", (dir / "z.nbt").string(), "--prompt",
                       (dir / "z.nbt").string(), "--config", (dir / "bad.cfg").string()});
  CHECK(cfg.code == kExitRuntime);
  CHECK(cfg.err.find("constraint-violation") != std::string::npos);
}

TEST_CASE("edit manifest parsing") {
  const auto dir = oracle::scratch_dir("manifest");
  for (const char* f : {"z.nbt", "p.nbt", "a.nbt", "m.nbt", "t.nbt"}) {
    save_tensor(dir / f, Tensor32(Shape{1}));
  }
  const EditRequest r = parse_edit_request(
      "latent = z.nbt\ninversion_prompt = p.nbt\ninversion_target = t.nbt\n"
      "prompt = text p.nbt target=t.nbt\nprompt = audio a.nbt scale=2.5\nmap = m.nbt\n"
      "region = 0 4 2 6\n",
      dir);
  REQUIRE(r.prompts.size() == 2);
  CHECK(r.prompts[0].kind == PromptSource::Kind::text);
  CHECK(r.prompts[0].target == dir / "t.nbt");
  CHECK(r.prompts[1].scale == 2.5);
  REQUIRE(r.regions.size() == 1);
  CHECK(r.regions[0].x1 == 6);

  using oracle::error_code;
  const std::string base = "latent = z.nbt\ninversion_prompt = p.nbt\neps = t.nbt\n";
  CHECK(error_code([&] { parse_edit_request(base, dir); }) == Errc::missing_key);
  CHECK(error_code([&] { parse_edit_request(base + "prompt = audio a.nbt", dir); }) ==
        Errc::missing_key);
  CHECK(error_code([&] { parse_edit_request(base + "prompt = text gone.nbt", dir); }) ==
        Errc::io);
  CHECK(error_code([&] { parse_edit_request(base + "prompt = video p.nbt", dir); }) ==
        Errc::type_mismatch);
  CHECK(error_code([&] { parse_edit_request(base + "prompt = text p.nbt\nlatent = z.nbt", dir); }) ==
        Errc::duplicate_key);
  CHECK(error_code([&] { parse_edit_request(base + "prompt = text p.nbt\ncolour = red", dir); }) ==
        Errc::unknown_key);
  CHECK(error_code([&] { parse_edit_request(base + "prompt = text p.nbt\nregion = 4 2 0 1", dir); }) ==
        Errc::type_mismatch);
}
