#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "noisefuse/bridge.hpp"
#include "noisefuse/cli.hpp"
#include "noisefuse/fusion.hpp"
#include "noisefuse/pipeline.hpp"
#include "noisefuse/scenarios.hpp"
#include "noisefuse/tensor_io.hpp"

namespace py = pybind11;
using namespace noisefuse;

namespace {

template <class T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <class T>
Tensor<T> to_tensor(const Array<T>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<T>(std::move(shape), std::vector<T>(a.data(), a.data() + a.size()));
}

template <class T>
py::array_t<T> to_array(const Tensor<T>& t) {
  py::array_t<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::object any_to_array(const AnyTensor& t) {
  return std::visit([](const auto& v) -> py::object { return to_array(v); }, t);
}

AnyTensor array_to_any(const py::array& a) {
  if (a.dtype().is(py::dtype::of<double>())) return to_tensor<double>(a);
  return to_tensor<float>(a);
}

EmbeddingVector to_vector(const Array<double>& a) {
  return EmbeddingVector(std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> from_vector(const EmbeddingVector& v) {
  return to_array(v.to_tensor());
}

BranchSet to_branches(const Array<float>& eps_inv, const std::vector<Array<float>>& eps) {
  BranchSet b;
  b.eps_inv = to_tensor<float>(eps_inv);
  for (const auto& e : eps) b.eps.push_back(to_tensor<float>(e));
  return b;
}

PipelineConfig config_from(const std::string& text) { return parse_config(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-prompt diffusion editing engine with analytic toy denoisers";

  static py::exception<Error> error(m, "NoisefuseError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object args = py::make_tuple(to_string(e.code()), e.what());
      PyErr_SetObject(error.ptr(), args.ptr());
    }
  });

  // tensor files
  m.def("encode_tensor", [](const py::array& a) {
    return py::bytes(encode_tensor(array_to_any(a)));
  });
  m.def("decode_tensor", [](const py::bytes& b) { return any_to_array(decode_tensor(b)); });
  m.def("save_tensor", [](const std::string& path, const py::array& a) {
    save_tensor(path, array_to_any(a));
  });
  m.def("load_tensor", [](const std::string& path) { return any_to_array(load_tensor(path)); });

  // config
  m.def("normalize_config", [](const std::string& text) { return format_config(parse_config(text)); },
        py::arg("text") = "");

  // schedule
  m.def(
      "alphas_cumprod",
      [](std::size_t t, double b0, double b1) {
        const NoiseSchedule s = build_schedule(t, b0, b1);
        const auto& a = s.alphas_cumprod();
        return to_array(Tensor64(Shape{a.size()}, std::vector<double>(a.begin(), a.end())));
      },
      py::arg("num_train_steps") = 1000, py::arg("beta_start") = 0.00085,
      py::arg("beta_end") = 0.012);
  m.def(
      "select_timesteps",
      [](std::size_t total, std::size_t n) {
        const TimestepSequence seq = select_timesteps(build_schedule(total, 0.00085, 0.012), n);
        return std::vector<std::size_t>(seq.steps().begin(), seq.steps().end());
      },
      py::arg("num_train_steps"), py::arg("num_ddim_steps"));
  m.def("ddim_invert_step", [](const Array<float>& z, const Array<float>& eps, double a,
                               double a_next) {
    return to_array(ddim_invert_step(to_tensor(z), to_tensor(eps), a, a_next));
  });
  m.def(
      "ddim_sample_step",
      [](const Array<float>& z, const Array<float>& eps, double a, double a_next,
         const std::string& formula) {
        return to_array(ddim_sample_step(to_tensor(z), to_tensor(eps), a, a_next,
                                         parse_inversion_formula(formula)));
      },
      py::arg("z_next"), py::arg("eps"), py::arg("abar_t"), py::arg("abar_next"),
      py::arg("formula") = "paper-exact-inverse");

  // bridge
  m.def("project_to_clip", [](const Array<double>& c, const Array<double>& map) {
    return from_vector(project_to_clip(to_vector(c), LinearMap(to_tensor(map))));
  });
  m.def(
      "solve_tikhonov",
      [](const Array<double>& map, const Array<double>& rhs, double lambda) {
        return from_vector(solve_tikhonov(LinearMap(to_tensor(map)), to_vector(rhs), lambda));
      },
      py::arg("map"), py::arg("rhs"), py::arg("lam") = 1e-5);
  m.def(
      "invert_to_sd",
      [](const Array<double>& c, const Array<double>& map, double inv_norm, double lambda) {
        return from_vector(
            invert_to_sd(to_vector(c), LinearMap(to_tensor(map)), inv_norm, lambda));
      },
      py::arg("c_audio"), py::arg("map"), py::arg("inv_norm"), py::arg("lam") = 1e-5);
  m.def("assemble_prompt", [](const Array<double>& c, const Array<float>& inv, std::size_t rep) {
    return to_array(assemble_prompt(to_vector(c), PromptEmbedding(to_tensor(inv)), rep).tokens());
  });
  m.def(
      "bridge_audio_prompt",
      [](const Array<double>& c, double scale, const Array<double>& map, const Array<float>& inv,
         const std::string& config) {
        return to_array(bridge_audio_prompt(to_vector(c), scale, LinearMap(to_tensor(map)),
                                            PromptEmbedding(to_tensor(inv)), config_from(config))
                            .tokens());
      },
      py::arg("c_audio"), py::arg("scale"), py::arg("map"), py::arg("inversion_prompt"),
      py::arg("config") = "");

  // fusion
  m.def("residual_norm_map", [](const Array<float>& delta, std::size_t patch) {
    const NormMap n = residual_norm_map(to_tensor(delta), patch);
    py::array_t<double> out({n.rows, n.cols});
    std::copy(n.values.begin(), n.values.end(), out.mutable_data());
    return out;
  }, py::arg("delta"), py::arg("patch_size") = 1);
  m.def("fuse_mean", [](const Array<float>& eps_inv, const std::vector<Array<float>>& eps) {
    return to_array(fuse_mean(to_branches(eps_inv, eps)));
  });
  m.def(
      "fuse_adaptive",
      [](const Array<float>& eps_inv, const std::vector<Array<float>>& eps, std::size_t patch) {
        const AdaptiveFusion f = fuse_adaptive(to_branches(eps_inv, eps), patch);
        py::array_t<std::uint32_t> sel({f.selection.rows, f.selection.cols});
        std::copy(f.selection.values.begin(), f.selection.values.end(), sel.mutable_data());
        return py::make_tuple(to_array(f.fused), sel);
      },
      py::arg("eps_inv"), py::arg("eps"), py::arg("patch_size") = 1);

  // pipeline
  m.def(
      "reconstruct",
      [](const Array<float>& z0, const Array<float>& eps, const Array<float>& prompt,
         const std::string& config) {
        const PipelineConfig c = config_from(config);
        const NoiseSchedule s = build_schedule(c);
        const TimestepSequence steps = select_timesteps(s, c.num_ddim_steps);
        const DenoiserPtr d = constant_denoiser(to_tensor(eps));
        const Reconstruction r = run_reconstruction(to_tensor(z0), PromptEmbedding(to_tensor(prompt)),
                                                    *d, s, steps, c.inversion_formula);
        return py::make_tuple(to_array(r.latent), r.max_abs_error);
      },
      py::arg("z0"), py::arg("eps"), py::arg("prompt"), py::arg("config") = "",
      "Inversion then sampling under a constant noise prediction.");
  m.def(
      "run_scenario",
      [](const std::string& name, const std::string& config, double scale) {
        const ScenarioReport r = run_scenario(name, config_from(config), scale);
        py::dict metrics;
        for (const auto& [k, v] : r.metrics) metrics[py::str(k)] = v;
        py::dict tensors;
        for (const auto& [k, t] : r.tensors) tensors[py::str(k)] = to_array(t);
        py::dict out;
        out["name"] = r.name;
        out["passed"] = r.passed;
        out["metrics"] = metrics;
        out["tensors"] = tensors;
        return out;
      },
      py::arg("name"), py::arg("config") = "", py::arg("scale") = 1.0);
  m.attr("scenario_names") = scenario_names();

  m.def("cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
