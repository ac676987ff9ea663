#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "priorforge/colorlab.hpp"
#include "priorforge/diffusion.hpp"
#include "priorforge/evalx.hpp"
#include "priorforge/io.hpp"
#include "priorforge/pipeline.hpp"
#include "priorforge/raster.hpp"

namespace py = pybind11;
using namespace priorforge;
using nlohmann::json;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  if (o.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

config::RunConfig run_config(const py::object& o) { return config::run_config_from_json(from_py(o)); }

colorlab::ColorHistogram flat_hist(const F64& a) {
  if (a.ndim() != 1) throw InputError("histogram must be 1-D");
  colorlab::ColorHistogram h;
  h.layout = {static_cast<int>(a.shape(0)), 1, 1};
  h.values.assign(a.data(), a.data() + a.shape(0));
  return h;
}

Vec to_vec(const F64& a) {
  if (a.ndim() != 1) throw InputError("expected a 1-D array");
  return Eigen::Map<const Vec>(a.data(), a.shape(0));
}

Mat to_mat(const F64& a) {
  if (a.ndim() != 2) throw InputError("expected a 2-D array");
  Mat m(a.shape(0), a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = *a.data(i, j);
  return m;
}

RasterPatch to_patch(const F64& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw InputError("patch must be H x W x 3");
  RasterPatch p(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  p.pixels.assign(a.data(), a.data() + a.size());
  return p;
}

pipeline::SampleRequest sample_request(const std::vector<std::string>& prompts,
                                       const std::optional<std::string>& color_image,
                                       const py::object& cfg) {
  pipeline::SampleRequest req;
  req.prompts = prompts;
  req.color_image = color_image;
  req.sample = run_config(cfg).sample;
  return req;
}

}  // namespace

PYBIND11_MODULE(_priorforge, m) {
  m.doc() = "Diffusion priors over a synthetic joint embedding space.";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("default_config", [] { return to_py(config::to_json(config::RunConfig{})); });
  m.def("normalize_config", [](const py::object& c) { return to_py(config::to_json(run_config(c))); },
        py::arg("config"));

  m.def("gen_data",
        [](const std::string& out, const py::object& cfg) {
          const auto rc = run_config(cfg);
          json counts;
          {
            py::gil_scoped_release release;
            counts = pipeline::gen_data(rc, out);
          }
          return to_py(counts);
        },
        py::arg("out_dir"), py::arg("config") = py::none());
  m.def("train_prior",
        [](const std::string& data, const std::string& model, const py::object& cfg) {
          auto rc = run_config(cfg);
          json rep;
          {
            py::gil_scoped_release release;
            rep = pipeline::train_prior(data, rc, model);
          }
          return to_py(rep);
        },
        py::arg("data_dir"), py::arg("model_path"), py::arg("config") = py::none());
  m.def("sample",
        [](const std::string& model, const std::vector<std::string>& prompts, const std::string& out,
           const std::optional<std::string>& color_image, const py::object& cfg) {
          const auto req = sample_request(prompts, color_image, cfg);
          json rep;
          {
            py::gil_scoped_release release;
            rep = pipeline::sample(model, req, out);
          }
          return to_py(rep);
        },
        py::arg("model_path"), py::arg("prompts"), py::arg("out_dir"),
        py::arg("color_image") = py::none(), py::arg("config") = py::none());
  m.def("compose",
        [](const std::vector<std::string>& models, const std::vector<double>& weights,
           const std::vector<std::string>& prompts, const std::string& out,
           const std::optional<std::string>& color_image, const py::object& cfg) {
          const auto req = sample_request(prompts, color_image, cfg);
          json rep;
          {
            py::gil_scoped_release release;
            rep = pipeline::compose(models, weights, req, out);
          }
          return to_py(rep);
        },
        py::arg("model_paths"), py::arg("weights"), py::arg("prompts"), py::arg("out_dir"),
        py::arg("color_image") = py::none(), py::arg("config") = py::none());
  m.def("evaluate",
        [](const std::string& model, const std::string& data, const std::string& out,
           const py::object& cfg, const std::optional<std::string>& baseline) {
          const auto rc = run_config(cfg);
          pipeline::EvalRequest req{rc.eval, rc.sample, baseline};
          json rep;
          {
            py::gil_scoped_release release;
            rep = pipeline::eval(model, data, req, out);
          }
          return to_py(rep);
        },
        py::arg("model_path"), py::arg("data_dir"), py::arg("out_dir"),
        py::arg("config") = py::none(), py::arg("baseline_model") = py::none());
  m.def("read_model_header",
        [](const std::string& path) { return to_py(store::read_model(path).header); },
        py::arg("path"));

  m.def("srgb_to_lab",
        [](double r, double g, double b) {
          const auto lab = colorlab::srgb_to_lab({r, g, b});
          return py::make_tuple(lab.L, lab.a, lab.b);
        },
        py::arg("r"), py::arg("g"), py::arg("b"));
  m.def("lab_histogram",
        [](const F64& patch, std::array<int, 3> bins) {
          colorlab::HistogramLayout layout;
          layout.nL = bins[0];
          layout.nA = bins[1];
          layout.nB = bins[2];
          const auto h = colorlab::lab_histogram(to_patch(patch), layout);
          return py::array_t<double>(h.values.size(), h.values.data());
        },
        py::arg("patch"), py::arg("bins") = std::array<int, 3>{4, 4, 4});
  m.def("hellinger", [](const F64& a, const F64& b) { return colorlab::hellinger(flat_hist(a), flat_hist(b)); },
        py::arg("h1"), py::arg("h2"));
  m.def("kl_divergence",
        [](const F64& a, const F64& b, double eps) {
          return colorlab::kl_divergence(flat_hist(a), flat_hist(b), eps);
        },
        py::arg("h1"), py::arg("h2"), py::arg("eps") = 1e-8);
  m.def("frechet_distance",
        [](const F64& mu1, const F64& cov1, const F64& mu2, const F64& cov2) {
          return evalx::frechet_distance({to_vec(mu1), to_mat(cov1), 2}, {to_vec(mu2), to_mat(cov2), 2});
        },
        py::arg("mu1"), py::arg("cov1"), py::arg("mu2"), py::arg("cov2"));

  m.def("alpha_bar",
        [](const std::string& kind, int T) {
          return diffusion::make_schedule(diffusion::parse_schedule(kind), T).alpha_bar;
        },
        py::arg("kind") = "cosine", py::arg("T") = 1000);
  m.def("ddim_timesteps", &diffusion::ddim_timesteps, py::arg("T"), py::arg("steps"));

  m.def("read_tensor",
        [](const std::string& path) {
          const auto t = io::read_tensor(path);
          std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
          py::array_t<float> out(shape);
          std::copy(t.data.begin(), t.data.end(), out.mutable_data());
          return out;
        },
        py::arg("path"));
  m.def("write_tensor",
        [](const std::string& path, const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
          io::Tensor t;
          for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint64_t>(a.shape(i)));
          t.data.assign(a.data(), a.data() + a.size());
          io::write_tensor(path, t);
        },
        py::arg("path"), py::arg("array"));
}
