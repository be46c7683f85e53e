#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "uiess/cli.hpp"
#include "uiess/datasynth.hpp"
#include "uiess/errors.hpp"
#include "uiess/latentlab.hpp"
#include "uiess/metrics.hpp"

namespace py = pybind11;
using namespace uiess;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

Array to_array(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous();
  Array out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * c.numel());
  return out;
}

Image to_image(const Array& a) {
  if (a.ndim() != 3 || a.shape(0) != 3) throw UsageError("expected a 3xHxW array");
  return Image::from_tensor(to_tensor(a));
}

Rgb to_rgb(const std::vector<double>& v) {
  if (v.size() != 3) throw UsageError("expected three channel values");
  return {v[0], v[1], v[2]};
}

}  // namespace

PYBIND11_MODULE(_uiess, m) {
  m.doc() = "Underwater image enhancement core";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "uiess");
        py::gil_scoped_release release;
        return run_cli(args);
      },
      py::arg("args"), "Runs the command-line interface in-process and returns its exit code.");

  m.def(
      "degrade_jaffe",
      [](const Array& image, const Array& depth, const std::vector<double>& eta, const std::vector<double>& ambient) {
        DegradationParams p{to_rgb(eta), to_rgb(ambient)};
        return to_array(degrade_jaffe(to_image(image), DepthMap::from_tensor(to_tensor(depth)), p).tensor());
      },
      py::arg("image"), py::arg("depth"), py::arg("eta"), py::arg("ambient"));

  m.def(
      "render_clean_scene",
      [](uint64_t seed, int64_t height, int64_t width) {
        const Scene s = render_clean_scene(seed, height, width);
        return py::make_tuple(to_array(s.clean.tensor()), to_array(s.depth.tensor()));
      },
      py::arg("seed"), py::arg("height") = 64, py::arg("width") = 64);

  m.def(
      "build_dataset",
      [](uint64_t seed, int64_t count, const std::filesystem::path& out) {
        return build_dataset(seed, count, out).samples.size();
      },
      py::arg("seed"), py::arg("count"), py::arg("out"));

  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim_metric(to_image(a), to_image(b)); });
  m.def("uiqm", [](const Array& a) {
    const auto r = uiqm(to_image(a));
    return py::dict(py::arg("uicm") = r.uicm, py::arg("uism") = r.uism, py::arg("uiconm") = r.uiconm,
                    py::arg("uiqm") = r.uiqm);
  });
  m.def("uciqe", [](const Array& a) {
    const auto r = uciqe(to_image(a));
    return py::dict(py::arg("chroma_std") = r.chroma_std, py::arg("luminance_contrast") = r.luminance_contrast,
                    py::arg("mean_saturation") = r.mean_saturation, py::arg("uciqe") = r.uciqe);
  });

  m.def(
      "manipulate_style",
      [](const Array& z, const Array& z_clean, double alpha) {
        const StyleLatent a{to_tensor(z).reshape({1, -1}), Domain::Real};
        const StyleLatent b{to_tensor(z_clean).reshape({1, -1}), Domain::Clean};
        return to_array(manipulate_style(a, b, alpha).vector.reshape({-1}));
      },
      py::arg("z"), py::arg("z_clean"), py::arg("alpha"));

  m.def("spearman", &spearman);
  m.def("silhouette", &silhouette);
}
