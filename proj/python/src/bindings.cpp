// SPDX-License-Identifier: Apache-2.0
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "usrn/checkpoint.hpp"
#include "usrn/cli.hpp"
#include "usrn/errors.hpp"
#include "usrn/losses.hpp"
#include "usrn/metrics.hpp"
#include "usrn/run_config.hpp"
#include "usrn/training.hpp"

namespace py = pybind11;
using namespace usrn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Volumes cross the boundary as (nz, ny, nx) arrays so that x is the fastest axis.
py::array_t<float> volume_to_array(const VolumeGrid& v) {
  py::array_t<float> out({v.dims.nz, v.dims.ny, v.dims.nx});
  std::copy(v.values.begin(), v.values.end(), out.mutable_data());
  return out;
}

Dims dims_of(const py::buffer_info& info) {
  if (info.ndim != 3) throw InvalidArgument("expected a 3-d array shaped (nz, ny, nx)");
  return {static_cast<int>(info.shape[2]), static_cast<int>(info.shape[1]), static_cast<int>(info.shape[0])};
}

VolumeGrid array_to_volume(const FloatArray& a, bool normalize) {
  const auto info = a.request();
  const Dims dims = dims_of(info);
  const auto* p = static_cast<const float*>(info.ptr);
  VolumeGrid v = make_volume(dims, std::vector<float>(p, p + dims.count()));
  return normalize ? normalize_volume(v) : v;
}

py::array_t<double> field_to_array(const Dims& d, const std::vector<Scalar>& values) {
  py::array_t<double> out({d.nz, d.ny, d.nx});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

std::span<const Scalar> flat(const DoubleArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

Matrix coords_of(const DoubleArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidArgument("coordinates must be shaped (n, 3)");
  return Eigen::Map<const Matrix>(a.data(), a.shape(0), 3);
}

py::dict history_dict(const std::vector<LossReport>& history) {
  std::vector<std::int64_t> step;
  std::vector<Scalar> lr, lambda, member, var, total;
  for (const auto& r : history) {
    step.push_back(r.step);
    lr.push_back(r.lr);
    lambda.push_back(r.lambda);
    member.push_back(r.member);
    var.push_back(r.variance_reg);
    total.push_back(r.total);
  }
  py::dict d;
  d["step"] = py::array(py::cast(step));
  d["lr"] = py::array(py::cast(lr));
  d["lambda"] = py::array(py::cast(lambda));
  d["member"] = py::array(py::cast(member));
  d["variance_reg"] = py::array(py::cast(var));
  d["total"] = py::array(py::cast(total));
  return d;
}

struct PyModel {
  UncertainModel model;
  TrainingMetadata meta;
  RenderSettings render;
};

Camera camera_for(const RenderSettings& s, int width, int height) {
  Camera cam = s.camera;
  if (width > 0) cam.width = width;
  if (height > 0) cam.height = height;
  return cam;
}

py::array_t<double> image_to_array(const RenderedImage& img) {
  py::array_t<double> out({img.height, img.width, 4});
  std::copy(img.rgba.begin(), img.rgba.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Neural volume representations with uncertainty estimates";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<FileNotFound>(m, "FileNotFound", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<VersionError>(m, "VersionError", format.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  // Volumes
  m.def(
      "demo_volume",
      [](std::array<int, 3> dims, std::uint64_t seed, int blobs) {
        return volume_to_array(make_synthetic_volume(demo_synthetic_spec({dims[0], dims[1], dims[2]}, seed, blobs)));
      },
      py::arg("dims"), py::arg("seed") = 0, py::arg("blobs") = 4,
      "Normalized demo field; dims are (nx, ny, nz), the result is shaped (nz, ny, nx).");
  m.def(
      "load_volume",
      [](const std::string& config, const std::vector<std::string>& overrides) {
        return volume_to_array(load_volume(load_run_config(config, overrides).volume));
      },
      py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
      "Normalized training volume described by a run configuration.");
  m.def(
      "normalize",
      [](const FloatArray& a) { return volume_to_array(array_to_volume(a, true)); }, py::arg("volume"));
  m.def(
      "sample_trilinear",
      [](const FloatArray& a, const DoubleArray& coords) {
        const VolumeGrid v = array_to_volume(a, false);
        const Matrix c = coords_of(coords);
        py::array_t<double> out(c.rows());
        for (Eigen::Index i = 0; i < c.rows(); ++i) out.mutable_at(i) = sample_trilinear(v, c.row(i).transpose());
        return out;
      },
      py::arg("volume"), py::arg("coords"));

  // Training
  py::class_<PyModel>(m, "Model")
      .def_property_readonly("kind", [](const PyModel& p) { return to_string(p.model.kind); })
      .def_property_readonly("parameter_count", [](const PyModel& p) { return p.model.parameter_count(); })
      .def_property_readonly("member_count", [](const PyModel& p) { return p.model.member_count(); })
      .def_property_readonly("config", [](const PyModel& p) { return p.meta.config; })
      .def(
          "predict",
          [](const PyModel& p, const DoubleArray& coords, std::uint64_t stream) {
            const Matrix c = coords_of(coords);
            PredictionStats s;
            {
              py::gil_scoped_release release;
              s = predict_stats(p.model, c, stream);
            }
            return py::make_tuple(py::array(py::cast(std::vector<Scalar>(s.mean.begin(), s.mean.end()))),
                                  py::array(py::cast(std::vector<Scalar>(s.variance.begin(), s.variance.end()))));
          },
          py::arg("coords"), py::arg("stream") = 0, "Mean and variance at (n, 3) coordinates in [-1, 1].")
      .def(
          "members",
          [](const PyModel& p, const DoubleArray& coords, std::uint64_t stream) {
            const Matrix c = coords_of(coords);
            py::gil_scoped_release release;
            return predict_member_matrix(p.model, c, stream);
          },
          py::arg("coords"), py::arg("stream") = 0, "Per-member predictions, shaped (members, n).")
      .def(
          "reconstruct",
          [](const PyModel& p, std::array<int, 3> dims) {
            const Dims d{dims[0], dims[1], dims[2]};
            ReconstructedFields f;
            {
              py::gil_scoped_release release;
              f = reconstruct_fields(p.model, d);
            }
            return py::make_tuple(field_to_array(d, f.mean), field_to_array(d, f.variance));
          },
          py::arg("dims"), "Mean and variance on the vertex grid (nx, ny, nz), shaped (nz, ny, nx).")
      .def(
          "evaluate",
          [](const PyModel& p, const FloatArray& truth, const std::string& label) {
            const VolumeGrid v = array_to_volume(truth, false);
            ReconstructedFields f;
            {
              py::gil_scoped_release release;
              f = reconstruct_fields(p.model, v.dims);
            }
            const MetricRow r = evaluate_fields(label, f.mean, f.variance, v);
            py::dict d;
            d["model"] = r.model;
            d["psnr_db"] = r.psnr_db;
            d["corr"] = r.corr;
            d["jist_1pct"] = r.jist_1pct;
            d["jist_5pct"] = r.jist_5pct;
            d["nll"] = r.nll;
            return d;
          },
          py::arg("truth"), py::arg("label") = "model")
      .def(
          "render",
          [](const PyModel& p, const std::string& mode, int width, int height) {
            const Camera cam = camera_for(p.render, width, height);
            const TransferFunction tf = transfer_function_for(p.render);
            RenderConfig cfg = render_config_for(p.render, {64, 64, 64});
            RenderedImage img;
            py::gil_scoped_release release;
            if (mode == "mean") {
              img = raymarch_mean(ModelMeanSampler(p.model), cam, tf, cfg);
            } else if (mode == "statistical") {
              img = raymarch_statistical(ModelMemberSampler(p.model), cam, tf, cfg);
            } else {
              throw InvalidArgument("render mode must be mean or statistical");
            }
            py::gil_scoped_acquire acquire;
            return image_to_array(img);
          },
          py::arg("mode") = "mean", py::arg("width") = 0, py::arg("height") = 0,
          "RGBA image shaped (height, width, 4); 0 keeps the configured size.")
      .def(
          "save",
          [](const PyModel& p, const std::filesystem::path& path) { save_checkpoint(p.model, p.meta, path); },
          py::arg("path"));

  m.def(
      "train",
      [](py::object volume, const std::string& config, const std::vector<std::string>& overrides) {
        const RunConfig rc = load_run_config(config, overrides);
        const VolumeGrid v = volume.is_none() ? load_volume(rc.volume) : array_to_volume(volume.cast<FloatArray>(), true);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_model(v, rc.train);
        }
        PyModel out{std::move(r.model), {rc.train.steps, rc.train.seed, config_echo(rc)}, rc.render};
        return py::make_tuple(std::move(out), history_dict(r.history));
      },
      py::arg("volume") = py::none(), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
      "Trains the configured model. Returns (model, history). A given volume is normalized first.");
  m.def(
      "load_model",
      [](const std::filesystem::path& path) {
        CheckpointInfo info;
        UncertainModel model = load_checkpoint(path, &info);
        return PyModel{std::move(model), info.training, {}};
      },
      py::arg("path"));

  // Schedules and metrics
  m.def(
      "lambda_at",
      [](Scalar lambda_min, Scalar lambda_max, Scalar rate, std::int64_t t_max, std::int64_t t) {
        return lambda_at(LambdaSchedule{lambda_min, lambda_max, rate, t_max}, t);
      },
      py::arg("lambda_min"), py::arg("lambda_max"), py::arg("rate"), py::arg("t_max"), py::arg("t"));
  m.def(
      "psnr", [](const DoubleArray& pred, const DoubleArray& truth, Scalar peak) { return psnr(flat(pred), flat(truth), peak); },
      py::arg("pred"), py::arg("truth"), py::arg("peak") = 1.0);
  m.def(
      "pearson", [](const DoubleArray& a, const DoubleArray& b) { return pearson_correlation(flat(a), flat(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "gaussian_nll",
      [](const DoubleArray& mean, const DoubleArray& var, const DoubleArray& truth, Scalar floor) {
        return gaussian_nll(flat(mean), flat(var), flat(truth), floor);
      },
      py::arg("mean"), py::arg("variance"), py::arg("truth"), py::arg("floor") = 1e-6);
  m.def(
      "jaccard_spatial_tolerance",
      [](const DoubleArray& variance, const DoubleArray& error, Scalar fraction, int radius) {
        const Dims d = dims_of(variance.request());
        return jaccard_spatial_tolerance(flat(variance), flat(error), d, fraction, radius);
      },
      py::arg("variance"), py::arg("error"), py::arg("fraction"), py::arg("radius") = 1,
      "Both fields shaped (nz, ny, nx).");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_command(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command-line invocation in process. Returns (exit_code, stdout, stderr).");
  m.def("default_config", &default_config_text);
}
