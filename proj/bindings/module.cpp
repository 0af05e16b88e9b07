#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "dufold/checkpoint.hpp"
#include "dufold/config.hpp"
#include "dufold/dataset.hpp"
#include "dufold/errors.hpp"
#include "dufold/denoiser.hpp"
#include "dufold/image_io.hpp"
#include "dufold/linop.hpp"
#include "dufold/metrics.hpp"
#include "dufold/oracle.hpp"
#include "dufold/sampler.hpp"
#include "dufold/schedule.hpp"

namespace py = pybind11;
using namespace dufold;

namespace {

Tensor tensor_from_array(const py::array& arr) {
    if (py::isinstance<py::array_t<std::complex<double>>>(arr)) {
        auto a = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>(arr);
        Shape shape(a.ndim());
        for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
        Tensor t = Tensor::zeros(shape, /*complex=*/true);
        const auto* src = static_cast<const std::complex<double>*>(a.data());
        for (std::size_t i = 0; i < t.numel(); ++i) t.set_cval(i, src[i]);
        return t;
    }
    auto a = py::array_t<double, py::array::c_style | py::array::forcecast>(arr);
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    std::vector<double> raw(a.data(), a.data() + a.size());
    return Tensor::from_raw(std::move(shape), std::move(raw));
}

py::array array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    if (t.is_complex()) {
        py::array_t<std::complex<double>> out(shape);
        auto* dst = static_cast<std::complex<double>*>(out.mutable_data());
        for (std::size_t i = 0; i < t.numel(); ++i) dst[i] = t.cval(i);
        return out;
    }
    py::array_t<double> out(shape);
    std::copy(t.raw().begin(), t.raw().end(), static_cast<double*>(out.mutable_data()));
    return out;
}

GaussianPriorSpec prior_from_arrays(const py::array& mean, const py::array& cov) {
    GaussianPriorSpec p;
    p.mean = tensor_from_array(mean);
    p.cov = tensor_from_array(cov);
    return p;
}

struct PyOp {
    LinOpPtr op;
};

struct PyModel {
    Config cfg;
    std::unique_ptr<ConditionalDenoiser> den;
};

}  // namespace

PYBIND11_MODULE(_dufold, m) {
    m.doc() = "deep-unfolded conditional diffusion sampling for linear inverse problems";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);

    py::class_<PyOp>(m, "LinearOperator")
        .def_property_readonly("kind",
                               [](const PyOp& h) { return std::string(op_kind_name(h.op->kind())); })
        .def_property_readonly("input_shape", [](const PyOp& h) { return h.op->input_shape(); })
        .def_property_readonly("output_shape", [](const PyOp& h) { return h.op->output_shape(); })
        .def("apply", [](const PyOp& h, const py::array& x) {
            return array_from_tensor(h.op->apply(tensor_from_array(x)));
        })
        .def("adjoint", [](const PyOp& h, const py::array& u) {
            return array_from_tensor(h.op->adjoint(tensor_from_array(u)));
        })
        .def("norm_bound", [](const PyOp& h) { return h.op->norm_bound(); })
        .def("save", [](const PyOp& h, const std::string& path) { save_operator_blob(*h.op, path); });

    py::class_<Measurement>(m, "Measurement")
        .def_property_readonly("y", [](const Measurement& me) { return array_from_tensor(me.y); })
        .def_readonly("sigma_y", &Measurement::sigma_y)
        .def_property_readonly("op", [](const Measurement& me) { return PyOp{me.op}; });

    m.def("make_identity", [](const Shape& shape) { return PyOp{make_identity(shape)}; });
    m.def("make_dense",
          [](const py::array& matrix) { return PyOp{make_dense(tensor_from_array(matrix))}; });
    m.def(
        "make_gaussian_blur",
        [](const Shape& shape, std::size_t size, double s1, double s2, double angle) {
            return PyOp{make_gaussian_blur(shape, size, s1, s2, angle)};
        },
        py::arg("image_shape"), py::arg("size"), py::arg("sigma1"), py::arg("sigma2"),
        py::arg("angle") = 0.0);
    m.def("make_superres", [](const Shape& shape, std::size_t factor) {
        return PyOp{make_superres(shape, factor)};
    });
    m.def(
        "make_inpainting",
        [](double drop_p, const Shape& shape, std::uint64_t seed) {
            Rng rng(seed);
            return PyOp{make_inpainting(drop_p, shape, rng)};
        },
        py::arg("drop_p"), py::arg("image_shape"), py::arg("seed") = 0);
    m.def(
        "make_mri",
        [](const Shape& shape, std::size_t coils, const std::string& pattern, double accel,
           std::uint64_t seed) {
            MaskSpec spec;
            if (pattern == "uniform1d") spec.pattern = MaskSpec::Pattern::uniform1d;
            else if (pattern == "gaussian1d") spec.pattern = MaskSpec::Pattern::gaussian1d;
            else if (pattern == "gaussian2d") spec.pattern = MaskSpec::Pattern::gaussian2d;
            else if (pattern == "dust") spec.pattern = MaskSpec::Pattern::dust;
            else throw ArgumentError("unknown mask pattern '" + pattern + "'");
            spec.accel = accel;
            spec.seed = seed;
            Rng rng(seed);
            return PyOp{make_mri(shape, coils, spec, rng)};
        },
        py::arg("image_shape"), py::arg("coils") = 4, py::arg("pattern") = "uniform1d",
        py::arg("accel") = 4.0, py::arg("seed") = 0);
    m.def("load_operator", [](const std::string& path) { return PyOp{load_operator_blob(path)}; });

    m.def(
        "measure",
        [](const PyOp& h, const py::array& x, double sigma_y, std::uint64_t seed) {
            Rng rng(seed);
            return measure(h.op, tensor_from_array(x), sigma_y, rng);
        },
        py::arg("op"), py::arg("x"), py::arg("sigma_y") = 0.0, py::arg("seed") = 0);
    m.def("data_fidelity_gradient",
          [](const PyOp& h, const py::array& x, const Measurement& meas) {
              return array_from_tensor(data_fidelity_gradient(*h.op, tensor_from_array(x), meas));
          });

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def(py::init([](const std::string& family, double sigma_min, double sigma_max, double rho) {
                 NoiseSchedule s = NoiseSchedule::for_family(schedule_family_from_name(family));
                 if (sigma_min > 0) s.sigma_min = sigma_min;
                 if (sigma_max > 0) s.sigma_max = sigma_max;
                 if (rho > 0) s.rho = rho;
                 return s;
             }),
             py::arg("family") = "edm", py::arg("sigma_min") = 0.0, py::arg("sigma_max") = 0.0,
             py::arg("rho") = 0.0)
        .def_readonly("sigma_min", &NoiseSchedule::sigma_min)
        .def_readonly("sigma_max", &NoiseSchedule::sigma_max);

    m.def("sigma_at", &sigma_at);
    m.def("step_grid", [](const NoiseSchedule& s, int nfe) { return step_grid(s, nfe).sigmas; });
    m.def(
        "precondition_coeffs",
        [](double sigma, double sigma_data, const std::string& family) {
            Preconditioner pre{schedule_family_from_name(family), sigma_data};
            const PrecondCoeffs c = precondition_coeffs(pre, sigma);
            return py::make_tuple(c.c_skip, c.c_out, c.c_in, c.c_noise);
        },
        py::arg("sigma"), py::arg("sigma_data") = 0.5, py::arg("family") = "edm");

    m.def("psnr", [](const py::array& x, const py::array& ref, double peak) {
        return psnr(tensor_from_array(x), tensor_from_array(ref), peak);
    }, py::arg("x"), py::arg("ref"), py::arg("peak") = 1.0);
    m.def("ssim", [](const py::array& x, const py::array& ref, double peak) {
        return ssim(tensor_from_array(x), tensor_from_array(ref), peak);
    }, py::arg("x"), py::arg("ref"), py::arg("peak") = 1.0);

    m.def("gaussian_posterior", [](const py::array& mean, const py::array& cov, const py::array& A,
                                   double sigma_y, const py::array& y) {
        const AnalyticPosterior post =
            gaussian_posterior(prior_from_arrays(mean, cov), tensor_from_array(A), sigma_y,
                               tensor_from_array(y));
        return py::make_tuple(array_from_tensor(post.mean), array_from_tensor(post.cov));
    });
    m.def("gaussian_mmse", [](const py::array& mean, const py::array& cov, const py::array& A,
                              double sigma_y, const py::array& y, double sigma_t,
                              const py::array& x_t) {
        return array_from_tensor(gaussian_mmse(prior_from_arrays(mean, cov), tensor_from_array(A),
                                               sigma_y, tensor_from_array(y), sigma_t,
                                               tensor_from_array(x_t)));
    });
    m.def("gaussian_conditional_score",
          [](const py::array& mean, const py::array& cov, const py::array& A, double sigma_y,
             const py::array& y, double sigma_t, const py::array& x_t) {
              return array_from_tensor(
                  gaussian_conditional_score(prior_from_arrays(mean, cov), tensor_from_array(A),
                                             sigma_y, tensor_from_array(y), sigma_t,
                                             tensor_from_array(x_t)));
          });
    m.def("composite_argmin_quadratic",
          [](const py::array& mean, const py::array& cov, const py::array& A, double sigma_y,
             const py::array& y, double sigma_t, const py::array& x_t) {
              return array_from_tensor(
                  composite_argmin_quadratic(prior_from_arrays(mean, cov), tensor_from_array(A),
                                             sigma_y, tensor_from_array(y), sigma_t,
                                             tensor_from_array(x_t)));
          });
    m.def("oracle_sweep", [](int configs, std::uint64_t seed) {
        const OracleSweepResult r = oracle_sweep(configs, seed);
        return py::make_tuple(r.max_residual_b, r.max_residual_a);
    }, py::arg("configs") = 100, py::arg("seed") = 0);

    py::class_<PyModel>(m, "Model")
        .def(py::init([](const std::string& config_text, const std::string& checkpoint_path) {
                 auto model = std::make_unique<PyModel>();
                 model->cfg = parse_config(config_text);
                 Rng rng(model->cfg.seed ^ 0xDE70153Full);
                 model->den = std::make_unique<ConditionalDenoiser>(
                     model->cfg.denoiser, model->cfg.schedule, model->cfg.precond, rng);
                 if (!checkpoint_path.empty()) {
                     const CheckpointData data = load_checkpoint(checkpoint_path);
                     restore_params(data, model->den->params(), /*prefer_ema=*/true);
                 }
                 return model;
             }),
             py::arg("config_text") = "", py::arg("checkpoint") = "")
        .def("denoise",
             [](const PyModel& model, const py::array& x_t, const Measurement& meas, double sigma_t) {
                 return array_from_tensor(model.den->denoise(
                     tensor_from_array(x_t), meas, *meas.op, sigma_t,
                     noise_time(model.cfg.schedule, sigma_t)));
             })
        .def(
            "sample",
            [](const PyModel& model, const Measurement& meas, int nfe, std::uint64_t seed) {
                SamplerConfig sc = model.cfg.sampler;
                if (nfe >= 1) sc.nfe = nfe;
                sc.seed = seed;
                return array_from_tensor(
                    sample(meas, *meas.op, *model.den, model.cfg.schedule, sc));
            },
            py::arg("measurement"), py::arg("nfe") = -1, py::arg("seed") = 0);

    m.def(
        "gen_synthetic",
        [](const std::string& kind, int n, std::size_t size, std::uint64_t seed) {
            Rng rng(seed);
            ImageDataset ds = gen_synthetic(synth_kind_from_name(kind), n, size, rng);
            py::list out;
            for (const auto& item : ds.items) out.append(array_from_tensor(item));
            return out;
        },
        py::arg("kind") = "shapes", py::arg("n") = 1, py::arg("size") = 64, py::arg("seed") = 0);
    m.def("load_png", [](const std::string& path) { return array_from_tensor(load_png(path)); });
    m.def("save_png", [](const std::string& path, const py::array& img, int bits) {
        save_png(path, tensor_from_array(img), bits);
    }, py::arg("path"), py::arg("image"), py::arg("bits") = 8);

    m.def("default_config", &default_config_text);
    m.def("config_fingerprint",
          [](const std::string& text) { return parse_config(text).fingerprint; });
}
