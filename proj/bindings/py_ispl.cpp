#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ispl/config.hpp"
#include "ispl/report.hpp"
#include "ispl/viz.hpp"
#include "json.hpp"

namespace py = pybind11;
using namespace ispl;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageBatch to_batch(const DoubleArray& arr) {
    check(arr.ndim() == 4, "expected a (N, C, H, W) float array");
    Tensor t({arr.shape(0), arr.shape(1), arr.shape(2), arr.shape(3)});
    std::copy(arr.data(), arr.data() + t.numel(), t.data());
    return ImageBatch(std::move(t));
}

py::array from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.numel(), arr.mutable_data());
    return arr;
}

DegradationSpec spec_from_json_str(const std::string& text) {
    return DegradationSpec::from_json(text);
}

class PyModel {
public:
    PyModel(const std::string& config_json, uint64_t seed)
        : model_(ModelConfig::from_json(config_json), seed) {}
    explicit PyModel(IsplModel model) : model_(std::move(model)) {}

    static PyModel load(const std::string& path) {
        return PyModel(IsplModel::load_checkpoint_file(path));
    }

    std::string config_json() const { return model_.config().to_json(); }

    py::array restore_dynamic(const DoubleArray& img) const {
        return from_tensor(model_.restore_dynamic(to_batch(img)).data);
    }
    py::array restore_fixed_k(const DoubleArray& img, int k) const {
        return from_tensor(model_.restore_fixed_k(to_batch(img), k).data);
    }
    py::array isolate_subspace(const DoubleArray& img, int level, double constant) const {
        return from_tensor(model_.isolate_subspace(to_batch(img), level, constant).data);
    }
    py::list encode(const DoubleArray& img) const {
        py::list out;
        for (const auto& level : model_.encode(to_batch(img)).levels)
            out.append(from_tensor(level));
        return out;
    }
    py::list discriminate(const DoubleArray& img) const {
        py::list out;
        for (const auto& [score, feats] : model_.discriminate(to_batch(img))) {
            py::list fl;
            for (const auto& f : feats) fl.append(from_tensor(f));
            out.append(py::make_tuple(from_tensor(score), fl));
        }
        return out;
    }
    py::array subspace_panels(const DoubleArray& img, double constant) const {
        return from_tensor(viz::subspace_panels(to_batch(img), model_, constant).data);
    }
    void save(const std::string& path, const std::string& meta_json) const {
        model_.save_checkpoint(path, meta_json);
    }

    const IsplModel& model() const { return model_; }

private:
    IsplModel model_;
};

py::dict train_pairs(const DoubleArray& lq, const DoubleArray& hq,
                     const std::string& model_config_json, py::dict schedule_kwargs,
                     uint64_t seed, const std::string& out_dir, uint64_t extractor_seed,
                     double lambda_fm, double lambda_perc) {
    InMemoryPairs pairs(to_batch(lq), to_batch(hq));
    IsplModel model(ModelConfig::from_json(model_config_json), seed);

    TrainSchedule sched;
    if (schedule_kwargs.contains("lr")) sched.lr = schedule_kwargs["lr"].cast<double>();
    if (schedule_kwargs.contains("batch_size"))
        sched.batch_size = schedule_kwargs["batch_size"].cast<int>();
    if (schedule_kwargs.contains("epochs_constant"))
        sched.epochs_constant = schedule_kwargs["epochs_constant"].cast<int>();
    if (schedule_kwargs.contains("epochs_decay"))
        sched.epochs_decay = schedule_kwargs["epochs_decay"].cast<int>();
    if (schedule_kwargs.contains("max_steps"))
        sched.max_steps = schedule_kwargs["max_steps"].cast<int>();
    sched.log_every = 1000000;  // keep the log file small from python

    RandomProjectionExtractor extractor(extractor_seed);
    TrainOptions opt;
    opt.out_dir = out_dir;
    opt.seed = seed;
    auto result = train(pairs, model, sched, LossWeights{lambda_fm, lambda_perc}, extractor,
                        opt);
    py::dict out;
    out["final_checkpoint"] = result.final_checkpoint;
    out["steps_run"] = result.steps_run;
    out["first_g_total"] = result.records.empty() ? 0.0 : result.records.front().g_total;
    out["last_g_total"] = result.records.empty() ? 0.0 : result.records.back().g_total;
    return out;
}

std::string eval_pairs(const PyModel& model, const DoubleArray& lq, const DoubleArray& hq,
                       const std::string& protocol, const std::string& train_domain,
                       uint64_t extractor_seed) {
    InMemoryPairs pairs(to_batch(lq), to_batch(hq));
    RandomProjectionExtractor extractor(extractor_seed);
    CentroidLandmarkDetector detector;
    auto report = run_protocol(model.model(), train_domain, pairs,
                               protocol_from_string(protocol), extractor, detector,
                               {"py", "inmemory", std::nullopt});
    return report.to_json();
}

}  // namespace

PYBIND11_MODULE(_ispl, m) {
    m.doc() = "Implicit subspace prior learning for dual-blind image restoration";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);

    // Degradation operations.
    m.def("sample_spec",
          [](const std::string& task, uint64_t seed) {
              return degrade::sample_spec(task_from_string(task), seed).to_json();
          },
          py::arg("task"), py::arg("seed"),
          "Draw a degradation spec (JSON) for one of the six tasks");
    m.def("apply_degradation",
          [](const DoubleArray& img, const std::string& spec_json) {
              return from_tensor(degrade::apply(to_batch(img), spec_from_json_str(spec_json)).data);
          },
          py::arg("images"), py::arg("spec_json"));
    m.def("convolve_blur", [](const DoubleArray& img, const DoubleArray& kernel) {
        check(kernel.ndim() == 2, "kernel must be 2D");
        Tensor k({kernel.shape(0), kernel.shape(1)});
        std::copy(kernel.data(), kernel.data() + k.numel(), k.data());
        return from_tensor(degrade::convolve_blur(to_batch(img), k).data);
    });
    m.def("downsample_bicubic", [](const DoubleArray& img, int scale) {
        return from_tensor(degrade::downsample_bicubic(to_batch(img), scale).data);
    });
    m.def("resample_bicubic", [](const DoubleArray& img, int64_t h, int64_t w) {
        return from_tensor(degrade::resample_bicubic(to_batch(img), h, w).data);
    });
    m.def("mosaic", [](const DoubleArray& img, int block) {
        return from_tensor(degrade::mosaic(to_batch(img), block).data);
    });
    m.def("add_noise", [](const DoubleArray& img, const std::string& model, double level,
                          uint64_t seed) {
        return from_tensor(
            degrade::add_noise(to_batch(img), noise_model_from_string(model), level, seed).data);
    });
    m.def("jpeg_roundtrip", [](const DoubleArray& img, int quality) {
        return from_tensor(degrade::jpeg_roundtrip(to_batch(img), quality).data);
    });

    // Metrics.
    m.def("psnr", [](const DoubleArray& a, const DoubleArray& b) {
        return metrics::psnr(to_batch(a), to_batch(b));
    });
    m.def("ssim", [](const DoubleArray& a, const DoubleArray& b) {
        return metrics::ssim(to_batch(a), to_batch(b));
    });
    m.def("ms_ssim", [](const DoubleArray& a, const DoubleArray& b) {
        int scales = 0;
        const double v = metrics::ms_ssim(to_batch(a), to_batch(b), &scales);
        return py::make_tuple(v, scales);
    });
    m.def("fid_from_embeddings", [](const DoubleArray& a, const DoubleArray& b) {
        check(a.ndim() == 2 && b.ndim() == 2, "embeddings must be (N, dim)");
        Tensor ta({a.shape(0), a.shape(1)}), tb({b.shape(0), b.shape(1)});
        std::copy(a.data(), a.data() + ta.numel(), ta.data());
        std::copy(b.data(), b.data() + tb.numel(), tb.data());
        return metrics::fid_from_embeddings(ta, tb);
    });
    m.def("fid", [](const DoubleArray& real, const DoubleArray& gen, uint64_t extractor_seed) {
        RandomProjectionExtractor ex(extractor_seed);
        return metrics::fid(to_batch(real), to_batch(gen), ex);
    });
    m.def("lpips_like", [](const DoubleArray& a, const DoubleArray& b,
                           uint64_t extractor_seed) {
        RandomProjectionExtractor ex(extractor_seed);
        return metrics::lpips_like(to_batch(a), to_batch(b), ex);
    });
    m.def("fed", [](const DoubleArray& a, const DoubleArray& b, uint64_t extractor_seed) {
        RandomProjectionExtractor ex(extractor_seed);
        return metrics::fed(to_batch(a), to_batch(b), ex);
    });

    // Training schedule helper.
    m.def("lr_at", [](int epoch, double lr, int epochs_constant, int epochs_decay) {
        TrainSchedule s;
        s.lr = lr;
        s.epochs_constant = epochs_constant;
        s.epochs_decay = epochs_decay;
        return lr_at(epoch, s);
    });

    // Domain-gap arithmetic on aggregate values.
    m.def("domain_gap", [](double s2s_fid, double s2s_lpips, double s2r_fid, double s2r_lpips) {
        return 0.5 * (s2r_fid / s2s_fid + s2r_lpips / s2s_lpips);
    });
    m.def("r2r_gain", [](double s2r_fid, double s2r_lpips, double r2r_fid, double r2r_lpips) {
        return 100.0 * 0.5 *
               ((s2r_fid - r2r_fid) / s2r_fid + (s2r_lpips - r2r_lpips) / s2r_lpips);
    });

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&, uint64_t>(), py::arg("config_json"), py::arg("seed"))
        .def_static("load", &PyModel::load, py::arg("checkpoint_path"))
        .def("config_json", &PyModel::config_json)
        .def("restore_dynamic", &PyModel::restore_dynamic, py::arg("images"))
        .def("restore_fixed_k", &PyModel::restore_fixed_k, py::arg("images"), py::arg("k"))
        .def("isolate_subspace", &PyModel::isolate_subspace, py::arg("images"),
             py::arg("level"), py::arg("constant") = 0.5)
        .def("encode", &PyModel::encode, py::arg("images"))
        .def("discriminate", &PyModel::discriminate, py::arg("images"))
        .def("subspace_panels", &PyModel::subspace_panels, py::arg("images"),
             py::arg("constant") = 0.5)
        .def("save", &PyModel::save, py::arg("path"), py::arg("meta_json") = "{}");

    m.def("train_pairs", &train_pairs, py::arg("lq"), py::arg("hq"),
          py::arg("model_config_json"), py::arg("schedule") = py::dict(), py::arg("seed") = 0,
          py::arg("out_dir") = "/tmp/ispl_py_train", py::arg("extractor_seed") = 1234,
          py::arg("lambda_fm") = 10.0, py::arg("lambda_perc") = 10.0);
    m.def("eval_pairs", &eval_pairs, py::arg("model"), py::arg("lq"), py::arg("hq"),
          py::arg("protocol") = "s2s", py::arg("train_domain") = "synthetic",
          py::arg("extractor_seed") = 1234);
}
