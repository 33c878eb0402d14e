#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "simtune/cli.hpp"
#include "simtune/eval.hpp"
#include "simtune/gradcheck_suite.hpp"
#include "simtune/losses.hpp"
#include "simtune/synthdata.hpp"
#include "simtune/trainer.hpp"

namespace py = pybind11;
using namespace simtune;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "expected a 2-d array");
    const auto r = static_cast<std::size_t>(a.shape(0));
    const auto c = static_cast<std::size_t>(a.shape(1));
    return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.values().begin(), m.values().end(), out.mutable_data());
    return out;
}

nlohmann::json to_json(const py::object& obj) {
    if (obj.is_none()) return nlohmann::json::object();
    const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return nlohmann::json::parse(text);
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::tuple loss_tuple(const LossValue& v) {
    py::list grads;
    for (const Matrix& g : v.grads) grads.append(to_array(g));
    return py::make_tuple(v.value, grads);
}

}  // namespace

PYBIND11_MODULE(_simtune, m) {
    m.doc() = "Similarity-regularized fine-tuning core";
    m.attr("__version__") = std::string(kVersion);

    static py::exception<Error> error(m, "SimtuneError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::handle(error.ptr())(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    // losses: each returns (value, [grad per input])
    m.def("contrastive_loss",
          [](const Array& u, const Array& v, double tau) { return loss_tuple(contrastive_loss(to_matrix(u), to_matrix(v), tau)); },
          py::arg("u"), py::arg("v"), py::arg("tau"));
    m.def("clip_symmetric_loss",
          [](const Array& img, const Array& txt, double tau) {
              return loss_tuple(clip_symmetric_loss(to_matrix(img), to_matrix(txt), tau));
          },
          py::arg("img"), py::arg("txt"), py::arg("tau"));
    m.def("triplet_loss",
          [](const Array& a, const Array& p, const Array& n, double margin, const std::string& metric) {
              return loss_tuple(triplet_loss(to_matrix(a), to_matrix(p), to_matrix(n), margin,
                                             triplet_metric_from_string(metric)));
          },
          py::arg("anchor"), py::arg("positive"), py::arg("negative"), py::arg("margin"),
          py::arg("metric") = "euclidean");
    m.def("arc_margin_loss",
          [](const Array& emb, const std::vector<int>& labels, const Array& w, double scale, double margin) {
              return loss_tuple(arc_margin_loss(to_matrix(emb), labels, to_matrix(w), scale, margin));
          },
          py::arg("emb"), py::arg("labels"), py::arg("class_weights"), py::arg("scale") = 64.0,
          py::arg("margin") = 0.5);

    // metrics
    m.def("tar_at_far",
          [](const std::vector<double>& genuine, const std::vector<double>& impostor, const std::vector<double>& fars) {
              py::list out;
              for (const TarPoint& p : tar_at_far(ScoreSet{genuine, impostor}, fars))
                  out.append(py::dict(py::arg("far") = p.far_target, py::arg("threshold") = p.threshold,
                                      py::arg("tar") = p.tar));
              return out;
          },
          py::arg("genuine"), py::arg("impostor"), py::arg("fars"));
    m.def("retrieval_at_k",
          [](const Array& sim, const std::vector<std::size_t>& truth, const std::vector<std::size_t>& ks) {
              return retrieval_at_k(to_matrix(sim), truth, ks);
          },
          py::arg("sim"), py::arg("truth"), py::arg("ks"));
    m.def("zero_shot_predict",
          [](const Array& img, const Array& cls) { return zero_shot_predict(to_matrix(img), to_matrix(cls)); },
          py::arg("img_emb"), py::arg("class_emb"));
    m.def("cluster_variance",
          [](const Array& emb, const std::vector<int>& labels, bool normalize) {
              return cluster_variance(to_matrix(emb), labels, normalize);
          },
          py::arg("emb"), py::arg("labels"), py::arg("normalize") = true);
    m.def("verification_scores",
          [](const Array& emb, const std::vector<int>& labels) {
              const ScoreSet s = verification_scores(to_matrix(emb), labels);
              return py::make_tuple(s.genuine, s.impostor);
          },
          py::arg("emb"), py::arg("labels"));

    m.def("lr_at", [](std::size_t k, const py::object& config) { return lr_at(k, train_config_from_json(to_json(config))); },
          py::arg("k"), py::arg("config") = py::none());

    m.def("gradcheck",
          [](std::size_t instances, std::uint64_t seed, const std::string& corrupt) {
              py::list out;
              for (const auto& r : run_gradcheck(default_gradcheck_cases(), instances, seed, 1e-5, corrupt))
                  out.append(py::dict(py::arg("loss") = r.name, py::arg("instances") = r.instances,
                                      py::arg("max_rel_err") = r.max_rel_err, py::arg("passed") = r.passed));
              return out;
          },
          py::arg("instances") = 100, py::arg("seed") = 0, py::arg("corrupt") = "");

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("x", [](const Dataset& d) { return to_array(d.x); })
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("domains", &Dataset::domains)
        .def("classes", &Dataset::classes)
        .def("__len__", &Dataset::size);

    py::class_<DatasetSplits>(m, "DatasetSplits")
        .def_readonly("pretrain", &DatasetSplits::pretrain)
        .def_readonly("finetune_id", &DatasetSplits::finetune_id)
        .def_readonly("test_id", &DatasetSplits::test_id)
        .def_readonly("test_ood", &DatasetSplits::test_ood)
        .def_property_readonly("prototypes", [](const DatasetSplits& s) { return to_array(s.prototypes); })
        .def_property_readonly("task", [](const DatasetSplits& s) { return std::string(to_string(s.task)); })
        .def_property_readonly("probe_inputs", [](const DatasetSplits& s) { return to_array(probe_inputs(s)); })
        .def("split", py::overload_cast<std::string_view>(&DatasetSplits::split, py::const_),
             py::return_value_policy::reference_internal);

    m.def("generate",
          [](const py::object& spec, const std::string& task) {
              return generate(spec_from_json(to_json(spec)), task_from_string(task));
          },
          py::arg("spec") = py::none(), py::arg("task") = "classification");

    py::class_<Model>(m, "Model")
        .def("embed", [](const Model& model, const Array& x) { return to_array(forward_vision(model.vision, to_matrix(x))); },
             py::arg("x"))
        .def("caption_embeddings", [](const Model& model) { return to_array(model.captions.embeddings()); })
        .def("to_json", [](const Model& model) { return model_to_json(model).dump(); })
        .def_static("from_json", [](const std::string& text) { return model_from_json(nlohmann::json::parse(text)); })
        .def("__eq__", [](const Model& a, const Model& b) { return a == b; });

    m.def("pretrain",
          [](const Dataset& broad, const py::object& config) {
              const PretrainConfig c = pretrain_config_from_json(to_json(config));
              py::gil_scoped_release release;
              return pretrain(broad, c);
          },
          py::arg("dataset"), py::arg("config") = py::none());

    m.def("train",
          [](const Model& pretrained, const Dataset& data, const py::object& config) {
              const TrainConfig c = train_config_from_json(to_json(config));
              RunRecord rec;
              {
                  py::gil_scoped_release release;
                  rec = run_training(pretrained, data, c);
              }
              py::list steps;
              for (const StepRecord& s : rec.steps)
                  steps.append(py::dict(py::arg("step") = s.step, py::arg("lr") = s.lr,
                                        py::arg("total_loss") = s.total_loss,
                                        py::arg("contrastive_loss") = s.contrastive_loss,
                                        py::arg("mean_drift") = s.mean_drift));
              py::dict out;
              out["model"] = rec.final_model;
              out["steps"] = steps;
              out["diverged"] = rec.diverged;
              out["failure"] = rec.failure;
              out["config"] = to_py(simtune::to_json(rec.config));
              return out;
          },
          py::arg("pretrained"), py::arg("dataset"), py::arg("config") = py::none());

    m.def("evaluate",
          [](const Model& model, const Model& reference, const Dataset& split, const std::string& protocol,
             const std::string& tag) {
              return evaluate(model, EncoderSnapshot(reference.vision), split, protocol_from_string(protocol), tag)
                  .metrics;
          },
          py::arg("model"), py::arg("reference"), py::arg("split"), py::arg("protocol") = "classification",
          py::arg("tag") = "OOD");

    m.def("mean_drift",
          [](const Model& model, const Model& reference, const Array& x) {
              return mean_drift(model.vision, EncoderSnapshot(reference.vision), to_matrix(x));
          },
          py::arg("model"), py::arg("reference"), py::arg("x"));
}
