#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lindistill/analysis.hpp"
#include "lindistill/convert.hpp"
#include "lindistill/distill.hpp"
#include "lindistill/errors.hpp"
#include "lindistill/layers.hpp"
#include "lindistill/losses.hpp"
#include "lindistill/persist.hpp"
#include "lindistill/tasks.hpp"

namespace py = pybind11;
using namespace lindistill;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I32 = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor::from_values(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

py::array_t<std::int32_t> to_array(const std::vector<std::int32_t>& v, std::vector<py::ssize_t> shape) {
    py::array_t<std::int32_t> out(shape);
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<std::int32_t> to_ints(const I32& a) { return {a.data(), a.data() + a.size()}; }

std::vector<Tensor> to_tensors(const std::vector<F64>& arrays) {
    std::vector<Tensor> out;
    for (const auto& a : arrays) out.push_back(to_tensor(a));
    return out;
}

Batch batch_of(const I32& tokens, std::optional<I32> lengths, std::optional<I32> labels) {
    if (tokens.ndim() != 2) throw ShapeError("tokens must be [batch, time]");
    Batch b;
    b.size = static_cast<std::size_t>(tokens.shape(0));
    b.time = static_cast<std::size_t>(tokens.shape(1));
    b.tokens = to_ints(tokens);
    b.lengths = lengths ? to_ints(*lengths) : std::vector<std::int32_t>(b.size, static_cast<std::int32_t>(b.time));
    if (labels) b.labels = to_ints(*labels);
    return b;
}

py::dict record_dict(const StepRecord& r) {
    py::dict d;
    d["step"] = r.step;
    d["ce"] = r.ce;
    d["kd"] = r.kd;
    d["ld"] = r.ld;
    d["total"] = r.total;
    d["teacher"] = r.teacher;
    d["teacher_index"] = r.teacher_index;
    d["teacher_ce"] = r.teacher_ce ? py::cast(*r.teacher_ce) : py::none();
    d["lr"] = r.lr;
    return d;
}

}  // namespace

PYBIND11_MODULE(_lindistill, m) {
    m.doc() = "Layerwise distillation of transformers into linear-time students";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<TrainingFault>(m, "TrainingFault", PyExc_ArithmeticError);
    py::register_exception<NumericFault>(m, "NumericFault", PyExc_ArithmeticError);
    py::register_exception<MissingArtifact>(m, "MissingArtifact", PyExc_FileNotFoundError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    py::enum_<MixerKind>(m, "MixerKind")
        .value("attention", MixerKind::attention)
        .value("linformer", MixerKind::linformer)
        .value("ssm", MixerKind::ssm)
        .value("bidirectional_ssm", MixerKind::bidirectional_ssm);
    py::enum_<ShareMode>(m, "ShareMode")
        .value("none", ShareMode::none)
        .value("kv", ShareMode::kv)
        .value("layer", ShareMode::layer);
    py::enum_<HeadKind>(m, "HeadKind").value("classify", HeadKind::classify).value("lm", HeadKind::lm);
    py::enum_<TaskKind>(m, "TaskKind")
        .value("majority", TaskKind::majority)
        .value("first_last_match", TaskKind::first_last_match)
        .value("char_lm", TaskKind::char_lm);
    py::enum_<GuidanceMode>(m, "GuidanceMode")
        .value("unguided", GuidanceMode::unguided)
        .value("target", GuidanceMode::target)
        .value("trajectory", GuidanceMode::trajectory)
        .value("waypoint", GuidanceMode::waypoint)
        .value("hybrid", GuidanceMode::hybrid);
    py::enum_<KdForm>(m, "KdForm")
        .value("softmax_temperature", KdForm::softmax_temperature)
        .value("literal", KdForm::literal);

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init<>())
        .def_readwrite("head", &ModelSpec::head)
        .def_readwrite("vocab", &ModelSpec::vocab)
        .def_readwrite("max_len", &ModelSpec::max_len)
        .def_readwrite("width", &ModelSpec::width)
        .def_readwrite("heads", &ModelSpec::heads)
        .def_readwrite("ffn_hidden", &ModelSpec::ffn_hidden)
        .def_readwrite("num_classes", &ModelSpec::num_classes)
        .def_readwrite("mixers", &ModelSpec::mixers)
        .def_readwrite("linformer_rank", &ModelSpec::linformer_rank)
        .def_readwrite("share", &ModelSpec::share)
        .def_readwrite("ssm_state", &ModelSpec::ssm_state)
        .def_readwrite("causal", &ModelSpec::causal)
        .def("to_text", &ModelSpec::to_text)
        .def("__eq__", [](const ModelSpec& a, const ModelSpec& b) { return a == b; });

    py::class_<Model>(m, "Model")
        .def_property_readonly("spec", &Model::spec)
        .def("parameter_count", &Model::parameter_count)
        .def("parameter_names", [](const Model& self) {
            std::vector<std::string> names;
            for (const auto& [name, t] : self.parameters()) names.push_back(name);
            return names;
        })
        .def("parameter", [](const Model& self, const std::string& name) { return to_array(self.param(name)); })
        .def("clone", &Model::clone)
        .def(
            "forward",
            [](const Model& self, const I32& tokens, std::optional<I32> lengths) {
                const Batch b = batch_of(tokens, lengths, std::nullopt);
                NoGradGuard g;
                const HiddenTrace tr = forward_with_trace(self, b);
                py::list hidden;
                for (const auto& h : tr.hidden) hidden.append(to_array(h));
                return py::make_tuple(to_array(tr.logits), hidden);
            },
            py::arg("tokens"), py::arg("lengths") = py::none(),
            "Returns (logits, [hidden state per block]).");

    m.def("init_model", &init_model, py::arg("spec"), py::arg("seed"));

    m.def(
        "convert",
        [](const Model& teacher, std::vector<MixerKind> mixers, std::size_t linformer_rank, std::size_t ssm_state,
           ShareMode share, std::uint64_t seed) {
            ConversionPlan plan;
            plan.mixers = mixers.size() == 1 ? std::vector<MixerKind>(teacher.spec().depth(), mixers[0]) : mixers;
            plan.linformer_rank = linformer_rank;
            plan.ssm_state = ssm_state;
            plan.share = share;
            plan.seed = seed;
            return transfer_parameters(teacher, plan);
        },
        py::arg("teacher"), py::arg("mixers"), py::arg("linformer_rank") = 8, py::arg("ssm_state") = 16,
        py::arg("share") = ShareMode::kv, py::arg("seed") = 0,
        "Builds a student; a single mixer kind applies to every block.");

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("count", &Dataset::count)
        .def_readonly("seq_len", &Dataset::seq_len)
        .def_readonly("vocab", &Dataset::vocab)
        .def_property_readonly("tokens",
                               [](const Dataset& d) {
                                   return to_array(d.tokens, {static_cast<py::ssize_t>(d.count),
                                                              static_cast<py::ssize_t>(d.seq_len)});
                               })
        .def_property_readonly("labels", [](const Dataset& d) {
            return to_array(d.labels, {static_cast<py::ssize_t>(d.labels.size())});
        });

    m.def(
        "generate",
        [](TaskKind kind, std::size_t vocab, std::size_t seq_len, std::size_t train_size, std::size_t val_size,
           std::size_t test_size, std::uint64_t seed, std::filesystem::path text_path) {
            TaskSpec ts;
            ts.kind = kind;
            ts.vocab = vocab;
            ts.seq_len = seq_len;
            ts.train_size = train_size;
            ts.val_size = val_size;
            ts.test_size = test_size;
            ts.seed = seed;
            ts.text_path = std::move(text_path);
            auto s = generate(ts);
            return py::make_tuple(std::move(s.train), std::move(s.val), std::move(s.test));
        },
        py::arg("kind"), py::arg("vocab") = 8, py::arg("seq_len") = 128, py::arg("train_size") = 4000,
        py::arg("val_size") = 1000, py::arg("test_size") = 1000, py::arg("seed") = 1,
        py::arg("text_path") = std::filesystem::path{}, "Returns (train, val, test).");

    m.def(
        "evaluate",
        [](const Model& model, const Dataset& data) {
            const Metrics mt = evaluate(model, data);
            py::dict d;
            d["accuracy"] = mt.accuracy;
            d["loss"] = mt.loss;
            d["perplexity"] = mt.perplexity;
            d["count"] = mt.count;
            return d;
        },
        py::arg("model"), py::arg("data"));

    m.def(
        "loss_ce", [](const F64& logits, const I32& labels) { return loss_ce(to_tensor(logits), to_ints(labels)).item(); },
        py::arg("logits"), py::arg("labels"));
    m.def(
        "loss_kd",
        [](const F64& student, const F64& teacher, double beta, KdForm form) {
            return loss_kd(to_tensor(student), to_tensor(teacher), beta, form).item();
        },
        py::arg("student"), py::arg("teacher"), py::arg("beta") = 2.0, py::arg("form") = KdForm::softmax_temperature);
    m.def(
        "loss_ld",
        [](const std::vector<F64>& student, const std::vector<F64>& teacher, std::optional<I32> lengths) {
            const auto s = to_tensors(student), t = to_tensors(teacher);
            const auto len = lengths ? to_ints(*lengths) : std::vector<std::int32_t>{};
            return loss_ld(s, t, len).item();
        },
        py::arg("student"), py::arg("teacher"), py::arg("lengths") = py::none());

    m.def(
        "ssm_scan",
        [](const F64& u, const F64& delta, const F64& a, const F64& b, const F64& c, bool reverse) {
            NoGradGuard g;
            return to_array(ssm_scan(to_tensor(u), to_tensor(delta), to_tensor(a), to_tensor(b), to_tensor(c),
                                     reverse ? ScanDirection::backward : ScanDirection::forward));
        },
        py::arg("u"), py::arg("delta"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("reverse") = false);

    py::class_<DistillConfig>(m, "DistillConfig")
        .def(py::init<>())
        .def_readwrite("mode", &DistillConfig::mode)
        .def_readwrite("beta", &DistillConfig::beta)
        .def_readwrite("kd_form", &DistillConfig::kd_form)
        .def_readwrite("steps", &DistillConfig::steps)
        .def_readwrite("teacher_update_interval", &DistillConfig::teacher_update_interval)
        .def_readwrite("waypoint_interval", &DistillConfig::waypoint_interval)
        .def_readwrite("hybrid_switch", &DistillConfig::hybrid_switch)
        .def_readwrite("batch_size", &DistillConfig::batch_size)
        .def_readwrite("seed", &DistillConfig::seed)
        .def_readwrite("normalize_ld", &DistillConfig::normalize_ld)
        .def_property(
            "weights", [](const DistillConfig& c) { return py::make_tuple(c.weights.ce, c.weights.kd, c.weights.ld); },
            [](DistillConfig& c, std::tuple<double, double, double> w) {
                c.weights = {std::get<0>(w), std::get<1>(w), std::get<2>(w)};
            },
            "(alpha_ce, alpha_kd, alpha_ld)")
        .def_property(
            "lr", [](const DistillConfig& c) { return c.optim.schedule.base_lr; },
            [](DistillConfig& c, double lr) { c.optim.schedule.base_lr = lr; })
        .def_property(
            "teacher_lr", [](const DistillConfig& c) { return c.teacher_optim.schedule.base_lr; },
            [](DistillConfig& c, double lr) { c.teacher_optim.schedule.base_lr = lr; })
        .def_property(
            "clip_norm", [](const DistillConfig& c) { return c.optim.adam.clip_norm; },
            [](DistillConfig& c, double v) { c.optim.adam.clip_norm = v; });

    m.def(
        "train",
        [](const Model& student, std::optional<Model> teacher, std::vector<Model> waypoints, const Dataset& data,
           const DistillConfig& config) {
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(student, teacher, WaypointSource::from_models(std::move(waypoints)), data, config);
            }
            py::list records;
            for (const auto& rec : r.records) records.append(record_dict(rec));
            return py::make_tuple(std::move(r.student), records, r.teacher ? py::cast(std::move(*r.teacher)) : py::none());
        },
        py::arg("student"), py::arg("teacher"), py::arg("waypoints"), py::arg("data"), py::arg("config"),
        "Returns (student, records, co-trained teacher or None).");

    m.def(
        "save_checkpoint",
        [](const std::filesystem::path& path, const Model& model, std::int64_t step, const std::string& metadata) {
            save_checkpoint(path, model, step, metadata);
        },
        py::arg("path"), py::arg("model"), py::arg("step") = 0, py::arg("metadata") = "");
    m.def("load_model", &load_model, py::arg("path"));

    m.def(
        "cosine_distance",
        [](const F64& a, const F64& b) {
            return cosine_distance({a.data(), static_cast<std::size_t>(a.size())},
                                   {b.data(), static_cast<std::size_t>(b.size())});
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "pca2",
        [](const F64& x) {
            if (x.ndim() != 2) throw ShapeError("pca2 expects a matrix");
            Eigen::MatrixXd mat(x.shape(0), x.shape(1));
            for (py::ssize_t i = 0; i < x.shape(0); ++i) {
                for (py::ssize_t j = 0; j < x.shape(1); ++j) mat(i, j) = x.at(i, j);
            }
            const Pca2 p = pca2(mat);
            py::array_t<double> coords({static_cast<py::ssize_t>(p.coords.rows()), py::ssize_t{2}});
            py::array_t<double> axes({static_cast<py::ssize_t>(p.axes.rows()), py::ssize_t{2}});
            for (Eigen::Index i = 0; i < p.coords.rows(); ++i) {
                coords.mutable_at(i, 0) = p.coords(i, 0);
                coords.mutable_at(i, 1) = p.coords(i, 1);
            }
            for (Eigen::Index i = 0; i < p.axes.rows(); ++i) {
                axes.mutable_at(i, 0) = p.axes(i, 0);
                axes.mutable_at(i, 1) = p.axes(i, 1);
            }
            return py::make_tuple(coords, axes, py::make_tuple(p.explained[0], p.explained[1]));
        },
        py::arg("x"), "Returns (coords, axes, explained variance ratios).");
}
