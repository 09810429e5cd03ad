#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plite/bench.hpp"
#include "plite/compress.hpp"
#include "plite/datasets.hpp"
#include "plite/lite_format.hpp"
#include "plite/nn.hpp"
#include "plite/report.hpp"
#include "plite/train.hpp"

namespace py = pybind11;
using namespace plite;

namespace {

std::set<LayerKind> kinds_from_names(const std::vector<std::string>& names) {
    std::set<LayerKind> kinds;
    for (const std::string& n : names) kinds.insert(layer_kind_from_string(n));
    return kinds;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "plite: train, prune, quantize, export and benchmark small CNNs";

    // tensors
    py::class_<Tensor>(m, "Tensor")
        .def(py::init<std::vector<int>, std::vector<float>>(), py::arg("shape"), py::arg("data"))
        .def_static("zeros", &Tensor::zeros, py::arg("shape"))
        .def_property_readonly("shape", &Tensor::shape)
        .def_property_readonly("data", [](const Tensor& t) { return t.data(); })
        .def("size", &Tensor::size)
        .def("reshaped", &Tensor::reshaped, py::arg("shape"))
        .def("__repr__", [](const Tensor& t) { return "Tensor(shape=" + t.shape_str() + ")"; });
    m.def("matmul", &matmul, py::arg("a"), py::arg("b"));
    m.def("im2col", &im2col, py::arg("input"), py::arg("kernel_h"), py::arg("kernel_w"),
          py::arg("stride"), py::arg("padding"));

    // layers and models
    py::class_<LayerSpec>(m, "LayerSpec")
        .def_static("conv2d", &LayerSpec::conv2d, py::arg("out_channels"), py::arg("kernel_h"),
                    py::arg("kernel_w"), py::arg("stride") = 1, py::arg("padding") = 0)
        .def_static("maxpool2d", &LayerSpec::maxpool2d, py::arg("pool"), py::arg("stride"))
        .def_static("flatten", &LayerSpec::flatten)
        .def_static("dense", &LayerSpec::dense, py::arg("units"))
        .def_static("relu", &LayerSpec::relu)
        .def_static("softmax", &LayerSpec::softmax)
        .def("__repr__", [](const LayerSpec& l) { return std::string(to_string(l.kind)); });

    py::class_<LayerParams>(m, "LayerParams")
        .def_readwrite("weights", &LayerParams::weights)
        .def_readwrite("bias", &LayerParams::bias);

    py::class_<ModelMeta>(m, "ModelMeta")
        .def_readwrite("name", &ModelMeta::name)
        .def_readwrite("seed", &ModelMeta::seed)
        .def_readwrite("epochs", &ModelMeta::epochs);

    py::class_<Model>(m, "Model")
        .def_readwrite("layers", &Model::layers)
        .def_readwrite("params", &Model::params)
        .def_readwrite("input_shape", &Model::input_shape)
        .def_readwrite("class_names", &Model::class_names)
        .def_readwrite("meta", &Model::meta)
        .def("__repr__", [](const Model& mm) {
            return "Model(name=" + mm.meta.name + ", layers=" + std::to_string(mm.layers.size()) + ")";
        });

    py::class_<ExecutionPlan>(m, "ExecutionPlan")
        .def_property_readonly("backends", [](const ExecutionPlan& p) {
            std::vector<std::string> names;
            for (Backend b : p.backends) names.emplace_back(to_string(b));
            return names;
        });

    m.def("canonical_cnn", &canonical_cnn, py::arg("class_names"),
          py::arg("input_shape") = std::vector<int>{28, 28, 1});
    m.def("make_model", &make_model, py::arg("layers"), py::arg("input_shape"),
          py::arg("class_names"), py::arg("name"));
    m.def("init_params", &init_params, py::arg("model"), py::arg("seed"));
    m.def("infer_shapes", &infer_shapes, py::arg("model"));
    m.def("reference_plan", &reference_plan, py::arg("model"));
    m.def("accelerated_plan", &accelerated_plan, py::arg("model"));
    m.def(
        "plan_execution",
        [](const Model& model, const std::vector<std::string>& supported) {
            return plan_execution(model, kinds_from_names(supported));
        },
        py::arg("model"), py::arg("supported_kinds"));
    m.def("forward", &forward, py::arg("model"), py::arg("input"), py::arg("plan"));
    m.def("predict", &predict, py::arg("model"), py::arg("input"), py::arg("plan"));

    // datasets
    py::class_<Example>(m, "Example")
        .def(py::init([](Tensor image, int label) {
                 return Example{std::move(image), label};
             }),
             py::arg("image"), py::arg("label"))
        .def_readwrite("image", &Example::image)
        .def_readwrite("label", &Example::label);

    py::class_<LabeledDataset>(m, "LabeledDataset")
        .def(py::init<>())
        .def_readwrite("items", &LabeledDataset::items)
        .def_readwrite("class_names", &LabeledDataset::class_names)
        .def("__len__", &LabeledDataset::size);

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init([](int classes, int per_class, int image_size, double noise_sigma) {
                 return SynthSpec{classes, per_class, image_size, noise_sigma};
             }),
             py::arg("classes"), py::arg("per_class"), py::arg("image_size"),
             py::arg("noise_sigma") = 0.1)
        .def_readwrite("classes", &SynthSpec::classes)
        .def_readwrite("per_class", &SynthSpec::per_class)
        .def_readwrite("image_size", &SynthSpec::image_size)
        .def_readwrite("noise_sigma", &SynthSpec::noise_sigma);

    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("write_idx", &write_idx, py::arg("dataset"), py::arg("images_path"),
          py::arg("labels_path"));
    m.def("load_folder", &load_folder, py::arg("root"));
    m.def("write_folder_pgm", &write_folder_pgm, py::arg("dataset"), py::arg("root"));
    m.def("load_pgm", &load_pgm, py::arg("path"));
    m.def("write_pgm", &write_pgm, py::arg("image"), py::arg("path"));
    m.def("split", &split, py::arg("dataset"), py::arg("train_fraction"), py::arg("seed"));
    m.def("synth_dataset", &synth_dataset, py::arg("spec"), py::arg("seed"));
    m.def("synth_digits", &synth_digits, py::arg("per_class"), py::arg("seed"),
          py::arg("image_size") = 28, py::arg("noise_sigma") = 0.08, py::arg("jitter") = 3);
    m.def("take_round_robin", &take_round_robin, py::arg("dataset"), py::arg("n"));

    // training
    py::enum_<Optimizer>(m, "Optimizer")
        .value("SGD", Optimizer::Sgd)
        .value("SGD_MOMENTUM", Optimizer::SgdMomentum);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("optimizer", &TrainConfig::optimizer)
        .def_readwrite("momentum", &TrainConfig::momentum);

    py::class_<TrainHistory>(m, "TrainHistory")
        .def_readonly("train_loss", &TrainHistory::train_loss)
        .def_readonly("train_acc", &TrainHistory::train_acc)
        .def_readonly("val_loss", &TrainHistory::val_loss)
        .def_readonly("val_acc", &TrainHistory::val_acc);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("model", &TrainResult::model)
        .def_readonly("history", &TrainResult::history);

    py::class_<EvalResult>(m, "EvalResult")
        .def_readonly("accuracy", &EvalResult::accuracy)
        .def_readonly("mean_loss", &EvalResult::mean_loss);

    py::class_<Gradients>(m, "Gradients").def_readonly("per_layer", &Gradients::per_layer);

    py::class_<PruneMask>(m, "PruneMask").def_readonly("weight_masks", &PruneMask::weight_masks);

    py::class_<FakeQuantParams>(m, "FakeQuantParams")
        .def_readonly("weight_scales", &FakeQuantParams::weight_scales);

    m.def("train", &train, py::arg("model"), py::arg("train_data"), py::arg("val_data"),
          py::arg("config"));
    m.def(
        "gradients",
        [](const Model& model, const std::vector<Example>& batch) {
            return gradients(model, std::span<const Example>(batch.data(), batch.size()));
        },
        py::arg("model"), py::arg("batch"));
    m.def("evaluate", &evaluate, py::arg("model"), py::arg("data"), py::arg("plan"));
    m.def("finetune_masked", &finetune_masked, py::arg("model"), py::arg("mask"), py::arg("data"),
          py::arg("config"));
    m.def("finetune_fakequant", &finetune_fakequant, py::arg("model"), py::arg("qparams"),
          py::arg("data"), py::arg("config"));

    // compression
    py::class_<PruneResult>(m, "PruneResult")
        .def_readonly("model", &PruneResult::model)
        .def_readonly("mask", &PruneResult::mask);

    py::enum_<PruneScope>(m, "PruneScope")
        .value("PER_LAYER", PruneScope::PerLayer)
        .value("GLOBAL", PruneScope::Global);

    py::class_<SweepRow>(m, "SweepRow")
        .def_readonly("sparsity", &SweepRow::sparsity)
        .def_readonly("val_accuracy", &SweepRow::val_accuracy)
        .def_readonly("val_loss", &SweepRow::val_loss)
        .def_readonly("finetune_epochs", &SweepRow::finetune_epochs);

    py::class_<SparsitySweep>(m, "SparsitySweep").def_readonly("rows", &SparsitySweep::rows);

    py::class_<QuantEdge>(m, "QuantEdge")
        .def_readonly("scale", &QuantEdge::scale)
        .def_readonly("zero_point", &QuantEdge::zero_point);

    py::class_<QuantModel>(m, "QuantModel")
        .def_readonly("layers", &QuantModel::layers)
        .def_readonly("class_names", &QuantModel::class_names)
        .def_readonly("input_shape", &QuantModel::input_shape)
        .def_readonly("meta", &QuantModel::meta)
        .def_readonly("calibrated", &QuantModel::calibrated)
        .def_readonly("edges", &QuantModel::edges)
        .def("__repr__", [](const QuantModel& q) {
            return "QuantModel(name=" + q.meta.name +
                   ", calibrated=" + (q.calibrated ? std::string("True") : std::string("False")) + ")";
        });

    m.def("prune_magnitude", &prune_magnitude, py::arg("model"), py::arg("sparsity"),
          py::arg("scope") = PruneScope::PerLayer);
    m.def("achieved_sparsity", &achieved_sparsity, py::arg("mask"));
    m.def("default_sparsity_grid", [] { return default_sparsity_grid(); });
    m.def("sparsity_sweep", &sparsity_sweep, py::arg("baseline"), py::arg("train_data"),
          py::arg("val_data"), py::arg("grid"), py::arg("finetune_epochs"), py::arg("config"));
    m.def("select_sparsity", &select_sparsity, py::arg("sweep"), py::arg("baseline_acc"),
          py::arg("max_drop"));
    m.def("quantize_weights", &quantize_weights, py::arg("model"));
    m.def("calibrate_activations", &calibrate_activations, py::arg("qmodel"), py::arg("calib_data"),
          py::arg("samples"));
    m.def("quantized_forward", &quantized_forward, py::arg("qmodel"), py::arg("input"));
    m.def("quantized_predict", &quantized_predict, py::arg("qmodel"), py::arg("input"));
    m.def("evaluate_quant", &evaluate_quant, py::arg("qmodel"), py::arg("data"));
    m.def("dequantized_model", &dequantized_model, py::arg("qmodel"));
    m.def("fakequant_params", &fakequant_params, py::arg("qmodel"));

    // lite format
    m.def("export_lite", py::overload_cast<const Model&, const std::string&>(&export_lite),
          py::arg("model"), py::arg("path"));
    m.def("export_lite", py::overload_cast<const QuantModel&, const std::string&>(&export_lite),
          py::arg("model"), py::arg("path"));
    m.def(
        "import_lite",
        [](const std::string& path) -> py::object {
            AnyModel any = import_lite(path);
            if (std::holds_alternative<Model>(any)) return py::cast(std::get<Model>(std::move(any)));
            return py::cast(std::get<QuantModel>(std::move(any)));
        },
        py::arg("path"));
    m.def("model_size", &model_size, py::arg("path"));

    // benchmarking
    py::class_<Stats>(m, "Stats")
        .def_readonly("mean", &Stats::mean)
        .def_readonly("stddev", &Stats::stddev)
        .def_readonly("ste", &Stats::ste);

    py::class_<BenchReport>(m, "BenchReport")
        .def_readonly("model_id", &BenchReport::model_id)
        .def_readonly("format", &BenchReport::format)
        .def_readonly("backend", &BenchReport::backend)
        .def_readonly("n_images", &BenchReport::n_images)
        .def_readonly("t_first_ms", &BenchReport::t_first_ms)
        .def_readonly("warm_times_ms", &BenchReport::warm_times_ms)
        .def_readonly("mean_ms", &BenchReport::mean_ms)
        .def_readonly("std_ms", &BenchReport::std_ms)
        .def_readonly("ste_ms", &BenchReport::ste_ms)
        .def_readonly("accuracy", &BenchReport::accuracy)
        .def_readonly("timestamp", &BenchReport::timestamp)
        .def_readonly("environment", &BenchReport::environment);

    py::class_<ComparisonRow>(m, "ComparisonRow")
        .def_readonly("format", &ComparisonRow::format)
        .def_readonly("backend", &ComparisonRow::backend)
        .def_readonly("mean_ms", &ComparisonRow::mean_ms)
        .def_readonly("accuracy", &ComparisonRow::accuracy)
        .def_readonly("speedup_vs_base", &ComparisonRow::speedup_vs_base)
        .def_readonly("mean_ratio", &ComparisonRow::mean_ratio);

    py::class_<ComparisonTable>(m, "ComparisonTable")
        .def_readonly("model_id", &ComparisonTable::model_id)
        .def_readonly("rows", &ComparisonTable::rows);

    m.def("stats", &stats, py::arg("warm_times_ms"));
    m.def("run_benchmark", &run_benchmark, py::arg("model_path"), py::arg("data_root"),
          py::arg("backend"), py::arg("n_images"), py::arg("format_label") = "");
    m.def("compare", &compare, py::arg("reports"));
    m.def("report_to_json", &report_to_json, py::arg("report"));
    m.def("report_from_json", &report_from_json, py::arg("text"));

    // report emitters
    py::enum_<OutFormat>(m, "OutFormat").value("CSV", OutFormat::Csv).value("MD", OutFormat::Md);
    m.def("emit_report", &emit_report, py::arg("reports"), py::arg("format"));
    m.def("emit_sweep", &emit_sweep, py::arg("sweep"), py::arg("format"));
    m.def("emit_compare", &emit_compare, py::arg("table"), py::arg("format"));

    m.attr("__version__") = "0.1.0";
}
