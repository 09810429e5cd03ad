#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plite/bench.hpp"
#include "plite/compress.hpp"
#include "plite/datasets.hpp"
#include "plite/lite_format.hpp"
#include "plite/nn.hpp"
#include "plite/report.hpp"
#include "plite/train.hpp"

namespace fs = std::filesystem;
using namespace plite;

namespace {

// Accepts either an IDX pair directory (train-images-idx3-ubyte +
// train-labels-idx1-ubyte) or a folder-per-class PGM tree.
LabeledDataset load_any_dataset(const std::string& dir) {
    const fs::path images = fs::path(dir) / "train-images-idx3-ubyte";
    const fs::path labels = fs::path(dir) / "train-labels-idx1-ubyte";
    if (fs::exists(images) && fs::exists(labels)) {
        return load_idx(images.string(), labels.string());
    }
    return load_folder(dir);
}

void write_text(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << text;
}

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> grid;
    size_t pos = 0;
    while (pos < csv.size()) {
        size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        grid.push_back(std::stod(csv.substr(pos, next - pos)));
        pos = next + 1;
    }
    return grid;
}

Model import_float_model(const std::string& path) {
    AnyModel any = import_lite(path);
    if (is_quantized(any)) throw Error(path + " is a quantized model; a float model is required");
    return std::get<Model>(std::move(any));
}

struct CommonTrainOpts {
    int epochs = 5;
    int batch = 32;
    float lr = 0.01f;
    uint64_t seed = 42;
    double val_fraction = 0.3;
};

void add_train_opts(CLI::App* cmd, CommonTrainOpts& o, bool with_epochs = true) {
    if (with_epochs) cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch", o.batch, "mini-batch size");
    cmd->add_option("--lr", o.lr, "learning rate");
    cmd->add_option("--seed", o.seed, "RNG seed (init, shuffle, split)");
    cmd->add_option("--val-fraction", o.val_fraction, "validation split fraction");
}

TrainConfig to_config(const CommonTrainOpts& o) {
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.learning_rate = o.lr;
    cfg.seed = o.seed;
    return cfg;
}

int cmd_train(const std::string& data_dir, const CommonTrainOpts& o, const std::string& name,
              const std::string& out_path) {
    std::cout << "seed: " << o.seed << "\n";
    const LabeledDataset all = load_any_dataset(data_dir);
    auto [train_ds, val_ds] = split(all, 1.0 - o.val_fraction, o.seed);
    std::cout << "data: " << train_ds.size() << " train / " << val_ds.size() << " val, "
              << all.num_classes() << " classes\n";

    Model model = canonical_cnn(all.class_names, all.items[0].image.shape());
    model.meta.name = name;
    init_params(model, o.seed);
    const TrainResult res = train(model, train_ds, val_ds, to_config(o));
    for (size_t e = 0; e < res.history.val_acc.size(); ++e) {
        std::cout << "epoch " << e + 1 << ": train_loss=" << res.history.train_loss[e]
                  << " val_acc=" << res.history.val_acc[e] << "\n";
    }
    std::cout << "final val accuracy: " << res.history.val_acc.back() << "\n";
    const uint64_t bytes = export_lite(res.model, out_path);
    std::cout << "wrote " << out_path << " (" << bytes << " bytes)\n";
    return 0;
}

int cmd_sweep(const std::string& data_dir, const std::string& model_path, const std::string& grid_csv,
              int finetune_epochs, double max_drop, const CommonTrainOpts& o,
              const std::string& format, const std::string& out_path) {
    std::cout << "seed: " << o.seed << "\n";
    const LabeledDataset all = load_any_dataset(data_dir);
    auto [train_ds, val_ds] = split(all, 1.0 - o.val_fraction, o.seed);

    Model baseline;
    if (!model_path.empty()) {
        baseline = import_float_model(model_path);
    } else {
        Model model = canonical_cnn(all.class_names, all.items[0].image.shape());
        init_params(model, o.seed);
        baseline = train(model, train_ds, val_ds, to_config(o)).model;
    }
    const EvalResult base_ev = evaluate(baseline, val_ds, accelerated_plan(baseline));
    std::cout << "baseline val accuracy: " << base_ev.accuracy << "\n";

    const std::vector<double> grid = grid_csv.empty() ? default_sparsity_grid() : parse_grid(grid_csv);
    const SparsitySweep sweep =
        sparsity_sweep(baseline, train_ds, val_ds, grid, finetune_epochs, to_config(o));
    write_text(emit_sweep(sweep, out_format_from_string(format)), out_path);
    std::cout << "selected sparsity: " << select_sparsity(sweep, base_ev.accuracy, max_drop) << "\n";
    return 0;
}

int cmd_prune(const std::string& model_path, double sparsity, const std::string& scope_name,
              const std::string& data_dir, int finetune_epochs, const CommonTrainOpts& o,
              const std::string& out_path) {
    std::cout << "seed: " << o.seed << "\n";
    const Model model = import_float_model(model_path);
    const PruneScope scope = [&] {
        if (scope_name == "per_layer") return PruneScope::PerLayer;
        if (scope_name == "global") return PruneScope::Global;
        throw Error("unknown scope '" + scope_name + "' (per_layer|global)");
    }();
    PruneResult pruned = prune_magnitude(model, sparsity, scope);
    std::cout << "achieved sparsity: " << achieved_sparsity(pruned.mask) << "\n";

    Model out_model = std::move(pruned.model);
    if (finetune_epochs > 0) {
        if (data_dir.empty()) throw Error("--finetune-epochs needs --data");
        const LabeledDataset all = load_any_dataset(data_dir);
        auto [train_ds, val_ds] = split(all, 1.0 - o.val_fraction, o.seed);
        TrainConfig cfg = to_config(o);
        cfg.epochs = finetune_epochs;
        out_model = finetune_masked(out_model, pruned.mask, train_ds, cfg);
        const EvalResult ev = evaluate(out_model, val_ds, accelerated_plan(out_model));
        std::cout << "fine-tuned val accuracy: " << ev.accuracy << "\n";
    }
    const uint64_t bytes = export_lite(out_model, out_path);
    std::cout << "wrote " << out_path << " (" << bytes << " bytes)\n";
    return 0;
}

int cmd_quantize(const std::string& model_path, const std::string& data_dir, int samples,
                 int finetune_epochs, const CommonTrainOpts& o, const std::string& out_path) {
    std::cout << "seed: " << o.seed << "\n";
    Model model = import_float_model(model_path);
    const LabeledDataset all = load_any_dataset(data_dir);
    auto [train_ds, val_ds] = split(all, 1.0 - o.val_fraction, o.seed);

    if (finetune_epochs > 0) {
        TrainConfig cfg = to_config(o);
        cfg.epochs = finetune_epochs;
        const FakeQuantParams fq = fakequant_params(quantize_weights(model));
        model = finetune_fakequant(model, fq, train_ds, cfg);
    }
    QuantModel qm = calibrate_activations(quantize_weights(model), train_ds, samples);

    const uint64_t bytes = export_lite(qm, out_path);
    const EvalResult fl = evaluate(model, val_ds, accelerated_plan(model));
    const EvalResult qt = evaluate_quant(qm, val_ds);
    std::cout << "float val accuracy: " << fl.accuracy << "\n";
    std::cout << "int8  val accuracy: " << qt.accuracy << "\n";
    std::cout << "wrote " << out_path << " (" << bytes << " bytes, float model "
              << serialize(model).size() << " bytes)\n";
    return 0;
}

int cmd_export(const std::string& model_path, const std::string& out_path) {
    std::cout << "seed: -\n";
    const AnyModel any = import_lite(model_path);
    const uint64_t bytes = export_lite(any, out_path);
    std::cout << "wrote " << out_path << " (" << bytes << " bytes, canonical form)\n";
    return 0;
}

int cmd_bench(const std::string& model_path, const std::string& data_dir, int n_images,
              const std::string& backend, const std::string& label, const std::string& format,
              const std::string& out_path, const std::string& save_path) {
    std::cout << "seed: -\n";
    const BenchReport rep = run_benchmark(model_path, data_dir, backend, n_images, label);
    if (!save_path.empty()) save_report(rep, save_path);
    write_text(emit_report({rep}, out_format_from_string(format)), out_path);
    return 0;
}

int cmd_compare(const std::vector<std::string>& report_paths, const std::string& format,
                const std::string& out_path) {
    std::cout << "seed: -\n";
    std::vector<BenchReport> reports;
    for (const std::string& p : report_paths) reports.push_back(load_report(p));
    write_text(emit_compare(compare(reports), out_format_from_string(format)), out_path);
    return 0;
}

int cmd_report(const std::vector<std::string>& report_paths, const std::string& format,
               const std::string& out_path) {
    std::cout << "seed: -\n";
    std::vector<BenchReport> reports;
    for (const std::string& p : report_paths) reports.push_back(load_report(p));
    write_text(emit_report(reports, out_format_from_string(format)), out_path);
    return 0;
}

int cmd_gen_data(const std::string& kind, int classes, int per_class, int size, double noise,
                 uint64_t seed, const std::string& layout, const std::string& out_dir) {
    std::cout << "seed: " << seed << "\n";
    LabeledDataset ds;
    if (kind == "digits") {
        ds = synth_digits(per_class, seed, size, noise);
    } else if (kind == "bars") {
        SynthSpec spec;
        spec.classes = classes;
        spec.per_class = per_class;
        spec.image_size = size;
        spec.noise_sigma = noise;
        ds = synth_dataset(spec, seed);
    } else {
        throw Error("unknown kind '" + kind + "' (digits|bars)");
    }
    fs::create_directories(out_dir);
    if (layout == "idx") {
        write_idx(ds, (fs::path(out_dir) / "train-images-idx3-ubyte").string(),
                  (fs::path(out_dir) / "train-labels-idx1-ubyte").string());
    } else if (layout == "folders") {
        write_folder_pgm(ds, out_dir);
    } else {
        throw Error("unknown layout '" + layout + "' (idx|folders)");
    }
    std::cout << "wrote " << ds.size() << " images (" << ds.num_classes() << " classes) to "
              << out_dir << " [" << layout << "]\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"plite: train, prune, quantize, export and benchmark small CNNs"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train the canonical CNN and export it");
    std::string train_data, train_out, train_name = "canonical-cnn";
    CommonTrainOpts train_opts;
    train_cmd->add_option("--data", train_data, "dataset directory (IDX pair or folder-per-class)")
        ->required();
    train_cmd->add_option("--out", train_out, "output .plite path")->required();
    train_cmd->add_option("--name", train_name, "model id stored in the file");
    add_train_opts(train_cmd, train_opts);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "prune/fine-tune across a sparsity grid");
    std::string sweep_data, sweep_model, sweep_grid, sweep_format = "csv", sweep_out;
    int sweep_ft_epochs = 2;
    double sweep_max_drop = 0.01;
    CommonTrainOpts sweep_opts;
    sweep_cmd->add_option("--data", sweep_data, "dataset directory")->required();
    sweep_cmd->add_option("--model", sweep_model, "baseline .plite (trained fresh when omitted)");
    sweep_cmd->add_option("--grid", sweep_grid, "comma-separated sparsities (default: the 9-point grid)");
    sweep_cmd->add_option("--finetune-epochs", sweep_ft_epochs, "fine-tune epochs per grid point");
    sweep_cmd->add_option("--max-drop", sweep_max_drop, "accuracy drop allowed when selecting sparsity");
    sweep_cmd->add_option("--format", sweep_format, "csv|md");
    sweep_cmd->add_option("--out", sweep_out, "write table here instead of stdout");
    add_train_opts(sweep_cmd, sweep_opts);

    // prune
    auto* prune_cmd = app.add_subcommand("prune", "magnitude-prune a model");
    std::string prune_model, prune_scope = "per_layer", prune_data, prune_out;
    double prune_sparsity = 0.0;
    int prune_ft_epochs = 0;
    CommonTrainOpts prune_opts;
    prune_cmd->add_option("--model", prune_model, "input .plite")->required();
    prune_cmd->add_option("--sparsity", prune_sparsity, "fraction of weights to zero")->required();
    prune_cmd->add_option("--scope", prune_scope, "per_layer|global");
    prune_cmd->add_option("--data", prune_data, "dataset directory (for fine-tuning)");
    prune_cmd->add_option("--finetune-epochs", prune_ft_epochs, "mask-preserving fine-tune epochs");
    prune_cmd->add_option("--out", prune_out, "output .plite path")->required();
    add_train_opts(prune_cmd, prune_opts, /*with_epochs=*/false);

    // quantize
    auto* quant_cmd = app.add_subcommand("quantize", "post-training int8 quantization");
    std::string quant_model, quant_data, quant_out;
    int quant_samples = 100, quant_ft_epochs = 0;
    CommonTrainOpts quant_opts;
    quant_cmd->add_option("--model", quant_model, "input .plite (float)")->required();
    quant_cmd->add_option("--data", quant_data, "dataset directory (calibration + eval)")->required();
    quant_cmd->add_option("--samples", quant_samples, "calibration sample count");
    quant_cmd->add_option("--finetune-epochs", quant_ft_epochs, "fake-quant fine-tune epochs");
    quant_cmd->add_option("--out", quant_out, "output .plite path")->required();
    add_train_opts(quant_cmd, quant_opts, /*with_epochs=*/false);

    // export
    auto* export_cmd = app.add_subcommand("export", "re-export a model in canonical form");
    std::string export_model, export_out;
    export_cmd->add_option("--model", export_model, "input .plite")->required();
    export_cmd->add_option("--out", export_out, "output .plite path")->required();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "benchmark per-image inference latency");
    std::string bench_model, bench_data, bench_backend = "accelerated", bench_label,
                bench_format = "md", bench_out, bench_save;
    int bench_n = 100;
    bench_cmd->add_option("--model", bench_model, "input .plite")->required();
    bench_cmd->add_option("--data", bench_data, "folder-per-class PGM directory")->required();
    bench_cmd->add_option("--n", bench_n, "number of images (first is the cold start)");
    bench_cmd->add_option("--backend", bench_backend, "reference|accelerated");
    bench_cmd->add_option("--label", bench_label, "format label for the report");
    bench_cmd->add_option("--format", bench_format, "csv|md");
    bench_cmd->add_option("--out", bench_out, "write table here instead of stdout");
    bench_cmd->add_option("--save", bench_save, "also save the raw report JSON here");

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "compare saved benchmark reports");
    std::vector<std::string> compare_reports;
    std::string compare_format = "md", compare_out;
    compare_cmd->add_option("--reports", compare_reports, "report JSON files (first = baseline)")
        ->required()
        ->expected(-2);
    compare_cmd->add_option("--format", compare_format, "csv|md");
    compare_cmd->add_option("--out", compare_out, "write table here instead of stdout");

    // report
    auto* report_cmd = app.add_subcommand("report", "render saved benchmark reports as a table");
    std::vector<std::string> report_reports;
    std::string report_format = "md", report_out;
    report_cmd->add_option("--reports", report_reports, "report JSON files")->required()->expected(-1);
    report_cmd->add_option("--format", report_format, "csv|md");
    report_cmd->add_option("--out", report_out, "write table here instead of stdout");

    // gen-data
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a deterministic synthetic dataset");
    std::string gen_kind = "digits", gen_layout = "folders", gen_out;
    int gen_classes = 4, gen_per_class = 100, gen_size = 28;
    double gen_noise = 0.08;
    uint64_t gen_seed = 7;
    gen_cmd->add_option("--kind", gen_kind, "digits|bars");
    gen_cmd->add_option("--classes", gen_classes, "class count (bars only; digits always 10)");
    gen_cmd->add_option("--per-class", gen_per_class, "images per class");
    gen_cmd->add_option("--size", gen_size, "image side length");
    gen_cmd->add_option("--noise", gen_noise, "noise sigma");
    gen_cmd->add_option("--seed", gen_seed, "RNG seed");
    gen_cmd->add_option("--layout", gen_layout, "idx|folders");
    gen_cmd->add_option("--out", gen_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(train_data, train_opts, train_name, train_out);
        if (*sweep_cmd)
            return cmd_sweep(sweep_data, sweep_model, sweep_grid, sweep_ft_epochs, sweep_max_drop,
                             sweep_opts, sweep_format, sweep_out);
        if (*prune_cmd)
            return cmd_prune(prune_model, prune_sparsity, prune_scope, prune_data, prune_ft_epochs,
                             prune_opts, prune_out);
        if (*quant_cmd)
            return cmd_quantize(quant_model, quant_data, quant_samples, quant_ft_epochs, quant_opts,
                                quant_out);
        if (*export_cmd) return cmd_export(export_model, export_out);
        if (*bench_cmd)
            return cmd_bench(bench_model, bench_data, bench_n, bench_backend, bench_label,
                             bench_format, bench_out, bench_save);
        if (*compare_cmd) return cmd_compare(compare_reports, compare_format, compare_out);
        if (*report_cmd) return cmd_report(report_reports, report_format, report_out);
        if (*gen_cmd)
            return cmd_gen_data(gen_kind, gen_classes, gen_per_class, gen_size, gen_noise, gen_seed,
                                gen_layout, gen_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
