#include "plite/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "plite/compress.hpp"
#include "plite/lite_format.hpp"
#include "plite/nn.hpp"

namespace fs = std::filesystem;

namespace plite {

Stats stats(const std::vector<double>& warm_times_ms) {
    if (warm_times_ms.empty()) throw Error("stats: no warm inference times");
    const double n = static_cast<double>(warm_times_ms.size());
    double sum = 0.0;
    for (double t : warm_times_ms) sum += t;
    const double mean = sum / n;
    double ss = 0.0;
    for (double t : warm_times_ms) ss += (t - mean) * (t - mean);
    Stats s;
    s.mean = mean;
    s.stddev = std::sqrt(ss / n);
    s.ste = s.stddev / std::sqrt(n);
    return s;
}

BenchImageList list_bench_images(const std::string& data_root, int n_images) {
    if (!fs::is_directory(data_root)) throw IoError("data root is not a directory: " + data_root);
    std::vector<std::string> classes;
    for (const auto& entry : fs::directory_iterator(data_root)) {
        if (entry.is_directory()) classes.push_back(entry.path().filename().string());
    }
    if (classes.empty()) throw Error("data root has no class subdirectories: " + data_root);
    std::sort(classes.begin(), classes.end());

    std::vector<std::vector<std::string>> files(classes.size());
    size_t total = 0;
    for (size_t c = 0; c < classes.size(); ++c) {
        for (const auto& entry : fs::directory_iterator(fs::path(data_root) / classes[c])) {
            if (entry.is_regular_file()) files[c].push_back(entry.path().string());
        }
        std::sort(files[c].begin(), files[c].end());
        total += files[c].size();
    }
    if (total < static_cast<size_t>(n_images)) {
        throw Error("benchmark wants " + std::to_string(n_images) + " images, data root has " +
                    std::to_string(total));
    }

    BenchImageList out;
    out.class_names = classes;
    size_t round = 0;
    while (out.items.size() < static_cast<size_t>(n_images)) {
        for (size_t c = 0; c < classes.size() && out.items.size() < static_cast<size_t>(n_images); ++c) {
            if (round < files[c].size()) {
                out.items.push_back({files[c][round], static_cast<int>(c)});
            }
        }
        ++round;
    }
    return out;
}

namespace {

std::string iso_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string environment_note() {
#if defined(__VERSION__)
    return std::string("g++ ") + __VERSION__ + ", single-threaded";
#else
    return "unknown compiler, single-threaded";
#endif
}

// Execution state built lazily inside the first timed window: the model
// import and plan construction are the cold start Eq.-style reports isolate.
struct LazyRunner {
    const std::string& model_path;
    const BenchImageList& images;

    std::optional<AnyModel> model;
    ExecutionPlan plan;

    void init(const std::string& backend) {
        model = import_lite(model_path);
        const auto& names = class_names_of(*model);
        if (names.size() != images.class_names.size()) {
            throw Error("model has " + std::to_string(names.size()) + " classes, data has " +
                        std::to_string(images.class_names.size()));
        }
        for (size_t i = 0; i < names.size(); ++i) {
            if (names[i] != images.class_names[i]) {
                throw Error("class name mismatch at index " + std::to_string(i) + ": model '" +
                            names[i] + "' vs data '" + images.class_names[i] + "'");
            }
        }
        if (const Model* m = std::get_if<Model>(&*model)) {
            if (backend == "accelerated") {
                plan = accelerated_plan(*m);
            } else if (backend == "reference") {
                plan = reference_plan(*m);
            } else {
                throw Error("unknown backend '" + backend + "' (reference|accelerated)");
            }
        } else if (backend != "reference" && backend != "accelerated") {
            throw Error("unknown backend '" + backend + "' (reference|accelerated)");
        }
    }

    int predict_image(const std::string& path) const {
        const Tensor img = load_pgm(path);
        if (const Model* m = std::get_if<Model>(&*model)) return predict(*m, img, plan);
        return quantized_predict(std::get<QuantModel>(*model), img);
    }
};

}  // namespace

BenchReport run_benchmark(const std::string& model_path, const std::string& data_root,
                          const std::string& backend, int n_images,
                          const std::string& format_label) {
    if (n_images < 2) throw Error("benchmark needs n_images >= 2");
    const BenchImageList images = list_bench_images(data_root, n_images);

    LazyRunner runner{model_path, images, std::nullopt, {}};
    using clock = std::chrono::steady_clock;
    std::vector<double> times_ms;
    times_ms.reserve(static_cast<size_t>(n_images));
    int correct = 0;
    for (int i = 0; i < n_images; ++i) {
        const auto t0 = clock::now();
        if (!runner.model) runner.init(backend);
        const int pred = runner.predict_image(images.items[static_cast<size_t>(i)].path);
        const auto t1 = clock::now();
        times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        if (pred == images.items[static_cast<size_t>(i)].label) ++correct;
    }

    BenchReport rep;
    rep.model_id = meta_of(*runner.model).name;
    rep.format = !format_label.empty() ? format_label
                                       : (is_quantized(*runner.model) ? "quant" : "lite");
    rep.backend = backend;
    rep.n_images = n_images;
    rep.t_first_ms = times_ms[0];
    rep.warm_times_ms.assign(times_ms.begin() + 1, times_ms.end());
    const Stats s = stats(rep.warm_times_ms);
    rep.mean_ms = s.mean;
    rep.std_ms = s.stddev;
    rep.ste_ms = s.ste;
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(n_images);
    rep.timestamp = iso_timestamp();
    rep.environment = environment_note();
    return rep;
}

ComparisonTable compare(const std::vector<BenchReport>& reports) {
    if (reports.size() < 2) throw Error("compare needs at least 2 reports");
    for (const BenchReport& r : reports) {
        if (r.model_id != reports[0].model_id) {
            throw Error("compare: mismatched model ids '" + reports[0].model_id + "' vs '" +
                        r.model_id + "'");
        }
    }
    ComparisonTable table;
    table.model_id = reports[0].model_id;
    const double base_mean = reports[0].mean_ms;
    for (const BenchReport& r : reports) {
        ComparisonRow row;
        row.format = r.format;
        row.backend = r.backend;
        row.t_first_ms = r.t_first_ms;
        row.mean_ms = r.mean_ms;
        row.std_ms = r.std_ms;
        row.ste_ms = r.ste_ms;
        row.accuracy = r.accuracy;
        row.speedup_vs_base = base_mean / r.mean_ms;
        row.mean_ratio = r.mean_ms / base_mean;
        table.rows.push_back(row);
    }
    return table;
}

std::string report_to_json(const BenchReport& r) {
    nlohmann::json j;
    j["model_id"] = r.model_id;
    j["format"] = r.format;
    j["backend"] = r.backend;
    j["n_images"] = r.n_images;
    j["t_first_ms"] = r.t_first_ms;
    j["warm_times_ms"] = r.warm_times_ms;
    j["mean_ms"] = r.mean_ms;
    j["std_ms"] = r.std_ms;
    j["ste_ms"] = r.ste_ms;
    j["accuracy"] = r.accuracy;
    j["timestamp"] = r.timestamp;
    j["environment"] = r.environment;
    return j.dump(2) + "\n";
}

BenchReport report_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("bad report JSON: ") + e.what());
    }
    BenchReport r;
    try {
        r.model_id = j.at("model_id").get<std::string>();
        r.format = j.at("format").get<std::string>();
        r.backend = j.at("backend").get<std::string>();
        r.n_images = j.at("n_images").get<int>();
        r.t_first_ms = j.at("t_first_ms").get<double>();
        r.warm_times_ms = j.at("warm_times_ms").get<std::vector<double>>();
        r.mean_ms = j.at("mean_ms").get<double>();
        r.std_ms = j.at("std_ms").get<double>();
        r.ste_ms = j.at("ste_ms").get<double>();
        r.accuracy = j.at("accuracy").get<double>();
        r.timestamp = j.at("timestamp").get<std::string>();
        r.environment = j.at("environment").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad report JSON: ") + e.what());
    }
    return r;
}

void save_report(const BenchReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << report_to_json(report);
}

BenchReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return report_from_json(text);
}

}  // namespace plite
