#pragma once

#include <string>
#include <vector>

#include "plite/datasets.hpp"

namespace plite {

/// One benchmark run: cold first inference, warm per-inference times, and the
/// mean/std/ste statistics over the warm times.
struct BenchReport {
    std::string model_id;
    std::string format;   // float | lite | lite_pruned | quant | quant_pruned
    std::string backend;  // reference | accelerated
    int n_images = 0;
    double t_first_ms = 0.0;
    std::vector<double> warm_times_ms;  // length n_images - 1
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double ste_ms = 0.0;
    double accuracy = 0.0;
    std::string timestamp;
    std::string environment;
};

struct Stats {
    double mean = 0.0;
    double stddev = 0.0;
    double ste = 0.0;
};

/// Statistics over the N-1 warm inference times: mean = sum/(N-1),
/// std = sqrt(sum((t-mean)^2)/(N-1)), ste = std/sqrt(N-1).
Stats stats(const std::vector<double>& warm_times_ms);

struct BenchItem {
    std::string path;
    int label = 0;
};

struct BenchImageList {
    std::vector<BenchItem> items;
    std::vector<std::string> class_names;
};

/// The images a benchmark of n_images will visit, in order: round-robin
/// across the sorted classes so accuracy is measured on a balanced subset.
BenchImageList list_bench_images(const std::string& data_root, int n_images);

/// Runs the latency protocol: for each image the timer spans disk read
/// through prediction; the first inference additionally covers one-time model
/// import and plan construction (the cold start being measured) and is kept
/// out of the mean/std/ste. No warm-up passes, monotonic clock, single
/// thread.
BenchReport run_benchmark(const std::string& model_path, const std::string& data_root,
                          const std::string& backend, int n_images,
                          const std::string& format_label = "");

struct ComparisonRow {
    std::string format;
    std::string backend;
    double t_first_ms = 0.0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double ste_ms = 0.0;
    double accuracy = 0.0;
    double speedup_vs_base = 1.0;  // baseline mean / this mean
    double mean_ratio = 1.0;       // this mean / baseline mean
};

struct ComparisonTable {
    std::string model_id;
    std::vector<ComparisonRow> rows;  // rows[0] is the baseline
};

/// Side-by-side rows for >= 2 reports of the same model; the first report is
/// the baseline for the speedup ratios.
ComparisonTable compare(const std::vector<BenchReport>& reports);

std::string report_to_json(const BenchReport& report);
BenchReport report_from_json(const std::string& text);
void save_report(const BenchReport& report, const std::string& path);
BenchReport load_report(const std::string& path);

}  // namespace plite
