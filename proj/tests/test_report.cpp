#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "plite/report.hpp"

using namespace plite;

namespace {

BenchReport table7_mnist_pruned() {
    // a typical pruned-model column
    BenchReport r;
    r.model_id = "mnist";
    r.format = "lite_pruned";
    r.backend = "reference";
    r.n_images = 100;
    r.t_first_ms = 21.32;
    r.warm_times_ms = std::vector<double>(99, 3.73);
    r.mean_ms = 3.73;
    r.std_ms = 0.26;
    r.ste_ms = 0.03;
    r.accuracy = 1.0;
    return r;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> csv_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::istringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    return cells;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("markdown table keeps the report row order") {
    const std::string text = emit_report({table7_mnist_pruned()}, OutFormat::Md);
    const std::vector<std::string> lines = lines_of(text);
    REQUIRE(lines.size() == 7);  // header, rule, 5 data rows
    CHECK(lines[2] == "| t_infer_1 | 21.32 |");
    CHECK(lines[3] == "| t_infer_mean | 3.73 |");
    CHECK(lines[4] == "| std(t_infer) | 0.26 |");
    CHECK(lines[5] == "| ste(t_infer) | 0.03 |");
    CHECK(lines[6] == "| accuracy (%) | 100.00 |");
}

TEST_CASE("two reports share row labels across two columns") {
    BenchReport a = table7_mnist_pruned();
    BenchReport b = table7_mnist_pruned();
    b.format = "quant_pruned";
    b.mean_ms = 3.06;
    const std::string text = emit_report({a, b}, OutFormat::Md);
    const std::vector<std::string> lines = lines_of(text);
    CHECK(lines[0] == "| Model / Time (ms) | lite_pruned:reference | quant_pruned:reference |");
    CHECK(lines[3] == "| t_infer_mean | 3.73 | 3.06 |");
}

TEST_CASE("csv cells re-parse to the exact in-memory values") {
    BenchReport r = table7_mnist_pruned();
    r.mean_ms = 3.7299999999999995;  // not representable at 2 decimals
    r.accuracy = 0.9733333333333334;
    const std::string text = emit_report({r}, OutFormat::Csv);
    const std::vector<std::string> lines = lines_of(text);
    REQUIRE(lines.size() == 6);
    CHECK(csv_cells(lines[0]) == std::vector<std::string>{"metric", "lite_pruned:reference"});
    CHECK(std::stod(csv_cells(lines[2])[1]) == r.mean_ms);
    CHECK(std::stod(csv_cells(lines[5])[1]) == r.accuracy);
}

TEST_CASE("markdown renders milliseconds at 2-decimal precision") {
    BenchReport r = table7_mnist_pruned();
    r.t_first_ms = 21.3234567;
    const std::string text = emit_report({r}, OutFormat::Md);
    CHECK(text.find("| t_infer_1 | 21.32 |") != std::string::npos);
}

TEST_CASE("emit_report rejects empty input and bad accuracy") {
    CHECK_THROWS_AS(emit_report({}, OutFormat::Md), Error);
    BenchReport r = table7_mnist_pruned();
    r.accuracy = 1.5;
    CHECK_THROWS_WITH_AS(emit_report({r}, OutFormat::Md), doctest::Contains("outside [0,1]"), Error);
}

TEST_CASE("sweep table emits one line per grid point plus a header") {
    SparsitySweep sweep;
    for (double s : {0.25, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.97, 0.99}) {
        sweep.rows.push_back({s, 0.99 - s * 0.05, 0.1 + s, 2});
    }
    const std::string csv = emit_sweep(sweep, OutFormat::Csv);
    const std::vector<std::string> lines = lines_of(csv);
    REQUIRE(lines.size() == 10);
    CHECK(lines[0] == "sparsity,val_accuracy,val_loss,finetune_epochs");
    CHECK(csv_cells(lines[1])[0] == "0.25");
    // values re-parse exactly
    CHECK(std::stod(csv_cells(lines[9])[1]) == 0.99 - 0.99 * 0.05);

    const std::string md = emit_sweep(sweep, OutFormat::Md);
    CHECK(lines_of(md).size() == 11);  // header + rule + 9 rows
}

TEST_CASE("sweep emitter rejects empty sweeps and bad accuracies") {
    CHECK_THROWS_AS(emit_sweep(SparsitySweep{}, OutFormat::Csv), Error);
    SparsitySweep bad;
    bad.rows.push_back({0.5, 1.01, 0.1, 2});
    CHECK_THROWS_AS(emit_sweep(bad, OutFormat::Csv), Error);
}

TEST_CASE("comparison table carries both ratio readings") {
    BenchReport base = table7_mnist_pruned();
    BenchReport fast = table7_mnist_pruned();
    fast.format = "quant_pruned";
    fast.mean_ms = 0.373;
    const std::string md = emit_compare(compare({base, fast}), OutFormat::Md);
    CHECK(md.find("speedup_vs_base") != std::string::npos);
    CHECK(md.find("mean_ratio") != std::string::npos);
    CHECK(md.find("| 10.00 | 0.10 |") != std::string::npos);
}

TEST_CASE("unknown output format name is rejected") {
    CHECK_THROWS_WITH_AS(out_format_from_string("xml"), doctest::Contains("unknown output format"),
                         Error);
    CHECK(out_format_from_string("csv") == OutFormat::Csv);
    CHECK(out_format_from_string("md") == OutFormat::Md);
}

}  // TEST_SUITE
