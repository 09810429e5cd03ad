#pragma once

#include <string>
#include <vector>

#include "plite/bench.hpp"
#include "plite/compress.hpp"

namespace plite {

enum class OutFormat { Csv, Md };

OutFormat out_format_from_string(const std::string& name);

/// Benchmark table with one column per report and rows t_infer_1, mean,
/// std, ste, then accuracy. Markdown renders milliseconds with 2 decimals
/// and accuracy as a 2-decimal percentage; CSV keeps full precision.
std::string emit_report(const std::vector<BenchReport>& reports, OutFormat format);

/// Sweep table: one row per sparsity with validation accuracy/loss and the
/// fine-tune epoch count; plot-ready.
std::string emit_sweep(const SparsitySweep& sweep, OutFormat format);

/// Comparison table with per-row speedup ratios against the baseline row.
std::string emit_compare(const ComparisonTable& table, OutFormat format);

}  // namespace plite
