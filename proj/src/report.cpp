#include "plite/report.hpp"

#include <cstdio>

namespace plite {

namespace {

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void check_accuracy(double acc) {
    if (!(acc >= 0.0 && acc <= 1.0)) {
        throw Error("accuracy " + std::to_string(acc) + " outside [0,1]");
    }
}

std::string md_row(const std::vector<std::string>& cells) {
    std::string out = "|";
    for (const std::string& c : cells) out += " " + c + " |";
    out += "\n";
    return out;
}

std::string csv_row(const std::vector<std::string>& cells) {
    std::string out;
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ",";
        out += cells[i];
    }
    out += "\n";
    return out;
}

std::string render_table(const std::vector<std::vector<std::string>>& rows, OutFormat format) {
    std::string out;
    if (format == OutFormat::Md) {
        out += md_row(rows[0]);
        std::vector<std::string> rule(rows[0].size(), "---");
        out += md_row(rule);
        for (size_t i = 1; i < rows.size(); ++i) out += md_row(rows[i]);
    } else {
        for (const auto& r : rows) out += csv_row(r);
    }
    return out;
}

}  // namespace

OutFormat out_format_from_string(const std::string& name) {
    if (name == "csv") return OutFormat::Csv;
    if (name == "md") return OutFormat::Md;
    throw Error("unknown output format '" + name + "' (csv|md)");
}

std::string emit_report(const std::vector<BenchReport>& reports, OutFormat format) {
    if (reports.empty()) throw Error("emit_report: no reports");
    for (const BenchReport& r : reports) check_accuracy(r.accuracy);
    const bool md = format == OutFormat::Md;
    auto num = [&](double v) { return md ? fmt2(v) : fmt_full(v); };

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{md ? "Model / Time (ms)" : "metric"};
    for (const BenchReport& r : reports) header.push_back(r.format + ":" + r.backend);
    rows.push_back(header);

    std::vector<std::string> t1{"t_infer_1"}, tm{"t_infer_mean"}, sd{"std(t_infer)"},
        se{"ste(t_infer)"}, ac{md ? "accuracy (%)" : "accuracy"};
    for (const BenchReport& r : reports) {
        t1.push_back(num(r.t_first_ms));
        tm.push_back(num(r.mean_ms));
        sd.push_back(num(r.std_ms));
        se.push_back(num(r.ste_ms));
        ac.push_back(md ? fmt2(r.accuracy * 100.0) : fmt_full(r.accuracy));
    }
    rows.push_back(t1);
    rows.push_back(tm);
    rows.push_back(sd);
    rows.push_back(se);
    rows.push_back(ac);
    return render_table(rows, format);
}

std::string emit_sweep(const SparsitySweep& sweep, OutFormat format) {
    if (sweep.rows.empty()) throw Error("emit_sweep: empty sweep");
    for (const SweepRow& r : sweep.rows) check_accuracy(r.val_accuracy);
    const bool md = format == OutFormat::Md;

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"sparsity", "val_accuracy", "val_loss", "finetune_epochs"});
    for (const SweepRow& r : sweep.rows) {
        if (md) {
            rows.push_back({fmt2(r.sparsity), fmt2(r.val_accuracy * 100.0) + "%",
                            fmt2(r.val_loss), std::to_string(r.finetune_epochs)});
        } else {
            rows.push_back({fmt_full(r.sparsity), fmt_full(r.val_accuracy), fmt_full(r.val_loss),
                            std::to_string(r.finetune_epochs)});
        }
    }
    return render_table(rows, format);
}

std::string emit_compare(const ComparisonTable& table, OutFormat format) {
    if (table.rows.empty()) throw Error("emit_compare: empty table");
    for (const ComparisonRow& r : table.rows) check_accuracy(r.accuracy);
    const bool md = format == OutFormat::Md;
    auto num = [&](double v) { return md ? fmt2(v) : fmt_full(v); };

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"format", "backend", "t_infer_1", "t_infer_mean", "std", "ste",
                    md ? "accuracy (%)" : "accuracy", "speedup_vs_base", "mean_ratio"});
    for (const ComparisonRow& r : table.rows) {
        rows.push_back({r.format, r.backend, num(r.t_first_ms), num(r.mean_ms), num(r.std_ms),
                        num(r.ste_ms), md ? fmt2(r.accuracy * 100.0) : fmt_full(r.accuracy),
                        num(r.speedup_vs_base), num(r.mean_ratio)});
    }
    return render_table(rows, format);
}

}  // namespace plite
