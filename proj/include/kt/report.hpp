#pragma once

// Metrics report files and the model x subset comparison grid.

#include "kt/csv.hpp"
#include "kt/metrics.hpp"
#include "kt/evaluate.hpp"

#include <cstdio>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>

namespace kt {

inline constexpr const char* kReportHeader =
    "model,subset,n,tp,fp,tn,fn,accuracy,precision,recall,f1,auc,precision_degenerate,recall_degenerate,"
    "f1_degenerate,empty";

namespace detail {

inline std::string exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_reports_csv(std::ostream& os, const std::vector<MetricsReport>& reports) {
    os << kReportHeader << '\n';
    for (const auto& r : reports) {
        os << r.model << ',' << r.subset << ',' << r.n << ',' << r.cm.tp << ',' << r.cm.fp << ',' << r.cm.tn << ','
           << r.cm.fn << ',' << detail::exact(r.accuracy.value) << ',' << detail::exact(r.precision.value) << ','
           << detail::exact(r.recall.value) << ',' << detail::exact(r.f1.value) << ','
           << (r.auc.value ? detail::exact(*r.auc.value) : "") << ',' << r.precision.degenerate << ','
           << r.recall.degenerate << ',' << r.f1.degenerate << ',' << r.empty << '\n';
    }
}

inline std::vector<MetricsReport> read_reports_csv(std::istream& is, const std::string& source = "<report>") {
    std::string line;
    if (!std::getline(is, line) || csv::split(line) != csv::split(kReportHeader)) {
        throw FormatError(source + ": expected header " + kReportHeader);
    }
    std::vector<MetricsReport> out;
    std::size_t number = 1;
    while (std::getline(is, line)) {
        ++number;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        auto bad = [&](const char* what) {
            return FormatError(source + ":" + std::to_string(number) + ": bad " + what);
        };
        if (f.size() != 16) throw bad("field count");
        auto count = [&](std::size_t i, const char* what) {
            const auto v = csv::parse_int<std::size_t>(f[i]);
            if (!v) throw bad(what);
            return *v;
        };
        auto real = [&](std::size_t i, const char* what) {
            const auto v = csv::parse_double(f[i]);
            if (!v) throw bad(what);
            return *v;
        };
        auto flag = [&](std::size_t i, const char* what) {
            if (f[i] != "0" && f[i] != "1") throw bad(what);
            return f[i] == "1";
        };
        MetricsReport r;
        r.model = f[0];
        r.subset = f[1];
        r.n = count(2, "n");
        r.cm = {count(3, "tp"), count(4, "fp"), count(5, "tn"), count(6, "fn")};
        r.empty = flag(15, "empty");
        r.accuracy = {real(7, "accuracy"), r.empty};
        r.precision = {real(8, "precision"), flag(12, "precision_degenerate")};
        r.recall = {real(9, "recall"), flag(13, "recall_degenerate")};
        r.f1 = {real(10, "f1"), flag(14, "f1_degenerate")};
        if (!f[11].empty()) r.auc.value = real(11, "auc");
        r.auc.positives = r.cm.tp + r.cm.fn;
        r.auc.negatives = r.cm.fp + r.cm.tn;
        out.push_back(std::move(r));
    }
    return out;
}

/// Fixed-width text table, one line per report.
inline void write_reports_table(std::ostream& os, const std::vector<MetricsReport>& reports) {
    os << std::left << std::setw(8) << "Model" << std::setw(10) << "Subset" << std::right << std::setw(8) << "n"
       << std::setw(10) << "AUC" << std::setw(10) << "Accuracy" << std::setw(10) << "Recall" << std::setw(10)
       << "Precision" << std::setw(10) << "F1" << '\n';
    auto cell = [&](std::optional<double> v) {
        if (!v) {
            os << std::setw(10) << "NA";
        } else {
            os << std::setw(10) << std::fixed << std::setprecision(4) << *v;
        }
    };
    for (const auto& r : reports) {
        os << std::left << std::setw(8) << r.model << std::setw(10) << r.subset << std::right << std::setw(8) << r.n;
        if (r.empty) {
            os << "  (no test targets)\n";
            continue;
        }
        cell(r.auc.value);
        cell(r.accuracy.value);
        cell(r.recall.value);
        cell(r.precision.value);
        cell(r.f1.value);
        os << '\n';
    }
}

enum class Metric { auc, accuracy, recall, precision, f1 };

inline constexpr Metric kMetrics[] = {Metric::auc, Metric::accuracy, Metric::recall, Metric::precision, Metric::f1};

inline const char* metric_name(Metric m) {
    switch (m) {
    case Metric::auc: return "AUC";
    case Metric::accuracy: return "Accuracy";
    case Metric::recall: return "Recall";
    case Metric::precision: return "Precision";
    case Metric::f1: return "F1";
    }
    return "?";
}

inline std::optional<double> metric_of(const MetricsReport& r, Metric m) {
    if (r.empty) return std::nullopt;
    switch (m) {
    case Metric::auc: return r.auc.value;
    case Metric::accuracy: return r.accuracy.value;
    case Metric::recall: return r.recall.value;
    case Metric::precision: return r.precision.value;
    case Metric::f1: return r.f1.value;
    }
    return std::nullopt;
}

inline constexpr const char* kAverageLabel = "Average";

/// Models in architecture order, subsets as rows, plus a per-model Average row.
///
/// Rows are the subset reports of each run. When a run has only the pooled
/// aggregate, that aggregate is the single row. Averages are plain means over
/// the rows, skipping missing values.
struct ReportGrid {
    std::vector<std::string> models;
    std::vector<std::string> subsets;
    std::map<std::pair<std::string, std::string>, MetricsReport> cells;

    std::optional<double> value(const std::string& model, const std::string& subset, Metric m) const {
        const auto it = cells.find({model, subset});
        return it == cells.end() ? std::nullopt : metric_of(it->second, m);
    }

    std::optional<double> average(const std::string& model, Metric m) const {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& s : subsets) {
            if (const auto v = value(model, s, m)) {
                total += *v;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return total / static_cast<double>(n);
    }
};

inline std::size_t model_rank(const std::string& name) {
    for (std::size_t i = 0; i < std::size(kArchitectures); ++i) {
        if (name == display_name(kArchitectures[i])) return i;
    }
    return std::size(kArchitectures);
}

inline ReportGrid build_grid(const std::vector<std::vector<MetricsReport>>& runs) {
    if (runs.empty()) throw ContractError("report needs at least one evaluation");
    ReportGrid g;
    std::optional<std::vector<std::string>> labels;
    for (const auto& run : runs) {
        if (run.empty()) throw FormatError("evaluation holds no report rows");
        std::vector<const MetricsReport*> rows;
        for (const auto& r : run) {
            if (r.subset != kAggregateLabel) rows.push_back(&r);
        }
        if (rows.empty()) {
            for (const auto& r : run) rows.push_back(&r);
        }
        std::vector<std::string> these;
        for (const auto* r : rows) these.push_back(r->subset);
        if (labels && *labels != these) {
            auto join = [](const std::vector<std::string>& v) {
                std::string s;
                for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
                return s;
            };
            throw FormatError("inconsistent subset labels across runs: [" + join(*labels) + "] vs [" + join(these) + "]");
        }
        labels = these;
        const std::string& model = run.front().model;
        for (const auto& r : run) {
            if (r.model != model) throw FormatError("one evaluation mixes models " + model + " and " + r.model);
        }
        if (std::find(g.models.begin(), g.models.end(), model) != g.models.end()) {
            throw FormatError("model " + model + " appears in more than one run");
        }
        g.models.push_back(model);
        for (const auto* r : rows) g.cells[{model, r->subset}] = *r;
    }
    g.subsets = *labels;
    std::stable_sort(g.models.begin(), g.models.end(),
                     [](const std::string& a, const std::string& b) { return model_rank(a) < model_rank(b); });
    return g;
}

/// Long form: table,subset,model,metric,value. Average rows are recomputed here.
inline void write_grid_csv(std::ostream& os, const ReportGrid& g) {
    os << "table,subset,model,metric,value\n";
    auto emit = [&](int table, std::initializer_list<Metric> metrics) {
        for (const auto& s : g.subsets) {
            for (const auto& model : g.models) {
                for (Metric m : metrics) {
                    const auto v = g.value(model, s, m);
                    os << table << ',' << s << ',' << model << ',' << metric_name(m) << ','
                       << (v ? detail::exact(*v) : "") << '\n';
                }
            }
        }
        for (const auto& model : g.models) {
            for (Metric m : metrics) {
                const auto v = g.average(model, m);
                os << table << ',' << kAverageLabel << ',' << model << ',' << metric_name(m) << ','
                   << (v ? detail::exact(*v) : "") << '\n';
            }
        }
    };
    emit(1, {Metric::auc, Metric::accuracy});
    emit(2, {Metric::recall, Metric::precision, Metric::f1});
}

/// The paired layout: AUC and Accuracy per model, then Recall, Precision and F1 per model.
inline void write_grid_tables(std::ostream& os, const ReportGrid& g) {
    auto table = [&](const std::string& title, std::initializer_list<Metric> metrics) {
        const int w = 11;
        os << title << '\n';
        os << std::left << std::setw(9) << "Model";
        for (const auto& model : g.models) {
            std::string head = model;
            const int span = w * static_cast<int>(metrics.size());
            const int pad = std::max(0, (span - static_cast<int>(head.size())) / 2);
            os << std::string(static_cast<std::size_t>(pad), ' ') << std::setw(span - pad) << head;
        }
        os << '\n' << std::setw(9) << "EM";
        for (std::size_t i = 0; i < g.models.size(); ++i) {
            for (Metric m : metrics) os << std::right << std::setw(w) << metric_name(m);
        }
        os << '\n';
        auto row = [&](const std::string& label, auto&& get) {
            os << std::left << std::setw(9) << label;
            for (const auto& model : g.models) {
                for (Metric m : metrics) {
                    const auto v = get(model, m);
                    os << std::right << std::setw(w);
                    if (v) {
                        os << std::fixed << std::setprecision(4) << *v;
                    } else {
                        os << "NA";
                    }
                }
            }
            os << '\n';
        };
        for (const auto& s : g.subsets) {
            row(s, [&](const std::string& model, Metric m) { return g.value(model, s, m); });
        }
        row(kAverageLabel, [&](const std::string& model, Metric m) { return g.average(model, m); });
        os << '\n';
    };
    table("Accuracy and AUC by subset", {Metric::auc, Metric::accuracy});
    table("Recall, Precision and F1 by subset", {Metric::recall, Metric::precision, Metric::f1});
}

} // namespace kt
