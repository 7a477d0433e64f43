#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace emodyn {

struct ClassStats {
    std::string label;
    std::size_t support = 0;
    double prevalence = 0.0;  // share of the gold set; weights of Avg.(w)
    // Null for zero-support classes, which are excluded from weighted sums.
    std::optional<double> accuracy;  // recall
    std::optional<double> precision;
    std::optional<double> f1;
};

/// Per-class breakdown plus prevalence-weighted aggregates.
/// confusion[gold][pred] counts; row sums equal class supports.
struct EvalReport {
    std::vector<ClassStats> per_class;
    double weighted_acc = 0.0;
    double weighted_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;

    std::string to_json_string() const;
};

/// gold/pred are dense class indices; `labels` supplies names for the
/// report (indices beyond it get synthetic names). Weights are the gold
/// (test-set) prevalences. F1 is 0 when precision + recall is 0.
EvalReport evaluate(const std::vector<std::size_t>& gold,
                    const std::vector<std::size_t>& pred,
                    const std::vector<std::string>& labels);

/// Row-normalized confusion matrix as CSV (header row/column of labels).
void write_confusion_csv(const EvalReport& report, std::ostream& out);
/// Grayscale SVG heat map of the row-normalized confusion matrix.
void write_confusion_svg(const EvalReport& report, std::ostream& out);

/// Human-readable report table.
void print_report(const EvalReport& report, std::ostream& out);

}  // namespace emodyn
