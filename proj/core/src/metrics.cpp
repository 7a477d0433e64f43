#include "emodyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "emodyn/errors.hpp"

namespace emodyn {

EvalReport evaluate(const std::vector<std::size_t>& gold,
                    const std::vector<std::size_t>& pred,
                    const std::vector<std::string>& labels) {
    if (gold.empty()) throw ContractError("evaluate: empty input");
    if (gold.size() != pred.size()) {
        throw ContractError("evaluate: gold and pred lengths differ (" +
                            std::to_string(gold.size()) + " vs " +
                            std::to_string(pred.size()) + ")");
    }
    std::size_t n_classes = labels.size();
    for (std::size_t i = 0; i < gold.size(); ++i) {
        n_classes = std::max({n_classes, gold[i] + 1, pred[i] + 1});
    }

    EvalReport report;
    report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < gold.size(); ++i) ++report.confusion[gold[i]][pred[i]];

    const double total = (double)gold.size();
    for (std::size_t c = 0; c < n_classes; ++c) {
        ClassStats stats;
        stats.label = c < labels.size() ? labels[c] : "class_" + std::to_string(c);
        std::size_t tp = report.confusion[c][c], support = 0, predicted = 0;
        for (std::size_t k = 0; k < n_classes; ++k) {
            support += report.confusion[c][k];
            predicted += report.confusion[k][c];
        }
        stats.support = support;
        stats.prevalence = (double)support / total;
        if (support > 0) {
            const double recall = (double)tp / (double)support;
            const double precision = predicted > 0 ? (double)tp / (double)predicted : 0.0;
            stats.accuracy = recall;
            stats.precision = precision;
            stats.f1 = precision + recall > 0.0
                           ? 2.0 * precision * recall / (precision + recall)
                           : 0.0;
            report.weighted_acc += stats.prevalence * recall;
            report.weighted_f1 += stats.prevalence * *stats.f1;
        }
        report.per_class.push_back(std::move(stats));
    }
    return report;
}

std::string EvalReport::to_json_string() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (const ClassStats& c : per_class) {
        nlohmann::ordered_json cj;
        cj["label"] = c.label;
        cj["support"] = c.support;
        cj["prevalence"] = c.prevalence;
        cj["accuracy"] = c.accuracy ? nlohmann::ordered_json(*c.accuracy) : nullptr;
        cj["precision"] = c.precision ? nlohmann::ordered_json(*c.precision) : nullptr;
        cj["f1"] = c.f1 ? nlohmann::ordered_json(*c.f1) : nullptr;
        classes.push_back(std::move(cj));
    }
    j["per_class"] = std::move(classes);
    j["weighted_acc"] = weighted_acc;
    j["weighted_f1"] = weighted_f1;
    j["confusion"] = confusion;
    return j.dump(2);
}

namespace {

std::vector<std::vector<double>> row_normalized(const EvalReport& report) {
    std::vector<std::vector<double>> rows;
    for (const auto& row : report.confusion) {
        std::size_t total = 0;
        for (std::size_t v : row) total += v;
        std::vector<double> out(row.size(), 0.0);
        if (total > 0) {
            for (std::size_t j = 0; j < row.size(); ++j) {
                out[j] = (double)row[j] / (double)total;
            }
        }
        rows.push_back(std::move(out));
    }
    return rows;
}

}  // namespace

void write_confusion_csv(const EvalReport& report, std::ostream& out) {
    out << "gold\\pred";
    for (const ClassStats& c : report.per_class) out << "," << c.label;
    out << "\n";
    const auto rows = row_normalized(report);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << report.per_class[i].label;
        for (double v : rows[i]) {
            out << "," << std::setprecision(17) << v;
        }
        out << "\n";
    }
}

void write_confusion_svg(const EvalReport& report, std::ostream& out) {
    const std::size_t n = report.confusion.size();
    const int cell = 40, margin = 90;
    const int size = margin + (int)n * cell + 10;
    const auto rows = row_normalized(report);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\""
        << size << "\">\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const int shade = (int)std::lround(255.0 * (1.0 - rows[i][j]));
            out << "  <rect x=\"" << margin + (int)j * cell << "\" y=\""
                << margin + (int)i * cell << "\" width=\"" << cell << "\" height=\"" << cell
                << "\" fill=\"rgb(" << shade << "," << shade << "," << shade
                << ")\" stroke=\"black\"/>\n";
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& label = report.per_class[i].label;
        out << "  <text x=\"" << margin - 6 << "\" y=\"" << margin + (int)i * cell + cell / 2
            << "\" text-anchor=\"end\" dominant-baseline=\"middle\" font-size=\"11\">"
            << label << "</text>\n";
        out << "  <text x=\"" << margin + (int)i * cell + cell / 2 << "\" y=\"" << margin - 6
            << "\" text-anchor=\"start\" font-size=\"11\" transform=\"rotate(-45 "
            << margin + (int)i * cell + cell / 2 << " " << margin - 6 << ")\">" << label
            << "</text>\n";
    }
    out << "</svg>\n";
}

void print_report(const EvalReport& report, std::ostream& out) {
    out << std::left << std::setw(14) << "class" << std::right << std::setw(9) << "support"
        << std::setw(9) << "prev" << std::setw(9) << "acc" << std::setw(9) << "prec"
        << std::setw(9) << "f1" << "\n";
    auto cell = [](std::optional<double> v) {
        if (!v) return std::string("   -");
        std::ostringstream os;
        os << std::fixed << std::setprecision(4) << *v;
        return os.str();
    };
    for (const ClassStats& c : report.per_class) {
        out << std::left << std::setw(14) << c.label << std::right << std::setw(9)
            << c.support << std::setw(9) << std::fixed << std::setprecision(4)
            << c.prevalence << std::setw(9) << cell(c.accuracy) << std::setw(9)
            << cell(c.precision) << std::setw(9) << cell(c.f1) << "\n";
    }
    out << "weighted ACC " << std::fixed << std::setprecision(4) << report.weighted_acc
        << "  weighted F1 " << report.weighted_f1 << "\n";
}

}  // namespace emodyn
