#include "crowdagg/evaluate.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "crowdagg/guiding.hpp"
#include "crowdagg/numeric.hpp"

namespace crowdagg {

double error_rate(const Predictions& pred, const GoldLabels& gold) {
    if (pred.label.size() != gold.label.size()) {
        throw ShapeError("predictions and gold labels cover different item counts");
    }
    std::size_t scored = 0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pred.label.size(); ++i) {
        if (!gold.has(i)) continue;
        ++scored;
        if (pred.label[i] != gold.label[i]) ++wrong;
    }
    if (scored == 0) throw NoGoldOverlap("no predicted item has a gold label");
    return static_cast<double>(wrong) / static_cast<double>(scored);
}

AccuracyEstimate worker_accuracy(const LabelMatrix& labels, const GoldLabels& gold,
                                 int class_label, std::size_t worker) {
    AccuracyEstimate est;
    std::size_t correct = 0;
    for (const LabelEntry& e : labels.entries()) {
        if (e.worker != worker) continue;
        if (!gold.has(e.item) || gold.label[e.item] != class_label) continue;
        ++est.support;
        if (e.label == class_label) ++correct;
    }
    if (est.support > 0) {
        est.value = static_cast<double>(correct) / static_cast<double>(est.support);
        est.defined = true;
    }
    return est;
}

WorkerReport report_workers(const TrainedModel& model, const LabelMatrix& labels,
                            const GoldLabels& gold) {
    const std::size_t K = labels.num_workers();
    const auto C = static_cast<std::size_t>(labels.num_classes());
    if (K != model.num_workers || labels.num_classes() != model.num_classes) {
        throw ShapeError("model dimensions do not match the label matrix");
    }

    // one pass over the entries for all (class, worker) real accuracies
    Mat support(C, K, 0.0);
    Mat correct(C, K, 0.0);
    const bool have_gold = gold.label.size() == labels.num_items() && gold.count > 0;
    if (have_gold) {
        for (const LabelEntry& e : labels.entries()) {
            if (!gold.has(e.item)) continue;
            const auto g = static_cast<std::size_t>(gold.label[e.item] - 1);
            support(g, e.worker) += 1.0;
            if (e.label == gold.label[e.item]) correct(g, e.worker) += 1.0;
        }
    }

    PsiTable psi;
    if (model.model == ModelKind::NnMc) psi = mc_psi(model.mc());

    WorkerReport report;
    report.model = model.model;
    report.num_classes = static_cast<int>(C);
    report.rows.reserve(C * K);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < K; ++k) {
            WorkerReportRow row;
            row.class_label = static_cast<int>(c) + 1;
            row.worker = k;
            row.worker_name = labels.worker_names()[k];
            if (model.model == ModelKind::NnWa) {
                row.lambda = model.wa().at(c, k);
                row.predicted = sigmoid(row.lambda);
            } else {
                row.predicted = psi.at(c, k, c);
                const auto full = psi.row(c, k);
                row.psi.assign(full.begin(), full.end());
            }
            row.real.support = static_cast<std::size_t>(support(c, k));
            if (row.real.support > 0) {
                row.real.defined = true;
                row.real.value = correct(c, k) / support(c, k);
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& token, const std::string& context) {
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + token + "' (" + context + ")");
    }
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace

void save_worker_report(const WorkerReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write worker report: " + path);
    out << "# model\t" << (report.model == ModelKind::NnWa ? "nn-wa" : "nn-mc") << '\n';
    out << "# classes\t" << report.num_classes << '\n';
    if (report.model == ModelKind::NnWa) {
        out << "class\tworker\tworker_name\tlambda\tpredicted_accuracy\treal_accuracy\tsupport\n";
    } else {
        out << "class\tworker\tworker_name\tpredicted_accuracy\treal_accuracy\tsupport";
        for (int c = 1; c <= report.num_classes; ++c) out << "\tpsi_" << c;
        out << '\n';
    }
    for (const WorkerReportRow& row : report.rows) {
        out << row.class_label << '\t' << row.worker << '\t' << row.worker_name << '\t';
        if (report.model == ModelKind::NnWa) out << fmt_double(row.lambda) << '\t';
        out << fmt_double(row.predicted) << '\t'
            << (row.real.defined ? fmt_double(row.real.value) : "NA") << '\t'
            << row.real.support;
        for (double p : row.psi) out << '\t' << fmt_double(p);
        out << '\n';
    }
    if (!out) throw Error("failed writing worker report: " + path);
}

WorkerReport load_worker_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open worker report: " + path);
    WorkerReport report;
    std::string line;
    std::size_t line_no = 0;
    bool have_model = false;
    bool have_classes = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string context = path + ":" + std::to_string(line_no);
        if (line[0] == '#') {
            const auto fields = split_tabs(line);
            if (fields.size() == 2 && fields[0] == "# model") {
                report.model = fields[1] == "nn-wa" ? ModelKind::NnWa : ModelKind::NnMc;
                have_model = true;
            } else if (fields.size() == 2 && fields[0] == "# classes") {
                report.num_classes = static_cast<int>(parse_double(fields[1], context));
                have_classes = true;
            }
            continue;
        }
        if (line.rfind("class\t", 0) == 0) continue;  // column header
        if (!have_model || !have_classes) throw ParseError("report header missing: " + path);

        const auto fields = split_tabs(line);
        const bool wa = report.model == ModelKind::NnWa;
        const std::size_t base = wa ? 7 : 6;
        const std::size_t expected =
            wa ? base : base + static_cast<std::size_t>(report.num_classes);
        if (fields.size() != expected) {
            throw ParseError(context + ": expected " + std::to_string(expected) + " fields");
        }
        WorkerReportRow row;
        std::size_t f = 0;
        row.class_label = static_cast<int>(parse_double(fields[f++], context));
        row.worker = static_cast<std::size_t>(parse_double(fields[f++], context));
        row.worker_name = fields[f++];
        if (wa) row.lambda = parse_double(fields[f++], context);
        row.predicted = parse_double(fields[f++], context);
        if (fields[f] == "NA") {
            row.real.defined = false;
            ++f;
        } else {
            row.real.defined = true;
            row.real.value = parse_double(fields[f++], context);
        }
        row.real.support = static_cast<std::size_t>(parse_double(fields[f++], context));
        while (f < fields.size()) row.psi.push_back(parse_double(fields[f++], context));
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace crowdagg
