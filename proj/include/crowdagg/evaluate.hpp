#pragma once

#include <string>
#include <vector>

#include "crowdagg/dataset.hpp"
#include "crowdagg/trainer.hpp"
#include "crowdagg/types.hpp"

namespace crowdagg {

// Fraction of gold-covered items whose prediction disagrees with gold.
double error_rate(const Predictions& pred, const GoldLabels& gold);

// Real accuracy of worker `worker` on class `class_label`:
// count(l_ik = c and gold_i = c) / count(worker labeled i and gold_i = c).
// Zero support leaves the estimate undefined rather than dividing.
struct AccuracyEstimate {
    double value = 0.0;
    std::size_t support = 0;
    bool defined = false;
};

AccuracyEstimate worker_accuracy(const LabelMatrix& labels, const GoldLabels& gold,
                                 int class_label, std::size_t worker);

struct WorkerReportRow {
    int class_label = 0;  // 1-based
    std::size_t worker = 0;
    std::string worker_name;
    double predicted = 0.0;   // sigma(lambda_ck) for NN-WA, psi_ck,c for NN-MC
    double lambda = 0.0;      // NN-WA only
    AccuracyEstimate real;
    std::vector<double> psi;  // NN-MC only: the full psi_ck row
};

struct WorkerReport {
    ModelKind model = ModelKind::NnMc;
    int num_classes = 0;
    std::vector<WorkerReportRow> rows;  // ordered by (class, worker)
};

// Predicted-vs-real worker accuracy per (class, worker). Gold entries may be
// missing or empty, in which case all real accuracies come out undefined.
WorkerReport report_workers(const TrainedModel& model, const LabelMatrix& labels,
                            const GoldLabels& gold);

// Tab-separated report with full double precision; load_worker_report parses
// an emitted file back to exactly the written values.
void save_worker_report(const WorkerReport& report, const std::string& path);
WorkerReport load_worker_report(const std::string& path);

}  // namespace crowdagg
