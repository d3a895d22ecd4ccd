#pragma once

#include <cstddef>
#include <vector>

#include "crowdagg/dataset.hpp"
#include "crowdagg/types.hpp"

namespace crowdagg {

// Row-stochastic worker confusion matrix: row = true class, column = label
// the worker reports.
struct ConfusionMatrix {
    Mat rows;  // C x C

    int num_classes() const { return static_cast<int>(rows.rows); }
};

// Most frequent label per item; ties go to the smallest class index.
// posterior holds the per-item vote proportions.
Predictions majority_vote(const LabelMatrix& labels);

struct DawidSkeneResult {
    Predictions predictions;                 // posterior = final item posteriors
    std::vector<ConfusionMatrix> confusion;  // one per worker
    Prior prior;
    std::vector<double> loglik_history;      // observed-data log likelihood per iteration
    std::size_t iterations = 0;
};

// Classic EM over worker confusion matrices. Posteriors start from
// majority-vote proportions; each iteration re-estimates the confusion rows
// and class marginals with additive smoothing, then recomputes posteriors.
// Stops when the largest posterior change drops below tol.
DawidSkeneResult dawid_skene_em(const LabelMatrix& labels, std::size_t max_iters = 200,
                                double tol = 1e-6);

}  // namespace crowdagg
