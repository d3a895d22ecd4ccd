#pragma once

#include <cstddef>
#include <vector>

#include "crowdagg/numeric.hpp"

namespace crowdagg {

// Fixed multinomial class distribution estimated from observed label counts.
struct Prior {
    std::vector<double> p;  // p[c-1] for class c in [1, C]

    int num_classes() const { return static_cast<int>(p.size()); }
    double prob(int class_label) const { return p[static_cast<std::size_t>(class_label - 1)]; }
};

// Ground-truth labels for evaluation only; may cover a subset of items.
// label[i] == 0 means item i has no gold label.
struct GoldLabels {
    std::vector<int> label;
    std::size_t count = 0;

    bool has(std::size_t item) const { return label[item] != 0; }
};

// Per-item aggregation output. posterior/loglik are N x C and may be empty
// when the producing method does not define them (e.g. majority voting has
// no guiding likelihood).
struct Predictions {
    std::vector<int> label;  // predicted true label in [1, C]
    Mat posterior;
    Mat loglik;

    std::size_t num_items() const { return label.size(); }
};

}  // namespace crowdagg
