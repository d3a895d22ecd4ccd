#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "crowdagg/errors.hpp"
#include "crowdagg/rng.hpp"
#include "crowdagg/types.hpp"

namespace crowdagg {

// One observed label: worker `worker` labeled item `item` with `label` in [1, C].
struct LabelEntry {
    std::uint32_t item;
    std::uint32_t worker;
    int label;
};

// Sparse item x worker label matrix. Internal ids are dense and 0-based;
// the external string ids survive in item_names()/worker_names(). The dense
// missing-label sentinel (-1) exists only in file formats, never in here.
// Immutable after construction and safe to share across threads.
class LabelMatrix {
public:
    LabelMatrix() = default;

    // Records are (item_id, worker_id, label) with arbitrary string ids.
    // Ids are reindexed densely in first-appearance order.
    static LabelMatrix from_records(
        const std::vector<std::tuple<std::string, std::string, int>>& records,
        int num_classes);

    // Pre-indexed entries; item/worker ids must lie in [0, num_items) x
    // [0, num_workers). Names default to the decimal ids.
    static LabelMatrix from_entries(std::vector<LabelEntry> entries,
                                    std::size_t num_items,
                                    std::size_t num_workers,
                                    int num_classes);

    std::size_t num_items() const { return num_items_; }
    std::size_t num_workers() const { return num_workers_; }
    int num_classes() const { return num_classes_; }
    std::size_t num_labels() const { return entries_.size(); }

    // Labels collected for one item (the instance l_i), ordered by worker id.
    std::span<const LabelEntry> labels_for(std::size_t item) const {
        return {entries_.data() + item_offsets_[item],
                item_offsets_[item + 1] - item_offsets_[item]};
    }

    std::span<const LabelEntry> entries() const { return entries_; }

    const std::vector<std::string>& item_names() const { return item_names_; }
    const std::vector<std::string>& worker_names() const { return worker_names_; }

private:
    std::size_t num_items_ = 0;
    std::size_t num_workers_ = 0;
    int num_classes_ = 0;
    std::vector<LabelEntry> entries_;       // sorted by (item, worker)
    std::vector<std::size_t> item_offsets_; // size num_items_ + 1
    std::vector<std::string> item_names_;
    std::vector<std::string> worker_names_;

    void index_entries();
};

// Sparse file: `item<TAB>worker<TAB>label` per line, labels 1-based,
// lines starting with '#' ignored.
LabelMatrix load_labels(const std::string& path, int num_classes);

// Dense file: one row per item, K tab-separated values in {-1} u [1, C];
// -1 marks a missing label. Implicit integer ids.
LabelMatrix load_labels_dense(const std::string& path, int num_classes);

void save_labels(const LabelMatrix& labels, const std::string& path);

// Gold file: `item<TAB>label`. Entries whose item id never appears in
// `labels` are ignored (gold may cover a superset from another split).
GoldLabels load_gold(const std::string& path, const LabelMatrix& labels);

void save_gold(const GoldLabels& gold, const LabelMatrix& labels, const std::string& path);

// Class prior from observed label counts; fixed for the whole training run.
Prior estimate_prior(const LabelMatrix& labels);

// Network input encoding: K blocks of C, block k one-hot at the label worker
// k gave, all zeros when worker k did not label the item.
std::vector<double> encode_instance(const LabelMatrix& labels, std::size_t item);
void encode_instance_into(const LabelMatrix& labels, std::size_t item, std::span<double> out);

// Mini-batch item sampler. Default mode draws without replacement within an
// epoch: a fresh permutation is consumed in chunks of batch_size (the last
// chunk of an epoch may be short). iid mode samples with replacement instead.
class MinibatchSampler {
public:
    MinibatchSampler(std::size_t num_items, std::size_t batch_size, Rng& rng, bool iid = false);

    const std::vector<std::size_t>& next();
    std::size_t batches_per_epoch() const { return batches_per_epoch_; }

private:
    std::size_t num_items_;
    std::size_t batch_size_;
    bool iid_;
    Rng* rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t batches_per_epoch_;
    std::vector<std::size_t> batch_;
};

enum class SynthKind { WorkerAbility, Confusion };

struct SynthConfig {
    std::size_t num_items = 0;
    std::size_t num_workers = 0;
    int num_classes = 2;
    SynthKind kind = SynthKind::WorkerAbility;
    std::vector<double> class_prior;      // size C; empty means uniform
    std::vector<double> worker_accuracy;  // size K, each in (0,1); WorkerAbility kind
    std::vector<Mat> confusion;           // K row-stochastic CxC matrices; Confusion kind
    std::size_t labels_per_item = 5;      // distinct workers drawn per item
    std::uint64_t seed = 1;
};

struct SynthData {
    LabelMatrix labels;
    GoldLabels gold;
};

SynthData generate_synthetic(const SynthConfig& config);

// Helpers for building planted-parameter configs.
std::vector<double> draw_worker_accuracies(std::size_t num_workers, double lo, double hi, Rng& rng);
std::vector<Mat> draw_diagonal_confusions(std::size_t num_workers, int num_classes,
                                          double diag_lo, double diag_hi, Rng& rng);

}  // namespace crowdagg
