#include "crowdagg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace crowdagg {

namespace {

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

int parse_int(const std::string& token, const std::string& context) {
    int value = 0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ParseError("expected an integer, got '" + token + "' (" + context + ")");
    }
    return value;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool skip_line(const std::string& line) {
    return line.empty() || line[0] == '#';
}

void check_label_range(int label, int num_classes, const std::string& context) {
    if (label < 1 || label > num_classes) {
        throw InvalidLabel("label " + std::to_string(label) + " outside [1, " +
                           std::to_string(num_classes) + "] (" + context + ")");
    }
}

}  // namespace

void LabelMatrix::index_entries() {
    std::sort(entries_.begin(), entries_.end(), [](const LabelEntry& a, const LabelEntry& b) {
        return a.item != b.item ? a.item < b.item : a.worker < b.worker;
    });
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        if (entries_[i].item == entries_[i - 1].item && entries_[i].worker == entries_[i - 1].worker) {
            throw DuplicateLabel("duplicate label for item '" + item_names_[entries_[i].item] +
                                 "' by worker '" + worker_names_[entries_[i].worker] + "'");
        }
    }
    item_offsets_.assign(num_items_ + 1, 0);
    for (const LabelEntry& e : entries_) item_offsets_[e.item + 1]++;
    for (std::size_t i = 0; i < num_items_; ++i) {
        if (item_offsets_[i + 1] == 0) {
            throw EmptyDataset("item '" + item_names_[i] + "' has no labels");
        }
        item_offsets_[i + 1] += item_offsets_[i];
    }
}

LabelMatrix LabelMatrix::from_records(
    const std::vector<std::tuple<std::string, std::string, int>>& records,
    int num_classes) {
    if (num_classes < 2) throw InvalidConfig("num_classes must be >= 2");
    if (records.empty()) throw EmptyDataset("no label records");

    LabelMatrix m;
    m.num_classes_ = num_classes;
    std::unordered_map<std::string, std::uint32_t> item_ids;
    std::unordered_map<std::string, std::uint32_t> worker_ids;
    m.entries_.reserve(records.size());
    for (const auto& [item, worker, label] : records) {
        check_label_range(label, num_classes, "item '" + item + "', worker '" + worker + "'");
        auto [item_it, item_new] = item_ids.emplace(item, static_cast<std::uint32_t>(m.item_names_.size()));
        if (item_new) m.item_names_.push_back(item);
        auto [worker_it, worker_new] =
            worker_ids.emplace(worker, static_cast<std::uint32_t>(m.worker_names_.size()));
        if (worker_new) m.worker_names_.push_back(worker);
        m.entries_.push_back({item_it->second, worker_it->second, label});
    }
    m.num_items_ = m.item_names_.size();
    m.num_workers_ = m.worker_names_.size();
    m.index_entries();
    return m;
}

LabelMatrix LabelMatrix::from_entries(std::vector<LabelEntry> entries,
                                      std::size_t num_items,
                                      std::size_t num_workers,
                                      int num_classes) {
    if (num_classes < 2) throw InvalidConfig("num_classes must be >= 2");
    if (entries.empty()) throw EmptyDataset("no label entries");

    LabelMatrix m;
    m.num_items_ = num_items;
    m.num_workers_ = num_workers;
    m.num_classes_ = num_classes;
    m.entries_ = std::move(entries);
    m.item_names_.reserve(num_items);
    for (std::size_t i = 0; i < num_items; ++i) m.item_names_.push_back(std::to_string(i));
    m.worker_names_.reserve(num_workers);
    for (std::size_t k = 0; k < num_workers; ++k) m.worker_names_.push_back(std::to_string(k));
    for (const LabelEntry& e : m.entries_) {
        if (e.item >= num_items || e.worker >= num_workers) {
            throw InvalidConfig("label entry ids out of range");
        }
        check_label_range(e.label, num_classes,
                          "item " + std::to_string(e.item) + ", worker " + std::to_string(e.worker));
    }
    m.index_entries();
    return m;
}

LabelMatrix load_labels(const std::string& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open label file: " + path);
    std::vector<std::tuple<std::string, std::string, int>> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skip_line(line)) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 3) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected item<TAB>worker<TAB>label");
        }
        records.emplace_back(fields[0], fields[1],
                             parse_int(fields[2], path + ":" + std::to_string(line_no)));
    }
    if (records.empty()) throw EmptyDataset("label file has no records: " + path);
    return LabelMatrix::from_records(records, num_classes);
}

LabelMatrix load_labels_dense(const std::string& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open label file: " + path);
    std::vector<LabelEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    std::size_t num_items = 0;
    std::size_t num_workers = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skip_line(line)) continue;
        const auto fields = split_tabs(line);
        if (num_workers == 0) {
            num_workers = fields.size();
        } else if (fields.size() != num_workers) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": row width changed from " +
                             std::to_string(num_workers) + " to " + std::to_string(fields.size()));
        }
        const auto item = static_cast<std::uint32_t>(num_items);
        for (std::size_t k = 0; k < fields.size(); ++k) {
            const int value = parse_int(fields[k], path + ":" + std::to_string(line_no));
            if (value == -1) continue;
            check_label_range(value, num_classes, path + ":" + std::to_string(line_no));
            entries.push_back({item, static_cast<std::uint32_t>(k), value});
        }
        ++num_items;
    }
    if (entries.empty()) throw EmptyDataset("dense label file has no labels: " + path);
    return LabelMatrix::from_entries(std::move(entries), num_items, num_workers, num_classes);
}

void save_labels(const LabelMatrix& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write label file: " + path);
    for (const LabelEntry& e : labels.entries()) {
        out << labels.item_names()[e.item] << '\t' << labels.worker_names()[e.worker] << '\t'
            << e.label << '\n';
    }
    if (!out) throw Error("failed writing label file: " + path);
}

GoldLabels load_gold(const std::string& path, const LabelMatrix& labels) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open gold file: " + path);
    std::unordered_map<std::string, std::size_t> item_ids;
    for (std::size_t i = 0; i < labels.item_names().size(); ++i) {
        item_ids.emplace(labels.item_names()[i], i);
    }
    GoldLabels gold;
    gold.label.assign(labels.num_items(), 0);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skip_line(line)) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 2) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected item<TAB>label");
        }
        const int value = parse_int(fields[1], path + ":" + std::to_string(line_no));
        check_label_range(value, labels.num_classes(), path + ":" + std::to_string(line_no));
        const auto it = item_ids.find(fields[0]);
        if (it == item_ids.end()) continue;  // gold may cover items outside this matrix
        if (gold.label[it->second] != 0) {
            throw DuplicateLabel("duplicate gold label for item '" + fields[0] + "'");
        }
        gold.label[it->second] = value;
        ++gold.count;
    }
    return gold;
}

void save_gold(const GoldLabels& gold, const LabelMatrix& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write gold file: " + path);
    for (std::size_t i = 0; i < labels.num_items(); ++i) {
        if (!gold.has(i)) continue;
        out << labels.item_names()[i] << '\t' << gold.label[i] << '\n';
    }
    if (!out) throw Error("failed writing gold file: " + path);
}

Prior estimate_prior(const LabelMatrix& labels) {
    if (labels.num_labels() == 0) throw EmptyDataset("cannot estimate prior from empty matrix");
    Prior prior;
    prior.p.assign(static_cast<std::size_t>(labels.num_classes()), 0.0);
    for (const LabelEntry& e : labels.entries()) {
        prior.p[static_cast<std::size_t>(e.label - 1)] += 1.0;
    }
    const double total = static_cast<double>(labels.num_labels());
    for (double& v : prior.p) v /= total;
    return prior;
}

std::vector<double> encode_instance(const LabelMatrix& labels, std::size_t item) {
    std::vector<double> x(labels.num_workers() * static_cast<std::size_t>(labels.num_classes()), 0.0);
    encode_instance_into(labels, item, x);
    return x;
}

void encode_instance_into(const LabelMatrix& labels, std::size_t item, std::span<double> out) {
    const auto C = static_cast<std::size_t>(labels.num_classes());
    if (out.size() != labels.num_workers() * C) {
        throw ShapeError("encode buffer has wrong length");
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (const LabelEntry& e : labels.labels_for(item)) {
        out[e.worker * C + static_cast<std::size_t>(e.label - 1)] = 1.0;
    }
}

MinibatchSampler::MinibatchSampler(std::size_t num_items, std::size_t batch_size, Rng& rng, bool iid)
    : num_items_(num_items), batch_size_(batch_size), iid_(iid), rng_(&rng) {
    if (batch_size_ < 1) throw InvalidConfig("batch size must be >= 1");
    if (num_items_ < 1) throw InvalidConfig("cannot sample from an empty dataset");
    if (batch_size_ > num_items_) throw InvalidConfig("batch size exceeds number of items");
    batches_per_epoch_ = (num_items_ + batch_size_ - 1) / batch_size_;
    order_.resize(num_items_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
}

const std::vector<std::size_t>& MinibatchSampler::next() {
    batch_.clear();
    if (iid_) {
        for (std::size_t i = 0; i < batch_size_; ++i) batch_.push_back(rng_->uniform_index(num_items_));
        return batch_;
    }
    if (cursor_ == 0) rng_->shuffle(order_);
    const std::size_t end = std::min(cursor_ + batch_size_, num_items_);
    batch_.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                  order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end == num_items_ ? 0 : end;
    return batch_;
}

namespace {

void validate_synth(const SynthConfig& c) {
    if (c.num_items < 1 || c.num_workers < 1) throw InvalidConfig("synthetic size must be positive");
    if (c.num_classes < 2) throw InvalidConfig("num_classes must be >= 2");
    if (c.labels_per_item < 1 || c.labels_per_item > c.num_workers) {
        throw InvalidConfig("labels_per_item must lie in [1, num_workers]");
    }
    if (!c.class_prior.empty()) {
        if (c.class_prior.size() != static_cast<std::size_t>(c.num_classes)) {
            throw InvalidConfig("class_prior size must equal num_classes");
        }
        double total = 0.0;
        for (double p : c.class_prior) {
            if (p < 0.0) throw InvalidConfig("class_prior entries must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) throw InvalidConfig("class_prior must sum to 1");
    }
    if (c.kind == SynthKind::WorkerAbility) {
        if (c.worker_accuracy.size() != c.num_workers) {
            throw InvalidConfig("worker_accuracy size must equal num_workers");
        }
        for (double a : c.worker_accuracy) {
            if (!(a > 0.0 && a < 1.0)) throw InvalidConfig("planted accuracies must lie in (0,1)");
        }
    } else {
        if (c.confusion.size() != c.num_workers) {
            throw InvalidConfig("confusion size must equal num_workers");
        }
        for (const Mat& m : c.confusion) {
            if (m.rows != static_cast<std::size_t>(c.num_classes) ||
                m.cols != static_cast<std::size_t>(c.num_classes)) {
                throw InvalidConfig("confusion matrices must be C x C");
            }
            for (std::size_t r = 0; r < m.rows; ++r) {
                double total = 0.0;
                for (std::size_t j = 0; j < m.cols; ++j) {
                    if (m(r, j) < 0.0) throw InvalidConfig("confusion entries must be >= 0");
                    total += m(r, j);
                }
                if (std::abs(total - 1.0) > 1e-9) throw InvalidConfig("confusion rows must sum to 1");
            }
        }
    }
}

}  // namespace

SynthData generate_synthetic(const SynthConfig& config) {
    validate_synth(config);
    Rng rng(config.seed);
    const auto C = static_cast<std::size_t>(config.num_classes);

    std::vector<double> prior = config.class_prior;
    if (prior.empty()) prior.assign(C, 1.0 / static_cast<double>(C));

    GoldLabels gold;
    gold.label.resize(config.num_items);
    gold.count = config.num_items;

    std::vector<LabelEntry> entries;
    entries.reserve(config.num_items * config.labels_per_item);
    std::vector<std::size_t> pool(config.num_workers);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> chosen(config.labels_per_item);

    for (std::size_t i = 0; i < config.num_items; ++i) {
        const int truth = static_cast<int>(rng.categorical(prior)) + 1;
        gold.label[i] = truth;

        // partial Fisher-Yates: first labels_per_item slots become the sample
        for (std::size_t j = 0; j < config.labels_per_item; ++j) {
            const std::size_t swap_with = j + rng.uniform_index(config.num_workers - j);
            std::swap(pool[j], pool[swap_with]);
            chosen[j] = pool[j];
        }
        std::sort(chosen.begin(), chosen.end());

        for (const std::size_t k : chosen) {
            int label;
            if (config.kind == SynthKind::WorkerAbility) {
                if (rng.uniform() < config.worker_accuracy[k]) {
                    label = truth;
                } else {
                    const auto wrong = static_cast<int>(rng.uniform_index(C - 1));
                    label = wrong + 1 < truth ? wrong + 1 : wrong + 2;
                }
            } else {
                label = static_cast<int>(rng.categorical(
                            config.confusion[k].row(static_cast<std::size_t>(truth - 1)))) + 1;
            }
            entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k), label});
        }
    }

    SynthData data;
    data.labels = LabelMatrix::from_entries(std::move(entries), config.num_items,
                                            config.num_workers, config.num_classes);
    data.gold = std::move(gold);
    return data;
}

std::vector<double> draw_worker_accuracies(std::size_t num_workers, double lo, double hi, Rng& rng) {
    if (!(lo > 0.0 && hi < 1.0 && lo <= hi)) {
        throw InvalidConfig("accuracy range must satisfy 0 < lo <= hi < 1");
    }
    std::vector<double> acc(num_workers);
    for (double& a : acc) a = rng.uniform(lo, hi);
    return acc;
}

std::vector<Mat> draw_diagonal_confusions(std::size_t num_workers, int num_classes,
                                          double diag_lo, double diag_hi, Rng& rng) {
    if (num_classes < 2) throw InvalidConfig("num_classes must be >= 2");
    if (!(diag_lo > 0.0 && diag_hi < 1.0 && diag_lo <= diag_hi)) {
        throw InvalidConfig("diagonal range must satisfy 0 < lo <= hi < 1");
    }
    const auto C = static_cast<std::size_t>(num_classes);
    std::vector<Mat> out;
    out.reserve(num_workers);
    for (std::size_t k = 0; k < num_workers; ++k) {
        const double diag = rng.uniform(diag_lo, diag_hi);
        Mat m(C, C, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            double total = 0.0;
            std::vector<double> weight(C, 0.0);
            for (std::size_t j = 0; j < C; ++j) {
                if (j == c) continue;
                weight[j] = rng.uniform(0.5, 1.5);
                total += weight[j];
            }
            m(c, c) = diag;
            for (std::size_t j = 0; j < C; ++j) {
                if (j != c) m(c, j) = (1.0 - diag) * weight[j] / total;
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace crowdagg
