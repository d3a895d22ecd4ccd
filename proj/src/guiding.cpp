#include "crowdagg/guiding.hpp"

#include <cmath>

namespace crowdagg {

WaParams WaParams::zeros(std::size_t num_classes, std::size_t num_workers) {
    WaParams p;
    p.num_classes = num_classes;
    p.num_workers = num_workers;
    p.lambda.assign(num_classes * num_workers, 0.0);
    return p;
}

McParams McParams::zeros(std::size_t num_classes, std::size_t num_workers) {
    McParams p;
    p.num_classes = num_classes;
    p.num_workers = num_workers;
    p.omega.assign(num_classes * num_workers * num_classes, 0.0);
    return p;
}

namespace {

void require_binary(const WaParams& params) {
    if (params.num_classes != 2) {
        throw BinaryOnly("the worker-ability model supports exactly 2 classes, got " +
                         std::to_string(params.num_classes));
    }
}

void check_dims(std::size_t model_classes, std::size_t model_workers, const LabelMatrix& labels) {
    if (model_classes != static_cast<std::size_t>(labels.num_classes()) ||
        model_workers != labels.num_workers()) {
        throw ShapeError("guiding parameters sized for " + std::to_string(model_workers) +
                         " workers / " + std::to_string(model_classes) +
                         " classes do not match the label matrix");
    }
}

}  // namespace

double wa_loglik(const WaParams& params, const LabelMatrix& labels, std::size_t item,
                 int class_label) {
    require_binary(params);
    check_dims(params.num_classes, params.num_workers, labels);
    const auto c = static_cast<std::size_t>(class_label - 1);
    double total = 0.0;
    for (const LabelEntry& e : labels.labels_for(item)) {
        const double lam = params.at(c, e.worker);
        total += e.label == class_label ? log_sigmoid(lam) : log_sigmoid(-lam);
    }
    return total;
}

PsiTable mc_psi(const McParams& params) {
    PsiTable table;
    table.num_classes = params.num_classes;
    table.num_workers = params.num_workers;
    table.psi = params.omega;
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        for (std::size_t k = 0; k < params.num_workers; ++k) {
            softmax_inplace({table.psi.data() + (c * params.num_workers + k) * params.num_classes,
                             params.num_classes});
        }
    }
    return table;
}

double mc_loglik(const PsiTable& psi, const LabelMatrix& labels, std::size_t item,
                 int class_label) {
    check_dims(psi.num_classes, psi.num_workers, labels);
    const auto c = static_cast<std::size_t>(class_label - 1);
    double total = 0.0;
    for (const LabelEntry& e : labels.labels_for(item)) {
        total += std::log(psi.at(c, e.worker, static_cast<std::size_t>(e.label - 1)));
    }
    return total;
}

Mat wa_loglik_matrix(const WaParams& params, const LabelMatrix& labels,
                     std::span<const std::size_t> items) {
    require_binary(params);
    check_dims(params.num_classes, params.num_workers, labels);
    const std::size_t C = params.num_classes;
    const std::size_t K = params.num_workers;

    // log sigma(lambda) and log(1 - sigma(lambda)) tables, one entry per (c,k)
    std::vector<double> log_correct(C * K);
    std::vector<double> log_wrong(C * K);
    for (std::size_t i = 0; i < C * K; ++i) {
        log_correct[i] = log_sigmoid(params.lambda[i]);
        log_wrong[i] = log_sigmoid(-params.lambda[i]);
    }

    Mat out(items.size(), C, 0.0);
    for (std::size_t r = 0; r < items.size(); ++r) {
        for (const LabelEntry& e : labels.labels_for(items[r])) {
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t idx = c * K + e.worker;
                out(r, c) += e.label == static_cast<int>(c) + 1 ? log_correct[idx] : log_wrong[idx];
            }
        }
    }
    return out;
}

Mat mc_loglik_matrix(const PsiTable& psi, const LabelMatrix& labels,
                     std::span<const std::size_t> items) {
    check_dims(psi.num_classes, psi.num_workers, labels);
    const std::size_t C = psi.num_classes;
    std::vector<double> log_psi(psi.psi.size());
    for (std::size_t i = 0; i < log_psi.size(); ++i) log_psi[i] = std::log(psi.psi[i]);

    Mat out(items.size(), C, 0.0);
    for (std::size_t r = 0; r < items.size(); ++r) {
        for (const LabelEntry& e : labels.labels_for(items[r])) {
            const auto l = static_cast<std::size_t>(e.label - 1);
            for (std::size_t c = 0; c < C; ++c) {
                out(r, c) += log_psi[(c * psi.num_workers + e.worker) * C + l];
            }
        }
    }
    return out;
}

BatchLoss batch_loss(const Mat& q, const Mat& loglik, const Prior& prior, double mu) {
    if (q.rows != loglik.rows || q.cols != loglik.cols) {
        throw ShapeError("q and loglik shapes disagree");
    }
    if (q.cols != prior.p.size()) throw ShapeError("q columns != number of classes in prior");
    if (q.rows == 0) throw ShapeError("empty batch");

    const std::size_t M = q.rows;
    const std::size_t C = q.cols;
    const double scale = 1.0 / static_cast<double>(M);

    BatchLoss result;
    result.terms.mu = mu;
    result.terms.kl.assign(M, 0.0);
    result.terms.expected_loglik.assign(M, 0.0);
    result.dloss_dq = Mat(M, C, 0.0);

    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        double kl = 0.0;
        double expected = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double qc = q(i, c);
            if (qc == 0.0) continue;  // 0 * log(0 / p) = 0 and no gradient flows
            const double pc = prior.p[c];
            if (pc == 0.0) {
                throw DegeneratePrior("prior mass of class " + std::to_string(c + 1) +
                                      " is zero under positive q");
            }
            const double log_ratio = std::log(qc / pc);
            kl += qc * log_ratio;
            expected += qc * loglik(i, c);
            result.dloss_dq(i, c) = scale * (mu * (log_ratio + 1.0) - loglik(i, c));
        }
        kl = std::max(kl, 0.0);  // Gibbs; shields the sum from rounding dust
        result.terms.kl[i] = kl;
        result.terms.expected_loglik[i] = expected;
        total += mu * kl - expected;
    }
    result.terms.value = scale * total;
    return result;
}

std::vector<double> wa_loss_grad(const WaParams& params, const LabelMatrix& labels,
                                 std::span<const std::size_t> items, const Mat& q) {
    require_binary(params);
    check_dims(params.num_classes, params.num_workers, labels);
    if (q.rows != items.size() || q.cols != params.num_classes) {
        throw ShapeError("q shape does not match batch");
    }
    const std::size_t K = params.num_workers;
    const double scale = -1.0 / static_cast<double>(items.size());

    std::vector<double> sig(params.lambda.size());
    for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = sigmoid(params.lambda[i]);

    std::vector<double> grad(params.lambda.size(), 0.0);
    for (std::size_t r = 0; r < items.size(); ++r) {
        for (const LabelEntry& e : labels.labels_for(items[r])) {
            for (std::size_t c = 0; c < params.num_classes; ++c) {
                const std::size_t idx = c * K + e.worker;
                const double indicator = e.label == static_cast<int>(c) + 1 ? 1.0 : 0.0;
                grad[idx] += scale * q(r, c) * (indicator - sig[idx]);
            }
        }
    }
    return grad;
}

std::vector<double> mc_loss_grad(const PsiTable& psi, const LabelMatrix& labels,
                                 std::span<const std::size_t> items, const Mat& q) {
    check_dims(psi.num_classes, psi.num_workers, labels);
    if (q.rows != items.size() || q.cols != psi.num_classes) {
        throw ShapeError("q shape does not match batch");
    }
    const std::size_t C = psi.num_classes;
    const std::size_t K = psi.num_workers;
    const double scale = -1.0 / static_cast<double>(items.size());

    std::vector<double> grad(psi.psi.size(), 0.0);
    for (std::size_t r = 0; r < items.size(); ++r) {
        for (const LabelEntry& e : labels.labels_for(items[r])) {
            const auto l = static_cast<std::size_t>(e.label - 1);
            for (std::size_t c = 0; c < C; ++c) {
                const double weight = scale * q(r, c);
                double* row = grad.data() + (c * K + e.worker) * C;
                const double* psirow = psi.psi.data() + (c * K + e.worker) * C;
                for (std::size_t m = 0; m < C; ++m) {
                    row[m] += weight * ((m == l ? 1.0 : 0.0) - psirow[m]);
                }
            }
        }
    }
    return grad;
}

}  // namespace crowdagg
