#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crowdagg/dataset.hpp"
#include "crowdagg/errors.hpp"
#include "crowdagg/numeric.hpp"
#include "crowdagg/types.hpp"

namespace crowdagg {

// Worker-ability guiding parameters: lambda[c][k] is an unbounded real whose
// sigmoid is the probability that worker k labels a class-c item correctly.
// Training and prediction require exactly two classes.
struct WaParams {
    std::size_t num_classes = 0;
    std::size_t num_workers = 0;
    std::vector<double> lambda;  // [c * K + k]

    static WaParams zeros(std::size_t num_classes, std::size_t num_workers);
    double& at(std::size_t c, std::size_t k) { return lambda[c * num_workers + k]; }
    double at(std::size_t c, std::size_t k) const { return lambda[c * num_workers + k]; }
};

// Confusion guiding parameters: omega[c][k] is a C-vector of logits; the
// derived psi[c][k] = softmax(omega[c][k]) is the distribution of the label
// worker k reports when the true class is c.
struct McParams {
    std::size_t num_classes = 0;
    std::size_t num_workers = 0;
    std::vector<double> omega;  // [(c * K + k) * C + m]

    static McParams zeros(std::size_t num_classes, std::size_t num_workers);
    std::span<double> row(std::size_t c, std::size_t k) {
        return {omega.data() + (c * num_workers + k) * num_classes, num_classes};
    }
    std::span<const double> row(std::size_t c, std::size_t k) const {
        return {omega.data() + (c * num_workers + k) * num_classes, num_classes};
    }
};

struct PsiTable {
    std::size_t num_classes = 0;
    std::size_t num_workers = 0;
    std::vector<double> psi;  // same layout as McParams::omega

    std::span<const double> row(std::size_t c, std::size_t k) const {
        return {psi.data() + (c * num_workers + k) * num_classes, num_classes};
    }
    double at(std::size_t c, std::size_t k, std::size_t m) const {
        return psi[(c * num_workers + k) * num_classes + m];
    }
};

// log g(l_i | t_i = c) for the worker-ability model, via stable log-sigmoid
// forms. class_label is 1-based. Throws BinaryOnly unless C == 2.
double wa_loglik(const WaParams& params, const LabelMatrix& labels, std::size_t item,
                 int class_label);

// All psi_ck = softmax(omega_ck), max-shifted.
PsiTable mc_psi(const McParams& params);

// log g(l_i | t_i = c) = sum over labelers of log psi_ck at the given label.
double mc_loglik(const PsiTable& psi, const LabelMatrix& labels, std::size_t item,
                 int class_label);

// Per-batch log-likelihood rows, one item per row, one column per class.
Mat wa_loglik_matrix(const WaParams& params, const LabelMatrix& labels,
                     std::span<const std::size_t> items);
Mat mc_loglik_matrix(const PsiTable& psi, const LabelMatrix& labels,
                     std::span<const std::size_t> items);

struct LossTerms {
    std::vector<double> kl;               // per item, KL(q_i || prior) >= 0
    std::vector<double> expected_loglik;  // per item, sum_c q_ic * loglik_ic
    double value = 0.0;                   // batch loss F^(M)
    double mu = 0.0;
};

struct BatchLoss {
    LossTerms terms;
    Mat dloss_dq;  // same shape as q
};

// F^(M) = (1/M) * sum_i { mu * KL(q_i || prior) - sum_c q_ic * loglik_ic }
// together with its gradient w.r.t. every q entry. Zero q entries contribute
// nothing (0 * log 0 = 0); a zero prior mass under positive q is degenerate.
BatchLoss batch_loss(const Mat& q, const Mat& loglik, const Prior& prior, double mu);

// Gradient of the same batch loss w.r.t. the guiding parameters.
std::vector<double> wa_loss_grad(const WaParams& params, const LabelMatrix& labels,
                                 std::span<const std::size_t> items, const Mat& q);
std::vector<double> mc_loss_grad(const PsiTable& psi, const LabelMatrix& labels,
                                 std::span<const std::size_t> items, const Mat& q);

}  // namespace crowdagg
