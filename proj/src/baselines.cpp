#include "crowdagg/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "crowdagg/numeric.hpp"

namespace crowdagg {

Predictions majority_vote(const LabelMatrix& labels) {
    const std::size_t N = labels.num_items();
    const auto C = static_cast<std::size_t>(labels.num_classes());

    Predictions pred;
    pred.label.resize(N);
    pred.posterior = Mat(N, C, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const auto votes = labels.labels_for(i);
        for (const LabelEntry& e : votes) {
            pred.posterior(i, static_cast<std::size_t>(e.label - 1)) +=
                1.0 / static_cast<double>(votes.size());
        }
        std::size_t best = 0;
        double best_votes = -1.0;
        for (std::size_t c = 0; c < C; ++c) {
            if (pred.posterior(i, c) > best_votes) {  // strict: ties to smallest class
                best_votes = pred.posterior(i, c);
                best = c;
            }
        }
        pred.label[i] = static_cast<int>(best) + 1;
    }
    return pred;
}

DawidSkeneResult dawid_skene_em(const LabelMatrix& labels, std::size_t max_iters, double tol) {
    const std::size_t N = labels.num_items();
    const std::size_t K = labels.num_workers();
    const auto C = static_cast<std::size_t>(labels.num_classes());
    constexpr double kSmooth = 1e-6;

    // item posteriors, initialized from the vote proportions
    Mat z = majority_vote(labels).posterior;

    DawidSkeneResult result;
    result.confusion.assign(K, ConfusionMatrix{Mat(C, C, 0.0)});
    result.prior.p.assign(C, 0.0);

    Mat scores(N, C, 0.0);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        // M-step: confusion rows and class marginals from the posteriors.
        for (ConfusionMatrix& cm : result.confusion) cm.rows.fill(0.0);
        for (const LabelEntry& e : labels.entries()) {
            const auto l = static_cast<std::size_t>(e.label - 1);
            for (std::size_t c = 0; c < C; ++c) {
                result.confusion[e.worker].rows(c, l) += z(e.item, c);
            }
        }
        for (ConfusionMatrix& cm : result.confusion) {
            for (std::size_t c = 0; c < C; ++c) {
                double total = 0.0;
                for (std::size_t j = 0; j < C; ++j) total += cm.rows(c, j);
                for (std::size_t j = 0; j < C; ++j) {
                    cm.rows(c, j) = (cm.rows(c, j) + kSmooth) /
                                    (total + kSmooth * static_cast<double>(C));
                }
            }
        }
        std::fill(result.prior.p.begin(), result.prior.p.end(), 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t c = 0; c < C; ++c) result.prior.p[c] += z(i, c);
        }
        for (double& p : result.prior.p) {
            p = (p + kSmooth) / (static_cast<double>(N) + kSmooth * static_cast<double>(C));
        }

        // E-step in log space.
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t c = 0; c < C; ++c) scores(i, c) = std::log(result.prior.p[c]);
        }
        for (const LabelEntry& e : labels.entries()) {
            const auto l = static_cast<std::size_t>(e.label - 1);
            for (std::size_t c = 0; c < C; ++c) {
                scores(e.item, c) += std::log(result.confusion[e.worker].rows(c, l));
            }
        }
        double loglik = 0.0;
        double max_change = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double lse = log_sum_exp(scores.row(i));
            loglik += lse;
            for (std::size_t c = 0; c < C; ++c) {
                const double updated = std::exp(scores(i, c) - lse);
                max_change = std::max(max_change, std::abs(updated - z(i, c)));
                z(i, c) = updated;
            }
        }
        result.loglik_history.push_back(loglik);
        result.iterations = iter + 1;
        if (max_change < tol) break;
    }

    result.predictions.posterior = z;
    result.predictions.label.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t best = 0;
        double best_prob = -1.0;
        for (std::size_t c = 0; c < C; ++c) {
            if (z(i, c) > best_prob) {
                best_prob = z(i, c);
                best = c;
            }
        }
        result.predictions.label[i] = static_cast<int>(best) + 1;
    }
    return result;
}

}  // namespace crowdagg
