#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "crowdagg/dataset.hpp"
#include "crowdagg/guiding.hpp"
#include "crowdagg/network.hpp"
#include "crowdagg/types.hpp"

namespace crowdagg {

enum class ModelKind { NnWa, NnMc };

// How predicted labels are decoded from a trained model. The default follows
// the guiding-likelihood MLE; Map additionally weights by the class prior;
// Posterior takes the classifier's argmax instead.
enum class DecodeRule { GuidingMle, GuidingMap, Posterior };

// What to do when the label-switching guard fires (mean guiding diagonal
// below chance): warn only, or additionally apply the recovered class
// permutation to the trained parameters.
enum class LabelSwitchPolicy { Warn, Fix };

struct TrainConfig {
    ModelKind model = ModelKind::NnMc;
    std::size_t hidden_dim = 0;  // 0 means 4 * num_classes
    std::size_t batch_size = 64; // clamped to the number of items
    std::size_t max_epochs = 500;
    RmsProp optimizer;
    double mu = 1.0;
    std::vector<double> mu_grid;  // select_mu grid; empty means the default grid
    std::size_t convergence_window = 5;
    double convergence_tol = 1e-4;
    std::uint64_t seed = 1;
    bool iid_sampling = false;  // default: per-epoch permutation without replacement
    // Optional symmetry-breaking init for omega (both default off).
    double omega_diag_delta = 0.0;
    double omega_noise_delta = 0.0;
    LabelSwitchPolicy label_switch = LabelSwitchPolicy::Fix;
};

std::vector<double> default_mu_grid();

struct TrainedModel {
    ModelKind model = ModelKind::NnMc;
    NetworkParams net;
    std::variant<WaParams, McParams> guiding;
    Prior prior;
    double mu = 1.0;
    RmsProp optimizer;
    std::vector<double> loss_history;  // mean per-item loss per epoch
    std::size_t num_workers = 0;
    int num_classes = 0;

    // Label-switching guard results. class_permutation[c] is the 0-based
    // class that internal class c was found to represent; identity when the
    // guard saw nothing. Under LabelSwitchPolicy::Fix the permutation has
    // already been applied to the parameters.
    bool label_switch_detected = false;
    std::vector<std::size_t> class_permutation;
    bool permutation_applied = false;
    // Set when the final-window mean loss failed to improve on epoch one.
    bool progress_warning = false;

    const WaParams& wa() const { return std::get<WaParams>(guiding); }
    const McParams& mc() const { return std::get<McParams>(guiding); }
};

// One full training run of the consensus objective: per mini-batch, forward
// the classifier, evaluate the guiding log-likelihoods, and apply a single
// simultaneous RMSProp update to the network and the guiding parameters.
TrainedModel train(const LabelMatrix& labels, const TrainConfig& config);

struct MuSelection {
    double mu = 0.0;
    TrainedModel model;
    // (mu, sum_i log g(l_i | decoded label)); NaN criterion marks a failed run.
    std::vector<std::pair<double, double>> scores;
};

// Trains one model per grid value (seed = base seed + grid index), scores
// each by the likelihood of its own decoded labels, and keeps the argmax.
// Ties go to the smaller mu.
MuSelection select_mu(const LabelMatrix& labels, const TrainConfig& config);

Predictions predict(const TrainedModel& model, const LabelMatrix& labels,
                    DecodeRule rule = DecodeRule::GuidingMle);

// Likelihood criterion used by select_mu: sum_i loglik[i][predicted label].
double decoded_likelihood(const TrainedModel& model, const LabelMatrix& labels);

// Binary checkpoint; round-trips every tensor bit-exactly.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

// `item<TAB>predicted_label` with external item ids.
void save_predictions(const Predictions& pred, const LabelMatrix& labels, const std::string& path);
Predictions load_predictions(const std::string& path, const LabelMatrix& labels);

// `item<TAB>p_1<TAB>...<TAB>p_C` with full double precision.
void save_posterior(const Predictions& pred, const LabelMatrix& labels, const std::string& path);

}  // namespace crowdagg
