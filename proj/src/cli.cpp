#include "crowdagg/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "crowdagg/baselines.hpp"
#include "crowdagg/dataset.hpp"
#include "crowdagg/evaluate.hpp"
#include "crowdagg/trainer.hpp"

namespace crowdagg {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct IoOptions {
    std::string labels_path;
    std::string gold_path;
    int num_classes = 0;
    bool dense = false;
};

struct TrainCliOptions {
    TrainConfig config;
    std::string out_path;
    std::string posterior_out;
    std::string checkpoint_out;
    DecodeRule decode = DecodeRule::GuidingMle;
};

LabelMatrix load_matrix(const IoOptions& io) {
    return io.dense ? load_labels_dense(io.labels_path, io.num_classes)
                    : load_labels(io.labels_path, io.num_classes);
}

void add_io_options(CLI::App* cmd, IoOptions& io, bool need_gold = false) {
    cmd->add_option("--labels", io.labels_path, "Label file (item<TAB>worker<TAB>label)")
        ->required();
    cmd->add_option("--classes", io.num_classes, "Number of classes C")->required();
    cmd->add_flag("--dense", io.dense, "Labels are a dense item x worker grid with -1 for missing");
    auto* gold = cmd->add_option("--gold", io.gold_path, "Gold label file (item<TAB>label)");
    if (need_gold) gold->required();
}

void add_train_options(CLI::App* cmd, TrainCliOptions& opt) {
    const std::map<std::string, ModelKind> models{{"nn-wa", ModelKind::NnWa},
                                                  {"nn-mc", ModelKind::NnMc}};
    cmd->add_option("--model", opt.config.model, "Guiding model")
        ->transform(CLI::CheckedTransformer(models, CLI::ignore_case))
        ->default_str("nn-mc");
    cmd->add_option("--hidden", opt.config.hidden_dim, "Hidden width (0 = 4*C)");
    cmd->add_option("--batch", opt.config.batch_size, "Mini-batch size");
    cmd->add_option("--epochs", opt.config.max_epochs, "Maximum training epochs");
    cmd->add_option("--lr", opt.config.optimizer.learning_rate, "RMSProp learning rate");
    cmd->add_option("--decay", opt.config.optimizer.decay, "RMSProp decay rho");
    cmd->add_option("--stabilizer", opt.config.optimizer.epsilon, "RMSProp epsilon");
    cmd->add_option("--window", opt.config.convergence_window, "Convergence window (epochs)");
    cmd->add_option("--tol", opt.config.convergence_tol, "Convergence tolerance");
    cmd->add_option("--seed", opt.config.seed, "Random seed");
    cmd->add_flag("--iid", opt.config.iid_sampling,
                  "Sample batches i.i.d. with replacement instead of per-epoch permutations");
    cmd->add_option("--omega-diag-delta", opt.config.omega_diag_delta,
                    "Optional diagonal-favoring omega init offset (NN-MC)");
    cmd->add_option("--omega-noise-delta", opt.config.omega_noise_delta,
                    "Optional Gaussian omega init noise scale (NN-MC)");
    cmd->add_flag_callback(
        "--no-switch-fix",
        [&opt] { opt.config.label_switch = LabelSwitchPolicy::Warn; },
        "Only warn on label switching instead of applying the recovered permutation");

    const std::map<std::string, DecodeRule> decodes{{"mle", DecodeRule::GuidingMle},
                                                    {"map", DecodeRule::GuidingMap},
                                                    {"q", DecodeRule::Posterior}};
    cmd->add_option("--decode", opt.decode,
                    "Decoder: guiding-likelihood MLE (default), MAP with prior, or classifier q")
        ->transform(CLI::CheckedTransformer(decodes, CLI::ignore_case));

    cmd->add_option("--out", opt.out_path, "Prediction output file")->required();
    cmd->add_option("--posterior-out", opt.posterior_out, "Per-class posterior output file");
    cmd->add_option("--checkpoint-out", opt.checkpoint_out, "Model checkpoint output file");
}

void report_model(const TrainedModel& model) {
    std::printf("mu\t%g\n", model.mu);
    std::printf("epochs\t%zu\n", model.loss_history.size());
    if (!model.loss_history.empty()) {
        std::printf("final_loss\t%.6f\n", model.loss_history.back());
    }
    if (model.label_switch_detected) {
        std::string perm;
        for (std::size_t c = 0; c < model.class_permutation.size(); ++c) {
            if (c > 0) perm += ",";
            perm += std::to_string(model.class_permutation[c] + 1);
        }
        std::fprintf(stderr, "warning: label switching detected; permutation [%s] %s\n",
                     perm.c_str(), model.permutation_applied ? "applied" : "reported only");
    }
    if (model.progress_warning) {
        std::fprintf(stderr, "warning: final-window loss did not improve on the first epoch\n");
    }
}

void emit_outputs(const TrainedModel& model, const Predictions& pred, const LabelMatrix& labels,
                  const TrainCliOptions& opt, const IoOptions& io) {
    save_predictions(pred, labels, opt.out_path);
    if (!opt.posterior_out.empty()) save_posterior(pred, labels, opt.posterior_out);
    if (!opt.checkpoint_out.empty()) save_checkpoint(model, opt.checkpoint_out);
    if (!io.gold_path.empty()) {
        const GoldLabels gold = load_gold(io.gold_path, labels);
        std::printf("error_rate\t%.6f\n", error_rate(pred, gold));
    }
}

int run_aggregate(const IoOptions& io, const TrainCliOptions& opt) {
    const LabelMatrix labels = load_matrix(io);
    const TrainedModel model = train(labels, opt.config);
    const Predictions pred = predict(model, labels, opt.decode);
    report_model(model);
    emit_outputs(model, pred, labels, opt, io);
    return kExitOk;
}

int run_select_mu(const IoOptions& io, const TrainCliOptions& opt) {
    const LabelMatrix labels = load_matrix(io);
    const MuSelection selection = select_mu(labels, opt.config);
    for (const auto& [mu, score] : selection.scores) {
        if (std::isnan(score)) {
            std::fprintf(stderr, "warning: mu=%g failed and was skipped\n", mu);
            std::printf("criterion\t%g\tfailed\n", mu);
        } else {
            std::printf("criterion\t%g\t%.6f\n", mu, score);
        }
    }
    std::printf("selected_mu\t%g\n", selection.mu);
    const Predictions pred = predict(selection.model, labels, opt.decode);
    report_model(selection.model);
    emit_outputs(selection.model, pred, labels, opt, io);
    return kExitOk;
}

int run_baseline(const IoOptions& io, const std::string& method, std::size_t iters, double tol,
                 const std::string& out_path, const std::string& posterior_out) {
    const LabelMatrix labels = load_matrix(io);
    Predictions pred;
    if (method == "mv") {
        pred = majority_vote(labels);
    } else {
        DawidSkeneResult result = dawid_skene_em(labels, iters, tol);
        std::printf("iterations\t%zu\n", result.iterations);
        if (!result.loglik_history.empty()) {
            std::printf("loglik\t%.6f\n", result.loglik_history.back());
        }
        pred = std::move(result.predictions);
    }
    save_predictions(pred, labels, out_path);
    if (!posterior_out.empty()) save_posterior(pred, labels, posterior_out);
    if (!io.gold_path.empty()) {
        const GoldLabels gold = load_gold(io.gold_path, labels);
        std::printf("error_rate\t%.6f\n", error_rate(pred, gold));
    }
    return kExitOk;
}

// Joins prediction and gold files on their external item ids.
int run_evaluate(const std::string& pred_path, const std::string& gold_path) {
    const auto read_pairs = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open file: " + path);
        std::unordered_map<std::string, int> out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": expected item<TAB>label");
            }
            try {
                out[line.substr(0, tab)] = std::stoi(line.substr(tab + 1));
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": bad label");
            }
        }
        return out;
    };

    const auto pred = read_pairs(pred_path);
    const auto gold = read_pairs(gold_path);
    std::size_t scored = 0;
    std::size_t wrong = 0;
    for (const auto& [item, label] : gold) {
        const auto it = pred.find(item);
        if (it == pred.end()) continue;
        ++scored;
        if (it->second != label) ++wrong;
    }
    if (scored == 0) throw NoGoldOverlap("no overlap between predictions and gold labels");
    std::printf("items\t%zu\n", scored);
    std::printf("error_rate\t%.6f\n", static_cast<double>(wrong) / static_cast<double>(scored));
    return kExitOk;
}

int run_report_workers(const IoOptions& io, const std::string& checkpoint_path,
                       const std::string& out_path) {
    const LabelMatrix labels = load_matrix(io);
    const TrainedModel model = load_checkpoint(checkpoint_path);
    GoldLabels gold;
    gold.label.assign(labels.num_items(), 0);
    if (!io.gold_path.empty()) gold = load_gold(io.gold_path, labels);
    const WorkerReport report = report_workers(model, labels, gold);
    save_worker_report(report, out_path);
    std::printf("rows\t%zu\n", report.rows.size());
    return kExitOk;
}

struct SynthCliOptions {
    SynthConfig config;
    double acc_lo = 0.55, acc_hi = 0.9;
    double diag_lo = 0.5, diag_hi = 0.95;
    std::string out_path;
    std::string gold_out;
};

int run_synth(SynthCliOptions& opt, const std::string& kind) {
    Rng rng(Rng::derive(opt.config.seed, 7));
    if (kind == "ability") {
        opt.config.kind = SynthKind::WorkerAbility;
        opt.config.worker_accuracy =
            draw_worker_accuracies(opt.config.num_workers, opt.acc_lo, opt.acc_hi, rng);
    } else {
        opt.config.kind = SynthKind::Confusion;
        opt.config.confusion = draw_diagonal_confusions(
            opt.config.num_workers, opt.config.num_classes, opt.diag_lo, opt.diag_hi, rng);
    }
    const SynthData data = generate_synthetic(opt.config);
    save_labels(data.labels, opt.out_path);
    if (!opt.gold_out.empty()) save_gold(data.gold, data.labels, opt.gold_out);
    std::printf("items\t%zu\nworkers\t%zu\nlabels\t%zu\n", data.labels.num_items(),
                data.labels.num_workers(), data.labels.num_labels());
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"crowdagg: aggregate redundant noisy crowd labels into predicted true labels"};
    app.require_subcommand(1);
    app.set_config("--config");

    IoOptions agg_io;
    TrainCliOptions agg_opt;
    auto* aggregate = app.add_subcommand(
        "aggregate", "Train a consensus model (NN-WA or NN-MC) and predict true labels");
    add_io_options(aggregate, agg_io);
    add_train_options(aggregate, agg_opt);
    aggregate->add_option("--mu", agg_opt.config.mu, "KL regularizer weight");

    IoOptions sel_io;
    TrainCliOptions sel_opt;
    auto* selectmu = app.add_subcommand(
        "select-mu", "Train over a mu grid and keep the maximum-likelihood model");
    add_io_options(selectmu, sel_io);
    add_train_options(selectmu, sel_opt);
    selectmu->add_option("--mu-grid", sel_opt.config.mu_grid, "Grid of mu values")
        ->delimiter(',');

    IoOptions base_io;
    std::string base_method;
    std::size_t base_iters = 200;
    double base_tol = 1e-6;
    std::string base_out;
    std::string base_posterior;
    auto* baseline = app.add_subcommand("baseline", "Run a reference aggregator");
    add_io_options(baseline, base_io);
    baseline->add_option("--method", base_method, "mv or dawid-skene")
        ->required()
        ->check(CLI::IsMember({"mv", "dawid-skene"}));
    baseline->add_option("--iters", base_iters, "Dawid&Skene maximum EM iterations");
    baseline->add_option("--tol", base_tol, "Dawid&Skene posterior-change tolerance");
    baseline->add_option("--out", base_out, "Prediction output file")->required();
    baseline->add_option("--posterior-out", base_posterior, "Posterior output file");

    std::string eval_pred;
    std::string eval_gold;
    auto* evaluate = app.add_subcommand("evaluate", "Error rate of a prediction file against gold");
    evaluate->add_option("--pred", eval_pred, "Prediction file")->required();
    evaluate->add_option("--gold", eval_gold, "Gold label file")->required();

    IoOptions rep_io;
    std::string rep_checkpoint;
    std::string rep_out;
    auto* report = app.add_subcommand(
        "report-workers", "Predicted vs real per-worker accuracy from a trained checkpoint");
    add_io_options(report, rep_io);
    report->add_option("--checkpoint", rep_checkpoint, "Trained model checkpoint")->required();
    report->add_option("--out", rep_out, "Report output file")->required();

    SynthCliOptions synth_opt;
    std::string synth_kind = "ability";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic annotator dataset");
    synth->add_option("--items", synth_opt.config.num_items, "Number of items")->required();
    synth->add_option("--workers", synth_opt.config.num_workers, "Number of workers")->required();
    synth->add_option("--classes", synth_opt.config.num_classes, "Number of classes")->required();
    synth->add_option("--kind", synth_kind, "Planted worker model")
        ->check(CLI::IsMember({"ability", "confusion"}));
    synth->add_option("--labels-per-item", synth_opt.config.labels_per_item,
                      "Distinct workers per item");
    synth->add_option("--prior", synth_opt.config.class_prior, "Gold class prior")
        ->delimiter(',');
    synth->add_option("--acc-lo", synth_opt.acc_lo, "Planted accuracy lower bound (ability)");
    synth->add_option("--acc-hi", synth_opt.acc_hi, "Planted accuracy upper bound (ability)");
    synth->add_option("--diag-lo", synth_opt.diag_lo, "Planted diagonal lower bound (confusion)");
    synth->add_option("--diag-hi", synth_opt.diag_hi, "Planted diagonal upper bound (confusion)");
    synth->add_option("--seed", synth_opt.config.seed, "Random seed");
    synth->add_option("--out", synth_opt.out_path, "Label output file")->required();
    synth->add_option("--gold-out", synth_opt.gold_out, "Gold output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (aggregate->parsed()) return run_aggregate(agg_io, agg_opt);
        if (selectmu->parsed()) return run_select_mu(sel_io, sel_opt);
        if (baseline->parsed()) {
            return run_baseline(base_io, base_method, base_iters, base_tol, base_out,
                                base_posterior);
        }
        if (evaluate->parsed()) return run_evaluate(eval_pred, eval_gold);
        if (report->parsed()) return run_report_workers(rep_io, rep_checkpoint, rep_out);
        if (synth->parsed()) return run_synth(synth_opt, synth_kind);
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace crowdagg
