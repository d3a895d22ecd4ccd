#include "crowdagg/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace crowdagg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::vector<double> default_mu_grid() {
    return {0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0};
}

namespace {

double mean_range(const std::vector<double>& v, std::size_t first, std::size_t last) {
    double total = 0.0;
    for (std::size_t i = first; i < last; ++i) total += v[i];
    return total / static_cast<double>(last - first);
}

// Relative change between the means of the two most recent windows.
bool converged(const std::vector<double>& history, std::size_t window, double tol) {
    if (window < 1 || history.size() < 2 * window) return false;
    const std::size_t n = history.size();
    const double prev = mean_range(history, n - 2 * window, n - window);
    const double last = mean_range(history, n - window, n);
    return std::abs(last - prev) <= tol * std::max(std::abs(prev), 1e-12);
}

std::vector<std::size_t> identity_permutation(std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    return perm;
}

// Permutation maximizing sum_c scores(c, perm[c]). Exhaustive for small C,
// greedy beyond that (C above 8 does not occur in this domain).
std::vector<std::size_t> best_permutation(const Mat& scores) {
    const std::size_t C = scores.rows;
    if (C <= 8) {
        std::vector<std::size_t> perm = identity_permutation(C);
        std::vector<std::size_t> best = perm;
        double best_score = -std::numeric_limits<double>::infinity();
        do {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += scores(c, perm[c]);
            if (s > best_score) {
                best_score = s;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best;
    }
    std::vector<std::size_t> perm(C, C);
    std::vector<bool> row_used(C, false), col_used(C, false);
    for (std::size_t step = 0; step < C; ++step) {
        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t br = 0, bc = 0;
        for (std::size_t r = 0; r < C; ++r) {
            if (row_used[r]) continue;
            for (std::size_t c = 0; c < C; ++c) {
                if (col_used[c]) continue;
                if (scores(r, c) > best_score) {
                    best_score = scores(r, c);
                    br = r;
                    bc = c;
                }
            }
        }
        perm[br] = bc;
        row_used[br] = true;
        col_used[bc] = true;
    }
    return perm;
}

void permute_network_outputs(NetworkParams& net, const std::vector<std::size_t>& perm) {
    Mat w2 = net.w2;
    std::vector<double> b2 = net.b2;
    for (std::size_t c = 0; c < perm.size(); ++c) {
        std::copy(w2.row(c).begin(), w2.row(c).end(), net.w2.row(perm[c]).begin());
        net.b2[perm[c]] = b2[c];
    }
}

// Detects label switching: an unsupervised run can converge with class
// identities permuted; only the better-than-random-worker assumption pins
// them down. When the guard fires under Fix, the recovered permutation is
// applied to the guiding parameters and the network output layer.
void run_label_switch_guard(TrainedModel& model, LabelSwitchPolicy policy) {
    const auto C = static_cast<std::size_t>(model.num_classes);
    model.class_permutation = identity_permutation(C);

    if (model.model == ModelKind::NnWa) {
        const WaParams& wa = model.wa();
        double mean_sigma = 0.0;
        for (double lam : wa.lambda) mean_sigma += sigmoid(lam);
        mean_sigma /= static_cast<double>(wa.lambda.size());
        if (mean_sigma >= 0.5) return;

        model.label_switch_detected = true;
        model.class_permutation = {1, 0};
        if (policy == LabelSwitchPolicy::Fix) {
            // For two classes the swapped ability is the complement:
            // P(l = c | t = c) = 1 - P(l = other | t = c) = sigma(-lambda_other).
            WaParams fixed = wa;
            for (std::size_t k = 0; k < wa.num_workers; ++k) {
                fixed.at(0, k) = -wa.at(1, k);
                fixed.at(1, k) = -wa.at(0, k);
            }
            model.guiding = std::move(fixed);
            permute_network_outputs(model.net, model.class_permutation);
            model.permutation_applied = true;
        }
        return;
    }

    const McParams& mc = model.mc();
    const PsiTable psi = mc_psi(mc);
    Mat mean_psi(C, C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < mc.num_workers; ++k) {
            for (std::size_t m = 0; m < C; ++m) {
                mean_psi(c, m) += psi.at(c, k, m) / static_cast<double>(mc.num_workers);
            }
        }
    }
    double mean_diag = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean_diag += mean_psi(c, c);
    mean_diag /= static_cast<double>(C);
    if (mean_diag >= 1.0 / static_cast<double>(C)) return;

    model.label_switch_detected = true;
    model.class_permutation = best_permutation(mean_psi);
    if (policy == LabelSwitchPolicy::Fix &&
        model.class_permutation != identity_permutation(C)) {
        McParams fixed = mc;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < mc.num_workers; ++k) {
                auto src = mc.row(c, k);
                auto dst = fixed.row(model.class_permutation[c], k);
                std::copy(src.begin(), src.end(), dst.begin());
            }
        }
        model.guiding = std::move(fixed);
        permute_network_outputs(model.net, model.class_permutation);
        model.permutation_applied = true;
    }
}

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.batch_size < 1) throw InvalidConfig("batch size must be >= 1");
    if (!(cfg.mu > 0.0)) throw InvalidConfig("mu must be > 0");
    if (cfg.convergence_window < 1) throw InvalidConfig("convergence window must be >= 1");
    if (cfg.convergence_tol < 0.0) throw InvalidConfig("convergence tolerance must be >= 0");
}

}  // namespace

TrainedModel train(const LabelMatrix& labels, const TrainConfig& config) {
    validate_train_config(config);
    const std::size_t N = labels.num_items();
    const std::size_t K = labels.num_workers();
    const auto C = static_cast<std::size_t>(labels.num_classes());
    if (config.model == ModelKind::NnWa && C != 2) {
        throw BinaryOnly("NN-WA aggregates binary tasks only; dataset has " +
                         std::to_string(C) + " classes");
    }

    TrainedModel model;
    model.model = config.model;
    model.num_workers = K;
    model.num_classes = static_cast<int>(C);
    model.mu = config.mu;
    model.optimizer = config.optimizer;
    model.prior = estimate_prior(labels);
    model.class_permutation = identity_permutation(C);

    const std::size_t hidden = config.hidden_dim > 0 ? config.hidden_dim : 4 * C;
    model.net = init_params(K * C, hidden, C, Rng::derive(config.seed, 1));

    if (config.model == ModelKind::NnWa) {
        model.guiding = WaParams::zeros(C, K);
    } else {
        McParams mc = McParams::zeros(C, K);
        if (config.omega_noise_delta > 0.0 || config.omega_diag_delta > 0.0) {
            Rng noise(Rng::derive(config.seed, 2));
            if (config.omega_noise_delta > 0.0) {
                for (double& w : mc.omega) w += config.omega_noise_delta * noise.normal();
            }
            if (config.omega_diag_delta > 0.0) {
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t k = 0; k < K; ++k) mc.row(c, k)[c] += config.omega_diag_delta;
                }
            }
        }
        model.guiding = std::move(mc);
    }

    OptimizerState net_state = OptimizerState::make(model.net.param_count(), config.optimizer);
    const std::size_t beta_size = config.model == ModelKind::NnWa
                                      ? std::get<WaParams>(model.guiding).lambda.size()
                                      : std::get<McParams>(model.guiding).omega.size();
    OptimizerState beta_state = OptimizerState::make(beta_size, config.optimizer);

    Mat encodings(N, K * C);
    for (std::size_t i = 0; i < N; ++i) encode_instance_into(labels, i, encodings.row(i));

    const std::size_t batch_size = std::min(config.batch_size, N);
    Rng sampler_rng(Rng::derive(config.seed, 3));
    MinibatchSampler sampler(N, batch_size, sampler_rng, config.iid_sampling);
    const std::size_t batches = sampler.batches_per_epoch();

    std::vector<ForwardTrace> traces(batch_size);
    NetworkGrads net_grads = NetworkGrads::zeros_like(model.net);

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t epoch_items = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::vector<std::size_t>& batch = sampler.next();
            const std::size_t m = batch.size();

            Mat q(m, C);
            for (std::size_t r = 0; r < m; ++r) {
                forward_into(model.net, encodings.row(batch[r]), traces[r]);
                std::copy(traces[r].output.begin(), traces[r].output.end(), q.row(r).begin());
            }

            Mat loglik;
            PsiTable psi;
            if (config.model == ModelKind::NnWa) {
                loglik = wa_loglik_matrix(model.wa(), labels, batch);
            } else {
                psi = mc_psi(model.mc());
                loglik = mc_loglik_matrix(psi, labels, batch);
            }

            BatchLoss loss = batch_loss(q, loglik, model.prior, config.mu);

            net_grads.zero();
            for (std::size_t r = 0; r < m; ++r) {
                backward_accumulate(traces[r], model.net, loss.dloss_dq.row(r), net_grads);
            }
            std::vector<double> beta_grad =
                config.model == ModelKind::NnWa
                    ? wa_loss_grad(model.wa(), labels, batch, q)
                    : mc_loss_grad(psi, labels, batch, q);

            const bool net_ok = all_finite(net_grads.w1.data) && all_finite(net_grads.b1) &&
                                all_finite(net_grads.w2.data) && all_finite(net_grads.b2);
            if (!net_ok || !all_finite(beta_grad)) {
                throw NonFiniteGradient("non-finite gradient at epoch " + std::to_string(epoch) +
                                        ", batch " + std::to_string(b));
            }

            // One simultaneous step over alpha and beta.
            rmsprop_update(model.net, net_grads, net_state);
            if (config.model == ModelKind::NnWa) {
                rmsprop_step(std::get<WaParams>(model.guiding).lambda, beta_grad,
                             beta_state.acc, beta_state.hp);
            } else {
                rmsprop_step(std::get<McParams>(model.guiding).omega, beta_grad,
                             beta_state.acc, beta_state.hp);
            }

            epoch_loss += loss.terms.value * static_cast<double>(m);
            epoch_items += m;
        }
        model.loss_history.push_back(epoch_loss / static_cast<double>(epoch_items));
        if (converged(model.loss_history, config.convergence_window, config.convergence_tol)) break;
    }

    run_label_switch_guard(model, config.label_switch);

    if (!model.loss_history.empty()) {
        const std::size_t window = std::min(config.convergence_window, model.loss_history.size());
        const double final_mean =
            mean_range(model.loss_history, model.loss_history.size() - window,
                       model.loss_history.size());
        if (final_mean > model.loss_history.front()) model.progress_warning = true;
    }
    return model;
}

Predictions predict(const TrainedModel& model, const LabelMatrix& labels, DecodeRule rule) {
    const std::size_t K = labels.num_workers();
    const auto C = static_cast<std::size_t>(labels.num_classes());
    if (K != model.num_workers || static_cast<int>(C) != model.num_classes) {
        throw ShapeError("model was trained for " + std::to_string(model.num_workers) +
                         " workers / " + std::to_string(model.num_classes) +
                         " classes; dataset has " + std::to_string(K) + " / " + std::to_string(C));
    }
    const std::size_t N = labels.num_items();
    std::vector<std::size_t> items(N);
    std::iota(items.begin(), items.end(), std::size_t{0});

    Predictions pred;
    pred.loglik = model.model == ModelKind::NnWa
                      ? wa_loglik_matrix(model.wa(), labels, items)
                      : mc_loglik_matrix(mc_psi(model.mc()), labels, items);

    pred.posterior = Mat(N, C);
    std::vector<double> x(K * C);
    ForwardTrace trace;
    for (std::size_t i = 0; i < N; ++i) {
        encode_instance_into(labels, i, x);
        forward_into(model.net, x, trace);
        std::copy(trace.output.begin(), trace.output.end(), pred.posterior.row(i).begin());
    }

    std::vector<double> log_prior(C, -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < C; ++c) {
        if (model.prior.p[c] > 0.0) log_prior[c] = std::log(model.prior.p[c]);
    }

    pred.label.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < C; ++c) {
            double score = 0.0;
            switch (rule) {
                case DecodeRule::GuidingMle: score = pred.loglik(i, c); break;
                case DecodeRule::GuidingMap: score = pred.loglik(i, c) + log_prior[c]; break;
                case DecodeRule::Posterior: score = pred.posterior(i, c); break;
            }
            if (score > best_score) {  // strict: ties go to the smallest class
                best_score = score;
                best = c;
            }
        }
        pred.label[i] = static_cast<int>(best) + 1;
    }
    return pred;
}

double decoded_likelihood(const TrainedModel& model, const LabelMatrix& labels) {
    const Predictions pred = predict(model, labels, DecodeRule::GuidingMle);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.label.size(); ++i) {
        total += pred.loglik(i, static_cast<std::size_t>(pred.label[i] - 1));
    }
    return total;
}

MuSelection select_mu(const LabelMatrix& labels, const TrainConfig& config) {
    std::vector<double> grid = config.mu_grid.empty() ? default_mu_grid() : config.mu_grid;
    for (double mu : grid) {
        if (!(mu > 0.0)) throw InvalidConfig("mu grid values must be > 0");
    }
    std::sort(grid.begin(), grid.end());

    MuSelection selection;
    bool have_best = false;
    double best_score = -std::numeric_limits<double>::infinity();
    std::string last_error;

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        TrainConfig sub = config;
        sub.mu = grid[gi];
        sub.seed = config.seed + gi;
        try {
            TrainedModel model = train(labels, sub);
            const double score = decoded_likelihood(model, labels);
            selection.scores.emplace_back(grid[gi], score);
            if (score > best_score) {  // strict: ties keep the smaller mu
                best_score = score;
                selection.mu = grid[gi];
                selection.model = std::move(model);
                have_best = true;
            }
        } catch (const Error& e) {
            selection.scores.emplace_back(grid[gi], std::numeric_limits<double>::quiet_NaN());
            last_error = e.what();
        }
    }
    if (!have_best) {
        throw Error("every mu grid point failed; last error: " + last_error);
    }
    return selection;
}

// ---------------------------------------------------------------------------
// checkpoint and prediction files

namespace {

constexpr char kMagic[8] = {'C', 'A', 'G', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ofstream& out, const void* data, std::size_t size) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void put_u32(std::ofstream& out, std::uint32_t v) { put_bytes(out, &v, sizeof v); }
void put_u64(std::ofstream& out, std::uint64_t v) { put_bytes(out, &v, sizeof v); }
void put_f64(std::ofstream& out, double v) { put_bytes(out, &v, sizeof v); }

void put_f64_span(std::ofstream& out, std::span<const double> v) {
    put_bytes(out, v.data(), v.size() * sizeof(double));
}

void get_bytes(std::ifstream& in, void* data, std::size_t size) {
    if (!in.read(static_cast<char*>(data), static_cast<std::streamsize>(size))) {
        throw ParseError("truncated checkpoint file");
    }
}

std::uint32_t get_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    get_bytes(in, &v, sizeof v);
    return v;
}

std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    get_bytes(in, &v, sizeof v);
    return v;
}

double get_f64(std::ifstream& in) {
    double v = 0.0;
    get_bytes(in, &v, sizeof v);
    return v;
}

void get_f64_span(std::ifstream& in, std::span<double> v) {
    get_bytes(in, v.data(), v.size() * sizeof(double));
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);

    put_bytes(out, kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, model.model == ModelKind::NnWa ? 0u : 1u);
    std::uint32_t flags = 0;
    if (model.label_switch_detected) flags |= 1u;
    if (model.permutation_applied) flags |= 2u;
    if (model.progress_warning) flags |= 4u;
    put_u32(out, flags);
    put_u32(out, static_cast<std::uint32_t>(model.num_classes));
    put_u64(out, model.num_workers);
    put_u64(out, model.net.input_dim());
    put_u64(out, model.net.hidden_dim());
    put_f64(out, model.mu);
    put_f64(out, model.optimizer.learning_rate);
    put_f64(out, model.optimizer.decay);
    put_f64(out, model.optimizer.epsilon);

    for (std::size_t p : model.class_permutation) put_u32(out, static_cast<std::uint32_t>(p));
    put_f64_span(out, model.prior.p);
    put_f64_span(out, model.net.w1.data);
    put_f64_span(out, model.net.b1);
    put_f64_span(out, model.net.w2.data);
    put_f64_span(out, model.net.b2);
    if (model.model == ModelKind::NnWa) {
        put_f64_span(out, model.wa().lambda);
    } else {
        put_f64_span(out, model.mc().omega);
    }
    put_u64(out, model.loss_history.size());
    put_f64_span(out, model.loss_history);
    if (!out) throw Error("failed writing checkpoint: " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);

    char magic[8];
    get_bytes(in, magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ParseError("not a checkpoint file: " + path);
    }
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }

    TrainedModel model;
    model.model = get_u32(in) == 0 ? ModelKind::NnWa : ModelKind::NnMc;
    const std::uint32_t flags = get_u32(in);
    model.label_switch_detected = (flags & 1u) != 0;
    model.permutation_applied = (flags & 2u) != 0;
    model.progress_warning = (flags & 4u) != 0;
    const auto C = static_cast<std::size_t>(get_u32(in));
    model.num_classes = static_cast<int>(C);
    model.num_workers = get_u64(in);
    const std::size_t input_dim = get_u64(in);
    const std::size_t hidden_dim = get_u64(in);
    model.mu = get_f64(in);
    model.optimizer.learning_rate = get_f64(in);
    model.optimizer.decay = get_f64(in);
    model.optimizer.epsilon = get_f64(in);

    model.class_permutation.resize(C);
    for (std::size_t c = 0; c < C; ++c) model.class_permutation[c] = get_u32(in);

    model.prior.p.resize(C);
    get_f64_span(in, model.prior.p);
    model.net.w1 = Mat(hidden_dim, input_dim);
    get_f64_span(in, model.net.w1.data);
    model.net.b1.resize(hidden_dim);
    get_f64_span(in, model.net.b1);
    model.net.w2 = Mat(C, hidden_dim);
    get_f64_span(in, model.net.w2.data);
    model.net.b2.resize(C);
    get_f64_span(in, model.net.b2);

    if (model.model == ModelKind::NnWa) {
        WaParams wa = WaParams::zeros(C, model.num_workers);
        get_f64_span(in, wa.lambda);
        model.guiding = std::move(wa);
    } else {
        McParams mc = McParams::zeros(C, model.num_workers);
        get_f64_span(in, mc.omega);
        model.guiding = std::move(mc);
    }
    model.loss_history.resize(get_u64(in));
    get_f64_span(in, model.loss_history);
    return model;
}

void save_predictions(const Predictions& pred, const LabelMatrix& labels, const std::string& path) {
    if (pred.label.size() != labels.num_items()) {
        throw ShapeError("predictions do not cover the label matrix");
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write predictions: " + path);
    for (std::size_t i = 0; i < pred.label.size(); ++i) {
        out << labels.item_names()[i] << '\t' << pred.label[i] << '\n';
    }
    if (!out) throw Error("failed writing predictions: " + path);
}

Predictions load_predictions(const std::string& path, const LabelMatrix& labels) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open predictions: " + path);
    std::unordered_map<std::string, std::size_t> item_ids;
    for (std::size_t i = 0; i < labels.item_names().size(); ++i) {
        item_ids.emplace(labels.item_names()[i], i);
    }
    Predictions pred;
    pred.label.assign(labels.num_items(), 0);
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
        const std::string item = line.substr(0, tab);
        const int value = std::stoi(line.substr(tab + 1));
        if (value < 1 || value > labels.num_classes()) {
            throw InvalidLabel(path + ":" + std::to_string(line_no) + ": label out of range");
        }
        const auto it = item_ids.find(item);
        if (it == item_ids.end()) continue;
        pred.label[it->second] = value;
    }
    return pred;
}

void save_posterior(const Predictions& pred, const LabelMatrix& labels, const std::string& path) {
    if (pred.posterior.rows != labels.num_items()) {
        throw ShapeError("posterior does not cover the label matrix");
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write posterior: " + path);
    char buf[64];
    for (std::size_t i = 0; i < pred.posterior.rows; ++i) {
        out << labels.item_names()[i];
        for (std::size_t c = 0; c < pred.posterior.cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", pred.posterior(i, c));
            out << '\t' << buf;
        }
        out << '\n';
    }
    if (!out) throw Error("failed writing posterior: " + path);
}

}  // namespace crowdagg
