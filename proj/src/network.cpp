#include "crowdagg/network.hpp"

#include <cmath>

#include "crowdagg/rng.hpp"

namespace crowdagg {

NetworkGrads NetworkGrads::zeros_like(const NetworkParams& p) {
    NetworkGrads g;
    g.w1 = Mat(p.w1.rows, p.w1.cols);
    g.b1.assign(p.b1.size(), 0.0);
    g.w2 = Mat(p.w2.rows, p.w2.cols);
    g.b2.assign(p.b2.size(), 0.0);
    return g;
}

void NetworkGrads::zero() {
    w1.fill(0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    w2.fill(0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
}

NetworkParams init_params(std::size_t input_dim, std::size_t hidden_dim,
                          std::size_t num_classes, std::uint64_t seed) {
    if (input_dim < 1 || hidden_dim < 1 || num_classes < 1) {
        throw InvalidConfig("network dimensions must be >= 1");
    }
    Rng rng(seed);
    NetworkParams p;
    p.w1 = Mat(hidden_dim, input_dim);
    p.b1.assign(hidden_dim, 0.0);
    p.w2 = Mat(num_classes, hidden_dim);
    p.b2.assign(num_classes, 0.0);

    const double r1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden_dim));
    for (double& w : p.w1.data) w = rng.uniform(-r1, r1);
    const double r2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + num_classes));
    for (double& w : p.w2.data) w = rng.uniform(-r2, r2);
    return p;
}

void forward_into(const NetworkParams& params, std::span<const double> x, ForwardTrace& trace) {
    if (x.size() != params.input_dim()) {
        throw ShapeError("input length " + std::to_string(x.size()) + " != network input dim " +
                         std::to_string(params.input_dim()));
    }
    const std::size_t hidden = params.hidden_dim();
    const std::size_t classes = params.num_classes();

    trace.input.assign(x.begin(), x.end());
    trace.pre_hidden.assign(hidden, 0.0);
    trace.hidden.assign(hidden, 0.0);
    trace.logits.assign(classes, 0.0);

    for (std::size_t j = 0; j < hidden; ++j) {
        double acc = params.b1[j];
        const double* row = params.w1.data.data() + j * params.w1.cols;
        for (std::size_t i = 0; i < x.size(); ++i) acc += row[i] * x[i];
        trace.pre_hidden[j] = acc;
        trace.hidden[j] = std::tanh(acc);
    }
    for (std::size_t c = 0; c < classes; ++c) {
        double acc = params.b2[c];
        const double* row = params.w2.data.data() + c * params.w2.cols;
        for (std::size_t j = 0; j < hidden; ++j) acc += row[j] * trace.hidden[j];
        trace.logits[c] = acc;
    }
    trace.output = trace.logits;
    softmax_inplace(trace.output);
}

ForwardTrace forward(const NetworkParams& params, std::span<const double> x) {
    ForwardTrace trace;
    forward_into(params, x, trace);
    return trace;
}

namespace {

// dL/dlogits through the softmax Jacobian:
// dL/dh_c = q_c * (dL/dq_c - sum_j dL/dq_j * q_j).
void softmax_backward(std::span<const double> q, std::span<const double> dloss_dq,
                      std::vector<double>& dlogits) {
    double dot = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) dot += dloss_dq[c] * q[c];
    dlogits.resize(q.size());
    for (std::size_t c = 0; c < q.size(); ++c) dlogits[c] = q[c] * (dloss_dq[c] - dot);
}

}  // namespace

void backward_accumulate(const ForwardTrace& trace, const NetworkParams& params,
                         std::span<const double> dloss_dq, NetworkGrads& acc) {
    const std::size_t hidden = params.hidden_dim();
    const std::size_t classes = params.num_classes();
    if (dloss_dq.size() != classes) throw ShapeError("dloss_dq length != num classes");

    std::vector<double> dlogits;
    softmax_backward(trace.output, dloss_dq, dlogits);

    std::vector<double> dhidden(hidden, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        const double g = dlogits[c];
        double* w2row = acc.w2.data.data() + c * hidden;
        const double* w2p = params.w2.data.data() + c * hidden;
        for (std::size_t j = 0; j < hidden; ++j) {
            w2row[j] += g * trace.hidden[j];
            dhidden[j] += w2p[j] * g;
        }
        acc.b2[c] += g;
    }

    const std::size_t input = params.input_dim();
    for (std::size_t j = 0; j < hidden; ++j) {
        const double a = trace.hidden[j];
        const double dpre = dhidden[j] * (1.0 - a * a);
        double* w1row = acc.w1.data.data() + j * input;
        for (std::size_t i = 0; i < input; ++i) w1row[i] += dpre * trace.input[i];
        acc.b1[j] += dpre;
    }
}

BackwardResult backward(const ForwardTrace& trace, const NetworkParams& params,
                        std::span<const double> dloss_dq) {
    BackwardResult result;
    result.grads = NetworkGrads::zeros_like(params);
    backward_accumulate(trace, params, dloss_dq, result.grads);

    // dL/dx = w1^T * dL/dpre_hidden; recompute dpre from the accumulated b1
    // gradient (b1's gradient IS dL/dpre_hidden for a single instance).
    const std::size_t input = params.input_dim();
    result.dinput.assign(input, 0.0);
    for (std::size_t j = 0; j < params.hidden_dim(); ++j) {
        const double dpre = result.grads.b1[j];
        const double* row = params.w1.data.data() + j * input;
        for (std::size_t i = 0; i < input; ++i) result.dinput[i] += row[i] * dpre;
    }
    return result;
}

OptimizerState OptimizerState::make(std::size_t size, const RmsProp& hp) {
    if (!(hp.learning_rate > 0.0)) throw InvalidConfig("learning rate must be > 0");
    if (!(hp.decay > 0.0 && hp.decay < 1.0)) throw InvalidConfig("decay must lie in (0,1)");
    if (!(hp.epsilon > 0.0)) throw InvalidConfig("epsilon must be > 0");
    OptimizerState s;
    s.hp = hp;
    s.acc.assign(size, 0.0);
    return s;
}

void rmsprop_step(std::span<double> params, std::span<const double> grads,
                  std::span<double> acc, const RmsProp& hp) {
    if (params.size() != grads.size() || params.size() != acc.size()) {
        throw ShapeError("rmsprop spans disagree in length");
    }
    if (!all_finite(grads)) {
        throw NonFiniteGradient("gradient contains a non-finite value");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        acc[i] = hp.decay * acc[i] + (1.0 - hp.decay) * g * g;
        params[i] -= hp.learning_rate * g / (std::sqrt(acc[i]) + hp.epsilon);
    }
}

void rmsprop_update(NetworkParams& params, const NetworkGrads& grads, OptimizerState& state) {
    if (state.acc.size() != params.param_count()) {
        throw ShapeError("optimizer state size != network parameter count");
    }
    std::size_t offset = 0;
    const auto step = [&](std::span<double> theta, std::span<const double> g) {
        rmsprop_step(theta, g, {state.acc.data() + offset, theta.size()}, state.hp);
        offset += theta.size();
    };
    step(params.w1.data, grads.w1.data);
    step(params.b1, grads.b1);
    step(params.w2.data, grads.w2.data);
    step(params.b2, grads.b2);
}

}  // namespace crowdagg
