#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crowdagg/errors.hpp"
#include "crowdagg/numeric.hpp"

namespace crowdagg {

// Parameters of the 2-layer aggregation classifier:
// q(x) = softmax(w2 * tanh(w1 * x + b1) + b2).
struct NetworkParams {
    Mat w1;                  // hidden x input
    std::vector<double> b1;  // hidden
    Mat w2;                  // classes x hidden
    std::vector<double> b2;  // classes

    std::size_t input_dim() const { return w1.cols; }
    std::size_t hidden_dim() const { return w1.rows; }
    std::size_t num_classes() const { return w2.rows; }
    std::size_t param_count() const {
        return w1.data.size() + b1.size() + w2.data.size() + b2.size();
    }
};

struct NetworkGrads {
    Mat w1;
    std::vector<double> b1;
    Mat w2;
    std::vector<double> b2;

    static NetworkGrads zeros_like(const NetworkParams& p);
    void zero();
};

// Everything the backward pass needs, kept from one forward evaluation.
struct ForwardTrace {
    std::vector<double> input;
    std::vector<double> pre_hidden;  // w1 * x + b1
    std::vector<double> hidden;      // tanh(pre_hidden)
    std::vector<double> logits;      // w2 * hidden + b2
    std::vector<double> output;      // softmax(logits)
};

// Uniform(-r, r) weights with r = sqrt(6 / (fan_in + fan_out)); zero biases.
NetworkParams init_params(std::size_t input_dim, std::size_t hidden_dim,
                          std::size_t num_classes, std::uint64_t seed);

ForwardTrace forward(const NetworkParams& params, std::span<const double> x);
void forward_into(const NetworkParams& params, std::span<const double> x, ForwardTrace& trace);

struct BackwardResult {
    NetworkGrads grads;
    std::vector<double> dinput;
};

// Exact gradients of a scalar loss given dL/dq at the softmax output.
// dinput is returned for completeness; training never uses it.
BackwardResult backward(const ForwardTrace& trace, const NetworkParams& params,
                        std::span<const double> dloss_dq);

// Hot path used by the trainer: adds this instance's contribution into acc.
void backward_accumulate(const ForwardTrace& trace, const NetworkParams& params,
                         std::span<const double> dloss_dq, NetworkGrads& acc);

struct RmsProp {
    double learning_rate = 0.01;
    double decay = 0.9;
    double epsilon = 1e-8;
};

// Squared-gradient accumulators for one flat parameter block.
struct OptimizerState {
    RmsProp hp;
    std::vector<double> acc;

    static OptimizerState make(std::size_t size, const RmsProp& hp);
};

// acc <- decay*acc + (1-decay)*g^2;  theta <- theta - lr*g/(sqrt(acc)+eps).
// Throws NonFiniteGradient if any gradient entry is not finite.
void rmsprop_step(std::span<double> params, std::span<const double> grads,
                  std::span<double> acc, const RmsProp& hp);

// Applies rmsprop_step across the four network tensors against state.acc.
void rmsprop_update(NetworkParams& params, const NetworkGrads& grads, OptimizerState& state);

}  // namespace crowdagg
