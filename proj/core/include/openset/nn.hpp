#pragma once

#include <string>

#include "openset/common.hpp"

namespace openset {

enum class Activation { Identity, Tanh, Relu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
    Mat weight;  // out x in
    Vec bias;    // out
    Activation act = Activation::Identity;
};

// Fully-connected network with hand-written forward/backward passes.
struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.front().weight.cols; }
    std::size_t out_dim() const { return layers.back().weight.rows; }

    std::size_t param_count() const;
    Vec flatten_params() const;
    void load_params(const Vec& flat);

    std::string to_json() const;
    static Mlp from_json(const std::string& text);
};

// layer_dims = {in, h1, ..., out}; hidden layers use `hidden_act`, the last
// layer is linear. Xavier-uniform init.
Mlp make_mlp(const std::vector<std::size_t>& layer_dims, Activation hidden_act, Rng& rng);

// Per-sample activations kept for the backward pass.
struct ForwardTrace {
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post-activation per layer (post.back() is the output)
};

// Throws NumericError naming the layer if an activation goes non-finite.
Vec mlp_forward(const Mlp& net, const Vec& input, ForwardTrace* trace = nullptr);

// Accumulates parameter gradients into `grads` (same shapes as net.layers)
// and returns the gradient w.r.t. the input.
Vec mlp_backward(const Mlp& net, const Vec& input, const ForwardTrace& trace, const Vec& d_output,
                 std::vector<DenseLayer>& grads);

std::vector<DenseLayer> zero_grads(const Mlp& net);

struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam_state(const Mlp& net);
void adam_update(Mlp& net, const std::vector<DenseLayer>& grads, AdamState& state, double lr);

// Softmax utilities shared by the classifier losses.
Vec softmax(const Vec& logits);
Vec log_softmax(const Vec& logits);

}  // namespace openset
