#include "openset/nn.hpp"

#include <algorithm>

#include <json.hpp>

namespace openset {

using nlohmann::json;

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    throw ValidationError("unknown activation: " + name);
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
}

Vec Mlp::flatten_params() const {
    Vec flat;
    flat.reserve(param_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.weight.data.begin(), l.weight.data.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void Mlp::load_params(const Vec& flat) {
    std::size_t off = 0;
    for (auto& l : layers) {
        std::copy_n(flat.begin() + off, l.weight.data.size(), l.weight.data.begin());
        off += l.weight.data.size();
        std::copy_n(flat.begin() + off, l.bias.size(), l.bias.begin());
        off += l.bias.size();
    }
}

std::string Mlp::to_json() const {
    json j;
    j["layers"] = json::array();
    for (const auto& l : layers) {
        json jl;
        jl["out"] = l.weight.rows;
        jl["in"] = l.weight.cols;
        jl["activation"] = activation_name(l.act);
        jl["weight"] = l.weight.data;
        jl["bias"] = l.bias;
        j["layers"].push_back(std::move(jl));
    }
    return j.dump(2);
}

Mlp Mlp::from_json(const std::string& text) {
    json j = json::parse(text);
    Mlp net;
    for (const auto& jl : j.at("layers")) {
        DenseLayer l;
        l.weight = Mat(jl.at("out").get<std::size_t>(), jl.at("in").get<std::size_t>());
        l.weight.data = jl.at("weight").get<Vec>();
        l.bias = jl.at("bias").get<Vec>();
        l.act = activation_from_name(jl.at("activation").get<std::string>());
        if (l.weight.data.size() != l.weight.rows * l.weight.cols || l.bias.size() != l.weight.rows)
            throw ValidationError("inconsistent layer shape in serialized network");
        net.layers.push_back(std::move(l));
    }
    if (net.layers.empty()) throw ValidationError("serialized network has no layers");
    return net;
}

Mlp make_mlp(const std::vector<std::size_t>& layer_dims, Activation hidden_act, Rng& rng) {
    if (layer_dims.size() < 2) throw ValidationError("network needs at least one layer");
    Mlp net;
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
        DenseLayer l;
        std::size_t in = layer_dims[i], out = layer_dims[i + 1];
        l.weight = Mat(out, in);
        l.bias.assign(out, 0.0);
        double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& w : l.weight.data) w = u(rng);
        l.act = (i + 2 < layer_dims.size()) ? hidden_act : Activation::Identity;
        net.layers.push_back(std::move(l));
    }
    return net;
}

namespace {

double act_fwd(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0 ? x : 0.0;
    }
    return x;
}

double act_grad(Activation a, double pre, double post) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::Tanh: return 1.0 - post * post;
        case Activation::Relu: return pre > 0 ? 1.0 : 0.0;
    }
    (void)pre;
    return 1.0;
}

}  // namespace

Vec mlp_forward(const Mlp& net, const Vec& input, ForwardTrace* trace) {
    if (input.size() != net.in_dim())
        throw ValidationError("input dimension mismatch: got " + std::to_string(input.size()) +
                              ", network expects " + std::to_string(net.in_dim()));
    Vec cur = input;
    if (trace) {
        trace->pre.clear();
        trace->post.clear();
    }
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        Vec pre(l.weight.rows);
        for (std::size_t r = 0; r < l.weight.rows; ++r) {
            const double* wr = l.weight.row(r);
            double s = l.bias[r];
            for (std::size_t c = 0; c < l.weight.cols; ++c) s += wr[c] * cur[c];
            pre[r] = s;
        }
        Vec post(pre.size());
        for (std::size_t r = 0; r < pre.size(); ++r) post[r] = act_fwd(l.act, pre[r]);
        if (!all_finite(post))
            throw NumericError("non-finite activation at layer " + std::to_string(li));
        if (trace) {
            trace->pre.push_back(pre);
            trace->post.push_back(post);
        }
        cur = std::move(post);
    }
    return cur;
}

Vec mlp_backward(const Mlp& net, const Vec& input, const ForwardTrace& trace, const Vec& d_output,
                 std::vector<DenseLayer>& grads) {
    Vec delta = d_output;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& l = net.layers[li];
        const Vec& pre = trace.pre[li];
        const Vec& post = trace.post[li];
        const Vec& layer_in = (li == 0) ? input : trace.post[li - 1];

        for (std::size_t r = 0; r < delta.size(); ++r)
            delta[r] *= act_grad(l.act, pre[r], post[r]);

        auto& g = grads[li];
        for (std::size_t r = 0; r < l.weight.rows; ++r) {
            double* gr = g.weight.row(r);
            double d = delta[r];
            for (std::size_t c = 0; c < l.weight.cols; ++c) gr[c] += d * layer_in[c];
            g.bias[r] += d;
        }
        Vec next(l.weight.cols, 0.0);
        for (std::size_t r = 0; r < l.weight.rows; ++r) {
            const double* wr = l.weight.row(r);
            double d = delta[r];
            for (std::size_t c = 0; c < l.weight.cols; ++c) next[c] += wr[c] * d;
        }
        delta = std::move(next);
    }
    return delta;
}

std::vector<DenseLayer> zero_grads(const Mlp& net) {
    std::vector<DenseLayer> grads;
    grads.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        DenseLayer g;
        g.weight = Mat(l.weight.rows, l.weight.cols);
        g.bias.assign(l.bias.size(), 0.0);
        g.act = l.act;
        grads.push_back(std::move(g));
    }
    return grads;
}

AdamState make_adam_state(const Mlp& net) {
    AdamState s;
    s.m.assign(net.param_count(), 0.0);
    s.v.assign(net.param_count(), 0.0);
    return s;
}

void adam_update(Mlp& net, const std::vector<DenseLayer>& grads, AdamState& state, double lr) {
    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    std::size_t idx = 0;
    auto apply = [&](double& param, double g) {
        state.m[idx] = state.beta1 * state.m[idx] + (1.0 - state.beta1) * g;
        state.v[idx] = state.beta2 * state.v[idx] + (1.0 - state.beta2) * g * g;
        double mhat = state.m[idx] / bc1;
        double vhat = state.v[idx] / bc2;
        param -= lr * mhat / (std::sqrt(vhat) + state.eps);
        ++idx;
    };
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto& l = net.layers[li];
        const auto& g = grads[li];
        for (std::size_t i = 0; i < l.weight.data.size(); ++i) apply(l.weight.data[i], g.weight.data[i]);
        for (std::size_t i = 0; i < l.bias.size(); ++i) apply(l.bias[i], g.bias[i]);
    }
}

Vec softmax(const Vec& logits) {
    Vec out = log_softmax(logits);
    for (auto& x : out) x = std::exp(x);
    return out;
}

Vec log_softmax(const Vec& logits) {
    double lse = log_sum_exp(logits);
    Vec out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

}  // namespace openset
