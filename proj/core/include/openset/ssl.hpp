#pragma once

#include <set>

#include "openset/nn.hpp"
#include "openset/store.hpp"

namespace openset {

// cos(z_i, z_j); throws NumericError on a zero-norm input, which signals a
// collapsed encoder rather than being clamped away.
double cosine_sim(const Vec& a, const Vec& b);

// 2N embeddings: N originals collated with their augmented twins.
struct ContrastiveBatch {
    std::vector<Vec> embeddings;
    std::vector<std::size_t> twin;  // perfect matching, twin[twin[i]] == i

    std::size_t size() const { return embeddings.size(); }
    void validate() const;
};

// The twin is always included; any other j with cos >= 1 - epsilon joins it.
// Never contains the anchor itself.
std::set<std::size_t> positive_set(std::size_t anchor, const ContrastiveBatch& batch, double epsilon);

std::vector<std::set<std::size_t>> all_positive_sets(const ContrastiveBatch& batch, double epsilon);

// Mean over anchors of the mean over that anchor's positives of
// -log( exp(cos(z_i,z_j)/tau) / sum_{k != i} exp(cos(z_i,z_k)/tau) ),
// evaluated in the log domain.
double ntxent_loss(const ContrastiveBatch& batch, const std::vector<std::set<std::size_t>>& positives,
                   double tau);

// Loss plus dL/dz for every embedding; positive sets are constants.
double ntxent_loss_grad(const ContrastiveBatch& batch,
                        const std::vector<std::set<std::size_t>>& positives, double tau,
                        std::vector<Vec>& d_embeddings);

struct SslConfig {
    double epsilon = 0.05;
    double tau = 0.5;
    double learning_rate = 0.0003;
    std::size_t batch_n = 32;
    std::size_t epochs = 20;
    double augment_sigma = 0.1;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_dims = {64, 64};
    std::size_t latent_dim = 16;
    bool normalize_embeddings = true;

    void validate() const;
};

struct RawContrastiveBatch {
    std::vector<Vec> inputs;  // 2N raw vectors
    std::vector<std::size_t> twin;
};

// Analytic gradient of ntxent_loss(encoder(inputs)) w.r.t. encoder params.
// Positive sets are recomputed from the current embeddings and then frozen.
double encoder_loss_gradient(const Mlp& encoder, const RawContrastiveBatch& raw, const SslConfig& cfg,
                             std::vector<DenseLayer>& grads);

struct SslResult {
    Mlp encoder;
    Store embeddings;  // latent embedding per input record, splits/labels kept
    std::vector<double> loss_trace;
};

// Minibatch Adam over the contrastive objective; augmentation is additive
// Gaussian jitter on raw vectors. Deterministic given cfg.seed.
SslResult train_encoder(const Store& store, const SslConfig& cfg);

// Latent table for an already-trained encoder.
Store embed_store(const Mlp& encoder, const Store& store, bool l2_normalize);

}  // namespace openset
