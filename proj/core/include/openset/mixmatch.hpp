#pragma once

#include "openset/nn.hpp"
#include "openset/sampler.hpp"
#include "openset/store.hpp"

namespace openset {

enum class SamplerMode { OodWeighted, Uniform };

const char* sampler_mode_name(SamplerMode m);
SamplerMode sampler_mode_from_name(const std::string& name);

struct MixMatchConfig {
    std::size_t k_augment = 2;
    double temperature = 0.5;
    double mixup_alpha = 0.75;
    double lambda_u = 75.0;
    std::size_t ramp_steps = 100;
    std::size_t batch_labeled = 16;
    std::size_t batch_unlabeled = 16;
    double learning_rate = 0.0003;
    std::size_t epochs = 10;
    double augment_sigma = 0.1;
    std::uint64_t seed = 0;
    SamplerMode sampler_mode = SamplerMode::OodWeighted;
    std::vector<std::size_t> hidden_dims = {64};

    void validate() const;
};

// p^{1/T} renormalized; zero entries stay zero.
Vec sharpen(const Vec& p, double temperature);

// Pseudo-label: sharpened mean prediction over k jittered forward passes.
Vec guess_label(const Mlp& classifier, const Vec& x, std::size_t k, double temperature,
                double augment_sigma, Rng& rng);

struct MixupResult {
    Vec x;
    Vec target;
    double lambda_prime;
};

// lambda' = max(lambda, 1 - lambda) keeps the first argument dominant.
MixupResult mixup_apply(const Vec& x1, const Vec& t1, const Vec& x2, const Vec& t2, double lambda);

// Draws lambda ~ Beta(alpha, alpha) and applies mixup_apply.
MixupResult mixup(const Vec& x1, const Vec& t1, const Vec& x2, const Vec& t2, double alpha, Rng& rng);

struct MixBatch {
    std::vector<Vec> inputs;
    std::vector<Vec> targets;          // probability simplex rows
    std::vector<bool> labeled_origin;  // true for labeled-derived rows
    Vec mix_coefficients;
};

// Cross-entropy of labeled rows (mean); predictions floored at 1e-12 in the log.
double labeled_loss(const std::vector<Vec>& targets, const std::vector<Vec>& predictions);

// Mean over rows of |q - pred|^2 / C.
double unlabeled_loss(const std::vector<Vec>& targets, const std::vector<Vec>& predictions);

// Loss and parameter gradient of labeled_loss + lambda_u * unlabeled_loss over
// a frozen MixBatch; targets are constants.
struct MixLoss {
    double labeled = 0.0;
    double unlabeled = 0.0;
    double total = 0.0;
};
MixLoss mixmatch_loss_gradient(const Mlp& classifier, const MixBatch& batch, double lambda_u,
                               std::vector<DenseLayer>& grads);

// Full MixMatch transform for one step: augment, guess, concatenate-shuffle,
// MixUp. Exposed for tests.
MixBatch build_mix_batch(const Mlp& classifier, const std::vector<Vec>& labeled_x,
                         const std::vector<int>& labeled_y, const std::vector<Vec>& unlabeled_x,
                         std::size_t n_classes, const MixMatchConfig& cfg, Rng& rng);

struct TrainTraceRow {
    std::size_t step;
    double loss_l;
    double loss_u;
    double lambda_u;
    double acc_val;
    double mean_ood_drawn;
};

struct SemiSlResult {
    Mlp classifier;
    std::vector<TrainTraceRow> trace;
};

// `plan`/`scores` drive the ood_weighted unlabeled draw; pass nullptr for
// uniform mode. Deterministic given cfg.seed.
SemiSlResult train_semisl(const Store& store, std::size_t n_classes, const MixMatchConfig& cfg,
                          const SamplerPlan* plan, const OodScoreTable* scores);

double evaluate_accuracy(const Mlp& classifier, const Store& store, Split split);

void save_trace_csv(const std::vector<TrainTraceRow>& trace, const std::string& path);

}  // namespace openset
