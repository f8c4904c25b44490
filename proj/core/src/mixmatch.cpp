#include "openset/mixmatch.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace openset {

const char* sampler_mode_name(SamplerMode m) {
    return m == SamplerMode::OodWeighted ? "ood_weighted" : "uniform";
}

SamplerMode sampler_mode_from_name(const std::string& name) {
    if (name == "ood_weighted") return SamplerMode::OodWeighted;
    if (name == "uniform") return SamplerMode::Uniform;
    throw ValidationError("unknown sampler mode: " + name);
}

void MixMatchConfig::validate() const {
    if (k_augment == 0) throw ValidationError("k_augment must be >= 1");
    if (temperature <= 0) throw ValidationError("temperature must be > 0");
    if (mixup_alpha <= 0) throw ValidationError("mixup_alpha must be > 0");
    if (lambda_u < 0) throw ValidationError("lambda_u must be >= 0");
    if (learning_rate <= 0) throw ValidationError("learning_rate must be > 0");
    if (augment_sigma < 0) throw ValidationError("augment_sigma must be >= 0");
    if (batch_labeled == 0 || batch_unlabeled == 0) throw ValidationError("batch sizes must be >= 1");
}

Vec sharpen(const Vec& p, double temperature) {
    if (temperature <= 0) throw ValidationError("sharpen: temperature must be > 0");
    double pmax = 0.0;
    for (double v : p) pmax = std::max(pmax, v);
    if (pmax <= 0.0) throw ValidationError("sharpen: input has no positive mass");
    // Scale by the max before powering so small temperatures cannot underflow
    // every entry at once; the ratio is unchanged.
    Vec out(p.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        out[i] = p[i] > 0.0 ? std::pow(p[i] / pmax, 1.0 / temperature) : 0.0;
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

Vec guess_label(const Mlp& classifier, const Vec& x, std::size_t k, double temperature,
                double augment_sigma, Rng& rng) {
    if (k == 0) throw ValidationError("guess_label: k must be >= 1");
    std::normal_distribution<double> jitter(0.0, 1.0);
    Vec mean(classifier.out_dim(), 0.0);
    for (std::size_t a = 0; a < k; ++a) {
        Vec aug = x;
        for (auto& v : aug) v += augment_sigma * jitter(rng);
        Vec p = softmax(mlp_forward(classifier, aug));
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
    }
    for (auto& v : mean) v /= static_cast<double>(k);
    return sharpen(mean, temperature);
}

MixupResult mixup_apply(const Vec& x1, const Vec& t1, const Vec& x2, const Vec& t2, double lambda) {
    double lp = std::max(lambda, 1.0 - lambda);
    MixupResult r;
    r.lambda_prime = lp;
    r.x.resize(x1.size());
    for (std::size_t i = 0; i < x1.size(); ++i) r.x[i] = lp * x1[i] + (1.0 - lp) * x2[i];
    r.target.resize(t1.size());
    for (std::size_t i = 0; i < t1.size(); ++i) r.target[i] = lp * t1[i] + (1.0 - lp) * t2[i];
    return r;
}

MixupResult mixup(const Vec& x1, const Vec& t1, const Vec& x2, const Vec& t2, double alpha, Rng& rng) {
    // Beta(alpha, alpha) via two gammas.
    std::gamma_distribution<double> gamma(alpha, 1.0);
    double a = gamma(rng), b = gamma(rng);
    double lambda = (a + b > 0.0) ? a / (a + b) : 0.5;
    return mixup_apply(x1, t1, x2, t2, lambda);
}

double labeled_loss(const std::vector<Vec>& targets, const std::vector<Vec>& predictions) {
    if (targets.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double row = 0.0;
        for (std::size_t c = 0; c < targets[i].size(); ++c)
            row -= targets[i][c] * std::log(std::max(predictions[i][c], 1e-12));
        total += row;
    }
    return total / static_cast<double>(targets.size());
}

double unlabeled_loss(const std::vector<Vec>& targets, const std::vector<Vec>& predictions) {
    if (targets.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double row = 0.0;
        for (std::size_t c = 0; c < targets[i].size(); ++c) {
            double d = targets[i][c] - predictions[i][c];
            row += d * d;
        }
        total += row / static_cast<double>(targets[i].size());
    }
    return total / static_cast<double>(targets.size());
}

MixLoss mixmatch_loss_gradient(const Mlp& classifier, const MixBatch& batch, double lambda_u,
                               std::vector<DenseLayer>& grads) {
    std::size_t n_l = 0, n_u = 0;
    for (bool lab : batch.labeled_origin) (lab ? n_l : n_u)++;

    MixLoss loss;
    const std::size_t c_count = classifier.out_dim();
    for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
        ForwardTrace trace;
        Vec logits = mlp_forward(classifier, batch.inputs[i], &trace);
        Vec logp = log_softmax(logits);
        Vec p(c_count);
        for (std::size_t c = 0; c < c_count; ++c) p[c] = std::exp(logp[c]);
        const Vec& t = batch.targets[i];

        Vec d_logits(c_count, 0.0);
        if (batch.labeled_origin[i]) {
            double row = 0.0;
            for (std::size_t c = 0; c < c_count; ++c)
                row -= t[c] * std::max(logp[c], std::log(1e-12));
            loss.labeled += row / static_cast<double>(n_l);
            // d(-sum t log softmax)/d logits = p - t
            for (std::size_t c = 0; c < c_count; ++c)
                d_logits[c] = (p[c] - t[c]) / static_cast<double>(n_l);
        } else {
            double row = 0.0;
            Vec diff(c_count);
            for (std::size_t c = 0; c < c_count; ++c) {
                diff[c] = p[c] - t[c];
                row += diff[c] * diff[c];
            }
            loss.unlabeled += row / static_cast<double>(c_count) / static_cast<double>(n_u);
            // d|p - q|^2/d logits = 2 J_softmax^T (p - q), J^T v = p*(v - p.v)
            double pv = 0.0;
            for (std::size_t c = 0; c < c_count; ++c) pv += p[c] * diff[c];
            double scale = 2.0 * lambda_u / static_cast<double>(c_count) / static_cast<double>(n_u);
            for (std::size_t c = 0; c < c_count; ++c)
                d_logits[c] = scale * p[c] * (diff[c] - pv);
        }
        mlp_backward(classifier, batch.inputs[i], trace, d_logits, grads);
    }
    loss.total = loss.labeled + lambda_u * loss.unlabeled;
    return loss;
}

namespace {

Vec one_hot(int label, std::size_t n_classes) {
    Vec t(n_classes, 0.0);
    t[static_cast<std::size_t>(label)] = 1.0;
    return t;
}

}  // namespace

MixBatch build_mix_batch(const Mlp& classifier, const std::vector<Vec>& labeled_x,
                         const std::vector<int>& labeled_y, const std::vector<Vec>& unlabeled_x,
                         std::size_t n_classes, const MixMatchConfig& cfg, Rng& rng) {
    std::normal_distribution<double> jitter(0.0, 1.0);
    auto augment = [&](const Vec& x) {
        Vec out = x;
        for (auto& v : out) v += cfg.augment_sigma * jitter(rng);
        return out;
    };

    std::vector<Vec> xs, ts;
    std::vector<bool> labeled_origin;
    for (std::size_t i = 0; i < labeled_x.size(); ++i) {
        xs.push_back(augment(labeled_x[i]));
        ts.push_back(one_hot(labeled_y[i], n_classes));
        labeled_origin.push_back(true);
    }
    for (const auto& u : unlabeled_x) {
        Vec q = guess_label(classifier, u, cfg.k_augment, cfg.temperature, cfg.augment_sigma, rng);
        for (std::size_t a = 0; a < cfg.k_augment; ++a) {
            xs.push_back(augment(u));
            ts.push_back(q);
            labeled_origin.push_back(false);
        }
    }

    std::vector<std::size_t> perm(xs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    MixBatch batch;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        auto m = mixup(xs[i], ts[i], xs[perm[i]], ts[perm[i]], cfg.mixup_alpha, rng);
        batch.inputs.push_back(std::move(m.x));
        batch.targets.push_back(std::move(m.target));
        batch.labeled_origin.push_back(labeled_origin[i]);
        batch.mix_coefficients.push_back(m.lambda_prime);
    }
    return batch;
}

double evaluate_accuracy(const Mlp& classifier, const Store& store, Split split) {
    std::size_t correct = 0, total = 0;
    for (const auto& r : store.records) {
        if (r.split != split || !r.label) continue;
        Vec logits = mlp_forward(classifier, r.vector);
        auto pred = std::max_element(logits.begin(), logits.end()) - logits.begin();
        if (pred == *r.label) ++correct;
        ++total;
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

SemiSlResult train_semisl(const Store& store, std::size_t n_classes, const MixMatchConfig& cfg,
                          const SamplerPlan* plan, const OodScoreTable* scores) {
    cfg.validate();
    if (cfg.sampler_mode == SamplerMode::OodWeighted && (!plan || !scores))
        throw ValidationError("ood_weighted mode needs a sampler plan and score table");

    std::vector<std::size_t> labeled_idx = store.indices_of(Split::Labeled);
    std::vector<std::size_t> unlabeled_idx = store.indices_of(Split::Unlabeled);
    if (labeled_idx.empty()) throw ValidationError("train_semisl: empty labeled split");

    Rng rng(cfg.seed);
    std::vector<std::size_t> dims;
    dims.push_back(store.dim);
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(n_classes);
    Mlp classifier = make_mlp(dims, Activation::Relu, rng);
    AdamState adam = make_adam_state(classifier);

    // Map score-table indices back into the store for ood_weighted draws.
    std::vector<std::size_t> table_to_store;
    if (plan && scores) {
        table_to_store.resize(scores->ids.size(), 0);
        std::unordered_map<std::string, std::size_t> by_id;
        for (std::size_t i = 0; i < store.records.size(); ++i) by_id[store.records[i].id] = i;
        for (std::size_t i = 0; i < scores->ids.size(); ++i) {
            auto it = by_id.find(scores->ids[i]);
            if (it == by_id.end())
                throw ValidationError("score table id not in store: " + scores->ids[i]);
            table_to_store[i] = it->second;
        }
    }

    std::uniform_int_distribution<std::size_t> pick_labeled(0, labeled_idx.size() - 1);
    SemiSlResult result;
    std::size_t steps_per_epoch =
        std::max<std::size_t>(1, (labeled_idx.size() + cfg.batch_labeled - 1) / cfg.batch_labeled);
    std::size_t global_step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t s = 0; s < steps_per_epoch; ++s, ++global_step) {
            std::vector<Vec> lx;
            std::vector<int> ly;
            for (std::size_t b = 0; b < cfg.batch_labeled; ++b) {
                const auto& r = store.records[labeled_idx[pick_labeled(rng)]];
                lx.push_back(r.vector);
                ly.push_back(*r.label);
            }

            std::vector<Vec> ux;
            double mean_ood_drawn = 0.0;
            if (!unlabeled_idx.empty() && cfg.lambda_u > 0.0) {
                if (cfg.sampler_mode == SamplerMode::OodWeighted) {
                    auto draws = draw_batch(*plan, cfg.batch_unlabeled, rng);
                    for (const auto& d : draws) {
                        ux.push_back(store.records[table_to_store[d.table_index]].vector);
                        mean_ood_drawn += scores->scores[d.table_index];
                    }
                } else {
                    std::uniform_int_distribution<std::size_t> pick_u(0, unlabeled_idx.size() - 1);
                    for (std::size_t b = 0; b < cfg.batch_unlabeled; ++b) {
                        std::size_t idx = unlabeled_idx[pick_u(rng)];
                        ux.push_back(store.records[idx].vector);
                        if (scores) {
                            const auto& rec = store.records[idx];
                            mean_ood_drawn += scores->scores[scores->index_of(rec.id)];
                        }
                    }
                }
                mean_ood_drawn /= static_cast<double>(cfg.batch_unlabeled);
            }

            double lam = cfg.lambda_u;
            if (cfg.ramp_steps > 0)
                lam *= std::min(1.0, static_cast<double>(global_step) /
                                         static_cast<double>(cfg.ramp_steps));

            MixBatch batch = build_mix_batch(classifier, lx, ly, ux, n_classes, cfg, rng);
            auto grads = zero_grads(classifier);
            MixLoss loss = mixmatch_loss_gradient(classifier, batch, lam, grads);
            if (!std::isfinite(loss.total))
                throw NumericError("semisl loss diverged at step " + std::to_string(global_step));
            adam_update(classifier, grads, adam, cfg.learning_rate);

            TrainTraceRow row;
            row.step = global_step;
            row.loss_l = loss.labeled;
            row.loss_u = loss.unlabeled;
            row.lambda_u = lam;
            row.acc_val = (s + 1 == steps_per_epoch) ? evaluate_accuracy(classifier, store, Split::Validation)
                                                     : -1.0;
            row.mean_ood_drawn = mean_ood_drawn;
            result.trace.push_back(row);
        }
    }
    result.classifier = std::move(classifier);
    return result;
}

void save_trace_csv(const std::vector<TrainTraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace: " + path);
    out << "step,loss_l,loss_u,lambda_u,acc_val,mean_ood_drawn\n";
    char buf[160];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%zu,%.8g,%.8g,%.8g,%.8g,%.8g", r.step, r.loss_l, r.loss_u,
                      r.lambda_u, r.acc_val, r.mean_ood_drawn);
        out << buf << "\n";
    }
}

}  // namespace openset
