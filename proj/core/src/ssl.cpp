#include "openset/ssl.hpp"

#include <algorithm>
#include <numeric>

namespace openset {

double cosine_sim(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ValidationError("cosine_sim: dimension mismatch");
    double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0)
        throw NumericError("cosine_sim: zero-norm embedding (collapsed encoder?)");
    return dot(a, b) / (na * nb);
}

void ContrastiveBatch::validate() const {
    if (embeddings.empty() || embeddings.size() % 2 != 0)
        throw ValidationError("contrastive batch size must be even and positive");
    if (twin.size() != embeddings.size())
        throw ValidationError("twin map size mismatch");
    for (std::size_t i = 0; i < twin.size(); ++i) {
        if (twin[i] >= twin.size() || twin[i] == i || twin[twin[i]] != i)
            throw ValidationError("twin map is not a perfect matching");
    }
    for (const auto& z : embeddings)
        if (!all_finite(z)) throw ValidationError("non-finite embedding in batch");
}

std::set<std::size_t> positive_set(std::size_t anchor, const ContrastiveBatch& batch, double epsilon) {
    if (anchor >= batch.size()) throw ValidationError("anchor index out of range");
    std::set<std::size_t> pos;
    pos.insert(batch.twin[anchor]);
    const double threshold = 1.0 - epsilon;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == anchor) continue;
        if (cosine_sim(batch.embeddings[anchor], batch.embeddings[j]) >= threshold) pos.insert(j);
    }
    return pos;
}

std::vector<std::set<std::size_t>> all_positive_sets(const ContrastiveBatch& batch, double epsilon) {
    std::vector<std::set<std::size_t>> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = positive_set(i, batch, epsilon);
    return out;
}

namespace {

// Full cosine similarity matrix; diagonal unused.
Mat sim_matrix(const ContrastiveBatch& batch) {
    const std::size_t n = batch.size();
    Mat s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            s(i, j) = s(j, i) = cosine_sim(batch.embeddings[i], batch.embeddings[j]);
    return s;
}

double ntxent_from_sims(const Mat& s, const std::vector<std::set<std::size_t>>& positives, double tau,
                        Mat* d_sims) {
    const std::size_t n = s.rows;
    double total = 0.0;
    Vec scaled(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (positives[i].empty())
            throw ValidationError("anchor " + std::to_string(i) + " has an empty positive set");
        std::size_t m = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) scaled[m++] = s(i, k) / tau;
        double lse = log_sum_exp(scaled);
        double per_anchor = 0.0;
        for (std::size_t j : positives[i]) per_anchor += lse - s(i, j) / tau;
        per_anchor /= static_cast<double>(positives[i].size());
        total += per_anchor;

        if (d_sims) {
            const double w = 1.0 / static_cast<double>(n);
            const double inv_p = 1.0 / static_cast<double>(positives[i].size());
            for (std::size_t k = 0; k < n; ++k) {
                if (k == i) continue;
                double soft = std::exp(s(i, k) / tau - lse);
                double g = soft / tau;
                if (positives[i].count(k)) g -= inv_p / tau;
                (*d_sims)(i, k) += w * g;
            }
        }
    }
    return total / static_cast<double>(n);
}

}  // namespace

double ntxent_loss(const ContrastiveBatch& batch, const std::vector<std::set<std::size_t>>& positives,
                   double tau) {
    batch.validate();
    if (tau <= 0) throw ValidationError("tau must be > 0");
    return ntxent_from_sims(sim_matrix(batch), positives, tau, nullptr);
}

double ntxent_loss_grad(const ContrastiveBatch& batch,
                        const std::vector<std::set<std::size_t>>& positives, double tau,
                        std::vector<Vec>& d_embeddings) {
    batch.validate();
    if (tau <= 0) throw ValidationError("tau must be > 0");
    const std::size_t n = batch.size();
    Mat s = sim_matrix(batch);
    Mat d_sims(n, n);
    double loss = ntxent_from_sims(s, positives, tau, &d_sims);

    d_embeddings.assign(n, Vec(batch.embeddings[0].size(), 0.0));
    Vec norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = norm2(batch.embeddings[i]);

    // d cos(z_i,z_k)/d z_i = z_k/(|z_i||z_k|) - cos * z_i/|z_i|^2
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            double g = d_sims(i, k);
            if (g == 0.0) continue;
            const Vec& zi = batch.embeddings[i];
            const Vec& zk = batch.embeddings[k];
            double inv_cross = 1.0 / (norms[i] * norms[k]);
            double ci = s(i, k) / (norms[i] * norms[i]);
            double ck = s(i, k) / (norms[k] * norms[k]);
            for (std::size_t d = 0; d < zi.size(); ++d) {
                d_embeddings[i][d] += g * (zk[d] * inv_cross - ci * zi[d]);
                d_embeddings[k][d] += g * (zi[d] * inv_cross - ck * zk[d]);
            }
        }
    }
    return loss;
}

void SslConfig::validate() const {
    if (epsilon < 0 || epsilon > 2) throw ValidationError("epsilon must be in [0, 2]");
    if (tau <= 0) throw ValidationError("tau must be > 0");
    if (learning_rate <= 0) throw ValidationError("learning_rate must be > 0");
    if (augment_sigma < 0) throw ValidationError("augment_sigma must be >= 0");
    if (batch_n == 0) throw ValidationError("batch_n must be >= 1");
    if (latent_dim == 0) throw ValidationError("latent_dim must be >= 1");
}

double encoder_loss_gradient(const Mlp& encoder, const RawContrastiveBatch& raw, const SslConfig& cfg,
                             std::vector<DenseLayer>& grads) {
    cfg.validate();
    const std::size_t n = raw.inputs.size();
    ContrastiveBatch batch;
    batch.twin = raw.twin;
    batch.embeddings.resize(n);
    std::vector<ForwardTrace> traces(n);
    for (std::size_t i = 0; i < n; ++i)
        batch.embeddings[i] = mlp_forward(encoder, raw.inputs[i], &traces[i]);

    auto positives = all_positive_sets(batch, cfg.epsilon);
    std::vector<Vec> d_emb;
    double loss = ntxent_loss_grad(batch, positives, cfg.tau, d_emb);

    for (std::size_t i = 0; i < n; ++i)
        mlp_backward(encoder, raw.inputs[i], traces[i], d_emb[i], grads);
    return loss;
}

Store embed_store(const Mlp& encoder, const Store& store, bool l2_normalize) {
    std::vector<EmbeddingRecord> out;
    out.reserve(store.records.size());
    for (const auto& r : store.records) {
        EmbeddingRecord e = r;
        e.vector = mlp_forward(encoder, r.vector);
        if (l2_normalize) {
            double n = norm2(e.vector);
            if (n == 0.0) throw NumericError("zero-norm latent embedding for record " + r.id);
            for (auto& x : e.vector) x /= n;
        }
        out.push_back(std::move(e));
    }
    return validate_store(std::move(out));
}

SslResult train_encoder(const Store& store, const SslConfig& cfg) {
    cfg.validate();
    if (store.records.empty()) throw ValidationError("train_encoder: empty store");

    Rng rng(cfg.seed);
    std::vector<std::size_t> dims;
    dims.push_back(store.dim);
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(cfg.latent_dim);
    Mlp encoder = make_mlp(dims, Activation::Tanh, rng);

    // Training pool: labeled + unlabeled; held-out splits are only embedded.
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < store.records.size(); ++i) {
        Split s = store.records[i].split;
        if (s == Split::Labeled || s == Split::Unlabeled) pool.push_back(i);
    }
    if (pool.empty()) pool.resize(store.records.size()), std::iota(pool.begin(), pool.end(), 0);

    AdamState adam = make_adam_state(encoder);
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::vector<double> loss_trace;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(pool.begin(), pool.end(), rng);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start + 1 <= pool.size(); start += cfg.batch_n) {
            std::size_t n = std::min(cfg.batch_n, pool.size() - start);
            RawContrastiveBatch raw;
            raw.inputs.reserve(2 * n);
            raw.twin.resize(2 * n);
            for (std::size_t b = 0; b < n; ++b) {
                const Vec& x = store.records[pool[start + b]].vector;
                Vec aug = x;
                for (auto& v : aug) v += cfg.augment_sigma * jitter(rng);
                raw.inputs.push_back(x);
                raw.inputs.push_back(std::move(aug));
                raw.twin[2 * b] = 2 * b + 1;
                raw.twin[2 * b + 1] = 2 * b;
            }
            auto grads = zero_grads(encoder);
            double loss;
            try {
                loss = encoder_loss_gradient(encoder, raw, cfg, grads);
            } catch (const NumericError& e) {
                throw NumericError("training failed at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(n_batches) + ": " + e.what());
            }
            if (!std::isfinite(loss))
                throw NumericError("loss diverged at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(n_batches));
            adam_update(encoder, grads, adam, cfg.learning_rate);
            epoch_loss += loss;
            ++n_batches;
        }
        loss_trace.push_back(n_batches ? epoch_loss / static_cast<double>(n_batches) : 0.0);
    }

    SslResult result;
    result.embeddings = embed_store(encoder, store, cfg.normalize_embeddings);
    result.encoder = std::move(encoder);
    result.loss_trace = std::move(loss_trace);
    return result;
}

}  // namespace openset
