#include <doctest.h>

#include <algorithm>

#include "openset/mixmatch.hpp"

using namespace openset;

namespace {

double entropy(const Vec& p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

}  // namespace

TEST_CASE("sharpen") {
    SUBCASE("T=1 is the identity") {
        Vec p = {0.2, 0.5, 0.3};
        Vec s = sharpen(p, 1.0);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(s[i] == doctest::Approx(p[i]).epsilon(1e-12));
    }
    SUBCASE("hand-computed T=0.5 case") {
        Vec s = sharpen({0.6, 0.4}, 0.5);
        CHECK(s[0] == doctest::Approx(0.36 / 0.52).epsilon(1e-12));
        CHECK(s[1] == doctest::Approx(0.16 / 0.52).epsilon(1e-12));
        CHECK(s[0] == doctest::Approx(0.69231).epsilon(1e-4));
    }
    SUBCASE("T -> 0 approaches one-hot at the argmax") {
        Vec s = sharpen({0.3, 0.5, 0.2}, 1e-6);
        CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("simplex preserved, entropy non-increasing for T < 1, argmax stable") {
        Rng rng(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int t = 0; t < 100; ++t) {
            Vec p(4);
            double sum = 0.0;
            for (auto& x : p) {
                x = u(rng) + 1e-9;
                sum += x;
            }
            for (auto& x : p) x /= sum;
            Vec s = sharpen(p, 0.5);
            double ssum = 0.0;
            for (double x : s) ssum += x;
            CHECK(ssum == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(entropy(s) <= entropy(p) + 1e-12);
            CHECK(std::max_element(s.begin(), s.end()) - s.begin() ==
                  std::max_element(p.begin(), p.end()) - p.begin());
        }
    }
    SUBCASE("zero entries stay zero") {
        Vec s = sharpen({0.0, 1.0}, 0.5);
        CHECK(s[0] == 0.0);
        CHECK(s[1] == 1.0);
    }
}

TEST_CASE("guess_label: sigma=0 equals sharpen of a single prediction") {
    Rng init(11);
    Mlp clf = make_mlp({3, 5, 2}, Activation::Relu, init);
    Vec x = {0.4, -1.2, 0.8};
    Rng r1(0);
    Vec q = guess_label(clf, x, 3, 0.5, 0.0, r1);
    Vec expected = sharpen(softmax(mlp_forward(clf, x)), 0.5);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(q[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("pseudo-label arithmetic on stubbed predictions") {
    // mean of [1,0],[0,1] at T=1 -> [0.5,0.5]
    Vec mean1 = {0.5, 0.5};
    Vec q1 = sharpen(mean1, 1.0);
    CHECK(q1[0] == doctest::Approx(0.5).epsilon(1e-12));

    // mean of [0.8,0.2],[0.6,0.4] = [0.7,0.3], sharpened at T=0.5
    Vec q2 = sharpen({0.7, 0.3}, 0.5);
    CHECK(q2[0] == doctest::Approx(0.49 / 0.58).epsilon(1e-12));
    CHECK(q2[1] == doctest::Approx(0.09 / 0.58).epsilon(1e-12));
    CHECK(q2[0] == doctest::Approx(0.84483).epsilon(1e-4));
    CHECK(q2[1] == doctest::Approx(0.15517).epsilon(1e-4));
}

TEST_CASE("mixup_apply") {
    Vec x1 = {1.0, 0.0}, x2 = {0.0, 1.0};
    Vec t1 = {1.0, 0.0}, t2 = {0.0, 1.0};
    SUBCASE("lambda=1 returns the first input exactly") {
        auto r = mixup_apply(x1, t1, x2, t2, 1.0);
        CHECK(r.x == x1);
        CHECK(r.target == t1);
    }
    SUBCASE("lambda=0.5 is the midpoint") {
        auto r = mixup_apply(x1, t1, x2, t2, 0.5);
        CHECK(r.x[0] == doctest::Approx(0.5));
        CHECK(r.target[0] == doctest::Approx(0.5));
    }
    SUBCASE("lambda=0.3 flips to lambda'=0.7") {
        auto r = mixup_apply(x1, t1, x2, t2, 0.3);
        CHECK(r.lambda_prime == doctest::Approx(0.7).epsilon(1e-15));
        CHECK(r.x[0] == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(r.x[1] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(r.target[0] == doctest::Approx(0.7).epsilon(1e-12));
    }
}

TEST_CASE("mixup: sampled outputs stay on the segment with dominant first argument") {
    Rng rng(7);
    Vec x1 = {2.0, -1.0}, x2 = {-2.0, 3.0};
    Vec t1 = {0.9, 0.1}, t2 = {0.2, 0.8};
    for (int t = 0; t < 100; ++t) {
        auto r = mixup(x1, t1, x2, t2, 0.75, rng);
        CHECK(r.lambda_prime >= 0.5);
        CHECK(r.lambda_prime <= 1.0);
        double tsum = 0.0;
        for (double v : r.target) tsum += v;
        CHECK(tsum == doctest::Approx(1.0).epsilon(1e-9));
        // x on the segment [x1, x2]
        for (std::size_t i = 0; i < x1.size(); ++i) {
            double lo = std::min(x1[i], x2[i]), hi = std::max(x1[i], x2[i]);
            CHECK(r.x[i] >= lo - 1e-12);
            CHECK(r.x[i] <= hi + 1e-12);
        }
    }
}

TEST_CASE("labeled_loss closed forms") {
    CHECK(labeled_loss({{1.0, 0.0}}, {{1.0, 0.0}}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(labeled_loss({{1.0, 0.0}}, {{0.5, 0.5}}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(labeled_loss({{0.5, 0.5}}, {{0.5, 0.5}}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("unlabeled_loss closed forms") {
    CHECK(unlabeled_loss({{0.3, 0.7}}, {{0.3, 0.7}}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(unlabeled_loss({{1.0, 0.0}}, {{0.0, 1.0}}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(unlabeled_loss({{0.5, 0.5}}, {{1.0, 0.0}}) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("combined objective gradient matches central finite differences") {
    Rng rng(19);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        Rng init(50 + trial);
        Mlp clf = make_mlp({4, 6, 3}, Activation::Tanh, init);

        // Frozen 4-row batch: 2 labeled-derived, 2 unlabeled-derived.
        MixBatch batch;
        for (int i = 0; i < 4; ++i) {
            Vec x(4);
            for (auto& v : x) v = g(rng);
            Vec t(3);
            double s = 0.0;
            for (auto& v : t) {
                v = u(rng) + 1e-6;
                s += v;
            }
            for (auto& v : t) v /= s;
            batch.inputs.push_back(x);
            batch.targets.push_back(t);
            batch.labeled_origin.push_back(i < 2);
        }
        const double lambda_u = 3.5;

        auto grads = zero_grads(clf);
        mixmatch_loss_gradient(clf, batch, lambda_u, grads);
        Vec analytic;
        for (const auto& l : grads) {
            analytic.insert(analytic.end(), l.weight.data.begin(), l.weight.data.end());
            analytic.insert(analytic.end(), l.bias.begin(), l.bias.end());
        }

        auto loss_at = [&](const Vec& flat) {
            Mlp probe = clf;
            probe.load_params(flat);
            std::vector<Vec> lt, lp, ut, up;
            for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
                Vec pred = softmax(mlp_forward(probe, batch.inputs[i]));
                if (batch.labeled_origin[i]) {
                    lt.push_back(batch.targets[i]);
                    lp.push_back(pred);
                } else {
                    ut.push_back(batch.targets[i]);
                    up.push_back(pred);
                }
            }
            return labeled_loss(lt, lp) + lambda_u * unlabeled_loss(ut, up);
        };

        Vec flat = clf.flatten_params();
        const double h = 1e-5;
        for (std::size_t p = 0; p < flat.size(); p += 5) {
            Vec plus = flat, minus = flat;
            plus[p] += h;
            minus[p] -= h;
            double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
            double denom = std::max({std::abs(fd), std::abs(analytic[p]), 1e-6});
            CHECK(std::abs(fd - analytic[p]) / denom < 1e-4);
        }
    }
}

TEST_CASE("train_semisl: epochs=0 returns initial params") {
    SyntheticSpec spec;
    spec.n_labeled = 8;
    spec.n_unlabeled_inlier = 20;
    spec.n_ood = 0;
    spec.n_val = 4;
    spec.n_test = 4;
    spec.n_classes = 2;
    Store store = generate_synthetic_openset(spec);

    MixMatchConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 6;
    cfg.sampler_mode = SamplerMode::Uniform;
    SemiSlResult r = train_semisl(store, 2, cfg, nullptr, nullptr);
    CHECK(r.trace.empty());

    Rng init(cfg.seed);
    std::vector<std::size_t> dims = {store.dim};
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(2);
    Mlp fresh = make_mlp(dims, Activation::Relu, init);
    CHECK(r.classifier.to_json() == fresh.to_json());
}

TEST_CASE("train_semisl: lambda_u=0 reduces to supervised training and separates 2 classes") {
    SyntheticSpec spec;
    spec.n_labeled = 40;
    spec.n_unlabeled_inlier = 10;
    spec.n_ood = 0;
    spec.n_val = 0;
    spec.n_test = 100;
    spec.n_classes = 2;
    spec.raw_dim = 8;
    spec.class_separation = 6.0;
    spec.seed = 14;
    Store store = generate_synthetic_openset(spec);

    MixMatchConfig cfg;
    cfg.lambda_u = 0.0;
    cfg.batch_labeled = 16;
    cfg.epochs = 100;  // ~300 steps at 3 steps/epoch
    cfg.learning_rate = 0.003;
    cfg.augment_sigma = 0.1;
    cfg.seed = 8;
    cfg.sampler_mode = SamplerMode::Uniform;
    SemiSlResult r = train_semisl(store, 2, cfg, nullptr, nullptr);
    CHECK(evaluate_accuracy(r.classifier, store, Split::Test) > 0.95);
}

TEST_CASE("train_semisl: deterministic given seed") {
    SyntheticSpec spec;
    spec.n_labeled = 10;
    spec.n_unlabeled_inlier = 30;
    spec.n_ood = 10;
    spec.n_val = 5;
    spec.n_test = 5;
    spec.n_classes = 2;
    Store store = generate_synthetic_openset(spec);
    MixMatchConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 21;
    cfg.sampler_mode = SamplerMode::Uniform;
    SemiSlResult a = train_semisl(store, 2, cfg, nullptr, nullptr);
    SemiSlResult b = train_semisl(store, 2, cfg, nullptr, nullptr);
    CHECK(a.classifier.to_json() == b.classifier.to_json());
}
