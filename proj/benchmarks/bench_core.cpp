#include <benchmark/benchmark.h>

#include "openset/gmm.hpp"
#include "openset/sampler.hpp"
#include "openset/ssl.hpp"

using namespace openset;

namespace {

std::vector<Vec> make_data(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Vec> data(n, Vec(d));
    for (auto& row : data)
        for (auto& x : row) x = g(rng);
    return data;
}

GmmModel random_model(std::size_t k, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    GmmModel m;
    m.priors.assign(k, 1.0 / static_cast<double>(k));
    for (std::size_t c = 0; c < k; ++c) {
        GmmComponent comp;
        comp.mean.resize(d);
        for (auto& x : comp.mean) x = g(rng);
        comp.cov.assign(d, 1.0);
        m.components.push_back(std::move(comp));
    }
    return m;
}

ContrastiveBatch random_batch(std::size_t n_pairs, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    ContrastiveBatch batch;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        Vec z(d);
        for (auto& x : z) x = g(rng);
        Vec twin = z;
        for (auto& x : twin) x += 0.05 * g(rng);
        batch.embeddings.push_back(std::move(z));
        batch.embeddings.push_back(std::move(twin));
        batch.twin.push_back(2 * i + 1);
        batch.twin.push_back(2 * i);
    }
    return batch;
}

}  // namespace

static void BM_EStep(benchmark::State& state) {
    auto data = make_data(static_cast<std::size_t>(state.range(0)), 16, 1);
    auto model = random_model(12, 16, 2);
    for (auto _ : state) {
        double ll = 0.0;
        Mat resp = e_step(model, data, &ll);
        benchmark::DoNotOptimize(resp.data.data());
        benchmark::DoNotOptimize(ll);
    }
}
BENCHMARK(BM_EStep)->Arg(500)->Arg(2000)->Arg(8000);

static void BM_NtxentLossGrad(benchmark::State& state) {
    auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 16, 3);
    auto positives = all_positive_sets(batch, 0.05);
    std::vector<Vec> grads;
    for (auto _ : state) {
        double loss = ntxent_loss_grad(batch, positives, 0.5, grads);
        benchmark::DoNotOptimize(loss);
        benchmark::DoNotOptimize(grads.data());
    }
}
BENCHMARK(BM_NtxentLossGrad)->Arg(16)->Arg(32)->Arg(64);

static void BM_AliasDraw(benchmark::State& state) {
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec w(static_cast<std::size_t>(state.range(0)));
    for (auto& x : w) x = u(rng) + 1e-6;
    AliasTable table = AliasTable::build(w);
    Rng draw_rng(11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(table.draw(draw_rng));
    }
}
BENCHMARK(BM_AliasDraw)->Arg(100)->Arg(10000);

static void BM_AliasBuild(benchmark::State& state) {
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec w(static_cast<std::size_t>(state.range(0)));
    for (auto& x : w) x = u(rng) + 1e-6;
    for (auto _ : state) {
        AliasTable table = AliasTable::build(w);
        benchmark::DoNotOptimize(table.prob.data());
    }
}
BENCHMARK(BM_AliasBuild)->Arg(100)->Arg(10000);

BENCHMARK_MAIN();
