#include <benchmark/benchmark.h>

#include <random>

#include "emotok/align.hpp"
#include "emotok/autodiff.hpp"
#include "emotok/numerics.hpp"
#include "emotok/tensor.hpp"

using namespace emotok;

static void BM_Softmax(benchmark::State& state) {
    std::mt19937_64 rng(1);
    auto logits = random_uniform({static_cast<std::size_t>(state.range(0))}, -5.0, 5.0, rng);
    for (auto _ : state) {
        auto p = numerics::softmax(logits.span(), 0.07);
        benchmark::DoNotOptimize(p);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Softmax)->Range(64, 4096)->Complexity();

static void BM_MatMul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(2);
    auto a = random_uniform({n, n}, -1.0, 1.0, rng);
    auto b = random_uniform({n, n}, -1.0, 1.0, rng);
    for (auto _ : state) {
        auto c = mat_mul(a, b);
        benchmark::DoNotOptimize(c);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatMul)->RangeMultiplier(2)->Range(16, 256)->Complexity();

static void BM_ContrastiveBatch(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    align::ContrastiveBatch batch;
    batch.skeleton = random_normal({n, 128}, 0.0, 1.0, rng);
    batch.text = random_normal({n, 128}, 0.0, 1.0, rng);
    for (std::size_t i = 0; i < n; ++i) batch.labels.push_back("label" + std::to_string(i % 8));
    auto targets = align::target_matrix(batch.labels);
    for (auto _ : state) {
        benchmark::DoNotOptimize(align::contrastive_loss(batch, targets));
    }
}
BENCHMARK(BM_ContrastiveBatch)->Arg(16)->Arg(64);

static void BM_ContrastiveBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(4);
    auto z = random_normal({n, 128}, 0.0, 1.0, rng);
    auto text = random_normal({n, 128}, 0.0, 1.0, rng);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back("label" + std::to_string(i % 8));
    auto targets = align::target_matrix(labels);
    for (auto _ : state) {
        auto zs = ad::leaf(z);
        auto loss = align::contrastive_loss_node(zs, text, targets, 0.07);
        ad::backward(loss);
        benchmark::DoNotOptimize(zs->grad);
    }
}
BENCHMARK(BM_ContrastiveBackward)->Arg(16)->Arg(64);
