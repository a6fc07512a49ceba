#include <benchmark/benchmark.h>

#include <random>

#include "spft/fisher.hpp"
#include "spft/network.hpp"
#include "spft/penalties.hpp"

namespace {

spft::Tensor random_batch(std::size_t b, spft::Shape3 s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    spft::Tensor x({b, s.channels, s.height, s.width});
    for (double& v : x.storage()) v = n(rng);
    return x;
}

std::vector<int> labels(std::size_t b, int k) {
    std::vector<int> y(b);
    for (std::size_t i = 0; i < b; ++i) y[i] = static_cast<int>(i % static_cast<std::size_t>(k));
    return y;
}

void BM_Forward(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    spft::Network net = spft::make_desknet({1, side, side}, 5);
    net.initialize(1);
    const spft::Tensor x = random_batch(64, net.input_shape(), 2);
    for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Forward)->Arg(14)->Arg(28)->Unit(benchmark::kMillisecond);

void BM_LossAndGrad(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    spft::Network net = spft::make_desknet({1, side, side}, 5);
    net.initialize(1);
    const spft::Tensor x = random_batch(64, net.input_shape(), 2);
    const std::vector<int> y = labels(64, 5);
    for (auto _ : state) benchmark::DoNotOptimize(net.loss_and_grad(x, y));
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_LossAndGrad)->Arg(14)->Arg(28)->Unit(benchmark::kMillisecond);

spft::PenaltyConfig config_for(const spft::Network& net, spft::PenaltyKind kind) {
    spft::PenaltyConfig cfg;
    cfg.kind = kind;
    cfg.alpha = 0.01;
    cfg.beta = 0.01;
    cfg.reference = net.params().shared_values();
    if (spft::uses_fisher(kind)) cfg.fisher_diag = std::vector<double>(cfg.reference.size(), 0.5);
    if (spft::uses_groups(kind)) cfg.groups = spft::build_channel_groups(net);
    return cfg;
}

void BM_PenaltyGrad(benchmark::State& state) {
    spft::Network net = spft::make_desknet({1, 28, 28}, 5);
    net.initialize(1);
    const auto kind = static_cast<spft::PenaltyKind>(state.range(0));
    const spft::Penalty pen(config_for(net, kind), net.params());
    std::vector<double> g(net.params().size());
    for (auto _ : state) {
        pen.add_grad(net.params().values, g);
        benchmark::DoNotOptimize(g.data());
    }
    state.SetLabel(std::string(spft::to_string(kind)));
}
BENCHMARK(BM_PenaltyGrad)->DenseRange(0, 5);

void BM_Prox(benchmark::State& state) {
    spft::Network net = spft::make_desknet({1, 28, 28}, 5);
    net.initialize(1);
    const auto kind = static_cast<spft::PenaltyKind>(state.range(0));
    const spft::Penalty pen(config_for(net, kind), net.params());
    std::vector<double> w = net.params().values;
    for (auto _ : state) {
        pen.prox_inplace(w, 1e-3);
        benchmark::DoNotOptimize(w.data());
    }
    state.SetLabel(std::string(spft::to_string(kind)));
}
BENCHMARK(BM_Prox)->Arg(static_cast<int>(spft::PenaltyKind::L1SP))->Arg(static_cast<int>(spft::PenaltyKind::GLSP));

void BM_FisherPerExample(benchmark::State& state) {
    spft::Network net = spft::make_desknet({1, 14, 14}, 5);
    net.initialize(1);
    spft::Dataset d;
    d.images = random_batch(32, net.input_shape(), 3);
    d.labels = labels(32, 5);
    d.num_classes = 5;
    std::vector<std::size_t> idx(32);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (auto _ : state) benchmark::DoNotOptimize(spft::fisher_diag_over(net, d, idx, {}));
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_FisherPerExample)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
