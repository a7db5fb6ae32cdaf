#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "milda/losses.hpp"
#include "milda/metrics.hpp"
#include "milda/model.hpp"
#include "milda/pseudo_label.hpp"
#include "milda/synth.hpp"

using namespace milda;

namespace {

ArchitectureSpec arch32() {
    ArchitectureSpec a;
    a.encoder_hidden = a.feature_dim = a.attention_dim = a.head_hidden = 32;
    return a;
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
    return m;
}

void BM_BagForward(benchmark::State& state) {
    const ModelBundle b = ModelBundle::create(arch32(), 1);
    const Eigen::MatrixXd x = gaussian(state.range(0), 2, 2);
    for (auto _ : state) benchmark::DoNotOptimize(b.bag_head.forward(b.encoder.forward(x)));
}
BENCHMARK(BM_BagForward)->Arg(10)->Arg(30);

void BM_BagBackward(benchmark::State& state) {
    ModelBundle b = ModelBundle::create(arch32(), 1);
    std::vector<Eigen::MatrixXd> bags{gaussian(30, 2, 3)};
    const std::vector<int> y{1};
    for (auto _ : state) benchmark::DoNotOptimize(backprop_bag_loss(b, bags, y, 1.0));
}
BENCHMARK(BM_BagBackward);

void BM_InstanceBatch(benchmark::State& state) {
    ModelBundle b = ModelBundle::create(arch32(), 1);
    const Eigen::MatrixXd x = gaussian(128, 2, 4);
    std::vector<int> y(128);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
    for (auto _ : state) benchmark::DoNotOptimize(backprop_instance_loss(b.encoder, *b.pretrain_head, x, y, 1.0));
}
BENCHMARK(BM_InstanceBatch);

void BM_PrAuc(benchmark::State& state) {
    Rng rng(5);
    std::uniform_real_distribution<double> u;
    std::vector<double> s(static_cast<std::size_t>(state.range(0)));
    std::vector<int> y(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = u(rng);
        y[i] = u(rng) < 0.3;
    }
    for (auto _ : state) benchmark::DoNotOptimize(pr_auc(s, y));
}
BENCHMARK(BM_PrAuc)->Arg(1000)->Arg(10000);

void BM_KMeans(benchmark::State& state) {
    const Eigen::MatrixXd pts = gaussian(90, 32, 6);
    for (auto _ : state) benchmark::DoNotOptimize(kmeans(pts, 10, 7));
}
BENCHMARK(BM_KMeans);

void BM_SelectPseudoLabels(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(8);
    std::uniform_real_distribution<double> u;
    std::vector<InstanceRef> refs(n);
    Eigen::MatrixXd mix(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        refs[i] = {static_cast<std::int64_t>(i / 30), static_cast<std::int64_t>(i % 30)};
        mix(static_cast<Eigen::Index>(i), 1) = u(rng);
        mix(static_cast<Eigen::Index>(i), 0) = 1.0 - mix(static_cast<Eigen::Index>(i), 1);
    }
    for (auto _ : state) benchmark::DoNotOptimize(select_pseudo_labels(refs, mix, static_cast<int>(n / 4), 1, 1));
}
BENCHMARK(BM_SelectPseudoLabels)->Arg(5040);

}  // namespace

BENCHMARK_MAIN();
