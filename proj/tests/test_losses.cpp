#include <doctest.h>

#include <cmath>

#include "milda/losses.hpp"
#include "milda/optim.hpp"
#include "support.hpp"

using namespace milda;
using namespace milda::testing;

namespace {

ModelBundle twin_bundle(std::uint64_t seed) {
    ArchitectureSpec arch;
    arch.encoder_hidden = 8;
    arch.feature_dim = 8;
    arch.attention_dim = 8;
    arch.head_hidden = 8;
    ModelBundle b = ModelBundle::create(arch, seed);
    Rng rng(seed + 1);
    b.head1 = InstanceHead("FI1", arch, rng);
    b.head2 = InstanceHead("FI2", arch, rng);
    b.pretrain_head.reset();
    return b;
}

Step2Batch random_batch(std::uint64_t seed) {
    Rng rng(seed);
    Step2Batch batch;
    for (int i = 0; i < 3; ++i) {
        batch.target_bags.push_back(random_matrix(rng, 4, 2));
        batch.target_bag_labels.push_back(i % 2);
        batch.source_bags.push_back(random_matrix(rng, 5, 2));
        batch.source_bag_labels.push_back((i + 1) % 2);
    }
    batch.mix_x = random_matrix(rng, 12, 2);
    for (int i = 0; i < 12; ++i) batch.mix_y.push_back(i % 3 == 0 ? 1 : 0);
    batch.target_x = random_matrix(rng, 16, 2);
    return batch;
}

}  // namespace

TEST_CASE("bag loss examples") {
    CHECK(bag_loss(Distribution(0.0, 1.0), 1) == 0.0);
    CHECK(std::abs(bag_loss(Distribution(0.5, 0.5), 0) - std::log(2.0)) < 1e-12);
    CHECK(std::abs(bag_loss(Distribution(0.5, 0.5), 1) - std::log(2.0)) < 1e-12);
    CHECK(std::isfinite(bag_loss(Distribution(1.0, 0.0), 1)));
    CHECK_THROWS(bag_loss(Distribution(0.5, 0.5), 2));
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const double q = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        for (int y : {0, 1}) CHECK(bag_loss(Distribution(1 - q, q), y) == bag_loss(Distribution(q, 1 - q), 1 - y));
    }
}

TEST_CASE("instance loss examples") {
    Eigen::MatrixXd onehot(3, 2);
    onehot << 1, 0, 0, 1, 1, 0;
    const std::vector<int> y{0, 1, 0};
    CHECK(instance_loss(onehot, y) == 0.0);
    const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(3, 2, 0.5);
    CHECK(std::abs(instance_loss(uniform, y) - std::log(2.0)) < 1e-12);

    bool empty = false;
    CHECK(instance_loss(Eigen::MatrixXd(0, 2), std::vector<int>{}, &empty) == 0.0);
    CHECK(empty);

    Rng rng(2);
    const Eigen::MatrixXd p = random_distributions(rng, 5);
    const std::vector<int> l{1, 0, 1, 1, 0};
    Eigen::MatrixXd p2(10, 2);
    p2 << p, p;
    std::vector<int> l2 = l;
    l2.insert(l2.end(), l.begin(), l.end());
    CHECK(std::abs(instance_loss(p2, l2) - instance_loss(p, l)) < 1e-12);
}

TEST_CASE("discrepancy examples") {
    CHECK(discrepancy_loss(Distribution(0.3, 0.7), Distribution(0.3, 0.7)) == 0.0);
    CHECK(std::abs(discrepancy_loss(Distribution(1, 0), Distribution(0, 1)) - 1.0) < 1e-9);
    CHECK(std::abs(discrepancy_loss(Distribution(0.8, 0.2), Distribution(0.5, 0.5)) - 0.3) < 1e-9);
}

TEST_CASE("discrepancy is symmetric and bounded by 2/C (property)") {
    Rng rng(3);
    for (int t = 0; t < 500; ++t) {
        const Eigen::MatrixXd a = random_distributions(rng, 1 + t % 7);
        const Eigen::MatrixXd b = random_distributions(rng, 1 + t % 7);
        const double d = discrepancy_loss(a, b);
        CHECK(d == discrepancy_loss(b, a));
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
    }
    Eigen::MatrixXd x(2, 2), y(2, 2);
    x << 1, 0, 0, 1;
    y << 0, 1, 1, 0;
    CHECK(discrepancy_loss(x, y) == 1.0);
    y << 0, 1, 0.5, 0.5;
    CHECK(discrepancy_loss(x, y) < 1.0);
}

TEST_CASE("objective weight endpoints") {
    const ModelBundle b = twin_bundle(5);
    const Step2Batch batch = random_batch(6);
    const Step2Losses one = step2_objectives(b, batch, {1.0});
    CHECK(std::abs(one.loss_a - one.instance) < 1e-12);
    const Step2Losses zero = step2_objectives(b, batch, {0.0});
    CHECK(std::abs(zero.loss_a - (zero.bag_target + zero.bag_source)) < 1e-12);

    ModelBundle same = b;
    same.head2 = *same.head1;
    const Step2Losses s = step2_objectives(same, batch, {0.5});
    CHECK(s.discrepancy == 0.0);
    CHECK(std::abs(s.loss_b - 0.5 * s.instance) < 1e-12);
}

TEST_CASE("backprop objectives agree with forward evaluation") {
    ModelBundle b = twin_bundle(7);
    const Step2Batch batch = random_batch(8);
    const Step2Losses f = step2_objectives(b, batch, {0.5});
    Step2Losses parts;
    CHECK(std::abs(backprop_objective_a(b, batch, {0.5}, &parts) - f.loss_a) < 1e-12);
    CHECK(std::abs(parts.instance - f.instance) < 1e-12);
    CHECK(std::abs(backprop_objective_b(b, batch, {0.5}) - f.loss_b) < 1e-12);
    CHECK(std::abs(backprop_objective_c(b, batch, {0.5}) - f.loss_c) < 1e-12);
}

TEST_CASE("objective gradients match finite differences") {
    ModelBundle b = twin_bundle(9);
    const Step2Batch batch = random_batch(10);
    const LossWeights w{0.4};
    const double step = 1e-6;
    struct Case {
        double (*backprop)(ModelBundle&, const Step2Batch&, LossWeights, Step2Losses*);
        double Step2Losses::*value;
        ParameterList (*scope)(ModelBundle&);
    };
    // Each backprop only promises gradients for the parameters its objective updates.
    for (const Case c : {Case{backprop_objective_a, &Step2Losses::loss_a, objective_a_scope},
                         Case{backprop_objective_b, &Step2Losses::loss_b, objective_b_scope},
                         Case{backprop_objective_c, &Step2Losses::loss_c, objective_c_scope}}) {
        c.backprop(b, batch, w, nullptr);
        for (Parameter* p : c.scope(b)) {
            // A few entries per tensor keep the test fast.
            for (Eigen::Index i = 0; i < std::min<Eigen::Index>(p->value.size(), 3); ++i) {
                const double keep = p->value(i);
                p->value(i) = keep + step;
                const double up = step2_objectives(b, batch, w).*c.value;
                p->value(i) = keep - step;
                const double down = step2_objectives(b, batch, w).*c.value;
                p->value(i) = keep;
                const double numeric = (up - down) / (2 * step);
                CAPTURE(p->name);
                CAPTURE(i);
                CHECK(std::abs(p->grad(i) - numeric) <= 1e-5 * std::max(1.0, std::abs(numeric)));
            }
        }
    }
}

TEST_CASE("an encoder step on the agreement objective lowers the discrepancy") {
    ModelBundle b = twin_bundle(11);
    const Step2Batch batch = random_batch(12);
    const double before = step2_objectives(b, batch, {0.5}).discrepancy;
    backprop_objective_c(b, batch, {0.5});
    Adam{1e-3}.step(objective_c_scope(b));
    CHECK(step2_objectives(b, batch, {0.5}).discrepancy < before);
}

TEST_CASE("a head step on the disagreement objective raises the discrepancy") {
    ModelBundle b = twin_bundle(13);
    Step2Batch batch = random_batch(14);
    batch.mix_x.resize(0, 2);
    batch.mix_y.clear();
    const double before = step2_objectives(b, batch, {0.5}).discrepancy;
    backprop_objective_b(b, batch, {0.5});
    Adam{1e-3}.step(objective_b_scope(b));
    CHECK(step2_objectives(b, batch, {0.5}).discrepancy >= before);
}

TEST_CASE("losses stay finite at the distribution boundary") {
    Eigen::MatrixXd p(2, 2);
    p << 1, 0, 0, 1;
    CHECK(std::isfinite(instance_loss(p, std::vector<int>{1, 0})));
    CHECK(std::isfinite(bag_loss(Distribution(0, 1), 0)));
}

TEST_CASE("objectives need twin heads") {
    ArchitectureSpec arch;
    ModelBundle b = ModelBundle::create(arch, 1);
    CHECK_THROWS(objective_b_scope(b));
    CHECK_THROWS(step2_objectives(b, random_batch(1), {}));
}
