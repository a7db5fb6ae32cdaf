#include <doctest.h>

#include <cmath>
#include <numeric>

#include "milda/metrics.hpp"
#include "support.hpp"

using namespace milda;
using namespace milda::testing;

namespace {

// Brute force: each positive scores the precision over every item whose score
// is at least its own.
double ap_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double total = 0;
    int n_pos = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        ++n_pos;
        int above = 0, above_pos = 0;
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s[j] >= s[i]) {
                ++above;
                above_pos += y[j];
            }
        total += static_cast<double>(above_pos) / above;
    }
    return total / n_pos;
}

}  // namespace

TEST_CASE("accuracy examples") {
    const std::vector<int> y{1, 0, 1, 1};
    CHECK(accuracy(y, y) == 1.0);
    const std::vector<int> p{1, 0, 0, 1};
    CHECK(accuracy(p, y) == 0.75);
    std::vector<int> flipped(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) flipped[i] = 1 - p[i];
    CHECK(accuracy(flipped, y) == 1.0 - accuracy(p, y));
    CHECK(accuracy(p, y) + accuracy(flipped, y) == 1.0);
    CHECK_THROWS(accuracy(std::vector<int>{}, std::vector<int>{}));
    CHECK_THROWS(accuracy(std::vector<int>{1}, y));
}

TEST_CASE("decision rules send ties negative") {
    Eigen::MatrixXd p(3, 2);
    p << 0.5, 0.5, 0.2, 0.8, 0.9, 0.1;
    CHECK(decide(p) == std::vector<int>{0, 1, 0});
    CHECK(decide_scores(std::vector<double>{0.5, 0.51, 0.1}) == std::vector<int>{0, 1, 0});
}

TEST_CASE("pr_auc examples") {
    CHECK(std::abs(*pr_auc(std::vector<double>{0.9, 0.8, 0.7, 0.6}, std::vector<int>{1, 0, 1, 0}) - (1.0 + 2.0 / 3.0) / 2.0) <
          1e-9);
    CHECK(*pr_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}) == 1.0);
    CHECK(*pr_auc(std::vector<double>{1, 0, 1, 0}, std::vector<int>{1, 0, 1, 0}) == 1.0);
    CHECK_FALSE(pr_auc(std::vector<double>{0.3, 0.2}, std::vector<int>{0, 0}).has_value());
    // Fully tied scores give the prevalence.
    CHECK(std::abs(*pr_auc(std::vector<double>(4, 0.5), std::vector<int>{1, 0, 0, 0}) - 0.25) < 1e-12);
}

TEST_CASE("pr_auc matches the brute-force oracle (property)") {
    Rng rng(1);
    for (int t = 0; t < 300; ++t) {
        const int n = 1 + t % 30;
        std::vector<double> s(static_cast<std::size_t>(n));
        std::vector<int> y(static_cast<std::size_t>(n));
        // Coarse scores force ties.
        std::uniform_int_distribution<int> level(0, t % 2 ? 4 : 1000);
        for (int i = 0; i < n; ++i) {
            s[static_cast<std::size_t>(i)] = level(rng) / 4.0;
            y[static_cast<std::size_t>(i)] = std::bernoulli_distribution(0.4)(rng) ? 1 : 0;
        }
        if (std::accumulate(y.begin(), y.end(), 0) == 0) y[0] = 1;
        CHECK(std::abs(*pr_auc(s, y) - ap_oracle(s, y)) < 1e-12);
    }
}

TEST_CASE("pr_auc is invariant under strictly monotone transforms (property)") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const int n = 2 + t % 50;
        std::vector<double> s(static_cast<std::size_t>(n)), ts(static_cast<std::size_t>(n));
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            s[static_cast<std::size_t>(i)] = std::uniform_int_distribution<int>(0, 10)(rng) / 10.0;
            y[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1 : 0;
            ts[static_cast<std::size_t>(i)] = std::exp(3.0 * s[static_cast<std::size_t>(i)]) - 7.0;
        }
        CHECK(*pr_auc(s, y) == doctest::Approx(*pr_auc(ts, y)).epsilon(1e-12));
    }
}

TEST_CASE("pr_auc of random scores is near the prevalence") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double prevalence : {0.1, 0.3, 0.5}) {
        std::vector<double> s(10000);
        std::vector<int> y(10000);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = u(rng);
            y[i] = u(rng) < prevalence ? 1 : 0;
        }
        CHECK(std::abs(*pr_auc(s, y) - prevalence) <= 0.05);
    }
}

TEST_CASE("per-class accuracy") {
    const std::vector<int> y{1, 1, 1, 1, 1, 0};
    CHECK(*per_class_accuracy(std::vector<int>{1, 1, 0, 0, 0, 0}, y, 1) == 0.4);
    CHECK(*per_class_accuracy(y, y, 1) == 1.0);
    CHECK(*per_class_accuracy(std::vector<int>{0, 0, 0, 0, 0, 1}, y, 1) == 0.0);
    CHECK_FALSE(per_class_accuracy(y, std::vector<int>(6, 0), 1).has_value());
}

TEST_CASE("principal projection") {
    Rng rng(4);
    Eigen::MatrixXd two = random_matrix(rng, 20, 2);
    const auto rows = export_score_map(two, std::vector<double>(20, 0.1), std::vector<int>(20, 0));
    CHECK(rows[3].x == two(3, 0));
    CHECK(rows[3].y == two(3, 1));

    Eigen::MatrixXd x = random_matrix(rng, 200, 5);
    x.col(2) *= 6.0;
    x.col(4) *= 3.0;
    const Eigen::MatrixXd p = principal_projection(x);
    REQUIRE(p.cols() == 2);
    CHECK(std::abs(p.col(0).mean()) < 1e-9);
    CHECK(std::abs(p.col(1).mean()) < 1e-9);
    CHECK(p.col(0).squaredNorm() >= p.col(1).squaredNorm());
}

TEST_CASE("mean and sample deviation") {
    const MeanStd m = mean_std(std::vector<double>{1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == 2.5);
    CHECK(std::abs(m.stddev - std::sqrt(5.0 / 3.0)) < 1e-12);
    CHECK(mean_std(std::vector<double>{7.0}).stddev == 0.0);
}
