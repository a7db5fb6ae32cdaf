#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "milda/random.hpp"
#include "milda/types.hpp"

namespace milda::testing {

inline Instance make_instance(double x, double y, int label, Domain d = Domain::target) {
    Instance i;
    i.features = Eigen::Vector2d(x, y);
    i.oracle_label = label;
    i.domain = d;
    return i;
}

/// Bag with the given instance labels; features are drawn from `rng` and
/// shifted by label so that classes are separable.
inline Bag make_bag(std::int64_t id, const std::vector<int>& labels, int bag_label, Domain d, Rng& rng) {
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<Instance> inst;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        Instance i = make_instance(labels[j] == 1 ? 2.0 + n(rng) : -2.0 + n(rng), n(rng), labels[j], d);
        i.bag_id = id;
        i.index_in_bag = static_cast<std::int64_t>(j);
        inst.push_back(std::move(i));
    }
    return Bag(id, std::move(inst), bag_label, d);
}

/// Random MIL-consistent dataset: each bag of size in [2, max_size], a
/// positive bag holds at least one positive.
inline DomainDataset random_dataset(Rng& rng, int n_bags, int max_size, Domain d = Domain::target,
                                    Split s = Split::train) {
    std::uniform_int_distribution<int> size(2, max_size);
    std::bernoulli_distribution coin(0.5);
    std::bernoulli_distribution pos(0.3);
    std::vector<Bag> bags;
    for (int b = 0; b < n_bags; ++b) {
        const int k = size(rng);
        const int y = coin(rng) ? 1 : 0;
        std::vector<int> labels(static_cast<std::size_t>(k), 0);
        if (y == 1) {
            for (auto& l : labels) l = pos(rng) ? 1 : 0;
            labels[std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng)] = 1;
        }
        bags.push_back(make_bag(b, labels, y, d, rng));
    }
    return DomainDataset(std::move(bags), d, s);
}

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
}

/// Rows are two-class distributions.
inline Eigen::MatrixXd random_distributions(Rng& rng, Eigen::Index n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd p(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        p(i, 1) = u(rng);
        p(i, 0) = 1.0 - p(i, 1);
    }
    return p;
}

}  // namespace milda::testing
