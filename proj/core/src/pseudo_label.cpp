#include "milda/pseudo_label.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "milda/metrics.hpp"
#include "milda/random.hpp"

namespace milda {

void ScheduleConfig::validate() const {
    if (M < 1 || n_min < 1 || n_max < 1 || a_p < 1 || a_n < 1)
        throw std::invalid_argument("schedule values must be positive");
    if (n_min > n_max) throw std::invalid_argument("schedule requires N_min <= N_max");
}

ScheduleConfig ScheduleConfig::pathology_defaults(std::size_t n_tpi) {
    ScheduleConfig c;
    c.M = 20;
    c.a_p = 1;
    c.a_n = 1;
    c.n_min = std::max(1, static_cast<int>(n_tpi / 10));
    c.n_max = std::max(c.n_min, static_cast<int>(n_tpi / 4));
    return c;
}

ScheduleConfig ScheduleConfig::digit_defaults(std::size_t n_tpi) {
    ScheduleConfig c;
    c.M = 20;
    c.a_p = 1;
    c.a_n = 3;
    c.n_min = std::max(1, static_cast<int>(n_tpi / 30));
    c.n_max = std::max(c.n_min, static_cast<int>(n_tpi / 10));
    return c;
}

int schedule_tau(int epoch, const ScheduleConfig& cfg) {
    if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
    if (epoch >= cfg.M) return cfg.n_max;
    const long long grown = static_cast<long long>(epoch) * (cfg.n_max - cfg.n_min) / cfg.M;
    return static_cast<int>(std::min<long long>(cfg.n_min + grown, cfg.n_max));
}

ConfidencePair confidence_scores(std::span<const double> bag_scores, std::span<const double> instance_scores,
                                 std::span<const int> oracle_labels) {
    ConfidencePair out;
    const auto cb = pr_auc(bag_scores, oracle_labels);
    const auto ci = pr_auc(instance_scores, oracle_labels);
    if (cb) {
        out.c_b = *cb;
    } else {
        out.bag_fallback = true;
        std::clog << "[pseudo-label] no positives in source validation; c_B falls back to 0.5\n";
    }
    if (ci) {
        out.c_i = *ci;
    } else {
        out.instance_fallback = true;
        std::clog << "[pseudo-label] no positives in source validation; c_I falls back to 0.5\n";
    }
    return out;
}

Eigen::MatrixXd mix_scores(std::span<const double> bag_positive, const Eigen::MatrixXd& instance_probs,
                           const ConfidencePair& conf, MixRule rule, bool* fell_back) {
    if (static_cast<std::size_t>(instance_probs.rows()) != bag_positive.size())
        throw std::invalid_argument("mix_scores: length mismatch");
    if (fell_back != nullptr) *fell_back = false;
    double wb = 0.5;
    double wi = 0.5;
    switch (rule) {
        case MixRule::confidence: {
            const double total = conf.c_b + conf.c_i;
            if (total > 0.0) {
                wb = conf.c_b / total;
                wi = conf.c_i / total;
            } else {
                if (fell_back != nullptr) *fell_back = true;
                std::clog << "[pseudo-label] c_B = c_I = 0; mixing with equal weights\n";
            }
            break;
        }
        case MixRule::instance_only: wb = 0.0; wi = 1.0; break;
        case MixRule::bag_only: wb = 1.0; wi = 0.0; break;
        case MixRule::plain_sum: wb = 0.5; wi = 0.5; break;
    }
    Eigen::MatrixXd out(instance_probs.rows(), 2);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double a = bag_positive[static_cast<std::size_t>(i)];
        out(i, 0) = wb * (1.0 - a) + wi * instance_probs(i, 0);
        out(i, 1) = wb * a + wi * instance_probs(i, 1);
    }
    return out;
}

std::vector<PseudoLabelAssignment> select_pseudo_labels(std::span<const InstanceRef> refs, const Eigen::MatrixXd& mix,
                                                        int tau, int a_p, int a_n, int epoch) {
    if (static_cast<std::size_t>(mix.rows()) != refs.size()) throw std::invalid_argument("select: length mismatch");
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double p0 = mix(r, 0);
        const double p1 = mix(r, 1);
        const bool is_pos = p0 <= p1 && p1 >= 0.5;
        const bool is_neg = p1 <= p0 && p0 >= 0.5;
        if (is_pos && is_neg) continue;
        if (is_pos) pos.push_back(i);
        if (is_neg) neg.push_back(i);
    }
    auto rank = [&](std::vector<std::size_t>& idx, int col) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const double sa = mix(static_cast<Eigen::Index>(a), col);
            const double sb = mix(static_cast<Eigen::Index>(b), col);
            if (sa != sb) return sa > sb;
            return refs[a] < refs[b];
        });
    };
    rank(pos, 1);
    rank(neg, 0);
    const auto quota_pos = static_cast<std::size_t>(std::max(0, a_p * tau));
    const auto quota_neg = static_cast<std::size_t>(std::max(0, a_n * tau));

    std::vector<PseudoLabelAssignment> out;
    auto emit = [&](const std::vector<std::size_t>& idx, std::size_t quota, int label) {
        for (std::size_t k = 0; k < std::min(quota, idx.size()); ++k) {
            const auto r = static_cast<Eigen::Index>(idx[k]);
            const double total = mix(r, 0) + mix(r, 1);
            const double score = total > 0.0 ? mix(r, label) / total : 0.5;
            out.push_back({refs[idx[k]], label, score, epoch, false});
        }
    };
    emit(pos, quota_pos, 1);
    emit(neg, quota_neg, 0);
    return out;
}

std::vector<PseudoLabelAssignment> balance_negative_bag_sample(const DomainDataset& target, std::size_t count,
                                                               std::uint64_t seed, int epoch) {
    std::vector<InstanceRef> pool;
    for (const auto& bag : target.bags()) {
        if (bag.label() != 0) continue;
        for (const auto& inst : bag.instances()) pool.push_back(inst.ref());
    }
    std::vector<InstanceRef> chosen;
    if (count >= pool.size()) {
        chosen = pool;
    } else if (count > 0) {
        Rng rng(seed);
        // Partial Fisher-Yates: first `count` slots are a uniform sample.
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<PseudoLabelAssignment> out;
    out.reserve(chosen.size());
    for (const auto& r : chosen) out.push_back({r, 0, 1.0, epoch, true});
    return out;
}

std::vector<PseudoLabelAssignment> centroid_pseudo_labels(const Eigen::MatrixXd& source_features,
                                                          std::span<const int> source_labels,
                                                          const Eigen::MatrixXd& target_features,
                                                          std::span<const InstanceRef> target_refs, double fraction,
                                                          int epoch) {
    if (static_cast<std::size_t>(source_features.rows()) != source_labels.size() ||
        static_cast<std::size_t>(target_features.rows()) != target_refs.size())
        throw std::invalid_argument("centroid_pseudo_labels: length mismatch");
    std::array<Eigen::RowVectorXd, 2> centroid;
    std::array<bool, 2> present{false, false};
    for (int c = 0; c < 2; ++c) {
        centroid[static_cast<std::size_t>(c)] = Eigen::RowVectorXd::Zero(source_features.cols());
        std::size_t n = 0;
        for (std::size_t i = 0; i < source_labels.size(); ++i) {
            if (source_labels[i] != c) continue;
            centroid[static_cast<std::size_t>(c)] += source_features.row(static_cast<Eigen::Index>(i));
            ++n;
        }
        if (n > 0) {
            centroid[static_cast<std::size_t>(c)] /= static_cast<double>(n);
            present[static_cast<std::size_t>(c)] = true;
        } else {
            std::clog << "[pseudo-label] source has no class " << c << " instances; skipping class\n";
        }
    }
    const auto quota = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(target_refs.size()) + 1e-9));
    std::array<std::vector<std::pair<double, std::size_t>>, 2> members;
    for (std::size_t i = 0; i < target_refs.size(); ++i) {
        const auto row = target_features.row(static_cast<Eigen::Index>(i));
        const double d0 = present[0] ? (row - centroid[0]).squaredNorm() : std::numeric_limits<double>::infinity();
        const double d1 = present[1] ? (row - centroid[1]).squaredNorm() : std::numeric_limits<double>::infinity();
        const int cls = d1 < d0 ? 1 : 0;
        if (!present[static_cast<std::size_t>(cls)]) continue;
        members[static_cast<std::size_t>(cls)].push_back({cls == 1 ? d1 : d0, i});
    }
    std::vector<PseudoLabelAssignment> out;
    for (int c : {1, 0}) {
        auto& m = members[static_cast<std::size_t>(c)];
        std::sort(m.begin(), m.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return target_refs[a.second] < target_refs[b.second];
        });
        for (std::size_t k = 0; k < std::min(quota, m.size()); ++k) {
            // Closeness score in (0,1]: 1 at the centroid.
            out.push_back({target_refs[m[k].second], c, 1.0 / (1.0 + std::sqrt(m[k].first)), epoch, false});
        }
    }
    return out;
}

}  // namespace milda
