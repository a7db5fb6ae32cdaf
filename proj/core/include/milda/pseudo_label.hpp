#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "milda/types.hpp"

namespace milda {

/// PR-AUC of each head's instance scores on labeled source validation data.
struct ConfidencePair {
    double c_b = 0.5;
    double c_i = 0.5;
    bool bag_fallback = false;
    bool instance_fallback = false;
};

/// Pseudo-label budget schedule. tau(m) = min(N_min + m (N_max - N_min) / M, N_max),
/// floored; A_p * tau positives and A_n * tau negatives per round.
struct ScheduleConfig {
    int M = 20;
    int n_min = 1;
    int n_max = 1;
    int a_p = 1;
    int a_n = 1;

    void validate() const;

    /// M = 20, A_p = A_n = 1, N_min = n_tpi / 10, N_max = n_tpi / 4.
    static ScheduleConfig pathology_defaults(std::size_t n_tpi);
    /// M = 20, A_p = 1, A_n = 3, N_min = n_tpi / 30, N_max = n_tpi / 10.
    static ScheduleConfig digit_defaults(std::size_t n_tpi);
};

int schedule_tau(int epoch, const ScheduleConfig& cfg);

/// c_B from bag-head attention scores, c_I from instance-head positive
/// probabilities. A set without positives falls back to 0.5 for both.
ConfidencePair confidence_scores(std::span<const double> bag_scores, std::span<const double> instance_scores,
                                 std::span<const int> oracle_labels);

enum class MixRule {
    confidence,     // c_B p_B + c_I p_I with (c_B, c_I) normalized to sum 1
    instance_only,  // p_I
    bag_only,       // p_B
    plain_sum,      // (p_B + p_I) / 2, no confidence weighting
};

/// p_B(y=1) is the attention weight, p_B(y=0) = 1 - a. Returns N x 2 rows.
/// Under `confidence`, c_B = c_I = 0 falls back to equal weights and sets
/// *fell_back.
Eigen::MatrixXd mix_scores(std::span<const double> bag_positive, const Eigen::MatrixXd& instance_probs,
                           const ConfidencePair& conf, MixRule rule = MixRule::confidence, bool* fell_back = nullptr);

/// Candidate rules: positive iff p0 <= p1 and p1 >= 0.5, negative iff
/// p1 <= p0 and p0 >= 0.5. Rows satisfying both (p0 == p1) are skipped.
/// Up to a_p * tau positives by descending p1 and a_n * tau negatives by
/// descending p0; ties keep ascending (bag_id, index_in_bag) order.
std::vector<PseudoLabelAssignment> select_pseudo_labels(std::span<const InstanceRef> refs, const Eigen::MatrixXd& mix,
                                                        int tau, int a_p, int a_n, int epoch = 0);

/// Uniform sample without replacement of negative-bag instances, all labeled 0.
/// Returns min(count, pool) assignments in (bag_id, index_in_bag) order.
std::vector<PseudoLabelAssignment> balance_negative_bag_sample(const DomainDataset& target, std::size_t count,
                                                               std::uint64_t seed, int epoch = 0);

/// Source class centroids in feature space; each target row goes to its
/// nearest centroid (ties to negative) and the floor(fraction * N) closest
/// rows of each class are labeled. Classes absent from the source are skipped.
std::vector<PseudoLabelAssignment> centroid_pseudo_labels(const Eigen::MatrixXd& source_features,
                                                          std::span<const int> source_labels,
                                                          const Eigen::MatrixXd& target_features,
                                                          std::span<const InstanceRef> target_refs, double fraction,
                                                          int epoch = 0);

}  // namespace milda
