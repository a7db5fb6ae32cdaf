#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace milda {

/// Argmax of each two-class row; ties go to the negative class.
std::vector<int> decide(const Eigen::MatrixXd& probs);
/// Positive iff score > 0.5 (same tie rule for scalar positive scores).
std::vector<int> decide_scores(std::span<const double> positive_scores);

/// Fraction of matching entries. Throws std::invalid_argument on empty or
/// mismatched input.
double accuracy(std::span<const int> preds, std::span<const int> labels);

/// Average precision: for each block of tied scores (descending), every
/// positive in the block contributes the precision at the block end; the sum
/// is divided by the number of positives. nullopt when there are no positives.
std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels);

/// Recall restricted to instances whose label equals `cls`; nullopt when
/// `cls` does not occur.
std::optional<double> per_class_accuracy(std::span<const int> preds, std::span<const int> labels, int cls);

struct ScoreMapRow {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;
    int oracle_label = -1;
};

/// Projects features onto two axes (identity for 2-D input, principal
/// components otherwise) and pairs each point with its score and label.
std::vector<ScoreMapRow> export_score_map(const Eigen::MatrixXd& features, std::span<const double> scores,
                                          std::span<const int> labels);

/// Top-2 principal-component projection of centered data. Each axis is signed
/// so that its largest-magnitude loading is positive.
Eigen::MatrixXd principal_projection(const Eigen::MatrixXd& features);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n - 1), 0 for n < 2
};

MeanStd mean_std(std::span<const double> values);

}  // namespace milda
