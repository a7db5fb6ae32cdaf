#include "milda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace milda {

std::vector<int> decide(const Eigen::MatrixXd& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) out[static_cast<std::size_t>(i)] = probs(i, 1) > probs(i, 0) ? 1 : 0;
    return out;
}

std::vector<int> decide_scores(std::span<const double> positive_scores) {
    std::vector<int> out(positive_scores.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = positive_scores[i] > 0.5 ? 1 : 0;
    return out;
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("pr_auc: length mismatch");
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double sum = 0.0;
    std::size_t seen = 0;
    std::size_t tp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::size_t block_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            block_pos += labels[order[j]] == 1 ? 1 : 0;
            ++j;
        }
        seen += j - i;
        tp += block_pos;
        if (block_pos > 0) sum += static_cast<double>(block_pos) * static_cast<double>(tp) / static_cast<double>(seen);
        i = j;
    }
    return sum / static_cast<double>(positives);
}

std::optional<double> per_class_accuracy(std::span<const int> preds, std::span<const int> labels, int cls) {
    if (preds.size() != labels.size()) throw std::invalid_argument("per_class_accuracy: length mismatch");
    if (cls != 0 && cls != 1) throw std::invalid_argument("class must be 0 or 1");
    std::size_t n = 0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != cls) continue;
        ++n;
        hit += preds[i] == cls ? 1 : 0;
    }
    if (n == 0) return std::nullopt;
    return static_cast<double>(hit) / static_cast<double>(n);
}

Eigen::MatrixXd principal_projection(const Eigen::MatrixXd& features) {
    if (features.rows() == 0) return Eigen::MatrixXd(0, 2);
    const Eigen::RowVectorXd mean = features.colwise().mean();
    const Eigen::MatrixXd centered = features.rowwise() - mean;
    if (features.cols() < 2) {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(features.rows(), 2);
        out.col(0) = centered.col(0);
        return out;
    }
    const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(features.rows() - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // Eigenvalues ascend; the last two columns are the top components.
    Eigen::MatrixXd axes(features.cols(), 2);
    axes.col(0) = eig.eigenvectors().col(features.cols() - 1);
    axes.col(1) = eig.eigenvectors().col(features.cols() - 2);
    for (int c = 0; c < 2; ++c) {
        Eigen::Index arg = 0;
        axes.col(c).cwiseAbs().maxCoeff(&arg);
        if (axes(arg, c) < 0.0) axes.col(c) *= -1.0;
    }
    return centered * axes;
}

std::vector<ScoreMapRow> export_score_map(const Eigen::MatrixXd& features, std::span<const double> scores,
                                          std::span<const int> labels) {
    if (static_cast<std::size_t>(features.rows()) != scores.size() || (!labels.empty() && labels.size() != scores.size()))
        throw std::invalid_argument("export_score_map: length mismatch");
    const Eigen::MatrixXd xy = features.cols() == 2 ? features : principal_projection(features);
    std::vector<ScoreMapRow> rows(scores.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        rows[i] = {xy(r, 0), xy(r, 1), scores[i], labels.empty() ? -1 : labels[i]};
    }
    return rows;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) return out;
    double s = 0.0;
    for (const double v : values) s += v;
    out.mean = s / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

}  // namespace milda
