#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "milda/model.hpp"

namespace milda {

/// Probability floor applied before taking a log.
inline constexpr double kProbEpsilon = 1e-12;

struct LossWeights {
    double lambda = 0.5;
};

/// Binary cross-entropy  -log pred[label].
double bag_loss(const Distribution& pred, int label);

/// Mean binary cross-entropy over rows of `probs` (N x 2). An empty batch
/// yields 0 and sets *empty when given.
double instance_loss(const Eigen::MatrixXd& probs, std::span<const int> labels, bool* empty = nullptr);

/// (1/C) sum_c |p1_c - p2_c|  for C = 2.
double discrepancy_loss(const Distribution& p1, const Distribution& p2);
/// Batch mean of the per-instance discrepancy (rows are distributions).
double discrepancy_loss(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2);

/// d instance_loss / d logits = (p - onehot) / N.
Eigen::MatrixXd instance_loss_logit_grad(const Eigen::MatrixXd& probs, std::span<const int> labels);
/// d discrepancy_loss / d p1 for a batch; d/d p2 is its negation.
Eigen::MatrixXd discrepancy_prob_grad(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2);

/// One mini-batch of everything the alternating objectives consume.
struct Step2Batch {
    std::vector<Eigen::MatrixXd> target_bags;  // raw instance features per bag
    std::vector<int> target_bag_labels;
    std::vector<Eigen::MatrixXd> source_bags;
    std::vector<int> source_bag_labels;
    Eigen::MatrixXd mix_x;  // x^m: source + pseudo-labeled target rows
    std::vector<int> mix_y;
    Eigen::MatrixXd target_x;  // x^t: target rows for the discrepancy term
};

struct Step2Losses {
    double bag_target = 0.0;
    double bag_source = 0.0;
    double instance = 0.0;  // L_I summed over both instance heads
    double discrepancy = 0.0;
    double loss_a = 0.0;
    double loss_b = 0.0;
    double loss_c = 0.0;
    bool empty_instance_batch = false;
};

/// Forward-only evaluation of the three alternating objectives:
///   A = lambda L_I + (1 - lambda)(L_B^t + L_B^s)      over {G, F_I1, F_I2, F_B}
///   B = lambda (L_I - L_adv)                         over {F_I1, F_I2}
///   C = lambda L_adv                                 over {G}
Step2Losses step2_objectives(const ModelBundle& bundle, const Step2Batch& batch, LossWeights weights);

/// The parameters each objective is allowed to update.
ParameterList objective_a_scope(ModelBundle& bundle);
ParameterList objective_b_scope(ModelBundle& bundle);
ParameterList objective_c_scope(ModelBundle& bundle);

// The backprop_* functions zero every gradient in the bundle, accumulate the
// objective's gradient and return its value. They do not step parameters.

// When `parts` is given, the unweighted terms computed along the way are written to it.

double backprop_objective_a(ModelBundle& bundle, const Step2Batch& batch, LossWeights weights,
                            Step2Losses* parts = nullptr);
double backprop_objective_b(ModelBundle& bundle, const Step2Batch& batch, LossWeights weights,
                            Step2Losses* parts = nullptr);
double backprop_objective_c(ModelBundle& bundle, const Step2Batch& batch, LossWeights weights,
                            Step2Losses* parts = nullptr);

/// Mean bag loss over bags, accumulating gradients into encoder and bag head.
double backprop_bag_loss(ModelBundle& bundle, const std::vector<Eigen::MatrixXd>& bags, std::span<const int> labels,
                         double scale);
/// Mean instance loss of one head over rows of x, accumulating gradients into
/// encoder (when `through_encoder`) and the head.
double backprop_instance_loss(Encoder& encoder, InstanceHead& head, const Eigen::MatrixXd& x,
                              std::span<const int> labels, double scale, bool through_encoder = true);

}  // namespace milda
