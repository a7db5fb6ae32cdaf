#include "milda/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace milda {

double bag_loss(const Distribution& pred, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("bag label must be 0 or 1");
    return -std::log(std::max(pred[label], kProbEpsilon));
}

double instance_loss(const Eigen::MatrixXd& probs, std::span<const int> labels, bool* empty) {
    if (static_cast<std::size_t>(probs.rows()) != labels.size())
        throw std::invalid_argument("instance_loss: predictions and labels differ in length");
    if (empty != nullptr) *empty = labels.empty();
    if (labels.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y != 0 && y != 1) throw std::invalid_argument("instance label must be 0 or 1");
        sum += -std::log(std::max(probs(static_cast<Eigen::Index>(i), y), kProbEpsilon));
    }
    return sum / static_cast<double>(labels.size());
}

double discrepancy_loss(const Distribution& p1, const Distribution& p2) {
    return (p1 - p2).cwiseAbs().sum() / 2.0;
}

double discrepancy_loss(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2) {
    if (p1.rows() != p2.rows() || p1.cols() != p2.cols()) throw std::invalid_argument("discrepancy: shape mismatch");
    if (p1.rows() == 0) return 0.0;
    return (p1 - p2).cwiseAbs().sum() / (static_cast<double>(p1.cols()) * static_cast<double>(p1.rows()));
}

Eigen::MatrixXd instance_loss_logit_grad(const Eigen::MatrixXd& probs, std::span<const int> labels) {
    Eigen::MatrixXd g = probs;
    for (std::size_t i = 0; i < labels.size(); ++i) g(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
    if (!labels.empty()) g /= static_cast<double>(labels.size());
    return g;
}

Eigen::MatrixXd discrepancy_prob_grad(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2) {
    const double denom = static_cast<double>(p1.cols()) * static_cast<double>(std::max<Eigen::Index>(p1.rows(), 1));
    return (p1 - p2).unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }) / denom;
}

namespace {

double mean_bag_loss(const ModelBundle& b, const std::vector<Eigen::MatrixXd>& bags, const std::vector<int>& labels) {
    if (bags.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < bags.size(); ++i)
        s += bag_loss(b.bag_head.forward(b.encoder.forward(bags[i])), labels[i]);
    return s / static_cast<double>(bags.size());
}

void require_twins(const ModelBundle& b) {
    if (!b.has_twin_heads()) throw std::logic_error("alternating objectives need twin instance heads");
}

}  // namespace

Step2Losses step2_objectives(const ModelBundle& bundle, const Step2Batch& batch, LossWeights weights) {
    require_twins(bundle);
    Step2Losses out;
    out.bag_target = mean_bag_loss(bundle, batch.target_bags, batch.target_bag_labels);
    out.bag_source = mean_bag_loss(bundle, batch.source_bags, batch.source_bag_labels);
    if (batch.mix_x.rows() > 0) {
        const Eigen::MatrixXd h = bundle.encoder.forward(batch.mix_x);
        out.instance = instance_loss(bundle.head1->forward(h), batch.mix_y) + instance_loss(bundle.head2->forward(h), batch.mix_y);
    } else {
        out.empty_instance_batch = true;
    }
    if (batch.target_x.rows() > 0) {
        const Eigen::MatrixXd h = bundle.encoder.forward(batch.target_x);
        out.discrepancy = discrepancy_loss(bundle.head1->forward(h), bundle.head2->forward(h));
    }
    const double lam = weights.lambda;
    out.loss_a = lam * out.instance + (1.0 - lam) * (out.bag_target + out.bag_source);
    out.loss_b = lam * (out.instance - out.discrepancy);
    out.loss_c = lam * out.discrepancy;
    return out;
}

ParameterList objective_a_scope(ModelBundle& bundle) {
    require_twins(bundle);
    ParameterList out = bundle.encoder.parameters();
    for (auto* p : bundle.head1->parameters()) out.push_back(p);
    for (auto* p : bundle.head2->parameters()) out.push_back(p);
    for (auto* p : bundle.bag_head.parameters()) out.push_back(p);
    return out;
}

ParameterList objective_b_scope(ModelBundle& bundle) {
    require_twins(bundle);
    ParameterList out = bundle.head1->parameters();
    for (auto* p : bundle.head2->parameters()) out.push_back(p);
    return out;
}

ParameterList objective_c_scope(ModelBundle& bundle) { return bundle.encoder.parameters(); }

double backprop_bag_loss(ModelBundle& bundle, const std::vector<Eigen::MatrixXd>& bags, std::span<const int> labels,
                         double scale) {
    if (bags.empty()) return 0.0;
    const double per_bag = scale / static_cast<double>(bags.size());
    double total = 0.0;
    for (std::size_t i = 0; i < bags.size(); ++i) {
        Encoder::Cache ec;
        AttentionBagHead::Cache bc;
        const Eigen::MatrixXd h = bundle.encoder.forward(bags[i], &ec);
        const Distribution p = bundle.bag_head.forward(h, &bc);
        total += bag_loss(p, labels[i]);
        Eigen::Vector2d d_logits = p;
        d_logits[labels[i]] -= 1.0;
        const Eigen::MatrixXd dh = bundle.bag_head.backward(bc, d_logits * per_bag);
        bundle.encoder.backward(ec, dh);
    }
    return total / static_cast<double>(bags.size());
}

double backprop_instance_loss(Encoder& encoder, InstanceHead& head, const Eigen::MatrixXd& x,
                              std::span<const int> labels, double scale, bool through_encoder) {
    if (x.rows() == 0) return 0.0;
    Encoder::Cache ec;
    InstanceHead::Cache hc;
    const Eigen::MatrixXd h = encoder.forward(x, &ec);
    const Eigen::MatrixXd p = head.forward(h, &hc);
    const double loss = instance_loss(p, labels);
    const Eigen::MatrixXd dh = head.backward(hc, instance_loss_logit_grad(p, labels) * scale);
    if (through_encoder) encoder.backward(ec, dh);
    return loss;
}

double backprop_objective_a(ModelBundle& bundle, const Step2Batch& batch, LossWeights weights, Step2Losses* parts) {
    require_twins(bundle);
    zero_grads(bundle.all_parameters());
    const double lam = weights.lambda;
    double loss = 0.0;
    if (batch.mix_x.rows() > 0) {
        Encoder::Cache ec;
        InstanceHead::Cache c1;
        InstanceHead::Cache c2;
        const Eigen::MatrixXd h = bundle.encoder.forward(batch.mix_x, &ec);
        const Eigen::MatrixXd p1 = bundle.head1->forward(h, &c1);
        const Eigen::MatrixXd p2 = bundle.head2->forward(h, &c2);
        const double li = instance_loss(p1, batch.mix_y) + instance_loss(p2, batch.mix_y);
        if (parts != nullptr) parts->instance = li;
        loss += lam * li;
        Eigen::MatrixXd dh = bundle.head1->backward(c1, instance_loss_logit_grad(p1, batch.mix_y) * lam);
        dh += bundle.head2->backward(c2, instance_loss_logit_grad(p2, batch.mix_y) * lam);
        bundle.encoder.backward(ec, dh);
    }
    const double lt = backprop_bag_loss(bundle, batch.target_bags, batch.target_bag_labels, 1.0 - lam);
    const double ls = backprop_bag_loss(bundle, batch.source_bags, batch.source_bag_labels, 1.0 - lam);
    if (parts != nullptr) {
        parts->bag_target = lt;
        parts->bag_source = ls;
        parts->empty_instance_batch = batch.mix_x.rows() == 0;
    }
    return loss + (1.0 - lam) * (lt + ls);
}

double backprop_objective_b(ModelBundle& bundle, const Step2Batch& batch, LossWeights weights, Step2Losses* parts) {
    require_twins(bundle);
    zero_grads(bundle.all_parameters());
    const double lam = weights.lambda;
    double loss = 0.0;
    if (batch.mix_x.rows() > 0) {
        const Eigen::MatrixXd h = bundle.encoder.forward(batch.mix_x);
        InstanceHead::Cache c1;
        InstanceHead::Cache c2;
        const Eigen::MatrixXd p1 = bundle.head1->forward(h, &c1);
        const Eigen::MatrixXd p2 = bundle.head2->forward(h, &c2);
        loss += lam * (instance_loss(p1, batch.mix_y) + instance_loss(p2, batch.mix_y));
        bundle.head1->backward(c1, instance_loss_logit_grad(p1, batch.mix_y) * lam);
        bundle.head2->backward(c2, instance_loss_logit_grad(p2, batch.mix_y) * lam);
    }
    if (batch.target_x.rows() > 0) {
        const Eigen::MatrixXd h = bundle.encoder.forward(batch.target_x);
        InstanceHead::Cache c1;
        InstanceHead::Cache c2;
        const Eigen::MatrixXd p1 = bundle.head1->forward(h, &c1);
        const Eigen::MatrixXd p2 = bundle.head2->forward(h, &c2);
        const double adv = discrepancy_loss(p1, p2);
        if (parts != nullptr) parts->discrepancy = adv;
        loss -= lam * adv;
        const Eigen::MatrixXd dp = discrepancy_prob_grad(p1, p2) * (-lam);
        bundle.head1->backward(c1, softmax_backward(p1, dp));
        bundle.head2->backward(c2, softmax_backward(p2, -dp));
    }
    return loss;
}

double backprop_objective_c(ModelBundle& bundle, const Step2Batch& batch, LossWeights weights, Step2Losses* parts) {
    require_twins(bundle);
    zero_grads(bundle.all_parameters());
    if (batch.target_x.rows() == 0) return 0.0;
    const double lam = weights.lambda;
    Encoder::Cache ec;
    InstanceHead::Cache c1;
    InstanceHead::Cache c2;
    const Eigen::MatrixXd h = bundle.encoder.forward(batch.target_x, &ec);
    const Eigen::MatrixXd p1 = bundle.head1->forward(h, &c1);
    const Eigen::MatrixXd p2 = bundle.head2->forward(h, &c2);
    const Eigen::MatrixXd dp = discrepancy_prob_grad(p1, p2) * lam;
    Eigen::MatrixXd dh = bundle.head1->backward(c1, softmax_backward(p1, dp));
    dh += bundle.head2->backward(c2, softmax_backward(p2, -dp));
    bundle.encoder.backward(ec, dh);
    const double adv = discrepancy_loss(p1, p2);
    if (parts != nullptr) parts->discrepancy = adv;
    return lam * adv;
}

}  // namespace milda
