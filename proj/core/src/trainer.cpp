#include "milda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "milda/optim.hpp"

namespace milda {

void TrainConfig::validate() const {
    if (epochs_step1 < 0 || epochs_step23 < 0) throw std::invalid_argument("epoch counts must be >= 0");
    if (!(lr > 0.0) || !(lr_matching > 0.0)) throw std::invalid_argument("learning rates must be > 0");
    if (bags_per_step < 1 || instances_per_step < 1) throw std::invalid_argument("batch sizes must be >= 1");
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda must be in [0,1]");
    if (n_inner_generator_steps < 0) throw std::invalid_argument("n_inner_generator_steps must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs_step1", c.epochs_step1},
            {"epochs_step23", c.epochs_step23},
            {"lr", c.lr},
            {"lr_matching", c.lr_matching},
            {"bags_per_step", c.bags_per_step},
            {"instances_per_step", c.instances_per_step},
            {"lambda", c.lambda},
            {"n_inner_generator_steps", c.n_inner_generator_steps},
            {"seed", c.seed},
            {"architecture", to_json(c.arch)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    c.epochs_step1 = j.value("epochs_step1", c.epochs_step1);
    c.epochs_step23 = j.value("epochs_step23", c.epochs_step23);
    c.lr = j.value("lr", c.lr);
    c.lr_matching = j.value("lr_matching", c.lr_matching);
    c.bags_per_step = j.value("bags_per_step", c.bags_per_step);
    c.instances_per_step = j.value("instances_per_step", c.instances_per_step);
    c.lambda = j.value("lambda", c.lambda);
    c.n_inner_generator_steps = j.value("n_inner_generator_steps", c.n_inner_generator_steps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("architecture")) {
        auto a = to_json(c.arch);
        a.update(j.at("architecture"));
        c.arch = architecture_from_json(a);
    }
    return c;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string TrainingHistory::to_csv() const {
    std::ostringstream out;
    out << "epoch,phase,loss_bag,loss_instance,loss_adv,tau,n_positive,n_negative,n_negative_bag,c_b,c_i,"
           "precision_positive_bags,precision_all,eval_pr_auc\n";
    for (const auto& r : records) {
        out << r.epoch << ',' << r.phase << ',' << fmt(r.loss_bag) << ',' << fmt(r.loss_instance) << ','
            << fmt(r.loss_adv) << ',' << r.tau << ',' << r.n_positive << ',' << r.n_negative << ','
            << r.n_negative_bag << ',' << fmt(r.c_b) << ',' << fmt(r.c_i) << ',' << fmt(r.precision_positive_bags)
            << ',' << fmt(r.precision_all) << ',' << fmt(r.eval_pr_auc) << '\n';
    }
    return out.str();
}

TrainingDiverged::TrainingDiverged(int epoch, TrainingHistory history)
    : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
      epoch_(epoch),
      history_(std::move(history)) {}

namespace {

/// Flattened, index-addressable view of a dataset for batching.
struct BagTable {
    std::vector<Eigen::MatrixXd> features;
    std::vector<int> labels;

    explicit BagTable(const DomainDataset& ds) {
        for (const auto& b : ds.bags()) {
            features.push_back(b.feature_matrix());
            labels.push_back(b.label());
        }
    }
    std::size_t size() const { return features.size(); }
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return out;
}

/// Cycles through a shuffled order, wrapping when exhausted.
class Cursor {
public:
    Cursor(std::size_t n, Rng& rng) : order_(permutation(n, rng)) {}

    std::vector<Eigen::Index> next(std::size_t count) {
        std::vector<Eigen::Index> out;
        if (order_.empty()) return out;
        count = std::min(count, order_.size());
        for (std::size_t k = 0; k < count; ++k) {
            out.push_back(static_cast<Eigen::Index>(order_[pos_]));
            pos_ = (pos_ + 1) % order_.size();
        }
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

std::size_t steps_for(std::size_t n, int per_step) {
    return (n + static_cast<std::size_t>(per_step) - 1) / static_cast<std::size_t>(per_step);
}

void gather_bags(const BagTable& t, const std::vector<Eigen::Index>& idx, std::vector<Eigen::MatrixXd>& feats,
                 std::vector<int>& labels) {
    feats.clear();
    labels.clear();
    for (const auto i : idx) {
        feats.push_back(t.features[static_cast<std::size_t>(i)]);
        labels.push_back(t.labels[static_cast<std::size_t>(i)]);
    }
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<Eigen::Index>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (const auto i : idx) out.push_back(y[static_cast<std::size_t>(i)]);
    return out;
}

void check_finite(double loss, int epoch, const TrainingHistory* history) {
    if (!std::isfinite(loss)) throw TrainingDiverged(epoch, history != nullptr ? *history : TrainingHistory{});
}

ParameterList concat(std::initializer_list<ParameterList> lists) {
    ParameterList out;
    for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
    return out;
}

void finish_record(EpochRecord& rec, const ModelBundle& bundle, const TrainingMonitor& monitor,
                   TrainingHistory* history) {
    if (monitor.evaluate) rec.eval_pr_auc = monitor.evaluate(bundle);
    if (history != nullptr) history->append(rec);
}

/// Step-2 x^m: all source training rows plus the pseudo-labeled target rows.
void mixed_rows(const TrainingData& data, const std::vector<PseudoLabelAssignment>& pseudo, Eigen::MatrixXd& x,
                std::vector<int>& y) {
    Eigen::MatrixXd sx;
    std::vector<int> sy;
    labeled_rows(data.source_train, sx, sy);
    x.resize(sx.rows() + static_cast<Eigen::Index>(pseudo.size()), static_cast<Eigen::Index>(data.source_train.feature_dim()));
    if (sx.rows() > 0) x.topRows(sx.rows()) = sx;
    y = sy;
    for (std::size_t k = 0; k < pseudo.size(); ++k) {
        x.row(sx.rows() + static_cast<Eigen::Index>(k)) = data.target_train.at(pseudo[k].ref).features.transpose();
        y.push_back(pseudo[k].assigned_label);
    }
}

}  // namespace

void labeled_rows(const DomainDataset& ds, Eigen::MatrixXd& x, std::vector<int>& y) {
    std::vector<Instance> rows;
    for (const auto& b : ds.bags())
        for (const auto& inst : b.instances())
            if (inst.oracle_label) rows.push_back(inst);
    x = rows.empty() ? Eigen::MatrixXd(0, static_cast<Eigen::Index>(ds.feature_dim())) : stack_features(rows);
    y.clear();
    for (const auto& r : rows) y.push_back(*r.oracle_label);
}

std::size_t positive_bag_instance_count(const DomainDataset& target) {
    std::size_t n = 0;
    for (const auto& b : target.bags())
        if (b.label() == 1) n += b.size();
    return n;
}

ModelBundle run_step1(ModelBundle bundle, const TrainingData& data, const TrainConfig& cfg, TrainingHistory* history,
                      const TrainingMonitor& monitor) {
    cfg.validate();
    if (!bundle.pretrain_head) throw std::logic_error("Step 1 needs the pretraining instance head");
    const BagTable target(data.target_train);
    Eigen::MatrixXd sx;
    std::vector<int> sy;
    labeled_rows(data.source_train, sx, sy);
    const Adam opt{cfg.lr};
    const auto params = concat({bundle.encoder.parameters(), bundle.bag_head.parameters(), bundle.pretrain_head->parameters()});

    for (int e = 0; e < cfg.epochs_step1; ++e) {
        Rng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(e)));
        Cursor bag_cursor(target.size(), rng);
        Cursor inst_cursor(sy.size(), rng);
        const std::size_t steps = target.size() > 0 ? steps_for(target.size(), cfg.bags_per_step)
                                                    : steps_for(sy.size(), cfg.instances_per_step);
        EpochRecord rec;
        rec.epoch = e;
        rec.phase = "step1";
        std::vector<Eigen::MatrixXd> bags;
        std::vector<int> bag_labels;
        for (std::size_t s = 0; s < steps; ++s) {
            zero_grads(params);
            gather_bags(target, bag_cursor.next(static_cast<std::size_t>(cfg.bags_per_step)), bags, bag_labels);
            const double lb = backprop_bag_loss(bundle, bags, bag_labels, 1.0);
            const auto idx = inst_cursor.next(static_cast<std::size_t>(cfg.instances_per_step));
            const double li = backprop_instance_loss(bundle.encoder, *bundle.pretrain_head, gather_rows(sx, idx),
                                                     gather_labels(sy, idx), 1.0);
            check_finite(lb + li, e, history);
            opt.step(params);
            rec.loss_bag += lb / static_cast<double>(steps);
            rec.loss_instance += li / static_cast<double>(steps);
        }
        finish_record(rec, bundle, monitor, history);
    }
    return bundle;
}

ModelBundle init_twin_heads(ModelBundle bundle, std::uint64_t seed) {
    Rng r1(derive_seed(seed, 21));
    Rng r2(derive_seed(seed, 22));
    bundle.head1 = InstanceHead("FI1", bundle.arch, r1);
    bundle.head2 = InstanceHead("FI2", bundle.arch, r2);
    bundle.pretrain_head.reset();
    return bundle;
}

ModelBundle run_step2_epoch(ModelBundle bundle, const TrainingData& data,
                            const std::vector<PseudoLabelAssignment>& pseudo_labels, const TrainConfig& cfg,
                            const PipelineOptions& options, int epoch, EpochRecord* record) {
    cfg.validate();
    if (!bundle.has_twin_heads()) throw std::logic_error("Step 2 needs twin instance heads");
    const BagTable target(data.target_train);
    const BagTable source(data.source_train);
    Eigen::MatrixXd mx;
    std::vector<int> my;
    mixed_rows(data, pseudo_labels, mx, my);
    const Eigen::MatrixXd tx = data.target_train.instance_count() > 0 ? stack_features(data.target_train.all_instances())
                                                                       : Eigen::MatrixXd(0, mx.cols());

    Rng rng(derive_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(epoch)));
    Cursor target_bags(options.use_bag_loss ? target.size() : 0, rng);
    Cursor source_bags(options.use_bag_loss ? source.size() : 0, rng);
    Cursor mix_cursor(my.size(), rng);
    Cursor target_cursor(static_cast<std::size_t>(tx.rows()), rng);
    const std::size_t steps = options.use_bag_loss && target.size() > 0 ? steps_for(target.size(), cfg.bags_per_step)
                                                                         : steps_for(my.size(), cfg.instances_per_step);

    const Adam base{cfg.lr};
    const Adam matching{cfg.lr_matching};
    const LossWeights weights{cfg.lambda};
    const auto scope_a = objective_a_scope(bundle);
    const auto scope_b = objective_b_scope(bundle);
    const auto scope_c = objective_c_scope(bundle);

    double sum_bag = 0.0;
    double sum_inst = 0.0;
    double sum_adv = 0.0;
    Step2Batch batch;
    for (std::size_t s = 0; s < steps; ++s) {
        gather_bags(target, target_bags.next(static_cast<std::size_t>(cfg.bags_per_step)), batch.target_bags,
                    batch.target_bag_labels);
        gather_bags(source, source_bags.next(static_cast<std::size_t>(cfg.bags_per_step)), batch.source_bags,
                    batch.source_bag_labels);
        const auto mi = mix_cursor.next(static_cast<std::size_t>(cfg.instances_per_step));
        batch.mix_x = gather_rows(mx, mi);
        batch.mix_y = gather_labels(my, mi);
        batch.target_x = gather_rows(tx, target_cursor.next(static_cast<std::size_t>(cfg.instances_per_step)));

        Step2Losses parts;
        check_finite(backprop_objective_a(bundle, batch, weights, &parts), epoch, nullptr);
        base.step(scope_a);
        sum_bag += parts.bag_target + parts.bag_source;
        sum_inst += parts.instance;

        if (options.use_feature_matching) {
            check_finite(backprop_objective_b(bundle, batch, weights), epoch, nullptr);
            matching.step(scope_b);
            for (int g = 0; g < cfg.n_inner_generator_steps; ++g) {
                Step2Losses cparts;
                check_finite(backprop_objective_c(bundle, batch, weights, &cparts), epoch, nullptr);
                matching.step(scope_c);
                if (g == 0) sum_adv += cparts.discrepancy;
            }
        }
    }
    if (record != nullptr && steps > 0) {
        record->loss_bag = sum_bag / static_cast<double>(steps);
        record->loss_instance = sum_inst / static_cast<double>(steps);
        record->loss_adv = sum_adv / static_cast<double>(steps);
    }
    return bundle;
}

PseudoLabelRound run_step3(const ModelBundle& bundle, const TrainingData& data, const ScheduleConfig& schedule,
                           int epoch, std::uint64_t seed, const PipelineOptions& options) {
    schedule.validate();
    PseudoLabelRound round;
    round.tau = schedule_tau(epoch, schedule);

    std::vector<Instance> pos_instances = data.target_train.instances_where(1);
    std::vector<InstanceRef> refs;
    refs.reserve(pos_instances.size());
    for (const auto& inst : pos_instances) refs.push_back(inst.ref());

    Eigen::MatrixXd vx;
    std::vector<int> vy;
    labeled_rows(data.source_val, vx, vy);
    if (vx.rows() > 0) {
        const Eigen::MatrixXd vh = bundle.encoder.forward(vx);
        const Eigen::VectorXd va = bundle.bag_head.attention(vh);
        const Eigen::VectorXd vi = bundle.instance_probs(vh).col(1);
        round.confidence = confidence_scores(std::span<const double>(va.data(), static_cast<std::size_t>(va.size())),
                                             std::span<const double>(vi.data(), static_cast<std::size_t>(vi.size())), vy);
    } else {
        round.confidence = {0.5, 0.5, true, true};
    }
    if (pos_instances.empty()) return round;

    const Eigen::MatrixXd h = bundle.encoder.forward(stack_features(pos_instances));
    if (options.centroid_labels) {
        Eigen::MatrixXd sx;
        std::vector<int> sy;
        labeled_rows(data.source_train, sx, sy);
        const double fraction = static_cast<double>(round.tau) / static_cast<double>(pos_instances.size());
        round.assignments = centroid_pseudo_labels(bundle.encoder.forward(sx), sy, h, refs, fraction, epoch);
    } else {
        const Eigen::VectorXd a = bundle.bag_head.attention(h);
        const Eigen::MatrixXd pi = bundle.instance_probs(h);
        const Eigen::MatrixXd mix = mix_scores(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), pi,
                                               round.confidence, options.mix_rule);
        round.assignments = select_pseudo_labels(refs, mix, round.tau, schedule.a_p, schedule.a_n, epoch);
    }
    auto negatives = balance_negative_bag_sample(data.target_train, round.assignments.size(),
                                                 derive_seed(seed, 7000 + static_cast<std::uint64_t>(epoch)), epoch);
    round.assignments.insert(round.assignments.end(), negatives.begin(), negatives.end());
    return round;
}

namespace {

void fill_round_stats(EpochRecord& rec, const PseudoLabelRound& round, const TrainingMonitor& monitor) {
    rec.tau = round.tau;
    rec.c_b = round.confidence.c_b;
    rec.c_i = round.confidence.c_i;
    std::size_t checked_pos_bag = 0;
    std::size_t correct_pos_bag = 0;
    std::size_t checked = 0;
    std::size_t correct = 0;
    for (const auto& a : round.assignments) {
        if (a.from_negative_bag) ++rec.n_negative_bag;
        else if (a.assigned_label == 1) ++rec.n_positive;
        else ++rec.n_negative;
        if (!monitor.target_oracle) continue;
        const auto truth = monitor.target_oracle(a.ref);
        if (!truth) continue;
        ++checked;
        correct += *truth == a.assigned_label ? 1 : 0;
        if (!a.from_negative_bag) {
            ++checked_pos_bag;
            correct_pos_bag += *truth == a.assigned_label ? 1 : 0;
        }
    }
    if (checked > 0) rec.precision_all = static_cast<double>(correct) / static_cast<double>(checked);
    if (checked_pos_bag > 0)
        rec.precision_positive_bags = static_cast<double>(correct_pos_bag) / static_cast<double>(checked_pos_bag);
}

}  // namespace

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const ScheduleConfig& schedule,
                  const PipelineOptions& options, const TrainingMonitor& monitor) {
    cfg.validate();
    TrainResult result{ModelBundle::create(cfg.arch, cfg.seed), {}, {}, {}};
    result.bundle = run_step1(std::move(result.bundle), data, cfg, &result.history, monitor);
    result.step1_bundle = result.bundle;
    result.bundle = init_twin_heads(std::move(result.bundle), cfg.seed);

    // Each round trains one Step-2 epoch on the current pseudo-labels (none in
    // the first round), then relabels with the updated model.
    std::vector<PseudoLabelAssignment> current;
    for (int m = 0; m < cfg.epochs_step23; ++m) {
        EpochRecord rec;
        rec.epoch = cfg.epochs_step1 + m;
        rec.phase = "step23";
        try {
            result.bundle = run_step2_epoch(std::move(result.bundle), data, current, cfg, options, m, &rec);
        } catch (const TrainingDiverged&) {
            throw TrainingDiverged(rec.epoch, result.history);
        }
        if (options.use_pseudo_labels) {
            PseudoLabelRound round = run_step3(result.bundle, data, schedule, m, cfg.seed, options);
            fill_round_stats(rec, round, monitor);
            current = round.assignments;
            result.rounds.push_back(std::move(round));
        }
        finish_record(rec, result.bundle, monitor, &result.history);
    }
    return result;
}

ModelBundle train_instance_classifier(ModelBundle bundle, const Eigen::MatrixXd& x, const std::vector<int>& y, int epochs,
                                      const TrainConfig& cfg, TrainingHistory* history, const TrainingMonitor& monitor) {
    cfg.validate();
    if (!bundle.pretrain_head) throw std::logic_error("instance training needs an instance head");
    const Adam opt{cfg.lr};
    const auto params = concat({bundle.encoder.parameters(), bundle.pretrain_head->parameters()});
    const int offset = history != nullptr ? static_cast<int>(history->size()) : 0;
    for (int e = 0; e < epochs; ++e) {
        Rng rng(derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(offset + e)));
        Cursor cursor(y.size(), rng);
        const std::size_t steps = steps_for(y.size(), cfg.instances_per_step);
        EpochRecord rec;
        rec.epoch = offset + e;
        rec.phase = "instance";
        for (std::size_t s = 0; s < steps; ++s) {
            zero_grads(params);
            const auto idx = cursor.next(static_cast<std::size_t>(cfg.instances_per_step));
            const double li = backprop_instance_loss(bundle.encoder, *bundle.pretrain_head, gather_rows(x, idx),
                                                     gather_labels(y, idx), 1.0);
            check_finite(li, rec.epoch, history);
            opt.step(params);
            rec.loss_instance += li / static_cast<double>(steps);
        }
        finish_record(rec, bundle, monitor, history);
    }
    return bundle;
}

ModelBundle train_bag_classifier(ModelBundle bundle, const DomainDataset& bags, int epochs, const TrainConfig& cfg,
                                 TrainingHistory* history, const TrainingMonitor& monitor) {
    cfg.validate();
    const BagTable table(bags);
    const Adam opt{cfg.lr};
    const auto params = concat({bundle.encoder.parameters(), bundle.bag_head.parameters()});
    std::vector<Eigen::MatrixXd> feats;
    std::vector<int> labels;
    for (int e = 0; e < epochs; ++e) {
        Rng rng(derive_seed(cfg.seed, 300 + static_cast<std::uint64_t>(e)));
        Cursor cursor(table.size(), rng);
        const std::size_t steps = steps_for(table.size(), cfg.bags_per_step);
        EpochRecord rec;
        rec.epoch = e;
        rec.phase = "bag";
        for (std::size_t s = 0; s < steps; ++s) {
            zero_grads(params);
            gather_bags(table, cursor.next(static_cast<std::size_t>(cfg.bags_per_step)), feats, labels);
            const double lb = backprop_bag_loss(bundle, feats, labels, 1.0);
            check_finite(lb, e, history);
            opt.step(params);
            rec.loss_bag += lb / static_cast<double>(steps);
        }
        finish_record(rec, bundle, monitor, history);
    }
    return bundle;
}

ModelBundle train_discrepancy_only(ModelBundle bundle, const Eigen::MatrixXd& source_x, const std::vector<int>& source_y,
                                   const Eigen::MatrixXd& target_x, int epochs, const TrainConfig& cfg,
                                   TrainingHistory* history, const TrainingMonitor& monitor) {
    cfg.validate();
    if (!bundle.has_twin_heads()) bundle = init_twin_heads(std::move(bundle), cfg.seed);
    const Adam base{cfg.lr};
    const Adam matching{cfg.lr_matching};
    const LossWeights weights{1.0};
    const auto scope_a = objective_a_scope(bundle);
    const auto scope_b = objective_b_scope(bundle);
    const auto scope_c = objective_c_scope(bundle);
    Step2Batch batch;
    for (int e = 0; e < epochs; ++e) {
        Rng rng(derive_seed(cfg.seed, 400 + static_cast<std::uint64_t>(e)));
        Cursor src(source_y.size(), rng);
        Cursor tgt(static_cast<std::size_t>(target_x.rows()), rng);
        const std::size_t steps = steps_for(source_y.size(), cfg.instances_per_step);
        EpochRecord rec;
        rec.epoch = e;
        rec.phase = "discrepancy";
        for (std::size_t s = 0; s < steps; ++s) {
            const auto si = src.next(static_cast<std::size_t>(cfg.instances_per_step));
            batch.mix_x = gather_rows(source_x, si);
            batch.mix_y = gather_labels(source_y, si);
            batch.target_x = gather_rows(target_x, tgt.next(static_cast<std::size_t>(cfg.instances_per_step)));
            Step2Losses parts;
            check_finite(backprop_objective_a(bundle, batch, weights, &parts), e, history);
            base.step(scope_a);
            check_finite(backprop_objective_b(bundle, batch, weights), e, history);
            matching.step(scope_b);
            for (int g = 0; g < cfg.n_inner_generator_steps; ++g) {
                Step2Losses cparts;
                check_finite(backprop_objective_c(bundle, batch, weights, &cparts), e, history);
                matching.step(scope_c);
                if (g == 0) rec.loss_adv += cparts.discrepancy / static_cast<double>(steps);
            }
            rec.loss_instance += parts.instance / static_cast<double>(steps);
        }
        finish_record(rec, bundle, monitor, history);
    }
    return bundle;
}

}  // namespace milda
