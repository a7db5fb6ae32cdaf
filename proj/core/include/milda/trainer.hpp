#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "milda/losses.hpp"
#include "milda/model.hpp"
#include "milda/pseudo_label.hpp"
#include "milda/types.hpp"

namespace milda {

struct TrainConfig {
    int epochs_step1 = 50;
    int epochs_step23 = 100;
    double lr = 1e-4;
    double lr_matching = 1e-5;  // updates driven by the discrepancy term
    int bags_per_step = 8;
    int instances_per_step = 128;
    double lambda = 0.5;
    int n_inner_generator_steps = 4;
    std::uint64_t seed = 0;
    ArchitectureSpec arch;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Switches that turn the full pipeline into its ablations and baselines.
struct PipelineOptions {
    bool use_pseudo_labels = true;
    bool use_feature_matching = true;
    bool use_bag_loss = true;
    MixRule mix_rule = MixRule::confidence;
    bool centroid_labels = false;  // feature-space centroid labeling instead of p_M
};

/// What a training run is allowed to see. Target bags must come from
/// training_view(); source bags carry their instance labels.
struct TrainingData {
    DomainDataset source_train;
    DomainDataset source_val;
    DomainDataset target_train;
};

/// Optional observers. Neither influences training; they exist for logging.
struct TrainingMonitor {
    /// Oracle lookup for target instances, used only to report pseudo-label precision.
    std::function<std::optional<int>(const InstanceRef&)> target_oracle;
    /// Held-out evaluation (e.g. target-test PR-AUC) after each epoch.
    std::function<std::optional<double>(const ModelBundle&)> evaluate;
};

struct EpochRecord {
    int epoch = 0;  // global index across both phases
    std::string phase;
    double loss_bag = 0.0;
    double loss_instance = 0.0;
    double loss_adv = 0.0;
    int tau = 0;
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
    std::size_t n_negative_bag = 0;
    double c_b = 0.0;
    double c_i = 0.0;
    std::optional<double> precision_positive_bags;  // pseudo-labels drawn from positive bags
    std::optional<double> precision_all;
    std::optional<double> eval_pr_auc;
};

struct TrainingHistory {
    std::vector<EpochRecord> records;

    void append(EpochRecord r) { records.push_back(std::move(r)); }
    std::size_t size() const { return records.size(); }
    std::string to_csv() const;
};

/// Raised when a loss turns non-finite. Carries the history up to the failure.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch, TrainingHistory history);
    int epoch() const { return epoch_; }
    const TrainingHistory& history() const { return history_; }

private:
    int epoch_;
    TrainingHistory history_;
};

struct PseudoLabelRound {
    std::vector<PseudoLabelAssignment> assignments;
    ConfidencePair confidence;
    int tau = 0;
};

struct TrainResult {
    ModelBundle bundle;
    ModelBundle step1_bundle;
    TrainingHistory history;
    std::vector<PseudoLabelRound> rounds;  // one per Step-3 call
};

/// Number of instances in target positive bags (n_tpi).
std::size_t positive_bag_instance_count(const DomainDataset& target);

/// Step 1: F_B on target bag labels and F_IP on source instance labels, with
/// a shared encoder. Zero epochs returns the bundle unchanged.
ModelBundle run_step1(ModelBundle bundle, const TrainingData& data, const TrainConfig& cfg,
                      TrainingHistory* history = nullptr, const TrainingMonitor& monitor = {});

/// Replaces F_IP by two freshly initialized heads F_I1, F_I2.
ModelBundle init_twin_heads(ModelBundle bundle, std::uint64_t seed);

/// One epoch of the three alternating updates per mini-batch.
ModelBundle run_step2_epoch(ModelBundle bundle, const TrainingData& data,
                            const std::vector<PseudoLabelAssignment>& pseudo_labels, const TrainConfig& cfg,
                            const PipelineOptions& options, int epoch, EpochRecord* record = nullptr);

/// Step 3: with parameters frozen, scores target positive-bag instances,
/// computes (c_B, c_I) on source validation and selects pseudo-labels, then
/// appends a balanced negative-bag sample.
PseudoLabelRound run_step3(const ModelBundle& bundle, const TrainingData& data, const ScheduleConfig& schedule,
                           int epoch, std::uint64_t seed, const PipelineOptions& options = {});

/// Full pipeline: Step 1, twin-head init, then epochs_step23 rounds of
/// (Step-2 epoch, Step 3). Round m trains on the labels selected in round
/// m - 1 (none in round 0); its history record carries the labels selected
/// with tau(m).
TrainResult train(const TrainingData& data, const TrainConfig& cfg, const ScheduleConfig& schedule,
                  const PipelineOptions& options = {}, const TrainingMonitor& monitor = {});

// Baseline trainers --------------------------------------------------------

/// G + one instance head on labeled rows for `epochs` epochs (F_IP is used
/// as that head).
ModelBundle train_instance_classifier(ModelBundle bundle, const Eigen::MatrixXd& x, const std::vector<int>& y,
                                      int epochs, const TrainConfig& cfg, TrainingHistory* history = nullptr,
                                      const TrainingMonitor& monitor = {});

/// G + F_B on bag labels only.
ModelBundle train_bag_classifier(ModelBundle bundle, const DomainDataset& bags, int epochs, const TrainConfig& cfg,
                                 TrainingHistory* history = nullptr, const TrainingMonitor& monitor = {});

/// Twin-head discrepancy training without bag labels: source rows supervise
/// both heads, target rows drive the discrepancy updates.
ModelBundle train_discrepancy_only(ModelBundle bundle, const Eigen::MatrixXd& source_x, const std::vector<int>& source_y,
                                   const Eigen::MatrixXd& target_x, int epochs, const TrainConfig& cfg,
                                   TrainingHistory* history = nullptr, const TrainingMonitor& monitor = {});

/// Labeled rows of a dataset (instances with oracle labels).
void labeled_rows(const DomainDataset& ds, Eigen::MatrixXd& x, std::vector<int>& y);

}  // namespace milda
