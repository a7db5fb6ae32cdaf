#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "milda/metrics.hpp"
#include "milda/synth.hpp"
#include "milda/trainer.hpp"

namespace milda {

/// How target slides are assembled before bag construction. A positive slide
/// holds a fraction of positives; negative slides hold negatives only.
/// Mixture components flagged `positive_slides_only` appear only in positive
/// slides, making up `context_fraction` of their negatives.
struct SlideConfig {
    int n_positive_slides = 60;
    int n_negative_slides = 20;
    int slide_size = 90;
    double positive_fraction = 0.3;
    double context_fraction = 0.25;
    double test_fraction = 0.3;

    void validate() const;
};

/// Which N_min/N_max rule to derive from n_tpi, or explicit values.
struct ScheduleSpec {
    std::string preset = "pathology";  // "pathology", "digit" or "explicit"
    ScheduleConfig explicit_values;
    std::optional<int> a_p;
    std::optional<int> a_n;
    std::optional<int> M;

    ScheduleConfig resolve(std::size_t n_tpi) const;
};

struct ExperimentConfig {
    GeneratorConfig generator;
    BagBuildConfig source_bags;
    int n_source_validation = 600;
    SlideConfig target_slides;
    BagBuildConfig target_bags;
    TrainConfig train;
    ScheduleSpec schedule;
    int scorer_epochs = 50;  // source classifier that ranks instances for clustered bags
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int jobs = 1;

    void validate() const;
};

/// The built-in desk-scale benchmark.
ExperimentConfig default_experiment_config();
/// Layers `j` (sections generator, source_bags, target_slides, target_bags,
/// train, schedule, methods, seeds, jobs) over `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = default_experiment_config());
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Raised for malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentData {
    DomainDataset source_train;
    DomainDataset source_val;
    DomainDataset target_train;  // with oracle labels; use training() for learners
    DomainDataset target_test;
    double bag_label_confidence = 0.0;  // over clustered positive bags, train and test
    std::size_t skipped_slides = 0;
    std::string dataset_hash;

    TrainingData training() const;
};

/// Generates every dataset of one experiment from config.generator.seed.
ExperimentData build_experiment_data(const ExperimentConfig& config);

/// Instance scorer backed by a source-trained classifier: encoder features
/// and F_IP positive probabilities.
InstanceScorer source_scorer(const ModelBundle& bundle);

// Methods -------------------------------------------------------------------

const std::vector<std::string>& comparison_methods();
const std::vector<std::string>& ablation_methods();
bool is_known_method(const std::string& name);

struct MethodResult {
    std::string method;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::optional<double> pr_auc;
    double seconds = 0.0;
    std::string dataset_hash;
    std::string error;  // empty on success
    TrainingHistory history;
    std::optional<ModelBundle> step1_bundle;
    std::optional<ModelBundle> bundle;
    std::vector<double> test_scores;  // target-test positive scores, bag order

    bool ok() const { return error.empty(); }
};

/// Observes every read of a target oracle label made by the harness on
/// behalf of training code (audit and evaluation reads go elsewhere).
using OracleAccessCounter = std::function<void(const InstanceRef&)>;

struct RunOptions {
    bool keep_models = false;
    bool track_per_epoch_pr_auc = true;
    OracleAccessCounter on_training_oracle_read;
};

/// Trains one method on one seed and evaluates it on the target test set.
/// Training errors are captured in MethodResult::error.
MethodResult run_method(const std::string& method, const ExperimentData& data, const ExperimentConfig& config,
                        std::uint64_t seed, const RunOptions& options = {});

/// Positive scores of a trained model on instances, using the scoring rule
/// of the given method.
std::vector<double> method_scores(const std::string& method, const ModelBundle& bundle, const Eigen::MatrixXd& x);

// Reports -------------------------------------------------------------------

struct SummaryRow {
    std::string method;
    std::size_t runs = 0;
    MeanStd accuracy;
    MeanStd pr_auc;
};

struct ExperimentReport {
    std::vector<MethodResult> results;  // method-major, then seed order
    std::vector<SummaryRow> summary;
    std::string dataset_hash;
    double bag_label_confidence = 0.0;

    bool all_ok() const;
    std::optional<SummaryRow> row(const std::string& method) const;
};

/// Runs methods x seeds (jobs in parallel when config.jobs > 1).
ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const std::vector<std::string>& methods, const RunOptions& options = {});

std::vector<SummaryRow> summarize(const std::vector<MethodResult>& results);
/// method,seed,accuracy,pr_auc,dataset_hash,status
std::string metrics_csv(const std::vector<MethodResult>& results);
std::vector<MethodResult> parse_metrics_csv(const std::string& text);
/// Plain-text table with mean +- std per method, values in percent.
std::string summary_table(const std::vector<SummaryRow>& rows, const std::string& title);

/// Writes metrics.csv, summary.txt, per-run histories, plots and a manifest
/// into `out`. Returns the files written.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& out, const ExperimentConfig& config,
                                                const ExperimentData& data, const ExperimentReport& report,
                                                const std::string& title);

/// Re-renders summary and metric plots from an existing metrics.csv.
std::vector<std::filesystem::path> rerender_report(const std::filesystem::path& dir);

}  // namespace milda
