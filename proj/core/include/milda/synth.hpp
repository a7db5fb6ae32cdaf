#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "milda/types.hpp"

namespace milda {

/// One Gaussian mixture component.
struct MixtureComponent {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    double weight = 1.0;
    /// When assembling target slides, draw this component only inside positive slides.
    bool positive_slides_only = false;
};

struct ClassGeometry {
    std::vector<MixtureComponent> negative;
    std::vector<MixtureComponent> positive;
};

/// Target features are  scale * R(angle) * x + translation,  with the rotation
/// acting in the plane of the first two coordinates.
struct DomainShift {
    double rotation_deg = 0.0;
    Eigen::VectorXd translation;  // empty means zero
    double scale = 1.0;

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

struct GeneratorConfig {
    std::uint64_t seed = 0;
    int dim = 2;
    DomainShift domain_shift;
    ClassGeometry class_geometry;
    double positive_rate = 0.3;
    int n_source_instances = 1000;
    int n_target_instances = 1000;

    /// Throws std::invalid_argument on a degenerate or inconsistent config.
    void validate() const;
};

enum class BagMode { random, clustered };

struct BagBuildConfig {
    BagMode mode = BagMode::random;
    int n_bags = 100;          // random mode; split evenly when balanced
    bool balanced = true;
    double bag_size_mean = 10.0;
    double bag_size_std = 1.4142135623730951;  // variance 2
    double positives_per_posbag_mean = 1.0;
    double positives_per_posbag_std = 1.0;
    int min_bag_size = 2;
    int k_clusters = 10;
    int per_cluster_take = 3;
    int fixed_bag_size = 30;

    void validate() const;
};

struct InstanceGroup {
    std::vector<Instance> instances;
    int group_label = 0;  // 1 when the group holds at least one positive
};

/// A feature map and a positive score used to assemble clustered bags.
struct InstanceScorer {
    std::function<Eigen::MatrixXd(const std::vector<Instance>&)> features;
    std::function<Eigen::VectorXd(const std::vector<Instance>&)> positive_scores;
};

struct GeneratedInstances {
    std::vector<Instance> source;
    std::vector<Instance> target;
};

/// Draws labeled source and target pools from the same mixture; target
/// features are passed through the configured domain shift.
GeneratedInstances generate_instances(const GeneratorConfig& config);

/// Draws each instance's class, then a component of that class.
std::vector<Instance> sample_population(const GeneratorConfig& config, Domain domain, int n, std::uint64_t seed);

/// Draws n instances of class `label` using only the listed component indices
/// of that class (all of them when empty), reweighted among themselves.
std::vector<Instance> sample_class(const GeneratorConfig& config, Domain domain, int label, int n, std::uint64_t seed,
                                   const std::vector<std::size_t>& components = {});

/// Random bags (mean/std bag size, positives per positive bag).
/// Throws std::runtime_error on pool exhaustion, reporting how many bags were built.
std::vector<Bag> build_bags_random(const std::vector<Instance>& instances, const BagBuildConfig& config,
                                   std::uint64_t seed, std::int64_t first_bag_id = 0);

/// Positive groups: K-means on scorer features, top `per_cluster_take` by
/// positive score from each cluster, one bag of `fixed_bag_size` per group.
/// Negative groups: as many random bags of `fixed_bag_size` as fit.
/// Groups smaller than `fixed_bag_size` are skipped.
std::vector<Bag> build_bags_clustered(const std::vector<InstanceGroup>& groups, const InstanceScorer& scorer,
                                      const BagBuildConfig& config, std::uint64_t seed,
                                      std::int64_t first_bag_id = 0);

/// Fraction of positive bags that truly contain a positive instance.
/// Throws std::domain_error when there are no positive bags.
double measure_bag_label_confidence(const std::vector<Bag>& bags);

struct KMeansResult {
    Eigen::MatrixXd centroids;  // k x d
    std::vector<int> assignment;
    int iterations = 0;
};

/// Lloyd iterations with k-means++ seeding. Empty clusters are re-seeded from
/// the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iterations = 100,
                    double tolerance = 1e-6);

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BagBuildConfig& c);
BagBuildConfig bag_config_from_json(const nlohmann::json& j);

}  // namespace milda
