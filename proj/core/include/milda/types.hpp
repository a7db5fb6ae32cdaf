#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace milda {

enum class Domain : std::uint8_t { source = 0, target = 1 };
enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

std::string_view to_string(Domain d);
std::string_view to_string(Split s);
Domain parse_domain(std::string_view s);
Split parse_split(std::string_view s);

/// A bag is addressed by id; instances inside it by their position.
/// Pseudo-labels and attention weights are joined back through this pair.
struct InstanceRef {
    std::int64_t bag_id = 0;
    std::int64_t index_in_bag = 0;

    friend auto operator<=>(const InstanceRef&, const InstanceRef&) = default;
};

struct Instance {
    Eigen::VectorXd features;
    std::optional<int> oracle_label;  // 0 or 1
    Domain domain = Domain::source;
    std::int64_t bag_id = 0;
    std::int64_t index_in_bag = 0;

    InstanceRef ref() const { return {bag_id, index_in_bag}; }
};

/// Ordered, non-empty set of instances with one binary label.
/// Construction validates size, domain agreement and the membership fields.
class Bag {
public:
    Bag(std::int64_t id, std::vector<Instance> instances, int bag_label, Domain domain);

    std::int64_t id() const { return id_; }
    int label() const { return label_; }
    Domain domain() const { return domain_; }
    std::size_t size() const { return instances_.size(); }
    const std::vector<Instance>& instances() const { return instances_; }
    const Instance& operator[](std::size_t i) const { return instances_[i]; }

    /// Features stacked row-wise (K x D).
    Eigen::MatrixXd feature_matrix() const;

    /// True iff every member carries an oracle label.
    bool fully_labeled() const;

    Bag without_oracle_labels() const;

private:
    std::int64_t id_;
    std::vector<Instance> instances_;
    int label_;
    Domain domain_;
};

/// Bags of one domain and split. Counts are derived from the bag list.
class DomainDataset {
public:
    DomainDataset() = default;
    DomainDataset(std::vector<Bag> bags, Domain domain, Split split);

    const std::vector<Bag>& bags() const { return bags_; }
    Domain domain() const { return domain_; }
    Split split() const { return split_; }

    std::size_t bag_count() const { return bags_.size(); }
    std::vector<std::size_t> instance_counts() const;
    std::size_t instance_count() const;
    std::size_t feature_dim() const { return dim_; }

    /// Fraction of instances carrying an oracle label (1 for an empty set).
    double oracle_coverage() const;

    /// Flat copy of every instance, bag order then in-bag order.
    std::vector<Instance> all_instances() const;
    std::vector<Instance> instances_where(int bag_label) const;

    const Bag* find_bag(std::int64_t id) const;
    const Instance& at(const InstanceRef& ref) const;

private:
    std::vector<Bag> bags_;
    Domain domain_ = Domain::source;
    Split split_ = Split::train;
    std::size_t dim_ = 0;
};

struct PseudoLabelAssignment {
    InstanceRef ref;
    int assigned_label = 0;
    double mix_score = 0.0;  // score backing the label, in [0,1]
    int epoch_assigned = 0;
    bool from_negative_bag = false;
};

enum class ViolationKind { label_mismatch, unverifiable };

struct BagViolation {
    std::int64_t bag_id = 0;
    ViolationKind kind = ViolationKind::label_mismatch;
    int bag_label = 0;
    int max_instance_label = -1;
};

/// Checks Y == max_j y_j for every bag. Bags with missing oracle labels are
/// reported as unverifiable instead of silently passing.
std::vector<BagViolation> validate_bag_consistency(const DomainDataset& dataset);

/// Copy of the dataset with target oracle labels stripped. Source data is
/// returned unchanged.
DomainDataset training_view(const DomainDataset& dataset);

/// Stack features of a list of instances row-wise.
Eigen::MatrixXd stack_features(const std::vector<Instance>& instances);

}  // namespace milda
