#include "milda/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace milda {

std::string_view to_string(Domain d) {
    return d == Domain::source ? "source" : "target";
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

Domain parse_domain(std::string_view s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw std::invalid_argument("unknown domain: " + std::string(s));
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + std::string(s));
}

Bag::Bag(std::int64_t id, std::vector<Instance> instances, int bag_label, Domain domain)
    : id_(id), instances_(std::move(instances)), label_(bag_label), domain_(domain) {
    if (instances_.empty()) throw std::invalid_argument("bag must contain at least one instance");
    if (label_ != 0 && label_ != 1) throw std::invalid_argument("bag label must be 0 or 1");
    const auto dim = instances_.front().features.size();
    for (std::size_t j = 0; j < instances_.size(); ++j) {
        auto& inst = instances_[j];
        if (inst.domain != domain_) throw std::invalid_argument("instance domain differs from bag domain");
        if (inst.features.size() != dim) throw std::invalid_argument("instance feature dimension mismatch");
        if (inst.oracle_label && *inst.oracle_label != 0 && *inst.oracle_label != 1)
            throw std::invalid_argument("instance label must be 0 or 1");
        inst.bag_id = id_;
        inst.index_in_bag = static_cast<std::int64_t>(j);
    }
}

Eigen::MatrixXd Bag::feature_matrix() const { return stack_features(instances_); }

bool Bag::fully_labeled() const {
    return std::all_of(instances_.begin(), instances_.end(),
                       [](const Instance& i) { return i.oracle_label.has_value(); });
}

Bag Bag::without_oracle_labels() const {
    auto copy = instances_;
    for (auto& inst : copy) inst.oracle_label.reset();
    return Bag(id_, std::move(copy), label_, domain_);
}

DomainDataset::DomainDataset(std::vector<Bag> bags, Domain domain, Split split)
    : bags_(std::move(bags)), domain_(domain), split_(split) {
    if (!bags_.empty()) dim_ = static_cast<std::size_t>(bags_.front()[0].features.size());
    for (const auto& b : bags_) {
        if (static_cast<std::size_t>(b[0].features.size()) != dim_)
            throw std::invalid_argument("feature dimension differs across bags");
    }
}

std::vector<std::size_t> DomainDataset::instance_counts() const {
    std::vector<std::size_t> out;
    out.reserve(bags_.size());
    for (const auto& b : bags_) out.push_back(b.size());
    return out;
}

std::size_t DomainDataset::instance_count() const {
    std::size_t n = 0;
    for (const auto& b : bags_) n += b.size();
    return n;
}

double DomainDataset::oracle_coverage() const {
    std::size_t labeled = 0;
    std::size_t total = 0;
    for (const auto& b : bags_) {
        for (const auto& inst : b.instances()) {
            ++total;
            if (inst.oracle_label) ++labeled;
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(labeled) / static_cast<double>(total);
}

std::vector<Instance> DomainDataset::all_instances() const {
    std::vector<Instance> out;
    out.reserve(instance_count());
    for (const auto& b : bags_) out.insert(out.end(), b.instances().begin(), b.instances().end());
    return out;
}

std::vector<Instance> DomainDataset::instances_where(int bag_label) const {
    std::vector<Instance> out;
    for (const auto& b : bags_) {
        if (b.label() == bag_label) out.insert(out.end(), b.instances().begin(), b.instances().end());
    }
    return out;
}

const Bag* DomainDataset::find_bag(std::int64_t id) const {
    // Bags are usually stored with ids in order; try the direct slot first.
    if (id >= 0 && static_cast<std::size_t>(id) < bags_.size() && bags_[static_cast<std::size_t>(id)].id() == id)
        return &bags_[static_cast<std::size_t>(id)];
    for (const auto& b : bags_) {
        if (b.id() == id) return &b;
    }
    return nullptr;
}

const Instance& DomainDataset::at(const InstanceRef& ref) const {
    const Bag* bag = find_bag(ref.bag_id);
    if (bag == nullptr || ref.index_in_bag < 0 || static_cast<std::size_t>(ref.index_in_bag) >= bag->size())
        throw std::out_of_range("instance reference not in dataset");
    return (*bag)[static_cast<std::size_t>(ref.index_in_bag)];
}

std::vector<BagViolation> validate_bag_consistency(const DomainDataset& dataset) {
    std::vector<BagViolation> out;
    for (const auto& bag : dataset.bags()) {
        if (!bag.fully_labeled()) {
            out.push_back({bag.id(), ViolationKind::unverifiable, bag.label(), -1});
            continue;
        }
        int max_label = 0;
        for (const auto& inst : bag.instances()) max_label = std::max(max_label, *inst.oracle_label);
        if (max_label != bag.label()) out.push_back({bag.id(), ViolationKind::label_mismatch, bag.label(), max_label});
    }
    return out;
}

DomainDataset training_view(const DomainDataset& dataset) {
    std::vector<Bag> bags;
    bags.reserve(dataset.bag_count());
    for (const auto& bag : dataset.bags())
        bags.push_back(bag.domain() == Domain::target ? bag.without_oracle_labels() : bag);
    return DomainDataset(std::move(bags), dataset.domain(), dataset.split());
}

Eigen::MatrixXd stack_features(const std::vector<Instance>& instances) {
    if (instances.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(instances.size()), instances.front().features.size());
    for (std::size_t i = 0; i < instances.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = instances[i].features.transpose();
    return m;
}

}  // namespace milda
