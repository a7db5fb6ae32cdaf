#include "milda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "milda/random.hpp"

namespace milda {

Eigen::VectorXd DomainShift::apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = x;
    if (y.size() >= 2 && rotation_deg != 0.0) {
        const double t = rotation_deg * std::numbers::pi / 180.0;
        const double c = std::cos(t);
        const double s = std::sin(t);
        y[0] = c * x[0] - s * x[1];
        y[1] = s * x[0] + c * x[1];
    }
    y *= scale;
    if (translation.size() > 0) y += translation;
    return y;
}

namespace {

void validate_components(const std::vector<MixtureComponent>& comps, int dim, const char* what) {
    if (comps.empty()) throw std::invalid_argument(std::string("class geometry has no ") + what + " components");
    for (const auto& c : comps) {
        if (c.mean.size() != dim || c.covariance.rows() != dim || c.covariance.cols() != dim)
            throw std::invalid_argument(std::string(what) + " component dimension mismatch");
        if (!(c.weight > 0.0)) throw std::invalid_argument(std::string(what) + " component weight must be > 0");
        Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
        if (llt.info() != Eigen::Success || !c.covariance.isApprox(c.covariance.transpose()))
            throw std::invalid_argument(std::string("degenerate covariance in ") + what + " component");
    }
}

struct Sampler {
    std::vector<MixtureComponent> comps;
    std::vector<Eigen::MatrixXd> chol;
    std::discrete_distribution<std::size_t> pick;

    explicit Sampler(const std::vector<MixtureComponent>& c) : comps(c) {
        std::vector<double> w;
        for (const auto& m : comps) {
            chol.push_back(Eigen::LLT<Eigen::MatrixXd>(m.covariance).matrixL());
            w.push_back(m.weight);
        }
        pick = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    }

    Eigen::VectorXd draw(Rng& rng) {
        const auto k = pick(rng);
        std::normal_distribution<double> n01(0.0, 1.0);
        Eigen::VectorXd z(comps[k].mean.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n01(rng);
        return comps[k].mean + chol[k] * z;
    }
};

}  // namespace

void GeneratorConfig::validate() const {
    if (dim < 1) throw std::invalid_argument("feature dimension must be >= 1");
    if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw std::invalid_argument("positive_rate must be in (0,1)");
    if (n_source_instances < 0 || n_target_instances < 0) throw std::invalid_argument("instance counts must be >= 0");
    if (domain_shift.translation.size() != 0 && domain_shift.translation.size() != dim)
        throw std::invalid_argument("translation dimension mismatch");
    if (!(domain_shift.scale > 0.0)) throw std::invalid_argument("domain shift scale must be > 0");
    validate_components(class_geometry.negative, dim, "negative");
    validate_components(class_geometry.positive, dim, "positive");
}

void BagBuildConfig::validate() const {
    if (mode == BagMode::clustered) {
        if (k_clusters < 1 || per_cluster_take < 1) throw std::invalid_argument("clustered mode needs k, take >= 1");
        if (k_clusters * per_cluster_take != fixed_bag_size)
            throw std::invalid_argument("clustered mode requires k_clusters * per_cluster_take == fixed_bag_size");
    } else {
        if (n_bags < 0) throw std::invalid_argument("n_bags must be >= 0");
        if (min_bag_size < 1) throw std::invalid_argument("min_bag_size must be >= 1");
        if (bag_size_std < 0.0 || positives_per_posbag_std < 0.0) throw std::invalid_argument("std must be >= 0");
    }
}

std::vector<Instance> sample_population(const GeneratorConfig& config, Domain domain, int n, std::uint64_t seed) {
    Rng rng(seed);
    Sampler neg(config.class_geometry.negative);
    Sampler pos(config.class_geometry.positive);
    std::bernoulli_distribution is_pos(config.positive_rate);
    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Instance inst;
        const int label = is_pos(rng) ? 1 : 0;
        inst.features = label == 1 ? pos.draw(rng) : neg.draw(rng);
        if (domain == Domain::target) inst.features = config.domain_shift.apply(inst.features);
        inst.oracle_label = label;
        inst.domain = domain;
        inst.bag_id = -1;
        inst.index_in_bag = i;
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<Instance> sample_class(const GeneratorConfig& config, Domain domain, int label, int n, std::uint64_t seed,
                                   const std::vector<std::size_t>& components) {
    if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
    const auto& all = label == 1 ? config.class_geometry.positive : config.class_geometry.negative;
    std::vector<MixtureComponent> chosen;
    if (components.empty()) {
        chosen = all;
    } else {
        for (const auto k : components) {
            if (k >= all.size()) throw std::out_of_range("component index out of range");
            chosen.push_back(all[k]);
        }
    }
    if (chosen.empty()) throw std::invalid_argument("no mixture components to sample from");
    Rng rng(seed);
    Sampler sampler(chosen);
    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(std::max(n, 0)));
    for (int i = 0; i < n; ++i) {
        Instance inst;
        inst.features = sampler.draw(rng);
        if (domain == Domain::target) inst.features = config.domain_shift.apply(inst.features);
        inst.oracle_label = label;
        inst.domain = domain;
        inst.bag_id = -1;
        inst.index_in_bag = i;
        out.push_back(std::move(inst));
    }
    return out;
}

GeneratedInstances generate_instances(const GeneratorConfig& config) {
    config.validate();
    return {sample_population(config, Domain::source, config.n_source_instances, derive_seed(config.seed, 0)),
            sample_population(config, Domain::target, config.n_target_instances, derive_seed(config.seed, 1))};
}

std::vector<Bag> build_bags_random(const std::vector<Instance>& instances, const BagBuildConfig& config,
                                   std::uint64_t seed, std::int64_t first_bag_id) {
    config.validate();
    Rng rng(seed);
    std::vector<std::size_t> pos_pool;
    std::vector<std::size_t> neg_pool;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (!instances[i].oracle_label) throw std::invalid_argument("random bag building needs labeled instances");
        (*instances[i].oracle_label == 1 ? pos_pool : neg_pool).push_back(i);
    }
    shuffle_in_place(pos_pool, rng);
    shuffle_in_place(neg_pool, rng);

    std::normal_distribution<double> size_draw(config.bag_size_mean, config.bag_size_std);
    std::normal_distribution<double> pos_draw(config.positives_per_posbag_mean, config.positives_per_posbag_std);
    std::bernoulli_distribution coin(0.5);

    std::vector<Bag> bags;
    std::size_t next_pos = 0;
    std::size_t next_neg = 0;
    for (int b = 0; b < config.n_bags; ++b) {
        const int bag_label = config.balanced ? (b % 2 == 0 ? 1 : 0) : (coin(rng) ? 1 : 0);
        const int size = std::max<int>(config.min_bag_size, static_cast<int>(round_half_away(size_draw(rng))));
        int n_pos = 0;
        if (bag_label == 1)
            n_pos = std::clamp<int>(static_cast<int>(round_half_away(pos_draw(rng))), 1, size);
        const auto n_neg = static_cast<std::size_t>(size - n_pos);
        if (next_pos + static_cast<std::size_t>(n_pos) > pos_pool.size() || next_neg + n_neg > neg_pool.size()) {
            throw std::runtime_error("instance pool exhausted after building " + std::to_string(bags.size()) +
                                     " of " + std::to_string(config.n_bags) + " bags");
        }
        std::vector<Instance> members;
        members.reserve(static_cast<std::size_t>(size));
        for (int k = 0; k < n_pos; ++k) members.push_back(instances[pos_pool[next_pos++]]);
        for (std::size_t k = 0; k < n_neg; ++k) members.push_back(instances[neg_pool[next_neg++]]);
        shuffle_in_place(members, rng);
        bags.emplace_back(first_bag_id + b, std::move(members), bag_label, instances.front().domain);
    }
    return bags;
}

std::vector<Bag> build_bags_clustered(const std::vector<InstanceGroup>& groups, const InstanceScorer& scorer,
                                      const BagBuildConfig& config, std::uint64_t seed,
                                      std::int64_t first_bag_id) {
    config.validate();
    if (config.mode != BagMode::clustered) throw std::invalid_argument("build_bags_clustered needs clustered mode");
    const auto bag_size = static_cast<std::size_t>(config.fixed_bag_size);
    Rng rng(seed);
    std::vector<Bag> bags;
    std::int64_t next_id = first_bag_id;

    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& group = groups[g];
        if (group.instances.size() < bag_size) {
            std::clog << "[synth] skipping group " << g << ": " << group.instances.size() << " instances < bag size "
                      << bag_size << "\n";
            continue;
        }
        const Domain domain = group.instances.front().domain;
        if (group.group_label == 0) {
            auto order = permutation(group.instances.size(), rng);
            for (std::size_t start = 0; start + bag_size <= order.size(); start += bag_size) {
                std::vector<Instance> members;
                for (std::size_t k = 0; k < bag_size; ++k) members.push_back(group.instances[order[start + k]]);
                bags.emplace_back(next_id++, std::move(members), 0, domain);
            }
            continue;
        }

        const Eigen::MatrixXd feats = scorer.features(group.instances);
        const Eigen::VectorXd scores = scorer.positive_scores(group.instances);
        const auto km = kmeans(feats, config.k_clusters, derive_seed(seed, g));

        // Rank every instance by score (descending, index as tie-break).
        std::vector<std::size_t> ranked(group.instances.size());
        for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i] = i;
        std::stable_sort(ranked.begin(), ranked.end(),
                         [&](std::size_t a, std::size_t b) { return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)]; });

        std::vector<int> taken_per_cluster(static_cast<std::size_t>(config.k_clusters), 0);
        std::vector<bool> chosen(group.instances.size(), false);
        std::vector<std::size_t> picked;
        for (const auto i : ranked) {
            auto& t = taken_per_cluster[static_cast<std::size_t>(km.assignment[i])];
            if (t < config.per_cluster_take) {
                ++t;
                chosen[i] = true;
                picked.push_back(i);
            }
        }
        // Clusters with fewer members than `take` leave slots; fill them with
        // the best remaining instances of the group.
        for (const auto i : ranked) {
            if (picked.size() >= bag_size) break;
            if (!chosen[i]) {
                chosen[i] = true;
                picked.push_back(i);
            }
        }
        std::sort(picked.begin(), picked.end());
        std::vector<Instance> members;
        for (const auto i : picked) members.push_back(group.instances[i]);
        bags.emplace_back(next_id++, std::move(members), 1, domain);
    }
    return bags;
}

double measure_bag_label_confidence(const std::vector<Bag>& bags) {
    std::size_t positive_bags = 0;
    std::size_t confirmed = 0;
    for (const auto& bag : bags) {
        if (bag.label() != 1) continue;
        ++positive_bags;
        for (const auto& inst : bag.instances()) {
            if (!inst.oracle_label) throw std::invalid_argument("bag-label confidence needs oracle labels");
            if (*inst.oracle_label == 1) {
                ++confirmed;
                break;
            }
        }
    }
    if (positive_bags == 0) throw std::domain_error("bag-label confidence undefined: no positive bags");
    return static_cast<double>(confirmed) / static_cast<double>(positive_bags);
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iterations, double tolerance) {
    const Eigen::Index n = points.rows();
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (n < k) throw std::invalid_argument("k-means needs at least k points");
    Rng rng(seed);
    KMeansResult res;
    res.centroids.resize(k, points.cols());
    res.assignment.assign(static_cast<std::size_t>(n), 0);

    // k-means++ seeding
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    res.centroids.row(0) = points.row(first(rng));
    Eigen::VectorXd d2 = (points.rowwise() - res.centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        Eigen::Index next = 0;
        const double total = d2.sum();
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (next = 0; next < n - 1; ++next) {
                r -= d2[next];
                if (r <= 0.0) break;
            }
        } else {
            next = first(rng);
        }
        res.centroids.row(c) = points.row(next);
        d2 = d2.cwiseMin((points.rowwise() - res.centroids.row(c)).rowwise().squaredNorm());
    }

    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it + 1;
        Eigen::VectorXd dist(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            dist[i] = (res.centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
            res.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
        }
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = res.assignment[static_cast<std::size_t>(i)];
            next.row(c) += points.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) /= counts[static_cast<std::size_t>(c)];
                continue;
            }
            Eigen::Index far = 0;
            dist.maxCoeff(&far);
            next.row(c) = points.row(far);
            dist[far] = 0.0;
            const int old = res.assignment[static_cast<std::size_t>(far)];
            --counts[static_cast<std::size_t>(old)];
            res.assignment[static_cast<std::size_t>(far)] = c;
            counts[static_cast<std::size_t>(c)] = 1;
        }
        const double moved = (next - res.centroids).rowwise().norm().maxCoeff();
        res.centroids = next;
        if (moved <= tolerance) break;
    }
    // Final assignment against the returned centroids.
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        (res.centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
        res.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return res;
}

// ---- JSON --------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json comps_json(const std::vector<MixtureComponent>& comps) {
    auto arr = nlohmann::json::array();
    for (const auto& c : comps) {
        nlohmann::json cov = nlohmann::json::array();
        for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) cov.push_back(vec_json(c.covariance.row(r).transpose()));
        nlohmann::json e{{"mean", vec_json(c.mean)}, {"cov", cov}, {"weight", c.weight}};
        if (c.positive_slides_only) e["positive_slides_only"] = true;
        arr.push_back(std::move(e));
    }
    return arr;
}

std::vector<MixtureComponent> comps_from(const nlohmann::json& j) {
    std::vector<MixtureComponent> out;
    for (const auto& e : j) {
        MixtureComponent c;
        c.mean = vec_from(e.at("mean"));
        const auto d = c.mean.size();
        if (e.contains("cov")) {
            c.covariance.resize(d, d);
            const auto& rows = e.at("cov");
            if (static_cast<Eigen::Index>(rows.size()) != d) throw std::invalid_argument("cov row count mismatch");
            for (Eigen::Index r = 0; r < d; ++r) {
                const auto row = vec_from(rows[static_cast<std::size_t>(r)]);
                if (row.size() != d) throw std::invalid_argument("cov column count mismatch");
                c.covariance.row(r) = row.transpose();
            }
        } else {
            // "std": scalar or per-axis vector
            const auto& s = e.at("std");
            Eigen::VectorXd sd = s.is_number() ? Eigen::VectorXd::Constant(d, s.get<double>()) : vec_from(s);
            if (sd.size() != d) throw std::invalid_argument("std dimension mismatch");
            c.covariance = sd.array().square().matrix().asDiagonal();
        }
        c.weight = e.value("weight", 1.0);
        c.positive_slides_only = e.value("positive_slides_only", false);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

nlohmann::json to_json(const GeneratorConfig& c) {
    return {{"seed", c.seed},
            {"dim", c.dim},
            {"domain_shift",
             {{"rotation_deg", c.domain_shift.rotation_deg},
              {"translation", vec_json(c.domain_shift.translation)},
              {"scale", c.domain_shift.scale}}},
            {"class_geometry",
             {{"negative", comps_json(c.class_geometry.negative)}, {"positive", comps_json(c.class_geometry.positive)}}},
            {"positive_rate", c.positive_rate},
            {"n_source_instances", c.n_source_instances},
            {"n_target_instances", c.n_target_instances}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.seed = j.value("seed", c.seed);
    c.dim = j.value("dim", c.dim);
    if (j.contains("domain_shift")) {
        const auto& s = j.at("domain_shift");
        c.domain_shift.rotation_deg = s.value("rotation_deg", 0.0);
        c.domain_shift.scale = s.value("scale", 1.0);
        if (s.contains("translation")) c.domain_shift.translation = vec_from(s.at("translation"));
    }
    if (j.contains("class_geometry")) {
        c.class_geometry.negative = comps_from(j.at("class_geometry").at("negative"));
        c.class_geometry.positive = comps_from(j.at("class_geometry").at("positive"));
    }
    c.positive_rate = j.value("positive_rate", c.positive_rate);
    c.n_source_instances = j.value("n_source_instances", c.n_source_instances);
    c.n_target_instances = j.value("n_target_instances", c.n_target_instances);
    return c;
}

nlohmann::json to_json(const BagBuildConfig& c) {
    return {{"mode", c.mode == BagMode::clustered ? "clustered" : "random"},
            {"n_bags", c.n_bags},
            {"balanced", c.balanced},
            {"bag_size_mean", c.bag_size_mean},
            {"bag_size_std", c.bag_size_std},
            {"positives_per_posbag_mean", c.positives_per_posbag_mean},
            {"positives_per_posbag_std", c.positives_per_posbag_std},
            {"min_bag_size", c.min_bag_size},
            {"k_clusters", c.k_clusters},
            {"per_cluster_take", c.per_cluster_take},
            {"fixed_bag_size", c.fixed_bag_size}};
}

BagBuildConfig bag_config_from_json(const nlohmann::json& j) {
    BagBuildConfig c;
    if (j.contains("mode")) {
        const auto m = j.at("mode").get<std::string>();
        if (m == "random") c.mode = BagMode::random;
        else if (m == "clustered") c.mode = BagMode::clustered;
        else throw std::invalid_argument("unknown bag mode: " + m);
    }
    c.n_bags = j.value("n_bags", c.n_bags);
    c.balanced = j.value("balanced", c.balanced);
    c.bag_size_mean = j.value("bag_size_mean", c.bag_size_mean);
    c.bag_size_std = j.value("bag_size_std", c.bag_size_std);
    c.positives_per_posbag_mean = j.value("positives_per_posbag_mean", c.positives_per_posbag_mean);
    c.positives_per_posbag_std = j.value("positives_per_posbag_std", c.positives_per_posbag_std);
    c.min_bag_size = j.value("min_bag_size", c.min_bag_size);
    c.k_clusters = j.value("k_clusters", c.k_clusters);
    c.per_cluster_take = j.value("per_cluster_take", c.per_cluster_take);
    c.fixed_bag_size = j.value("fixed_bag_size", c.fixed_bag_size);
    return c;
}

}  // namespace milda
