#include "milda/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "milda/dataset_io.hpp"
#include "milda/plot.hpp"
#include "milda/random.hpp"

namespace milda {

// ---- configuration ---------------------------------------------------------

void SlideConfig::validate() const {
    if (n_positive_slides < 0 || n_negative_slides < 0) throw ConfigError("slide counts must be >= 0");
    if (slide_size < 1) throw ConfigError("slide_size must be >= 1");
    if (positive_fraction <= 0.0 || positive_fraction > 1.0) throw ConfigError("positive_fraction must be in (0,1]");
    if (context_fraction < 0.0 || context_fraction > 1.0) throw ConfigError("context_fraction must be in [0,1]");
    if (test_fraction < 0.0 || test_fraction >= 1.0) throw ConfigError("test_fraction must be in [0,1)");
}

ScheduleConfig ScheduleSpec::resolve(std::size_t n_tpi) const {
    ScheduleConfig c;
    if (preset == "pathology") c = ScheduleConfig::pathology_defaults(n_tpi);
    else if (preset == "digit") c = ScheduleConfig::digit_defaults(n_tpi);
    else if (preset == "explicit") c = explicit_values;
    else throw ConfigError("unknown schedule preset: " + preset);
    if (a_p) c.a_p = *a_p;
    if (a_n) c.a_n = *a_n;
    if (M) c.M = *M;
    return c;
}

void ExperimentConfig::validate() const {
    try {
        generator.validate();
        source_bags.validate();
        target_bags.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    target_slides.validate();
    if (source_bags.mode != BagMode::random) throw ConfigError("source bags must use random mode");
    if (target_bags.mode != BagMode::clustered) throw ConfigError("target bags must use clustered mode");
    if (n_source_validation < 1) throw ConfigError("n_source_validation must be >= 1");
    if (scorer_epochs < 0) throw ConfigError("scorer_epochs must be >= 0");
    if (seeds.empty()) throw ConfigError("seed list is empty");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    for (const auto& m : methods)
        if (!is_known_method(m)) throw ConfigError("unknown method: " + m);
    if (train.arch.input_dim != generator.dim) throw ConfigError("architecture input_dim differs from generator dim");
    if (schedule.preset != "pathology" && schedule.preset != "digit" && schedule.preset != "explicit")
        throw ConfigError("unknown schedule preset: " + schedule.preset);
    if (schedule.preset == "explicit") {
        try {
            schedule.explicit_values.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
}

namespace {

MixtureComponent component(double x, double y, double sd, double weight, bool positive_slides_only = false) {
    MixtureComponent c;
    c.mean = Eigen::Vector2d(x, y);
    c.covariance = Eigen::Matrix2d::Identity() * sd * sd;
    c.weight = weight;
    c.positive_slides_only = positive_slides_only;
    return c;
}

}  // namespace

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    auto& g = c.generator;
    g.seed = 2024;
    g.dim = 2;
    g.positive_rate = 0.3;
    g.n_source_instances = 4000;
    g.n_target_instances = 0;  // target instances come from slides
    g.domain_shift.rotation_deg = 30.0;
    g.domain_shift.translation = Eigen::Vector2d(0.5, -0.5);
    g.domain_shift.scale = 1.0;
    // Four clusters on a ring, classes alternating. The shift moves each
    // target cluster a third of the way toward its neighbour.
    g.class_geometry.negative = {component(0.0, 2.5, 0.6, 1.0), component(0.0, -2.5, 0.6, 1.0)};
    g.class_geometry.positive = {component(2.5, 0.0, 0.6, 1.0), component(-2.5, 0.0, 0.6, 1.0)};

    c.source_bags.mode = BagMode::random;
    c.source_bags.n_bags = 300;
    c.source_bags.positives_per_posbag_mean = 3.0;
    c.source_bags.positives_per_posbag_std = 1.0;

    c.target_slides.n_positive_slides = 240;
    c.target_slides.n_negative_slides = 80;

    c.target_bags.mode = BagMode::clustered;
    c.target_bags.k_clusters = 10;
    c.target_bags.per_cluster_take = 3;
    c.target_bags.fixed_bag_size = 30;

    c.train.arch.input_dim = 2;
    c.train.arch.encoder_hidden = 32;
    c.train.arch.feature_dim = 32;
    c.train.arch.attention_dim = 32;
    c.train.arch.head_hidden = 32;
    c.train.bags_per_step = 2;
    c.methods = comparison_methods();
    return c;
}

namespace {

std::vector<std::string> string_list(const nlohmann::json& j) {
    if (j.is_string()) {
        std::vector<std::string> out;
        std::stringstream ss(j.get<std::string>());
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(item);
        return out;
    }
    return j.get<std::vector<std::string>>();
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig c) {
    try {
        check_keys(j, {"generator", "source_bags", "n_source_validation", "target_slides", "target_bags", "train",
                       "schedule", "scorer_epochs", "methods", "seeds", "jobs"},
                   "config");
        if (j.contains("generator")) {
            auto merged = to_json(c.generator);
            merged.merge_patch(j.at("generator"));
            c.generator = generator_config_from_json(merged);
        }
        if (j.contains("source_bags")) {
            auto merged = to_json(c.source_bags);
            merged.merge_patch(j.at("source_bags"));
            c.source_bags = bag_config_from_json(merged);
        }
        if (j.contains("target_bags")) {
            auto merged = to_json(c.target_bags);
            merged.merge_patch(j.at("target_bags"));
            c.target_bags = bag_config_from_json(merged);
        }
        c.n_source_validation = j.value("n_source_validation", c.n_source_validation);
        c.scorer_epochs = j.value("scorer_epochs", c.scorer_epochs);
        if (j.contains("target_slides")) {
            const auto& s = j.at("target_slides");
            check_keys(s, {"n_positive_slides", "n_negative_slides", "slide_size", "positive_fraction",
                           "context_fraction", "test_fraction"},
                       "target_slides");
            auto& t = c.target_slides;
            t.n_positive_slides = s.value("n_positive_slides", t.n_positive_slides);
            t.n_negative_slides = s.value("n_negative_slides", t.n_negative_slides);
            t.slide_size = s.value("slide_size", t.slide_size);
            t.positive_fraction = s.value("positive_fraction", t.positive_fraction);
            t.context_fraction = s.value("context_fraction", t.context_fraction);
            t.test_fraction = s.value("test_fraction", t.test_fraction);
        }
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
        if (j.contains("schedule")) {
            const auto& s = j.at("schedule");
            check_keys(s, {"preset", "M", "n_min", "n_max", "a_p", "a_n"}, "schedule");
            auto& sc = c.schedule;
            sc.preset = s.value("preset", sc.preset);
            if (s.contains("n_min") || s.contains("n_max")) {
                sc.preset = "explicit";
                sc.explicit_values.n_min = s.value("n_min", sc.explicit_values.n_min);
                sc.explicit_values.n_max = s.value("n_max", sc.explicit_values.n_max);
            }
            if (s.contains("M")) sc.M = s.at("M").get<int>();
            if (s.contains("a_p")) sc.a_p = s.at("a_p").get<int>();
            if (s.contains("a_n")) sc.a_n = s.at("a_n").get<int>();
            if (sc.M) sc.explicit_values.M = *sc.M;
            if (sc.a_p) sc.explicit_values.a_p = *sc.a_p;
            if (sc.a_n) sc.explicit_values.a_n = *sc.a_n;
        }
        if (j.contains("methods")) c.methods = string_list(j.at("methods"));
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.jobs = j.value("jobs", c.jobs);
        c.train.arch.input_dim = c.generator.dim;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
    const auto& t = c.target_slides;
    nlohmann::json schedule{{"preset", c.schedule.preset}};
    if (c.schedule.preset == "explicit") {
        schedule["n_min"] = c.schedule.explicit_values.n_min;
        schedule["n_max"] = c.schedule.explicit_values.n_max;
    }
    if (c.schedule.M) schedule["M"] = *c.schedule.M;
    if (c.schedule.a_p) schedule["a_p"] = *c.schedule.a_p;
    if (c.schedule.a_n) schedule["a_n"] = *c.schedule.a_n;
    return {{"generator", to_json(c.generator)},
            {"source_bags", to_json(c.source_bags)},
            {"n_source_validation", c.n_source_validation},
            {"target_slides",
             {{"n_positive_slides", t.n_positive_slides},
              {"n_negative_slides", t.n_negative_slides},
              {"slide_size", t.slide_size},
              {"positive_fraction", t.positive_fraction},
              {"context_fraction", t.context_fraction},
              {"test_fraction", t.test_fraction}}},
            {"target_bags", to_json(c.target_bags)},
            {"train", to_json(c.train)},
            {"schedule", schedule},
            {"scorer_epochs", c.scorer_epochs},
            {"methods", c.methods},
            {"seeds", c.seeds},
            {"jobs", c.jobs}};
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return experiment_config_from_json(j);
}

// ---- datasets --------------------------------------------------------------

TrainingData ExperimentData::training() const {
    return {source_train, source_val, training_view(target_train)};
}

InstanceScorer source_scorer(const ModelBundle& bundle) {
    auto shared = std::make_shared<ModelBundle>(bundle);
    InstanceScorer s;
    s.features = [shared](const std::vector<Instance>& inst) { return shared->encoder.forward(stack_features(inst)); };
    s.positive_scores = [shared](const std::vector<Instance>& inst) -> Eigen::VectorXd {
        const Eigen::MatrixXd h = shared->encoder.forward(stack_features(inst));
        return shared->pretrain_head->forward(h).col(1);
    };
    return s;
}

namespace {

std::vector<std::size_t> component_indices(const std::vector<MixtureComponent>& comps, bool flagged) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < comps.size(); ++k)
        if (comps[k].positive_slides_only == flagged) out.push_back(k);
    return out;
}

std::vector<InstanceGroup> make_slides(const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto& g = cfg.generator;
    const auto& s = cfg.target_slides;
    const auto plain = component_indices(g.class_geometry.negative, false);
    const auto context = component_indices(g.class_geometry.negative, true);
    if (plain.empty()) throw ConfigError("negative geometry needs at least one component usable in negative slides");
    std::vector<InstanceGroup> slides;
    std::uint64_t stream = 0;
    auto draw = [&](int label, int n, const std::vector<std::size_t>& comps) {
        return sample_class(g, Domain::target, label, n, derive_seed(seed, stream++), comps);
    };
    for (int i = 0; i < s.n_positive_slides; ++i) {
        const int n_pos = std::clamp<int>(static_cast<int>(round_half_away(s.slide_size * s.positive_fraction)), 1,
                                          s.slide_size);
        const int n_neg = s.slide_size - n_pos;
        const int n_ctx = context.empty() ? 0 : static_cast<int>(round_half_away(n_neg * s.context_fraction));
        InstanceGroup slide;
        slide.group_label = 1;
        for (auto& v : {draw(1, n_pos, {}), draw(0, n_neg - n_ctx, plain), draw(0, n_ctx, context)})
            slide.instances.insert(slide.instances.end(), v.begin(), v.end());
        slides.push_back(std::move(slide));
    }
    for (int i = 0; i < s.n_negative_slides; ++i) {
        InstanceGroup slide;
        slide.group_label = 0;
        slide.instances = draw(0, s.slide_size, plain);
        slides.push_back(std::move(slide));
    }
    return slides;
}

ModelBundle train_source_classifier(const DomainDataset& source, const TrainConfig& base, int epochs,
                                    std::uint64_t seed) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    Eigen::MatrixXd x;
    std::vector<int> y;
    labeled_rows(source, x, y);
    return train_instance_classifier(ModelBundle::create(cfg.arch, seed), x, y, epochs, cfg);
}

}  // namespace

ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed = cfg.generator.seed;
    ExperimentData d;

    const auto source_pool = sample_population(cfg.generator, Domain::source, cfg.generator.n_source_instances,
                                               derive_seed(seed, 0));
    d.source_train = DomainDataset(build_bags_random(source_pool, cfg.source_bags, derive_seed(seed, 1), 0),
                                   Domain::source, Split::train);
    const auto val_pool = sample_population(cfg.generator, Domain::source, cfg.n_source_validation, derive_seed(seed, 2));
    std::vector<Bag> val_bags;
    const int val_bag = 10;
    for (std::size_t i = 0; i < val_pool.size(); i += val_bag) {
        std::vector<Instance> members(val_pool.begin() + static_cast<std::ptrdiff_t>(i),
                                      val_pool.begin() + static_cast<std::ptrdiff_t>(std::min(i + val_bag, val_pool.size())));
        int label = 0;
        for (const auto& m : members) label = std::max(label, *m.oracle_label);
        val_bags.emplace_back(static_cast<std::int64_t>(100000 + i / val_bag), std::move(members), label, Domain::source);
    }
    d.source_val = DomainDataset(std::move(val_bags), Domain::source, Split::validation);

    // Slides are split into train and test before bag construction.
    auto slides = make_slides(cfg, derive_seed(seed, 3));
    Rng split_rng(derive_seed(seed, 4));
    std::vector<InstanceGroup> train_slides;
    std::vector<InstanceGroup> test_slides;
    for (int label : {1, 0}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < slides.size(); ++i)
            if (slides[i].group_label == label) idx.push_back(i);
        shuffle_in_place(idx, split_rng);
        const auto n_test = static_cast<std::size_t>(std::floor(cfg.target_slides.test_fraction * static_cast<double>(idx.size())));
        for (std::size_t k = 0; k < idx.size(); ++k) (k < n_test ? test_slides : train_slides).push_back(slides[idx[k]]);
    }

    const ModelBundle scorer_model = train_source_classifier(d.source_train, cfg.train, cfg.scorer_epochs, derive_seed(seed, 5));
    const InstanceScorer scorer = source_scorer(scorer_model);
    auto train_bags = build_bags_clustered(train_slides, scorer, cfg.target_bags, derive_seed(seed, 6), 200000);
    auto test_bags = build_bags_clustered(test_slides, scorer, cfg.target_bags, derive_seed(seed, 7), 300000);

    std::vector<Bag> all_bags = train_bags;
    all_bags.insert(all_bags.end(), test_bags.begin(), test_bags.end());
    d.bag_label_confidence = measure_bag_label_confidence(all_bags);
    for (const auto& s : slides)
        if (static_cast<int>(s.instances.size()) < cfg.target_bags.fixed_bag_size) ++d.skipped_slides;

    d.target_train = DomainDataset(std::move(train_bags), Domain::target, Split::train);
    d.target_test = DomainDataset(std::move(test_bags), Domain::target, Split::test);
    d.dataset_hash = fnv1a_hex(content_hash(d.source_train) + content_hash(d.source_val) + content_hash(d.target_train) +
                               content_hash(d.target_test));
    return d;
}

// ---- methods ---------------------------------------------------------------

const std::vector<std::string>& comparison_methods() {
    static const std::vector<std::string> m{"attention_mil", "source_only", "mcdda",     "plda",
                                            "ours_step1",    "ours",        "ideal_case"};
    return m;
}

const std::vector<std::string>& ablation_methods() {
    static const std::vector<std::string> m{"ablation_no_pseudo", "ablation_no_matching", "ablation_fi_only",
                                            "ablation_fb_only",   "ablation_no_conf",     "ablation_pfan"};
    return m;
}

bool is_known_method(const std::string& name) {
    const auto& a = comparison_methods();
    const auto& b = ablation_methods();
    return std::find(a.begin(), a.end(), name) != a.end() || std::find(b.begin(), b.end(), name) != b.end();
}

std::vector<double> method_scores(const std::string& method, const ModelBundle& bundle, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd h = bundle.encoder.forward(x);
    Eigen::VectorXd s;
    if (method == "attention_mil") s = bundle.bag_head.attention(h);
    else s = bundle.instance_probs(h).col(1);
    return {s.data(), s.data() + s.size()};
}

namespace {

std::optional<PipelineOptions> pipeline_for(const std::string& method) {
    PipelineOptions o;
    if (method == "ours") return o;
    if (method == "ablation_no_pseudo") { o.use_pseudo_labels = false; return o; }
    if (method == "ablation_no_matching") { o.use_feature_matching = false; return o; }
    if (method == "ablation_fi_only") { o.mix_rule = MixRule::instance_only; return o; }
    if (method == "ablation_fb_only") { o.mix_rule = MixRule::bag_only; return o; }
    if (method == "ablation_no_conf") { o.mix_rule = MixRule::plain_sum; return o; }
    if (method == "ablation_pfan") { o.centroid_labels = true; return o; }
    return std::nullopt;
}

struct Evaluation {
    double accuracy = 0.0;
    std::optional<double> pr_auc;
    std::vector<double> scores;
};

Evaluation evaluate(const std::string& method, const ModelBundle& bundle, const Eigen::MatrixXd& x,
                    const std::vector<int>& y) {
    Evaluation e;
    e.scores = method_scores(method, bundle, x);
    const auto preds = decide_scores(e.scores);
    e.accuracy = accuracy(preds, y);
    e.pr_auc = pr_auc(e.scores, y);
    return e;
}

}  // namespace

MethodResult run_method(const std::string& method, const ExperimentData& data, const ExperimentConfig& config,
                        std::uint64_t seed, const RunOptions& options) {
    MethodResult r;
    r.method = method;
    r.seed = seed;
    r.dataset_hash = data.dataset_hash;
    if (!is_known_method(method)) {
        r.error = "unknown method";
        return r;
    }
    const auto t0 = std::chrono::steady_clock::now();

    Eigen::MatrixXd test_x;
    std::vector<int> test_y;
    labeled_rows(data.target_test, test_x, test_y);

    TrainConfig cfg = config.train;
    cfg.seed = seed;
    const TrainingData training = data.training();

    TrainingMonitor monitor;
    if (options.track_per_epoch_pr_auc) {
        monitor.evaluate = [&](const ModelBundle& b) { return evaluate(method, b, test_x, test_y).pr_auc; };
    }
    // Audit-only lookup for pseudo-label precision; never consulted by training.
    monitor.target_oracle = [&](const InstanceRef& ref) -> std::optional<int> {
        return data.target_train.at(ref).oracle_label;
    };

    Eigen::MatrixXd sx;
    std::vector<int> sy;
    labeled_rows(training.source_train, sx, sy);

    try {
        ModelBundle bundle = ModelBundle::create(cfg.arch, seed);
        if (method == "attention_mil") {
            bundle = train_bag_classifier(std::move(bundle), training.target_train, cfg.epochs_step23, cfg, &r.history, monitor);
        } else if (method == "source_only") {
            bundle = train_instance_classifier(std::move(bundle), sx, sy, cfg.epochs_step1, cfg, &r.history, monitor);
        } else if (method == "mcdda") {
            const Eigen::MatrixXd tx = stack_features(training.target_train.all_instances());
            bundle = train_discrepancy_only(std::move(bundle), sx, sy, tx, cfg.epochs_step23, cfg, &r.history, monitor);
        } else if (method == "plda") {
            bundle = train_instance_classifier(std::move(bundle), sx, sy, cfg.epochs_step1, cfg, &r.history, monitor);
            const auto target = training.target_train.all_instances();
            const Eigen::MatrixXd tx = stack_features(target);
            const auto labels = decide(bundle.instance_probs(bundle.encoder.forward(tx)));
            Eigen::MatrixXd mx(sx.rows() + tx.rows(), sx.cols());
            mx << sx, tx;
            std::vector<int> my = sy;
            my.insert(my.end(), labels.begin(), labels.end());
            bundle = train_instance_classifier(std::move(bundle), mx, my, cfg.epochs_step23, cfg, &r.history, monitor);
        } else if (method == "ours_step1") {
            bundle = run_step1(std::move(bundle), training, cfg, &r.history, monitor);
        } else if (method == "ideal_case") {
            std::vector<Instance> rows = data.target_train.all_instances();
            std::vector<int> y;
            for (const auto& inst : rows) {
                if (options.on_training_oracle_read) options.on_training_oracle_read(inst.ref());
                y.push_back(*inst.oracle_label);
            }
            bundle = train_instance_classifier(std::move(bundle), stack_features(rows), y, cfg.epochs_step23, cfg,
                                               &r.history, monitor);
        } else {
            const auto pipeline = pipeline_for(method);
            const auto schedule = config.schedule.resolve(positive_bag_instance_count(training.target_train));
            auto result = train(training, cfg, schedule, *pipeline, monitor);
            r.history = std::move(result.history);
            if (options.keep_models) r.step1_bundle = std::move(result.step1_bundle);
            bundle = std::move(result.bundle);
        }
        const auto e = evaluate(method, bundle, test_x, test_y);
        r.accuracy = e.accuracy;
        r.pr_auc = e.pr_auc;
        r.test_scores = e.scores;
        if (options.keep_models) r.bundle = std::move(bundle);
    } catch (const TrainingDiverged& e) {
        r.error = method + ": " + e.what();
        r.history = e.history();
    } catch (const std::exception& e) {
        r.error = method + ": " + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// ---- experiments and reports ------------------------------------------------

bool ExperimentReport::all_ok() const {
    return std::all_of(results.begin(), results.end(), [](const MethodResult& r) { return r.ok(); });
}

std::optional<SummaryRow> ExperimentReport::row(const std::string& method) const {
    for (const auto& s : summary)
        if (s.method == method) return s;
    return std::nullopt;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const std::vector<std::string>& methods, const RunOptions& options) {
    for (const auto& m : methods)
        if (!is_known_method(m)) throw ConfigError("unknown method: " + m);
    struct Job {
        std::string method;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& m : methods)
        for (const auto s : config.seeds) jobs.push_back({m, s});

    ExperimentReport report;
    report.results.resize(jobs.size());
    report.dataset_hash = data.dataset_hash;
    report.bag_label_confidence = data.bag_label_confidence;

    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            report.results[i] = run_method(jobs[i].method, data, config, jobs[i].seed, options);
            const auto& r = report.results[i];
            std::lock_guard lock(log_mutex);
            std::clog << "[suite] " << r.method << " seed " << r.seed << ": ";
            if (r.ok()) std::clog << "pr_auc " << (r.pr_auc ? *r.pr_auc : std::nan("")) << ", accuracy " << r.accuracy;
            else std::clog << "FAILED (" << r.error << ")";
            std::clog << " [" << r.seconds << " s]\n";
        }
    };
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), std::max<std::size_t>(jobs.size(), 1));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    report.summary = summarize(report.results);
    return report;
}

std::vector<SummaryRow> summarize(const std::vector<MethodResult>& results) {
    std::vector<SummaryRow> rows;
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
    for (const auto& r : results) {
        if (!values.contains(r.method)) order.push_back(r.method);
        auto& v = values[r.method];
        if (!r.ok()) continue;
        v.first.push_back(r.accuracy);
        if (r.pr_auc) v.second.push_back(*r.pr_auc);
    }
    for (const auto& m : order) {
        const auto& v = values[m];
        rows.push_back({m, v.first.size(), mean_std(v.first), mean_std(v.second)});
    }
    return rows;
}

namespace {

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_file(const std::filesystem::path& p, const std::string& content, std::vector<std::filesystem::path>& written) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
    written.push_back(p);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string run_stem(const MethodResult& r) { return r.method + "_seed" + std::to_string(r.seed); }

void write_summary_plots(const std::filesystem::path& out, const std::vector<SummaryRow>& summary,
                         std::vector<std::filesystem::path>& written) {
    std::vector<std::string> names;
    std::vector<double> means;
    std::vector<double> stds;
    std::ostringstream csv;
    csv << "method,runs,pr_auc_mean,pr_auc_std,accuracy_mean,accuracy_std\n";
    for (const auto& s : summary) {
        names.push_back(s.method);
        means.push_back(100.0 * s.pr_auc.mean);
        stds.push_back(100.0 * s.pr_auc.stddev);
        csv << s.method << ',' << s.runs << ',' << fixed(s.pr_auc.mean) << ',' << fixed(s.pr_auc.stddev) << ','
            << fixed(s.accuracy.mean) << ',' << fixed(s.accuracy.stddev) << '\n';
    }
    write_file(out / "plots" / "pr_auc_by_method.csv", csv.str(), written);
    write_file(out / "plots" / "pr_auc_by_method.svg",
               svg_bar_plot(names, means, stds, "Target-test PR-AUC by method", "PR-AUC (%)"), written);
}

}  // namespace

std::string metrics_csv(const std::vector<MethodResult>& results) {
    std::ostringstream out;
    out << "method,seed,accuracy,pr_auc,dataset_hash,status\n";
    for (const auto& r : results) {
        out << r.method << ',' << r.seed << ',' << (r.ok() ? fixed(r.accuracy) : "") << ','
            << (r.ok() && r.pr_auc ? fixed(*r.pr_auc) : "") << ',' << r.dataset_hash << ','
            << (r.ok() ? "ok" : "failed") << '\n';
    }
    return out.str();
}

std::vector<MethodResult> parse_metrics_csv(const std::string& text) {
    std::vector<MethodResult> out;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("method,seed", 0) != 0) throw std::runtime_error("not a metrics CSV");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        while (f.size() < 6) f.emplace_back();
        MethodResult r;
        r.method = f[0];
        r.seed = std::stoull(f[1]);
        if (!f[2].empty()) r.accuracy = std::stod(f[2]);
        if (!f[3].empty()) r.pr_auc = std::stod(f[3]);
        r.dataset_hash = f[4];
        if (f[5] != "ok") r.error = f[5].empty() ? "failed" : f[5];
        out.push_back(std::move(r));
    }
    return out;
}

std::string summary_table(const std::vector<SummaryRow>& rows, const std::string& title) {
    std::ostringstream out;
    char buf[160];
    out << title << '\n';
    std::snprintf(buf, sizeof(buf), "%-22s %5s  %-16s %-16s\n", "Method", "Runs", "Accuracy", "PR-AUC");
    out << buf << std::string(62, '-') << '\n';
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-22s %5zu  %6.1f +- %-6.2f %6.1f +- %-6.2f\n", r.method.c_str(), r.runs,
                      100.0 * r.accuracy.mean, 100.0 * r.accuracy.stddev, 100.0 * r.pr_auc.mean,
                      100.0 * r.pr_auc.stddev);
        out << buf;
    }
    return out.str();
}

std::vector<std::filesystem::path> write_report(const std::filesystem::path& out, const ExperimentConfig& config,
                                                const ExperimentData& data, const ExperimentReport& report,
                                                const std::string& title) {
    std::vector<std::filesystem::path> written;
    write_file(out / "metrics.csv", metrics_csv(report.results), written);
    std::string table = summary_table(report.summary, title);
    if (std::any_of(report.results.begin(), report.results.end(), [](const auto& r) { return r.method == "mcdda"; }))
        table += "\nnote: mcdda runs without any pretrained encoder at this scale.\n";
    write_file(out / "summary.txt", table, written);
    write_summary_plots(out, report.summary, written);

    Eigen::MatrixXd test_x;
    std::vector<int> test_y;
    labeled_rows(data.target_test, test_x, test_y);
    std::map<std::string, bool> mapped;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : report.results) {
        const auto stem = run_stem(r);
        write_file(out / "histories" / (stem + ".csv"), r.history.to_csv(), written);
        runs.push_back({{"method", r.method}, {"seed", r.seed}, {"seconds", r.seconds}, {"status", r.ok() ? "ok" : r.error}});
        if (!r.ok()) continue;

        // Score map of the first successful seed per method.
        if (!mapped[r.method] && !r.test_scores.empty()) {
            mapped[r.method] = true;
            const auto rows = export_score_map(test_x, r.test_scores, test_y);
            write_file(out / "plots" / ("score_map_" + r.method + ".csv"), score_map_csv(rows), written);
            write_file(out / "plots" / ("score_map_" + r.method + ".svg"),
                       svg_score_map(rows, "Target-test scores: " + r.method), written);
        }
        if (r.bundle) {
            save_checkpoint(out / "checkpoints" / (stem + ".ckpt"), *r.bundle);
            written.push_back(out / "checkpoints" / (stem + ".ckpt"));
        }
        if (r.step1_bundle) {
            save_checkpoint(out / "checkpoints" / (stem + "_step1.ckpt"), *r.step1_bundle);
            written.push_back(out / "checkpoints" / (stem + "_step1.ckpt"));
        }

        // Pseudo-label trajectory for pipelines that label.
        std::vector<double> ep, count, prec, auc;
        for (const auto& h : r.history.records) {
            if (h.phase != "step23") continue;
            const double m = static_cast<double>(h.epoch - config.train.epochs_step1);
            ep.push_back(m);
            count.push_back(static_cast<double>(h.n_positive + h.n_negative + h.n_negative_bag));
            prec.push_back(h.precision_positive_bags.value_or(std::nan("")));
            auc.push_back(h.eval_pr_auc.value_or(std::nan("")));
        }
        if (!ep.empty() && pipeline_for(r.method) && pipeline_for(r.method)->use_pseudo_labels) {
            std::ostringstream csv;
            csv << "epoch,labeled_count,precision,pr_auc\n";
            for (std::size_t i = 0; i < ep.size(); ++i)
                csv << static_cast<int>(ep[i]) << ',' << static_cast<int>(count[i]) << ','
                    << (std::isfinite(prec[i]) ? fixed(prec[i]) : "") << ',' << (std::isfinite(auc[i]) ? fixed(auc[i]) : "")
                    << '\n';
            const double cap = *std::max_element(count.begin(), count.end());
            std::vector<double> count_norm;
            for (double c : count) count_norm.push_back(cap > 0 ? c / cap : 0.0);
            write_file(out / "plots" / ("label_trajectory_" + stem + ".csv"), csv.str(), written);
            write_file(out / "plots" / ("label_trajectory_" + stem + ".svg"),
                       svg_line_plot({{"labeled / max", ep, count_norm}, {"precision", ep, prec}, {"test PR-AUC", ep, auc}},
                                     "Pseudo-labels: " + stem, "epoch", "value"),
                       written);
        }
    }

    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[64];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    nlohmann::json manifest{{"created", stamp},
                            {"config", to_json(config)},
                            {"dataset_hash", data.dataset_hash},
                            {"bag_label_confidence", data.bag_label_confidence},
                            {"datasets",
                             {{"source_train", content_hash(data.source_train)},
                              {"source_val", content_hash(data.source_val)},
                              {"target_train", content_hash(data.target_train)},
                              {"target_test", content_hash(data.target_test)}}},
                            {"counts",
                             {{"source_train_bags", data.source_train.bag_count()},
                              {"target_train_bags", data.target_train.bag_count()},
                              {"target_test_bags", data.target_test.bag_count()},
                              {"target_test_instances", data.target_test.instance_count()}}},
                            {"runs", runs}};
    write_file(out / "manifest.json", manifest.dump(2) + "\n", written);
    return written;
}

std::vector<std::filesystem::path> rerender_report(const std::filesystem::path& dir) {
    const auto results = parse_metrics_csv(read_file(dir / "metrics.csv"));
    std::vector<std::filesystem::path> written;
    const auto summary = summarize(results);
    write_file(dir / "summary.txt", summary_table(summary, "Target-test performance"), written);
    write_summary_plots(dir, summary, written);
    return written;
}

}  // namespace milda
