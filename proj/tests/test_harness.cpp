#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "milda/harness.hpp"
#include "tiny.hpp"

using namespace milda;
using namespace milda::testing;
namespace fs = std::filesystem;

namespace {

const ExperimentData& tiny_data() {
    static const ExperimentData d = build_experiment_data(tiny_config());
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("experiment config json round trip") {
    const ExperimentConfig c = default_experiment_config();
    CHECK_NOTHROW(c.validate());
    const nlohmann::json j = to_json(c);
    CHECK(to_json(experiment_config_from_json(j)) == j);
}

TEST_CASE("config layering and errors") {
    const nlohmann::json patch = {{"train", {{"epochs_step1", 3}}}, {"methods", "ours,ideal_case"}, {"seeds", {4, 5}}};
    const ExperimentConfig c = experiment_config_from_json(patch);
    CHECK(c.train.epochs_step1 == 3);
    CHECK(c.train.epochs_step23 == default_experiment_config().train.epochs_step23);
    CHECK(c.methods == std::vector<std::string>{"ours", "ideal_case"});
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});

    CHECK_THROWS_AS(experiment_config_from_json({{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"train", {{"lr", 0.0}}}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"methods", "ours,nope"}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"schedule", {{"preset", "weird"}}}}), ConfigError);
}

TEST_CASE("schedule presets resolve with overrides") {
    ScheduleSpec s;
    CHECK(s.resolve(1000).n_min == 100);
    s.preset = "digit";
    s.a_n = 2;
    const ScheduleConfig d = s.resolve(900);
    CHECK(d.n_max == 90);
    CHECK(d.a_n == 2);
}

TEST_CASE("generated benchmark is MIL-consistent and hides target labels") {
    const ExperimentData& d = tiny_data();
    for (const DomainDataset* ds : {&d.source_train, &d.source_val, &d.target_train, &d.target_test})
        CHECK(validate_bag_consistency(*ds).empty());
    const TrainingData t = d.training();
    CHECK(t.target_train.oracle_coverage() == 0.0);
    CHECK(t.source_train.oracle_coverage() == 1.0);
    CHECK(d.bag_label_confidence > 0.0);
    CHECK(d.dataset_hash == build_experiment_data(tiny_config()).dataset_hash);
    for (const auto& b : d.target_train.bags()) CHECK(b.size() == 30);
}

TEST_CASE("training never reads target labels outside the oracle baseline") {
    const ExperimentData& d = tiny_data();
    const ExperimentConfig c = tiny_config();
    for (const auto& m : comparison_methods()) {
        std::size_t reads = 0;
        RunOptions o;
        o.on_training_oracle_read = [&](const InstanceRef&) { ++reads; };
        const MethodResult r = run_method(m, d, c, 0, o);
        CAPTURE(m);
        REQUIRE(r.ok());
        if (m == "ideal_case") CHECK(reads == d.target_train.instance_count());
        else CHECK(reads == 0);
    }
}

TEST_CASE("suite matrix, csv round trip and summary recomputation") {
    ExperimentConfig c = tiny_config();
    c.seeds = {0, 1, 2};
    const ExperimentReport r = run_experiment(c, tiny_data(), comparison_methods());
    CHECK(r.results.size() == 21);
    CHECK(r.all_ok());
    for (const auto& x : r.results) CHECK(x.dataset_hash == r.dataset_hash);

    const std::string csv = metrics_csv(r.results);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 22);
    const auto parsed = parse_metrics_csv(csv);
    CHECK(metrics_csv(parsed) == csv);

    for (const auto& row : r.summary) {
        std::vector<double> v;
        for (const auto& x : r.results)
            if (x.method == row.method) v.push_back(*x.pr_auc);
        double mean = 0;
        for (double e : v) mean += e;
        mean /= static_cast<double>(v.size());
        double ss = 0;
        for (double e : v) ss += (e - mean) * (e - mean);
        CHECK(std::abs(row.pr_auc.mean - mean) <= 1e-12);
        CHECK(std::abs(row.pr_auc.stddev - std::sqrt(ss / static_cast<double>(v.size() - 1))) <= 1e-12);
    }

    ExperimentConfig two = c;
    two.jobs = 2;
    CHECK(metrics_csv(run_experiment(two, tiny_data(), comparison_methods()).results) == csv);

    const ExperimentReport filtered = run_experiment(c, tiny_data(), {"ours", "ideal_case"});
    CHECK(filtered.summary.size() == 2);
    CHECK_THROWS_AS(run_experiment(c, tiny_data(), {"nope"}), ConfigError);
}

TEST_CASE("ablation rows share the dataset hash") {
    ExperimentConfig c = tiny_config();
    const ExperimentReport r = run_experiment(c, tiny_data(), ablation_methods());
    CHECK(r.results.size() == ablation_methods().size());
    for (const auto& x : r.results) {
        CHECK(x.ok());
        CHECK(x.dataset_hash == tiny_data().dataset_hash);
    }
}

TEST_CASE("report files: every plot has its data") {
    ExperimentConfig c = tiny_config();
    const ExperimentReport r = run_experiment(c, tiny_data(), {"ours", "source_only"});
    const fs::path out = fs::temp_directory_path() / "milda_test_report";
    fs::remove_all(out);
    const auto files = write_report(out, c, tiny_data(), r, "test");
    CHECK(fs::exists(out / "metrics.csv"));
    CHECK(fs::exists(out / "summary.txt"));
    CHECK(fs::exists(out / "manifest.json"));
    std::size_t svgs = 0;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (e.path().extension() != ".svg") continue;
        ++svgs;
        fs::path csv = e.path();
        csv.replace_extension(".csv");
        CHECK_MESSAGE(fs::exists(csv), e.path().string());
    }
    CHECK(svgs >= 3);
    CHECK(parse_metrics_csv(slurp(out / "metrics.csv")).size() == 2);
    fs::remove(out / "summary.txt");
    rerender_report(out);
    CHECK(slurp(out / "summary.txt").find("ours") != std::string::npos);
    fs::remove_all(out);
}

TEST_CASE("summary table lists every method") {
    std::vector<MethodResult> rs(2);
    rs[0].method = "a";
    rs[0].accuracy = 0.5;
    rs[0].pr_auc = 0.25;
    rs[1].method = "b";
    rs[1].error = "boom";
    const auto rows = summarize(rs);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].runs == 0);
    const std::string t = summary_table(rows, "T");
    CHECK(t.find("25.0") != std::string::npos);
    CHECK(t.find('b') != std::string::npos);
}
