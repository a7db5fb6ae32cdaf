// milda: generate datasets, train single methods, run the comparison suite
// and ablations, and re-render reports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "milda/dataset_io.hpp"
#include "milda/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kConfigError = 2;

struct Common {
    std::string config_path;
    std::string out;
    std::string seed_list;
    std::string methods;
    int jobs = 0;
};

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

milda::ExperimentConfig resolve_config(const Common& c) {
    nlohmann::json overrides = nlohmann::json::object();
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw milda::ConfigError("cannot open config file: " + c.config_path);
        try {
            in >> overrides;
        } catch (const nlohmann::json::exception& e) {
            throw milda::ConfigError("cannot parse " + c.config_path + ": " + e.what());
        }
    }
    if (!c.seed_list.empty()) {
        std::vector<std::uint64_t> seeds;
        for (const auto& s : split(c.seed_list)) {
            try {
                seeds.push_back(std::stoull(s));
            } catch (const std::exception&) {
                throw milda::ConfigError("bad seed in --seed-list: " + s);
            }
        }
        overrides["seeds"] = seeds;
    }
    if (!c.methods.empty()) overrides["methods"] = split(c.methods);
    if (c.jobs > 0) overrides["jobs"] = c.jobs;
    return milda::experiment_config_from_json(overrides);
}

fs::path output_dir(const Common& c) {
    if (!c.out.empty()) return c.out;
    if (const char* env = std::getenv("MILDA_OUT"); env != nullptr && *env != '\0') return env;
    return "milda_out";
}

int run_matrix(const Common& c, const std::vector<std::string>& default_methods, const std::string& title,
               bool keep_models) {
    auto cfg = resolve_config(c);
    if (c.methods.empty()) cfg.methods = default_methods;
    const auto out = output_dir(c);
    std::clog << "[milda] generating datasets (seed " << cfg.generator.seed << ")\n";
    const auto data = milda::build_experiment_data(cfg);
    std::clog << "[milda] dataset " << data.dataset_hash << ", positive-bag label confidence "
              << data.bag_label_confidence << "\n";
    milda::RunOptions options;
    options.keep_models = keep_models;
    const auto report = milda::run_experiment(cfg, data, cfg.methods, options);
    milda::write_report(out, cfg, data, report, title);
    std::cout << milda::summary_table(report.summary, title);
    std::clog << "[milda] wrote " << out.string() << "\n";
    return report.all_ok() ? kOk : kPartial;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiple-instance domain adaptation with confidence-weighted pseudo-labels"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config_path, "JSON config layered over the built-in defaults");
        sub->add_option("--out", c.out, "Output directory (default: $MILDA_OUT or ./milda_out)");
        sub->add_option("--seed-list", c.seed_list, "Comma-separated run seeds, e.g. 0,1,2");
        sub->add_option("--methods", c.methods, "Comma-separated method names");
        sub->add_option("--jobs", c.jobs, "Worker threads for independent runs");
    };

    auto* generate = app.add_subcommand("generate", "Write the experiment datasets");
    add_common(generate);
    auto* train = app.add_subcommand("train", "Train and evaluate one method");
    add_common(train);
    std::string method = "ours";
    train->add_option("method", method, "Method name")->capture_default_str();
    auto* suite = app.add_subcommand("suite", "Run the comparison methods over the seed list");
    add_common(suite);
    auto* ablate = app.add_subcommand("ablate", "Run the ablations (and the full pipeline as reference)");
    add_common(ablate);
    auto* report = app.add_subcommand("report", "Re-render summary and plots from <dir>/metrics.csv");
    std::string report_dir;
    report->add_option("dir", report_dir, "Directory holding metrics.csv")->required();
    auto* show = app.add_subcommand("show-config", "Print the effective configuration");
    add_common(show);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*show) {
            std::cout << milda::to_json(resolve_config(c)).dump(2) << "\n";
            return kOk;
        }
        if (*generate) {
            const auto cfg = resolve_config(c);
            const auto data = milda::build_experiment_data(cfg);
            const auto out = output_dir(c);
            const nlohmann::json extra{{"seed", cfg.generator.seed}, {"generator", milda::to_json(cfg.generator)}};
            milda::save_dataset(out / "source_train.mild", data.source_train, extra);
            milda::save_dataset(out / "source_val.mild", data.source_val, extra);
            milda::save_dataset(out / "target_train.mild", data.target_train, extra);
            milda::save_dataset(out / "target_test.mild", data.target_test, extra);
            std::cout << "dataset " << data.dataset_hash << "\n"
                      << "source train bags " << data.source_train.bag_count() << ", target train bags "
                      << data.target_train.bag_count() << ", target test bags " << data.target_test.bag_count() << "\n"
                      << "positive-bag label confidence " << data.bag_label_confidence << "\n";
            for (const auto* ds : {&data.target_train, &data.target_test}) {
                std::size_t pos = 0;
                const auto in_pos = ds->instances_where(1);
                for (const auto& i : in_pos) pos += *i.oracle_label == 1 ? 1 : 0;
                std::cout << milda::to_string(ds->split()) << ": " << in_pos.size() << " instances in positive bags, "
                          << pos << " positive; " << ds->instance_count() << " instances total\n";
            }
            return kOk;
        }
        if (*train) {
            if (!milda::is_known_method(method)) throw milda::ConfigError("unknown method: " + method);
            c.methods = method;
            return run_matrix(c, {method}, "Target-test performance", true);
        }
        if (*suite) return run_matrix(c, milda::comparison_methods(), "Target-test performance", false);
        if (*ablate) {
            std::vector<std::string> m{"ours"};
            const auto& a = milda::ablation_methods();
            m.insert(m.end(), a.begin(), a.end());
            return run_matrix(c, m, "Ablations: target-test performance", false);
        }
        if (*report) {
            for (const auto& p : milda::rerender_report(report_dir)) std::clog << "[milda] wrote " << p.string() << "\n";
            std::ifstream in(fs::path(report_dir) / "summary.txt");
            std::cout << in.rdbuf();
            return kOk;
        }
    } catch (const milda::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPartial;
    }
    return kOk;
}
