// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   milda_acceptance [--quick] [--out DIR]
//
// --quick skips the default-config training runs (criteria 5, 6, 8, 9).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "milda/harness.hpp"
#include "milda/losses.hpp"
#include "milda/metrics.hpp"
#include "milda/optim.hpp"
#include "milda/pseudo_label.hpp"
#include "milda/trainer.hpp"

using namespace milda;
using namespace milda::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double secs) {
    if (!o.pass) ++failures;
    std::printf("criterion %d %-28s %s  (%.1f s) %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
}

void run(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(id, name, o, seconds_since(t0));
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << std::fixed << v;
    return os.str();
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2e", v);
    return buf;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9; }

// 1 ---------------------------------------------------------------------------

Outcome unit_oracles() {
    std::vector<std::string> bad;
    ScheduleConfig s;
    s.n_min = 10;
    s.n_max = 40;
    s.M = 20;
    if (schedule_tau(0, s) != 10) bad.push_back("tau(0)");
    if (schedule_tau(10, s) != 25) bad.push_back("tau(10)");
    if (schedule_tau(20, s) != 40 || schedule_tau(57, s) != 40) bad.push_back("tau(>=M)");

    if (!close(discrepancy_loss(Distribution(1, 0), Distribution(0, 1)), 1.0)) bad.push_back("disc disjoint");
    if (!close(discrepancy_loss(Distribution(0.4, 0.6), Distribution(0.4, 0.6)), 0.0)) bad.push_back("disc equal");

    ConfidencePair c;
    c.c_b = 0.8;
    c.c_i = 0.4;
    Eigen::MatrixXd pi(1, 2);
    pi << 0.7, 0.3;
    const std::vector<double> pb{0.9};
    if (!close(mix_scores(pb, pi, c)(0, 1), 0.7)) bad.push_back("mix");
    c.c_b = 0.0;
    if (!close(mix_scores(pb, pi, c)(0, 1), 0.3)) bad.push_back("mix c_B=0");
    c.c_b = c.c_i = 0.5;
    if (!close(mix_scores(pb, pi, c)(0, 1), 0.6)) bad.push_back("mix equal");

    const auto ap = pr_auc(std::vector<double>{0.9, 0.8, 0.7, 0.6}, std::vector<int>{1, 0, 1, 0});
    if (!ap || !close(*ap, (1.0 + 2.0 / 3.0) / 2.0)) bad.push_back("pr_auc");

    std::string d = bad.empty() ? "all hand-computed values within 1e-9" : "mismatch:";
    for (const auto& b : bad) d += " " + b;
    return {bad.empty(), d};
}

// 2 ---------------------------------------------------------------------------

ArchitectureSpec random_arch(Rng& rng) {
    std::uniform_int_distribution<int> d(1, 5);
    ArchitectureSpec a;
    a.input_dim = d(rng);
    a.encoder_hidden = d(rng);
    a.feature_dim = d(rng);
    a.attention_dim = d(rng);
    a.head_hidden = d(rng);
    return a;
}

Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
    return m;
}

Outcome gradient_checks() {
    double worst_bag = 0.0;
    double worst_inst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(derive_seed(77, s));
        const ArchitectureSpec arch = random_arch(rng);

        AttentionBagHead bag(arch, rng);
        Eigen::MatrixXd h = normal_matrix(rng, std::uniform_int_distribution<int>(1, 6)(rng), arch.feature_dim);
        const int y = static_cast<int>(s % 2);
        zero_grads(bag.parameters());
        AttentionBagHead::Cache bc;
        Eigen::Vector2d dl = bag.forward(h, &bc);
        dl[y] -= 1.0;
        const Eigen::MatrixXd dh = bag.backward(bc, dl);
        auto bag_l = [&] { return bag_loss(bag_predict(bag, h), y); };
        for (Parameter* p : bag.parameters())
            worst_bag = std::max(worst_bag, relative_error(p->grad, numeric_gradient(p->value, bag_l)));
        worst_bag = std::max(worst_bag, relative_error(dh, numeric_gradient(h, bag_l)));

        InstanceHead inst("FI", arch, rng);
        Eigen::VectorXd v = normal_matrix(rng, arch.feature_dim, 1).col(0);
        zero_grads(inst.parameters());
        InstanceHead::Cache ic;
        const Eigen::MatrixXd p = inst.forward(v.transpose(), &ic);
        const std::vector<int> label{1 - y};
        inst.backward(ic, instance_loss_logit_grad(p, label));
        auto inst_l = [&] { return -std::log(instance_predict(inst, v)[1 - y]); };
        for (Parameter* q : inst.parameters())
            worst_inst = std::max(worst_inst, relative_error(q->grad, numeric_gradient(q->value, inst_l)));
    }
    const bool ok = worst_bag <= 1e-4 && worst_inst <= 1e-4;
    return {ok, "max relative error: bag " + sci(worst_bag) + ", instance " + sci(worst_inst) +
                    " over 20 configurations"};
}

// 3 ---------------------------------------------------------------------------

Outcome mil_definition(const ExperimentConfig& cfg, const ExperimentData& data) {
    std::size_t violations = 0;
    for (const DomainDataset* ds : {&data.source_train, &data.source_val, &data.target_train, &data.target_test})
        violations += validate_bag_consistency(*ds).size();

    const TrainingData td = data.training();
    const ScheduleConfig sched = cfg.schedule.resolve(positive_bag_instance_count(td.target_train));
    std::size_t neg_total = 0, neg_wrong = 0, pos_total = 0, pos_outside = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const ModelBundle b = init_twin_heads(ModelBundle::create(cfg.train.arch, seed), seed + 1);
        for (int m : {0, 10, 20}) {
            for (const auto& a : run_step3(b, td, sched, m, seed).assignments) {
                const Bag* bag = data.target_train.find_bag(a.ref.bag_id);
                if (a.from_negative_bag) {
                    ++neg_total;
                    if (bag->label() != 0 || *data.target_train.at(a.ref).oracle_label != 0) ++neg_wrong;
                }
                if (a.assigned_label == 1) {
                    ++pos_total;
                    if (bag->label() != 1) ++pos_outside;
                }
            }
        }
    }
    const bool ok = violations == 0 && neg_wrong == 0 && pos_outside == 0 && neg_total > 0 && pos_total > 0;
    return {ok, std::to_string(violations) + " bag violations; negative-bag labels wrong " + std::to_string(neg_wrong) +
                    "/" + std::to_string(neg_total) + "; positives outside positive bags " +
                    std::to_string(pos_outside) + "/" + std::to_string(pos_total)};
}

// 4 ---------------------------------------------------------------------------

Outcome parameter_scope(const ExperimentConfig& cfg, const ExperimentData& data) {
    const TrainingData td = data.training();
    Step2Batch batch;
    for (std::size_t i = 0; i < 8; ++i) {
        const Bag& t = td.target_train.bags()[i];
        const Bag& s = td.source_train.bags()[i];
        batch.target_bags.push_back(t.feature_matrix());
        batch.target_bag_labels.push_back(t.label());
        batch.source_bags.push_back(s.feature_matrix());
        batch.source_bag_labels.push_back(s.label());
        batch.target_x.conservativeResize(batch.target_x.rows() + static_cast<Eigen::Index>(t.size()), 2);
        batch.target_x.bottomRows(static_cast<Eigen::Index>(t.size())) = t.feature_matrix();
    }
    labeled_rows(td.source_train, batch.mix_x, batch.mix_y);

    int failures_b = 0, failures_c = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        ModelBundle b = init_twin_heads(ModelBundle::create(cfg.train.arch, seed), seed + 1);
        auto snapshot = [&] {
            return std::vector<std::string>{parameter_hash(b.encoder.parameters()),
                                            parameter_hash(b.bag_head.parameters()),
                                            parameter_hash(b.head1->parameters()),
                                            parameter_hash(b.head2->parameters())};
        };
        for (int round = 0; round < 3; ++round) {
            auto before = snapshot();
            backprop_objective_b(b, batch, {cfg.train.lambda});
            Adam{cfg.train.lr_matching}.step(objective_b_scope(b));
            auto after = snapshot();
            if (after[0] != before[0] || after[1] != before[1] || after[2] == before[2] || after[3] == before[3])
                ++failures_b;

            before = after;
            backprop_objective_c(b, batch, {cfg.train.lambda});
            Adam{cfg.train.lr_matching}.step(objective_c_scope(b));
            after = snapshot();
            if (after[0] == before[0] || after[1] != before[1] || after[2] != before[2] || after[3] != before[3])
                ++failures_c;
        }
    }
    return {failures_b == 0 && failures_c == 0, "head-only update leaks: " + std::to_string(failures_b) +
                                                    "/9, encoder-only update leaks: " + std::to_string(failures_c) +
                                                    "/9"};
}

// 5, 6, 8, 9 --------------------------------------------------------------------

double mean_pr(const ExperimentReport& r, const std::string& method) {
    const auto row = r.row(method);
    return row ? row->pr_auc.mean : std::nan("");
}

Outcome table_ordering(const ExperimentReport& suite, double suite_secs) {
    const double ours = mean_pr(suite, "ours");
    const double ideal = mean_pr(suite, "ideal_case");
    double best_other = -1.0;
    std::string best_name;
    for (const char* m : {"ours_step1", "plda", "source_only", "attention_mil", "mcdda"}) {
        const double v = mean_pr(suite, m);
        if (v > best_other) {
            best_other = v;
            best_name = m;
        }
    }
    const double gap_src = ours - mean_pr(suite, "source_only");
    const double gap_att = ours - mean_pr(suite, "attention_mil");
    double slowest = 0.0;
    for (const auto& r : suite.results) slowest = std::max(slowest, r.seconds);
    const bool ok = suite.all_ok() && ideal >= ours && ours > best_other && gap_src >= 0.05 && gap_att >= 0.05 &&
                    suite_secs <= 1800.0 && slowest < 300.0;
    return {ok, "ideal " + fmt(ideal) + " >= ours " + fmt(ours) + " > " + best_name + " " + fmt(best_other) +
                    "; margin over source_only " + fmt(gap_src) + ", attention_mil " + fmt(gap_att) + "; suite " +
                    fmt(suite_secs, 0) + " s, slowest run " + fmt(slowest, 0) + " s"};
}

Outcome ablation_ordering(const ExperimentReport& suite, const ExperimentReport& abl) {
    const double ours = mean_pr(suite, "ours");
    int short_small = 0;
    int short_large = 0;
    std::string detail = "ours " + fmt(ours) + ";";
    for (const char* m : {"ablation_no_pseudo", "ablation_no_matching", "ablation_no_conf", "ablation_pfan"}) {
        const double v = mean_pr(abl, m);
        detail += std::string(" ") + m + " " + fmt(v);
        if (!(ours >= v)) {
            if (v - ours <= 0.01) ++short_small;
            else ++short_large;
        }
    }
    bool same_hash = true;
    for (const auto& r : abl.results) same_hash = same_hash && r.dataset_hash == suite.dataset_hash;
    const bool ok = abl.all_ok() && same_hash && short_large == 0 && short_small <= 1;
    return {ok, detail + "; within-tolerance shortfalls " + std::to_string(short_small)};
}

Outcome bag_confidence(const ExperimentData& data, double build_secs) {
    return {data.bag_label_confidence >= 0.90 && build_secs < 60.0,
            "confidence " + fmt(data.bag_label_confidence) + " (datasets built in " + fmt(build_secs, 1) + " s)"};
}

Outcome label_trajectory(const ExperimentConfig& cfg, const ExperimentData& data, const ExperimentReport& suite) {
    const ScheduleConfig sched = cfg.schedule.resolve(positive_bag_instance_count(data.target_train));
    const auto cap_pos = static_cast<std::size_t>(sched.a_p * sched.n_max);
    const auto cap_neg = static_cast<std::size_t>(sched.a_n * sched.n_max);
    bool ok = true;
    std::string detail;
    for (const auto& r : suite.results) {
        if (r.method != "ours") continue;
        int cap_epoch = -1;
        double min_prec = 1.0;
        for (const auto& rec : r.history.records) {
            if (rec.phase != "step23") continue;
            const int m = rec.epoch - cfg.train.epochs_step1;
            if (cap_epoch < 0 && rec.n_positive == cap_pos && rec.n_negative == cap_neg) cap_epoch = m;
            if (m > 10) {
                if (!rec.precision_positive_bags) min_prec = -1.0;
                else min_prec = std::min(min_prec, *rec.precision_positive_bags);
            }
        }
        const bool seed_ok = cap_epoch >= 0 && cap_epoch <= sched.M && min_prec >= 0.8;
        ok = ok && seed_ok;
        detail += "seed " + std::to_string(r.seed) + ": cap at m=" + std::to_string(cap_epoch) +
                  ", min precision after m=10 " + fmt(min_prec, 3) + "; ";
    }
    return {ok && !detail.empty(), detail};
}

// Not a numbered criterion: the discrepancy on target should shrink over training.
Outcome adversarial_decrease(const ExperimentConfig& cfg, const ExperimentReport& suite) {
    bool ok = true;
    std::string detail;
    for (const auto& r : suite.results) {
        if (r.method != "ours") continue;
        std::vector<double> adv;
        for (const auto& rec : r.history.records)
            if (rec.epoch >= cfg.train.epochs_step1) adv.push_back(rec.loss_adv);
        if (adv.size() < 20) return {false, "history too short"};
        double first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < 10; ++i) {
            first += adv[i] / 10.0;
            last += adv[adv.size() - 10 + i] / 10.0;
        }
        ok = ok && last < first;
        detail += "seed " + std::to_string(r.seed) + ": " + fmt(first) + " -> " + fmt(last) + "; ";
    }
    return {ok && !detail.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    bool quick = false;
    std::filesystem::path out = "acceptance_out";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--quick") quick = true;
        else if (a == "--out" && i + 1 < argc) out = argv[++i];
        else {
            std::cerr << "usage: milda_acceptance [--quick] [--out DIR]\n";
            return 2;
        }
    }

    const ExperimentConfig cfg = default_experiment_config();
    auto t0 = Clock::now();
    const ExperimentData data = build_experiment_data(cfg);
    const double build_secs = seconds_since(t0);

    run(1, "unit oracles", unit_oracles);
    run(2, "gradient checks", gradient_checks);
    run(3, "MIL definition", [&] { return mil_definition(cfg, data); });
    run(4, "parameter scope", [&] { return parameter_scope(cfg, data); });

    if (quick) {
        std::printf("criteria 5, 6, 8, 9 skipped (--quick)\n");
        run(7, "bag-label confidence", [&] { return bag_confidence(data, build_secs); });
        return failures == 0 ? 0 : 1;
    }

    t0 = Clock::now();
    const ExperimentReport suite = run_experiment(cfg, data, comparison_methods());
    const double suite_secs = seconds_since(t0);
    write_report(out / "suite", cfg, data, suite, "Comparison on the default synthetic benchmark");
    report(5, "comparison ordering", table_ordering(suite, suite_secs), suite_secs);

    t0 = Clock::now();
    const std::vector<std::string> abl_methods{"ablation_no_pseudo", "ablation_no_matching", "ablation_no_conf",
                                               "ablation_pfan"};
    const ExperimentReport abl = run_experiment(cfg, data, abl_methods);
    write_report(out / "ablations", cfg, data, abl, "Ablations on the default synthetic benchmark");
    report(6, "ablation ordering", ablation_ordering(suite, abl), seconds_since(t0));

    run(7, "bag-label confidence", [&] { return bag_confidence(data, build_secs); });
    run(8, "pseudo-label trajectory", [&] { return label_trajectory(cfg, data, suite); });
    {
        const Outcome o = adversarial_decrease(cfg, suite);
        if (!o.pass) ++failures;
        std::printf("invariant   %-28s %s  %s\n", "discrepancy decreases", o.pass ? "PASS" : "FAIL", o.detail.c_str());
    }

    run(9, "determinism", [&] {
        // Fresh datasets and a different worker count; the CSV must not change.
        ExperimentConfig again = cfg;
        again.jobs = 2;
        const ExperimentData data2 = build_experiment_data(again);
        const ExperimentReport rerun = run_experiment(again, data2, comparison_methods());
        const std::string a = metrics_csv(suite.results);
        const std::string b = metrics_csv(rerun.results);
        return Outcome{a == b && data2.dataset_hash == data.dataset_hash,
                       "metrics.csv " + std::string(a == b ? "byte-identical" : "differs") + " (" +
                           std::to_string(a.size()) + " bytes), dataset hash " + data.dataset_hash};
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
