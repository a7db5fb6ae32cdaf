#include <doctest.h>

#include <filesystem>

#include "milda/dataset_io.hpp"
#include "milda/types.hpp"
#include "support.hpp"

using namespace milda;
using namespace milda::testing;

TEST_CASE("bag consistency examples") {
    Rng rng(1);
    SUBCASE("positive bag with a positive") {
        DomainDataset ds({make_bag(0, {0, 0, 1}, 1, Domain::target, rng)}, Domain::target, Split::train);
        CHECK(validate_bag_consistency(ds).empty());
    }
    SUBCASE("negative bag of negatives") {
        DomainDataset ds({make_bag(0, {0, 0, 0}, 0, Domain::target, rng)}, Domain::target, Split::train);
        CHECK(validate_bag_consistency(ds).empty());
    }
    SUBCASE("negative bag holding a positive") {
        DomainDataset ds({make_bag(7, {0, 1, 0}, 0, Domain::target, rng)}, Domain::target, Split::train);
        const auto v = validate_bag_consistency(ds);
        REQUIRE(v.size() == 1);
        CHECK(v[0].bag_id == 7);
        CHECK(v[0].kind == ViolationKind::label_mismatch);
        CHECK(v[0].max_instance_label == 1);
    }
    SUBCASE("unlabeled bag is unverifiable") {
        DomainDataset ds({make_bag(3, {0, 1}, 1, Domain::target, rng).without_oracle_labels()}, Domain::target,
                         Split::train);
        const auto v = validate_bag_consistency(ds);
        REQUIRE(v.size() == 1);
        CHECK(v[0].kind == ViolationKind::unverifiable);
    }
}

TEST_CASE("bag construction rejects bad input") {
    Rng rng(2);
    CHECK_THROWS(Bag(0, {}, 0, Domain::target));
    CHECK_THROWS(make_bag(0, {0, 1}, 2, Domain::target, rng));
    Bag ok = make_bag(0, {0, 1}, 1, Domain::target, rng);
    auto inst = ok.instances();
    inst[0].domain = Domain::source;
    CHECK_THROWS(Bag(0, inst, 1, Domain::target));
}

TEST_CASE("training view strips target labels only") {
    Rng rng(3);
    const DomainDataset target = random_dataset(rng, 10, 6, Domain::target);
    const DomainDataset source = random_dataset(rng, 10, 6, Domain::source);

    const DomainDataset tv = training_view(target);
    CHECK(tv.oracle_coverage() == 0.0);
    CHECK(tv.instance_count() == target.instance_count());
    for (std::size_t b = 0; b < tv.bag_count(); ++b) {
        CHECK(tv.bags()[b].label() == target.bags()[b].label());
        CHECK(tv.bags()[b].feature_matrix() == target.bags()[b].feature_matrix());
    }

    const DomainDataset sv = training_view(source);
    CHECK(sv.oracle_coverage() == 1.0);
    CHECK(content_hash(sv) == content_hash(source));
}

TEST_CASE("training view is idempotent (property)") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const DomainDataset ds = random_dataset(rng, 1 + static_cast<int>(seed % 7), 8);
        const DomainDataset once = training_view(ds);
        CHECK(content_hash(training_view(once)) == content_hash(once));
    }
}

TEST_CASE("dataset container round-trips bit-exactly (property)") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        DomainDataset ds = random_dataset(rng, 1 + static_cast<int>(seed % 9), 7,
                                          seed % 2 ? Domain::source : Domain::target, Split::validation);
        if (seed % 3 == 0) ds = training_view(ds);
        const std::string bytes = encode_dataset(ds, {{"seed", seed}});
        const LoadedDataset back = decode_dataset(bytes);
        CHECK(back.metadata.at("seed").get<std::uint64_t>() == seed);
        CHECK(back.dataset.domain() == ds.domain());
        CHECK(back.dataset.split() == ds.split());
        REQUIRE(back.dataset.bag_count() == ds.bag_count());
        for (std::size_t b = 0; b < ds.bag_count(); ++b) {
            const Bag& x = ds.bags()[b];
            const Bag& y = back.dataset.bags()[b];
            CHECK(x.id() == y.id());
            CHECK(x.label() == y.label());
            REQUIRE(x.size() == y.size());
            for (std::size_t j = 0; j < x.size(); ++j) {
                CHECK(x[j].features == y[j].features);
                CHECK(x[j].oracle_label == y[j].oracle_label);
                CHECK(x[j].index_in_bag == y[j].index_in_bag);
            }
        }
        CHECK(encode_dataset(back.dataset, {{"seed", seed}}) == bytes);
    }
}

TEST_CASE("dataset file save and load") {
    Rng rng(9);
    const DomainDataset ds = random_dataset(rng, 5, 5);
    const auto path = std::filesystem::temp_directory_path() / "milda_test_types" / "ds.mild";
    save_dataset(path, ds);
    CHECK(content_hash(load_dataset(path).dataset) == content_hash(ds));
    std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("corrupt containers are rejected") {
    Rng rng(4);
    const std::string bytes = encode_dataset(random_dataset(rng, 3, 4));
    CHECK_THROWS(decode_dataset(bytes.substr(0, bytes.size() - 5)));
    CHECK_THROWS(decode_dataset("NOT-A-DATASET\n"));
}

TEST_CASE("fnv1a reference values") {
    // Published 64-bit FNV-1a test vectors.
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("dataset lookups") {
    Rng rng(5);
    const DomainDataset ds = random_dataset(rng, 6, 5);
    const auto counts = ds.instance_counts();
    std::size_t total = 0;
    for (auto c : counts) total += c;
    CHECK(total == ds.instance_count());
    CHECK(ds.all_instances().size() == total);
    CHECK(ds.instances_where(0).size() + ds.instances_where(1).size() == total);
    const Instance& i = ds.at({3, 1});
    CHECK(i.bag_id == 3);
    CHECK(i.index_in_bag == 1);
    CHECK(ds.find_bag(99) == nullptr);
    CHECK(parse_domain(to_string(Domain::target)) == Domain::target);
    CHECK(parse_split(to_string(Split::test)) == Split::test);
}
