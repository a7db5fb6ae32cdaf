#include "milda/dataset_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace milda {
namespace {

constexpr std::string_view kMagic = "MILDA-DATASET 1";

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw std::runtime_error("dataset payload truncated");
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bits |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
}

std::string encode_payload(const DomainDataset& ds) {
    const auto instances = ds.all_instances();
    std::string out;
    out.reserve(instances.size() * (ds.feature_dim() * 8 + 28));
    for (const auto& inst : instances)
        for (Eigen::Index k = 0; k < inst.features.size(); ++k) put_le<double>(out, inst.features[k]);
    for (const auto& inst : instances) put_le<std::int64_t>(out, inst.bag_id);
    for (const auto& inst : instances) put_le<std::int64_t>(out, inst.index_in_bag);
    for (const auto& inst : instances) put_le<std::int32_t>(out, inst.oracle_label ? *inst.oracle_label : -1);
    for (const auto& b : ds.bags())
        for (std::size_t j = 0; j < b.size(); ++j) put_le<std::int32_t>(out, b.label());
    for (const auto& inst : instances) put_le<std::int32_t>(out, static_cast<std::int32_t>(inst.domain));
    return out;
}

}  // namespace

std::string encode_dataset(const DomainDataset& dataset, const nlohmann::json& extra) {
    nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
    meta["D"] = dataset.feature_dim();
    meta["domain"] = std::string(to_string(dataset.domain()));
    meta["split"] = std::string(to_string(dataset.split()));
    meta["counts"] = {{"bags", dataset.bag_count()}, {"instances", dataset.instance_count()}};
    meta["byte_order"] = "little";
    meta["columns"] = nlohmann::json::array({
        {{"name", "features"}, {"dtype", "float64"}, {"shape", "N x D"}},
        {{"name", "bag_id"}, {"dtype", "int64"}},
        {{"name", "index_in_bag"}, {"dtype", "int64"}},
        {{"name", "oracle_label"}, {"dtype", "int32"}, {"missing", -1}},
        {{"name", "bag_label"}, {"dtype", "int32"}},
        {{"name", "domain"}, {"dtype", "int32"}},
    });
    const std::string header = meta.dump(2);
    std::string out;
    out += kMagic;
    out += '\n';
    out += std::to_string(header.size());
    out += '\n';
    out += header;
    out += encode_payload(dataset);
    return out;
}

LoadedDataset decode_dataset(const std::string& bytes) {
    std::size_t pos = bytes.find('\n');
    if (pos == std::string::npos || bytes.compare(0, pos, kMagic) != 0)
        throw std::runtime_error("not a dataset container (bad magic)");
    ++pos;
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw std::runtime_error("dataset header truncated");
    const std::size_t header_len = std::stoull(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    if (pos + header_len > bytes.size()) throw std::runtime_error("dataset header truncated");
    auto meta = nlohmann::json::parse(bytes.substr(pos, header_len));
    pos += header_len;

    const auto dim = meta.at("D").get<std::size_t>();
    const auto n = meta.at("counts").at("instances").get<std::size_t>();
    const auto domain = parse_domain(meta.at("domain").get<std::string>());
    const auto split = parse_split(meta.at("split").get<std::string>());

    std::vector<Instance> rows(n);
    for (auto& r : rows) {
        r.features.resize(static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < dim; ++k) r.features[static_cast<Eigen::Index>(k)] = get_le<double>(bytes, pos);
    }
    for (auto& r : rows) r.bag_id = get_le<std::int64_t>(bytes, pos);
    for (auto& r : rows) r.index_in_bag = get_le<std::int64_t>(bytes, pos);
    for (auto& r : rows) {
        const auto lab = get_le<std::int32_t>(bytes, pos);
        if (lab >= 0) r.oracle_label = lab;
    }
    std::vector<int> bag_labels(n);
    for (auto& l : bag_labels) l = get_le<std::int32_t>(bytes, pos);
    for (auto& r : rows) r.domain = static_cast<Domain>(get_le<std::int32_t>(bytes, pos));
    if (pos != bytes.size()) throw std::runtime_error("trailing bytes after dataset payload");

    std::vector<Bag> bags;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && rows[j].bag_id == rows[i].bag_id) ++j;
        std::vector<Instance> members(rows.begin() + static_cast<std::ptrdiff_t>(i),
                                      rows.begin() + static_cast<std::ptrdiff_t>(j));
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (members[k].index_in_bag != static_cast<std::int64_t>(k))
                throw std::runtime_error("dataset rows out of in-bag order");
        }
        bags.emplace_back(rows[i].bag_id, std::move(members), bag_labels[i], rows[i].domain);
        i = j;
    }
    return {DomainDataset(std::move(bags), domain, split), std::move(meta)};
}

void save_dataset(const std::filesystem::path& path, const DomainDataset& dataset, const nlohmann::json& extra) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    const auto bytes = encode_dataset(dataset, extra);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_dataset(ss.str());
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

std::string content_hash(const DomainDataset& dataset) { return fnv1a_hex(encode_payload(dataset)); }

}  // namespace milda
