#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "milda/types.hpp"

namespace milda {

// Dataset container (".mild" file):
//
//   line 1   "MILDA-DATASET 1"
//   line 2   decimal byte length L of the metadata record
//   L bytes  JSON metadata: D, domain, split, counts, seed, generator
//            config, and a "columns" table describing the payload
//   payload  little-endian, fixed width, one block per column in order:
//              features      float64  N x D, row-major (row = instance)
//              bag_id        int64    N
//              index_in_bag  int64    N
//              oracle_label  int32    N   (-1 when absent)
//              bag_label     int32    N
//              domain        int32    N   (0 source, 1 target)
//
// Instances appear in bag order, then in-bag order, so loading restores the
// exact bag layout.

struct LoadedDataset {
    DomainDataset dataset;
    nlohmann::json metadata;
};

/// Serializes to bytes. `extra` is merged into the metadata record (seed,
/// generator config, ...).
std::string encode_dataset(const DomainDataset& dataset, const nlohmann::json& extra = {});
LoadedDataset decode_dataset(const std::string& bytes);

void save_dataset(const std::filesystem::path& path, const DomainDataset& dataset,
                  const nlohmann::json& extra = {});
LoadedDataset load_dataset(const std::filesystem::path& path);

/// 64-bit FNV-1a over the encoded payload (metadata excluded), hex string.
std::string content_hash(const DomainDataset& dataset);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace milda
