#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssmdg/data/dataset.hpp"

namespace ssmdg::data {

void to_json(nlohmann::json& j, const TaskSpec& spec);
/// Strict: unknown keys are rejected, absent keys keep their defaults.
void from_json(const nlohmann::json& j, TaskSpec& spec);

struct DatasetBundle {
    TaskSpec spec;
    std::vector<DomainDataset> domains;
};

/// Writes `<stem>.bin` and a `<stem>.json` sidecar echoing the task spec.
///
/// Binary layout, all little-endian:
///   char[8]  magic "SSMDGDS1"
///   u32      format version (1)
///   u32      M, C, K
///   u32[M]   input dims
///   K x { u32 n_labeled, u32 n_unlabeled }
///   K x {
///     (n_labeled + n_unlabeled) x { u64 provenance id, f64[sum dims] inputs }
///     i32[n_labeled]   labels
///     i32[n_unlabeled] hidden labels
///   }
void export_datasets(const std::filesystem::path& stem, const TaskSpec& spec,
                     const std::vector<DomainDataset>& domains);

DatasetBundle import_datasets(const std::filesystem::path& stem);

}  // namespace ssmdg::data
