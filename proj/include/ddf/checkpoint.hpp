#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddf/params.hpp"
#include "ddf/tensor.hpp"

namespace ddf {

/// One training stage as recorded in a checkpoint's lineage.
struct StageRecord {
  std::string stage;  // "stage1_gen" | "stage1_attr:<A>" | "stage2_afm" | "stage3_efm"
  std::vector<std::string> frozen_groups;
  std::map<std::string, double> lr;
  int epochs = 0;
  std::string split;
  std::uint64_t seed = 0;
};

/// Named parameter snapshot with stage provenance and freeze-mask history.
/// Reloading a checkpoint reproduces forward outputs bit-identically.
struct Checkpoint {
  std::map<std::string, Tensor> params;
  std::map<std::string, std::string> group_of;
  std::vector<StageRecord> lineage;
  std::uint64_t seed = 0;
  std::string config_digest;

  bool has_stage(const std::string& stage) const {
    for (const auto& r : lineage)
      if (r.stage == stage) return true;
    return false;
  }
};

Checkpoint snapshot_checkpoint(const ParamStore& store);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over metadata and raw tensor bytes; equal hashes mean bit-equal
/// parameter stores.
std::uint64_t checkpoint_hash(const Checkpoint& ckpt);

}  // namespace ddf
