#include "ddf/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

#include "ddf/serialization.hpp"

namespace ddf {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'D', 'F', 'C', 'K', 'P', 'T', '1'};

json record_to_json(const StageRecord& r) {
  return json{{"stage", r.stage},      {"frozen_groups", r.frozen_groups},
              {"lr", r.lr},            {"epochs", r.epochs},
              {"split", r.split},      {"seed", r.seed}};
}

StageRecord record_from_json(const json& j) {
  StageRecord r;
  r.stage = j.at("stage");
  r.frozen_groups = j.at("frozen_groups").get<std::vector<std::string>>();
  r.lr = j.at("lr").get<std::map<std::string, double>>();
  r.epochs = j.at("epochs");
  r.split = j.at("split");
  r.seed = j.at("seed");
  return r;
}
}  // namespace

Checkpoint snapshot_checkpoint(const ParamStore& store) {
  Checkpoint ckpt;
  ckpt.params = store.snapshot();
  for (const auto& name : store.names()) ckpt.group_of[name] = store.group_of(name);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json meta;
  meta["seed"] = ckpt.seed;
  meta["config_digest"] = ckpt.config_digest;
  meta["groups"] = ckpt.group_of;
  json lineage = json::array();
  for (const auto& r : ckpt.lineage) lineage.push_back(record_to_json(r));
  meta["lineage"] = lineage;
  std::vector<std::string> names;
  for (const auto& [name, t] : ckpt.params) names.push_back(name);
  meta["tensors"] = names;
  const std::string meta_str = meta.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  f.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = meta_str.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  for (const auto& name : names) write_tensor(f, ckpt.params.at(name));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string meta_str(len, '\0');
  f.read(meta_str.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("load_checkpoint: truncated metadata");
  const json meta = json::parse(meta_str);

  Checkpoint ckpt;
  ckpt.seed = meta.at("seed");
  ckpt.config_digest = meta.at("config_digest");
  ckpt.group_of = meta.at("groups").get<std::map<std::string, std::string>>();
  for (const auto& j : meta.at("lineage")) ckpt.lineage.push_back(record_from_json(j));
  for (const auto& name : meta.at("tensors").get<std::vector<std::string>>())
    ckpt.params.emplace(name, read_tensor(f));
  return ckpt;
}

std::uint64_t checkpoint_hash(const Checkpoint& ckpt) {
  std::uint64_t h = fnv1a(ckpt.config_digest);
  h = fnv1a(&ckpt.seed, sizeof(ckpt.seed), h);
  for (const auto& r : ckpt.lineage) h = fnv1a(r.stage.data(), r.stage.size(), h);
  for (const auto& [name, t] : ckpt.params) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data(), t.numel() * sizeof(double), h);
  }
  return h;
}

}  // namespace ddf
