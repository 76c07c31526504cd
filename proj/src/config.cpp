#include "ddf/config.hpp"

#include <fstream>
#include <sstream>

#include "ddf/errors.hpp"
#include "ddf/serialization.hpp"

namespace ddf {

RunConfig default_config(const std::string& profile) {
  RunConfig cfg;
  cfg.profile = profile;
  if (profile == "toy") {
    cfg.model.backbone.input_resolution = 32;
    cfg.model.backbone.channels = {16, 16};
    cfg.model.backbone.strides = {2, 2};
    cfg.model.backbone.ddf_layers = {2};
    cfg.model.predictor.dim = 32;
    cfg.model.predictor.encoder_layers = 1;
    cfg.model.predictor.ffn_dim = 64;
    cfg.scene.canvas = 96;
    cfg.scene.frames_per_clip = 16;
    for (AttributeId a : kAllAttributes) cfg.data.counts[a] = 3;
    cfg.data.val_per_attribute = 1;
    cfg.train.epochs_stage1_gen = 6;
    cfg.train.epochs_stage1_attr = 12;
    cfg.train.epochs_stage2 = 4;
    cfg.train.epochs_stage3 = 4;
    cfg.train.warmup_epochs = 4;
    cfg.train.warmup_lr = 1e-2;
    cfg.train.lr_scale = 1000.0;  // desk-scale override of the stage rates
    cfg.train.batch_size = 2;
  } else if (profile == "paper-default") {
    cfg.model.backbone.input_resolution = 64;
    cfg.model.backbone.channels = {16, 32, 64};
    cfg.model.backbone.strides = {2, 2, 2};
    cfg.model.backbone.ddf_layers = {1, 2, 3};
    cfg.model.predictor.dim = 48;
    cfg.model.predictor.encoder_layers = 1;
    cfg.model.predictor.ffn_dim = 96;
    cfg.scene.canvas = 128;
    cfg.scene.frames_per_clip = 24;
    for (AttributeId a : kAllAttributes) cfg.data.counts[a] = 8;
    cfg.data.val_per_attribute = 2;
    cfg.train.epochs_stage1_gen = 30;
    cfg.train.epochs_stage1_attr = 30;
    cfg.train.epochs_stage2 = 30;
    cfg.train.epochs_stage3 = 60;
    cfg.train.warmup_epochs = 5;
    cfg.train.warmup_lr = 1e-4;
    cfg.train.lr_scale = 1.0;
  } else {
    throw UsageError("unknown profile: " + profile);
  }
  return cfg;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& v) { return std::stoi(v); }
double to_double(const std::string& v) { return std::stod(v); }
bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config: expected boolean, got '" + v + "'");
}

std::vector<std::size_t> to_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& p : split(v, ',')) out.push_back(static_cast<std::size_t>(std::stoul(trim(p))));
  return out;
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& p : split(v, ',')) out.push_back(to_int(trim(p)));
  return out;
}

}  // namespace

RunConfig apply_config_line(const RunConfig& base, const std::string& key,
                            const std::string& value) {
  RunConfig c = base;
  auto& m = c.model;
  auto& s = c.scene;
  auto& t = c.track;
  auto& tr = c.train;

  if (key == "config_version") {
    if (to_int(value) != 1) throw UsageError("config: unsupported config_version " + value);
  } else if (key == "profile") {
    c = default_config(value);
  } else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "out") c.out_dir = value;
  else if (key == "eval.threshold") c.eval_threshold = to_double(value);
  else if (key == "model.input_resolution") m.backbone.input_resolution = to_int(value);
  else if (key == "model.channels") m.backbone.channels = to_size_list(value);
  else if (key == "model.strides") m.backbone.strides = to_int_list(value);
  else if (key == "model.ddf_layers") {
    m.backbone.ddf_layers.clear();
    if (trim(value) != "none")
      for (int l : to_int_list(value)) m.backbone.ddf_layers.insert(l);
  } else if (key == "model.predictor_dim") m.predictor.dim = static_cast<std::size_t>(to_int(value));
  else if (key == "model.encoder_layers") m.predictor.encoder_layers = to_int(value);
  else if (key == "model.ffn_dim") m.predictor.ffn_dim = static_cast<std::size_t>(to_int(value));
  else if (key == "model.positional_encoding") m.predictor.positional_encoding = to_bool(value);
  else if (key == "model.reduction") m.reduction = static_cast<std::size_t>(to_int(value));
  else if (key == "scene.canvas") s.canvas = to_int(value);
  else if (key == "scene.frames_per_clip") s.frames_per_clip = to_int(value);
  else if (key == "scene.target_min_size") s.target_min_size = to_double(value);
  else if (key == "scene.target_max_size") s.target_max_size = to_double(value);
  else if (key == "scene.max_speed") s.max_speed = to_double(value);
  else if (key == "scene.noise_sigma") s.noise_sigma = to_double(value);
  else if (key == "scene.alignment_jitter") s.alignment_jitter = to_double(value);
  else if (key == "scene.occ_coverage") s.occ_coverage = to_double(value);
  else if (key == "scene.occ_start") s.occ_start = to_double(value);
  else if (key == "scene.occ_end") s.occ_end = to_double(value);
  else if (key == "scene.lr_factor") s.lr_factor = to_double(value);
  else if (key == "scene.ei_low") s.ei_low = to_double(value);
  else if (key == "scene.ei_high") s.ei_high = to_double(value);
  else if (key == "scene.tc_start") s.tc_start = to_double(value);
  else if (key == "scene.tc_end") s.tc_end = to_double(value);
  else if (key == "scene.distractor_count") s.distractor_count = to_int(value);
  else if (key == "scene.frame_format") s.frame_format = value;
  else if (key == "track.memory_capacity") t.memory_capacity = to_int(value);
  else if (key == "track.refresh_interval") t.refresh_interval = to_int(value);
  else if (key == "track.score_floor") t.score_floor = to_double(value);
  else if (key == "track.search_area_factor") t.search_area_factor = to_double(value);
  else if (key == "train.epochs_stage1_gen") tr.epochs_stage1_gen = to_int(value);
  else if (key == "train.epochs_stage1_attr") tr.epochs_stage1_attr = to_int(value);
  else if (key == "train.epochs_stage2") tr.epochs_stage2 = to_int(value);
  else if (key == "train.epochs_stage3") tr.epochs_stage3 = to_int(value);
  else if (key == "train.warmup_epochs") tr.warmup_epochs = to_int(value);
  else if (key == "train.warmup_lr") tr.warmup_lr = to_double(value);
  else if (key == "train.lr_scale") tr.lr_scale = to_double(value);
  else if (key == "train.batch_size") tr.batch_size = to_int(value);
  else if (key == "train.frames_per_sample") tr.frames_per_sample = to_int(value);
  else if (key == "train.weight_decay") tr.weight_decay = to_double(value);
  else if (key == "data.val_per_attribute") c.data.val_per_attribute = to_int(value);
  else if (key.rfind("data.count.", 0) == 0) {
    c.data.counts[attribute_from_name(key.substr(std::string("data.count.").size()))] =
        to_int(value);
  } else {
    throw UsageError("config: unknown key '" + key + "'");
  }
  return c;
}

RunConfig apply_config_file(const RunConfig& base, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("config file not found: " + path.string());
  RunConfig cfg = base;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    cfg = apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string config_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "config_version = 1\n";
  os << "profile = " << c.profile << "\n";
  os << "seed = " << c.seed << "\n";
  os << "eval.threshold = " << c.eval_threshold << "\n";
  os << "model.input_resolution = " << c.model.backbone.input_resolution << "\n";
  os << "model.channels = ";
  for (std::size_t i = 0; i < c.model.backbone.channels.size(); ++i)
    os << (i ? "," : "") << c.model.backbone.channels[i];
  os << "\nmodel.strides = ";
  for (std::size_t i = 0; i < c.model.backbone.strides.size(); ++i)
    os << (i ? "," : "") << c.model.backbone.strides[i];
  os << "\nmodel.ddf_layers = ";
  if (c.model.backbone.ddf_layers.empty()) {
    os << "none";
  } else {
    bool first = true;
    for (int l : c.model.backbone.ddf_layers) {
      os << (first ? "" : ",") << l;
      first = false;
    }
  }
  os << "\nmodel.predictor_dim = " << c.model.predictor.dim << "\n";
  os << "model.encoder_layers = " << c.model.predictor.encoder_layers << "\n";
  os << "model.ffn_dim = " << c.model.predictor.ffn_dim << "\n";
  os << "model.positional_encoding = " << (c.model.predictor.positional_encoding ? "true" : "false")
     << "\n";
  os << "model.reduction = " << c.model.reduction << "\n";
  os << "scene.canvas = " << c.scene.canvas << "\n";
  os << "scene.frames_per_clip = " << c.scene.frames_per_clip << "\n";
  os << "scene.target_min_size = " << c.scene.target_min_size << "\n";
  os << "scene.target_max_size = " << c.scene.target_max_size << "\n";
  os << "scene.max_speed = " << c.scene.max_speed << "\n";
  os << "scene.noise_sigma = " << c.scene.noise_sigma << "\n";
  os << "scene.alignment_jitter = " << c.scene.alignment_jitter << "\n";
  os << "scene.occ_coverage = " << c.scene.occ_coverage << "\n";
  os << "scene.occ_start = " << c.scene.occ_start << "\n";
  os << "scene.occ_end = " << c.scene.occ_end << "\n";
  os << "scene.lr_factor = " << c.scene.lr_factor << "\n";
  os << "scene.ei_low = " << c.scene.ei_low << "\n";
  os << "scene.ei_high = " << c.scene.ei_high << "\n";
  os << "scene.tc_start = " << c.scene.tc_start << "\n";
  os << "scene.tc_end = " << c.scene.tc_end << "\n";
  os << "scene.distractor_count = " << c.scene.distractor_count << "\n";
  os << "scene.frame_format = " << c.scene.frame_format << "\n";
  os << "track.memory_capacity = " << c.track.memory_capacity << "\n";
  os << "track.refresh_interval = " << c.track.refresh_interval << "\n";
  os << "track.score_floor = " << c.track.score_floor << "\n";
  os << "track.search_area_factor = " << c.track.search_area_factor << "\n";
  os << "train.epochs_stage1_gen = " << c.train.epochs_stage1_gen << "\n";
  os << "train.epochs_stage1_attr = " << c.train.epochs_stage1_attr << "\n";
  os << "train.epochs_stage2 = " << c.train.epochs_stage2 << "\n";
  os << "train.epochs_stage3 = " << c.train.epochs_stage3 << "\n";
  os << "train.warmup_epochs = " << c.train.warmup_epochs << "\n";
  os << "train.warmup_lr = " << c.train.warmup_lr << "\n";
  os << "train.lr_scale = " << c.train.lr_scale << "\n";
  os << "train.batch_size = " << c.train.batch_size << "\n";
  os << "train.frames_per_sample = " << c.train.frames_per_sample << "\n";
  os << "train.weight_decay = " << c.train.weight_decay << "\n";
  os << "data.val_per_attribute = " << c.data.val_per_attribute << "\n";
  for (AttributeId a : kAllAttributes) {
    auto it = c.data.counts.find(a);
    if (it != c.data.counts.end())
      os << "data.count." << attribute_name(a) << " = " << it->second << "\n";
  }
  return os.str();
}

std::string config_digest(const RunConfig& cfg) {
  const std::uint64_t h = fnv1a(config_text(cfg));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ddf
