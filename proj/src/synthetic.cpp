#include "ddf/synthetic.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ddf/image_io.hpp"
#include "ddf/kernels.hpp"
#include "ddf/serialization.hpp"

namespace ddf {

using nlohmann::json;

void SceneConfig::validate() const {
  if (canvas < 16) throw std::invalid_argument("scene: canvas too small");
  if (frames_per_clip < 1) throw std::invalid_argument("scene: frames_per_clip must be >= 1");
  if (target_min_size <= 0 || target_max_size < target_min_size)
    throw std::invalid_argument("scene: invalid target size range");
  if (target_max_size > canvas / 2.0)
    throw std::invalid_argument("scene: target too large for canvas");
  if (occ_coverage <= 0 || occ_coverage > 1)
    throw std::invalid_argument("scene: occ_coverage must lie in (0,1]");
  if (occ_start < 0 || occ_end > 1 || occ_start >= occ_end)
    throw std::invalid_argument("scene: invalid occlusion interval");
  if (lr_factor < 2) throw std::invalid_argument("scene: lr_factor must be >= 2");
  if (ei_low <= 0 || ei_high <= ei_low) throw std::invalid_argument("scene: invalid EI gains");
  if (tc_start < 0 || tc_end > 1 || tc_start >= tc_end)
    throw std::invalid_argument("scene: invalid crossover interval");
  if (distractor_count < 1) throw std::invalid_argument("scene: distractor_count must be >= 1");
  if (frame_format != "raw" && frame_format != "png")
    throw std::invalid_argument("scene: frame_format must be raw or png");
}

namespace {

struct Mover {
  double cx, cy, vx, vy, w, h;

  void step(double canvas) {
    const double mx = w / 2.0 + 2.0, my = h / 2.0 + 2.0;
    cx += vx;
    cy += vy;
    if (cx < mx) { cx = 2 * mx - cx; vx = -vx; }
    if (cx > canvas - mx) { cx = 2 * (canvas - mx) - cx; vx = -vx; }
    if (cy < my) { cy = 2 * my - cy; vy = -vy; }
    if (cy > canvas - my) { cy = 2 * (canvas - my) - cy; vy = -vy; }
  }
  BBox box() const { return {cx - w / 2.0, cy - h / 2.0, w, h}; }
};

void fill_rect(Tensor& field, const BBox& b, double value) {
  // single-channel {H,W} field; a pixel belongs to the box when its center does
  const std::size_t H = field.dim(0), W = field.dim(1);
  const int y0 = std::max(0, static_cast<int>(std::ceil(b.y - 0.5)));
  const int y1 = std::min(static_cast<int>(H) - 1, static_cast<int>(std::floor(b.y + b.h - 0.5)));
  const int x0 = std::max(0, static_cast<int>(std::ceil(b.x - 0.5)));
  const int x1 = std::min(static_cast<int>(W) - 1, static_cast<int>(std::floor(b.x + b.w - 0.5)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      field[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] = value;
}

Tensor replicate3(const Tensor& field) {
  const std::size_t H = field.dim(0), W = field.dim(1);
  Tensor out({3, H, W});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < H * W; ++i) out[c * H * W + i] = field[i];
  return out;
}

Tensor blur_frame(const Tensor& img, double factor) {
  const std::size_t H = img.dim(1), W = img.dim(2);
  const std::size_t hs = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                      std::floor(static_cast<double>(H) / factor)));
  const std::size_t ws = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                      std::floor(static_cast<double>(W) / factor)));
  return kernels::bilinear_resize(kernels::bilinear_resize(img, hs, ws), H, W);
}

void clamp01(Tensor& t) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], 0.0, 1.0);
}

}  // namespace

ClipManifest generate_clip(AttributeId attribute, std::uint64_t seed, const SceneConfig& cfg,
                           const std::string& clip_id) {
  cfg.validate();
  std::mt19937_64 rng(fnv1a(clip_id) ^ seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double canvas = cfg.canvas;
  const int N = cfg.frames_per_clip;

  ClipManifest clip;
  clip.clip_id = clip_id;
  clip.attribute = attribute;
  clip.seed = seed;

  // target appearance and motion
  Mover target;
  target.w = uniform(cfg.target_min_size, cfg.target_max_size);
  target.h = uniform(cfg.target_min_size, cfg.target_max_size);
  target.cx = uniform(target.w / 2 + 4, canvas - target.w / 2 - 4);
  target.cy = uniform(target.h / 2 + 4, canvas - target.h / 2 - 4);
  target.vx = uniform(-cfg.max_speed, cfg.max_speed);
  target.vy = uniform(-cfg.max_speed, cfg.max_speed);
  const double color_r = uniform(0.55, 0.95), color_g = uniform(0.55, 0.95),
               color_b = uniform(0.55, 0.95);
  const double tir_target = uniform(0.75, 0.95);
  const double bg_rgb = uniform(0.08, 0.22), bg_tir = uniform(0.2, 0.35);
  const double grad_rgb = uniform(0.02, 0.12), grad_tir = uniform(0.0, 0.08);

  std::vector<Mover> distractors;
  if (attribute == AttributeId::SA) {
    for (int d = 0; d < cfg.distractor_count; ++d) {
      Mover m;
      m.w = target.w;
      m.h = target.h;
      do {
        m.cx = uniform(m.w / 2 + 4, canvas - m.w / 2 - 4);
        m.cy = uniform(m.h / 2 + 4, canvas - m.h / 2 - 4);
      } while (std::hypot(m.cx - target.cx, m.cy - target.cy) < 2.5 * std::max(m.w, m.h));
      m.vx = uniform(-cfg.max_speed, cfg.max_speed);
      m.vy = uniform(-cfg.max_speed, cfg.max_speed);
      distractors.push_back(m);
    }
  }

  const int occ_t0 = static_cast<int>(std::floor(cfg.occ_start * N));
  const int occ_t1 = static_cast<int>(std::floor(cfg.occ_end * N));
  const int tc_t0 = static_cast<int>(std::floor(cfg.tc_start * N));
  const int tc_t1 = std::max(tc_t0 + 1, static_cast<int>(std::floor(cfg.tc_end * N)) - 1);

  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  const std::size_t HW =
      static_cast<std::size_t>(cfg.canvas) * static_cast<std::size_t>(cfg.canvas);

  for (int t = 0; t < N; ++t) {
    if (t > 0) {
      target.step(canvas);
      for (auto& d : distractors) d.step(canvas);
    }
    const BBox tb = target.box();

    // base fields {H,W}
    Tensor rgb_field[3];
    Tensor tir_field({static_cast<std::size_t>(cfg.canvas), static_cast<std::size_t>(cfg.canvas)});
    for (int c = 0; c < 3; ++c)
      rgb_field[c] =
          Tensor({static_cast<std::size_t>(cfg.canvas), static_cast<std::size_t>(cfg.canvas)});
    for (std::size_t y = 0; y < static_cast<std::size_t>(cfg.canvas); ++y)
      for (std::size_t x = 0; x < static_cast<std::size_t>(cfg.canvas); ++x) {
        const double fx = static_cast<double>(x) / canvas;
        for (int c = 0; c < 3; ++c) rgb_field[c][y * cfg.canvas + x] = bg_rgb + grad_rgb * fx;
        tir_field[y * cfg.canvas + x] = bg_tir + grad_tir * fx;
      }

    // distractors share the target appearance (similar-appearance challenge)
    for (const auto& d : distractors) {
      fill_rect(rgb_field[0], d.box(), color_r);
      fill_rect(rgb_field[1], d.box(), color_g);
      fill_rect(rgb_field[2], d.box(), color_b);
      fill_rect(tir_field, d.box(), tir_target);
    }

    double tir_value = tir_target;
    if (attribute == AttributeId::TC && t >= tc_t0) {
      const double alpha =
          std::clamp(static_cast<double>(t - tc_t0) / static_cast<double>(tc_t1 - tc_t0), 0.0, 1.0);
      tir_value = tir_target + alpha * (bg_tir - tir_target);
      DegradationEvent ev;
      ev.frame = t;
      ev.kind = "tc";
      ev.params["alpha"] = alpha;
      clip.degradations.push_back(ev);
    }
    fill_rect(rgb_field[0], tb, color_r);
    fill_rect(rgb_field[1], tb, color_g);
    fill_rect(rgb_field[2], tb, color_b);
    fill_rect(tir_field, tb, tir_value);

    if (attribute == AttributeId::OCC && t >= occ_t0 && t < occ_t1) {
      BBox occ{tb.x, tb.y, tb.w, cfg.occ_coverage * tb.h};
      fill_rect(rgb_field[0], occ, 0.40);
      fill_rect(rgb_field[1], occ, 0.40);
      fill_rect(rgb_field[2], occ, 0.45);
      fill_rect(tir_field, occ, 0.22);
      DegradationEvent ev;
      ev.frame = t;
      ev.kind = "occ";
      ev.params = {{"x", occ.x}, {"y", occ.y}, {"w", occ.w}, {"h", occ.h},
                   {"coverage", cfg.occ_coverage}};
      clip.degradations.push_back(ev);
    }
    if (attribute == AttributeId::SA) {
      DegradationEvent ev;
      ev.frame = t;
      ev.kind = "sa";
      ev.params["count"] = static_cast<double>(distractors.size());
      for (std::size_t d = 0; d < distractors.size(); ++d) {
        const BBox db = distractors[d].box();
        const std::string p = "d" + std::to_string(d) + "_";
        ev.params[p + "x"] = db.x;
        ev.params[p + "y"] = db.y;
        ev.params[p + "w"] = db.w;
        ev.params[p + "h"] = db.h;
      }
      clip.degradations.push_back(ev);
    }

    // sensor noise, drawn in a fixed order
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < HW; ++i) rgb_field[c][i] += noise(rng);
    for (std::size_t i = 0; i < HW; ++i) tir_field[i] += noise(rng);

    Tensor rgb({3, static_cast<std::size_t>(cfg.canvas), static_cast<std::size_t>(cfg.canvas)});
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < HW; ++i) rgb[static_cast<std::size_t>(c) * HW + i] = rgb_field[c][i];
    Tensor tir = replicate3(tir_field);

    if (attribute == AttributeId::EI) {
      // alternate brightness extremes on the RGB stream only
      const double gain = ((t / 4) % 2 == 0) ? cfg.ei_low : cfg.ei_high;
      for (std::size_t i = 0; i < rgb.numel(); ++i) rgb[i] *= gain;
      DegradationEvent ev;
      ev.frame = t;
      ev.kind = "ei";
      ev.params["gain"] = gain;
      clip.degradations.push_back(ev);
    }
    if (attribute == AttributeId::LR) {
      rgb = blur_frame(rgb, cfg.lr_factor);
      tir = blur_frame(tir, cfg.lr_factor);
      DegradationEvent ev;
      ev.frame = t;
      ev.kind = "lr";
      ev.params["factor"] = cfg.lr_factor;
      clip.degradations.push_back(ev);
    }
    clamp01(rgb);
    clamp01(tir);

    // dual-mode ground truth: the TIR annotation is offset by a bounded jitter
    const double jr = cfg.alignment_jitter * unit(rng);
    const double ja = 2.0 * M_PI * unit(rng);
    BBox gt_tir = tb;
    gt_tir.x += jr * std::cos(ja);
    gt_tir.y += jr * std::sin(ja);

    clip.rgb.push_back(std::move(rgb));
    clip.tir.push_back(std::move(tir));
    clip.gt_rgb.push_back(tb);
    clip.gt_tir.push_back(gt_tir);
  }
  return clip;
}

ManifestIndex make_attribute_subsets(const SceneConfig& config,
                                     const std::map<AttributeId, int>& counts,
                                     std::uint64_t seed) {
  config.validate();
  ManifestIndex index;
  index.seed = seed;
  for (AttributeId attr : kAllAttributes) {
    auto it = counts.find(attr);
    const int n = it == counts.end() ? 0 : it->second;
    if (it != counts.end() && n < 1)
      throw std::invalid_argument("make_attribute_subsets: counts must be >= 1");
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      std::string id = attribute_name(attr);
      for (auto& ch : id) ch = static_cast<char>(std::tolower(ch));
      char buf[16];
      std::snprintf(buf, sizeof(buf), "_%03d", i);
      id += buf;
      ids.push_back(id);
      index.clip_order.push_back(id);
      index.attribute_of[id] = attr;
      index.subsets["all"].push_back(id);
    }
    if (!ids.empty()) index.subsets[attribute_name(attr)] = ids;
  }
  return index;
}

namespace {

json scene_to_json(const SceneConfig& c) {
  return json{{"canvas", c.canvas},
              {"frames_per_clip", c.frames_per_clip},
              {"target_min_size", c.target_min_size},
              {"target_max_size", c.target_max_size},
              {"max_speed", c.max_speed},
              {"noise_sigma", c.noise_sigma},
              {"alignment_jitter", c.alignment_jitter},
              {"occ_coverage", c.occ_coverage},
              {"occ_start", c.occ_start},
              {"occ_end", c.occ_end},
              {"lr_factor", c.lr_factor},
              {"ei_low", c.ei_low},
              {"ei_high", c.ei_high},
              {"tc_start", c.tc_start},
              {"tc_end", c.tc_end},
              {"distractor_count", c.distractor_count},
              {"frame_format", c.frame_format}};
}

json box_to_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }
BBox box_from_json(const json& j) { return {j[0], j[1], j[2], j[3]}; }

}  // namespace

std::string index_json(const ManifestIndex& index) {
  json j;
  j["seed"] = index.seed;
  j["config_digest"] = index.config_digest;
  j["clips"] = index.clip_order;
  j["subsets"] = index.subsets;
  json attr;
  for (const auto& [id, a] : index.attribute_of) attr[id] = attribute_name(a);
  j["attributes"] = attr;
  return j.dump(2);
}

void write_dataset(const std::filesystem::path& dir, const ManifestIndex& index,
                   const SceneConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json idx = json::parse(index_json(index));
  idx["scene"] = scene_to_json(config);
  write_text_file(dir / "index.json", idx.dump(2));

  for (const auto& id : index.clip_order) {
    const ClipManifest clip = generate_clip(index.attribute_of.at(id), index.seed, config, id);
    const fs::path clip_dir = dir / id;
    fs::create_directories(clip_dir);

    json m;
    m["clip_id"] = clip.clip_id;
    m["attribute"] = attribute_name(clip.attribute);
    m["seed"] = clip.seed;
    m["frames"] = clip.frames();
    m["frame_format"] = config.frame_format;
    json gtr = json::array(), gtt = json::array();
    for (std::size_t t = 0; t < clip.frames(); ++t) {
      gtr.push_back(box_to_json(clip.gt_rgb[t]));
      gtt.push_back(box_to_json(clip.gt_tir[t]));
    }
    m["gt_rgb"] = gtr;
    m["gt_tir"] = gtt;
    json degs = json::array();
    for (const auto& ev : clip.degradations)
      degs.push_back(json{{"frame", ev.frame}, {"kind", ev.kind}, {"params", ev.params}});
    m["degradations"] = degs;
    write_text_file(clip_dir / "manifest.json", m.dump(2));

    char name[32];
    for (std::size_t t = 0; t < clip.frames(); ++t) {
      for (const auto& [mod, frame] : {std::pair<const char*, const Tensor*>{"rgb", &clip.rgb[t]},
                                       {"tir", &clip.tir[t]}}) {
        if (config.frame_format == "raw") {
          std::snprintf(name, sizeof(name), "%s_%04zu.tns", mod, t);
          save_tensor_file(clip_dir / name, *frame);
        } else {
          std::snprintf(name, sizeof(name), "%s_%04zu.png", mod, t);
          write_png(clip_dir / name, tensor_to_image(*frame));
        }
      }
    }
  }
}

ManifestIndex read_index(const std::filesystem::path& dir) {
  const json j = json::parse(read_text_file(dir / "index.json"));
  ManifestIndex index;
  index.seed = j.at("seed");
  index.config_digest = j.value("config_digest", "");
  index.clip_order = j.at("clips").get<std::vector<std::string>>();
  index.subsets = j.at("subsets").get<std::map<std::string, std::vector<std::string>>>();
  for (const auto& [id, name] : j.at("attributes").items())
    index.attribute_of[id] = attribute_from_name(name.get<std::string>());
  return index;
}

ClipManifest load_clip(const std::filesystem::path& dir, const std::string& clip_id) {
  namespace fs = std::filesystem;
  const fs::path clip_dir = dir / clip_id;
  const json m = json::parse(read_text_file(clip_dir / "manifest.json"));
  ClipManifest clip;
  clip.clip_id = m.at("clip_id");
  clip.attribute = attribute_from_name(m.at("attribute").get<std::string>());
  clip.seed = m.at("seed");
  const std::size_t frames = m.at("frames");
  const std::string fmt = m.value("frame_format", "raw");
  for (const auto& b : m.at("gt_rgb")) clip.gt_rgb.push_back(box_from_json(b));
  for (const auto& b : m.at("gt_tir")) clip.gt_tir.push_back(box_from_json(b));
  for (const auto& d : m.at("degradations")) {
    DegradationEvent ev;
    ev.frame = d.at("frame");
    ev.kind = d.at("kind");
    ev.params = d.at("params").get<std::map<std::string, double>>();
    clip.degradations.push_back(ev);
  }
  char name[32];
  for (std::size_t t = 0; t < frames; ++t) {
    for (const char* mod : {"rgb", "tir"}) {
      Tensor frame;
      if (fmt == "raw") {
        std::snprintf(name, sizeof(name), "%s_%04zu.tns", mod, t);
        frame = load_tensor_file(clip_dir / name);
      } else {
        std::snprintf(name, sizeof(name), "%s_%04zu.png", mod, t);
        frame = image_to_tensor(read_png(clip_dir / name));
        if (frame.dim(0) == 1) frame = replicate3(Tensor({frame.dim(1), frame.dim(2)}, frame.vec()));
      }
      (std::string(mod) == "rgb" ? clip.rgb : clip.tir).push_back(std::move(frame));
    }
  }
  return clip;
}

}  // namespace ddf
