#include "ddf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ddf/errors.hpp"

namespace ddf {

StageConfig make_stage_config(const std::string& stage, const RunConfig& cfg) {
  const double s = cfg.train.lr_scale;
  StageConfig sc;
  sc.stage_name = stage;
  sc.weight_decay = cfg.train.weight_decay;
  sc.batch_size = cfg.train.batch_size;
  sc.seed = cfg.seed ^ fnv1a(stage);
  if (stage == "stage1_gen") {
    sc.lr = {{"branch:GEN", 1e-5 * s}, {"backbone", 5e-6 * s}, {"predictor", 5e-6 * s}};
    sc.epochs = cfg.train.epochs_stage1_gen;
    sc.split = "all";
    sc.warmup_epochs = cfg.train.warmup_epochs;
    sc.warmup_lr = cfg.train.warmup_lr;
  } else if (stage.rfind("stage1_attr:", 0) == 0) {
    const std::string attr = stage.substr(std::string("stage1_attr:").size());
    if (attr == "GEN")
      throw UsageError("stage1_attr: the GEN branch is trained by stage1_gen");
    attribute_from_name(attr);  // validates
    sc.lr = {{"branch:" + attr, 1e-5 * s}};
    sc.epochs = cfg.train.epochs_stage1_attr;
    sc.split = attr;
  } else if (stage == "stage2_afm") {
    sc.lr = {{"afm", 1e-5 * s}};
    sc.epochs = cfg.train.epochs_stage2;
    sc.split = "all";
  } else if (stage == "stage3_efm") {
    sc.lr = {{"efm", 1e-5 * s}, {"backbone", 1e-6 * s}, {"predictor", 1e-6 * s},
             {"afm", 1e-6 * s}};
    for (AttributeId a : kAllAttributes) sc.lr["branch:" + attribute_name(a)] = 1e-6 * s;
    sc.epochs = cfg.train.epochs_stage3;
    sc.split = "all";
  } else {
    throw UsageError("unknown stage: " + stage);
  }
  return sc;
}

FreezeMask freeze_mask_for(const ParamStore& store, const StageConfig& cfg) {
  FreezeMask frozen;
  for (const std::string& g : store.groups())
    if (!cfg.lr.count(g)) frozen.insert(g);
  return frozen;
}

void AdamW::step(ParamStore& store, const std::map<std::string, double>& lr_of_group,
                 double weight_decay, const FreezeMask& frozen) {
  for (const std::string& name : store.names()) {
    const std::string& group = store.group_of(name);
    if (frozen.count(group)) continue;
    auto lit = lr_of_group.find(group);
    if (lit == lr_of_group.end()) continue;
    const double lr = lit->second;

    ad::Var v = store.get(name);
    Tensor& p = v.mutable_value();
    State& st = state_[name];
    if (st.m.numel() != p.numel()) {
      st.m = Tensor::zeros(p.shape());
      st.v = Tensor::zeros(p.shape());
      st.t = 0;
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    const bool has_grad = v.has_grad();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double g = has_grad ? v.grad()[i] : 0.0;
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * p[i]);
    }
  }
}

DataSplits build_splits(const std::vector<ClipManifest>& clips, int val_per_attribute) {
  DataSplits out;
  for (AttributeId attr : kAllAttributes) {
    std::vector<const ClipManifest*> subset;
    for (const auto& c : clips)
      if (c.attribute == attr) subset.push_back(&c);
    if (subset.empty()) continue;
    const int val_n = std::min<int>(val_per_attribute, static_cast<int>(subset.size()) - 1);
    const std::size_t train_n = subset.size() - static_cast<std::size_t>(std::max(0, val_n));
    const std::string name = attribute_name(attr);
    for (std::size_t i = 0; i < subset.size(); ++i) {
      if (i < train_n) {
        out.train[name].push_back(subset[i]);
        out.train["all"].push_back(subset[i]);
      } else {
        out.val[name].push_back(subset[i]);
        out.val["all"].push_back(subset[i]);
      }
    }
  }
  return out;
}

namespace {

Tensor to_batch(const Tensor& chw) { return Tensor({1, chw.dim(0), chw.dim(1), chw.dim(2)}, chw.vec()); }

struct EncodedSample {
  std::vector<ad::Var> train_feats;
  ad::Var test_feat;
  Tensor gauss, ltrb, mask;
};

EncodedSample encode_sample(const TrackerModel& model, const ClipManifest& clip,
                            const std::vector<std::size_t>& train_frames, std::size_t test_frame,
                            FusionMode mode, AttributeId active_branch, const TrackConfig& tc) {
  if (train_frames.empty()) throw std::invalid_argument("encode_sample: no training frames");
  const int res = model.config().backbone.input_resolution;
  auto crop_side = [&](const BBox& b) {
    return std::max(tc.min_crop_side, tc.search_area_factor * std::sqrt(b.area()));
  };
  EncodedSample s;
  for (std::size_t f : train_frames) {
    const BBox& gt = clip.gt_rgb.at(f);
    const double side = crop_side(gt);
    ad::Var x = model.backbone_forward(
        ad::constant(to_batch(crop_resize(clip.rgb[f], gt.cx(), gt.cy(), side, res))),
        ad::constant(to_batch(crop_resize(clip.tir[f], gt.cx(), gt.cy(), side, res))), mode,
        active_branch);
    s.train_feats.push_back(
        model.encode_target_state(x, frame_to_crop(gt, gt.cx(), gt.cy(), side, res)));
  }
  const BBox& gt = clip.gt_rgb.at(test_frame);
  const double side = crop_side(gt);
  ad::Var x = model.backbone_forward(
      ad::constant(to_batch(crop_resize(clip.rgb[test_frame], gt.cx(), gt.cy(), side, res))),
      ad::constant(to_batch(crop_resize(clip.tir[test_frame], gt.cx(), gt.cy(), side, res))), mode,
      active_branch);
  s.test_feat = model.encode_test_state(x);
  const BBox gt_crop = frame_to_crop(gt, gt.cx(), gt.cy(), side, res);
  s.gauss = model.gaussian_label(gt_crop);
  auto [ltrb, mask] = model.ltrb_target(gt_crop);
  s.ltrb = ltrb;
  s.mask = mask;
  return s;
}

}  // namespace

ad::Var sample_loss(const TrackerModel& model, const ClipManifest& clip,
                    const std::vector<std::size_t>& train_frames, std::size_t test_frame,
                    FusionMode mode, AttributeId active_branch, const TrackConfig& tc,
                    LossParts* parts) {
  EncodedSample s =
      encode_sample(model, clip, train_frames, test_frame, mode, active_branch, tc);
  TargetModelWeights w = model.predictor_forward(s.train_feats, s.test_feat);
  auto [score, ltrb] = model.target_model_apply(s.test_feat, w);
  ad::Var cls = ad::mse_loss(score, s.gauss);
  ad::Var reg = ad::l1_loss_masked(ltrb, s.ltrb, s.mask);
  if (parts) {
    parts->cls = cls.value()[0];
    parts->reg = reg.value()[0];
  }
  return ad::add(cls, reg);
}

LossParts split_loss(const TrackerModel& model, const std::vector<const ClipManifest*>& clips,
                     FusionMode mode, AttributeId active_branch, const TrackConfig& tc) {
  if (clips.empty()) throw std::invalid_argument("split_loss: empty split");
  LossParts acc;
  for (const ClipManifest* clip : clips) {
    const std::size_t n = clip->frames();
    const std::vector<std::size_t> train_frames = {0, n / 2};
    LossParts p;
    sample_loss(model, *clip, train_frames, n - 1, mode, active_branch, tc, &p);
    acc.cls += p.cls / static_cast<double>(clips.size());
    acc.reg += p.reg / static_cast<double>(clips.size());
  }
  return acc;
}

namespace {

struct StageRunner {
  TrackerModel& model;
  ParamStore& store;
  const StageConfig& cfg;
  const TrackConfig& tc;
  FusionMode mode;
  AttributeId active;
  StageLogger log;
  std::ostringstream log_text;

  void emit(const std::string& line) {
    log_text << line << '\n';
    if (log) log(line);
  }

  std::vector<double> run(const std::vector<const ClipManifest*>& clips,
                          const std::map<std::string, double>& lr, int epochs,
                          std::mt19937_64& rng, const char* phase) {
    if (clips.empty()) throw MissingInputError(cfg.stage_name + ": empty training split");
    FreezeMask frozen;
    for (const std::string& g : store.groups())
      if (!lr.count(g)) frozen.insert(g);
    AdamW opt;
    std::vector<double> epoch_losses;
    const int frames_per_sample = 2;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::vector<std::size_t> order(clips.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_loss = 0.0;
      std::size_t iters = 0;
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        store.zero_grads();
        std::vector<ad::Var> losses;
        for (std::size_t i = start;
             i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i) {
          const ClipManifest& clip = *clips[order[i]];
          std::uniform_int_distribution<std::size_t> pick(0, clip.frames() - 1);
          const std::size_t test_frame = pick(rng);
          std::vector<std::size_t> train_frames;
          for (int f = 0; f < frames_per_sample; ++f) {
            std::size_t idx = pick(rng);
            if (clip.frames() > 1)
              while (idx == test_frame) idx = pick(rng);
            train_frames.push_back(idx);
          }
          losses.push_back(
              sample_loss(model, clip, train_frames, test_frame, mode, active, tc, nullptr));
        }
        ad::Var total = ad::scale(ad::add_n(losses), 1.0 / static_cast<double>(losses.size()));
        ad::backward(total);
        opt.step(store, lr, cfg.weight_decay, frozen);
        epoch_loss += total.value()[0];
        ++iters;
        std::ostringstream line;
        line.precision(10);
        line << cfg.stage_name << '\t' << phase << '\t' << epoch << '\t' << (iters - 1) << '\t'
             << total.value()[0];
        emit(line.str());
      }
      epoch_losses.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, iters)));
    }
    return epoch_losses;
  }
};

StageRecord make_record(const ParamStore& store, const StageConfig& cfg) {
  StageRecord rec;
  rec.stage = cfg.stage_name;
  const FreezeMask frozen = freeze_mask_for(store, cfg);
  rec.frozen_groups.assign(frozen.begin(), frozen.end());
  rec.lr = cfg.lr;
  rec.epochs = cfg.epochs;
  rec.split = cfg.split;
  rec.seed = cfg.seed;
  return rec;
}

Checkpoint finish(const ParamStore& store, std::vector<StageRecord> lineage,
                  const StageConfig& cfg, const RunConfig& rc) {
  Checkpoint ckpt = snapshot_checkpoint(store);
  lineage.push_back(make_record(store, cfg));
  ckpt.lineage = std::move(lineage);
  ckpt.seed = rc.seed;
  ckpt.config_digest = config_digest(rc);
  return ckpt;
}

const std::vector<const ClipManifest*>& split_or_throw(const DataSplits& data,
                                                       const std::string& name) {
  auto it = data.train.find(name);
  if (it == data.train.end() || it->second.empty())
    throw MissingInputError("missing training split: " + name);
  return it->second;
}

}  // namespace

StageResult run_stage1_gen(TrackerModel& model, ParamStore& store, const DataSplits& data,
                           const RunConfig& cfg, const Checkpoint* resume, StageLogger log) {
  const StageConfig sc = make_stage_config("stage1_gen", cfg);
  std::vector<StageRecord> lineage;
  if (resume) {
    store.load_values(resume->params);
    lineage = resume->lineage;
  }
  StageRunner runner{model, store, sc, cfg.track, FusionMode::Stage1Bypass, AttributeId::GEN,
                     std::move(log), {}};
  std::mt19937_64 rng(sc.seed);
  StageResult result;
  if (sc.warmup_epochs > 0) {
    // Random initialization stands in for pretrained weights; warm the
    // backbone and predictor up on the full split before the GEN branch.
    const std::map<std::string, double> wlr = {{"backbone", sc.warmup_lr},
                                               {"predictor", sc.warmup_lr}};
    runner.mode = FusionMode::Plain;
    runner.run(split_or_throw(data, "all"), wlr, sc.warmup_epochs, rng, "warmup");
    StageConfig wrec = sc;
    wrec.stage_name = "stage0_warmup";
    wrec.lr = wlr;
    wrec.epochs = sc.warmup_epochs;
    lineage.push_back(make_record(store, wrec));
  }
  runner.mode = FusionMode::Stage1Bypass;
  result.epoch_losses = runner.run(split_or_throw(data, sc.split), sc.lr, sc.epochs, rng, "main");
  result.checkpoint = finish(store, std::move(lineage), sc, cfg);
  result.log = runner.log_text.str();
  return result;
}

StageResult run_stage1_attr(TrackerModel& model, ParamStore& store, const Checkpoint& ckpt,
                            AttributeId attr, const DataSplits& data, const RunConfig& cfg,
                            StageLogger log) {
  if (attr == AttributeId::GEN)
    throw UsageError("run_stage1_attr: GEN is trained by stage1_gen");
  if (!ckpt.has_stage("stage1_gen"))
    throw LineageError("stage1_attr requires a stage1_gen checkpoint");
  const StageConfig sc = make_stage_config("stage1_attr:" + attribute_name(attr), cfg);
  store.load_values(ckpt.params);
  StageRunner runner{model, store, sc, cfg.track, FusionMode::Stage1Bypass, attr, std::move(log),
                     {}};
  std::mt19937_64 rng(sc.seed);
  StageResult result;
  result.epoch_losses = runner.run(split_or_throw(data, sc.split), sc.lr, sc.epochs, rng, "main");
  result.checkpoint = finish(store, ckpt.lineage, sc, cfg);
  result.log = runner.log_text.str();
  return result;
}

StageResult run_stage2_afm(TrackerModel& model, ParamStore& store, const Checkpoint& ckpt,
                           const DataSplits& data, const RunConfig& cfg, StageLogger log) {
  if (!ckpt.has_stage("stage1_gen"))
    throw LineageError("stage2_afm requires the full stage-1 lineage (missing stage1_gen)");
  for (AttributeId a : kAllAttributes) {
    if (a == AttributeId::GEN) continue;
    if (!ckpt.has_stage("stage1_attr:" + attribute_name(a)))
      throw LineageError("stage2_afm requires the full stage-1 lineage (missing stage1_attr:" +
                         attribute_name(a) + ")");
  }
  const StageConfig sc = make_stage_config("stage2_afm", cfg);
  store.load_values(ckpt.params);
  // The aggregation module starts from a fresh random initialization.
  std::mt19937_64 init_rng(cfg.seed ^ fnv1a("afm_init"));
  store.reinit_group("afm", init_rng);
  StageRunner runner{model, store, sc, cfg.track, FusionMode::Stage2NoEfm, AttributeId::GEN,
                     std::move(log), {}};
  std::mt19937_64 rng(sc.seed);
  StageResult result;
  result.epoch_losses = runner.run(split_or_throw(data, sc.split), sc.lr, sc.epochs, rng, "main");
  result.checkpoint = finish(store, ckpt.lineage, sc, cfg);
  result.log = runner.log_text.str();
  return result;
}

StageResult run_stage3_efm(TrackerModel& model, ParamStore& store, const Checkpoint& ckpt,
                           const DataSplits& data, const RunConfig& cfg, StageLogger log) {
  if (!ckpt.has_stage("stage2_afm"))
    throw LineageError("stage3_efm requires a stage2_afm checkpoint");
  const StageConfig sc = make_stage_config("stage3_efm", cfg);
  store.load_values(ckpt.params);
  StageRunner runner{model, store, sc, cfg.track, FusionMode::Full, AttributeId::GEN,
                     std::move(log), {}};
  std::mt19937_64 rng(sc.seed);
  StageResult result;
  result.epoch_losses = runner.run(split_or_throw(data, sc.split), sc.lr, sc.epochs, rng, "main");
  result.checkpoint = finish(store, ckpt.lineage, sc, cfg);
  result.log = runner.log_text.str();
  return result;
}

std::vector<double> overfit_train(TrackerModel& model, ParamStore& store,
                                  const std::vector<const ClipManifest*>& clips, int iterations,
                                  double lr, std::uint64_t seed, const TrackConfig& tc,
                                  FusionMode mode) {
  if (clips.empty()) throw std::invalid_argument("overfit_train: no clips");
  std::map<std::string, double> lr_table;
  for (const std::string& g : store.groups()) lr_table[g] = lr;
  AdamW opt;
  std::mt19937_64 rng(seed);
  std::vector<double> cls_losses;
  for (int it = 0; it < iterations; ++it) {
    store.zero_grads();
    std::vector<ad::Var> losses;
    double cls_sum = 0.0;
    const std::size_t batch = std::min<std::size_t>(4, clips.size());
    for (std::size_t b = 0; b < batch; ++b) {
      const ClipManifest& clip = *clips[(static_cast<std::size_t>(it) * batch + b) % clips.size()];
      std::uniform_int_distribution<std::size_t> pick(0, clip.frames() - 1);
      const std::size_t test_frame = pick(rng);
      std::vector<std::size_t> train_frames;
      for (int f = 0; f < 2; ++f) {
        std::size_t idx = pick(rng);
        if (clip.frames() > 1)
          while (idx == test_frame) idx = pick(rng);
        train_frames.push_back(idx);
      }
      LossParts parts;
      losses.push_back(sample_loss(model, clip, train_frames, test_frame, mode,
                                   AttributeId::GEN, tc, &parts));
      cls_sum += parts.cls;
    }
    ad::Var total = ad::scale(ad::add_n(losses), 1.0 / static_cast<double>(losses.size()));
    ad::backward(total);
    opt.step(store, lr_table, 0.0, {});
    cls_losses.push_back(cls_sum / static_cast<double>(losses.size()));
  }
  return cls_losses;
}

}  // namespace ddf
