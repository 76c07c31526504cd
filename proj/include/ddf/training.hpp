#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ddf/checkpoint.hpp"
#include "ddf/config.hpp"
#include "ddf/model.hpp"
#include "ddf/synthetic.hpp"
#include "ddf/tracking.hpp"

namespace ddf {

/// One training stage: the lr table maps parameter groups to rates; every
/// group NOT in the table is frozen (no update, no optimizer state, no
/// weight decay).
struct StageConfig {
  std::string stage_name;
  std::map<std::string, double> lr;
  double weight_decay = 1e-4;
  int epochs = 30;
  int batch_size = 2;
  std::string split = "all";
  int warmup_epochs = 0;  // stage-1 GEN only
  double warmup_lr = 1e-4;
  std::uint64_t seed = 0;
};

/// Published stage schedules with their exact default rates:
///   stage1_gen       GEN 1e-5, backbone 5e-6, predictor 5e-6, 30 epochs
///   stage1_attr:<A>  branch A 1e-5, everything else frozen, 30 epochs
///   stage2_afm       AFM 1e-5, everything else frozen, 30 epochs
///   stage3_efm       EFM 1e-5, all other groups 1e-6, 60 epochs
/// weight decay 1e-4 throughout; cfg.train.lr_scale multiplies all rates.
StageConfig make_stage_config(const std::string& stage, const RunConfig& cfg);

FreezeMask freeze_mask_for(const ParamStore& store, const StageConfig& cfg);

/// AdamW with decoupled weight decay. Frozen groups carry no state.
class AdamW {
public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamStore& store, const std::map<std::string, double>& lr_of_group,
            double weight_decay, const FreezeMask& frozen);

private:
  struct State {
    Tensor m, v;
    std::size_t t = 0;
  };
  double beta1_, beta2_, eps_;
  std::map<std::string, State> state_;
};

struct DataSplits {
  // split name ("all" or an attribute name) -> clips; val splits are held out
  std::map<std::string, std::vector<const ClipManifest*>> train;
  std::map<std::string, std::vector<const ClipManifest*>> val;
};

/// Splits each attribute subset, taking val_per_attribute clips from its
/// tail; "all" is the union of the per-attribute training clips.
DataSplits build_splits(const std::vector<ClipManifest>& clips, int val_per_attribute);

struct LossParts {
  double cls = 0.0;
  double reg = 0.0;
  double total() const { return cls + reg; }
};

/// Builds the tracking loss for one (train frames, test frame) sample of a
/// clip: MSE between the score map and the Gaussian label plus masked L1
/// between the box map and theLTRB target, weighted 1:1.
ad::Var sample_loss(const TrackerModel& model, const ClipManifest& clip,
                    const std::vector<std::size_t>& train_frames, std::size_t test_frame,
                    FusionMode mode, AttributeId active_branch, const TrackConfig& tc,
                    LossParts* parts = nullptr);

/// Deterministic validation loss over a split (fixed frame choice: first and
/// middle frames train, last frame test).
LossParts split_loss(const TrackerModel& model, const std::vector<const ClipManifest*>& clips,
                     FusionMode mode, AttributeId active_branch, const TrackConfig& tc);

struct StageResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;
  std::string log;  // delimited text: stage epoch iter loss
};

using StageLogger = std::function<void(const std::string& line)>;

// ---- the three-stage protocol ----
// Stage ordering is enforced through the checkpoint lineage; each runner
// throws LineageError when its prerequisite stage is missing.
StageResult run_stage1_gen(TrackerModel& model, ParamStore& store, const DataSplits& data,
                           const RunConfig& cfg, const Checkpoint* resume = nullptr,
                           StageLogger log = nullptr);
StageResult run_stage1_attr(TrackerModel& model, ParamStore& store, const Checkpoint& ckpt,
                            AttributeId attr, const DataSplits& data, const RunConfig& cfg,
                            StageLogger log = nullptr);
StageResult run_stage2_afm(TrackerModel& model, ParamStore& store, const Checkpoint& ckpt,
                           const DataSplits& data, const RunConfig& cfg,
                           StageLogger log = nullptr);
StageResult run_stage3_efm(TrackerModel& model, ParamStore& store, const Checkpoint& ckpt,
                           const DataSplits& data, const RunConfig& cfg,
                           StageLogger log = nullptr);

/// Plain full-model overfit loop used by the smoke checks and the ablation
/// harness: every group trains at `lr`. Returns per-iteration classification
/// losses.
std::vector<double> overfit_train(TrackerModel& model, ParamStore& store,
                                  const std::vector<const ClipManifest*>& clips, int iterations,
                                  double lr, std::uint64_t seed, const TrackConfig& tc,
                                  FusionMode mode = FusionMode::Full);

}  // namespace ddf
