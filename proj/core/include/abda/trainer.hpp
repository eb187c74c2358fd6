#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "abda/appearance.hpp"
#include "abda/boundary.hpp"
#include "abda/checkpoint.hpp"
#include "abda/eval.hpp"
#include "abda/flowcore.hpp"
#include "abda/retinex.hpp"
#include "abda/types.hpp"

namespace abda::trainer {

struct TrainConfig {
  // total objective weights
  double lambda1 = 0.1;  // adversarial
  double lambda2 = 1.0;  // KL cost
  double lambda3 = 1.0;  // intra-domain alignment
  double lambda4 = 1.0;  // inter-domain alignment
  double lambda5 = 0.1;  // attention classification
  double lambda6 = 0.1;  // contrastive
  double lambda7 = 1.0;  // motion consistency

  double tau = 0.07;
  int motion_classes = 10;   // K
  int sample_count = 1000;   // N (contrastive samples)
  double contrast = 0.15;    // event threshold C
  double p0 = 0.1;           // valid-mask threshold, default 1/K

  double lr = 1e-3;
  int epochs_stage1 = 8;
  int epochs_stage2 = 6;
  int epochs_stage3 = 4;
  int epochs_decomposer = 40;
  int batch_size = 1;
  std::uint64_t seed = 0;

  bool decomposer_frozen = true;      // freeze after pre-training
  bool stage2_day_photometric = true;
  bool stage3_photometric = true;     // keep the night photometric term alive

  void validate() const;
  std::string to_text() const;

  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::filesystem::path& path);
  // "key=value" override
  void set(const std::string& key, const std::string& value);
};

// All networks of one run, seeded from the config.
struct Models {
  flowcore::FlowNet day_flow;
  flowcore::FlowNet night_flow;
  flowcore::FlowNet event_flow;
  retinex::Decomposer decomposer;
  appearance::Discriminator discriminator;
  boundary::AttentionNet attention;

  explicit Models(const TrainConfig& cfg);

  ckpt::Checkpoint to_checkpoint(int stage, const TrainConfig& cfg) const;
  void load(const ckpt::Checkpoint& c);
};

struct LossTerms {
  double pho = 0.0;
  double adv = 0.0;
  double kl_cost = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  double cls = 0.0;
  double contra = 0.0;
  double self_flow = 0.0;
};

// Weighted sum of the eight terms. stage 1..3 masks out the terms that are
// inactive in that stage; stage 0 keeps everything.
double total_loss(const LossTerms& terms, const TrainConfig& cfg, int stage = 0);

struct StageOptions {
  std::optional<std::filesystem::path> log_csv;  // per-epoch loss/EPE log
  const std::vector<SceneSample>* holdout = nullptr;
};

ckpt::Checkpoint stage1(const std::vector<SceneSample>& train,
                        const TrainConfig& cfg, const StageOptions& opts = {});
ckpt::Checkpoint stage2(const std::vector<SceneSample>& train,
                        const ckpt::Checkpoint& prev, const TrainConfig& cfg,
                        const StageOptions& opts = {});
ckpt::Checkpoint stage3(const std::vector<SceneSample>& train,
                        const ckpt::Checkpoint& prev, const TrainConfig& cfg,
                        const StageOptions& opts = {});

// Runs the checkpoint's night model on night pairs and its day model on day
// pairs over the given samples.
eval::EvalReport evaluate(const ckpt::Checkpoint& c, const TrainConfig& cfg,
                          const std::vector<SceneSample>& samples);

// inference helpers
FlowField infer_night(const Models& m, const SceneSample& s);
FlowField infer_day(const Models& m, const SceneSample& s);
FlowField infer_event(const Models& m, const SceneSample& s);

}  // namespace abda::trainer
