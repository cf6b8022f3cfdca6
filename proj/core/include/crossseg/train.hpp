#pragma once

#include <map>

#include "crossseg/batch.hpp"
#include "crossseg/eval.hpp"
#include "crossseg/networks.hpp"
#include "crossseg/objective.hpp"
#include "crossseg/optim.hpp"

namespace crossseg {

struct BatchConfig {
  index_t b_l = 2;
  index_t b_u = 6;

  void validate() const {
    CROSSSEG_CHECK(b_l >= 1, "BatchConfig: b_L must be >= 1");
    CROSSSEG_CHECK(b_u >= 0, "BatchConfig: b_U must be >= 0");
  }
};

struct TrainConfig {
  OptimizerConfig optimizer;
  RampUpConfig ramp;
  ContrastiveConfig contrastive;
  BatchConfig batch;
  index_t image_h = 224;
  index_t image_w = 224;
  std::int64_t eval_every = 200;
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string out_dir;
  NetworkConfig model1;  // defaults to cnn_unet
  NetworkConfig model2;  // defaults to windowed_transformer_unet

  TrainConfig() {
    model1.kind = NetworkKind::kCnnUnet;
    model2.kind = NetworkKind::kWindowedTransformerUnet;
  }

  void validate() const {
    optimizer.validate();
    ramp.validate();
    contrastive.validate();
    batch.validate();
    CROSSSEG_CHECK(image_h >= 32 && image_w >= 32 && image_h % 32 == 0 && image_w % 32 == 0,
                   "TrainConfig: image_size must be >= 32 and divisible by 32, got " << image_h << "x"
                                                                                     << image_w);
    CROSSSEG_CHECK(eval_every > 0, "TrainConfig: eval_every must be > 0");
    CROSSSEG_CHECK(!data_dir.empty(), "TrainConfig: data_dir is required");
    CROSSSEG_CHECK(!out_dir.empty(), "TrainConfig: out_dir is required");
    model1.validate();
    model2.validate();
    CROSSSEG_CHECK(!contrastive.enabled || model1.projection_dim == model2.projection_dim,
                   "TrainConfig: contrastive loss needs matching projection_dim, got "
                       << model1.projection_dim << " vs " << model2.projection_dim);
  }
};

struct BestRecord {
  double val_dsc = -1.0;  // sentinel: no validation yet; persisted values are in [0,1]
  std::string network = "none";
  std::int64_t iter = -1;
  double dsc1 = -1.0;
  double dsc2 = -1.0;
};

struct CheckpointRecord {
  std::string path;  // empty if this validation did not improve on the best
  std::int64_t iter = -1;
  double val_dsc1 = -1.0;
  double val_dsc2 = -1.0;
  std::string chosen = "none";  // argmax of (val_dsc1, val_dsc2), ties to net1
};

// Fully materialized checkpoint contents. Tensor bytes round-trip exactly.
struct Checkpoint {
  TrainConfig config;
  std::int64_t iter = 0;
  BestRecord best;
  std::string composer_state;  // BatchComposer JSON
  std::map<std::string, Tensor<float>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Builds a network from a checkpoint's stored config and parameter blobs.
// which: 1 or 2; "best" resolves via the stored best record (net1 on "none").
std::unique_ptr<Network<float>> network_from_checkpoint(const Checkpoint& ck, int which);
std::unique_ptr<Network<float>> best_network_from_checkpoint(const Checkpoint& ck);

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  // Restores parameters, optimizer momenta, RNG/batch state, iteration and
  // best record; subsequent training continues the original sequence exactly.
  void restore_from(const std::string& checkpoint_path);

  // Runs until max_iters, appending one JSON line per iteration to
  // <out_dir>/loss_log.jsonl and validating every eval_every iterations (and
  // at the final iteration). Returns the best checkpoint record.
  CheckpointRecord run();

  // One optimization step on the given batch (exposed for tests).
  LossReport step_once(const MixedBatch& batch);

  std::pair<double, double> validate_now();
  CheckpointRecord select_and_checkpoint(double dsc1, double dsc2);

  Checkpoint to_checkpoint() const;

  std::int64_t iter() const { return iter_; }
  const TrainConfig& config() const { return cfg_; }
  Network<float>& net1() { return *net1_; }
  Network<float>& net2() { return *net2_; }
  BatchComposer& composer() { return *composer_; }
  const BestRecord& best() const { return best_; }
  const std::vector<LabeledSample>& train_labeled() const { return labeled_; }
  const std::vector<LabeledSample>& val_samples() const { return val_; }
  std::string loss_log_path() const;
  std::string checkpoint_path() const;

 private:
  TrainConfig cfg_;
  std::vector<LabeledSample> labeled_;      // resized to training resolution
  std::vector<UnlabeledSample> unlabeled_;  // idem
  std::vector<LabeledSample> val_;          // idem
  std::unique_ptr<Network<float>> net1_, net2_;
  std::unique_ptr<Sgd<float>> sgd_;
  std::unique_ptr<BatchComposer> composer_;
  std::int64_t iter_ = 0;
  BestRecord best_;
  CheckpointRecord best_record_;
  bool resumed_ = false;
  bool warned_no_val_ = false;
};

// Flat key=value config file with dotted paths mirroring TrainConfig fields
// (e.g. optimizer.lr0, batch.b_L, model2.depths = 2,2,2). '#' starts a
// comment. Unknown keys are errors.
TrainConfig parse_train_config_file(const std::string& path);
TrainConfig parse_train_config_text(const std::string& text);

// JSON round-trip used inside checkpoints.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json_text);

}  // namespace crossseg
