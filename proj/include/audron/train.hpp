#ifndef AUDRON_TRAIN_HPP
#define AUDRON_TRAIN_HPP

#include <string>
#include <vector>

#include "audron/dataset.hpp"
#include "audron/metrics.hpp"
#include "audron/model.hpp"

namespace audron {

struct TrainConfig {
  double lr = 0.001;
  int batch_size = 16;
  int max_epochs = 50;
  int plateau_patience = 5;      // epochs without val-accuracy improvement
  double plateau_factor = 0.5;   // lr multiplier on plateau
  int early_stop_patience = 10;  // epochs without improvement before halting
  double recon_weight = 0.1;     // lambda on the reconstruction MSE
  double weight_decay = 0.01;
  uint64_t seed = 42;

  void validate() const;
};

// CE(logits, labels) + lambda * MSE(reconstruction, pooled_target). The
// reconstruction term drops out when the output carries none (no AE branch)
// or lambda == 0.
Tensor<float> combined_loss(const ForwardOutput<float>& output, const std::vector<int>& labels,
                            const Tensor<float>& pooled_target, double lambda);

// Decoupled weight decay Adam (beta1 0.9, beta2 0.999, eps 1e-8).
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor<float>>> params, double weight_decay);
  void step(double lr);

 private:
  std::vector<std::pair<std::string, Tensor<float>>> params_;
  std::vector<std::vector<float>> m_, v_;
  double weight_decay_;
  int64_t t_ = 0;
};

// Validation-accuracy bookkeeping shared by the scheduler, early stopping,
// and best-checkpoint selection. Improvement is strict; ties keep the
// earliest epoch.
class TrainingMonitor {
 public:
  explicit TrainingMonitor(const TrainConfig& cfg);

  struct Decision {
    bool improved = false;
    bool reduced_lr = false;
    bool stop = false;
    double next_lr = 0.0;
  };
  Decision observe(double val_accuracy);

  double lr() const { return lr_; }
  int best_epoch() const { return best_epoch_; }
  double best_accuracy() const { return best_acc_; }
  int epochs_seen() const { return epoch_; }

 private:
  TrainConfig cfg_;
  double lr_;
  double best_acc_ = -1.0;
  int best_epoch_ = 0;
  int epoch_ = 0;
  int plateau_count_ = 0;
  int stall_count_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_acc = 0.0;

  std::string csv() const;  // epoch,train_loss,train_acc,val_loss,val_acc,lr
};

struct EvalResult {
  MetricsReport metrics;
  double loss = 0.0;
};

EvalResult evaluate(AudronModel<float>& model, const FeatureSet& data, int batch_size,
                    double lambda);

struct TrainResult {
  TrainHistory history;
  std::vector<CheckpointEntry> best_state;  // snapshot at the best epoch
};

// AdamW + ReduceLROnPlateau + early stopping; per-epoch shuffling streams
// from (seed, epoch). On return the model holds the best-epoch state.
TrainResult train(AudronModel<float>& model, const FeatureSet& train_set,
                  const FeatureSet& val_set, const TrainConfig& cfg);

// ---- ablation harness ----

struct AblationRow {
  std::string name;       // branch csv
  BranchSet branches;
  MetricsReport metrics;  // on the validation split, best checkpoint
  double drop_pct = 0.0;  // full-model accuracy minus this row's, in points
};

// Full four-branch set plus the four leave-one-out triples, Table-style
// order (three-branch rows first, full model last).
std::vector<BranchSet> standard_ablation_sets();

std::vector<AblationRow> ablate(const ModelConfig& base, const FeatureSet& train_set,
                                const FeatureSet& val_set, const TrainConfig& cfg,
                                const std::vector<BranchSet>& configs);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace audron

#endif  // AUDRON_TRAIN_HPP
