#ifndef AUDRON_DATASET_HPP
#define AUDRON_DATASET_HPP

#include <array>
#include <string>
#include <vector>

#include "audron/dsp.hpp"
#include "audron/manifest.hpp"
#include "audron/model.hpp"

namespace audron {

// Feature-extraction settings shared by training and evaluation.
struct FeatureConfig {
  StftConfig stft;           // 512 / 256 / Hann
  int n_mels = 40;
  double mel_fmin_hz = 0.0;
  double mel_fmax_hz = 8000.0;
  int sample_rate_hz = 16000;
  int64_t clip_len = 48000;  // pad/crop target after resampling

  int frames() const { return 1 + static_cast<int>((clip_len - stft.n_fft) / stft.hop); }
  int bins() const { return stft.bins(); }
};

// Training-set feature scaling, persisted in the model config so evaluation
// reproduces training-time features bit-exactly.
struct FeatureStats {
  double spect_mean = 0.0;  // over log1p(magnitude)
  double spect_std = 1.0;
  std::array<double, 13> mfcc_mean{};
  std::array<double, 13> mfcc_std{};

  FeatureStats() { mfcc_std.fill(1.0); }
};

// Resample to the config rate, then zero-pad the tail / center-crop to
// exactly clip_len samples.
AudioClip load_clip_for_model(const std::string& path, const FeatureConfig& cfg);

// In-memory standardized features for one split, batch-assembly ready.
class FeatureSet {
 public:
  int64_t count() const { return static_cast<int64_t>(labels_.size()); }
  const std::vector<int>& labels() const { return labels_; }
  int frames() const { return frames_; }
  int bins() const { return bins_; }
  int64_t clip_len() const { return clip_len_; }

  Batch<float> make_batch(const std::vector<int64_t>& indices) const;

 private:
  friend FeatureSet build_feature_set(const std::vector<ManifestRow>&, const std::string&,
                                      Task, const FeatureConfig&, const FeatureStats&);
  int frames_ = 0, bins_ = 0;
  int64_t clip_len_ = 0;
  std::vector<int> labels_;
  std::vector<float> mfcc_;   // [n][13][frames], standardized
  std::vector<float> seq_;    // [n][frames][13], standardized
  std::vector<float> spect_;  // [n][frames][bins], log1p standardized
  std::vector<float> wave_;   // [n][clip_len]
  std::vector<float> recon_;  // [n][clip_len/10]
};

// Computes training-set standardization statistics (reads every train clip).
FeatureStats compute_feature_stats(const std::vector<ManifestRow>& train_rows,
                                   const std::string& base_dir, const FeatureConfig& cfg);

FeatureSet build_feature_set(const std::vector<ManifestRow>& rows, const std::string& base_dir,
                             Task task, const FeatureConfig& cfg, const FeatureStats& stats);

// model.cfg: key=value text alongside each checkpoint, recording classes,
// dims, feature parameters, and scaling stats (floats in hex so round-trips
// are exact).
void write_model_config(const std::string& path, const ModelConfig& model,
                        const FeatureConfig& features, const FeatureStats& stats, Task task);
struct LoadedModelConfig {
  ModelConfig model;
  FeatureConfig features;
  FeatureStats stats;
  Task task = Task::Synthetic4;
};
LoadedModelConfig read_model_config(const std::string& path);

}  // namespace audron

#endif  // AUDRON_DATASET_HPP
