#ifndef AUDRON_MODEL_HPP
#define AUDRON_MODEL_HPP

#include <string>
#include <vector>

#include "audron/nn.hpp"
#include "audron/rng.hpp"
#include "audron/tensor.hpp"

namespace audron {

enum class Mode { Train, Eval };

struct BranchSet {
  bool mfcc = true;
  bool stft = true;
  bool rnn = true;
  bool ae = true;

  int count() const { return (mfcc ? 1 : 0) + (stft ? 1 : 0) + (rnn ? 1 : 0) + (ae ? 1 : 0); }
  std::string csv() const;
  static BranchSet from_csv(const std::string& csv);  // e.g. "mfcc,stft,rnn"
};

// Widths and profile. The full profile carries the 128/256/192/160 branch
// split with the 736-wide fusion input; the reduced profile quarters
// channels and hidden sizes (gradient checks, fast tests) and shortens the
// autoencoder input accordingly.
struct ModelConfig {
  int n_classes = 4;
  BranchSet branches;
  int64_t mfcc_out = 128;
  int64_t stft_out = 256;   // also the last conv block's channels
  int64_t rnn_out = 192;    // = 2 x LSTM hidden
  int64_t ae_embed = 160;
  int64_t attn_dim = 64;
  int64_t fusion_hidden = 256;
  double dropout_p = 0.3;
  bool reduced = false;
  int64_t wave_len = 48000;  // autoencoder input length

  static ModelConfig full_profile(int n_classes);
  static ModelConfig reduced_profile(int n_classes);

  int64_t fused_dim() const;                   // sum over enabled branches
  int64_t recon_len() const { return wave_len / 10; }
  int64_t lstm_hidden() const { return rnn_out / 2; }
  void validate() const;  // asserts the 128+256+192+160=736 identity (full)
};

// One training/eval batch with per-branch feature tensors for the same
// clips. Unused branch inputs may stay undefined.
template <typename T>
struct Batch {
  Tensor<T> mfcc;          // [B, 13, frames]
  Tensor<T> seq;           // [B, frames, 13]
  Tensor<T> spect;         // [B, 1, frames, bins]
  Tensor<T> wave;          // [B, wave_len]
  Tensor<T> recon_target;  // [B, wave_len/10], constant (no grad)
  std::vector<int> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
};

template <typename T>
struct ForwardOutput {
  Tensor<T> logits;         // [B, n_classes]
  Tensor<T> reconstruction; // [B, wave_len/10]; undefined without the AE branch
  Tensor<T> embedding;      // [B, ae_embed]; undefined without the AE branch
};

// Four parallel feature branches fused by concatenation into a dense
// classification head.
template <typename T>
class AudronModel {
 public:
  AudronModel(const ModelConfig& cfg, uint64_t seed);

  // dropout_seed != 0 freezes the dropout mask (gradient checks); otherwise
  // train-mode masks draw from the model's own stream.
  ForwardOutput<T> forward(const Batch<T>& batch, Mode mode, uint64_t dropout_seed = 0);

  Tensor<T> mfcc_branch(const Tensor<T>& x);                   // [B,13,F] -> [B,mfcc_out]
  Tensor<T> stft_branch(const Tensor<T>& x);                   // [B,1,H,W] -> [B,stft_out]
  Tensor<T> rnn_branch(const Tensor<T>& x);                    // [B,F,13] -> [B,rnn_out]
  std::pair<Tensor<T>, Tensor<T>> autoencoder(const Tensor<T>& x);  // -> (embed, recon)

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const Tensor<T>& last_attention() const { return last_attention_; }
  void freeze_batchnorm(bool frozen) { fusion_bn_.frozen = frozen; }

  void save(const std::string& path) const;  // checkpoint format
  void load(const std::string& path);

 private:
  Tensor<T> transposed_attn_w();

  ModelConfig cfg_;
  ParamStore<T> params_;
  Rng dropout_stream_;

  Conv1dLayer<T> mfcc_conv1_, mfcc_conv2_;
  std::vector<Conv2dLayer<T>> stft_blocks_;
  LstmLayer<T> lstm_fwd_, lstm_bwd_;
  Tensor<T> attn_w_, attn_v_;
  Conv1dLayer<T> ae_enc1_, ae_enc2_;
  LinearLayer<T> ae_to_embed_, ae_from_embed_;
  Conv1dLayer<T> ae_dec1_, ae_dec2_;
  LinearLayer<T> fusion_in_, head_;
  BatchNormLayer<T> fusion_bn_;

  Tensor<T> last_attention_;
};

using AudronModelF = AudronModel<float>;

}  // namespace audron

#endif  // AUDRON_MODEL_HPP
