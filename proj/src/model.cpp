#include "audron/model.hpp"

#include <sstream>

#include "audron/checkpoint.hpp"

namespace audron {

std::string BranchSet::csv() const {
  std::string out;
  const auto append = [&out](const char* n) {
    if (!out.empty()) out += ",";
    out += n;
  };
  if (mfcc) append("mfcc");
  if (stft) append("stft");
  if (rnn) append("rnn");
  if (ae) append("ae");
  return out;
}

BranchSet BranchSet::from_csv(const std::string& csv) {
  BranchSet set{false, false, false, false};
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "mfcc") set.mfcc = true;
    else if (item == "stft") set.stft = true;
    else if (item == "rnn") set.rnn = true;
    else if (item == "ae") set.ae = true;
    else if (!item.empty())
      throw ParameterError("unknown branch '" + item + "' (expected mfcc|stft|rnn|ae)");
  }
  if (set.count() == 0) throw ParameterError("branch list '" + csv + "' selects nothing");
  return set;
}

ModelConfig ModelConfig::full_profile(int n_classes) {
  ModelConfig cfg;
  cfg.n_classes = n_classes;
  return cfg;
}

ModelConfig ModelConfig::reduced_profile(int n_classes) {
  ModelConfig cfg;
  cfg.n_classes = n_classes;
  cfg.mfcc_out = 32;
  cfg.stft_out = 64;
  cfg.rnn_out = 48;
  cfg.ae_embed = 40;
  cfg.attn_dim = 16;
  cfg.fusion_hidden = 64;
  cfg.reduced = true;
  cfg.wave_len = 4800;
  return cfg;
}

int64_t ModelConfig::fused_dim() const {
  int64_t d = 0;
  if (branches.mfcc) d += mfcc_out;
  if (branches.stft) d += stft_out;
  if (branches.rnn) d += rnn_out;
  if (branches.ae) d += ae_embed;
  return d;
}

void ModelConfig::validate() const {
  if (n_classes < 2) throw ParameterError("model: n_classes must be >= 2");
  if (branches.count() < 3)
    throw ParameterError("model: at least 3 branches required, got " + branches.csv());
  if (mfcc_out < 2 || stft_out < 8 || rnn_out < 2 || rnn_out % 2 != 0 || ae_embed < 1)
    throw ParameterError("model: branch dims out of range");
  if (stft_out % 8 != 0)
    throw ParameterError("model: stft_out must be divisible by 8 (channel doubling)");
  if (wave_len % 10 != 0 || recon_len() % 16 != 0)
    throw ParameterError("model: wave_len must divide cleanly through the encoder strides");
  if (!reduced) {
    // Pinned fusion contract for the full profile.
    if (mfcc_out != 128 || stft_out != 256 || rnn_out != 192 || ae_embed != 160)
      throw ParameterError("model: full profile requires the 128/256/192/160 branch split");
    if (mfcc_out + stft_out + rnn_out + ae_embed != 736)
      throw ParameterError("model: full profile fusion width must be 736");
  }
}

template <typename T>
AudronModel<T>::AudronModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), params_(seed), dropout_stream_(split_stream(seed, 0x5eed)) {
  cfg_.validate();
  const auto& br = cfg_.branches;
  if (br.mfcc) {
    mfcc_conv1_ = Conv1dLayer<T>(params_, "mfcc.conv1", 13, cfg_.mfcc_out / 2, 3, 1, 1,
                                 PadMode::Replicate);
    mfcc_conv2_ = Conv1dLayer<T>(params_, "mfcc.conv2", cfg_.mfcc_out / 2, cfg_.mfcc_out, 3, 1,
                                 1, PadMode::Replicate);
  }
  if (br.stft) {
    int64_t ch_in = 1;
    for (int blk = 0; blk < 4; ++blk) {
      const int64_t ch_out = cfg_.stft_out >> (3 - blk);
      stft_blocks_.emplace_back(params_, "stft.conv" + std::to_string(blk + 1), ch_in, ch_out, 3,
                                1, 1);
      ch_in = ch_out;
    }
  }
  if (br.rnn) {
    lstm_fwd_ = LstmLayer<T>(params_, "rnn.fwd", 13, cfg_.lstm_hidden());
    lstm_bwd_ = LstmLayer<T>(params_, "rnn.bwd", 13, cfg_.lstm_hidden());
    attn_w_ = params_.add("rnn.attn_w", {cfg_.attn_dim, cfg_.rnn_out}, InitSpec::UniformFanIn,
                          cfg_.rnn_out);
    attn_v_ = params_.add("rnn.attn_v", {cfg_.attn_dim, 1}, InitSpec::UniformFanIn,
                          cfg_.attn_dim);
  }
  if (br.ae) {
    const int64_t c1 = cfg_.reduced ? 2 : 8;
    const int64_t c2 = 2 * c1;
    const int64_t flat = c2 * (cfg_.recon_len() / 16);
    ae_enc1_ = Conv1dLayer<T>(params_, "ae.enc1", 1, c1, 9, 4, 4);
    ae_enc2_ = Conv1dLayer<T>(params_, "ae.enc2", c1, c2, 9, 4, 4);
    ae_to_embed_ = LinearLayer<T>(params_, "ae.to_embed", flat, cfg_.ae_embed);
    ae_from_embed_ = LinearLayer<T>(params_, "ae.from_embed", cfg_.ae_embed, flat);
    ae_dec1_ = Conv1dLayer<T>(params_, "ae.dec1", c2, c1, 9, 1, 4);
    ae_dec2_ = Conv1dLayer<T>(params_, "ae.dec2", c1, 1, 9, 1, 4);
  }
  fusion_in_ = LinearLayer<T>(params_, "fusion.in", cfg_.fused_dim(), cfg_.fusion_hidden);
  fusion_bn_ = BatchNormLayer<T>(params_, "fusion.bn", cfg_.fusion_hidden);
  head_ = LinearLayer<T>(params_, "fusion.head", cfg_.fusion_hidden, cfg_.n_classes);
}

template <typename T>
Tensor<T> AudronModel<T>::mfcc_branch(const Tensor<T>& x) {
  if (!cfg_.branches.mfcc) throw ParameterError("mfcc branch disabled in this configuration");
  if (x.rank() != 3 || x.dim(1) != 13)
    throw DimensionError("mfcc_branch: expected [batch,13,frames], got " + shape_str(x.shape()));
  if (x.dim(2) < 8)
    throw DimensionError("mfcc_branch: " + std::to_string(x.dim(2)) +
                         " frames below minimum support 8");
  Tensor<T> h = relu(mfcc_conv1_.forward(x));
  h = relu(mfcc_conv2_.forward(h));
  return reduce_mean(h, 2);
}

template <typename T>
Tensor<T> AudronModel<T>::stft_branch(const Tensor<T>& x) {
  if (!cfg_.branches.stft) throw ParameterError("stft branch disabled in this configuration");
  if (x.rank() != 4 || x.dim(1) != 1)
    throw DimensionError("stft_branch: expected [batch,1,frames,bins], got " +
                         shape_str(x.shape()));
  if (!cfg_.reduced && (x.dim(2) < 16 || x.dim(3) < 16))
    throw DimensionError("stft_branch: spatial dims of " + shape_str(x.shape()) +
                         " below 16; four pooling stages need >= 16");
  Tensor<T> h = x;
  for (auto& blk : stft_blocks_) h = maxpool2d(relu(blk.forward(h)));
  h = reshape(h, {h.dim(0), h.dim(1), h.dim(2) * h.dim(3)});
  return reduce_mean(h, 2);
}

template <typename T>
Tensor<T> AudronModel<T>::rnn_branch(const Tensor<T>& x) {
  if (!cfg_.branches.rnn) throw ParameterError("rnn branch disabled in this configuration");
  if (x.rank() != 3 || x.dim(2) != 13)
    throw DimensionError("rnn_branch: expected [batch,frames,13], got " + shape_str(x.shape()));
  const int64_t batch = x.dim(0), frames = x.dim(1);
  if (frames < 1) throw DimensionError("rnn_branch: needs at least one frame");

  // Feature sequence is a constant input; slice outside the graph.
  std::vector<Tensor<T>> xs(static_cast<size_t>(frames));
  for (int64_t t = 0; t < frames; ++t) {
    std::vector<T> step(static_cast<size_t>(batch) * 13);
    for (int64_t i = 0; i < batch; ++i)
      for (int64_t j = 0; j < 13; ++j) step[i * 13 + j] = x.data()[(i * frames + t) * 13 + j];
    xs[static_cast<size_t>(t)] = Tensor<T>::from({batch, 13}, std::move(step));
  }

  const std::vector<Tensor<T>> hf = lstm_fwd_.run(xs, /*backwards=*/false);
  const std::vector<Tensor<T>> hb = lstm_bwd_.run(xs, /*backwards=*/true);

  std::vector<Tensor<T>> states_3d, scores;
  states_3d.reserve(xs.size());
  scores.reserve(xs.size());
  for (int64_t t = 0; t < frames; ++t) {
    Tensor<T> h_t = concat<T>({hf[static_cast<size_t>(t)], hb[static_cast<size_t>(t)]}, 1);
    // e_t = v . tanh(W h_t)
    Tensor<T> proj = tanh(matmul(h_t, transposed_attn_w()));
    scores.push_back(matmul(proj, attn_v_));
    states_3d.push_back(reshape(h_t, {batch, 1, cfg_.rnn_out}));
  }
  Tensor<T> states = concat(states_3d, 1);           // [B, F, rnn_out]
  Tensor<T> attn = softmax(concat(scores, 1), 1);    // [B, F]
  last_attention_ = attn;
  return weighted_time_pool(states, attn);
}

// W is stored [attn_dim, rnn_out]; matmul wants h_t [B, rnn_out] x W^T.
template <typename T>
Tensor<T> AudronModel<T>::transposed_attn_w() {
  const int64_t a = attn_w_.dim(0), d = attn_w_.dim(1);
  Tensor<T> wt = Tensor<T>::zeros({d, a});
  const T* src = attn_w_.data();
  T* dst = wt.data();
  for (int64_t i = 0; i < a; ++i)
    for (int64_t j = 0; j < d; ++j) dst[j * a + i] = src[i * d + j];
  if (attn_w_.requires_grad() && Graph<T>::active()) {
    wt.set_requires_grad(true);
    Tensor<T> w = attn_w_;
    Graph<T>::active()->record([w, wt, a, d]() mutable {
      const auto* g = wt.grad();
      if (!g) return;
      T* gw = w.grad_data();
      for (int64_t i = 0; i < a; ++i)
        for (int64_t j = 0; j < d; ++j) gw[i * d + j] += (*g)[j * a + i];
    });
  }
  return wt;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> AudronModel<T>::autoencoder(const Tensor<T>& x) {
  if (!cfg_.branches.ae) throw ParameterError("ae branch disabled in this configuration");
  if (x.rank() != 2 || x.dim(1) != cfg_.wave_len)
    throw DimensionError("autoencoder: expected [batch," + std::to_string(cfg_.wave_len) +
                         "], got " + shape_str(x.shape()));
  const int64_t batch = x.dim(0);
  const int64_t pooled = cfg_.recon_len();

  Tensor<T> h = reshape(x, {batch, 1, cfg_.wave_len});
  h = avgpool1d(h, 10);                       // [B,1,pooled]
  h = relu(ae_enc1_.forward(h));              // [B,c1,pooled/4]
  h = relu(ae_enc2_.forward(h));              // [B,c2,pooled/16]
  const int64_t c2 = h.dim(1);
  h = reshape(h, {batch, h.dim(1) * h.dim(2)});
  Tensor<T> embed = ae_to_embed_.forward(h);  // [B,embed]

  Tensor<T> d = ae_from_embed_.forward(embed);
  d = reshape(d, {batch, c2, pooled / 16});
  d = upsample1d_nearest(d, 4);               // [B,c2,pooled/4]
  d = relu(ae_dec1_.forward(d));              // [B,c1,pooled/4]
  d = upsample1d_nearest(d, 4);               // [B,c1,pooled]
  d = ae_dec2_.forward(d);                    // [B,1,pooled]
  Tensor<T> recon = reshape(d, {batch, pooled});
  return {embed, recon};
}

template <typename T>
ForwardOutput<T> AudronModel<T>::forward(const Batch<T>& batch, Mode mode,
                                         uint64_t dropout_seed) {
  const int64_t b = batch.size();
  const auto check_batch = [&](const Tensor<T>& t, const char* name) {
    if (!t.defined() || t.dim(0) != b)
      throw DimensionError(std::string("forward: ") + name + " batch dim " +
                           (t.defined() ? std::to_string(t.dim(0)) : std::string("missing")) +
                           " != label count " + std::to_string(b));
  };

  std::vector<Tensor<T>> feats;
  ForwardOutput<T> out;
  if (cfg_.branches.mfcc) {
    check_batch(batch.mfcc, "mfcc");
    feats.push_back(mfcc_branch(batch.mfcc));
  }
  if (cfg_.branches.stft) {
    check_batch(batch.spect, "spect");
    feats.push_back(stft_branch(batch.spect));
  }
  if (cfg_.branches.rnn) {
    check_batch(batch.seq, "seq");
    feats.push_back(rnn_branch(batch.seq));
  }
  if (cfg_.branches.ae) {
    check_batch(batch.wave, "wave");
    auto [embed, recon] = autoencoder(batch.wave);
    feats.push_back(embed);
    out.embedding = embed;
    out.reconstruction = recon;
  }

  Tensor<T> fused = concat(feats, 1);  // [B, fused_dim]
  Tensor<T> h = fusion_in_.forward(fused);
  h = fusion_bn_.forward(h, mode == Mode::Train);
  h = relu(h);
  const bool train = mode == Mode::Train;
  const uint64_t seed =
      dropout_seed != 0 ? dropout_seed : (train ? dropout_stream_.next_u64() : 0);
  h = dropout(h, cfg_.dropout_p, train, seed);
  out.logits = head_.forward(h);
  return out;
}

template <typename T>
void AudronModel<T>::save(const std::string& path) const {
  save_checkpoint(params_.to_checkpoint(), path);
}

template <typename T>
void AudronModel<T>::load(const std::string& path) {
  params_.from_checkpoint(load_checkpoint(path));
}

template class AudronModel<float>;
template class AudronModel<double>;

}  // namespace audron
