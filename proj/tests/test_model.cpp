#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "audron/gradcheck.hpp"
#include "audron/model.hpp"
#include "audron/rng.hpp"

using namespace audron;

namespace {

using DT = Tensor<double>;

DT rand_tensor(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return DT::from(std::move(shape), std::move(v));
}

Batch<double> tiny_batch(const ModelConfig& cfg, uint64_t seed, int64_t b = 2,
                         int64_t frames = 8) {
  Batch<double> batch;
  batch.mfcc = rand_tensor({b, 13, frames}, seed + 1);
  batch.seq = rand_tensor({b, frames, 13}, seed + 2);
  batch.spect = rand_tensor({b, 1, frames, 8}, seed + 3);
  batch.wave = rand_tensor({b, cfg.wave_len}, seed + 4);
  batch.recon_target = rand_tensor({b, cfg.recon_len()}, seed + 5);
  for (int64_t i = 0; i < b; ++i)
    batch.labels.push_back(static_cast<int>(i % cfg.n_classes));
  return batch;
}

}  // namespace

TEST_CASE("full profile pins the 128/256/192/160 = 736 fusion contract") {
  ModelConfig cfg = ModelConfig::full_profile(4);
  cfg.validate();
  CHECK(cfg.fused_dim() == 736);
  CHECK(cfg.mfcc_out + cfg.stft_out + cfg.rnn_out + cfg.ae_embed == 736);

  ModelConfig bad = cfg;
  bad.stft_out = 248;
  CHECK_THROWS_AS(bad.validate(), ParameterError);

  // construction enforces it too
  CHECK_THROWS_AS(AudronModel<double>(bad, 1), ParameterError);
  AudronModel<double> ok(cfg, 1);
  CHECK(ok.params().trainable_count() > 2000000);
}

TEST_CASE("ablated configurations recompute the fusion width") {
  ModelConfig cfg = ModelConfig::full_profile(4);
  cfg.branches = BranchSet::from_csv("mfcc,stft,rnn");
  CHECK(cfg.fused_dim() == 128 + 256 + 192);
  cfg.branches = BranchSet::from_csv("stft,rnn,ae");
  CHECK(cfg.fused_dim() == 256 + 192 + 160);
  CHECK_THROWS_AS(BranchSet::from_csv("mfcc,bogus"), ParameterError);
  cfg.branches = BranchSet::from_csv("mfcc,stft");
  CHECK_THROWS_AS(cfg.validate(), ParameterError);  // fewer than 3 branches
}

TEST_CASE("branch output shapes in the reduced profile") {
  const ModelConfig cfg = ModelConfig::reduced_profile(3);
  AudronModel<double> model(cfg, 7);
  const Batch<double> batch = tiny_batch(cfg, 10, 2, 8);

  CHECK(model.mfcc_branch(batch.mfcc).shape() == Shape{2, cfg.mfcc_out});
  CHECK(model.stft_branch(batch.spect).shape() == Shape{2, cfg.stft_out});
  CHECK(model.rnn_branch(batch.seq).shape() == Shape{2, cfg.rnn_out});
  auto [embed, recon] = model.autoencoder(batch.wave);
  CHECK(embed.shape() == Shape{2, cfg.ae_embed});
  CHECK(recon.shape() == Shape{2, cfg.recon_len()});

  ForwardOutput<double> out = model.forward(batch, Mode::Eval);
  CHECK(out.logits.shape() == Shape{2, 3});
  CHECK(out.embedding.shape() == Shape{2, cfg.ae_embed});
  CHECK(out.reconstruction.shape() == Shape{2, cfg.recon_len()});
}

TEST_CASE("zero input with zero biases gives zero branch outputs") {
  const ModelConfig cfg = ModelConfig::reduced_profile(2);
  AudronModel<double> model(cfg, 3);

  DT zero_mfcc = DT::zeros({2, 13, 8});
  for (double v : model.mfcc_branch(zero_mfcc).values()) CHECK(v == 0.0);

  DT zero_spect = DT::zeros({2, 1, 8, 8});
  for (double v : model.stft_branch(zero_spect).values()) CHECK(v == 0.0);

  DT zero_wave = DT::zeros({2, cfg.wave_len});
  auto [embed, recon] = model.autoencoder(zero_wave);
  for (double v : embed.values()) CHECK(v == 0.0);
  for (double v : recon.values()) CHECK(v == 0.0);
}

TEST_CASE("time-constant input makes the mfcc branch frame-count invariant") {
  const ModelConfig cfg = ModelConfig::reduced_profile(2);
  AudronModel<double> model(cfg, 5);
  Rng rng(20);
  std::vector<double> channel_vals(13);
  for (auto& v : channel_vals) v = rng.uniform(-1.0, 1.0);

  const auto make_const = [&](int64_t frames) {
    DT x = DT::zeros({1, 13, frames});
    for (int64_t c = 0; c < 13; ++c)
      for (int64_t f = 0; f < frames; ++f)
        x.data()[c * frames + f] = channel_vals[static_cast<size_t>(c)];
    return x;
  };
  const DT out32 = model.mfcc_branch(make_const(32));
  const DT out186 = model.mfcc_branch(make_const(186));
  REQUIRE(out32.shape() == out186.shape());
  for (int64_t i = 0; i < out32.numel(); ++i)
    CHECK(out32.data()[i] == doctest::Approx(out186.data()[i]).epsilon(1e-5));
}

TEST_CASE("permuting the batch permutes stft branch outputs identically") {
  const ModelConfig cfg = ModelConfig::reduced_profile(2);
  AudronModel<double> model(cfg, 9);
  DT x = rand_tensor({2, 1, 10, 9}, 33);
  DT swapped = DT::zeros({2, 1, 10, 9});
  const int64_t plane = 10 * 9;
  for (int64_t i = 0; i < plane; ++i) {
    swapped.data()[i] = x.data()[plane + i];
    swapped.data()[plane + i] = x.data()[i];
  }
  const DT a = model.stft_branch(x);
  const DT b = model.stft_branch(swapped);
  for (int64_t j = 0; j < cfg.stft_out; ++j) {
    CHECK(a.data()[j] == b.data()[cfg.stft_out + j]);
    CHECK(a.data()[cfg.stft_out + j] == b.data()[j]);
  }
}

TEST_CASE("attention weights form a probability vector") {
  const ModelConfig cfg = ModelConfig::reduced_profile(2);
  AudronModel<double> model(cfg, 11);
  for (int64_t frames : {1, 5, 19}) {
    DT seq = rand_tensor({3, frames, 13}, 40 + static_cast<uint64_t>(frames));
    model.rnn_branch(seq);
    const DT attn = model.last_attention();
    REQUIRE(attn.shape() == Shape{3, frames});
    for (int64_t i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (int64_t t = 0; t < frames; ++t) {
        const double w = attn.data()[i * frames + t];
        CHECK(w > 0.0);
        sum += w;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("a single frame collapses attention onto h_1") {
  const ModelConfig cfg = ModelConfig::reduced_profile(2);
  AudronModel<double> model(cfg, 13);
  DT seq = rand_tensor({2, 1, 13}, 50);
  const DT out = model.rnn_branch(seq);

  // recompute h_1 by hand from the registered cell weights
  DT x_t = DT::zeros({2, 13});
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 13; ++j) x_t.data()[i * 13 + j] = seq.data()[i * 13 + j];
  const int64_t hidden = cfg.lstm_hidden();
  DT h0 = DT::zeros({2, hidden});
  DT c0 = DT::zeros({2, hidden});
  auto [hf, cf] = lstm_cell(x_t, h0, c0, model.params().find("rnn.fwd.w_ih"),
                            model.params().find("rnn.fwd.w_hh"), model.params().find("rnn.fwd.b"));
  auto [hb, cb] = lstm_cell(x_t, h0, c0, model.params().find("rnn.bwd.w_ih"),
                            model.params().find("rnn.bwd.w_hh"), model.params().find("rnn.bwd.b"));
  (void)cf;
  (void)cb;
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < hidden; ++j) {
      CHECK(out.data()[i * cfg.rnn_out + j] ==
            doctest::Approx(hf.data()[i * hidden + j]).epsilon(1e-12));
      CHECK(out.data()[i * cfg.rnn_out + hidden + j] ==
            doctest::Approx(hb.data()[i * hidden + j]).epsilon(1e-12));
    }
}

TEST_CASE("eval forward is bit-deterministic") {
  const ModelConfig cfg = ModelConfig::reduced_profile(4);
  AudronModel<double> model(cfg, 17);
  const Batch<double> batch = tiny_batch(cfg, 60, 3, 9);
  const ForwardOutput<double> a = model.forward(batch, Mode::Eval);
  const ForwardOutput<double> b = model.forward(batch, Mode::Eval);
  for (int64_t i = 0; i < a.logits.numel(); ++i)
    CHECK(a.logits.data()[i] == b.logits.data()[i]);
}

TEST_CASE("branch outputs stay finite for random inputs across seeds") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelConfig cfg = ModelConfig::reduced_profile(4);
    AudronModel<double> model(cfg, seed);
    const Batch<double> batch = tiny_batch(cfg, seed * 100, 2, 8);
    const ForwardOutput<double> out = model.forward(batch, Mode::Eval);
    for (double v : out.logits.values()) CHECK(std::isfinite(v));
    for (double v : out.embedding.values()) CHECK(std::isfinite(v));
    for (double v : out.reconstruction.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("train/eval differ only through dropout and batchnorm") {
  ModelConfig cfg = ModelConfig::reduced_profile(3);
  cfg.dropout_p = 0.0;
  AudronModel<double> model(cfg, 19);
  // nontrivial frozen statistics
  {
    Tensor<double> rm = model.params().find("fusion.bn.running_mean");
    Tensor<double> rv = model.params().find("fusion.bn.running_var");
    Rng rng(77);
    for (auto& v : rm.values()) v = rng.uniform(-0.5, 0.5);
    for (auto& v : rv.values()) v = rng.uniform(0.5, 2.0);
  }
  model.freeze_batchnorm(true);
  const Batch<double> batch = tiny_batch(cfg, 200, 4, 8);
  const ForwardOutput<double> train_out = model.forward(batch, Mode::Train);
  const ForwardOutput<double> eval_out = model.forward(batch, Mode::Eval);
  for (int64_t i = 0; i < train_out.logits.numel(); ++i)
    CHECK(train_out.logits.data()[i] ==
          doctest::Approx(eval_out.logits.data()[i]).epsilon(1e-6));
}

TEST_CASE("dimension errors on malformed branch inputs") {
  const ModelConfig cfg = ModelConfig::reduced_profile(2);
  AudronModel<double> model(cfg, 23);
  CHECK_THROWS_AS(model.mfcc_branch(rand_tensor({2, 12, 8}, 1)), DimensionError);
  CHECK_THROWS_AS(model.mfcc_branch(rand_tensor({2, 13, 4}, 1)), DimensionError);  // < 8 frames
  CHECK_THROWS_AS(model.rnn_branch(rand_tensor({2, 8, 12}, 1)), DimensionError);
  CHECK_THROWS_AS(model.autoencoder(rand_tensor({2, 100}, 1)), DimensionError);

  // full profile requires >= 16 spatial dims
  AudronModel<double> full(ModelConfig::full_profile(2), 3);
  CHECK_THROWS_AS(full.stft_branch(rand_tensor({1, 1, 8, 8}, 1)), DimensionError);

  // inconsistent batch sizes across features
  Batch<double> batch = tiny_batch(cfg, 300, 2, 8);
  batch.labels.push_back(0);
  CHECK_THROWS_AS(model.forward(batch, Mode::Eval), DimensionError);
}

TEST_CASE("reduced-profile full model passes gradcheck at 1e-3") {
  const ModelConfig cfg = ModelConfig::reduced_profile(2);
  AudronModel<double> model(cfg, 29);
  const Batch<double> batch = tiny_batch(cfg, 400, 2, 8);

  auto loss = [&]() {
    ForwardOutput<double> out = model.forward(batch, Mode::Train, /*dropout_seed=*/1234);
    Tensor<double> ce = cross_entropy(out.logits, batch.labels);
    Tensor<double> mse = mse_loss(out.reconstruction, batch.recon_target);
    return add(ce, scale(mse, 0.1));
  };
  const auto report = gradcheck<double>(loss, model.params().named_trainable(), 1e-5,
                                        /*max_elems_per_param=*/6, /*seed=*/5);
  INFO(report.summary());
  CHECK(report.pass(1e-3));
}

TEST_CASE("checkpoint save/load restores the exact model state") {
  const ModelConfig cfg = ModelConfig::reduced_profile(3);
  AudronModel<double> model(cfg, 31);
  const Batch<double> batch = tiny_batch(cfg, 500, 2, 8);
  const ForwardOutput<double> before = model.forward(batch, Mode::Eval);

  const std::string path = "/tmp/audron_model_ckpt.bin";
  model.save(path);
  AudronModel<double> other(cfg, 999);  // different init
  other.load(path);
  const ForwardOutput<double> after = other.forward(batch, Mode::Eval);
  for (int64_t i = 0; i < before.logits.numel(); ++i)
    CHECK(before.logits.data()[i] == after.logits.data()[i]);
  std::filesystem::remove(path);

  // loading into a mismatched architecture fails loudly
  AudronModel<double> bigger(ModelConfig::reduced_profile(4), 1);
  model.save(path);
  CHECK_THROWS_AS(bigger.load(path), FormatError);
  std::filesystem::remove(path);
}
