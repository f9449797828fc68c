#include "audron/dataset.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "audron/threadpool.hpp"
#include "audron/wav.hpp"

namespace fs = std::filesystem;

namespace audron {

AudioClip load_clip_for_model(const std::string& path, const FeatureConfig& cfg) {
  AudioClip clip = read_wav(path);
  clip = resample_linear(clip, cfg.sample_rate_hz);
  const int64_t n = clip.size();
  if (n == static_cast<int64_t>(cfg.clip_len)) return clip;
  std::vector<double> fixed(static_cast<size_t>(cfg.clip_len), 0.0);
  if (n < cfg.clip_len) {
    // zero-pad the tail
    std::copy(clip.samples.begin(), clip.samples.end(), fixed.begin());
  } else {
    const int64_t start = (n - cfg.clip_len) / 2;  // center crop
    std::copy(clip.samples.begin() + start, clip.samples.begin() + start + cfg.clip_len,
              fixed.begin());
  }
  clip.samples = std::move(fixed);
  return clip;
}

namespace {

struct RawFeatures {
  MfccMatrix mfcc;
  Spectrogram spect;
  std::vector<double> wave;
};

template <typename Fn>
void for_each_clip(const std::vector<ManifestRow>& rows, const std::string& base_dir,
                   const FeatureConfig& cfg, const MelFilterbank& fb, Fn&& fn) {
  std::exception_ptr err;
  std::mutex err_mu;
  parallel_for(static_cast<int64_t>(rows.size()), [&](int64_t b, int64_t e) {
    try {
      for (int64_t i = b; i < e; ++i) {
        const std::string path = (fs::path(base_dir) / rows[static_cast<size_t>(i)].path).string();
        const AudioClip clip = load_clip_for_model(path, cfg);
        RawFeatures raw;
        raw.mfcc = mfcc(clip, cfg.stft, fb);
        raw.spect = stft(clip, cfg.stft);
        raw.wave = clip.samples;
        fn(i, raw);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mu);
      if (!err) err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
}

}  // namespace

FeatureStats compute_feature_stats(const std::vector<ManifestRow>& train_rows,
                                   const std::string& base_dir, const FeatureConfig& cfg) {
  if (train_rows.empty()) throw DataError("feature stats: empty training split");
  const MelFilterbank fb =
      build_mel_filterbank(cfg.n_mels, cfg.stft, cfg.sample_rate_hz, cfg.mel_fmin_hz,
                           cfg.mel_fmax_hz);

  // Accumulate per clip, then reduce in index order.
  const size_t n = train_rows.size();
  std::vector<double> sum_s(n, 0.0), sum_s2(n, 0.0);
  std::vector<std::array<double, 13>> sum_m(n), sum_m2(n);
  std::vector<int64_t> count_s(n, 0), count_m(n, 0);
  for (auto& a : sum_m) a.fill(0.0);
  for (auto& a : sum_m2) a.fill(0.0);

  for_each_clip(train_rows, base_dir, cfg, fb, [&](int64_t i, const RawFeatures& raw) {
    double s = 0.0, s2 = 0.0;
    for (double v : raw.spect.mags) {
      const double lv = std::log1p(v);
      s += lv;
      s2 += lv * lv;
    }
    sum_s[static_cast<size_t>(i)] = s;
    sum_s2[static_cast<size_t>(i)] = s2;
    count_s[static_cast<size_t>(i)] = static_cast<int64_t>(raw.spect.mags.size());
    auto& m = sum_m[static_cast<size_t>(i)];
    auto& m2 = sum_m2[static_cast<size_t>(i)];
    for (int f = 0; f < raw.mfcc.frames; ++f)
      for (int c = 0; c < MfccMatrix::kCoeffs; ++c) {
        const double v = raw.mfcc.at(f, c);
        m[static_cast<size_t>(c)] += v;
        m2[static_cast<size_t>(c)] += v * v;
      }
    count_m[static_cast<size_t>(i)] = raw.mfcc.frames;
  });

  FeatureStats stats;
  double s = 0.0, s2 = 0.0;
  int64_t cs = 0, cm = 0;
  std::array<double, 13> m{}, m2{};
  for (size_t i = 0; i < n; ++i) {
    s += sum_s[i];
    s2 += sum_s2[i];
    cs += count_s[i];
    cm += count_m[i];
    for (int c = 0; c < 13; ++c) {
      m[static_cast<size_t>(c)] += sum_m[i][static_cast<size_t>(c)];
      m2[static_cast<size_t>(c)] += sum_m2[i][static_cast<size_t>(c)];
    }
  }
  stats.spect_mean = s / static_cast<double>(cs);
  stats.spect_std = std::sqrt(std::max(s2 / cs - stats.spect_mean * stats.spect_mean, 0.0));
  if (stats.spect_std < 1e-8) stats.spect_std = 1e-8;
  for (int c = 0; c < 13; ++c) {
    const double mean = m[static_cast<size_t>(c)] / static_cast<double>(cm);
    double sd = std::sqrt(
        std::max(m2[static_cast<size_t>(c)] / static_cast<double>(cm) - mean * mean, 0.0));
    if (sd < 1e-8) sd = 1e-8;
    stats.mfcc_mean[static_cast<size_t>(c)] = mean;
    stats.mfcc_std[static_cast<size_t>(c)] = sd;
  }
  return stats;
}

FeatureSet build_feature_set(const std::vector<ManifestRow>& rows, const std::string& base_dir,
                             Task task, const FeatureConfig& cfg, const FeatureStats& stats) {
  if (rows.empty()) throw DataError("feature set: no rows");
  const MelFilterbank fb =
      build_mel_filterbank(cfg.n_mels, cfg.stft, cfg.sample_rate_hz, cfg.mel_fmin_hz,
                           cfg.mel_fmax_hz);
  FeatureSet set;
  set.frames_ = cfg.frames();
  set.bins_ = cfg.bins();
  set.clip_len_ = cfg.clip_len;
  const int64_t n = static_cast<int64_t>(rows.size());
  const int64_t frames = set.frames_, bins = set.bins_;
  const int64_t pooled = cfg.clip_len / 10;

  DatasetManifest label_helper;
  label_helper.task = task;
  set.labels_.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    set.labels_[static_cast<size_t>(i)] =
        label_helper.label_index(rows[static_cast<size_t>(i)].label);

  set.mfcc_.resize(static_cast<size_t>(n * 13 * frames));
  set.seq_.resize(static_cast<size_t>(n * frames * 13));
  set.spect_.resize(static_cast<size_t>(n * frames * bins));
  set.wave_.resize(static_cast<size_t>(n * cfg.clip_len));
  set.recon_.resize(static_cast<size_t>(n * pooled));

  for_each_clip(rows, base_dir, cfg, fb, [&](int64_t i, const RawFeatures& raw) {
    if (raw.mfcc.frames != frames || raw.spect.frames != frames)
      throw DataError("feature set: clip " + rows[static_cast<size_t>(i)].path +
                      " produced " + std::to_string(raw.mfcc.frames) + " frames, expected " +
                      std::to_string(frames));
    float* mf = set.mfcc_.data() + i * 13 * frames;
    float* sq = set.seq_.data() + i * frames * 13;
    for (int64_t f = 0; f < frames; ++f)
      for (int64_t c = 0; c < 13; ++c) {
        const double v = (raw.mfcc.at(static_cast<int>(f), static_cast<int>(c)) -
                          stats.mfcc_mean[static_cast<size_t>(c)]) /
                         stats.mfcc_std[static_cast<size_t>(c)];
        mf[c * frames + f] = static_cast<float>(v);
        sq[f * 13 + c] = static_cast<float>(v);
      }
    float* sp = set.spect_.data() + i * frames * bins;
    for (int64_t k = 0; k < frames * bins; ++k)
      sp[k] = static_cast<float>(
          (std::log1p(raw.spect.mags[static_cast<size_t>(k)]) - stats.spect_mean) /
          stats.spect_std);
    float* wv = set.wave_.data() + i * cfg.clip_len;
    for (int64_t k = 0; k < cfg.clip_len; ++k)
      wv[k] = static_cast<float>(raw.wave[static_cast<size_t>(k)]);
    float* rc = set.recon_.data() + i * pooled;
    for (int64_t k = 0; k < pooled; ++k) {
      double acc = 0.0;
      for (int64_t j = 0; j < 10; ++j) acc += raw.wave[static_cast<size_t>(k * 10 + j)];
      rc[k] = static_cast<float>(acc) / 10.0f;
    }
  });
  return set;
}

Batch<float> FeatureSet::make_batch(const std::vector<int64_t>& indices) const {
  if (indices.empty()) throw DataError("make_batch: empty index list");
  const int64_t b = static_cast<int64_t>(indices.size());
  const int64_t frames = frames_, bins = bins_, pooled = clip_len_ / 10;
  Batch<float> batch;
  Tensor<float> mf = Tensor<float>::zeros({b, 13, frames});
  Tensor<float> sq = Tensor<float>::zeros({b, frames, 13});
  Tensor<float> sp = Tensor<float>::zeros({b, 1, frames, bins});
  Tensor<float> wv = Tensor<float>::zeros({b, clip_len_});
  Tensor<float> rc = Tensor<float>::zeros({b, pooled});
  for (int64_t k = 0; k < b; ++k) {
    const int64_t i = indices[static_cast<size_t>(k)];
    if (i < 0 || i >= count()) throw DataError("make_batch: index out of range");
    std::memcpy(mf.data() + k * 13 * frames, mfcc_.data() + i * 13 * frames,
                sizeof(float) * 13 * frames);
    std::memcpy(sq.data() + k * frames * 13, seq_.data() + i * frames * 13,
                sizeof(float) * frames * 13);
    std::memcpy(sp.data() + k * frames * bins, spect_.data() + i * frames * bins,
                sizeof(float) * frames * bins);
    std::memcpy(wv.data() + k * clip_len_, wave_.data() + i * clip_len_,
                sizeof(float) * clip_len_);
    std::memcpy(rc.data() + k * pooled, recon_.data() + i * pooled, sizeof(float) * pooled);
    batch.labels.push_back(labels_[static_cast<size_t>(i)]);
  }
  batch.mfcc = mf;
  batch.seq = sq;
  batch.spect = sp;
  batch.wave = wv;
  batch.recon_target = rc;
  return batch;
}

// ---------------------------------------------------------------------------
// model.cfg
// ---------------------------------------------------------------------------

namespace {

std::string hexf(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (...) {
    throw DataError("model config: bad number '" + s + "'");
  }
}

int64_t parse_int(const std::string& s) {
  try {
    return std::stoll(s);
  } catch (...) {
    throw DataError("model config: bad integer '" + s + "'");
  }
}

}  // namespace

void write_model_config(const std::string& path, const ModelConfig& model,
                        const FeatureConfig& features, const FeatureStats& stats, Task task) {
  std::ostringstream out;
  out << "task=" << task_name(task) << "\n";
  out << "n_classes=" << model.n_classes << "\n";
  out << "branches=" << model.branches.csv() << "\n";
  out << "mfcc_out=" << model.mfcc_out << "\n";
  out << "stft_out=" << model.stft_out << "\n";
  out << "rnn_out=" << model.rnn_out << "\n";
  out << "ae_embed=" << model.ae_embed << "\n";
  out << "attn_dim=" << model.attn_dim << "\n";
  out << "fusion_hidden=" << model.fusion_hidden << "\n";
  out << "dropout_p=" << hexf(model.dropout_p) << "\n";
  out << "reduced=" << (model.reduced ? 1 : 0) << "\n";
  out << "wave_len=" << model.wave_len << "\n";
  out << "n_fft=" << features.stft.n_fft << "\n";
  out << "hop=" << features.stft.hop << "\n";
  out << "window=" << (features.stft.window == Window::Hann ? "hann" : "rect") << "\n";
  out << "n_mels=" << features.n_mels << "\n";
  out << "mel_fmin_hz=" << hexf(features.mel_fmin_hz) << "\n";
  out << "mel_fmax_hz=" << hexf(features.mel_fmax_hz) << "\n";
  out << "sample_rate_hz=" << features.sample_rate_hz << "\n";
  out << "clip_len=" << features.clip_len << "\n";
  out << "spect_mean=" << hexf(stats.spect_mean) << "\n";
  out << "spect_std=" << hexf(stats.spect_std) << "\n";
  for (int c = 0; c < 13; ++c) {
    out << "mfcc_mean_" << c << "=" << hexf(stats.mfcc_mean[static_cast<size_t>(c)]) << "\n";
    out << "mfcc_std_" << c << "=" << hexf(stats.mfcc_std[static_cast<size_t>(c)]) << "\n";
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("model config: cannot open " + path);
  f << out.str();
  if (!f) throw IoError("model config: short write to " + path);
}

LoadedModelConfig read_model_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("model config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("model config: " + path + ": bad line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto get = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("model config: " + path + ": missing key " + key);
    return it->second;
  };

  LoadedModelConfig out;
  out.task = task_from_string(get("task"));
  out.model.n_classes = static_cast<int>(parse_int(get("n_classes")));
  out.model.branches = BranchSet::from_csv(get("branches"));
  out.model.mfcc_out = parse_int(get("mfcc_out"));
  out.model.stft_out = parse_int(get("stft_out"));
  out.model.rnn_out = parse_int(get("rnn_out"));
  out.model.ae_embed = parse_int(get("ae_embed"));
  out.model.attn_dim = parse_int(get("attn_dim"));
  out.model.fusion_hidden = parse_int(get("fusion_hidden"));
  out.model.dropout_p = parse_double(get("dropout_p"));
  out.model.reduced = parse_int(get("reduced")) != 0;
  out.model.wave_len = parse_int(get("wave_len"));
  out.features.stft.n_fft = static_cast<int>(parse_int(get("n_fft")));
  out.features.stft.hop = static_cast<int>(parse_int(get("hop")));
  out.features.stft.window = get("window") == "rect" ? Window::Rectangular : Window::Hann;
  out.features.n_mels = static_cast<int>(parse_int(get("n_mels")));
  out.features.mel_fmin_hz = parse_double(get("mel_fmin_hz"));
  out.features.mel_fmax_hz = parse_double(get("mel_fmax_hz"));
  out.features.sample_rate_hz = static_cast<int>(parse_int(get("sample_rate_hz")));
  out.features.clip_len = parse_int(get("clip_len"));
  out.stats.spect_mean = parse_double(get("spect_mean"));
  out.stats.spect_std = parse_double(get("spect_std"));
  for (int c = 0; c < 13; ++c) {
    out.stats.mfcc_mean[static_cast<size_t>(c)] =
        parse_double(get("mfcc_mean_" + std::to_string(c)));
    out.stats.mfcc_std[static_cast<size_t>(c)] =
        parse_double(get("mfcc_std_" + std::to_string(c)));
  }
  return out;
}

}  // namespace audron
