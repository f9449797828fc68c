#include "audron/runconfig.hpp"

#include <fstream>
#include <sstream>

namespace audron {

RunConfig::RunConfig() {
  values_ = {
      // synthetic corpus
      {"synth_harmonics", "5"},
      {"synth_f1_hz", "0"},  // 0 = per-class base frequency
      {"synth_mod_depth", "0.15"},
      {"synth_mod_freq_hz", "1.5"},
      {"synth_noise_sigma", "0.05"},
      {"synth_wind_sigma", "0.1"},
      {"synth_wind_cutoff_hz", "10"},
      {"synth_detune_frac", "0.01"},
      {"synth_duration_s", "3.0"},
      {"synth_sample_rate_hz", "16000"},
      {"gen_per_class_train", "65"},
      {"gen_per_class_val", "20"},
      {"gen_seed", "42"},
      // features
      {"stft_n_fft", "512"},
      {"stft_hop", "256"},
      {"stft_window", "hann"},
      {"mel_count", "40"},
      {"mel_fmin_hz", "0"},
      {"mel_fmax_hz", "8000"},
      // model dims
      {"model_mfcc_out", "128"},
      {"model_stft_out", "256"},
      {"model_rnn_out", "192"},
      {"model_ae_embed", "160"},
      {"model_attn_dim", "64"},
      {"model_fusion_hidden", "256"},
      {"model_dropout", "0.3"},
      // training recipe
      {"train_lr", "0.001"},
      {"train_batch_size", "16"},
      {"train_max_epochs", "50"},
      {"train_plateau_patience", "5"},
      {"train_plateau_factor", "0.5"},
      {"train_early_stop_patience", "10"},
      {"train_recon_weight", "0.1"},
      {"train_weight_decay", "0.01"},
      {"train_seed", "42"},
      // paths (flags take precedence)
      {"manifest_path", ""},
      {"out_dir", ""},
  };
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParameterError("config: unknown key '" + key + "'");
  it->second = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config: " + path + ":" + std::to_string(lineno) +
                           ": expected key=value, got '" + line + "'");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

std::string RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParameterError("config: unknown key '" + key + "'");
  return it->second;
}

int64_t RunConfig::integer(const std::string& key) const {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(str(key), &pos);
    if (pos != str(key).size()) throw std::invalid_argument(key);
    return v;
  } catch (const ParameterError&) {
    throw;
  } catch (...) {
    throw ParameterError("config: key '" + key + "' is not an integer: '" + str(key) + "'");
  }
}

double RunConfig::real(const std::string& key) const {
  try {
    size_t pos = 0;
    const double v = std::stod(str(key), &pos);
    if (pos != str(key).size()) throw std::invalid_argument(key);
    return v;
  } catch (const ParameterError&) {
    throw;
  } catch (...) {
    throw ParameterError("config: key '" + key + "' is not a number: '" + str(key) + "'");
  }
}

SynthParams RunConfig::synth_params() const {
  SynthParams p;
  p.harmonic_count = static_cast<int>(integer("synth_harmonics"));
  p.amplitudes.clear();
  for (int k = 1; k <= p.harmonic_count; ++k) p.amplitudes.push_back(1.0 / k);
  const double f1 = real("synth_f1_hz");
  if (f1 > 0.0) p.f1_hz = f1;
  p.mod_depth = real("synth_mod_depth");
  p.mod_freq_hz = real("synth_mod_freq_hz");
  p.noise_sigma = real("synth_noise_sigma");
  p.wind_sigma = real("synth_wind_sigma");
  p.wind_cutoff_hz = real("synth_wind_cutoff_hz");
  p.rotor_detune_frac = real("synth_detune_frac");
  p.duration_s = real("synth_duration_s");
  p.sample_rate_hz = static_cast<int>(integer("synth_sample_rate_hz"));
  return p;
}

FeatureConfig RunConfig::feature_config() const {
  FeatureConfig fc;
  fc.stft.n_fft = static_cast<int>(integer("stft_n_fft"));
  fc.stft.hop = static_cast<int>(integer("stft_hop"));
  const std::string w = str("stft_window");
  if (w == "hann") fc.stft.window = Window::Hann;
  else if (w == "rect") fc.stft.window = Window::Rectangular;
  else throw ParameterError("config: stft_window must be hann or rect, got '" + w + "'");
  fc.n_mels = static_cast<int>(integer("mel_count"));
  fc.mel_fmin_hz = real("mel_fmin_hz");
  fc.mel_fmax_hz = real("mel_fmax_hz");
  fc.sample_rate_hz = static_cast<int>(integer("synth_sample_rate_hz"));
  fc.clip_len = static_cast<int64_t>(real("synth_duration_s") * fc.sample_rate_hz + 0.5);
  return fc;
}

ModelConfig RunConfig::model_config(int n_classes) const {
  ModelConfig mc;
  mc.n_classes = n_classes;
  mc.mfcc_out = integer("model_mfcc_out");
  mc.stft_out = integer("model_stft_out");
  mc.rnn_out = integer("model_rnn_out");
  mc.ae_embed = integer("model_ae_embed");
  mc.attn_dim = integer("model_attn_dim");
  mc.fusion_hidden = integer("model_fusion_hidden");
  mc.dropout_p = real("model_dropout");
  mc.wave_len = static_cast<int64_t>(real("synth_duration_s") *
                                     static_cast<double>(integer("synth_sample_rate_hz")) + 0.5);
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.lr = real("train_lr");
  tc.batch_size = static_cast<int>(integer("train_batch_size"));
  tc.max_epochs = static_cast<int>(integer("train_max_epochs"));
  tc.plateau_patience = static_cast<int>(integer("train_plateau_patience"));
  tc.plateau_factor = real("train_plateau_factor");
  tc.early_stop_patience = static_cast<int>(integer("train_early_stop_patience"));
  tc.recon_weight = real("train_recon_weight");
  tc.weight_decay = real("train_weight_decay");
  tc.seed = static_cast<uint64_t>(integer("train_seed"));
  return tc;
}

std::string RunConfig::effective_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
  return out.str();
}

void RunConfig::write_effective(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("config: cannot open " + path);
  f << effective_text();
  if (!f) throw IoError("config: short write to " + path);
}

}  // namespace audron
