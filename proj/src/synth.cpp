#include "audron/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>

#include "audron/common.hpp"
#include "audron/rng.hpp"
#include "audron/threadpool.hpp"
#include "audron/wav.hpp"

namespace fs = std::filesystem;

namespace audron {

namespace {
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
constexpr double kPeakTarget = 0.95;
}  // namespace

const std::vector<DroneClass>& drone_classes() {
  static const std::vector<DroneClass> classes = {
      {"Quadcopter", 4, 75.0},
      {"Hexacopter", 6, 65.0},
      {"Octocopter", 8, 55.0},
      {"RacingDrone", 4, 120.0},
  };
  return classes;
}

const DroneClass& drone_class_by_name(const std::string& name) {
  for (const auto& c : drone_classes())
    if (c.name == name) return c;
  throw ParameterError("unknown drone class '" + name + "'");
}

void SynthParams::validate() const {
  if (duration_s <= 0.0) throw ParameterError("synth: duration_s must be positive");
  if (sample_rate_hz <= 0) throw ParameterError("synth: sample_rate_hz must be positive");
  if (harmonic_count < 1) throw ParameterError("synth: harmonic_count must be >= 1");
  if (static_cast<int>(amplitudes.size()) != harmonic_count)
    throw ParameterError("synth: expected " + std::to_string(harmonic_count) +
                         " amplitudes, got " + std::to_string(amplitudes.size()));
  for (double a : amplitudes)
    if (a < 0.0) throw ParameterError("synth: harmonic amplitudes must be >= 0");
  if (!(mod_depth >= 0.0 && mod_depth < 1.0))
    throw ParameterError("synth: mod_depth must be in [0, 1)");
  if (noise_sigma < 0.0) throw ParameterError("synth: noise_sigma must be >= 0");
  if (wind_sigma < 0.0) throw ParameterError("synth: wind_sigma must be >= 0");
  if (!(rotor_detune_frac >= 0.0 && rotor_detune_frac < 0.1))
    throw ParameterError("synth: rotor_detune_frac must be in [0, 0.1)");
  const double n = duration_s * sample_rate_hz;
  if (std::fabs(n - std::round(n)) > 1e-6)
    throw ParameterError("synth: duration_s * sample_rate_hz must be an integer sample count");
  if (f1_hz && *f1_hz <= 0.0) throw ParameterError("synth: f1_hz must be positive");
}

int64_t SynthParams::sample_count() const {
  return static_cast<int64_t>(std::llround(duration_s * sample_rate_hz));
}

double modulation_envelope(double t, double alpha, double f_m_hz, double phi) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw ParameterError("modulation_envelope: alpha must be in [0, 1)");
  return 1.0 + alpha * std::sin(kTwoPi * f_m_hz * t + phi);
}

AudioClip synthesize(const DroneClass& cls, const SynthParams& params, uint64_t seed) {
  params.validate();
  const int64_t n = params.sample_count();
  const double dt = 1.0 / params.sample_rate_hz;
  const double f1 = params.f1_hz.value_or(cls.base_frequency_hz);

  // Independent sub-streams so toggling one term never shifts another.
  Rng shape_rng(split_stream(seed, 0));
  Rng noise_rng(split_stream(seed, 1));
  Rng wind_rng(split_stream(seed, 2));

  const double phi = params.mod_phase ? *params.mod_phase : shape_rng.uniform(0.0, kTwoPi);
  std::vector<double> rotor_f1(cls.rotor_count, f1);
  if (params.rotor_detune_frac > 0.0)
    for (double& f : rotor_f1)
      f = f1 * (1.0 + shape_rng.uniform(-params.rotor_detune_frac, params.rotor_detune_frac));

  AudioClip clip;
  clip.sample_rate_hz = params.sample_rate_hz;
  clip.label = cls.name;
  clip.source = ClipSource::Synthetic;
  clip.samples.assign(n, 0.0);

  // Harmonic stacks, averaged over rotors so the scale is class-independent.
  for (int64_t i = 0; i < n; ++i) {
    const double t = i * dt;
    double acc = 0.0;
    for (double f : rotor_f1)
      for (int k = 1; k <= params.harmonic_count; ++k)
        acc += params.amplitudes[k - 1] * std::sin(kTwoPi * k * f * t);
    clip.samples[i] = acc / cls.rotor_count *
                      (1.0 + params.mod_depth * std::sin(kTwoPi * params.mod_freq_hz * t + phi));
  }

  if (params.noise_sigma > 0.0)
    for (int64_t i = 0; i < n; ++i) clip.samples[i] += noise_rng.normal(params.noise_sigma);

  if (params.wind_sigma > 0.0) {
    // White noise through a single-pole low-pass.
    const double a = std::exp(-kTwoPi * params.wind_cutoff_hz * dt);
    double y = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      y = a * y + (1.0 - a) * wind_rng.normal(params.wind_sigma);
      clip.samples[i] += y;
    }
  }

  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 0.0) {
    const double scale = kPeakTarget / peak;
    for (double& s : clip.samples) s *= scale;
  }
  return clip;
}

DatasetManifest generate_dataset(const std::string& out_dir, int per_class_train,
                                 int per_class_val, const SynthParams& params, uint64_t seed) {
  if (per_class_train < 1 || per_class_val < 1)
    throw ParameterError("generate_dataset: per-class counts must be >= 1");
  params.validate();

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("generate_dataset: cannot create " + out_dir + ": " + ec.message());

  struct Job {
    int class_idx;
    std::string rel_path;
    std::string split;
    uint64_t clip_seed;
  };
  const auto& classes = drone_classes();
  const int per_class = per_class_train + per_class_val;
  std::vector<Job> jobs;
  jobs.reserve(static_cast<size_t>(classes.size()) * per_class);
  for (size_t c = 0; c < classes.size(); ++c) {
    fs::create_directories(fs::path(out_dir) / classes[c].name, ec);
    if (ec) throw IoError("generate_dataset: cannot create class dir: " + ec.message());
    for (int i = 0; i < per_class; ++i) {
      const bool is_train = i < per_class_train;
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%s_%04d.wav", classes[c].name.c_str(),
                    is_train ? "train" : "val", is_train ? i : i - per_class_train);
      const uint64_t global_idx = c * static_cast<uint64_t>(per_class) + i;
      jobs.push_back({static_cast<int>(c), classes[c].name + "/" + name,
                      is_train ? "train" : "val", split_stream(seed, global_idx)});
    }
  }

  // Clips are pure functions of (class, params, seed): synthesize in
  // parallel, then write sequentially.
  std::vector<AudioClip> clips(jobs.size());
  std::exception_ptr err;
  std::mutex err_mu;
  parallel_for(static_cast<int64_t>(jobs.size()), [&](int64_t b, int64_t e) {
    try {
      for (int64_t i = b; i < e; ++i)
        clips[i] = synthesize(classes[jobs[i].class_idx], params, jobs[i].clip_seed);
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mu);
      if (!err) err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);

  DatasetManifest manifest;
  manifest.task = Task::Synthetic4;
  for (size_t i = 0; i < jobs.size(); ++i) {
    write_wav(clips[i], (fs::path(out_dir) / jobs[i].rel_path).string());
    manifest.rows.push_back({jobs[i].rel_path, classes[jobs[i].class_idx].name, jobs[i].split});
  }
  save_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());
  std::sort(manifest.rows.begin(), manifest.rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) { return a.path < b.path; });
  return manifest;
}

}  // namespace audron
