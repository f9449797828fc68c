#ifndef AUDRON_SYNTH_HPP
#define AUDRON_SYNTH_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "audron/audio.hpp"
#include "audron/manifest.hpp"

namespace audron {

// Built-in rotor configurations. Classes separate by fundamental frequency;
// RacingDrone shares the quad rotor count but spins much faster.
struct DroneClass {
  std::string name;
  int rotor_count = 4;
  double base_frequency_hz = 75.0;
};

const std::vector<DroneClass>& drone_classes();          // the four built-ins
const DroneClass& drone_class_by_name(const std::string& name);

// Every knob of the waveform model. A clip is a sum of per-rotor harmonic
// stacks (fundamental f1, amplitudes A[k]) under a slow RPM-modulation
// envelope, plus white background noise and low-passed wind noise, peak
// normalized to 0.95.
struct SynthParams {
  int harmonic_count = 5;
  std::vector<double> amplitudes = {1.0, 1.0 / 2, 1.0 / 3, 1.0 / 4, 1.0 / 5};
  std::optional<double> f1_hz;         // unset -> class base frequency
  double mod_depth = 0.15;             // alpha in [0, 1)
  double mod_freq_hz = 1.5;
  std::optional<double> mod_phase;     // unset -> drawn per clip from the seed
  double noise_sigma = 0.05;
  double wind_sigma = 0.1;
  double wind_cutoff_hz = 10.0;
  double rotor_detune_frac = 0.01;     // in [0, 0.1)
  double duration_s = 3.0;
  int sample_rate_hz = 16000;

  void validate() const;  // throws ParameterError
  int64_t sample_count() const;
};

// M(t) = 1 + alpha * sin(2*pi*f_m*t + phi), bounded in [1-alpha, 1+alpha].
double modulation_envelope(double t, double alpha, double f_m_hz, double phi);

// Deterministic for fixed (cls, params, seed).
AudioClip synthesize(const DroneClass& cls, const SynthParams& params, uint64_t seed);

// Writes one WAV per clip under out_dir/<ClassName>/ plus manifest.csv.
// Per-clip seeds derive from the master seed, so the corpus is
// bit-reproducible; clips may be synthesized in parallel.
DatasetManifest generate_dataset(const std::string& out_dir, int per_class_train,
                                 int per_class_val, const SynthParams& params, uint64_t seed);

}  // namespace audron

#endif  // AUDRON_SYNTH_HPP
