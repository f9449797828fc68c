#ifndef AUDRON_AUDIO_HPP
#define AUDRON_AUDIO_HPP

#include <string>
#include <vector>

namespace audron {

enum class ClipSource { Synthetic, File };

// Fixed-rate mono waveform with label and provenance. Samples live in
// [-1, 1]; synthesis peak-normalizes to 0.95 before WAV encoding.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 16000;
  std::string label;
  ClipSource source = ClipSource::Synthetic;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

}  // namespace audron

#endif  // AUDRON_AUDIO_HPP
