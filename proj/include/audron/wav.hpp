#ifndef AUDRON_WAV_HPP
#define AUDRON_WAV_HPP

#include <string>

#include "audron/audio.hpp"

namespace audron {

// RIFF/WAVE, PCM 16-bit mono, little-endian.
//
// Encoding maps float x to round(x * 32767) clamped to [-32768, 32767];
// decoding maps i to i / 32768. write then read is exact at 16-bit
// resolution.

void write_wav(const AudioClip& clip, const std::string& path);

AudioClip read_wav(const std::string& path);

// Encode/decode helpers exposed for tests.
int16_t float_to_pcm16(double x);
double pcm16_to_float(int16_t i);

}  // namespace audron

#endif  // AUDRON_WAV_HPP
