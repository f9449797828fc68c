#ifndef AUDRON_DSP_HPP
#define AUDRON_DSP_HPP

#include <complex>
#include <string>
#include <vector>

#include "audron/audio.hpp"

namespace audron {

enum class Window { Hann, Rectangular };

struct StftConfig {
  int n_fft = 512;
  int hop = 256;
  Window window = Window::Hann;

  void validate() const;  // n_fft power of two, 0 < hop <= n_fft
  int bins() const { return n_fft / 2 + 1; }
};

// Time-frequency magnitude grid, frames x bins, bins = n_fft/2 + 1.
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> mags;  // row-major [frames x bins]
  StftConfig config;

  double at(int frame, int bin) const { return mags[static_cast<size_t>(frame) * bins + bin]; }
};

// Triangular mel filterbank, n_mels x bins, each row peak-normalized to 1.
struct MelFilterbank {
  int n_mels = 0;
  int bins = 0;
  std::vector<double> weights;  // row-major [n_mels x bins]
  double f_min_hz = 0.0;
  double f_max_hz = 0.0;

  double at(int mel, int bin) const { return weights[static_cast<size_t>(mel) * bins + bin]; }
};

// Cepstral features, frames x 13.
struct MfccMatrix {
  static constexpr int kCoeffs = 13;
  int frames = 0;
  std::vector<double> coeffs;  // row-major [frames x 13]

  double at(int frame, int c) const { return coeffs[static_cast<size_t>(frame) * kCoeffs + c]; }
};

// mel(f) = 2595 * log10(1 + f / 700)
double hz_to_mel(double f);
double mel_to_hz(double m);

// In-place radix-2 complex FFT, n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& x);

Spectrogram stft(const AudioClip& clip, const StftConfig& config);

MelFilterbank build_mel_filterbank(int n_mels, const StftConfig& config, int sample_rate_hz,
                                   double f_min_hz, double f_max_hz);

// Per frame: power spectrum -> filterbank -> log(. + floor) -> orthonormal
// DCT-II, keeping coefficients 0..12.
MfccMatrix mfcc(const AudioClip& clip, const StftConfig& config, const MelFilterbank& fb);

// The log/DCT tail of the MFCC pipeline starting from mel-band energies of
// one frame. Split out so the cepstral stage is testable on its own.
std::vector<double> mfcc_from_mel_energies(const std::vector<double>& energies,
                                           double log_floor = 1e-10);

AudioClip resample_linear(const AudioClip& clip, int target_rate_hz);

// 8-bit binary PGM, one row per frame, one column per bin, linear min-max
// scaling of the provided grid.
void write_pgm(const std::vector<double>& grid, int rows, int cols, const std::string& path);

}  // namespace audron

#endif  // AUDRON_DSP_HPP
