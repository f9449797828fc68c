#include "audron/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "audron/common.hpp"

namespace audron {

namespace {
constexpr double kPi = 3.14159265358979323846;

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }
}  // namespace

void StftConfig::validate() const {
  if (!power_of_two(n_fft))
    throw ParameterError("stft: n_fft " + std::to_string(n_fft) + " must be a power of two");
  if (hop <= 0 || hop > n_fft)
    throw ParameterError("stft: hop " + std::to_string(hop) + " must be in (0, n_fft]");
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

void fft_inplace(std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  if (!power_of_two(static_cast<int>(n)))
    throw ParameterError("fft: size " + std::to_string(n) + " must be a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

Spectrogram stft(const AudioClip& clip, const StftConfig& config) {
  config.validate();
  const int n = config.n_fft;
  const int64_t len = clip.size();
  if (len < n)
    throw DimensionError("stft: input length " + std::to_string(len) +
                         " shorter than n_fft " + std::to_string(n));

  std::vector<double> window(n, 1.0);
  if (config.window == Window::Hann)
    for (int i = 0; i < n; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);

  Spectrogram spec;
  spec.config = config;
  spec.frames = 1 + static_cast<int>((len - n) / config.hop);
  spec.bins = config.bins();
  spec.mags.resize(static_cast<size_t>(spec.frames) * spec.bins);

  std::vector<std::complex<double>> buf(n);
  for (int f = 0; f < spec.frames; ++f) {
    const double* src = clip.samples.data() + static_cast<int64_t>(f) * config.hop;
    for (int i = 0; i < n; ++i) buf[i] = {src[i] * window[i], 0.0};
    fft_inplace(buf);
    double* out = spec.mags.data() + static_cast<size_t>(f) * spec.bins;
    for (int b = 0; b < spec.bins; ++b) out[b] = std::abs(buf[b]);
  }
  return spec;
}

MelFilterbank build_mel_filterbank(int n_mels, const StftConfig& config, int sample_rate_hz,
                                   double f_min_hz, double f_max_hz) {
  config.validate();
  if (sample_rate_hz <= 0) throw ParameterError("mel: sample rate must be positive");
  if (n_mels < MfccMatrix::kCoeffs)
    throw ParameterError("mel: n_mels " + std::to_string(n_mels) + " must be >= 13");
  if (!(f_min_hz >= 0.0 && f_min_hz < f_max_hz && f_max_hz <= sample_rate_hz / 2.0))
    throw ParameterError("mel: need 0 <= f_min < f_max <= sample_rate/2, got [" +
                         std::to_string(f_min_hz) + ", " + std::to_string(f_max_hz) + "] at " +
                         std::to_string(sample_rate_hz) + " Hz");

  const int bins = config.bins();
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.bins = bins;
  fb.f_min_hz = f_min_hz;
  fb.f_max_hz = f_max_hz;
  fb.weights.assign(static_cast<size_t>(n_mels) * bins, 0.0);

  // n_mels + 2 corner points, uniform on the mel scale.
  std::vector<double> corners(n_mels + 2);
  const double m_lo = hz_to_mel(f_min_hz);
  const double m_hi = hz_to_mel(f_max_hz);
  for (int i = 0; i < n_mels + 2; ++i)
    corners[i] = m_lo + (m_hi - m_lo) * i / (n_mels + 1);

  for (int m = 0; m < n_mels; ++m) {
    const double left = corners[m], center = corners[m + 1], right = corners[m + 2];
    double* row = fb.weights.data() + static_cast<size_t>(m) * bins;
    double peak = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double mel_b = hz_to_mel(static_cast<double>(b) * sample_rate_hz / config.n_fft);
      const double up = (mel_b - left) / (center - left);
      const double down = (right - mel_b) / (right - center);
      const double w = std::max(0.0, std::min(up, down));
      row[b] = w;
      peak = std::max(peak, w);
    }
    if (peak <= 0.0)
      throw ParameterError("mel: filter " + std::to_string(m) +
                           " covers no DFT bin; band too narrow for n_fft " +
                           std::to_string(config.n_fft));
    for (int b = 0; b < bins; ++b) row[b] /= peak;
  }
  return fb;
}

std::vector<double> mfcc_from_mel_energies(const std::vector<double>& energies,
                                           double log_floor) {
  const int m_count = static_cast<int>(energies.size());
  std::vector<double> logs(m_count);
  for (int m = 0; m < m_count; ++m) logs[m] = std::log(energies[m] + log_floor);

  std::vector<double> out(MfccMatrix::kCoeffs, 0.0);
  const double s0 = std::sqrt(1.0 / m_count);
  const double sj = std::sqrt(2.0 / m_count);
  for (int j = 0; j < MfccMatrix::kCoeffs; ++j) {
    double acc = 0.0;
    for (int m = 0; m < m_count; ++m)
      acc += logs[m] * std::cos(kPi * j * (2 * m + 1) / (2.0 * m_count));
    out[j] = (j == 0 ? s0 : sj) * acc;
  }
  return out;
}

MfccMatrix mfcc(const AudioClip& clip, const StftConfig& config, const MelFilterbank& fb) {
  const Spectrogram spec = stft(clip, config);
  if (fb.bins != spec.bins)
    throw DimensionError("mfcc: filterbank bins " + std::to_string(fb.bins) +
                         " != spectrogram bins " + std::to_string(spec.bins));

  MfccMatrix out;
  out.frames = spec.frames;
  out.coeffs.resize(static_cast<size_t>(spec.frames) * MfccMatrix::kCoeffs);

  std::vector<double> power(spec.bins), energies(fb.n_mels);
  for (int f = 0; f < spec.frames; ++f) {
    const double* mags = spec.mags.data() + static_cast<size_t>(f) * spec.bins;
    for (int b = 0; b < spec.bins; ++b) power[b] = mags[b] * mags[b];
    for (int m = 0; m < fb.n_mels; ++m) {
      const double* row = fb.weights.data() + static_cast<size_t>(m) * fb.bins;
      double acc = 0.0;
      for (int b = 0; b < spec.bins; ++b) acc += row[b] * power[b];
      energies[m] = acc;
    }
    const std::vector<double> c = mfcc_from_mel_energies(energies);
    std::copy(c.begin(), c.end(), out.coeffs.begin() + static_cast<size_t>(f) * MfccMatrix::kCoeffs);
  }
  return out;
}

AudioClip resample_linear(const AudioClip& clip, int target_rate_hz) {
  if (clip.sample_rate_hz <= 0 || target_rate_hz <= 0)
    throw ParameterError("resample: rates must be positive");
  if (clip.sample_rate_hz == target_rate_hz) return clip;

  AudioClip out;
  out.sample_rate_hz = target_rate_hz;
  out.label = clip.label;
  out.source = clip.source;
  const int64_t n_in = clip.size();
  if (n_in == 0) return out;
  const int64_t n_out =
      static_cast<int64_t>(std::floor(static_cast<double>(n_in) * target_rate_hz /
                                      clip.sample_rate_hz));
  out.samples.resize(n_out);
  const double step = static_cast<double>(clip.sample_rate_hz) / target_rate_hz;
  for (int64_t i = 0; i < n_out; ++i) {
    const double pos = i * step;
    int64_t i0 = static_cast<int64_t>(pos);
    if (i0 >= n_in - 1) i0 = n_in - 1;
    const int64_t i1 = std::min(i0 + 1, n_in - 1);
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = clip.samples[i0] + frac * (clip.samples[i1] - clip.samples[i0]);
  }
  return out;
}

void write_pgm(const std::vector<double>& grid, int rows, int cols, const std::string& path) {
  if (rows <= 0 || cols <= 0 || grid.size() != static_cast<size_t>(rows) * cols)
    throw ParameterError("pgm: grid size does not match rows x cols");
  double lo = grid[0], hi = grid[0];
  for (double v : grid) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("pgm: cannot open " + path);
  f << "P5\n" << cols << " " << rows << "\n255\n";
  std::string body(static_cast<size_t>(rows) * cols, '\0');
  for (size_t i = 0; i < body.size(); ++i) {
    const int v = static_cast<int>(std::lround((grid[i] - lo) / span * 255.0));
    body[i] = static_cast<char>(std::clamp(v, 0, 255));
  }
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw IoError("pgm: short write to " + path);
}

}  // namespace audron
