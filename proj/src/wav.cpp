#include "audron/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "audron/common.hpp"

namespace audron {

namespace {

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

int16_t float_to_pcm16(double x) {
  double v = std::round(x * 32767.0);
  if (v > 32767.0) v = 32767.0;
  if (v < -32768.0) v = -32768.0;
  return static_cast<int16_t>(v);
}

double pcm16_to_float(int16_t i) { return static_cast<double>(i) / 32768.0; }

void write_wav(const AudioClip& clip, const std::string& path) {
  if (clip.sample_rate_hz <= 0) throw ParameterError("write_wav: sample rate must be positive");
  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_bytes = n * 2;
  const uint32_t sr = static_cast<uint32_t>(clip.sample_rate_hz);

  std::string buf;
  buf.reserve(44 + data_bytes);
  buf += "RIFF";
  put_u32(buf, 36 + data_bytes);
  buf += "WAVE";
  buf += "fmt ";
  put_u32(buf, 16);
  put_u16(buf, 1);  // PCM
  put_u16(buf, 1);  // mono
  put_u32(buf, sr);
  put_u32(buf, sr * 2);  // byte rate
  put_u16(buf, 2);       // block align
  put_u16(buf, 16);      // bits per sample
  buf += "data";
  put_u32(buf, data_bytes);
  for (double s : clip.samples) {
    const int16_t v = float_to_pcm16(s);
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_wav: cannot open " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write_wav: short write to " + path);
}

AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw FormatError("read_wav: " + path + ": missing RIFF/WAVE header");

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    const uint32_t len = get_u32(buf.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + len > buf.size())
      throw FormatError("read_wav: " + path + ": chunk '" + std::string(id, 4) +
                        "' overruns file");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("read_wav: " + path + ": fmt chunk too short");
      format = get_u16(buf.data() + body);
      channels = get_u16(buf.data() + body + 2);
      sample_rate = get_u32(buf.data() + body + 4);
      bits = get_u16(buf.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw FormatError("read_wav: " + path + ": no fmt chunk");
  if (data_off == 0) throw FormatError("read_wav: " + path + ": no data chunk");
  if (format != 1)
    throw FormatError("read_wav: " + path + ": fmt chunk: format " + std::to_string(format) +
                      " is not PCM");
  if (channels != 1)
    throw FormatError("read_wav: " + path + ": fmt chunk: " + std::to_string(channels) +
                      " channels, mono required");
  if (bits != 16)
    throw FormatError("read_wav: " + path + ": fmt chunk: " + std::to_string(bits) +
                      "-bit samples, 16 required");

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(sample_rate);
  clip.source = ClipSource::File;
  const size_t n = data_len / 2;
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const uint16_t raw = get_u16(buf.data() + data_off + 2 * i);
    clip.samples[i] = pcm16_to_float(static_cast<int16_t>(raw));
  }
  return clip;
}

}  // namespace audron
