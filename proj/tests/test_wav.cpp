#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "audron/rng.hpp"
#include "audron/common.hpp"
#include "audron/wav.hpp"

using namespace audron;
namespace fs = std::filesystem;

namespace {
std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("audron_wav_" + name)).string();
}
}  // namespace

TEST_CASE("pcm mapping endpoints") {
  CHECK(float_to_pcm16(1.0) == 32767);
  CHECK(float_to_pcm16(-1.0) == -32767);
  CHECK(float_to_pcm16(-1.5) == -32768);  // clamp
  CHECK(float_to_pcm16(2.0) == 32767);
  CHECK(pcm16_to_float(32767) == 32767.0 / 32768.0);
}

TEST_CASE("roundtrip is exact at 16-bit resolution") {
  Rng rng(5);
  AudioClip clip;
  clip.sample_rate_hz = 16000;
  for (int i = 0; i < 500; ++i) clip.samples.push_back(rng.uniform(-0.95, 0.95));

  const std::string path = tmp_path("roundtrip.wav");
  write_wav(clip, path);
  const AudioClip back = read_wav(path);
  REQUIRE(back.samples.size() == clip.samples.size());
  CHECK(back.sample_rate_hz == 16000);
  // The decoded stream is exactly the stored int16 payload; no loss beyond
  // the encoding quantization itself.
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    const int16_t stored = float_to_pcm16(clip.samples[i]);
    CHECK(back.samples[i] == pcm16_to_float(stored));
  }
  fs::remove(path);
}

TEST_CASE("reads a file produced by an independent encoder") {
  const char* dir = std::getenv("AUDRON_TEST_DATA");
  REQUIRE(dir != nullptr);
  const AudioClip clip = read_wav(std::string(dir) + "/ref_sine_440.wav");
  CHECK(clip.sample_rate_hz == 16000);
  REQUIRE(clip.samples.size() == 160);
  // int16 payload of 0.5*sin(2*pi*440*i/16000), frozen from the encoder run
  const int16_t expect[10] = {0, 2817, 5550, 8117, 10443, 12458, 14102, 15326, 16093, 16381};
  for (int i = 0; i < 10; ++i)
    CHECK(clip.samples[static_cast<size_t>(i)] == expect[i] / 32768.0);
}

TEST_CASE("malformed containers are rejected with the offending chunk") {
  const std::string path = tmp_path("bad.wav");

  SUBCASE("not RIFF") {
    std::ofstream(path, std::ios::binary) << "JUNKJUNKJUNKJUNK";
    CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("RIFF"), FormatError);
  }
  SUBCASE("stereo rejected") {
    AudioClip clip;
    clip.sample_rate_hz = 8000;
    clip.samples = {0.0, 0.1, 0.2};
    write_wav(clip, path);
    // patch the channel count to 2
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(22);
    const char two[2] = {2, 0};
    f.write(two, 2);
    f.close();
    CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("fmt chunk"), FormatError);
  }
  SUBCASE("non-PCM rejected") {
    AudioClip clip;
    clip.sample_rate_hz = 8000;
    clip.samples = {0.0, 0.1};
    write_wav(clip, path);
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(20);
    const char fmt3[2] = {3, 0};  // IEEE float
    f.write(fmt3, 2);
    f.close();
    CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("not PCM"), FormatError);
  }
  SUBCASE("truncated data chunk") {
    AudioClip clip;
    clip.sample_rate_hz = 8000;
    clip.samples = {0.0, 0.1, 0.2, 0.3};
    write_wav(clip, path);
    fs::resize_file(path, fs::file_size(path) - 3);
    CHECK_THROWS_AS(read_wav(path), FormatError);
  }
  fs::remove(path);
}
