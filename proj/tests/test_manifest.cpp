#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "audron/common.hpp"
#include "audron/manifest.hpp"
#include "audron/rng.hpp"
#include "audron/wav.hpp"

using namespace audron;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_dummy_wav(const fs::path& p) {
  AudioClip clip;
  clip.sample_rate_hz = 8000;
  clip.samples.assign(64, 0.25);
  write_wav(clip, p.string());
}

void make_class_dir(const fs::path& root, const std::string& label, int files) {
  fs::create_directories(root / label);
  for (int i = 0; i < files; ++i)
    write_dummy_wav(root / label / ("clip_" + std::to_string(i) + ".wav"));
}

}  // namespace

TEST_CASE("manifest save/load round-trips") {
  TempDir dir("audron_manifest_rt");
  DatasetManifest m;
  m.task = Task::Synthetic4;
  m.rows = {
      {"Quadcopter/b.wav", "Quadcopter", "val"},
      {"Octocopter/a.wav", "Octocopter", "train"},
      {"RacingDrone/c.wav", "RacingDrone", "train"},
      {"Hexacopter/d.wav", "Hexacopter", "val"},
  };
  const std::string path = (dir.path / "manifest.csv").string();
  save_manifest(m, path);

  // header + sorted rows
  std::ifstream f(path);
  std::string first;
  std::getline(f, first);
  CHECK(first == "path,label,split");

  const DatasetManifest back = load_manifest(path, Task::Synthetic4);
  REQUIRE(back.rows.size() == 4);
  CHECK(back.rows[0].path == "Hexacopter/d.wav");  // sorted by path
  std::map<std::string, std::string> splits;
  for (const auto& r : back.rows) splits[r.path] = r.split;
  CHECK(splits["Quadcopter/b.wav"] == "val");
  CHECK(splits["Octocopter/a.wav"] == "train");
}

TEST_CASE("manifest validation rejects bad rows") {
  DatasetManifest m;
  m.task = Task::Binary;
  m.rows = {{"a.wav", "Drone", "train"}, {"a.wav", "Noise", "val"}};
  CHECK_THROWS_AS(m.validate(), DataError);  // duplicate path

  m.rows = {{"a.wav", "Quadcopter", "train"}};
  CHECK_THROWS_AS(m.validate(), DataError);  // label outside task

  m.rows = {{"a.wav", "Drone", "test"}};
  CHECK_THROWS_AS(m.validate(), DataError);  // unknown split
}

TEST_CASE("ingest produces an exact stratified split") {
  TempDir dir("audron_ingest_strat");
  for (const auto& label : task_labels(Task::Synthetic4))
    make_class_dir(dir.path, label, 10);

  const DatasetManifest m = ingest_directory(dir.path.string(), Task::Synthetic4, 0.8, 7);
  CHECK(m.rows.size() == 40);
  std::map<std::string, std::pair<int, int>> per_class;  // train, val
  for (const auto& r : m.rows) {
    if (r.split == "train") ++per_class[r.label].first;
    else ++per_class[r.label].second;
  }
  for (const auto& label : task_labels(Task::Synthetic4)) {
    CHECK(per_class[label].first == 8);
    CHECK(per_class[label].second == 2);
  }

  const DatasetManifest again = ingest_directory(dir.path.string(), Task::Synthetic4, 0.8, 7);
  REQUIRE(again.rows.size() == m.rows.size());
  for (size_t i = 0; i < m.rows.size(); ++i) {
    CHECK(again.rows[i].path == m.rows[i].path);
    CHECK(again.rows[i].split == m.rows[i].split);
  }

  const DatasetManifest other = ingest_directory(dir.path.string(), Task::Synthetic4, 0.8, 8);
  bool any_diff = false;
  for (size_t i = 0; i < m.rows.size(); ++i)
    if (other.rows[i].split != m.rows[i].split) any_diff = true;
  CHECK(any_diff);  // different seed, different assignment
}

TEST_CASE("ingest rejects unknown labels and empty classes") {
  TempDir dir("audron_ingest_bad");
  make_class_dir(dir.path, "Quadcopter", 2);
  make_class_dir(dir.path, "Mystery", 2);
  CHECK_THROWS_WITH_AS(ingest_directory(dir.path.string(), Task::Synthetic4, 0.5, 1),
                       doctest::Contains("Mystery"), DataError);

  TempDir dir2("audron_ingest_empty");
  make_class_dir(dir2.path, "Bebop", 2);
  make_class_dir(dir2.path, "Membo", 2);
  // Noise class missing entirely
  CHECK_THROWS_WITH_AS(ingest_directory(dir2.path.string(), Task::Multiclass3, 0.5, 1),
                       doctest::Contains("Noise"), DataError);
}

TEST_CASE("binary ingest maps drone sources onto Drone and the rest onto Noise") {
  TempDir dir("audron_ingest_binary");
  make_class_dir(dir.path, "Bebop", 4);
  make_class_dir(dir.path, "Membo", 4);
  make_class_dir(dir.path, "esc50_rain", 4);
  make_class_dir(dir.path, "silence", 4);

  const DatasetManifest m = ingest_directory(dir.path.string(), Task::Binary, 0.75, 3);
  int drone = 0, noise = 0;
  for (const auto& r : m.rows) {
    if (r.label == "Drone") ++drone;
    else if (r.label == "Noise") ++noise;
  }
  CHECK(drone == 8);
  CHECK(noise == 8);
}
