#include "audron/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "audron/common.hpp"
#include "audron/rng.hpp"

namespace fs = std::filesystem;

namespace audron {

Task task_from_string(const std::string& s) {
  if (s == "binary") return Task::Binary;
  if (s == "multi3") return Task::Multiclass3;
  if (s == "synth4") return Task::Synthetic4;
  throw ParameterError("unknown task '" + s + "' (expected binary|multi3|synth4)");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::Binary: return "binary";
    case Task::Multiclass3: return "multi3";
    case Task::Synthetic4: return "synth4";
  }
  return "?";
}

std::vector<std::string> task_labels(Task t) {
  switch (t) {
    case Task::Binary: return {"Drone", "Noise"};
    case Task::Multiclass3: return {"Bebop", "Membo", "Noise"};
    case Task::Synthetic4: return {"Quadcopter", "Hexacopter", "Octocopter", "RacingDrone"};
  }
  return {};
}

std::vector<ManifestRow> DatasetManifest::split_rows(const std::string& split) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(r);
  return out;
}

int DatasetManifest::label_index(const std::string& label) const {
  const auto labels = task_labels(task);
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<int>(i);
  throw DataError("label '" + label + "' not in task " + task_name(task));
}

void DatasetManifest::validate() const {
  const auto labels = task_labels(task);
  std::set<std::string> label_set(labels.begin(), labels.end());
  std::set<std::string> paths;
  for (const auto& r : rows) {
    if (!paths.insert(r.path).second)
      throw DataError("manifest: duplicate path " + r.path);
    if (!label_set.count(r.label))
      throw DataError("manifest: label '" + r.label + "' not in task " + task_name(task));
    if (r.split != "train" && r.split != "val")
      throw DataError("manifest: split '" + r.split + "' must be train or val");
  }
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ostringstream out;
  out << "path,label,split\n";
  auto rows = m.rows;
  std::sort(rows.begin(), rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) { return a.path < b.path; });
  for (const auto& r : rows) out << r.path << "," << r.label << "," << r.split << "\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw IoError("save_manifest: cannot open " + tmp);
    f << out.str();
    if (!f) throw IoError("save_manifest: short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("save_manifest: rename to " + path + ": " + ec.message());
}

DatasetManifest load_manifest(const std::string& path, Task task) {
  std::ifstream f(path);
  if (!f) throw IoError("load_manifest: cannot open " + path);
  DatasetManifest m;
  m.task = task;
  std::string line;
  if (!std::getline(f, line)) throw DataError("load_manifest: " + path + " is empty");
  if (line != "path,label,split")
    throw DataError("load_manifest: " + path + ": bad header '" + line + "'");
  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw DataError("load_manifest: " + path + ":" + std::to_string(lineno) +
                      ": expected path,label,split");
    m.rows.push_back({line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1), line.substr(c2 + 1)});
  }
  std::sort(m.rows.begin(), m.rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) { return a.path < b.path; });
  m.validate();
  return m;
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Maps a class directory name onto the task's label set. For the binary
// task every drone-source directory collapses to Drone and anything else
// counts as Noise.
std::string map_dir_label(const std::string& dir, Task task) {
  const std::string low = lower(dir);
  if (task == Task::Binary) {
    static const std::set<std::string> drone_dirs = {"bebop", "membo", "drone", "supplementary"};
    return drone_dirs.count(low) ? "Drone" : "Noise";
  }
  for (const auto& label : task_labels(task))
    if (lower(label) == low) return label;
  throw DataError("ingest: unknown label directory '" + dir + "' for task " + task_name(task));
}

}  // namespace

DatasetManifest ingest_directory(const std::string& root, Task task, double split_ratio,
                                 uint64_t seed) {
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw ParameterError("ingest: split_ratio must be in (0, 1)");
  if (!fs::is_directory(root)) throw IoError("ingest: " + root + " is not a directory");

  // label -> sorted relative paths
  std::map<std::string, std::vector<std::string>> by_label;
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const std::string label = map_dir_label(dir, task);
    auto& files = by_label[label];
    for (const auto& e : fs::directory_iterator(fs::path(root) / dir)) {
      if (!e.is_regular_file()) continue;
      if (lower(e.path().extension().string()) != ".wav") continue;
      files.push_back(dir + "/" + e.path().filename().string());
    }
  }

  for (const auto& label : task_labels(task)) {
    auto it = by_label.find(label);
    if (it == by_label.end() || it->second.empty())
      throw DataError("ingest: class '" + label + "' has no files under " + root);
  }

  DatasetManifest m;
  m.task = task;
  uint64_t label_key = 0;
  for (auto& [label, files] : by_label) {
    std::sort(files.begin(), files.end());
    // Seeded Fisher-Yates, stratified per label.
    Rng rng(split_stream(seed, label_key++));
    std::vector<size_t> idx(files.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    const auto n_train = static_cast<size_t>(std::llround(split_ratio * files.size()));
    for (size_t i = 0; i < idx.size(); ++i)
      m.rows.push_back({files[idx[i]], label, i < n_train ? "train" : "val"});
  }
  std::sort(m.rows.begin(), m.rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) { return a.path < b.path; });
  m.validate();
  return m;
}

}  // namespace audron
