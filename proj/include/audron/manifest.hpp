#ifndef AUDRON_MANIFEST_HPP
#define AUDRON_MANIFEST_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace audron {

// Classification tasks. Binary = {Drone, Noise}, Multiclass3 =
// {Bebop, Membo, Noise}, Synthetic4 = the four built-in drone classes.
enum class Task { Binary, Multiclass3, Synthetic4 };

Task task_from_string(const std::string& s);
std::string task_name(Task t);
std::vector<std::string> task_labels(Task t);

struct ManifestRow {
  std::string path;   // relative to the manifest file's directory
  std::string label;
  std::string split;  // "train" or "val"
};

// Dataset manifest: CSV `path,label,split`, rows sorted by path. Paths are
// unique, labels drawn from the task's label set, splits disjoint by
// construction (one row per path).
struct DatasetManifest {
  Task task = Task::Synthetic4;
  std::vector<ManifestRow> rows;

  std::vector<ManifestRow> split_rows(const std::string& split) const;
  int label_index(const std::string& label) const;  // index into task_labels
  void validate() const;                            // throws DataError
};

// Writes CSV with header `path,label,split` atomically (temp file + rename).
void save_manifest(const DatasetManifest& m, const std::string& path);

DatasetManifest load_manifest(const std::string& path, Task task);

// Scans root (one sub-directory per class label), maps directory names onto
// the task's label set, and produces a seeded stratified split. split_ratio
// is the train fraction; rows come out sorted by path.
DatasetManifest ingest_directory(const std::string& root, Task task, double split_ratio,
                                 uint64_t seed);

}  // namespace audron

#endif  // AUDRON_MANIFEST_HPP
