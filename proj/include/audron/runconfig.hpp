#ifndef AUDRON_RUNCONFIG_HPP
#define AUDRON_RUNCONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

#include "audron/dataset.hpp"
#include "audron/synth.hpp"
#include "audron/train.hpp"

namespace audron {

// key=value run configuration. Every key has a default and the fully
// defaulted config reproduces the acceptance-run settings; unknown keys in a
// config file are rejected.
class RunConfig {
 public:
  RunConfig();  // defaults only

  void load_file(const std::string& path);        // overrides defaults
  void set(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  double real(const std::string& key) const;

  SynthParams synth_params() const;
  FeatureConfig feature_config() const;
  ModelConfig model_config(int n_classes) const;
  TrainConfig train_config() const;

  // Sorted key=value text of the effective (merged) configuration.
  std::string effective_text() const;
  void write_effective(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace audron

#endif  // AUDRON_RUNCONFIG_HPP
