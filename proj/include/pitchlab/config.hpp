#pragma once

#include <map>
#include <string>
#include <vector>

#include "pitchlab/common.hpp"

namespace pitchlab {

// One registered key. `paper_default` marks values sourced from the training
// hyperparameter table / measured setup; everything else is annotated
// non_paper_default = true in the effective-config dump.
struct ConfigEntry {
  std::string key;
  std::string value;  // default, as text
  bool paper_default = false;
  std::string doc;
};

// Flat dot-namespaced key/value configuration. Unknown keys are rejected on
// load. Values are stored as text and parsed by the typed getters.
class Config {
 public:
  Config();  // all defaults

  static const std::vector<ConfigEntry>& schema();

  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  // "key=value" pairs, e.g. from --set flags.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  const std::string& raw(const std::string& key) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;  // comma separated
  std::vector<int> get_ints(const std::string& key) const;

  // Sorted key = value lines; non-paper defaults annotated.
  std::string effective_dump() const;
  void write_effective(const std::string& path) const;
  uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pitchlab
