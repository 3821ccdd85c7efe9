#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace seqnet {

/// Plain-text key=value file with optional [section] headers. Keys before the
/// first header belong to the "" section. '#' starts a comment line.
///
/// Every read marks the key as consumed; `reject_unknown()` raises
/// InvalidSpec for any key that was never read, so typos never pass silently.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback);
  double get_double(const std::string& section, const std::string& key, double fallback);
  std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback);
  std::uint64_t get_uint(const std::string& section, const std::string& key,
                         std::uint64_t fallback);
  bool get_bool(const std::string& section, const std::string& key, bool fallback);
  std::vector<std::int64_t> get_int_list(const std::string& section, const std::string& key,
                                         const std::vector<std::int64_t>& fallback);

  void set(const std::string& section, const std::string& key, const std::string& value);

  void reject_unknown() const;
  /// Same, but keys in the `skip` sections are tolerated without being read.
  void reject_unknown(const std::set<std::string>& skip) const;

 private:
  const std::string* find(const std::string& section, const std::string& key);

  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::map<std::string, std::map<std::string, int>> lines_;
  std::set<std::pair<std::string, std::string>> consumed_;
};

}  // namespace seqnet
