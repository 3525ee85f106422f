#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "psfr/errors.hpp"

namespace psfr {

using KeyValues = std::map<std::string, std::string>;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Sectioned `key = value` text. Keys outside any section are rejected.
struct IniDocument {
  std::map<std::string, KeyValues> sections;

  static IniDocument parse(const std::string& text);
  static IniDocument load(const std::filesystem::path& path);

  /// Canonical rendering: sections and keys in sorted order.
  std::string to_string() const;

  /// Section contents, or an empty map if absent.
  const KeyValues& section(const std::string& name) const;

  /// Throws ConfigError if a section outside `allowed` is present.
  void require_sections(const std::set<std::string>& allowed) const;
};

/// Pulls typed values out of one section and rejects leftovers.
class KeyReader {
 public:
  KeyReader(const KeyValues& kv, std::string section);

  void get(const std::string& key, int64_t& out);
  void get(const std::string& key, int& out);
  void get(const std::string& key, uint64_t& out);
  void get(const std::string& key, double& out);
  void get(const std::string& key, bool& out);
  void get(const std::string& key, std::string& out);
  void get(const std::string& key, std::vector<int64_t>& out);

  /// Throws ConfigError naming the first key that no get() consumed.
  void finish() const;

 private:
  const std::string* find(const std::string& key);
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

  const KeyValues& kv_;
  std::string section_;
  std::set<std::string> used_;
};

std::string join_ints(const std::vector<int64_t>& values);

}  // namespace psfr
