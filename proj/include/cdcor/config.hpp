#pragma once

// Flat `section.key=value` configuration text.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cdcor {

class Config {
 public:
  // Lines are `key = value`; blank lines and lines starting with '#' are
  // skipped. Duplicate keys are rejected.
  static Config parse(std::string_view text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  // Typed reads fall back to `fallback` when the key is absent and mark the
  // key as consumed.
  std::string get(std::string_view key, const std::string& fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<std::string> get_list(std::string_view key,
                                    const std::vector<std::string>& fallback) const;

  // Throws ConfigError naming every key that no typed read consumed.
  void reject_unused() const;

  // Sorted `key=value` lines.
  std::string canonical() const;

 private:
  const std::string* find(std::string_view key) const;

  std::map<std::string, std::string, std::less<>> entries_;
  std::string origin_ = "<config>";
  mutable std::set<std::string, std::less<>> used_;
};

std::uint64_t fnv1a64(std::string_view bytes);
// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace cdcor
