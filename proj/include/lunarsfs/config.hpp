#pragma once

#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>

namespace lunarsfs {

/// Plain "key = value" text. '#' starts a comment; blank lines are ignored.
/// Duplicate keys and malformed lines throw std::invalid_argument.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  /// Throws std::runtime_error when the file cannot be read.
  static KeyValueConfig load(const std::filesystem::path& path);

  /// Throws std::invalid_argument naming the first key not in `known`.
  void require_known(std::initializer_list<std::string_view> known) const;

  [[nodiscard]] bool has(const std::string& key) const { return values_.contains(key); }
  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;

  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace lunarsfs
