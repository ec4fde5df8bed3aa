#pragma once

#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace heightnet {

/// Minimal INI-style reader shared by every configuration file:
///
///     # comment
///     [section]
///     key = value
///
/// Keys may repeat (e.g. one `block` line per block); scalar lookups take the
/// last occurrence. Entries before any `[section]` header belong to "".
class KeyValueFile {
 public:
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
  };

  static KeyValueFile parse(std::string_view text, std::string source = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const std::string& source() const noexcept { return source_; }

  bool has_section(std::string_view section) const;
  const Entry* find(std::string_view section, std::string_view key) const;
  std::vector<const Entry*> find_all(std::string_view section, std::string_view key) const;

  std::string get_string(std::string_view section, std::string_view key, std::string fallback) const;
  long long get_int(std::string_view section, std::string_view key, long long fallback) const;
  double get_double(std::string_view section, std::string_view key, double fallback) const;
  bool get_bool(std::string_view section, std::string_view key, bool fallback) const;

  /// Throws ConfigError for any key of `section` not listed in `known`.
  void require_known(std::string_view section, std::initializer_list<std::string_view> known) const;

  [[noreturn]] void fail(const Entry& at, const std::string& message) const;

 private:
  std::string source_;
  std::vector<Entry> entries_;
};

long long parse_int(std::string_view text);
double parse_double(std::string_view text);
bool parse_bool(std::string_view text);
std::string_view trim(std::string_view s) noexcept;
std::vector<std::string> split_whitespace(std::string_view s);

}  // namespace heightnet
