#include "heightnet/kv_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "heightnet/error.hpp"

namespace heightnet {

std::string_view trim(std::string_view s) noexcept {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

long long parse_int(std::string_view text) {
  text = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view text) {
  text = trim(text);
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text) {
  std::string t(trim(text));
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (t == "true" || t == "on" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "off" || t == "no" || t == "0") return false;
  throw ConfigError("expected a boolean (true/false/on/off), got '" + t + "'");
}

KeyValueFile KeyValueFile::parse(std::string_view text, std::string source) {
  KeyValueFile kv;
  kv.source_ = std::move(source);
  std::string section;
  std::istringstream in{std::string(text)};
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": empty key");
    kv.entries_.push_back({section, std::move(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

bool KeyValueFile::has_section(std::string_view section) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.section == section; });
}

const KeyValueFile::Entry* KeyValueFile::find(std::string_view section, std::string_view key) const {
  const Entry* hit = nullptr;
  for (const Entry& e : entries_) {
    if (e.section == section && e.key == key) hit = &e;
  }
  return hit;
}

std::vector<const KeyValueFile::Entry*> KeyValueFile::find_all(std::string_view section, std::string_view key) const {
  std::vector<const Entry*> hits;
  for (const Entry& e : entries_) {
    if (e.section == section && e.key == key) hits.push_back(&e);
  }
  return hits;
}

void KeyValueFile::fail(const Entry& at, const std::string& message) const {
  throw ConfigError(source_ + ":" + std::to_string(at.line) + ": " + at.key + ": " + message);
}

std::string KeyValueFile::get_string(std::string_view section, std::string_view key, std::string fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : std::move(fallback);
}

long long KeyValueFile::get_int(std::string_view section, std::string_view key, long long fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  try {
    return parse_int(e->value);
  } catch (const ConfigError& err) {
    fail(*e, err.what());
  }
}

double KeyValueFile::get_double(std::string_view section, std::string_view key, double fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  try {
    return parse_double(e->value);
  } catch (const ConfigError& err) {
    fail(*e, err.what());
  }
}

bool KeyValueFile::get_bool(std::string_view section, std::string_view key, bool fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  try {
    return parse_bool(e->value);
  } catch (const ConfigError& err) {
    fail(*e, err.what());
  }
}

void KeyValueFile::require_known(std::string_view section, std::initializer_list<std::string_view> known) const {
  for (const Entry& e : entries_) {
    if (e.section != section) continue;
    if (std::find(known.begin(), known.end(), e.key) == known.end()) fail(e, "unknown key in [" + e.section + "]");
  }
}

}  // namespace heightnet
