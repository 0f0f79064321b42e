#include "cdcor/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdcor/error.hpp"

namespace cdcor {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key=value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (c.entries_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    c.entries_.emplace(key, value);
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool Config::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string* Config::find(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(it->first);
  return &it->second;
}

std::string Config::get(std::string_view key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double Config::get_double(std::string_view key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || end != v->data() + v->size() || !std::isfinite(out)) {
    throw ConfigError(origin_ + ": '" + std::string(key) + "' expects a number, got '" + *v + "'");
  }
  return out;
}

std::uint64_t Config::get_uint(std::string_view key, std::uint64_t fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || end != v->data() + v->size()) {
    throw ConfigError(origin_ + ": '" + std::string(key) + "' expects a non-negative integer, got '" +
                      *v + "'");
  }
  return out;
}

bool Config::get_bool(std::string_view key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ConfigError(origin_ + ": '" + std::string(key) + "' expects true or false, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(std::string_view key,
                                          const std::vector<std::string>& fallback) const {
  const std::string* v = find(key);
  return v ? split_list(*v) : fallback;
}

void Config::reject_unused() const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown key(s): " + unknown);
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  while (true) {
    const auto at = text.find(sep);
    out.emplace_back(trim(text.substr(0, at)));
    if (at == std::string_view::npos) break;
    text = text.substr(at + 1);
  }
  return out;
}

}  // namespace cdcor
