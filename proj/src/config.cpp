#include "seqnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "seqnet/error.hpp"

namespace seqnet {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string qualified(const std::string& section, const std::string& key) {
  return section.empty() ? key : "[" + section + "] " + key;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty key");
    }
    if (cfg.sections_[section].count(key)) {
      throw Error(ErrorCode::InvalidSpec,
                  "line " + std::to_string(line_no) + ": duplicate key " + qualified(section, key));
    }
    cfg.sections_[section][key] = trim(line.substr(eq + 1));
    cfg.lines_[section][key] = line_no;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool KeyValueConfig::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

bool KeyValueConfig::has_section(const std::string& section) const {
  return sections_.count(section) > 0;
}

const std::string* KeyValueConfig::find(const std::string& section, const std::string& key) {
  auto it = sections_.find(section);
  if (it == sections_.end()) return nullptr;
  auto kv = it->second.find(key);
  if (kv == it->second.end()) return nullptr;
  consumed_.emplace(section, key);
  return &kv->second;
}

std::string KeyValueConfig::get_string(const std::string& section, const std::string& key,
                                       const std::string& fallback) {
  const auto* v = find(section, key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& section, const std::string& key,
                                  double fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidSpec, qualified(section, key) + " is not a number: '" + *v + "'");
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& section, const std::string& key,
                                     std::int64_t fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::InvalidSpec, qualified(section, key) + " is not an integer: '" + *v + "'");
  }
  return out;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& section, const std::string& key,
                                       std::uint64_t fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::InvalidSpec,
                qualified(section, key) + " is not a non-negative integer: '" + *v + "'");
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& section, const std::string& key, bool fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "no") return false;
  throw Error(ErrorCode::InvalidSpec, qualified(section, key) + " is not a boolean: '" + *v + "'");
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& section,
                                                       const std::string& key,
                                                       const std::vector<std::int64_t>& fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  std::vector<std::int64_t> out;
  std::istringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    std::int64_t x = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw Error(ErrorCode::InvalidSpec, qualified(section, key) + " has a bad list entry '" + item + "'");
    }
    out.push_back(x);
  }
  return out;
}

void KeyValueConfig::set(const std::string& section, const std::string& key,
                         const std::string& value) {
  sections_[section][key] = value;
}

void KeyValueConfig::reject_unknown() const { reject_unknown({}); }

void KeyValueConfig::reject_unknown(const std::set<std::string>& skip) const {
  for (const auto& [section, kvs] : sections_) {
    if (skip.count(section)) continue;
    for (const auto& [key, value] : kvs) {
      if (!consumed_.count({section, key})) {
        std::string where;
        auto sec = lines_.find(section);
        if (sec != lines_.end()) {
          auto ln = sec->second.find(key);
          if (ln != sec->second.end()) where = " (line " + std::to_string(ln->second) + ")";
        }
        throw Error(ErrorCode::InvalidSpec, "unknown key " + qualified(section, key) + where);
      }
    }
  }
}

}  // namespace seqnet
