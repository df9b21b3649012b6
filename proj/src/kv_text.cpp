#include "paramcrop/kv_text.hpp"

#include <fstream>
#include <istream>

#include "paramcrop/errors.hpp"

namespace paramcrop {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::map<std::string, std::string>& KeyValueText::section(const std::string& name) const {
  static const std::map<std::string, std::string> empty;
  const auto it = sections.find(name);
  return it == sections.end() ? empty : it->second;
}

KeyValueText parse_key_values(std::istream& in) {
  KeyValueText out;
  std::string current;
  out.sections[current];
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where, "unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      out.sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where, "expected `key = value`");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where, "empty key");
    auto& sec = out.sections[current];
    if (!sec.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError(key, "duplicate key at " + where);
    }
  }
  return out;
}

KeyValueText load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_key_values(in);
}

}  // namespace paramcrop
