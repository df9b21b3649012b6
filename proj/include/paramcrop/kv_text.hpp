#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace paramcrop {

// Flat `key = value` text with optional `[section]` headers and `#` comments.
// Keys before the first header belong to the unnamed section "".
struct KeyValueText {
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has_section(const std::string& name) const { return sections.count(name) != 0; }
  const std::map<std::string, std::string>& section(const std::string& name) const;
};

// Throws ConfigError naming the line on malformed input or duplicate keys.
KeyValueText parse_key_values(std::istream& in);
KeyValueText load_key_values(const std::filesystem::path& path);

}  // namespace paramcrop
