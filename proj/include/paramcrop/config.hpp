#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "paramcrop/simulator.hpp"

namespace paramcrop {

inline constexpr const char* kVersion = "0.1.0";

// Applies `key = value` overrides on top of `base`. Unknown keys and
// unparsable values throw ConfigError naming the key. The result is validated.
TrainConfig apply_config(const std::map<std::string, std::string>& entries, TrainConfig base = {});

// Reads a config file. If it has a [config] section (as manifests do), only
// that section is used; otherwise every top-level key.
TrainConfig load_config(const std::filesystem::path& path);

// Every key with its current value, one per line, round-trippable.
std::string config_to_text(const TrainConfig& config);

// Provenance record written next to every run's outputs.
struct RunManifest {
  std::string version = kVersion;
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // name -> path
  TrainConfig config;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

std::string format_shape(const Shape& shape);
Shape parse_shape(const std::string& field, const std::string& text);

}  // namespace paramcrop
