#include "paramcrop/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "paramcrop/errors.hpp"
#include "paramcrop/kv_text.hpp"

namespace paramcrop {

namespace {

double parse_double(const std::string& field, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a number, got '" + text + "'");
  }
}

std::uint64_t parse_u64(const std::string& field, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(field, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(field, "expected true or false, got '" + text + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    const auto size_field = [](std::size_t TrainConfig::*m) {
      return [m](TrainConfig& c, const std::string& k, const std::string& v) {
        c.*m = static_cast<std::size_t>(parse_u64(k, v));
      };
    };
    const auto double_field = [](double TrainConfig::*m) {
      return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); };
    };
    const auto bool_field = [](bool TrainConfig::*m) {
      return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); };
    };
    t["steps"] = size_field(&TrainConfig::steps);
    t["batch"] = size_field(&TrainConfig::batch);
    t["noise_dim"] = size_field(&TrainConfig::noise_dim);
    t["hidden_dim"] = size_field(&TrainConfig::hidden_dim);
    t["embed_dim"] = size_field(&TrainConfig::embed_dim);
    t["encoder_features"] = size_field(&TrainConfig::encoder_features);
    t["probe_samples"] = size_field(&TrainConfig::probe_samples);
    t["lr_encoder"] = double_field(&TrainConfig::lr_encoder);
    t["lr_cropper"] = double_field(&TrainConfig::lr_cropper);
    t["momentum"] = double_field(&TrainConfig::momentum);
    t["temperature"] = double_field(&TrainConfig::temperature);
    t["init_scale"] = double_field(&TrainConfig::init_scale);
    t["noise_amplitude"] = double_field(&TrainConfig::noise_amplitude);
    t["manual_breakpoint"] = double_field(&TrainConfig::manual_breakpoint);
    t["flip"] = bool_field(&TrainConfig::flip);
    t["random_precrop"] = bool_field(&TrainConfig::random_precrop);
    t["gradient_reversal"] = bool_field(&TrainConfig::gradient_reversal);
    t["seed"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); };
    t["strategy"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.strategy = parse_strategy(v); };
    t["input_shape"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.input_shape = parse_shape(k, v);
    };
    t["crop_shape"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.crop_shape = parse_shape(k, v);
    };
    t["scale_spatial_min"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.bounds.scale_spatial.lo = parse_double(k, v);
    };
    t["scale_spatial_max"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.bounds.scale_spatial.hi = parse_double(k, v);
    };
    t["scale_temporal_min"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.bounds.scale_temporal.lo = parse_double(k, v);
    };
    t["scale_temporal_max"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.bounds.scale_temporal.hi = parse_double(k, v);
    };
    t["theta_min"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.bounds.theta.lo = parse_double(k, v);
    };
    t["theta_max"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.bounds.theta.hi = parse_double(k, v);
    };
    t["detach_bound"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.bounds.detach_bound = parse_double(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

std::string format_shape(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape(const std::string& field, const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) shape.push_back(static_cast<std::size_t>(parse_u64(field, part)));
  if (shape.empty()) throw ConfigError(field, "empty shape");
  return shape;
}

TrainConfig apply_config(const std::map<std::string, std::string>& entries, TrainConfig base) {
  const auto& table = setters();
  for (const auto& [key, value] : entries) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown configuration key");
    it->second(base, key, value);
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  const KeyValueText kv = load_key_values(path);
  if (kv.has_section("config")) return apply_config(kv.section("config"));
  if (kv.sections.size() > 1) throw ConfigError("config", "unexpected sections in " + path.string());
  return apply_config(kv.section(""));
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "steps = " << c.steps << '\n'
     << "batch = " << c.batch << '\n'
     << "input_shape = " << format_shape(c.input_shape) << '\n'
     << "crop_shape = " << format_shape(c.crop_shape) << '\n'
     << "strategy = " << to_string(c.strategy) << '\n'
     << "seed = " << c.seed << '\n'
     << "lr_encoder = " << format_double(c.lr_encoder) << '\n'
     << "lr_cropper = " << format_double(c.lr_cropper) << '\n'
     << "momentum = " << format_double(c.momentum) << '\n'
     << "temperature = " << format_double(c.temperature) << '\n'
     << "scale_spatial_min = " << format_double(c.bounds.scale_spatial.lo) << '\n'
     << "scale_spatial_max = " << format_double(c.bounds.scale_spatial.hi) << '\n'
     << "scale_temporal_min = " << format_double(c.bounds.scale_temporal.lo) << '\n'
     << "scale_temporal_max = " << format_double(c.bounds.scale_temporal.hi) << '\n'
     << "theta_min = " << format_double(c.bounds.theta.lo) << '\n'
     << "theta_max = " << format_double(c.bounds.theta.hi) << '\n'
     << "detach_bound = " << format_double(c.bounds.detach_bound) << '\n'
     << "noise_dim = " << c.noise_dim << '\n'
     << "hidden_dim = " << c.hidden_dim << '\n'
     << "embed_dim = " << c.embed_dim << '\n'
     << "encoder_features = " << c.encoder_features << '\n'
     << "init_scale = " << format_double(c.init_scale) << '\n'
     << "noise_amplitude = " << format_double(c.noise_amplitude) << '\n'
     << "flip = " << (c.flip ? "true" : "false") << '\n'
     << "random_precrop = " << (c.random_precrop ? "true" : "false") << '\n'
     << "gradient_reversal = " << (c.gradient_reversal ? "true" : "false") << '\n'
     << "manual_breakpoint = " << format_double(c.manual_breakpoint) << '\n'
     << "probe_samples = " << c.probe_samples << '\n';
  return os.str();
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  std::string command = m.command;
  for (char& ch : command) {
    if (ch == '#' || ch == '\n' || ch == '\r') ch = ' ';
  }
  out << "# paramcrop run manifest\n"
      << "version = " << m.version << '\n'
      << "command = " << command << '\n'
      << "seed = " << m.seed << '\n';
  for (const auto& [name, p] : m.outputs) out << "output." << name << " = " << p << '\n';
  out << "\n[config]\n" << config_to_text(m.config);
  if (!out) throw IoError("manifest write failed: " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  const KeyValueText kv = load_key_values(path);
  if (!kv.has_section("config")) throw ConfigError("config", "manifest has no [config] section");
  RunManifest m;
  for (const auto& [key, value] : kv.section("")) {
    if (key == "version") {
      m.version = value;
    } else if (key == "command") {
      m.command = value;
    } else if (key == "seed") {
      m.seed = parse_u64(key, value);
    } else if (key.rfind("output.", 0) == 0) {
      m.outputs.emplace_back(key.substr(7), value);
    } else {
      throw ConfigError(key, "unknown manifest key");
    }
  }
  m.config = apply_config(kv.section("config"));
  return m;
}

}  // namespace paramcrop
