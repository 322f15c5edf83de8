#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpfgsm/attacks/fgsm.hpp"
#include "rpfgsm/eval/dataset.hpp"

namespace rpfgsm::eval {

namespace fs = std::filesystem;
using nlohmann::json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct SyntheticSpec {
  std::size_t count = 5000;
  std::size_t classes = 10;
  std::uint64_t seed = 0;
};

/// One attack of a run. Classifier handles are filled in by the harness from
/// the seen models (`models` names a subset by file stem; empty means all of
/// them, or the first one for single-classifier variants).
struct AttackEntry {
  std::string name;
  attacks::AttackConfig config;
  std::vector<std::string> models;
  bool own_seed = false;
};

struct RunConfig {
  std::string dataset;
  std::string format = "cifar10-bin";  // or "synthetic"
  SyntheticSpec synthetic;
  std::vector<std::string> seen_models;
  std::string unseen_model;
  std::vector<AttackEntry> attacks;
  std::vector<std::string> defenses = {"requantize", "median", "jpeg"};
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t max_images = 0;  // 0: the whole test split
  std::size_t workers = 1;
  double fpr = 0.05;
  bool breakdown = false;
  bool save_images = false;
  json raw = json::object();
};

inline std::string model_name(const std::string& path) { return fs::path(path).stem().string(); }

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline std::string resolve(const std::string& path, const fs::path& base) {
  if (path.empty() || fs::path(path).is_absolute() || base.empty()) return path;
  return (base / path).lexically_normal().string();
}

}  // namespace detail

inline AttackEntry parse_attack(const json& j, std::uint64_t run_seed) {
  if (!j.is_object()) throw ConfigError("each attack must be a JSON object");
  AttackEntry e;
  auto& c = e.config;
  try {
    c.variant = attacks::parse_variant(detail::get_or<std::string>(j, "variant", "rp-fgsm"));
    const auto mode = detail::get_or<std::string>(j, "mode", attacks::mode_name(attacks::default_mode(c.variant)));
    if (mode != "targeted" && mode != "untargeted") throw ConfigError("mode must be targeted or untargeted");
    c.mode = mode == "targeted" ? attacks::Mode::targeted : attacks::Mode::untargeted;
    c.epsilon = detail::get_or(j, "eps", 16.0);
    c.delta = detail::get_or(j, "delta", 1.0);
    c.gamma = detail::get_or(j, "gamma", 0.99);
    c.iterations = detail::get_or<std::size_t>(j, "iterations", 0);
    e.own_seed = j.contains("seed");
    c.seed = detail::get_or<std::uint64_t>(j, "seed", run_seed);
    if (j.contains("transforms")) {
      c.transforms = transforms::parse_set(j.at("transforms").get<std::vector<std::string>>());
    }
    if (j.contains("eot_transforms")) {
      c.eot_transforms = transforms::parse_set(j.at("eot_transforms").get<std::vector<std::string>>());
    }
    const auto sel = detail::get_or<std::string>(j, "selection", "random");
    if (sel != "random" && sel != "ensemble") throw ConfigError("selection must be random or ensemble");
    c.selection = sel == "random" ? attacks::Selection::random : attacks::Selection::ensemble;
    c.di_probability = detail::get_or(j, "di_probability", 0.5);
    c.eot_lambda = detail::get_or(j, "eot_lambda", 0.5);
    if (j.contains("target")) c.target = j.at("target").get<int>();
    e.models = detail::get_or<std::vector<std::string>>(j, "models", {});
    e.name = detail::get_or<std::string>(j, "name", attacks::variant_name(c.variant));
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("attack config: ") + ex.what());
  } catch (const transforms::TransformError& ex) {
    throw ConfigError(std::string("attack config: ") + ex.what());
  } catch (const attacks::AttackError& ex) {
    throw ConfigError(std::string("attack config: ") + ex.what());
  }
  return e;
}

/// Parses a run config; relative paths are taken relative to `base_dir`.
inline RunConfig parse_run_config(const json& j, const fs::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig r;
  r.raw = j;
  r.format = detail::get_or<std::string>(j, "format", "cifar10-bin");
  if (r.format != "cifar10-bin" && r.format != "synthetic") {
    throw ConfigError("format must be cifar10-bin or synthetic, got '" + r.format + "'");
  }
  r.dataset = detail::resolve(detail::get_or<std::string>(j, "dataset", ""), base_dir);
  if (r.format == "cifar10-bin" && r.dataset.empty()) throw ConfigError("config needs a dataset path");
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    r.synthetic.count = detail::get_or<std::size_t>(s, "count", r.synthetic.count);
    r.synthetic.classes = detail::get_or<std::size_t>(s, "classes", r.synthetic.classes);
    r.synthetic.seed = detail::get_or<std::uint64_t>(s, "seed", r.synthetic.seed);
  }
  for (const auto& m : detail::get_or<std::vector<std::string>>(j, "seen_models", {})) {
    r.seen_models.push_back(detail::resolve(m, base_dir));
  }
  r.unseen_model = detail::resolve(detail::get_or<std::string>(j, "unseen_model", ""), base_dir);
  if (r.seen_models.empty()) throw ConfigError("config needs at least one seen model");
  if (r.unseen_model.empty()) throw ConfigError("config needs an unseen model");
  for (const auto& m : r.seen_models) {
    if (fs::path(m).lexically_normal() == fs::path(r.unseen_model).lexically_normal()) {
      throw ConfigError("unseen model '" + r.unseen_model + "' is also listed as seen");
    }
  }
  r.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  r.defenses = detail::get_or(j, "defenses", r.defenses);
  for (const auto& d : r.defenses) {
    transforms::TransformKind kind;
    try {
      kind = transforms::parse_kind(d);
    } catch (const Error& e) {
      throw ConfigError(std::string("defenses: ") + e.what());
    }
    if (!transforms::is_defense(kind) || kind == transforms::TransformKind::identity) {
      throw ConfigError("'" + d + "' is not a defense");
    }
  }
  r.output_dir = detail::resolve(detail::get_or<std::string>(j, "output_dir", r.output_dir), base_dir);
  r.max_images = detail::get_or<std::size_t>(j, "max_images", 0);
  r.workers = std::max<std::size_t>(1, detail::get_or<std::size_t>(j, "workers", 1));
  r.fpr = detail::get_or(j, "fpr", 0.05);
  r.breakdown = detail::get_or(j, "breakdown", false);
  r.save_images = detail::get_or(j, "save_images", false);
  if (j.contains("attacks")) {
    if (!j.at("attacks").is_array()) throw ConfigError("attacks must be a list");
    for (const auto& a : j.at("attacks")) r.attacks.push_back(parse_attack(a, r.seed));
  }
  return r;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_json_file(path), fs::path(path).parent_path());
}

/// A CIFAR-10 binary file, or a directory whose *.bin files are read in name
/// order.
inline std::vector<DatasetRecord> load_cifar_path(const std::string& path) {
  if (!fs::is_directory(path)) return load_cifar_binary(path);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.path().extension() == ".bin") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DatasetError("no .bin files in '" + path + "'");
  std::vector<DatasetRecord> all;
  for (const auto& f : files) {
    auto part = load_cifar_binary(f);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

inline std::vector<DatasetRecord> load_dataset(const std::string& format, const std::string& path,
                                               const SyntheticSpec& synthetic) {
  if (format == "synthetic") {
    return generate_synthetic(synthetic.seed, synthetic.count, synthetic.classes);
  }
  return load_cifar_path(path);
}

/// Contiguous 60/20/20 split: train, calibrate, test.
struct Splits {
  std::span<const DatasetRecord> train, calibrate, test;
};

inline Splits split_dataset(std::span<const DatasetRecord> all) {
  const std::size_t n = all.size();
  const std::size_t a = n * 6 / 10, b = n * 8 / 10;
  return {all.subspan(0, a), all.subspan(a, b - a), all.subspan(b)};
}

}  // namespace rpfgsm::eval
