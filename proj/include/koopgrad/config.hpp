// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a flat, diff-able key = value format with dotted
// hierarchy, full validation before any compute, and rejection of unknown
// keys with line-precise messages.
#pragma once

#include <koopgrad/driver.hpp>
#include <koopgrad/tangent_optim.hpp>

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopgrad {

inline constexpr const char* kCodeVersion = "koopgrad 0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cfg_detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace cfg_detail

/// Parsed key = value lines with consumption tracking. Unread keys are
/// unknown keys and fail the parse.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text) {
    ConfigMap map;
    map.raw_text_ = text;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = cfg_detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key = cfg_detail::trim(line.substr(0, eq));
      const std::string value = cfg_detail::trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      }
      if (map.entries_.count(key)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                          "'");
      }
      map.entries_[key] = Entry{value, line_no, false};
    }
    return map;
  }

  const std::string& raw_text() const { return raw_text_; }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key) {
    Entry& e = require(key);
    e.consumed = true;
    return e.value;
  }

  std::string get_string_or(const std::string& key, const std::string& fallback) {
    return has(key) ? get_string(key) : fallback;
  }

  double get_double(const std::string& key) {
    Entry& e = require(key);
    e.consumed = true;
    try {
      std::size_t used = 0;
      const double v = std::stod(e.value, &used);
      if (used != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config line " + std::to_string(e.line) + ": '" + key +
                        "' expects a number, got '" + e.value + "'");
    }
  }

  double get_double_or(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
  }

  long get_long(const std::string& key) {
    Entry& e = require(key);
    e.consumed = true;
    try {
      std::size_t used = 0;
      const long v = std::stol(e.value, &used);
      if (used != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config line " + std::to_string(e.line) + ": '" + key +
                        "' expects an integer, got '" + e.value + "'");
    }
  }

  long get_long_or(const std::string& key, long fallback) {
    return has(key) ? get_long(key) : fallback;
  }

  bool get_bool_or(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    Entry& e = require(key);
    e.consumed = true;
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw ConfigError("config line " + std::to_string(e.line) + ": '" + key +
                      "' expects true or false, got '" + e.value + "'");
  }

  std::vector<std::string> get_list(const std::string& key) {
    Entry& e = require(key);
    e.consumed = true;
    std::vector<std::string> out;
    std::istringstream in(e.value);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = cfg_detail::trim(item);
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) {
      throw ConfigError("config line " + std::to_string(e.line) + ": '" + key +
                        "' expects a non-empty list");
    }
    return out;
  }

  int line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  /// Rejects any key that was never consumed by the schema.
  void finish() const {
    for (const auto& [key, entry] : entries_) {
      if (!entry.consumed) {
        throw ConfigError("config line " + std::to_string(entry.line) + ": unknown key '" + key +
                          "'");
      }
    }
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
  };

  Entry& require(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
  std::string raw_text_;
};

/// One optimizer knob in the config: either a learnable hyperparameter (raw
/// init + transform) or a fixed constant.
struct KnobSpec {
  bool is_hyper = false;
  double value = 0.0;  // raw init when hyper, constant otherwise
  Transform transform = Transform::Identity;
};

struct RunConfig {
  std::string raw_text;

  std::string task_kind;  // quadratic | mlp-classify | reweight

  // dataset
  std::string dataset_kind;  // none | synthetic-classify | synthetic-imbalanced | idx
  long dataset_n = 0;
  long input_dim = 0;
  long classes = 0;
  double noise = 1.0;
  std::uint64_t dataset_seed = 0;
  double val_fraction = 0.1;
  double test_fraction = 0.0;
  double imbalance_factor = 1.0;
  int imbalance_denominator_offset = 0;
  std::string idx_images, idx_labels;

  // task shapes
  long quad_dim = 6;
  double quad_eig_min = 0.3, quad_eig_max = 1.5;
  double quad_target_scale = 0.5;
  std::vector<int> mlp_hidden;
  double leaky_slope = 0.01;
  long reweight_hidden = 8;
  double reweight_init_scale = 0.5;

  // inner optimizer
  std::string inner_kind;  // sgd | adam
  long batch_size = 128;
  std::map<std::string, KnobSpec> knobs;  // lr, momentum, wd | lr, beta1, beta2

  Schedule schedule;

  std::vector<std::string> strategies;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;

  std::uint64_t config_hash() const { return fnv1a(raw_text); }
};

namespace cfg_detail {

inline KnobSpec read_knob(ConfigMap& map, const std::string& name, double fallback) {
  KnobSpec spec;
  const std::string mode = map.get_string_or("inner." + name + ".mode", "fixed");
  if (mode == "hyper") {
    spec.is_hyper = true;
    spec.value = map.get_double("inner." + name + ".value");
    spec.transform = transform_from_string(map.get_string_or("inner." + name + ".transform",
                                                             "sigmoid"));
  } else if (mode == "fixed") {
    spec.is_hyper = false;
    spec.value = map.get_double_or("inner." + name + ".value", fallback);
  } else {
    throw ConfigError("config line " + std::to_string(map.line_of("inner." + name + ".mode")) +
                      ": knob mode must be hyper or fixed, got '" + mode + "'");
  }
  return spec;
}

}  // namespace cfg_detail

inline RunConfig parse_run_config(const std::string& text) {
  ConfigMap map = ConfigMap::parse(text);
  RunConfig cfg;
  cfg.raw_text = map.raw_text();

  cfg.task_kind = map.get_string("task.kind");
  if (cfg.task_kind != "quadratic" && cfg.task_kind != "mlp-classify" &&
      cfg.task_kind != "reweight") {
    throw ConfigError("config line " + std::to_string(map.line_of("task.kind")) +
                      ": task.kind must be quadratic, mlp-classify, or reweight");
  }

  cfg.dataset_kind = map.get_string_or("dataset.kind", "none");
  cfg.dataset_seed = static_cast<std::uint64_t>(map.get_long_or("dataset.seed", 0));
  if (cfg.dataset_kind == "synthetic-classify" || cfg.dataset_kind == "synthetic-imbalanced") {
    cfg.dataset_n = map.get_long("dataset.n");
    cfg.input_dim = map.get_long("dataset.input_dim");
    cfg.classes = map.get_long("dataset.classes");
    cfg.noise = map.get_double_or("dataset.noise", 1.0);
    if (cfg.dataset_kind == "synthetic-imbalanced") {
      cfg.imbalance_factor = map.get_double("dataset.imbalance_factor");
      cfg.imbalance_denominator_offset =
          static_cast<int>(map.get_long_or("dataset.imbalance_denominator_offset", 0));
    }
  } else if (cfg.dataset_kind == "idx") {
    cfg.idx_images = map.get_string("dataset.images");
    cfg.idx_labels = map.get_string("dataset.labels");
    cfg.dataset_n = map.get_long_or("dataset.n", 0);  // optional subset cap
  } else if (cfg.dataset_kind != "none") {
    throw ConfigError("config line " + std::to_string(map.line_of("dataset.kind")) +
                      ": unknown dataset.kind '" + cfg.dataset_kind + "'");
  }
  if (cfg.task_kind != "quadratic" && cfg.dataset_kind == "none") {
    throw ConfigError("config: task '" + cfg.task_kind + "' requires a dataset");
  }
  cfg.val_fraction = map.get_double_or("dataset.val_fraction", 0.1);
  cfg.test_fraction = map.get_double_or("dataset.test_fraction", 0.0);

  if (cfg.task_kind == "quadratic") {
    cfg.quad_dim = map.get_long_or("task.quadratic.dim", 6);
    cfg.quad_eig_min = map.get_double_or("task.quadratic.eig_min", 0.3);
    cfg.quad_eig_max = map.get_double_or("task.quadratic.eig_max", 1.5);
    cfg.quad_target_scale = map.get_double_or("task.quadratic.target_scale", 0.5);
  } else {
    for (const std::string& h : map.has("task.mlp.hidden")
                                    ? map.get_list("task.mlp.hidden")
                                    : std::vector<std::string>{"18"}) {
      cfg.mlp_hidden.push_back(std::stoi(h));
    }
    cfg.leaky_slope = map.get_double_or("task.mlp.leaky_slope", 0.01);
  }
  if (cfg.task_kind == "reweight") {
    cfg.reweight_hidden = map.get_long_or("task.reweight.hidden", 8);
    cfg.reweight_init_scale = map.get_double_or("task.reweight.init_scale", 0.5);
  }

  cfg.inner_kind = map.get_string("inner.kind");
  if (cfg.inner_kind != "sgd" && cfg.inner_kind != "adam") {
    throw ConfigError("config line " + std::to_string(map.line_of("inner.kind")) +
                      ": inner.kind must be sgd or adam");
  }
  cfg.batch_size = map.get_long_or("inner.batch_size", 128);
  if (cfg.inner_kind == "sgd") {
    cfg.knobs["lr"] = cfg_detail::read_knob(map, "lr", 0.01);
    cfg.knobs["momentum"] = cfg_detail::read_knob(map, "momentum", 0.0);
    cfg.knobs["wd"] = cfg_detail::read_knob(map, "wd", 0.0);
  } else {
    cfg.knobs["lr"] = cfg_detail::read_knob(map, "lr", 0.001);
    cfg.knobs["beta1"] = cfg_detail::read_knob(map, "beta1", 0.9);
    cfg.knobs["beta2"] = cfg_detail::read_knob(map, "beta2", 0.999);
  }

  cfg.schedule.total_steps = map.get_long("schedule.total_steps");
  cfg.schedule.tau = map.get_long("schedule.tau");
  cfg.schedule.sigma = map.get_long_or("schedule.sigma", 80);
  cfg.schedule.delay_m = map.get_long_or("schedule.delay", 10);
  cfg.schedule.unit_circle_tol = map.get_double_or("schedule.unit_circle_tol", 0.05);
  cfg.schedule.divergence_tol = map.get_double_or("schedule.divergence_tol", 0.05);
  cfg.schedule.rank_rtol = map.get_double_or("schedule.rank_rtol", 1e-10);
  cfg.schedule.inner_log_stride = map.get_long_or("schedule.inner_log_stride", 10);
  cfg.schedule.diagnostics_horizon =
      static_cast<int>(map.get_long_or("schedule.diagnostics_horizon", 100));
  cfg.schedule.reset_tangent_each_interval =
      map.get_bool_or("schedule.reset_tangent_each_interval", false);

  const std::string outer_kind = map.get_string_or("outer.kind", "adam");
  if (outer_kind == "gd") {
    cfg.schedule.outer.kind = OuterOptSpec::Kind::Gd;
  } else if (outer_kind == "adam") {
    cfg.schedule.outer.kind = OuterOptSpec::Kind::Adam;
  } else {
    throw ConfigError("config line " + std::to_string(map.line_of("outer.kind")) +
                      ": outer.kind must be gd or adam");
  }
  cfg.schedule.outer.lr = map.get_double_or("outer.lr", 0.1);
  cfg.schedule.outer.beta1 = map.get_double_or("outer.beta1", 0.9);
  cfg.schedule.outer.beta2 = map.get_double_or("outer.beta2", 0.999);

  for (const std::string& s : map.get_list("strategies")) {
    strategy_from_string(s);  // validates
    cfg.strategies.push_back(s);
  }
  for (const std::string& s : map.get_list("seeds")) {
    try {
      cfg.seeds.push_back(static_cast<std::uint64_t>(std::stoull(s)));
    } catch (...) {
      throw ConfigError("config line " + std::to_string(map.line_of("seeds")) +
                        ": seeds must be integers, got '" + s + "'");
    }
  }
  cfg.out_dir = map.get_string_or("out_dir", "runs/out");

  cfg.schedule.validate();
  map.finish();
  return cfg;
}

}  // namespace koopgrad
