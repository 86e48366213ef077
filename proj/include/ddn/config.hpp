#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ddn/synth.hpp"
#include "ddn/train.hpp"

namespace ddn {

// Flat "key = value" document with [section] headers; keys are stored as
// section.key. Typed getters mark keys consumed so a command can reject
// anything it does not understand.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text);
  static ConfigMap load(const std::string& path);

  // "section.key=value"
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback);
  long get_int(const std::string& key, long fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback);
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback);

  // throws listing every key never consumed by a typed getter
  void reject_unknown() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

struct DataConfig {
  int s = 3;
  int m = 5;
  int dim = 32;
  double separation = 4.0;
  double shift_scale = 2.0;
  double noise_sigma = 0.0;
  std::vector<double> noise_sigmas;  // optional per-domain override
  bool domain_gains = false;
  std::vector<double> gains;  // optional, defaults cycle 0,1,2
  int n_per_class_per_domain = 50;
  int n_target_per_class = 50;
  std::vector<double> mixture;  // optional, defaults uniform
  std::string dir;              // load datasets from here instead of sampling
};

struct EvalConfig {
  double tau_w = 0.1;
  int profile_n = 128;
  int held_out = -1;  // reference fold for the representation metrics; -1 = last
  int w1_projections = 128;
};

struct SearchConfig {
  int trials = 20;
  std::vector<double> lambdas = {1, 5, 10, 20, 30};
};

struct AblateConfig {
  int seeds = 5;
  std::vector<int> batch_sweep = {8, 16, 32, 64};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
  SearchConfig search;
  AblateConfig ablate;

  static ExperimentConfig from_map(ConfigMap& map);
  // resolved echo, stable order, reparseable
  std::string serialize() const;

  SpecOptions spec_options() const;
  TargetMixture mixture_or_uniform() const;
};

}  // namespace ddn
