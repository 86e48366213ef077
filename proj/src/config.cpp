#include "ddn/config.hpp"

#include <stdexcept>

#include "ddn/textio.hpp"

namespace ddn {

namespace tio = textio;

ConfigMap ConfigMap::parse(const std::string& text) {
  ConfigMap map;
  std::string section;
  for (const auto& raw : tio::split(text, '\n')) {
    const auto line = tio::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config: malformed section header: " +
                                 std::string(line));
      section = std::string(tio::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error("config: expected key = value: " +
                               std::string(line));
    std::string key(tio::trim(line.substr(0, eq)));
    if (!section.empty() && key.find('.') == std::string::npos)
      key = section + "." + key;
    map.values_[key] = std::string(tio::trim(line.substr(eq + 1)));
  }
  return map;
}

ConfigMap ConfigMap::load(const std::string& path) {
  return parse(tio::read_file(path));
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error("override must look like section.key=value: " +
                             assignment);
  set(std::string(tio::trim(std::string_view(assignment).substr(0, eq))),
      std::string(tio::trim(std::string_view(assignment).substr(eq + 1))));
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long ConfigMap::get_int(const std::string& key, long fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return static_cast<long>(tio::parse_double(it->second));
}

double ConfigMap::get_double(const std::string& key, double fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : tio::parse_double(it->second);
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::runtime_error("config: boolean expected for " + key);
}

std::vector<double> ConfigMap::get_double_list(
    const std::string& key, const std::vector<double>& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end() || tio::trim(it->second).empty()) return fallback;
  return tio::parse_csv(it->second);
}

std::vector<int> ConfigMap::get_int_list(const std::string& key,
                                         const std::vector<int>& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end() || tio::trim(it->second).empty()) return fallback;
  std::vector<int> out;
  for (double v : tio::parse_csv(it->second)) out.push_back(static_cast<int>(v));
  return out;
}

void ConfigMap::reject_unknown() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty())
    throw std::runtime_error("config: unknown keys: " + unknown);
}

ExperimentConfig ExperimentConfig::from_map(ConfigMap& map) {
  ExperimentConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(map.get_int("seed", 0));

  auto& d = cfg.data;
  d.s = static_cast<int>(map.get_int("data.s", d.s));
  d.m = static_cast<int>(map.get_int("data.m", d.m));
  d.dim = static_cast<int>(map.get_int("data.dim", d.dim));
  d.separation = map.get_double("data.separation", d.separation);
  d.shift_scale = map.get_double("data.shift_scale", d.shift_scale);
  d.noise_sigma = map.get_double("data.noise_sigma", d.noise_sigma);
  d.noise_sigmas = map.get_double_list("data.noise_sigmas", {});
  d.domain_gains = map.get_bool("data.domain_gains", d.domain_gains);
  d.gains = map.get_double_list("data.gains", {});
  d.n_per_class_per_domain = static_cast<int>(
      map.get_int("data.n_per_class_per_domain", d.n_per_class_per_domain));
  d.n_target_per_class = static_cast<int>(
      map.get_int("data.n_target_per_class", d.n_target_per_class));
  d.mixture = map.get_double_list("data.mixture", {});
  d.dir = map.get_string("data.dir", "");

  auto& t = cfg.train;
  t.lambda = map.get_double("train.lambda", t.lambda);
  t.lr = map.get_double("train.lr", t.lr);
  t.iterations = static_cast<int>(map.get_int("train.iterations", t.iterations));
  t.batch_n = static_cast<int>(map.get_int("train.batch_n", t.batch_n));
  t.use_dpcl = map.get_bool("train.use_dpcl", t.use_dpcl);
  t.shared_classifier =
      map.get_bool("train.shared_classifier", t.shared_classifier);
  t.tau = map.get_double("train.tau", t.tau);
  t.paper_exact_dpcl = map.get_bool("train.paper_exact_dpcl", t.paper_exact_dpcl);
  t.stop_grad_prototype =
      map.get_bool("train.stop_grad_prototype", t.stop_grad_prototype);
  t.adaptive = map.get_bool("train.adaptive", t.adaptive);
  t.emb_dim = static_cast<int>(map.get_int("train.emb_dim", t.emb_dim));
  t.hidden = map.get_int_list("train.hidden", t.hidden);
  t.seed = cfg.seed;

  auto& e = cfg.eval;
  e.tau_w = map.get_double("eval.tau_w", e.tau_w);
  e.profile_n = static_cast<int>(map.get_int("eval.profile_n", e.profile_n));
  e.held_out = static_cast<int>(map.get_int("eval.held_out", e.held_out));
  e.w1_projections =
      static_cast<int>(map.get_int("eval.w1_projections", e.w1_projections));

  auto& s = cfg.search;
  s.trials = static_cast<int>(map.get_int("search.trials", s.trials));
  s.lambdas = map.get_double_list("search.lambdas", s.lambdas);

  auto& a = cfg.ablate;
  a.seeds = static_cast<int>(map.get_int("ablate.seeds", a.seeds));
  a.batch_sweep = map.get_int_list("ablate.batch_sweep", a.batch_sweep);

  map.reject_unknown();
  return cfg;
}

SpecOptions ExperimentConfig::spec_options() const {
  SpecOptions opt;
  opt.noise_sigmas = data.noise_sigmas;
  opt.domain_gains = data.domain_gains;
  opt.gains = data.gains;
  return opt;
}

TargetMixture ExperimentConfig::mixture_or_uniform() const {
  if (!data.mixture.empty()) return TargetMixture{data.mixture};
  return TargetMixture{std::vector<double>(
      data.s, 1.0 / static_cast<double>(data.s))};
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  out += "seed = " + std::to_string(seed) + "\n\n";
  out += "[data]\n";
  out += "s = " + std::to_string(data.s) + "\n";
  out += "m = " + std::to_string(data.m) + "\n";
  out += "dim = " + std::to_string(data.dim) + "\n";
  out += "separation = " + tio::fmt_g17(data.separation) + "\n";
  out += "shift_scale = " + tio::fmt_g17(data.shift_scale) + "\n";
  out += "noise_sigma = " + tio::fmt_g17(data.noise_sigma) + "\n";
  if (!data.noise_sigmas.empty())
    out += "noise_sigmas = " + tio::join_csv(data.noise_sigmas) + "\n";
  out += std::string("domain_gains = ") + (data.domain_gains ? "true" : "false") + "\n";
  if (!data.gains.empty()) out += "gains = " + tio::join_csv(data.gains) + "\n";
  out += "n_per_class_per_domain = " + std::to_string(data.n_per_class_per_domain) + "\n";
  out += "n_target_per_class = " + std::to_string(data.n_target_per_class) + "\n";
  if (!data.mixture.empty())
    out += "mixture = " + tio::join_csv(data.mixture) + "\n";
  if (!data.dir.empty()) out += "dir = " + data.dir + "\n";
  out += "\n[train]\n";
  out += "lambda = " + tio::fmt_g17(train.lambda) + "\n";
  out += "lr = " + tio::fmt_g17(train.lr) + "\n";
  out += "iterations = " + std::to_string(train.iterations) + "\n";
  out += "batch_n = " + std::to_string(train.batch_n) + "\n";
  out += std::string("use_dpcl = ") + (train.use_dpcl ? "true" : "false") + "\n";
  out += std::string("shared_classifier = ") +
         (train.shared_classifier ? "true" : "false") + "\n";
  out += "tau = " + tio::fmt_g17(train.tau) + "\n";
  out += std::string("paper_exact_dpcl = ") +
         (train.paper_exact_dpcl ? "true" : "false") + "\n";
  out += std::string("stop_grad_prototype = ") +
         (train.stop_grad_prototype ? "true" : "false") + "\n";
  out += std::string("adaptive = ") + (train.adaptive ? "true" : "false") + "\n";
  out += "emb_dim = " + std::to_string(train.emb_dim) + "\n";
  out += "hidden =";
  for (std::size_t i = 0; i < train.hidden.size(); ++i)
    out += (i ? "," : " ") + std::to_string(train.hidden[i]);
  out += "\n";
  out += "\n[eval]\n";
  out += "tau_w = " + tio::fmt_g17(eval.tau_w) + "\n";
  out += "profile_n = " + std::to_string(eval.profile_n) + "\n";
  out += "held_out = " + std::to_string(eval.held_out) + "\n";
  out += "w1_projections = " + std::to_string(eval.w1_projections) + "\n";
  out += "\n[search]\n";
  out += "trials = " + std::to_string(search.trials) + "\n";
  out += "lambdas = " + tio::join_csv(search.lambdas) + "\n";
  out += "\n[ablate]\n";
  out += "seeds = " + std::to_string(ablate.seeds) + "\n";
  out += "batch_sweep =";
  for (std::size_t i = 0; i < ablate.batch_sweep.size(); ++i)
    out += (i ? "," : " ") + std::to_string(ablate.batch_sweep[i]);
  out += "\n";
  return out;
}

}  // namespace ddn
