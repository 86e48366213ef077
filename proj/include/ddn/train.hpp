#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddn/model.hpp"
#include "ddn/rng.hpp"
#include "ddn/synth.hpp"

namespace ddn {

struct TrainConfig {
  double lambda = 10.0;
  double lr = 0.05;
  int iterations = 2000;
  int batch_n = 16;  // samples per domain per step
  std::uint64_t seed = 0;
  bool use_dpcl = true;
  bool shared_classifier = false;
  double tau = 0.1;
  bool paper_exact_dpcl = false;
  bool stop_grad_prototype = false;
  bool adaptive = false;  // Adam-style moments instead of plain SGD
  int emb_dim = 32;
  std::vector<int> hidden = {64, 64};
};

struct StepRecord {
  int step = 0;
  double l_y = 0.0;
  double l_p = 0.0;
  double total = 0.0;
  std::vector<double> domain_accuracy;  // batch accuracy per source domain
};

struct TrainLog {
  std::vector<StepRecord> steps;
  double wall_seconds = 0.0;  // serialized to the sidecar, not the log file
};

struct TrainResult {
  DdnModel model;
  PrototypeBank bank;
  TrainLog log;
};

// indices grouped by source domain in dataset order; target-tagged examples
// are rejected
std::vector<std::vector<std::size_t>> group_by_domain(
    const std::vector<Example>& data, int num_domains);

// One index batch per domain, batch_n each, without replacement within the
// step: a partial Fisher-Yates pass over each domain's persistent index
// array, domains in order on one stream.
std::vector<std::vector<std::size_t>> sample_step_batches(
    std::vector<std::vector<std::size_t>>& domain_indices, int batch_n,
    Rng& rng);

// Gradient descent on L_Y + lambda * L_P with per-domain batch routing.
// Deterministic: init draws from seed substream "init", batches from
// "batches". Returns the trained model, the frozen full-pass prototype
// bank and a per-step log. Throws on non-finite loss.
TrainResult train(const TrainConfig& config, const std::vector<Example>& data,
                  int num_domains);

// q_s = mean of P_s(E(x)) over every example of domain s
PrototypeBank freeze_prototype_bank(const DdnModel& model,
                                    const std::vector<Example>& data);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// val_fraction of every (domain, class) bucket, deterministic given seed
SplitIndices stratified_split(const std::vector<Example>& data,
                              int num_domains, double val_fraction,
                              std::uint64_t seed);

struct SearchSpace {
  std::vector<double> lambdas = {1, 5, 10, 20, 30};
};

struct TrialRecord {
  int index = 0;
  double lambda = 0.0;
  double val_accuracy = 0.0;
};

struct SearchResult {
  TrainConfig best;
  double best_accuracy = 0.0;
  std::vector<TrialRecord> trials;
};

// Random search over the lambda set, scored by ensemble prediction accuracy
// on a held-back stratified source validation split. Ties break to the
// lower lambda, then the earlier trial.
SearchResult random_search(const TrainConfig& base, int trials,
                           const SearchSpace& space,
                           const std::vector<Example>& data, int num_domains,
                           double tau_w);

// meta, when nonempty, is echoed as a comment line in the header
std::string serialize_train_log(const TrainLog& log, int num_domains,
                                const std::string& meta = "");
void save_train_log(const std::string& path, const TrainLog& log,
                    int num_domains, const std::string& meta = "");

}  // namespace ddn
