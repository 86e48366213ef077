#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddn/model.hpp"
#include "ddn/synth.hpp"
#include "ddn/train.hpp"

namespace ddn {

// Nonnegative per-source-domain coefficients summing to 1: the inference-time
// decomposition of a target sample onto the source domains.
struct SimplexWeights {
  std::vector<double> w;
};

struct Prediction {
  int cls = 0;
  std::vector<double> class_probs;                 // M, convex combination
  SimplexWeights weights;                          // S
  std::vector<std::vector<double>> per_head_probs; // S x M
};

// softmax over s of cos(E(x), q_s) / tau_w
SimplexWeights aggregation_weights(const DdnModel& model,
                                   const PrototypeBank& bank,
                                   std::span<const double> x, double tau_w);

// class_probs = sum_s w_s * softmax(head_s logits); argmax ties break to the
// lower class index
Prediction predict(const DdnModel& model, const PrototypeBank& bank,
                   std::span<const double> x, double tau_w);

std::vector<Prediction> predict_batch(const DdnModel& model,
                                      const PrototypeBank& bank,
                                      const std::vector<Example>& examples,
                                      double tau_w);

struct LeaveOneOutOptions {
  TrainConfig train;
  int n_per_class_per_domain = 50;
  std::uint64_t data_seed = 1;
  double tau_w = 0.1;
};

struct LeaveOneOutFold {
  int held_out = 0;
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
  std::vector<int> true_labels;
  DdnModel model;  // trained on the other domains, reindexed
  PrototypeBank bank;
};

struct LeaveOneOutResult {
  std::vector<double> per_domain_accuracy;
  double mean_accuracy = 0.0;
  std::vector<LeaveOneOutFold> folds;
};

// For every domain k: train on the others (reindexed), freeze the bank, and
// score domain k as the unseen target. Folds fan out across threads.
LeaveOneOutResult evaluate_leave_one_out(const DomainSpec& spec,
                                         const LeaveOneOutOptions& options);

// one record per example: true class, predicted class, S weights, M probs
std::string serialize_predictions(const std::vector<Prediction>& predictions,
                                  const std::vector<int>& true_labels);

}  // namespace ddn
