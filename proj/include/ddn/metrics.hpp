#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddn/infer.hpp"
#include "ddn/model.hpp"
#include "ddn/synth.hpp"

namespace ddn {

double accuracy(const std::vector<int>& predicted,
                const std::vector<int>& labels);

// Mean squared distance over unordered same-class pairs of L2-normalized
// embeddings; lower is tighter. Rejects inputs without a positive pair.
double alignment(const std::vector<std::vector<double>>& embeddings,
                 const std::vector<int>& labels);

// log mean over unordered pairs of exp(-2 * squared distance) on the unit
// sphere; lower (more negative) is more uniform. Needs >= 2 embeddings.
double uniformity(const std::vector<std::vector<double>>& embeddings);

// encoder outputs for every example, dataset order
std::vector<std::vector<double>> encode_dataset(
    const DdnModel& model, const std::vector<Example>& examples);

// mean aggregation weights over n examples sampled without replacement
std::vector<double> domain_weight_profile(const DdnModel& model,
                                          const PrototypeBank& bank,
                                          const std::vector<Example>& target,
                                          int n, std::uint64_t seed,
                                          double tau_w);

// Sliced 1-Wasserstein: mean over random unit directions of the exact 1-D
// transport cost between sorted projections. Unequal sample counts are
// reconciled by subsampling the larger set (seeded).
double sliced_w1(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b, int n_projections,
                 std::uint64_t seed);

// tab-separated rows (embedding..., class, domain) behind one header line
void export_embeddings(const DdnModel& model,
                       const std::vector<Example>& examples,
                       const std::string& path);

struct EvalReport {
  std::vector<double> per_domain_accuracy;
  double mean_accuracy = 0.0;
  double alignment_value = 0.0;
  double uniformity_value = 0.0;
  std::vector<double> weight_profile;
  std::vector<std::vector<double>> discrepancy_matrix;  // S x S sliced W1
};

std::string serialize_eval_report(const EvalReport& report);
void save_eval_report(const std::string& path, const EvalReport& report);

}  // namespace ddn
