#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ddn {

// domain tag for held-out samples; source domains are 0..S-1
inline constexpr int kTargetDomain = -1;

// Generative ground truth: every sample is gain*C_class + shift(domain) +
// sigma*noise, so the aggregation behavior of a trained model can be checked
// against known mixtures.
struct DomainSpec {
  int num_domains = 0;
  int num_classes = 0;
  int dim = 0;
  double separation = 0.0;
  double shift_scale = 0.0;
  double noise_sigma = 0.0;
  std::vector<double> noise_sigmas;  // per-domain scale, size num_domains
  // Domain-conditioned discriminativity: domain s scales its own disjoint
  // coordinate block of the class prototypes by gains[s] in {0,1,2}, making
  // those coordinates informative in some domains only.
  bool domain_gains = false;
  std::vector<double> gains;
  std::uint64_t seed = 0;

  std::vector<std::vector<double>> class_prototypes;  // M x dim
  std::vector<std::vector<double>> domain_shifts;     // S x dim
  double min_prototype_distance = 0.0;

  // [start, end) coordinate block owned by domain s
  std::pair<int, int> gain_block(int s) const {
    const int start = static_cast<int>(static_cast<long long>(s) * dim / num_domains);
    const int end = static_cast<int>(static_cast<long long>(s + 1) * dim / num_domains);
    return {start, end};
  }
  double gain_at(int domain, int coord) const;
};

struct Example {
  std::vector<double> x;
  int label = 0;
  int domain = 0;
};

// Ground-truth decomposition weights of a target domain over the sources:
// nonnegative, L1 norm 1.
struct TargetMixture {
  std::vector<double> weights;
};

// throws std::invalid_argument when off the simplex beyond 1e-9
void validate_mixture(const TargetMixture& mixture, int num_domains);

struct SpecOptions {
  std::vector<double> noise_sigmas;  // empty -> all noise_sigma
  bool domain_gains = false;
  std::vector<double> gains;  // empty -> cycle 0,1,2 by domain index
};

// Class prototypes are rejection-sampled until pairwise distances reach
// `separation`; domain shifts are random directions of norm `shift_scale`.
// Fully determined by seed. Throws on infeasible separation.
DomainSpec make_spec(int num_domains, int num_classes, int dim,
                     double separation, double shift_scale, double noise_sigma,
                     std::uint64_t seed, const SpecOptions& options = {});

// S*M*n examples, balanced, domain-major then class then index; domain d
// draws from the substream seeded seed + d.
std::vector<Example> sample_source(const DomainSpec& spec,
                                   int n_per_class_per_domain,
                                   std::uint64_t seed);

// M*n examples tagged kTargetDomain whose generative shift (and gain, when
// enabled) is the mixture-weighted combination of the source ones.
std::vector<Example> sample_target(const DomainSpec& spec,
                                   const TargetMixture& mixture,
                                   int n_per_class, std::uint64_t seed);

std::uint64_t spec_hash(const DomainSpec& spec);
std::string serialize_spec(const DomainSpec& spec);
DomainSpec parse_spec(const std::string& text);
void save_spec(const std::string& path, const DomainSpec& spec);
DomainSpec load_spec(const std::string& path);

struct LoadedDataset {
  std::vector<Example> examples;
  std::uint64_t spec_hash = 0;
  int dim = 0;
};

void save_dataset(const std::string& path, const std::vector<Example>& examples,
                  std::uint64_t spec_hash, int dim);
LoadedDataset load_dataset(const std::string& path);

}  // namespace ddn
