#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddn/rng.hpp"
#include "ddn/tensor.hpp"

namespace ddn {

struct ModelConfig {
  int input_dim = 0;
  int emb_dim = 32;
  int num_classes = 0;
  int num_domains = 0;
  std::vector<int> hidden = {64, 64};
  // ablation: all heads alias one classifier; projectors stay per-domain
  bool shared_classifier = false;
};

// y = x * W + b with W stored [in, out]
struct AffineParam {
  TensorPtr w;
  TensorPtr b;
};

// Domain expert head: one-layer classifier plus two-layer projection head.
// The projector maps emb_dim -> emb_dim so prototypes live in the encoder's
// space and cosine distances against raw embeddings are well-formed.
struct DecHead {
  AffineParam classifier;
  AffineParam proj1;
  AffineParam proj2;
};

class DdnModel {
 public:
  DdnModel() = default;

  // All-zero parameters with the right shapes and sharing.
  static DdnModel make_empty(const ModelConfig& cfg);

  // Glorot-uniform weights, a = sqrt(6/(fan_in+fan_out)), drawn in a fixed
  // order: encoder layers, then per head classifier / proj1 / proj2 (the
  // shared classifier draws exactly once). Biases are zero.
  static DdnModel init(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }

  // [B, input_dim] -> [B, emb_dim]; relu between affine layers, none after
  // the last
  TensorPtr encode(Tape& tape, const TensorPtr& x) const;
  // affine head of one domain: [B, emb_dim] -> [B, M]
  TensorPtr classify(Tape& tape, int domain, const TensorPtr& emb) const;
  // two-layer projection head of one domain: [B, emb_dim] -> [B, emb_dim]
  TensorPtr project(Tape& tape, int domain, const TensorPtr& emb) const;
  // mean of projected embeddings: the domain's dynamic prototype [emb_dim]
  TensorPtr prototype(Tape& tape, int domain, const TensorPtr& emb_batch) const;

  // unique parameter tensors in declaration order (shared ones once)
  std::vector<TensorPtr> parameters() const;
  std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
  void zero_grad() const;
  std::size_t parameter_count() const;

  std::vector<AffineParam> encoder;
  std::vector<DecHead> heads;

 private:
  ModelConfig cfg_;
};

struct PrototypeBank {
  enum class Provenance { kBatchDynamic, kFrozenFullPass };
  std::vector<std::vector<double>> q;  // S x emb_dim
  Provenance provenance = Provenance::kBatchDynamic;
};

struct DpclOptions {
  double tau = 0.1;
  // exponentiate the plain similarity sum at tau = 1 instead of the
  // batch-size-stable mean/tau exponent
  bool paper_exact = false;
  bool stop_grad_prototype = false;
};

// Prototype-contrastive loss for one anchor domain: the anchor batch's mean
// cosine similarity to its dynamic prototype against every domain's, as a
// softmax cross-entropy over domains. Embeddings are S batches [N, emb_dim]
// of encoder outputs, one per source domain, equal N.
TensorPtr dpcl_loss(Tape& tape, const DdnModel& model,
                    const std::vector<TensorPtr>& domain_embeddings,
                    int anchor_domain, const DpclOptions& options = {});

// Mean NLL of each domain's own head over its own batch, averaged over
// domains. Labels must be valid class indices; target-tagged examples are
// rejected (targets never train heads).
TensorPtr classification_loss(Tape& tape, const DdnModel& model,
                              const std::vector<TensorPtr>& domain_embeddings,
                              const std::vector<std::vector<int>>& domain_labels);
TensorPtr classification_loss_from_logits(
    Tape& tape, const std::vector<TensorPtr>& domain_logits,
    const std::vector<std::vector<int>>& domain_labels);

struct LossParts {
  TensorPtr total;
  TensorPtr classification;
  TensorPtr dpcl;  // null when DPCL disabled
};

// total = L_Y + lambda * L_P with L_P the mean of dpcl_loss over all anchor
// choices; lambda = 0 (or use_dpcl = false) recovers per-domain ERM.
LossParts total_loss(Tape& tape, const DdnModel& model,
                     const std::vector<TensorPtr>& domain_embeddings,
                     const std::vector<std::vector<int>>& domain_labels,
                     double lambda, bool use_dpcl,
                     const DpclOptions& options = {});

// Checkpoints hold the model config, spec hash, free-form meta lines and
// every parameter as hexfloats; they round-trip bit-exactly.
void save_checkpoint(const std::string& path, const DdnModel& model,
                     std::uint64_t spec_hash,
                     const std::vector<std::pair<std::string, std::string>>& meta = {});
struct LoadedCheckpoint {
  DdnModel model;
  std::uint64_t spec_hash = 0;
  std::vector<std::pair<std::string, std::string>> meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

void save_bank(const std::string& path, const PrototypeBank& bank,
               std::uint64_t spec_hash);
PrototypeBank load_bank(const std::string& path,
                        std::uint64_t* spec_hash_out = nullptr);

}  // namespace ddn
