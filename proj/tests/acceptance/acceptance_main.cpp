// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Every tolerance is pinned here, in code.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ddn/config.hpp"
#include "ddn/gradcheck.hpp"
#include "ddn/infer.hpp"
#include "ddn/metrics.hpp"
#include "ddn/rng.hpp"
#include "ddn/synth.hpp"
#include "ddn/textio.hpp"
#include "ddn/train.hpp"
#include "support/fd_check.hpp"

namespace fs = std::filesystem;
using namespace ddn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v) { return textio::fmt_g17(v); }

// ---------------------------------------------------------------------------
// 1. gradient suite: every op kind and both losses vs central differences
// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const OpKind kinds[] = {
      OpKind::kMatMul,      OpKind::kAdd,
      OpKind::kScalarMul,   OpKind::kRelu,
      OpKind::kMeanAxis,    OpKind::kL2Normalize,
      OpKind::kCosineSimilarity, OpKind::kExp,
      OpKind::kLog,         OpKind::kLogSumExp,
      OpKind::kConcat,      OpKind::kSoftmax,
      OpKind::kNllSoftmax,  OpKind::kWeightedSum,
  };
  double worst_op = 0.0;
  for (OpKind kind : kinds)
    worst_op = std::max(worst_op, check_gradients(kind, 100, 1e-5));

  // both losses, end to end through the encoder, on 100 random tiny models;
  // draws whose embeddings degenerate to zero norm are rejected by contract
  // and simply redrawn
  Rng rng(314159);
  double worst_dpcl = 0.0, worst_cls = 0.0;
  int checked = 0, attempt = 0;
  while (checked < 100) {
    ++attempt;
    ModelConfig mc;
    mc.input_dim = 3 + static_cast<int>(rng.below(3));
    mc.emb_dim = 4 + static_cast<int>(rng.below(3));
    mc.num_classes = 2 + static_cast<int>(rng.below(3));
    mc.num_domains = 2 + static_cast<int>(rng.below(2));
    mc.hidden = {5};
    Rng init = rng.substream(attempt);
    auto model = DdnModel::init(mc, init);
    const int n = 2 + static_cast<int>(rng.below(3));
    std::vector<std::vector<double>> xs(mc.num_domains);
    std::vector<std::vector<int>> labels(mc.num_domains);
    for (int s = 0; s < mc.num_domains; ++s) {
      xs[s].resize(n * mc.input_dim);
      rng.fill_uniform(xs[s], -1.0, 1.0);
      for (int i = 0; i < n; ++i)
        labels[s].push_back(static_cast<int>(rng.below(mc.num_classes)));
    }
    const int anchor = static_cast<int>(rng.below(mc.num_domains));
    auto embed_all = [&](Tape& tape) {
      std::vector<TensorPtr> embs;
      for (int s = 0; s < mc.num_domains; ++s)
        embs.push_back(
            model.encode(tape, make_tensor({n, mc.input_dim}, xs[s])));
      return embs;
    };
    try {
      const double d = testsupport::fd_check_params(
          model.parameters(), [&](Tape& tape) {
            return dpcl_loss(tape, model, embed_all(tape), anchor);
          });
      const double c = testsupport::fd_check_params(
          model.parameters(), [&](Tape& tape) {
            return classification_loss(tape, model, embed_all(tape), labels);
          });
      worst_dpcl = std::max(worst_dpcl, d);
      worst_cls = std::max(worst_cls, c);
      ++checked;
    } catch (const std::invalid_argument&) {
      // degenerate draw; next attempt
    }
  }
  const double secs = elapsed_s(t0);
  Outcome out;
  out.pass = worst_op < 1e-4 && worst_dpcl < 1e-4 && worst_cls < 1e-4 &&
             secs < 30.0;
  out.detail = "max rel err: ops " + fmt(worst_op) + ", dpcl " +
               fmt(worst_dpcl) + ", classification " + fmt(worst_cls) +
               "; runtime " + fmt(secs) + " s (< 30 s)";
  return out;
}

// ---------------------------------------------------------------------------
// 2. closed-form loss cases
// ---------------------------------------------------------------------------

Outcome criterion2() {
  Rng rng(271828);
  bool ok = true;
  std::string why;

  for (int t = 0; t < 20 && ok; ++t) {
    ModelConfig mc;
    mc.input_dim = 4;
    mc.emb_dim = 5;
    mc.num_classes = 3;
    mc.num_domains = 1;
    mc.hidden = {6};
    Rng init = rng.substream(t);
    auto model = DdnModel::init(mc, init);
    std::vector<double> x(3 * 4);
    rng.fill_uniform(x, -1.0, 1.0);
    Tape tape;
    auto emb = model.encode(tape, make_tensor({3, 4}, x));
    if (dpcl_loss(tape, model, {emb}, 0)->value() != 0.0) {
      ok = false;
      why = "dpcl(S=1) != 0";
    }
  }

  for (int S : {2, 3, 5}) {
    ModelConfig mc;
    mc.input_dim = 4;
    mc.emb_dim = 5;
    mc.num_classes = 3;
    mc.num_domains = S;
    mc.hidden = {6};
    Rng init = rng.substream(100 + S);
    auto model = DdnModel::init(mc, init);
    std::vector<double> x(4 * 4);
    rng.fill_uniform(x, -1.0, 1.0);
    Tape tape;
    auto emb = model.encode(tape, make_tensor({4, 4}, x));
    const std::vector<TensorPtr> same(S, emb);
    const double loss = dpcl_loss(tape, model, same, S / 2)->value();
    if (std::abs(loss - std::log(static_cast<double>(S))) > 1e-9) {
      ok = false;
      why = "dpcl(equal similarities) != ln S";
    }
  }

  {
    // zero heads: uniform logits, loss must equal ln M to 1e-12
    ModelConfig mc;
    mc.input_dim = 4;
    mc.emb_dim = 5;
    mc.num_classes = 7;
    mc.num_domains = 2;
    mc.hidden = {6};
    auto model = DdnModel::make_empty(mc);
    Tape tape;
    auto e0 = make_tensor({3, 5}), e1 = make_tensor({3, 5});
    const double loss =
        classification_loss(tape, model, {e0, e1}, {{0, 3, 6}, {1, 2, 4}})
            ->value();
    if (std::abs(loss - std::log(7.0)) > 1e-12) {
      ok = false;
      why = "classification(uniform) != ln M";
    }
    auto logits =
        make_tensor({2, 3}, {1000.0, 0.0, 0.0, 0.0, 1000.0, 0.0});
    if (classification_loss_from_logits(tape, {logits}, {{0, 1}})->value() !=
        0.0) {
      ok = false;
      why = "classification(perfect) != 0";
    }
  }

  Outcome out;
  out.pass = ok;
  out.detail = ok ? "dpcl S=1 exact 0; ln S within 1e-9; ln M within 1e-12; "
                    "perfect prediction exact 0"
                  : why;
  return out;
}

// ---------------------------------------------------------------------------
// 3. simplex invariants over 10^4 random (model, input) draws
// ---------------------------------------------------------------------------

Outcome criterion3() {
  Rng rng(161803);
  int produced = 0, violations = 0, rejected = 0;
  while (produced < 10000) {
    ModelConfig mc;
    mc.input_dim = 3 + static_cast<int>(rng.below(6));
    mc.emb_dim = 3 + static_cast<int>(rng.below(8));
    mc.num_classes = 2 + static_cast<int>(rng.below(4));
    mc.num_domains = 1 + static_cast<int>(rng.below(5));
    mc.hidden = {4 + static_cast<int>(rng.below(8))};
    Rng init = rng.substream(produced * 131 + rejected);
    auto model = DdnModel::init(mc, init);
    PrototypeBank bank;
    bank.q.resize(mc.num_domains);
    for (auto& q : bank.q) {
      q.resize(mc.emb_dim);
      init.fill_uniform(q, -1.0, 1.0);
    }
    std::vector<double> x(mc.input_dim);
    rng.fill_uniform(x, -2.0, 2.0);
    const double tau_w = rng.uniform(0.01, 2.0);
    try {
      auto w = aggregation_weights(model, bank, x, tau_w);
      double sum = 0.0;
      for (double v : w.w) {
        if (v < 0.0) ++violations;
        sum += v;
      }
      if (std::abs(sum - 1.0) >= 1e-9) ++violations;
      ++produced;
    } catch (const std::invalid_argument&) {
      ++rejected;  // degenerate zero-norm embedding; contract rejects it
    }
  }
  Outcome out;
  out.pass = violations == 0;
  out.detail = std::to_string(produced) + " outputs, " +
               std::to_string(violations) + " violations (" +
               std::to_string(rejected) + " degenerate draws rejected)";
  return out;
}

// ---------------------------------------------------------------------------
// 4. aggregation-oracle recovery on the noiseless spec
// ---------------------------------------------------------------------------

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = make_spec(3, 5, 32, 4.0, 2.0, 0.0, 41);
  TrainConfig cfg;  // defaults: 2000 iterations, batch 16, lr 0.05, lambda 10

  bool acc_ok = true;
  int profile_ok_seeds = 0;
  std::string accs;
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t root = derive_seed(9000, "c4") + i;
    const auto data = sample_source(spec, 20, derive_seed(root, "data"));
    cfg.seed = root;
    const auto result = train(cfg, data, 3);
    bool seed_profiles_ok = true;
    for (int s = 0; s < 3; ++s) {
      std::vector<double> onehot(3, 0.0);
      onehot[s] = 1.0;
      const auto target = sample_target(spec, TargetMixture{onehot}, 30,
                                        derive_seed(root, "target") + s);
      if (i == 0) {
        const auto preds = predict_batch(result.model, result.bank, target, 0.1);
        int correct = 0;
        for (std::size_t j = 0; j < preds.size(); ++j)
          if (preds[j].cls == target[j].label) ++correct;
        const double acc = static_cast<double>(correct) / preds.size();
        accs += (s ? "," : "") + fmt(acc);
        if (acc < 0.99) acc_ok = false;
      }
      const auto profile = domain_weight_profile(
          result.model, result.bank, target, 128, derive_seed(root, "profile"),
          0.1);
      const int argmax = static_cast<int>(
          std::max_element(profile.begin(), profile.end()) - profile.begin());
      if (argmax != s) seed_profiles_ok = false;
    }
    if (seed_profiles_ok) ++profile_ok_seeds;
  }
  const double secs = elapsed_s(t0);
  Outcome out;
  out.pass = acc_ok && profile_ok_seeds >= 4 && secs < 180.0;
  out.detail = "one-hot target accuracies (" + accs +
               ") all >= 0.99: " + (acc_ok ? "yes" : "NO") +
               "; profile argmax correct in " + std::to_string(profile_ok_seeds) +
               "/5 seeds (need >= 4); runtime " + fmt(secs) + " s (< 180 s)";
  return out;
}

// ---------------------------------------------------------------------------
// 5. ablation ordering on the noisy domain-conditioned benchmark
// ---------------------------------------------------------------------------

double loo_mean(const DomainSpec& spec, TrainConfig cfg, int n_per_class,
                std::uint64_t root) {
  LeaveOneOutOptions loo;
  cfg.seed = root;
  loo.train = cfg;
  loo.n_per_class_per_domain = n_per_class;
  loo.data_seed = derive_seed(root, "data");
  loo.tau_w = 0.1;
  return evaluate_leave_one_out(spec, loo).mean_accuracy;
}

struct MeanStd {
  double mean = 0.0, stdev = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd s;
  for (double x : v) s.mean += x;
  s.mean /= v.size();
  double acc = 0.0;
  for (double x : v) acc += (x - s.mean) * (x - s.mean);
  if (v.size() > 1) s.stdev = std::sqrt(acc / (v.size() - 1));
  return s;
}

Outcome criterion5() {
  // sigma = 0.3 and gains are pinned by the criterion; the geometry makes the
  // domains shift-dominated so per-domain experts genuinely matter
  SpecOptions gains;
  gains.domain_gains = true;
  const std::uint64_t spec_seed =
      derive_seed(derive_seed(1, "data"), "spec");
  const auto spec = make_spec(3, 5, 16, 1.5, 10.0, 0.3, spec_seed, gains);

  TrainConfig base;
  base.iterations = 800;
  base.lambda = 5.0;
  base.tau = 0.5;
  base.batch_n = 16;

  TrainConfig no_dpcl = base;
  no_dpcl.use_dpcl = false;
  TrainConfig shared = base;
  shared.shared_classifier = true;

  std::vector<double> full_accs, shared_accs, nodpcl_accs;
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t root = derive_seed(1, "ablate") + i;
    full_accs.push_back(loo_mean(spec, base, 30, root));
    shared_accs.push_back(loo_mean(spec, shared, 30, root));
    nodpcl_accs.push_back(loo_mean(spec, no_dpcl, 30, root));
  }
  const MeanStd full = mean_std(full_accs);
  const MeanStd sh = mean_std(shared_accs);
  const MeanStd nd = mean_std(nodpcl_accs);
  const double margin = full.mean - sh.mean;

  Outcome out;
  out.pass = margin > 0.0;
  out.detail = "full " + fmt(full.mean) + " +- " + fmt(full.stdev) +
               " vs shared-classifier " + fmt(sh.mean) + " +- " +
               fmt(sh.stdev) + ", margin " + fmt(margin) +
               " (> 0 required); reported, not gated: no-DPCL " +
               fmt(nd.mean) + " +- " + fmt(nd.stdev) + " (full - noDPCL = " +
               fmt(full.mean - nd.mean) + ")";
  return out;
}

// ---------------------------------------------------------------------------
// 6. uniformity direction on the noisy benchmark
// ---------------------------------------------------------------------------

Outcome criterion6() {
  int ok_seeds = 0;
  std::string pairs;
  for (int seed = 1; seed <= 5; ++seed) {
    const std::uint64_t data_seed = derive_seed(seed, "data");
    const auto spec =
        make_spec(3, 5, 32, 4.0, 2.0, 0.3, derive_seed(data_seed, "spec"));
    const auto data = sample_source(spec, 30, derive_seed(data_seed, "source"));
    // reference fold: train on domains 0 and 1
    std::vector<Example> train_set;
    for (const auto& ex : data)
      if (ex.domain != 2) train_set.push_back(ex);

    TrainConfig cfg;
    cfg.iterations = 800;
    cfg.seed = seed;
    auto with = train(cfg, train_set, 2);
    TrainConfig erm = cfg;
    erm.use_dpcl = false;
    auto without = train(erm, train_set, 2);

    const double u1 = uniformity(encode_dataset(with.model, train_set));
    const double u0 = uniformity(encode_dataset(without.model, train_set));
    if (u1 <= u0) ++ok_seeds;
    pairs += (seed > 1 ? " " : "") + fmt(u1) + "<=" + fmt(u0);
  }
  Outcome out;
  out.pass = ok_seeds >= 4;
  out.detail = std::to_string(ok_seeds) +
               "/5 seeds with uniformity(DPCL) <= uniformity(no DPCL): " + pairs;
  return out;
}

// ---------------------------------------------------------------------------
// 7. metric oracles
// ---------------------------------------------------------------------------

Outcome criterion7() {
  Rng rng(602214);
  double worst_align = 0.0, worst_unif = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = 4 + static_cast<int>(rng.below(12));
    const int d = 2 + static_cast<int>(rng.below(8));
    std::vector<std::vector<double>> e(n, std::vector<double>(d));
    for (auto& row : e) {
      double nrm = 0.0;
      do {
        rng.fill_uniform(row, -1.0, 1.0);
        nrm = 0.0;
        for (double v : row) nrm += v * v;
      } while (std::sqrt(nrm) < 0.3);
    }
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(2));
    labels[0] = labels[1];  // guarantee a positive pair

    auto z = e;
    for (auto& row : z) {
      double nrm = 0.0;
      for (double v : row) nrm += v * v;
      nrm = std::sqrt(nrm);
      for (auto& v : row) v /= nrm;
    }
    double asum = 0.0, usum = 0.0;
    int apairs = 0, upairs = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < d; ++k) {
          const double diff = z[i][k] - z[j][k];
          d2 += diff * diff;
        }
        usum += std::exp(-2.0 * d2);
        ++upairs;
        if (labels[i] == labels[j]) {
          asum += d2;
          ++apairs;
        }
      }
    }
    worst_align = std::max(worst_align,
                           std::abs(alignment(e, labels) - asum / apairs));
    worst_unif =
        std::max(worst_unif, std::abs(uniformity(e) - std::log(usum / upairs)));
  }

  std::vector<std::vector<double>> a;
  for (int i = 0; i < 30; ++i) a.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2)});
  const double ident = sliced_w1(a, a, 64, 5);
  std::vector<std::vector<double>> u1d, v1d;
  for (int i = 0; i < 40; ++i) {
    const double x = rng.uniform(-5.0, 5.0);
    u1d.push_back({x});
    v1d.push_back({x - 2.25});
  }
  const double trans = sliced_w1(u1d, v1d, 32, 7);

  Outcome out;
  out.pass = worst_align < 1e-12 && worst_unif < 1e-12 && ident < 1e-6 &&
             std::abs(trans - 2.25) < 1e-6;
  out.detail = "alignment/uniformity vs brute force: " + fmt(worst_align) +
               "/" + fmt(worst_unif) + " (< 1e-12); sliced_w1 identity " +
               fmt(ident) + ", 1-D translation error " +
               fmt(std::abs(trans - 2.25)) + " (< 1e-6)";
  return out;
}

// ---------------------------------------------------------------------------
// 8. ERM-equivalence oracle, bit for bit
// ---------------------------------------------------------------------------

// Independent pooled cross-entropy trainer: plain loops re-implementing the
// documented numeric conventions (4-lane blocked dot, contraction in index
// order, NLL row sums in order divided by B, backward scale upstream/B,
// gradient accumulation in reverse build order). It consumes the same init
// values and batch index stream, which the criterion grants.
namespace oracle {

double dot4(const double* x, const double* y, std::size_t n) {
  double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    a0 += x[i] * y[i];
    a1 += x[i + 1] * y[i + 1];
    a2 += x[i + 2] * y[i + 2];
    a3 += x[i + 3] * y[i + 3];
  }
  double acc = (a0 + a2) + (a1 + a3);
  for (std::size_t i = n4; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

struct Affine {
  int in = 0, out = 0;
  std::vector<double> w, b, gw, gb;
};

struct DomainCache {
  std::vector<std::vector<double>> z;  // post-bias, per layer
  std::vector<std::vector<double>> a;  // post-relu (a[0] is the input)
  std::vector<double> logits, probs, dlogits, de;
};

std::vector<double> run(const std::vector<Example>& data, int S, int M,
                        const TrainConfig& cfg) {
  const int dim = static_cast<int>(data.front().x.size());

  // identical init: copy the initialized model's parameter values
  ModelConfig mc;
  mc.input_dim = dim;
  mc.emb_dim = cfg.emb_dim;
  mc.num_classes = M;
  mc.num_domains = S;
  mc.hidden = cfg.hidden;
  mc.shared_classifier = true;
  Rng init_rng = Rng(cfg.seed).substream("init");
  const auto model = DdnModel::init(mc, init_rng);

  std::vector<Affine> enc;
  for (const auto& layer : model.encoder) {
    Affine a;
    a.in = static_cast<int>(layer.w->shape[0]);
    a.out = static_cast<int>(layer.w->shape[1]);
    a.w = layer.w->data;
    a.b = layer.b->data;
    a.gw.assign(a.w.size(), 0.0);
    a.gb.assign(a.b.size(), 0.0);
    enc.push_back(std::move(a));
  }
  Affine cls;
  cls.in = cfg.emb_dim;
  cls.out = M;
  cls.w = model.heads[0].classifier.w->data;
  cls.b = model.heads[0].classifier.b->data;
  cls.gw.assign(cls.w.size(), 0.0);
  cls.gb.assign(cls.b.size(), 0.0);

  // identical batch stream
  auto groups = group_by_domain(data, S);
  Rng batch_rng = Rng(cfg.seed).substream("batches");

  const int L = static_cast<int>(enc.size());
  const int B = cfg.batch_n;
  const double inv_s = 1.0 / static_cast<double>(S);
  std::vector<double> losses;
  losses.reserve(cfg.iterations);
  std::vector<DomainCache> caches(S);

  for (int step = 1; step <= cfg.iterations; ++step) {
    const auto batches = sample_step_batches(groups, B, batch_rng);

    // forward, domain by domain in build order
    double acc_loss = 0.0;
    bool first = true;
    std::vector<std::vector<int>> labels(S);
    for (int s = 0; s < S; ++s) {
      DomainCache& c = caches[s];
      c.a.assign(L + 1, {});
      c.z.assign(L, {});
      c.a[0].resize(B * dim);
      for (int i = 0; i < B; ++i) {
        const auto& ex = data[batches[s][i]];
        std::copy(ex.x.begin(), ex.x.end(), c.a[0].begin() + i * dim);
        labels[s].push_back(ex.label);
      }
      for (int l = 0; l < L; ++l) {
        const Affine& ly = enc[l];
        c.z[l].assign(B * ly.out, 0.0);
        for (int i = 0; i < B; ++i) {
          for (int p = 0; p < ly.in; ++p) {
            const double av = c.a[l][i * ly.in + p];
            const double* wrow = ly.w.data() + p * ly.out;
            double* crow = c.z[l].data() + i * ly.out;
            for (int j = 0; j < ly.out; ++j) crow[j] += av * wrow[j];
          }
          for (int j = 0; j < ly.out; ++j)
            c.z[l][i * ly.out + j] = c.z[l][i * ly.out + j] + ly.b[j];
        }
        c.a[l + 1] = c.z[l];
        if (l + 1 < L) {
          for (auto& v : c.a[l + 1]) v = v > 0.0 ? v : 0.0;
        }
      }
      // shared classifier head
      c.logits.assign(B * M, 0.0);
      const auto& e = c.a[L];
      for (int i = 0; i < B; ++i) {
        for (int p = 0; p < cls.in; ++p) {
          const double av = e[i * cls.in + p];
          const double* wrow = cls.w.data() + p * M;
          double* crow = c.logits.data() + i * M;
          for (int j = 0; j < M; ++j) crow[j] += av * wrow[j];
        }
        for (int j = 0; j < M; ++j)
          c.logits[i * M + j] = c.logits[i * M + j] + cls.b[j];
      }
      // NLL with the library's exact expression structure
      c.probs.assign(B * M, 0.0);
      double lsum = 0.0;
      for (int i = 0; i < B; ++i) {
        const double* x = c.logits.data() + i * M;
        double m = x[0];
        for (int j = 1; j < M; ++j) m = std::max(m, x[j]);
        double sum = 0.0;
        for (int j = 0; j < M; ++j) {
          const double ev = std::exp(x[j] - m);
          c.probs[i * M + j] = ev;
          sum += ev;
        }
        const double invs = 1.0 / sum;
        for (int j = 0; j < M; ++j) c.probs[i * M + j] *= invs;
        lsum += std::log(sum) - (x[labels[s][i]] - m);
      }
      const double l_s = lsum / static_cast<double>(B);
      acc_loss = first ? l_s : acc_loss + l_s;
      first = false;
    }
    const double total = acc_loss * inv_s;
    losses.push_back(total);

    // backward, domains in reverse build order
    for (int s = S - 1; s >= 0; --s) {
      DomainCache& c = caches[s];
      const double coef = inv_s / static_cast<double>(B);
      c.dlogits.assign(B * M, 0.0);
      for (int i = 0; i < B; ++i) {
        const std::size_t y = static_cast<std::size_t>(labels[s][i]);
        for (int j = 0; j < M; ++j) {
          const double onehot = (static_cast<std::size_t>(j) == y) ? 1.0 : 0.0;
          c.dlogits[i * M + j] += (c.probs[i * M + j] - onehot) * coef;
        }
      }
    }
    for (int s = S - 1; s >= 0; --s) {
      DomainCache& c = caches[s];
      // classifier: de = dlogits * Wc^T (blocked dot), gW += E^T dlogits,
      // gb += column sums
      c.de.assign(B * cls.in, 0.0);
      for (int i = 0; i < B; ++i)
        for (int p = 0; p < cls.in; ++p)
          c.de[i * cls.in + p] +=
              dot4(c.dlogits.data() + i * M, cls.w.data() + p * M, M);
      const auto& e = c.a[L];
      for (int i = 0; i < B; ++i) {
        for (int p = 0; p < cls.in; ++p) {
          const double av = e[i * cls.in + p];
          const double* crow = c.dlogits.data() + i * M;
          double* wrow = cls.gw.data() + p * M;
          for (int j = 0; j < M; ++j) wrow[j] += av * crow[j];
        }
      }
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < M; ++j) cls.gb[j] += c.dlogits[i * M + j];
    }
    for (int s = S - 1; s >= 0; --s) {
      DomainCache& c = caches[s];
      std::vector<double> dz = c.de;
      for (int l = L - 1; l >= 0; --l) {
        Affine& ly = enc[l];
        if (l + 1 < L) {
          // relu mask on the pre-activation
          for (std::size_t i = 0; i < dz.size(); ++i)
            if (!(c.z[l][i] > 0.0)) dz[i] = 0.0;
        }
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < ly.out; ++j) ly.gb[j] += dz[i * ly.out + j];
        for (int i = 0; i < B; ++i) {
          for (int p = 0; p < ly.in; ++p) {
            const double av = c.a[l][i * ly.in + p];
            const double* crow = dz.data() + i * ly.out;
            double* wrow = ly.gw.data() + p * ly.out;
            for (int j = 0; j < ly.out; ++j) wrow[j] += av * crow[j];
          }
        }
        if (l > 0) {
          std::vector<double> da(B * ly.in, 0.0);
          for (int i = 0; i < B; ++i)
            for (int p = 0; p < ly.in; ++p)
              da[i * ly.in + p] +=
                  dot4(dz.data() + i * ly.out, ly.w.data() + p * ly.out,
                       ly.out);
          dz = std::move(da);
        }
      }
    }

    // SGD and grad reset
    auto update = [&](Affine& a) {
      const double alpha = -cfg.lr;
      for (std::size_t i = 0; i < a.w.size(); ++i) a.w[i] += alpha * a.gw[i];
      for (std::size_t i = 0; i < a.b.size(); ++i) a.b[i] += alpha * a.gb[i];
      std::fill(a.gw.begin(), a.gw.end(), 0.0);
      std::fill(a.gb.begin(), a.gb.end(), 0.0);
    };
    for (auto& ly : enc) update(ly);
    update(cls);
  }
  return losses;
}

}  // namespace oracle

Outcome criterion8() {
  const auto spec = make_spec(3, 4, 10, 2.0, 1.5, 0.2, 555);
  const auto data = sample_source(spec, 12, 556);

  TrainConfig cfg;
  cfg.use_dpcl = false;
  cfg.shared_classifier = true;
  cfg.iterations = 300;
  cfg.batch_n = 6;
  cfg.emb_dim = 8;
  cfg.hidden = {16, 12};
  cfg.seed = 77;

  const auto result = train(cfg, data, 3);
  const auto oracle_losses = oracle::run(data, 3, 4, cfg);

  int mismatches = 0;
  int first_bad = -1;
  for (int t = 0; t < cfg.iterations; ++t) {
    if (result.log.steps[t].total != oracle_losses[t]) {
      ++mismatches;
      if (first_bad < 0) first_bad = t + 1;
    }
  }
  Outcome out;
  out.pass = mismatches == 0;
  out.detail =
      mismatches == 0
          ? "all " + std::to_string(cfg.iterations) +
                " per-step losses bit-identical to the pooled oracle"
          : std::to_string(mismatches) + " mismatching steps (first at step " +
                std::to_string(first_bad) + ")";
  return out;
}

// ---------------------------------------------------------------------------
// 9. CLI determinism: byte-identical primary artifacts
// ---------------------------------------------------------------------------

bool same_bytes(const fs::path& a, const fs::path& b) {
  return textio::read_file(a.string()) == textio::read_file(b.string());
}

Outcome criterion9(const std::string& cli) {
  Outcome out;
  if (cli.empty()) {
    out.detail = "no CLI binary path provided";
    return out;
  }
  const fs::path base = fs::temp_directory_path() / "ddn_acceptance_c9";
  fs::remove_all(base);
  fs::create_directories(base);
  const std::string small =
      " --seed 4242"
      " --override data.n_per_class_per_domain=12"
      " --override data.n_target_per_class=6"
      " --override train.iterations=120"
      " --override train.batch_n=8"
      " --override eval.w1_projections=8";
  auto run = [&](const std::string& cmd, const std::string& dir) {
    const std::string full =
        cli + " " + cmd + " --out " + (base / dir).string() + small + " > " +
        (base / (dir + ".log")).string() + " 2>&1";
    return std::system(full.c_str()) == 0;
  };
  const std::string sweep =
      " --override ablate.seeds=2 --override ablate.batch_sweep=8"
      " --override search.trials=2 --override search.lambdas=1,5"
      " --override train.lambda=1 --override train.tau=0.5";
  auto run_small = [&](const std::string& cmd, const std::string& dir) {
    const std::string full =
        cli + " " + cmd + " --out " + (base / dir).string() + small + sweep +
        " > " + (base / (dir + ".log")).string() + " 2>&1";
    return std::system(full.c_str()) == 0;
  };
  bool ran = run("gen-data", "g1") && run("gen-data", "g2") &&
             run("train", "t1") && run("train", "t2") && run("eval", "e1") &&
             run("eval", "e2") && run_small("ablate", "a1") &&
             run_small("ablate", "a2") && run_small("search", "s1") &&
             run_small("search", "s2");
  if (!ran) {
    out.detail = "a CLI command exited nonzero";
    return out;
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& f : {"spec.txt", "source_0.txt", "source_1.txt",
                        "source_2.txt", "target.txt", "config_resolved.txt"})
    pairs.push_back({"g1/" + std::string(f), "g2/" + std::string(f)});
  for (const auto& f : {"checkpoint.txt", "bank.txt", "trainlog.txt",
                        "config_resolved.txt"})
    pairs.push_back({"t1/" + std::string(f), "t2/" + std::string(f)});
  for (const auto& f :
       {"report.txt", "predictions_0.txt", "predictions_1.txt",
        "predictions_2.txt", "embeddings.tsv", "config_resolved.txt"})
    pairs.push_back({"e1/" + std::string(f), "e2/" + std::string(f)});
  pairs.push_back({"a1/ablation.txt", "a2/ablation.txt"});
  pairs.push_back({"s1/search_trials.txt", "s2/search_trials.txt"});
  pairs.push_back({"s1/best_config.txt", "s2/best_config.txt"});
  int differing = 0;
  for (const auto& [a, b] : pairs)
    if (!same_bytes(base / a, base / b)) ++differing;
  out.pass = differing == 0;
  out.detail = std::to_string(pairs.size()) + " artifact pairs compared, " +
               std::to_string(differing) + " differ (timestamps live in the " +
               "run_meta.txt sidecar)";
  fs::remove_all(base);
  return out;
}

// ---------------------------------------------------------------------------
// 10. batch-size sweep emission
// ---------------------------------------------------------------------------

Outcome criterion10(const std::string& cli) {
  Outcome out;
  if (cli.empty()) {
    out.detail = "no CLI binary path provided";
    return out;
  }
  const fs::path base = fs::temp_directory_path() / "ddn_acceptance_c10";
  fs::remove_all(base);
  fs::create_directories(base);
  const std::string cmd =
      cli + " ablate --out " + (base / "a").string() +
      " --seed 7 --override data.n_per_class_per_domain=15"
      " --override ablate.seeds=2 --override train.iterations=150"
      " --override train.batch_n=8 --override ablate.batch_sweep=8,16,32,64"
      " > " + (base / "a.log").string() + " 2>&1";
  if (std::system(cmd.c_str()) != 0) {
    out.detail = "ablate command exited nonzero";
    return out;
  }
  const std::string table = textio::read_file((base / "a" / "ablation.txt").string());
  int batch_lines = 0, method_lines = 0;
  bool has_trend = false, stds_ok = true, counts_ok = true;
  std::string trend;
  // every cell row carries exactly one accuracy per configured seed
  auto seed_count_of = [](const std::string& line) {
    const auto eq = line.find("= ");
    const auto sp = line.find(' ', eq + 2);
    if (eq == std::string::npos || sp == std::string::npos) return -1;
    return static_cast<int>(
        textio::parse_csv(line.substr(eq + 2, sp - eq - 2)).size());
  };
  for (const auto& raw : textio::split(table, '\n')) {
    const std::string line(textio::trim(raw));
    if (line.rfind("batch ", 0) == 0) {
      ++batch_lines;
      if (seed_count_of(line) != 2) counts_ok = false;
    }
    if (line.rfind("method ", 0) == 0) {
      ++method_lines;
      if (seed_count_of(line) != 2) counts_ok = false;
    }
    if (line.find("batch trend") != std::string::npos) {
      has_trend = true;
      trend = line;
    }
    const auto spos = line.find("std=");
    if (spos != std::string::npos &&
        textio::parse_double(line.substr(spos + 4)) < 0.0)
      stds_ok = false;
  }
  out.pass = batch_lines == 4 && method_lines == 3 && has_trend && stds_ok &&
             counts_ok;
  out.detail = std::to_string(method_lines) + " method rows, " +
               std::to_string(batch_lines) + " batch points, one value per " +
               "seed: " + (counts_ok ? "yes" : "NO") + ", stds >= 0: " +
               (stds_ok ? "yes" : "NO") + "; " + trend;
  fs::remove_all(base);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  if (argc > 1) cli = argv[1];
  if (cli.empty()) {
    if (const char* env = std::getenv("DDN_CLI_BIN")) cli = env;
  }

  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "gradient suite", criterion1},
      {2, "closed-form loss cases", criterion2},
      {3, "simplex invariants", criterion3},
      {4, "aggregation-oracle recovery", criterion4},
      {5, "ablation ordering", criterion5},
      {6, "uniformity direction", criterion6},
      {7, "metric oracles", criterion7},
      {8, "ERM-equivalence oracle", criterion8},
  };

  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": "
              << name << " — " << o.detail << "\n";
    std::cout.flush();
    if (!o.pass) ++failures;
  };

  for (const auto& e : entries) {
    Outcome o;
    try {
      o = e.fn();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    report(e.id, e.name, o);
  }
  try {
    report(9, "CLI determinism", criterion9(cli));
  } catch (const std::exception& ex) {
    Outcome o;
    o.detail = std::string("exception: ") + ex.what();
    report(9, "CLI determinism", o);
  }
  try {
    report(10, "batch-size sweep emission", criterion10(cli));
  } catch (const std::exception& ex) {
    Outcome o;
    o.detail = std::string("exception: ") + ex.what();
    report(10, "batch-size sweep emission", o);
  }

  std::cout << (failures == 0 ? "ALL CRITERIA PASSED"
                              : std::to_string(failures) + " CRITERIA FAILED")
            << "\n";
  return failures;
}
