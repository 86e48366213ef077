#include "ddn/train.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

#include "ddn/infer.hpp"
#include "ddn/kernels.hpp"
#include "ddn/textio.hpp"

namespace ddn {

namespace tio = textio;

namespace {

void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

int argmax_row(const double* row, int m) {
  int best = 0;
  for (int j = 1; j < m; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

struct AdamState {
  std::vector<std::vector<double>> m, v;
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;
};

}  // namespace

std::vector<std::vector<std::size_t>> group_by_domain(
    const std::vector<Example>& data, int num_domains) {
  std::vector<std::vector<std::size_t>> groups(num_domains);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int d = data[i].domain;
    check_arg(d >= 0 && d < num_domains,
              "group_by_domain: example with invalid or target domain tag");
    groups[d].push_back(i);
  }
  return groups;
}

std::vector<std::vector<std::size_t>> sample_step_batches(
    std::vector<std::vector<std::size_t>>& domain_indices, int batch_n,
    Rng& rng) {
  check_arg(batch_n >= 1, "sample_step_batches: batch_n >= 1");
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(domain_indices.size());
  for (auto& idx : domain_indices) {
    const std::size_t n = idx.size();
    check_arg(n >= static_cast<std::size_t>(batch_n),
              "sample_step_batches: domain smaller than batch_n");
    std::vector<std::size_t> batch(batch_n);
    for (int i = 0; i < batch_n; ++i) {
      const std::size_t j = i + rng.below(n - i);
      std::swap(idx[i], idx[j]);
      batch[i] = idx[i];
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

TrainResult train(const TrainConfig& config, const std::vector<Example>& data,
                  int num_domains) {
  check_arg(config.iterations >= 0, "train: iterations >= 0");
  check_arg(config.batch_n >= 1, "train: batch_n >= 1");
  check_arg(config.lambda >= 0.0, "train: lambda >= 0");
  check_arg(config.lr > 0.0, "train: lr > 0");
  check_arg(config.tau > 0.0, "train: tau > 0");
  check_arg(num_domains >= 1, "train: at least one source domain");
  check_arg(!data.empty(), "train: empty dataset");

  const int dim = static_cast<int>(data.front().x.size());
  int num_classes = 0;
  for (const auto& ex : data) {
    check_arg(static_cast<int>(ex.x.size()) == dim,
              "train: inconsistent feature dimensionality");
    check_arg(ex.label >= 0, "train: negative class label");
    num_classes = std::max(num_classes, ex.label + 1);
  }
  check_arg(num_classes >= 2, "train: at least two classes required");

  auto groups = group_by_domain(data, num_domains);
  for (const auto& g : groups)
    check_arg(g.size() >= static_cast<std::size_t>(config.batch_n),
              "train: a source domain has fewer examples than batch_n");

  ModelConfig mc;
  mc.input_dim = dim;
  mc.emb_dim = config.emb_dim;
  mc.num_classes = num_classes;
  mc.num_domains = num_domains;
  mc.hidden = config.hidden;
  mc.shared_classifier = config.shared_classifier;

  Rng root(config.seed);
  Rng init_rng = root.substream("init");
  DdnModel model = DdnModel::init(mc, init_rng);
  Rng batch_rng = root.substream("batches");

  DpclOptions dopt;
  dopt.tau = config.tau;
  dopt.paper_exact = config.paper_exact_dpcl;
  dopt.stop_grad_prototype = config.stop_grad_prototype;

  const auto params = model.parameters();
  AdamState adam;
  if (config.adaptive) {
    for (const auto& p : params) {
      adam.m.emplace_back(p->data.size(), 0.0);
      adam.v.emplace_back(p->data.size(), 0.0);
    }
  }

  TrainLog log;
  log.steps.reserve(config.iterations);
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 1; step <= config.iterations; ++step) {
    const auto batches = sample_step_batches(groups, config.batch_n, batch_rng);

    std::vector<TensorPtr> xs(num_domains);
    std::vector<std::vector<int>> labels(num_domains);
    for (int s = 0; s < num_domains; ++s) {
      std::vector<double> flat;
      flat.reserve(batches[s].size() * dim);
      for (std::size_t idx : batches[s]) {
        const auto& ex = data[idx];
        flat.insert(flat.end(), ex.x.begin(), ex.x.end());
        labels[s].push_back(ex.label);
      }
      xs[s] = make_tensor({config.batch_n, dim}, std::move(flat));
    }

    Tape tape;
    std::vector<TensorPtr> embs(num_domains), logits(num_domains);
    for (int s = 0; s < num_domains; ++s) embs[s] = model.encode(tape, xs[s]);
    for (int s = 0; s < num_domains; ++s)
      logits[s] = model.classify(tape, s, embs[s]);

    TensorPtr l_y = classification_loss_from_logits(tape, logits, labels);
    TensorPtr l_p, total;
    if (config.use_dpcl) {
      TensorPtr acc;
      for (int s = 0; s < num_domains; ++s) {
        TensorPtr l = dpcl_loss(tape, model, embs, s, dopt);
        acc = acc ? tape.add(acc, l) : l;
      }
      l_p = tape.scalar_mul(acc, 1.0 / static_cast<double>(num_domains));
      total = tape.add(l_y, tape.scalar_mul(l_p, config.lambda));
    } else {
      total = l_y;
    }

    if (!std::isfinite(total->value()))
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step));

    tape.backward(total);

    if (config.adaptive) {
      adam.t += 1;
      const double c1 = 1.0 - std::pow(adam.b1, adam.t);
      const double c2 = 1.0 - std::pow(adam.b2, adam.t);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        for (std::size_t e = 0; e < p.data.size(); ++e) {
          const double g = p.grad[e];
          adam.m[pi][e] = adam.b1 * adam.m[pi][e] + (1.0 - adam.b1) * g;
          adam.v[pi][e] = adam.b2 * adam.v[pi][e] + (1.0 - adam.b2) * g * g;
          p.data[e] -= config.lr * (adam.m[pi][e] / c1) /
                       (std::sqrt(adam.v[pi][e] / c2) + adam.eps);
        }
      }
    } else {
      for (const auto& p : params)
        kern::active_kernels().axpy(p->data.size(), -config.lr,
                                    p->grad.data(), p->data.data());
    }
    model.zero_grad();

    StepRecord rec;
    rec.step = step;
    rec.l_y = l_y->value();
    rec.l_p = l_p ? l_p->value() : 0.0;
    rec.total = total->value();
    rec.domain_accuracy.resize(num_domains);
    for (int s = 0; s < num_domains; ++s) {
      int correct = 0;
      for (int i = 0; i < config.batch_n; ++i) {
        if (argmax_row(logits[s]->data.data() + i * num_classes, num_classes) ==
            labels[s][i])
          ++correct;
      }
      rec.domain_accuracy[s] =
          static_cast<double>(correct) / static_cast<double>(config.batch_n);
    }
    log.steps.push_back(std::move(rec));
  }

  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  PrototypeBank bank = freeze_prototype_bank(model, data);
  return {std::move(model), std::move(bank), std::move(log)};
}

PrototypeBank freeze_prototype_bank(const DdnModel& model,
                                    const std::vector<Example>& data) {
  const int S = model.config().num_domains;
  const int dim = model.config().input_dim;
  auto groups = group_by_domain(data, S);
  for (const auto& g : groups)
    check_arg(!g.empty(), "freeze_prototype_bank: empty source domain");

  PrototypeBank bank;
  bank.provenance = PrototypeBank::Provenance::kFrozenFullPass;
  bank.q.resize(S);
  for (int s = 0; s < S; ++s) {
    std::vector<double> flat;
    flat.reserve(groups[s].size() * dim);
    for (std::size_t idx : groups[s])
      flat.insert(flat.end(), data[idx].x.begin(), data[idx].x.end());
    Tape tape;
    auto x = make_tensor({static_cast<std::int64_t>(groups[s].size()), dim},
                         std::move(flat));
    auto q = model.prototype(tape, s, model.encode(tape, x));
    bank.q[s] = q->data;
  }
  return bank;
}

SplitIndices stratified_split(const std::vector<Example>& data,
                              int num_domains, double val_fraction,
                              std::uint64_t seed) {
  check_arg(val_fraction >= 0.0 && val_fraction < 1.0,
            "stratified_split: fraction in [0, 1)");
  std::map<std::pair<int, int>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_arg(data[i].domain >= 0 && data[i].domain < num_domains,
              "stratified_split: invalid domain tag");
    buckets[{data[i].domain, data[i].label}].push_back(i);
  }
  Rng rng(seed);
  SplitIndices split;
  for (auto& [key, idx] : buckets) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = rng.below(i);
      std::swap(idx[i - 1], idx[j]);
    }
    const std::size_t k =
        static_cast<std::size_t>(val_fraction * static_cast<double>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < k ? split.val : split.train).push_back(idx[i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

SearchResult random_search(const TrainConfig& base, int trials,
                           const SearchSpace& space,
                           const std::vector<Example>& data, int num_domains,
                           double tau_w) {
  check_arg(trials >= 1, "random_search: trials >= 1");
  check_arg(!space.lambdas.empty(), "random_search: empty search space");

  const auto split = stratified_split(data, num_domains, 0.2,
                                      derive_seed(base.seed, "valsplit"));
  check_arg(!split.val.empty(), "random_search: validation split is empty");
  std::vector<Example> train_data, val_data;
  train_data.reserve(split.train.size());
  val_data.reserve(split.val.size());
  for (std::size_t i : split.train) train_data.push_back(data[i]);
  for (std::size_t i : split.val) val_data.push_back(data[i]);

  Rng rng = Rng(base.seed).substream("search");
  SearchResult result;
  result.best = base;
  bool have_best = false;

  for (int t = 0; t < trials; ++t) {
    TrainConfig cfg = base;
    cfg.lambda = space.lambdas[rng.below(space.lambdas.size())];
    TrainResult run = train(cfg, train_data, num_domains);
    const auto preds = predict_batch(run.model, run.bank, val_data, tau_w);
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].cls == val_data[i].label) ++correct;
    const double acc =
        static_cast<double>(correct) / static_cast<double>(preds.size());
    result.trials.push_back({t, cfg.lambda, acc});

    const bool better =
        !have_best || acc > result.best_accuracy ||
        (acc == result.best_accuracy && cfg.lambda < result.best.lambda);
    if (better) {
      result.best = cfg;
      result.best_accuracy = acc;
      have_best = true;
    }
  }
  return result;
}

std::string serialize_train_log(const TrainLog& log, int num_domains,
                                const std::string& meta) {
  std::string out = "# ddn-trainlog v1 domains=" + std::to_string(num_domains) + "\n";
  if (!meta.empty()) out += "# config: " + meta + "\n";
  out += "# columns: step l_y l_p total";
  for (int s = 0; s < num_domains; ++s) out += " acc_" + std::to_string(s);
  out += "\n";
  for (const auto& rec : log.steps) {
    out += std::to_string(rec.step);
    out += ' ' + tio::fmt_g17(rec.l_y);
    out += ' ' + tio::fmt_g17(rec.l_p);
    out += ' ' + tio::fmt_g17(rec.total);
    for (double a : rec.domain_accuracy) out += ' ' + tio::fmt_g17(a);
    out += '\n';
  }
  return out;
}

void save_train_log(const std::string& path, const TrainLog& log,
                    int num_domains, const std::string& meta) {
  tio::write_file(path, serialize_train_log(log, num_domains, meta));
}

}  // namespace ddn
