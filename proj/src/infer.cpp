#include "ddn/infer.hpp"

#include <stdexcept>

#include "ddn/parallel.hpp"
#include "ddn/textio.hpp"

namespace ddn {

namespace tio = textio;

namespace {

void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_bank(const DdnModel& model, const PrototypeBank& bank) {
  const auto& cfg = model.config();
  check_arg(static_cast<int>(bank.q.size()) == cfg.num_domains,
            "predict: bank size must match the number of source domains");
  for (const auto& q : bank.q)
    check_arg(static_cast<int>(q.size()) == cfg.emb_dim,
              "predict: prototype dimension mismatch");
}

}  // namespace

std::vector<Prediction> predict_batch(const DdnModel& model,
                                      const PrototypeBank& bank,
                                      const std::vector<Example>& examples,
                                      double tau_w) {
  check_bank(model, bank);
  check_arg(tau_w > 0.0, "predict: tau_w > 0");
  if (examples.empty()) return {};
  const auto& cfg = model.config();
  const int S = cfg.num_domains, M = cfg.num_classes;
  const std::int64_t n = static_cast<std::int64_t>(examples.size());

  std::vector<double> flat;
  flat.reserve(examples.size() * cfg.input_dim);
  for (const auto& ex : examples) {
    check_arg(static_cast<int>(ex.x.size()) == cfg.input_dim,
              "predict: feature dimension mismatch");
    flat.insert(flat.end(), ex.x.begin(), ex.x.end());
  }

  Tape tape;
  auto emb = model.encode(tape, make_tensor({n, cfg.input_dim}, std::move(flat)));

  // similarity logits [n, S], then one softmax per row gives the weights
  std::vector<TensorPtr> cos(S);
  for (int s = 0; s < S; ++s)
    cos[s] = tape.cosine_similarity(
        emb, make_tensor({cfg.emb_dim}, bank.q[s]));
  auto wl = make_tensor({n, S});
  for (std::int64_t i = 0; i < n; ++i)
    for (int s = 0; s < S; ++s) wl->data[i * S + s] = cos[s]->data[i] / tau_w;
  auto weights = tape.softmax(wl);

  std::vector<TensorPtr> head_probs(S);
  for (int s = 0; s < S; ++s)
    head_probs[s] = tape.softmax(model.classify(tape, s, emb));

  std::vector<Prediction> out(examples.size());
  for (std::int64_t i = 0; i < n; ++i) {
    Prediction& p = out[i];
    p.weights.w.assign(weights->data.begin() + i * S,
                       weights->data.begin() + (i + 1) * S);
    p.per_head_probs.resize(S);
    p.class_probs.assign(M, 0.0);
    for (int s = 0; s < S; ++s) {
      const double* row = head_probs[s]->data.data() + i * M;
      p.per_head_probs[s].assign(row, row + M);
      const double w = p.weights.w[s];
      for (int m = 0; m < M; ++m) p.class_probs[m] += w * row[m];
    }
    p.cls = 0;
    for (int m = 1; m < M; ++m)
      if (p.class_probs[m] > p.class_probs[p.cls]) p.cls = m;
  }
  return out;
}

SimplexWeights aggregation_weights(const DdnModel& model,
                                   const PrototypeBank& bank,
                                   std::span<const double> x, double tau_w) {
  Example ex;
  ex.x.assign(x.begin(), x.end());
  auto preds = predict_batch(model, bank, {ex}, tau_w);
  return std::move(preds.front().weights);
}

Prediction predict(const DdnModel& model, const PrototypeBank& bank,
                   std::span<const double> x, double tau_w) {
  Example ex;
  ex.x.assign(x.begin(), x.end());
  auto preds = predict_batch(model, bank, {ex}, tau_w);
  return std::move(preds.front());
}

LeaveOneOutResult evaluate_leave_one_out(const DomainSpec& spec,
                                         const LeaveOneOutOptions& options) {
  const int S = spec.num_domains;
  check_arg(S >= 2, "leave-one-out: needs at least two domains");
  const auto data =
      sample_source(spec, options.n_per_class_per_domain, options.data_seed);

  LeaveOneOutResult result;
  result.folds.resize(S);
  parallel_for(static_cast<std::size_t>(S), [&](std::size_t k) {
    std::vector<Example> train_set, test_set;
    for (const auto& ex : data) {
      if (ex.domain == static_cast<int>(k)) {
        test_set.push_back(ex);
      } else {
        Example moved = ex;
        moved.domain = ex.domain - (ex.domain > static_cast<int>(k) ? 1 : 0);
        train_set.push_back(std::move(moved));
      }
    }
    TrainResult run = train(options.train, train_set, S - 1);
    LeaveOneOutFold fold;
    fold.held_out = static_cast<int>(k);
    fold.predictions =
        predict_batch(run.model, run.bank, test_set, options.tau_w);
    fold.true_labels.reserve(test_set.size());
    int correct = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      fold.true_labels.push_back(test_set[i].label);
      if (fold.predictions[i].cls == test_set[i].label) ++correct;
    }
    fold.accuracy =
        static_cast<double>(correct) / static_cast<double>(test_set.size());
    fold.model = std::move(run.model);
    fold.bank = std::move(run.bank);
    result.folds[k] = std::move(fold);
  });

  double sum = 0.0;
  for (const auto& fold : result.folds) {
    result.per_domain_accuracy.push_back(fold.accuracy);
    sum += fold.accuracy;
  }
  result.mean_accuracy = sum / static_cast<double>(S);
  return result;
}

std::string serialize_predictions(const std::vector<Prediction>& predictions,
                                  const std::vector<int>& true_labels) {
  check_arg(predictions.size() == true_labels.size(),
            "serialize_predictions: length mismatch");
  const int S = predictions.empty()
                    ? 0
                    : static_cast<int>(predictions.front().weights.w.size());
  const int M = predictions.empty()
                    ? 0
                    : static_cast<int>(predictions.front().class_probs.size());
  std::string out = "# ddn-predictions v1 count=" +
                    std::to_string(predictions.size()) +
                    " s=" + std::to_string(S) + " m=" + std::to_string(M) + "\n";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    out += std::to_string(true_labels[i]);
    out += '\t';
    out += std::to_string(p.cls);
    out += '\t';
    out += tio::join_csv(p.weights.w);
    out += '\t';
    out += tio::join_csv(p.class_probs);
    out += '\n';
  }
  return out;
}

}  // namespace ddn
