#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ddn/infer.hpp"
#include "ddn/train.hpp"

using namespace ddn;

namespace {

TrainConfig quick_config(int iterations = 200, int batch_n = 8) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.batch_n = batch_n;
  cfg.emb_dim = 16;
  cfg.hidden = {32};
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("group_by_domain rejects target tags") {
  std::vector<Example> data(2);
  data[0].domain = 0;
  data[1].domain = kTargetDomain;
  CHECK_THROWS_AS(group_by_domain(data, 1), std::invalid_argument);
}

TEST_CASE("step batches draw without replacement") {
  Rng rng(3);
  std::vector<std::vector<std::size_t>> groups = {{0, 1, 2, 3, 4},
                                                  {5, 6, 7, 8, 9},
                                                  {10, 11, 12, 13, 14}};
  auto copy = groups;
  auto batches = sample_step_batches(copy, 4, rng);
  REQUIRE(batches.size() == 3);
  for (int s = 0; s < 3; ++s) {
    CHECK(batches[s].size() == 4);
    std::set<std::size_t> uniq(batches[s].begin(), batches[s].end());
    CHECK(uniq.size() == 4);
    for (auto i : uniq)
      CHECK(std::find(groups[s].begin(), groups[s].end(), i) != groups[s].end());
  }

  // exhaustive draw is a permutation of the domain
  Rng rng2(3);
  auto copy2 = groups;
  auto full = sample_step_batches(copy2, 5, rng2);
  for (int s = 0; s < 3; ++s) {
    std::set<std::size_t> uniq(full[s].begin(), full[s].end());
    CHECK(uniq.size() == 5);
  }

  // same rng state reproduces the same batches
  Rng a(11), b(11);
  auto ga = groups, gb = groups;
  CHECK(sample_step_batches(ga, 3, a) == sample_step_batches(gb, 3, b));

  Rng c(1);
  std::vector<std::vector<std::size_t>> tiny = {{0, 1}};
  CHECK_THROWS_AS(sample_step_batches(tiny, 3, c), std::invalid_argument);
}

TEST_CASE("zero iterations returns the initialized model") {
  auto spec = make_spec(2, 3, 8, 2.0, 1.0, 0.1, 5);
  auto data = sample_source(spec, 10, 3);
  auto cfg = quick_config(0, 4);
  auto result = train(cfg, data, 2);
  CHECK(result.log.steps.empty());

  ModelConfig mc;
  mc.input_dim = 8;
  mc.emb_dim = cfg.emb_dim;
  mc.num_classes = 3;
  mc.num_domains = 2;
  mc.hidden = cfg.hidden;
  Rng init_rng = Rng(cfg.seed).substream("init");
  auto fresh = DdnModel::init(mc, init_rng);
  auto p1 = result.model.parameters(), p2 = fresh.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->data == p2[i]->data);
}

TEST_CASE("training is bit-deterministic given config and seed") {
  auto spec = make_spec(3, 3, 8, 2.0, 1.0, 0.2, 9);
  auto data = sample_source(spec, 12, 21);
  auto cfg = quick_config(40, 6);
  auto r1 = train(cfg, data, 3);
  auto r2 = train(cfg, data, 3);
  CHECK(serialize_train_log(r1.log, 3) == serialize_train_log(r2.log, 3));
  auto p1 = r1.model.parameters(), p2 = r2.model.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->data == p2[i]->data);
  for (int s = 0; s < 3; ++s) CHECK(r1.bank.q[s] == r2.bank.q[s]);
}

TEST_CASE("logged parts satisfy total = l_y + lambda * l_p at every step") {
  auto spec = make_spec(2, 3, 8, 2.0, 1.0, 0.2, 13);
  auto data = sample_source(spec, 10, 31);
  auto cfg = quick_config(30, 5);
  cfg.lambda = 7.0;
  auto result = train(cfg, data, 2);
  REQUIRE(result.log.steps.size() == 30);
  for (const auto& rec : result.log.steps) {
    CHECK(std::abs(rec.total - (rec.l_y + cfg.lambda * rec.l_p)) <= 1e-12);
    CHECK(std::isfinite(rec.total));
    CHECK(rec.l_y >= 0.0);
    CHECK(rec.l_p >= 0.0);
  }
}

TEST_CASE("plain ERM drives separable noiseless data to perfect accuracy") {
  auto spec = make_spec(2, 4, 12, 4.0, 2.0, 0.0, 17);
  auto data = sample_source(spec, 16, 41);
  auto cfg = quick_config(500, 8);
  cfg.use_dpcl = false;
  auto result = train(cfg, data, 2);
  const auto& last = result.log.steps.back();
  for (double acc : last.domain_accuracy) CHECK(acc == 1.0);

  // independent oracle: multinomial logistic regression fit directly on the
  // pooled data must also separate it perfectly
  const int dim = 12, M = 4;
  std::vector<double> W(dim * M, 0.0), bias(M, 0.0);
  for (int it = 0; it < 800; ++it) {
    std::vector<double> gw(dim * M, 0.0), gb(M, 0.0);
    for (const auto& ex : data) {
      std::vector<double> logit(M, 0.0);
      for (int m = 0; m < M; ++m) {
        for (int j = 0; j < dim; ++j) logit[m] += ex.x[j] * W[j * M + m];
        logit[m] += bias[m];
      }
      const double mx = *std::max_element(logit.begin(), logit.end());
      double z = 0.0;
      for (int m = 0; m < M; ++m) z += std::exp(logit[m] - mx);
      for (int m = 0; m < M; ++m) {
        const double p = std::exp(logit[m] - mx) / z - (m == ex.label ? 1 : 0);
        for (int j = 0; j < dim; ++j) gw[j * M + m] += p * ex.x[j];
        gb[m] += p;
      }
    }
    const double lr = 0.1 / data.size();
    for (std::size_t i = 0; i < W.size(); ++i) W[i] -= lr * gw[i];
    for (int m = 0; m < M; ++m) bias[m] -= lr * gb[m];
  }
  int correct = 0;
  for (const auto& ex : data) {
    std::vector<double> logit(M, 0.0);
    for (int m = 0; m < M; ++m) {
      for (int j = 0; j < dim; ++j) logit[m] += ex.x[j] * W[j * M + m];
      logit[m] += bias[m];
    }
    if (std::max_element(logit.begin(), logit.end()) - logit.begin() == ex.label)
      ++correct;
  }
  CHECK(correct == static_cast<int>(data.size()));
}

TEST_CASE("adaptive optimizer trains and stays deterministic") {
  auto spec = make_spec(2, 3, 8, 3.0, 1.0, 0.1, 77);
  auto data = sample_source(spec, 12, 91);
  auto cfg = quick_config(150, 6);
  cfg.adaptive = true;
  cfg.lr = 0.01;
  auto r1 = train(cfg, data, 2);
  auto r2 = train(cfg, data, 2);
  CHECK(serialize_train_log(r1.log, 2) == serialize_train_log(r2.log, 2));
  CHECK(r1.log.steps.back().total < r1.log.steps.front().total);
  // moments actually engage: trajectory differs from plain SGD
  auto sgd_cfg = cfg;
  sgd_cfg.adaptive = false;
  auto sgd = train(sgd_cfg, data, 2);
  CHECK(sgd.log.steps.back().total != r1.log.steps.back().total);
}

TEST_CASE("divergent training reports the failing step") {
  auto spec = make_spec(2, 3, 8, 2.0, 1.0, 0.1, 19);
  auto data = sample_source(spec, 8, 51);
  auto cfg = quick_config(200, 4);
  cfg.lr = 1e12;
  CHECK_THROWS_AS(train(cfg, data, 2), std::runtime_error);
}

TEST_CASE("frozen bank invariants") {
  auto spec = make_spec(2, 2, 6, 2.0, 1.0, 0.1, 23);
  auto data = sample_source(spec, 5, 61);
  Rng rng(2);
  ModelConfig mc;
  mc.input_dim = 6;
  mc.emb_dim = 8;
  mc.num_classes = 2;
  mc.num_domains = 2;
  mc.hidden = {8};
  auto model = DdnModel::init(mc, rng);

  auto bank = freeze_prototype_bank(model, data);
  CHECK(bank.provenance == PrototypeBank::Provenance::kFrozenFullPass);
  auto again = freeze_prototype_bank(model, data);
  for (int s = 0; s < 2; ++s) CHECK(bank.q[s] == again.q[s]);

  // duplicating every example leaves every prototype unchanged
  auto doubled = data;
  doubled.insert(doubled.end(), data.begin(), data.end());
  auto dup = freeze_prototype_bank(model, doubled);
  for (int s = 0; s < 2; ++s)
    for (std::size_t j = 0; j < bank.q[s].size(); ++j)
      CHECK(dup.q[s][j] == doctest::Approx(bank.q[s][j]).epsilon(1e-13));

  // a one-example domain's prototype is that example's projection
  std::vector<Example> single = {data[0], data[data.size() - 1]};
  single[0].domain = 0;
  single[1].domain = 1;
  auto one = freeze_prototype_bank(model, single);
  Tape tape;
  auto x = make_tensor({1, 6}, single[0].x);
  auto q = model.prototype(tape, 0, model.encode(tape, x));
  CHECK(one.q[0] == q->data);

  std::vector<Example> missing = {data[0]};
  missing[0].domain = 0;
  CHECK_THROWS_AS(freeze_prototype_bank(model, missing), std::invalid_argument);
}

TEST_CASE("stratified split carves a fifth of every bucket") {
  auto spec = make_spec(2, 3, 6, 2.0, 1.0, 0.1, 29);
  auto data = sample_source(spec, 10, 71);
  auto split = stratified_split(data, 2, 0.2, 99);
  CHECK(split.val.size() == 2 * 3 * 2);  // 20% of 10 per bucket
  CHECK(split.train.size() + split.val.size() == data.size());
  std::set<std::size_t> seen(split.train.begin(), split.train.end());
  for (auto i : split.val) CHECK(seen.insert(i).second);
  auto split2 = stratified_split(data, 2, 0.2, 99);
  CHECK(split.train == split2.train);
  CHECK(split.val == split2.val);
}

TEST_CASE("random search honors the tie-break rules") {
  // trivially separable: every lambda reaches validation accuracy 1, so the
  // winner must be the smallest lambda ever drawn
  auto spec = make_spec(2, 3, 10, 6.0, 1.0, 0.0, 31);
  auto data = sample_source(spec, 10, 81);
  auto cfg = quick_config(150, 4);
  SearchSpace space;
  space.lambdas = {5.0, 10.0};
  auto result = random_search(cfg, 4, space, data, 2, 0.1);
  CHECK(result.trials.size() == 4);
  double best_seen = 0.0;
  double min_lambda_drawn = 1e9;
  for (const auto& t : result.trials) {
    best_seen = std::max(best_seen, t.val_accuracy);
    if (t.val_accuracy == 1.0) min_lambda_drawn = std::min(min_lambda_drawn, t.lambda);
  }
  CHECK(result.best_accuracy == best_seen);
  REQUIRE(best_seen == 1.0);
  CHECK(result.best.lambda == min_lambda_drawn);

  // singleton space: one effective choice
  SearchSpace one;
  one.lambdas = {10.0};
  auto single = random_search(cfg, 1, one, data, 2, 0.1);
  CHECK(single.best.lambda == 10.0);
  CHECK(single.trials.size() == 1);
}

TEST_CASE("a full 20-trial search never loses to the default config") {
  auto spec = make_spec(2, 3, 10, 6.0, 1.0, 0.0, 33);
  auto data = sample_source(spec, 10, 83);
  auto cfg = quick_config(150, 4);  // default lambda = 10

  // independent reference: one run of the default config on the same split
  auto split = stratified_split(data, 2, 0.2, derive_seed(cfg.seed, "valsplit"));
  std::vector<Example> train_part, val_part;
  for (auto i : split.train) train_part.push_back(data[i]);
  for (auto i : split.val) val_part.push_back(data[i]);
  auto base_run = train(cfg, train_part, 2);
  auto preds = predict_batch(base_run.model, base_run.bank, val_part, 0.1);
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].cls == val_part[i].label) ++correct;
  const double default_acc = static_cast<double>(correct) / preds.size();

  auto result = random_search(cfg, 20, SearchSpace{}, data, 2, 0.1);
  CHECK(result.trials.size() == 20);
  CHECK(result.best_accuracy >= default_acc);
  for (const auto& t : result.trials)
    CHECK(result.best_accuracy >= t.val_accuracy);
}
