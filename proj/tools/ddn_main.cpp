// ddn: synthetic multi-domain experiments with domain expert classifiers,
// prototype contrastive training and simplex-weighted ensemble inference.
//
// Subcommands: gen-data, train, eval, ablate, search. Every run derives all
// randomness from one root seed via named substreams and copies its resolved
// config next to the artifacts; timestamps go to a run_meta.txt sidecar so
// the primary artifacts are byte-stable under reruns.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddn/config.hpp"
#include "ddn/infer.hpp"
#include "ddn/kernels.hpp"
#include "ddn/metrics.hpp"
#include "ddn/parallel.hpp"
#include "ddn/rng.hpp"
#include "ddn/textio.hpp"
#include "ddn/train.hpp"

namespace fs = std::filesystem;
namespace tio = ddn::textio;
using namespace ddn;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  long long seed = 0;
  bool seed_given = false;
};

ExperimentConfig resolve(const CommonArgs& args) {
  ConfigMap map = args.config_path.empty() ? ConfigMap{}
                                           : ConfigMap::load(args.config_path);
  for (const auto& o : args.overrides) map.apply_override(o);
  if (args.seed_given) map.set("seed", std::to_string(args.seed));
  return ExperimentConfig::from_map(map);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_config_echo(const ExperimentConfig& cfg, const std::string& out) {
  tio::write_file(join(out, "config_resolved.txt"), cfg.serialize());
}

// wall time and timestamps live here, outside the byte-stable artifacts
void write_sidecar(const std::string& out, const std::string& command,
                   double wall_seconds) {
  const std::time_t now = std::time(nullptr);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  std::string meta = "command = " + command + "\n";
  meta += std::string("timestamp = ") + stamp + "\n";
  meta += "wall_seconds = " + tio::fmt_g17(wall_seconds) + "\n";
  meta += "kernel_backend = " + std::string(kern::active_backend_name()) + "\n";
  meta += "threads = " + std::to_string(max_threads()) + "\n";
  tio::write_file(join(out, "run_meta.txt"), meta);
}

struct SourceData {
  DomainSpec spec;
  std::vector<Example> examples;
  std::uint64_t hash = 0;
};

std::uint64_t data_seed_of(const ExperimentConfig& cfg) {
  return derive_seed(cfg.seed, "data");
}

DomainSpec spec_of(const ExperimentConfig& cfg) {
  if (!cfg.data.dir.empty()) return load_spec(join(cfg.data.dir, "spec.txt"));
  return make_spec(cfg.data.s, cfg.data.m, cfg.data.dim, cfg.data.separation,
                   cfg.data.shift_scale, cfg.data.noise_sigma,
                   derive_seed(data_seed_of(cfg), "spec"), cfg.spec_options());
}

SourceData source_data_of(const ExperimentConfig& cfg) {
  SourceData data;
  data.spec = spec_of(cfg);
  data.hash = spec_hash(data.spec);
  if (!cfg.data.dir.empty()) {
    for (int d = 0; d < data.spec.num_domains; ++d) {
      auto loaded = load_dataset(
          join(cfg.data.dir, "source_" + std::to_string(d) + ".txt"));
      if (loaded.spec_hash != data.hash)
        throw std::runtime_error("dataset/spec hash mismatch in " + cfg.data.dir);
      data.examples.insert(data.examples.end(), loaded.examples.begin(),
                           loaded.examples.end());
    }
  } else {
    data.examples = sample_source(data.spec, cfg.data.n_per_class_per_domain,
                                  derive_seed(data_seed_of(cfg), "source"));
  }
  return data;
}

std::string train_meta(const ExperimentConfig& cfg) {
  std::string m;
  m += "lambda=" + tio::fmt_g17(cfg.train.lambda);
  m += " lr=" + tio::fmt_g17(cfg.train.lr);
  m += " iterations=" + std::to_string(cfg.train.iterations);
  m += " batch_n=" + std::to_string(cfg.train.batch_n);
  m += std::string(" use_dpcl=") + (cfg.train.use_dpcl ? "true" : "false");
  m += std::string(" shared_classifier=") +
       (cfg.train.shared_classifier ? "true" : "false");
  m += " tau=" + tio::fmt_g17(cfg.train.tau);
  m += std::string(" paper_exact_dpcl=") +
       (cfg.train.paper_exact_dpcl ? "true" : "false");
  m += std::string(" stop_grad_prototype=") +
       (cfg.train.stop_grad_prototype ? "true" : "false");
  m += std::string(" adaptive=") + (cfg.train.adaptive ? "true" : "false");
  m += " seed=" + std::to_string(cfg.train.seed);
  return m;
}

std::vector<std::pair<std::string, std::string>> checkpoint_meta(
    const ExperimentConfig& cfg) {
  return {{"train", train_meta(cfg)}};
}

void check_invariant(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error("invariant check failed: " + what);
}

int cmd_gen_data(const ExperimentConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  // build everything first; nothing is written if any input is invalid
  const DomainSpec spec = spec_of(cfg);
  const std::uint64_t hash = spec_hash(spec);
  const auto source = sample_source(spec, cfg.data.n_per_class_per_domain,
                                    derive_seed(data_seed_of(cfg), "source"));
  const auto target =
      sample_target(spec, cfg.mixture_or_uniform(), cfg.data.n_target_per_class,
                    derive_seed(data_seed_of(cfg), "target"));

  fs::create_directories(out);
  save_spec(join(out, "spec.txt"), spec);
  for (int d = 0; d < spec.num_domains; ++d) {
    std::vector<Example> part;
    for (const auto& ex : source)
      if (ex.domain == d) part.push_back(ex);
    save_dataset(join(out, "source_" + std::to_string(d) + ".txt"), part, hash,
                 spec.dim);
  }
  save_dataset(join(out, "target.txt"), target, hash, spec.dim);
  write_config_echo(cfg, out);
  write_sidecar(out, "gen-data", std::chrono::duration<double>(
                                     std::chrono::steady_clock::now() - t0)
                                     .count());
  std::cout << "wrote spec + " << spec.num_domains << " source files + target ("
            << source.size() << " source, " << target.size()
            << " target examples)\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const SourceData data = source_data_of(cfg);
  TrainResult result = train(cfg.train, data.examples, data.spec.num_domains);

  fs::create_directories(out);
  save_checkpoint(join(out, "checkpoint.txt"), result.model, data.hash,
                  checkpoint_meta(cfg));
  save_bank(join(out, "bank.txt"), result.bank, data.hash);
  save_train_log(join(out, "trainlog.txt"), result.log, data.spec.num_domains,
                 train_meta(cfg));
  write_config_echo(cfg, out);
  write_sidecar(out, "train", std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count());
  if (!result.log.steps.empty()) {
    const auto& last = result.log.steps.back();
    std::cout << "final step " << last.step << " l_y=" << tio::fmt_g17(last.l_y)
              << " l_p=" << tio::fmt_g17(last.l_p)
              << " total=" << tio::fmt_g17(last.total) << "\n";
  }
  std::cout << "wrote checkpoint, bank, trainlog to " << out << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const DomainSpec spec = spec_of(cfg);
  const int S = spec.num_domains;

  LeaveOneOutOptions loo;
  loo.train = cfg.train;
  loo.n_per_class_per_domain = cfg.data.n_per_class_per_domain;
  loo.data_seed = derive_seed(data_seed_of(cfg), "source");
  loo.tau_w = cfg.eval.tau_w;
  LeaveOneOutResult result = evaluate_leave_one_out(spec, loo);

  const int ref = cfg.eval.held_out < 0 ? S - 1 : cfg.eval.held_out;
  if (ref >= S) throw std::runtime_error("eval.held_out out of range");
  const auto& fold = result.folds[ref];

  // the reference fold's world: its training sources and held-out target
  const auto data = sample_source(spec, loo.n_per_class_per_domain, loo.data_seed);
  std::vector<Example> train_set, held_out;
  for (const auto& ex : data) {
    if (ex.domain == ref) {
      held_out.push_back(ex);
    } else {
      Example moved = ex;
      moved.domain = ex.domain - (ex.domain > ref ? 1 : 0);
      train_set.push_back(std::move(moved));
    }
  }

  EvalReport report;
  report.per_domain_accuracy = result.per_domain_accuracy;
  report.mean_accuracy = result.mean_accuracy;
  {
    const auto embs = encode_dataset(fold.model, train_set);
    std::vector<int> labels;
    labels.reserve(train_set.size());
    for (const auto& ex : train_set) labels.push_back(ex.label);
    report.alignment_value = alignment(embs, labels);
    report.uniformity_value = uniformity(embs);
  }
  const int profile_n =
      std::min<int>(cfg.eval.profile_n, static_cast<int>(held_out.size()));
  report.weight_profile =
      domain_weight_profile(fold.model, fold.bank, held_out, profile_n,
                            derive_seed(cfg.seed, "profile"), cfg.eval.tau_w);

  // inter-domain discrepancy of encoder features under the reference model
  std::vector<std::vector<std::vector<double>>> domain_embs(S);
  for (int d = 0; d < S; ++d) {
    std::vector<Example> part;
    for (const auto& ex : data)
      if (ex.domain == d) part.push_back(ex);
    domain_embs[d] = encode_dataset(fold.model, part);
  }
  const std::uint64_t proj_seed = derive_seed(cfg.seed, "projections");
  report.discrepancy_matrix.assign(S, std::vector<double>(S, 0.0));
  for (int i = 0; i < S; ++i) {
    for (int j = i + 1; j < S; ++j) {
      const double d = sliced_w1(domain_embs[i], domain_embs[j],
                                 cfg.eval.w1_projections, proj_seed);
      report.discrepancy_matrix[i][j] = d;
      report.discrepancy_matrix[j][i] = d;
    }
  }

  // embedded invariant checks gate the exit code
  double wsum = 0.0;
  for (double w : report.weight_profile) {
    check_invariant(w >= 0.0, "weight profile nonnegative");
    wsum += w;
  }
  check_invariant(std::abs(wsum - 1.0) < 1e-9, "weight profile sums to 1");
  for (double a : report.per_domain_accuracy)
    check_invariant(a >= 0.0 && a <= 1.0, "accuracy in [0,1]");
  for (int i = 0; i < S; ++i)
    check_invariant(report.discrepancy_matrix[i][i] == 0.0,
                    "discrepancy diagonal is zero");

  fs::create_directories(out);
  save_eval_report(join(out, "report.txt"), report);
  for (const auto& f : result.folds) {
    tio::write_file(
        join(out, "predictions_" + std::to_string(f.held_out) + ".txt"),
        serialize_predictions(f.predictions, f.true_labels));
  }
  export_embeddings(fold.model, data, join(out, "embeddings.tsv"));
  write_config_echo(cfg, out);
  write_sidecar(out, "eval", std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count());
  std::cout << "leave-one-out mean accuracy "
            << tio::fmt_g17(report.mean_accuracy) << " over " << S
            << " folds\n";
  return 0;
}

double loo_mean_accuracy(const DomainSpec& spec, TrainConfig train_cfg,
                         int n_per_class, std::uint64_t root, double tau_w) {
  LeaveOneOutOptions loo;
  train_cfg.seed = root;
  loo.train = train_cfg;
  loo.n_per_class_per_domain = n_per_class;
  loo.data_seed = derive_seed(root, "data");
  loo.tau_w = tau_w;
  return evaluate_leave_one_out(spec, loo).mean_accuracy;
}

struct CellStats {
  std::vector<double> values;
  double mean = 0.0, stdev = 0.0;
};

CellStats stats_of(std::vector<double> values) {
  CellStats s;
  s.values = std::move(values);
  for (double v : s.values) s.mean += v;
  s.mean /= static_cast<double>(s.values.size());
  if (s.values.size() > 1) {
    double acc = 0.0;
    for (double v : s.values) acc += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(acc / static_cast<double>(s.values.size() - 1));
  }
  return s;
}

std::string cell_line(const std::string& name, const CellStats& s) {
  std::string line = name + " = " + tio::join_csv(s.values);
  line += " mean=" + tio::fmt_g17(s.mean);
  line += " std=" + tio::fmt_g17(s.stdev);
  line += "\n";
  return line;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const DomainSpec spec = spec_of(cfg);
  const int seeds = cfg.ablate.seeds;
  if (seeds < 1) throw std::runtime_error("ablate.seeds >= 1");

  std::vector<std::uint64_t> roots(seeds);
  for (int i = 0; i < seeds; ++i)
    roots[i] = derive_seed(cfg.seed, "ablate") + static_cast<std::uint64_t>(i);

  auto run_method = [&](TrainConfig method_cfg) {
    std::vector<double> accs(seeds);
    for (int i = 0; i < seeds; ++i)
      accs[i] = loo_mean_accuracy(spec, method_cfg,
                                  cfg.data.n_per_class_per_domain, roots[i],
                                  cfg.eval.tau_w);
    return stats_of(std::move(accs));
  };

  TrainConfig full = cfg.train;
  TrainConfig no_dpcl = cfg.train;
  no_dpcl.use_dpcl = false;
  TrainConfig shared = cfg.train;
  shared.shared_classifier = true;

  std::string body = "# ddn-ablation v1 seeds=" + std::to_string(seeds) + "\n";
  const CellStats full_stats = run_method(full);
  body += cell_line("method full", full_stats);
  body += cell_line("method no_dpcl", run_method(no_dpcl));
  body += cell_line("method shared_classifier", run_method(shared));

  std::vector<double> batch_means;
  for (int b : cfg.ablate.batch_sweep) {
    TrainConfig swept = cfg.train;
    swept.batch_n = b;
    const CellStats s = run_method(swept);
    batch_means.push_back(s.mean);
    body += cell_line("batch " + std::to_string(b), s);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < batch_means.size(); ++i)
    if (batch_means[i] < batch_means[i - 1]) monotone = false;
  body += std::string("# batch trend monotone-nondecreasing = ") +
          (monotone ? "true" : "false") + " (reported, not gated)\n";

  fs::create_directories(out);
  tio::write_file(join(out, "ablation.txt"), body);
  write_config_echo(cfg, out);
  write_sidecar(out, "ablate", std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - t0)
                                   .count());
  std::cout << body;
  return 0;
}

int cmd_search(const ExperimentConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const SourceData data = source_data_of(cfg);
  SearchSpace space;
  space.lambdas = cfg.search.lambdas;
  SearchResult result = random_search(cfg.train, cfg.search.trials, space,
                                      data.examples, data.spec.num_domains,
                                      cfg.eval.tau_w);

  std::string trials = "# ddn-search v1 trials=" +
                       std::to_string(result.trials.size()) + "\n";
  for (const auto& t : result.trials)
    trials += "trial " + std::to_string(t.index) +
              " lambda=" + tio::fmt_g17(t.lambda) +
              " val_accuracy=" + tio::fmt_g17(t.val_accuracy) + "\n";
  trials += "best lambda=" + tio::fmt_g17(result.best.lambda) +
            " val_accuracy=" + tio::fmt_g17(result.best_accuracy) + "\n";

  ExperimentConfig best_cfg = cfg;
  best_cfg.train = result.best;

  fs::create_directories(out);
  tio::write_file(join(out, "search_trials.txt"), trials);
  tio::write_file(join(out, "best_config.txt"),
                  "# best val_accuracy = " + tio::fmt_g17(result.best_accuracy) +
                      "\n" + best_cfg.serialize());
  write_config_echo(cfg, out);
  write_sidecar(out, "search", std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - t0)
                                   .count());
  std::cout << "best lambda " << tio::fmt_g17(result.best.lambda)
            << " with validation accuracy "
            << tio::fmt_g17(result.best_accuracy) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"domain disentanglement lab"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "config file (key = value)");
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--override", args.overrides,
                    "section.key=value, repeatable");
    cmd->add_option("--seed", args.seed, "root seed")
        ->each([&](const std::string&) { args.seed_given = true; });
  };

  auto* gen = app.add_subcommand("gen-data", "write spec + datasets");
  auto* tr = app.add_subcommand("train", "train and write checkpoint/bank/log");
  auto* ev = app.add_subcommand("eval", "leave-one-out evaluation report");
  auto* ab = app.add_subcommand("ablate", "method and batch-size ablations");
  auto* se = app.add_subcommand("search", "random search over lambda");
  for (auto* cmd : {gen, tr, ev, ab, se}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve(args);
    if (gen->parsed()) return cmd_gen_data(cfg, args.out_dir);
    if (tr->parsed()) return cmd_train(cfg, args.out_dir);
    if (ev->parsed()) return cmd_eval(cfg, args.out_dir);
    if (ab->parsed()) return cmd_ablate(cfg, args.out_dir);
    if (se->parsed()) return cmd_search(cfg, args.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
