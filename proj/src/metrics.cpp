#include "ddn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddn/kernels.hpp"
#include "ddn/rng.hpp"
#include "ddn/tensor.hpp"
#include "ddn/textio.hpp"

namespace ddn {

namespace tio = textio;

namespace {

void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<std::vector<double>> normalize_rows(
    const std::vector<std::vector<double>>& embeddings) {
  std::vector<std::vector<double>> z = embeddings;
  for (auto& row : z) {
    const double nrm =
        std::sqrt(kern::active_kernels().dot(row.data(), row.data(), row.size()));
    check_arg(nrm > 1e-12, "metrics: zero-norm embedding");
    for (auto& v : row) v /= nrm;
  }
  return z;
}

// squared distance of unit vectors via the cosine identity
double unit_dist2(const std::vector<double>& a, const std::vector<double>& b) {
  return 2.0 - 2.0 * kern::active_kernels().dot(a.data(), b.data(), a.size());
}

}  // namespace

double accuracy(const std::vector<int>& predicted,
                const std::vector<int>& labels) {
  check_arg(!predicted.empty() && predicted.size() == labels.size(),
            "accuracy: nonempty equal-length inputs required");
  int correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double alignment(const std::vector<std::vector<double>>& embeddings,
                 const std::vector<int>& labels) {
  check_arg(embeddings.size() == labels.size(),
            "alignment: one label per embedding");
  const auto z = normalize_rows(embeddings);
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      if (labels[i] != labels[j]) continue;
      sum += unit_dist2(z[i], z[j]);
      ++pairs;
    }
  }
  check_arg(pairs > 0, "alignment: no positive pair");
  return sum / static_cast<double>(pairs);
}

double uniformity(const std::vector<std::vector<double>>& embeddings) {
  check_arg(embeddings.size() >= 2, "uniformity: needs at least two embeddings");
  const auto z = normalize_rows(embeddings);
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      sum += std::exp(-2.0 * unit_dist2(z[i], z[j]));
      ++pairs;
    }
  }
  return std::log(sum / static_cast<double>(pairs));
}

std::vector<std::vector<double>> encode_dataset(
    const DdnModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) return {};
  const int dim = model.config().input_dim;
  const int emb = model.config().emb_dim;
  std::vector<double> flat;
  flat.reserve(examples.size() * dim);
  for (const auto& ex : examples) {
    check_arg(static_cast<int>(ex.x.size()) == dim,
              "encode_dataset: feature dimension mismatch");
    flat.insert(flat.end(), ex.x.begin(), ex.x.end());
  }
  Tape tape;
  auto out = model.encode(
      tape, make_tensor({static_cast<std::int64_t>(examples.size()), dim},
                        std::move(flat)));
  std::vector<std::vector<double>> rows(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i)
    rows[i].assign(out->data.begin() + i * emb, out->data.begin() + (i + 1) * emb);
  return rows;
}

std::vector<double> domain_weight_profile(const DdnModel& model,
                                          const PrototypeBank& bank,
                                          const std::vector<Example>& target,
                                          int n, std::uint64_t seed,
                                          double tau_w) {
  check_arg(n >= 1, "domain_weight_profile: n >= 1");
  check_arg(target.size() >= static_cast<std::size_t>(n),
            "domain_weight_profile: dataset smaller than n");
  std::vector<std::size_t> idx(target.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  std::vector<Example> chosen;
  chosen.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    chosen.push_back(target[idx[i]]);
  }
  const auto preds = predict_batch(model, bank, chosen, tau_w);
  const int S = model.config().num_domains;
  std::vector<double> profile(S, 0.0);
  for (const auto& p : preds)
    for (int s = 0; s < S; ++s) profile[s] += p.weights.w[s];
  for (auto& v : profile) v /= static_cast<double>(n);
  return profile;
}

double sliced_w1(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b, int n_projections,
                 std::uint64_t seed) {
  check_arg(!a.empty() && !b.empty(), "sliced_w1: empty sample set");
  check_arg(n_projections >= 1, "sliced_w1: n_projections >= 1");
  const std::size_t dim = a.front().size();
  for (const auto& row : a)
    check_arg(row.size() == dim, "sliced_w1: ragged samples");
  for (const auto& row : b)
    check_arg(row.size() == dim, "sliced_w1: dimension mismatch");

  Rng base(seed);
  // subsample the larger set down to the smaller, without replacement
  auto subsample = [&](const std::vector<std::vector<double>>& src,
                       std::size_t m) {
    std::vector<std::size_t> idx(src.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng = base.substream("subsample");
    std::vector<const std::vector<double>*> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + rng.below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(&src[idx[i]]);
    }
    return out;
  };
  const std::size_t m = std::min(a.size(), b.size());
  std::vector<const std::vector<double>*> pa, pb;
  if (a.size() > m) {
    pa = subsample(a, m);
  } else {
    for (const auto& row : a) pa.push_back(&row);
  }
  if (b.size() > m) {
    pb = subsample(b, m);
  } else {
    for (const auto& row : b) pb.push_back(&row);
  }

  Rng proj_rng = base.substream("projections");
  std::vector<double> dir(dim), ua(m), ub(m);
  double total = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    double nrm = 0.0;
    do {
      proj_rng.fill_normal(dir);
      nrm = std::sqrt(kern::active_kernels().dot(dir.data(), dir.data(), dim));
    } while (nrm < 1e-9);
    for (auto& v : dir) v /= nrm;
    for (std::size_t i = 0; i < m; ++i) {
      ua[i] = kern::active_kernels().dot(dir.data(), pa[i]->data(), dim);
      ub[i] = kern::active_kernels().dot(dir.data(), pb[i]->data(), dim);
    }
    std::sort(ua.begin(), ua.end());
    std::sort(ub.begin(), ub.end());
    double cost = 0.0;
    for (std::size_t i = 0; i < m; ++i) cost += std::abs(ua[i] - ub[i]);
    total += cost / static_cast<double>(m);
  }
  return total / static_cast<double>(n_projections);
}

void export_embeddings(const DdnModel& model,
                       const std::vector<Example>& examples,
                       const std::string& path) {
  const auto rows = encode_dataset(model, examples);
  std::string out = "# ddn-embeddings emb_dim=" +
                    std::to_string(model.config().emb_dim) +
                    " count=" + std::to_string(examples.size()) + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (double v : rows[i]) {
      out += tio::fmt_g17(v);
      out += '\t';
    }
    out += std::to_string(examples[i].label);
    out += '\t';
    out += std::to_string(examples[i].domain);
    out += '\n';
  }
  tio::write_file(path, out);
}

std::string serialize_eval_report(const EvalReport& report) {
  std::string out = "# ddn-eval-report v1\n";
  for (std::size_t k = 0; k < report.per_domain_accuracy.size(); ++k)
    out += "accuracy.domain." + std::to_string(k) + " = " +
           tio::fmt_g17(report.per_domain_accuracy[k]) + "\n";
  out += "accuracy.avg = " + tio::fmt_g17(report.mean_accuracy) + "\n";
  out += "alignment = " + tio::fmt_g17(report.alignment_value) + "\n";
  out += "uniformity = " + tio::fmt_g17(report.uniformity_value) + "\n";
  out += "weight_profile = " + tio::join_csv(report.weight_profile) + "\n";
  for (std::size_t i = 0; i < report.discrepancy_matrix.size(); ++i)
    out += "discrepancy." + std::to_string(i) + " = " +
           tio::join_csv(report.discrepancy_matrix[i]) + "\n";
  return out;
}

void save_eval_report(const std::string& path, const EvalReport& report) {
  tio::write_file(path, serialize_eval_report(report));
}

}  // namespace ddn
