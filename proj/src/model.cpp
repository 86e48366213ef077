#include "ddn/model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "ddn/textio.hpp"

namespace ddn {

namespace tio = textio;

namespace {

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

AffineParam make_affine(int in, int out) {
  return {make_tensor({in, out}, true), make_tensor({out}, true)};
}

void glorot_fill(const TensorPtr& w, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  rng.fill_uniform(w->data, -a, a);
}

std::vector<int> layer_widths(const ModelConfig& cfg) {
  std::vector<int> widths;
  widths.push_back(cfg.input_dim);
  for (int h : cfg.hidden) widths.push_back(h);
  widths.push_back(cfg.emb_dim);
  return widths;
}

}  // namespace

DdnModel DdnModel::make_empty(const ModelConfig& cfg) {
  check(cfg.input_dim >= 1 && cfg.emb_dim >= 1, "model: positive dims required");
  check(cfg.num_classes >= 2, "model: at least two classes");
  check(cfg.num_domains >= 1, "model: at least one domain");
  for (int h : cfg.hidden) check(h >= 1, "model: hidden widths >= 1");

  DdnModel model;
  model.cfg_ = cfg;
  const auto widths = layer_widths(cfg);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    model.encoder.push_back(make_affine(widths[i], widths[i + 1]));

  AffineParam shared;
  if (cfg.shared_classifier) shared = make_affine(cfg.emb_dim, cfg.num_classes);
  for (int s = 0; s < cfg.num_domains; ++s) {
    DecHead head;
    head.classifier = cfg.shared_classifier
                          ? shared
                          : make_affine(cfg.emb_dim, cfg.num_classes);
    head.proj1 = make_affine(cfg.emb_dim, cfg.emb_dim);
    head.proj2 = make_affine(cfg.emb_dim, cfg.emb_dim);
    model.heads.push_back(std::move(head));
  }
  return model;
}

DdnModel DdnModel::init(const ModelConfig& cfg, Rng& rng) {
  DdnModel model = make_empty(cfg);
  const auto widths = layer_widths(cfg);
  for (std::size_t i = 0; i < model.encoder.size(); ++i)
    glorot_fill(model.encoder[i].w, widths[i], widths[i + 1], rng);
  if (cfg.shared_classifier)
    glorot_fill(model.heads[0].classifier.w, cfg.emb_dim, cfg.num_classes, rng);
  for (int s = 0; s < cfg.num_domains; ++s) {
    if (!cfg.shared_classifier)
      glorot_fill(model.heads[s].classifier.w, cfg.emb_dim, cfg.num_classes,
                  rng);
    glorot_fill(model.heads[s].proj1.w, cfg.emb_dim, cfg.emb_dim, rng);
    glorot_fill(model.heads[s].proj2.w, cfg.emb_dim, cfg.emb_dim, rng);
  }
  return model;
}

TensorPtr DdnModel::encode(Tape& tape, const TensorPtr& x) const {
  check(x->is_matrix() && x->shape[1] == cfg_.input_dim,
        "encode: input must be [B, input_dim]");
  TensorPtr h = x;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    h = tape.add(tape.matmul(h, encoder[i].w), encoder[i].b);
    if (i + 1 < encoder.size()) h = tape.relu(h);
  }
  return h;
}

TensorPtr DdnModel::classify(Tape& tape, int domain, const TensorPtr& emb) const {
  check(domain >= 0 && domain < cfg_.num_domains,
        "classify: domain index out of range");
  const auto& head = heads[domain].classifier;
  return tape.add(tape.matmul(emb, head.w), head.b);
}

TensorPtr DdnModel::project(Tape& tape, int domain, const TensorPtr& emb) const {
  check(domain >= 0 && domain < cfg_.num_domains,
        "project: domain index out of range");
  const auto& head = heads[domain];
  TensorPtr h = tape.relu(tape.add(tape.matmul(emb, head.proj1.w), head.proj1.b));
  return tape.add(tape.matmul(h, head.proj2.w), head.proj2.b);
}

TensorPtr DdnModel::prototype(Tape& tape, int domain,
                              const TensorPtr& emb_batch) const {
  check(emb_batch->is_matrix() && emb_batch->shape[1] == cfg_.emb_dim,
        "prototype: embeddings must be [N, emb_dim]");
  return tape.mean_axis(project(tape, domain, emb_batch), 0);
}

std::vector<TensorPtr> DdnModel::parameters() const {
  std::vector<TensorPtr> out;
  std::set<const Tensor*> seen;
  auto push = [&](const TensorPtr& t) {
    if (seen.insert(t.get()).second) out.push_back(t);
  };
  for (const auto& layer : encoder) {
    push(layer.w);
    push(layer.b);
  }
  for (const auto& head : heads) {
    push(head.classifier.w);
    push(head.classifier.b);
    push(head.proj1.w);
    push(head.proj1.b);
    push(head.proj2.w);
    push(head.proj2.b);
  }
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> DdnModel::named_parameters()
    const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    out.emplace_back("encoder." + std::to_string(i) + ".w", encoder[i].w);
    out.emplace_back("encoder." + std::to_string(i) + ".b", encoder[i].b);
  }
  if (cfg_.shared_classifier) {
    out.emplace_back("classifier.w", heads[0].classifier.w);
    out.emplace_back("classifier.b", heads[0].classifier.b);
  }
  for (std::size_t s = 0; s < heads.size(); ++s) {
    const std::string base = "head." + std::to_string(s) + ".";
    if (!cfg_.shared_classifier) {
      out.emplace_back(base + "classifier.w", heads[s].classifier.w);
      out.emplace_back(base + "classifier.b", heads[s].classifier.b);
    }
    out.emplace_back(base + "proj1.w", heads[s].proj1.w);
    out.emplace_back(base + "proj1.b", heads[s].proj1.b);
    out.emplace_back(base + "proj2.w", heads[s].proj2.w);
    out.emplace_back(base + "proj2.b", heads[s].proj2.b);
  }
  return out;
}

void DdnModel::zero_grad() const {
  for (const auto& p : parameters()) p->zero_grad();
}

std::size_t DdnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p->data.size();
  return n;
}

TensorPtr dpcl_loss(Tape& tape, const DdnModel& model,
                    const std::vector<TensorPtr>& domain_embeddings,
                    int anchor_domain, const DpclOptions& options) {
  const int S = model.config().num_domains;
  check(static_cast<int>(domain_embeddings.size()) == S,
        "dpcl: one embedding batch per source domain required");
  check(anchor_domain >= 0 && anchor_domain < S,
        "dpcl: anchor domain out of range");
  check(options.tau > 0.0, "dpcl: tau must be positive");
  const auto& anchor = domain_embeddings[anchor_domain];
  check(anchor->is_matrix() && anchor->shape[1] == model.config().emb_dim,
        "dpcl: embeddings must be [N, emb_dim]");
  const std::int64_t n = anchor->shape[0];
  for (const auto& e : domain_embeddings)
    check(e->is_matrix() && e->shape[0] == n && e->shape[1] == anchor->shape[1],
          "dpcl: all domain batches must share [N, emb_dim]");

  TensorPtr proto = model.prototype(tape, anchor_domain, anchor);
  if (options.stop_grad_prototype)
    proto = make_tensor(proto->shape, proto->data);

  const double z_scale = options.paper_exact
                             ? static_cast<double>(n)
                             : 1.0 / options.tau;
  std::vector<TensorPtr> logits(S);
  for (int s = 0; s < S; ++s) {
    TensorPtr sims = tape.cosine_similarity(domain_embeddings[s], proto);
    logits[s] = tape.scalar_mul(tape.mean_axis(sims, 0), z_scale);
  }
  TensorPtr lse = tape.logsumexp(tape.concat(logits));
  return tape.add(lse, tape.scalar_mul(logits[anchor_domain], -1.0));
}

TensorPtr classification_loss_from_logits(
    Tape& tape, const std::vector<TensorPtr>& domain_logits,
    const std::vector<std::vector<int>>& domain_labels) {
  check(!domain_logits.empty(), "classification: at least one domain");
  check(domain_logits.size() == domain_labels.size(),
        "classification: logits/labels domain count mismatch");
  for (const auto& labels : domain_labels)
    for (int y : labels)
      check(y >= 0, "classification: target-tagged example rejected");
  TensorPtr acc;
  for (std::size_t s = 0; s < domain_logits.size(); ++s) {
    TensorPtr l = tape.nll_softmax(domain_logits[s], domain_labels[s]);
    acc = acc ? tape.add(acc, l) : l;
  }
  return tape.scalar_mul(acc, 1.0 / static_cast<double>(domain_logits.size()));
}

TensorPtr classification_loss(Tape& tape, const DdnModel& model,
                              const std::vector<TensorPtr>& domain_embeddings,
                              const std::vector<std::vector<int>>& domain_labels) {
  check(static_cast<int>(domain_embeddings.size()) == model.config().num_domains,
        "classification: one batch per source domain required");
  std::vector<TensorPtr> logits;
  logits.reserve(domain_embeddings.size());
  for (std::size_t s = 0; s < domain_embeddings.size(); ++s)
    logits.push_back(model.classify(tape, static_cast<int>(s),
                                    domain_embeddings[s]));
  return classification_loss_from_logits(tape, logits, domain_labels);
}

LossParts total_loss(Tape& tape, const DdnModel& model,
                     const std::vector<TensorPtr>& domain_embeddings,
                     const std::vector<std::vector<int>>& domain_labels,
                     double lambda, bool use_dpcl, const DpclOptions& options) {
  check(lambda >= 0.0, "total_loss: lambda >= 0");
  LossParts parts;
  parts.classification =
      classification_loss(tape, model, domain_embeddings, domain_labels);
  if (!use_dpcl) {
    parts.total = parts.classification;
    return parts;
  }
  const int S = model.config().num_domains;
  TensorPtr acc;
  for (int s = 0; s < S; ++s) {
    TensorPtr l = dpcl_loss(tape, model, domain_embeddings, s, options);
    acc = acc ? tape.add(acc, l) : l;
  }
  parts.dpcl = tape.scalar_mul(acc, 1.0 / static_cast<double>(S));
  parts.total =
      tape.add(parts.classification, tape.scalar_mul(parts.dpcl, lambda));
  return parts;
}

void save_checkpoint(const std::string& path, const DdnModel& model,
                     std::uint64_t spec_hash,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  const auto& cfg = model.config();
  std::string out = "# ddn-checkpoint v1\n";
  out += "spec_hash = " + tio::fmt_hash(spec_hash) + "\n";
  out += "input_dim = " + std::to_string(cfg.input_dim) + "\n";
  out += "emb_dim = " + std::to_string(cfg.emb_dim) + "\n";
  out += "num_classes = " + std::to_string(cfg.num_classes) + "\n";
  out += "num_domains = " + std::to_string(cfg.num_domains) + "\n";
  out += "hidden =";
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i)
    out += (i ? "," : " ") + std::to_string(cfg.hidden[i]);
  out += "\n";
  out += std::string("shared_classifier = ") +
         (cfg.shared_classifier ? "true" : "false") + "\n";
  for (const auto& [k, v] : meta) out += "meta." + k + " = " + v + "\n";
  for (const auto& [name, p] : model.named_parameters()) {
    out += "param " + name + " ";
    for (std::size_t i = 0; i < p->shape.size(); ++i)
      out += (i ? "x" : "") + std::to_string(p->shape[i]);
    out += " ";
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      if (i) out += ',';
      out += tio::fmt_hex(p->data[i]);
    }
    out += "\n";
  }
  tio::write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string text = tio::read_file(path);
  ModelConfig cfg;
  std::uint64_t spec_hash = 0;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, std::vector<double>>> params;
  for (const auto& raw : tio::split(text, '\n')) {
    const auto line = tio::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.rfind("param ", 0) == 0) {
      const auto fields = tio::split(line.substr(6), ' ');
      if (fields.size() != 3)
        throw std::runtime_error("checkpoint: malformed param line");
      std::vector<double> vals;
      for (const auto& h : tio::split(fields[2], ','))
        vals.push_back(tio::parse_double(h));
      params.emplace_back(fields[0], std::move(vals));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error("checkpoint: malformed line");
    const std::string key(tio::trim(line.substr(0, eq)));
    const std::string val(tio::trim(line.substr(eq + 1)));
    if (key == "spec_hash") spec_hash = tio::parse_u64("0x" + val);
    else if (key == "input_dim") cfg.input_dim = static_cast<int>(tio::parse_u64(val));
    else if (key == "emb_dim") cfg.emb_dim = static_cast<int>(tio::parse_u64(val));
    else if (key == "num_classes") cfg.num_classes = static_cast<int>(tio::parse_u64(val));
    else if (key == "num_domains") cfg.num_domains = static_cast<int>(tio::parse_u64(val));
    else if (key == "hidden") {
      cfg.hidden.clear();
      if (!val.empty())
        for (const auto& h : tio::split(val, ','))
          cfg.hidden.push_back(static_cast<int>(tio::parse_u64(h)));
    } else if (key == "shared_classifier") cfg.shared_classifier = val == "true";
    else if (key.rfind("meta.", 0) == 0) meta.emplace_back(key.substr(5), val);
    else throw std::runtime_error("checkpoint: unknown key " + key);
  }
  LoadedCheckpoint out{DdnModel::make_empty(cfg), spec_hash, std::move(meta)};
  auto named = out.model.named_parameters();
  if (named.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != params[i].first)
      throw std::runtime_error("checkpoint: unexpected parameter " +
                               params[i].first);
    if (named[i].second->data.size() != params[i].second.size())
      throw std::runtime_error("checkpoint: size mismatch for " +
                               params[i].first);
    named[i].second->data = params[i].second;
  }
  return out;
}

void save_bank(const std::string& path, const PrototypeBank& bank,
               std::uint64_t spec_hash) {
  std::string out = "# ddn-bank v1\n";
  out += "spec_hash = " + tio::fmt_hash(spec_hash) + "\n";
  out += std::string("provenance = ") +
         (bank.provenance == PrototypeBank::Provenance::kFrozenFullPass
              ? "frozen-full-pass"
              : "batch-dynamic") +
         "\n";
  for (std::size_t s = 0; s < bank.q.size(); ++s) {
    out += "q." + std::to_string(s) + " = ";
    for (std::size_t i = 0; i < bank.q[s].size(); ++i) {
      if (i) out += ',';
      out += tio::fmt_hex(bank.q[s][i]);
    }
    out += "\n";
  }
  tio::write_file(path, out);
}

PrototypeBank load_bank(const std::string& path, std::uint64_t* spec_hash_out) {
  const std::string text = tio::read_file(path);
  PrototypeBank bank;
  for (const auto& raw : tio::split(text, '\n')) {
    const auto line = tio::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error("bank: malformed line");
    const std::string key(tio::trim(line.substr(0, eq)));
    const std::string val(tio::trim(line.substr(eq + 1)));
    if (key == "spec_hash") {
      if (spec_hash_out) *spec_hash_out = tio::parse_u64("0x" + val);
    } else if (key == "provenance") {
      bank.provenance = val == "frozen-full-pass"
                            ? PrototypeBank::Provenance::kFrozenFullPass
                            : PrototypeBank::Provenance::kBatchDynamic;
    } else if (key.rfind("q.", 0) == 0) {
      const std::size_t s = tio::parse_u64(key.substr(2));
      if (bank.q.size() <= s) bank.q.resize(s + 1);
      std::vector<double> vals;
      for (const auto& h : tio::split(val, ','))
        vals.push_back(tio::parse_double(h));
      bank.q[s] = std::move(vals);
    } else {
      throw std::runtime_error("bank: unknown key " + key);
    }
  }
  return bank;
}

}  // namespace ddn
