#include "ddn/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "ddn/rng.hpp"
#include "ddn/textio.hpp"

namespace ddn {

namespace tio = textio;

double DomainSpec::gain_at(int domain, int coord) const {
  if (!domain_gains) return 1.0;
  const auto [start, end] = gain_block(domain);
  return (coord >= start && coord < end) ? gains[domain] : 1.0;
}

void validate_mixture(const TargetMixture& mixture, int num_domains) {
  if (static_cast<int>(mixture.weights.size()) != num_domains)
    throw std::invalid_argument("mixture size must equal number of domains");
  double sum = 0.0;
  for (double w : mixture.weights) {
    if (w < 0.0) throw std::invalid_argument("mixture weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("mixture weights must sum to 1");
}

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

DomainSpec make_spec(int num_domains, int num_classes, int dim,
                     double separation, double shift_scale, double noise_sigma,
                     std::uint64_t seed, const SpecOptions& options) {
  if (num_domains < 1) throw std::invalid_argument("make_spec: S >= 1");
  if (num_classes < 2) throw std::invalid_argument("make_spec: M >= 2");
  if (dim < 2) throw std::invalid_argument("make_spec: dim >= 2");
  if (!(separation > 0.0)) throw std::invalid_argument("make_spec: separation > 0");
  if (shift_scale < 0.0) throw std::invalid_argument("make_spec: shift_scale >= 0");
  if (noise_sigma < 0.0) throw std::invalid_argument("make_spec: noise_sigma >= 0");

  DomainSpec spec;
  spec.num_domains = num_domains;
  spec.num_classes = num_classes;
  spec.dim = dim;
  spec.separation = separation;
  spec.shift_scale = shift_scale;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;

  spec.noise_sigmas = options.noise_sigmas.empty()
                          ? std::vector<double>(num_domains, noise_sigma)
                          : options.noise_sigmas;
  if (static_cast<int>(spec.noise_sigmas.size()) != num_domains)
    throw std::invalid_argument("make_spec: noise_sigmas size must be S");
  for (double s : spec.noise_sigmas)
    if (s < 0.0) throw std::invalid_argument("make_spec: noise_sigmas >= 0");

  spec.domain_gains = options.domain_gains;
  if (spec.domain_gains) {
    if (options.gains.empty()) {
      spec.gains.resize(num_domains);
      for (int s = 0; s < num_domains; ++s) spec.gains[s] = s % 3;
    } else {
      spec.gains = options.gains;
    }
    if (static_cast<int>(spec.gains.size()) != num_domains)
      throw std::invalid_argument("make_spec: gains size must be S");
    for (double g : spec.gains)
      if (g != 0.0 && g != 1.0 && g != 2.0)
        throw std::invalid_argument("make_spec: gains must be 0, 1 or 2");
  }

  Rng base(seed);
  Rng proto_rng = base.substream("prototypes");
  const double sep2 = separation * separation;
  constexpr int kMaxAttempts = 1000;
  spec.class_prototypes.reserve(num_classes);
  for (int m = 0; m < num_classes; ++m) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      std::vector<double> cand(dim);
      proto_rng.fill_uniform(cand, -separation, separation);
      placed = true;
      for (const auto& prev : spec.class_prototypes) {
        if (dist2(cand, prev) < sep2) {
          placed = false;
          break;
        }
      }
      if (placed) spec.class_prototypes.push_back(std::move(cand));
    }
    if (!placed)
      throw std::runtime_error(
          "make_spec: cannot place class prototypes at this separation");
  }
  spec.min_prototype_distance = 0.0;
  for (int a = 0; a < num_classes; ++a)
    for (int b = a + 1; b < num_classes; ++b) {
      const double d = std::sqrt(dist2(spec.class_prototypes[a],
                                       spec.class_prototypes[b]));
      if (a == 0 && b == 1)
        spec.min_prototype_distance = d;
      else
        spec.min_prototype_distance = std::min(spec.min_prototype_distance, d);
    }

  Rng shift_rng = base.substream("shifts");
  spec.domain_shifts.reserve(num_domains);
  for (int s = 0; s < num_domains; ++s) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      std::vector<double> dir(dim);
      shift_rng.fill_normal(dir);
      double n2 = 0.0;
      for (double v : dir) n2 += v * v;
      const double nrm = std::sqrt(n2);
      if (nrm < 1e-9) continue;
      for (auto& v : dir) v *= shift_scale / nrm;
      // distinctness only matters when shifts are nonzero; shift_scale = 0
      // is the intentional degenerate no-variation world
      bool ok = true;
      if (shift_scale > 0.0) {
        for (const auto& prev : spec.domain_shifts) {
          if (std::sqrt(dist2(dir, prev)) <= 1e-6 * shift_scale) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        spec.domain_shifts.push_back(std::move(dir));
        break;
      }
    }
    if (static_cast<int>(spec.domain_shifts.size()) != s + 1)
      throw std::runtime_error("make_spec: cannot draw distinct domain shifts");
  }
  return spec;
}

std::vector<Example> sample_source(const DomainSpec& spec,
                                   int n_per_class_per_domain,
                                   std::uint64_t seed) {
  if (n_per_class_per_domain < 1)
    throw std::invalid_argument("sample_source: n >= 1");
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(spec.num_domains) * spec.num_classes *
              n_per_class_per_domain);
  for (int d = 0; d < spec.num_domains; ++d) {
    Rng rng(seed + static_cast<std::uint64_t>(d));
    const double sigma = spec.noise_sigmas[d];
    for (int m = 0; m < spec.num_classes; ++m) {
      for (int i = 0; i < n_per_class_per_domain; ++i) {
        Example ex;
        ex.x.resize(spec.dim);
        for (int j = 0; j < spec.dim; ++j) {
          double v = spec.gain_at(d, j) * spec.class_prototypes[m][j] +
                     spec.domain_shifts[d][j];
          if (sigma > 0.0) v += sigma * rng.normal();
          ex.x[j] = v;
        }
        ex.label = m;
        ex.domain = d;
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::vector<Example> sample_target(const DomainSpec& spec,
                                   const TargetMixture& mixture,
                                   int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("sample_target: n >= 1");
  validate_mixture(mixture, spec.num_domains);

  // mixture-aggregated shift, gain profile and noise scale
  std::vector<double> shift(spec.dim, 0.0);
  std::vector<double> gain(spec.dim, 0.0);
  double sigma = 0.0;
  for (int s = 0; s < spec.num_domains; ++s) {
    const double w = mixture.weights[s];
    for (int j = 0; j < spec.dim; ++j) {
      shift[j] += w * spec.domain_shifts[s][j];
      gain[j] += w * spec.gain_at(s, j);
    }
    sigma += w * spec.noise_sigmas[s];
  }

  Rng rng = Rng(seed).substream("target");
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(spec.num_classes) * n_per_class);
  for (int m = 0; m < spec.num_classes; ++m) {
    for (int i = 0; i < n_per_class; ++i) {
      Example ex;
      ex.x.resize(spec.dim);
      for (int j = 0; j < spec.dim; ++j) {
        double v = gain[j] * spec.class_prototypes[m][j] + shift[j];
        if (sigma > 0.0) v += sigma * rng.normal();
        ex.x[j] = v;
      }
      ex.label = m;
      ex.domain = kTargetDomain;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::string serialize_spec(const DomainSpec& spec) {
  std::string s;
  s += "format = ddn-spec-v1\n";
  s += "s = " + std::to_string(spec.num_domains) + "\n";
  s += "m = " + std::to_string(spec.num_classes) + "\n";
  s += "dim = " + std::to_string(spec.dim) + "\n";
  s += "separation = " + tio::fmt_g17(spec.separation) + "\n";
  s += "shift_scale = " + tio::fmt_g17(spec.shift_scale) + "\n";
  s += "noise_sigma = " + tio::fmt_g17(spec.noise_sigma) + "\n";
  s += "noise_sigmas = " + tio::join_csv(spec.noise_sigmas) + "\n";
  s += std::string("domain_gains = ") + (spec.domain_gains ? "true" : "false") + "\n";
  if (spec.domain_gains) s += "gains = " + tio::join_csv(spec.gains) + "\n";
  s += "seed = " + std::to_string(spec.seed) + "\n";
  s += "min_prototype_distance = " + tio::fmt_g17(spec.min_prototype_distance) + "\n";
  for (int m = 0; m < spec.num_classes; ++m)
    s += "prototype." + std::to_string(m) + " = " +
         tio::join_csv(spec.class_prototypes[m]) + "\n";
  for (int d = 0; d < spec.num_domains; ++d)
    s += "shift." + std::to_string(d) + " = " +
         tio::join_csv(spec.domain_shifts[d]) + "\n";
  return s;
}

std::uint64_t spec_hash(const DomainSpec& spec) {
  return tio::fnv1a64(serialize_spec(spec));
}

DomainSpec parse_spec(const std::string& text) {
  DomainSpec spec;
  std::vector<std::pair<std::string, std::string>> kvs;
  for (const auto& raw : tio::split(text, '\n')) {
    const auto line = tio::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error("spec: malformed line: " + std::string(line));
    kvs.emplace_back(std::string(tio::trim(line.substr(0, eq))),
                     std::string(tio::trim(line.substr(eq + 1))));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    for (const auto& [k, v] : kvs)
      if (k == key) return v;
    throw std::runtime_error("spec: missing key " + key);
  };
  if (get("format") != "ddn-spec-v1")
    throw std::runtime_error("spec: unknown format");
  spec.num_domains = static_cast<int>(tio::parse_u64(get("s")));
  spec.num_classes = static_cast<int>(tio::parse_u64(get("m")));
  spec.dim = static_cast<int>(tio::parse_u64(get("dim")));
  spec.separation = tio::parse_double(get("separation"));
  spec.shift_scale = tio::parse_double(get("shift_scale"));
  spec.noise_sigma = tio::parse_double(get("noise_sigma"));
  spec.noise_sigmas = tio::parse_csv(get("noise_sigmas"));
  spec.domain_gains = get("domain_gains") == "true";
  if (spec.domain_gains) spec.gains = tio::parse_csv(get("gains"));
  spec.seed = tio::parse_u64(get("seed"));
  spec.min_prototype_distance = tio::parse_double(get("min_prototype_distance"));
  spec.class_prototypes.resize(spec.num_classes);
  for (int m = 0; m < spec.num_classes; ++m)
    spec.class_prototypes[m] = tio::parse_csv(get("prototype." + std::to_string(m)));
  spec.domain_shifts.resize(spec.num_domains);
  for (int d = 0; d < spec.num_domains; ++d)
    spec.domain_shifts[d] = tio::parse_csv(get("shift." + std::to_string(d)));
  return spec;
}

void save_spec(const std::string& path, const DomainSpec& spec) {
  const std::string body = serialize_spec(spec);
  tio::write_file(path, body + "hash = " + tio::fmt_hash(tio::fnv1a64(body)) + "\n");
}

DomainSpec load_spec(const std::string& path) {
  std::string text = tio::read_file(path);
  const auto pos = text.rfind("hash = ");
  if (pos == std::string::npos) throw std::runtime_error("spec: missing hash");
  const std::string body = text.substr(0, pos);
  const std::uint64_t want =
      tio::parse_u64("0x" + std::string(tio::trim(text.substr(pos + 7))));
  if (tio::fnv1a64(body) != want)
    throw std::runtime_error("spec: hash mismatch in " + path);
  return parse_spec(body);
}

void save_dataset(const std::string& path, const std::vector<Example>& examples,
                  std::uint64_t hash, int dim) {
  std::string out = "# ddn-dataset spec=" + tio::fmt_hash(hash) +
                    " count=" + std::to_string(examples.size()) +
                    " dim=" + std::to_string(dim) + "\n";
  for (const auto& ex : examples) {
    out += tio::join_csv(ex.x);
    out += '\t';
    out += std::to_string(ex.label);
    out += '\t';
    out += std::to_string(ex.domain);
    out += '\n';
  }
  tio::write_file(path, out);
}

LoadedDataset load_dataset(const std::string& path) {
  const std::string text = tio::read_file(path);
  LoadedDataset ds;
  bool header = false;
  for (const auto& raw : tio::split(text, '\n')) {
    const auto line = tio::trim(raw);
    if (line.empty()) continue;
    if (!header) {
      if (line.rfind("# ddn-dataset", 0) != 0)
        throw std::runtime_error("dataset: missing header: " + path);
      for (const auto& tok : tio::split(line, ' ')) {
        const auto t = tio::trim(tok);
        if (t.rfind("spec=", 0) == 0)
          ds.spec_hash = tio::parse_u64("0x" + std::string(t.substr(5)));
        else if (t.rfind("dim=", 0) == 0)
          ds.dim = static_cast<int>(tio::parse_u64(t.substr(4)));
      }
      header = true;
      continue;
    }
    const auto fields = tio::split(line, '\t');
    if (fields.size() != 3)
      throw std::runtime_error("dataset: malformed row in " + path);
    Example ex;
    ex.x = tio::parse_csv(fields[0]);
    ex.label = static_cast<int>(std::stol(fields[1]));
    ex.domain = static_cast<int>(std::stol(fields[2]));
    if (static_cast<int>(ex.x.size()) != ds.dim)
      throw std::runtime_error("dataset: row dim mismatch in " + path);
    if (ex.label < 0 || ex.domain < kTargetDomain)
      throw std::runtime_error("dataset: invalid label or domain in " + path);
    for (double v : ex.x)
      if (!std::isfinite(v))
        throw std::runtime_error("dataset: non-finite feature in " + path);
    ds.examples.push_back(std::move(ex));
  }
  if (!header) throw std::runtime_error("dataset: empty file: " + path);
  return ds;
}

}  // namespace ddn
