#include "ddn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddn/rng.hpp"

namespace ddn {

namespace {

struct Instance {
  std::vector<std::vector<std::int64_t>> shapes;
  std::vector<std::vector<double>> values;
  OpArgs args;
};

std::vector<double> draw(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  rng.fill_uniform(v, lo, hi);
  return v;
}

// magnitude in [0.1, 1], random sign: keeps relu away from its kink
std::vector<double> draw_off_kink(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) {
    const double mag = rng.uniform(0.1, 1.0);
    x = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return v;
}

// rows resampled until every norm is comfortably above the rejection floor
std::vector<double> draw_rows_normed(Rng& rng, std::size_t rows,
                                     std::size_t d) {
  std::vector<double> v(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      double n2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        v[i * d + j] = rng.uniform(-1.0, 1.0);
        n2 += v[i * d + j] * v[i * d + j];
      }
      if (std::sqrt(n2) > 0.3) break;
    }
  }
  return v;
}

Instance make_instance(OpKind kind, Rng& rng) {
  Instance inst;
  auto dim = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng.below(hi - lo + 1));
  };
  switch (kind) {
    case OpKind::kMatMul: {
      const auto b = dim(1, 4), k = dim(1, 5), m = dim(1, 5);
      inst.shapes = {{b, k}, {k, m}};
      inst.values = {draw(rng, b * k, -1, 1), draw(rng, k * m, -1, 1)};
      break;
    }
    case OpKind::kAdd: {
      const auto mode = rng.below(3);
      if (mode == 0) {
        const auto n = dim(1, 8);
        inst.shapes = {{n}, {n}};
        inst.values = {draw(rng, n, -1, 1), draw(rng, n, -1, 1)};
      } else if (mode == 1) {
        const auto b = dim(1, 4), d = dim(1, 5);
        inst.shapes = {{b, d}, {b, d}};
        inst.values = {draw(rng, b * d, -1, 1), draw(rng, b * d, -1, 1)};
      } else {
        const auto b = dim(1, 4), d = dim(1, 5);
        inst.shapes = {{b, d}, {d}};
        inst.values = {draw(rng, b * d, -1, 1), draw(rng, d, -1, 1)};
      }
      break;
    }
    case OpKind::kScalarMul: {
      const auto n = dim(1, 8);
      inst.shapes = {{n}};
      inst.values = {draw(rng, n, -1, 1)};
      inst.args.scalar = rng.uniform(-2.0, 2.0);
      break;
    }
    case OpKind::kRelu: {
      const auto n = dim(1, 10);
      inst.shapes = {{n}};
      inst.values = {draw_off_kink(rng, n)};
      break;
    }
    case OpKind::kMeanAxis: {
      if (rng.below(2) == 0) {
        const auto n = dim(1, 8);
        inst.shapes = {{n}};
        inst.values = {draw(rng, n, -1, 1)};
        inst.args.axis = 0;
      } else {
        const auto b = dim(1, 4), d = dim(1, 5);
        inst.shapes = {{b, d}};
        inst.values = {draw(rng, b * d, -1, 1)};
        inst.args.axis = static_cast<int>(rng.below(2));
      }
      break;
    }
    case OpKind::kL2Normalize: {
      const auto b = dim(1, 4), d = dim(2, 6);
      if (rng.below(2) == 0) {
        inst.shapes = {{d}};
        inst.values = {draw_rows_normed(rng, 1, d)};
      } else {
        inst.shapes = {{b, d}};
        inst.values = {draw_rows_normed(rng, b, d)};
      }
      break;
    }
    case OpKind::kCosineSimilarity: {
      const auto b = dim(1, 4), d = dim(2, 6);
      const auto mode = rng.below(3);
      if (mode == 0) {
        inst.shapes = {{b, d}, {b, d}};
        inst.values = {draw_rows_normed(rng, b, d),
                       draw_rows_normed(rng, b, d)};
      } else if (mode == 1) {
        inst.shapes = {{b, d}, {d}};
        inst.values = {draw_rows_normed(rng, b, d),
                       draw_rows_normed(rng, 1, d)};
      } else {
        inst.shapes = {{d}, {d}};
        inst.values = {draw_rows_normed(rng, 1, d),
                       draw_rows_normed(rng, 1, d)};
      }
      break;
    }
    case OpKind::kExp: {
      const auto n = dim(1, 8);
      inst.shapes = {{n}};
      inst.values = {draw(rng, n, -1, 1)};
      break;
    }
    case OpKind::kLog: {
      const auto n = dim(1, 8);
      inst.shapes = {{n}};
      inst.values = {draw(rng, n, 0.2, 2.0)};
      break;
    }
    case OpKind::kLogSumExp: {
      if (rng.below(2) == 0) {
        const auto n = dim(1, 8);
        inst.shapes = {{n}};
        inst.values = {draw(rng, n, -1, 1)};
      } else {
        const auto b = dim(1, 4), d = dim(1, 5);
        inst.shapes = {{b, d}};
        inst.values = {draw(rng, b * d, -1, 1)};
      }
      break;
    }
    case OpKind::kConcat: {
      const auto parts = dim(1, 3);
      for (std::int64_t p = 0; p < parts; ++p) {
        const auto n = dim(1, 5);
        inst.shapes.push_back({n});
        inst.values.push_back(draw(rng, n, -1, 1));
      }
      break;
    }
    case OpKind::kSoftmax: {
      const auto b = dim(1, 4), d = dim(2, 6);
      if (rng.below(2) == 0) {
        inst.shapes = {{d}};
        inst.values = {draw(rng, d, -1, 1)};
      } else {
        inst.shapes = {{b, d}};
        inst.values = {draw(rng, b * d, -1, 1)};
      }
      break;
    }
    case OpKind::kNllSoftmax: {
      const auto b = dim(1, 5), m = dim(2, 6);
      inst.shapes = {{b, m}};
      inst.values = {draw(rng, b * m, -1, 1)};
      inst.args.labels.resize(b);
      for (auto& y : inst.args.labels) y = static_cast<int>(rng.below(m));
      break;
    }
    case OpKind::kWeightedSum: {
      const auto n = dim(1, 8);
      inst.shapes = {{n}};
      inst.values = {draw(rng, n, -1, 1)};
      inst.args.weights = draw(rng, n, -1, 1);
      break;
    }
  }
  return inst;
}

double forward_scalar(OpKind kind, const Instance& inst,
                      const std::vector<double>& proj, bool with_grad,
                      std::vector<std::vector<double>>* grads_out) {
  Tape tape;
  std::vector<TensorPtr> inputs;
  inputs.reserve(inst.shapes.size());
  for (std::size_t i = 0; i < inst.shapes.size(); ++i)
    inputs.push_back(make_tensor(inst.shapes[i], inst.values[i], with_grad));
  TensorPtr out = tape.apply(kind, inputs, inst.args);
  TensorPtr loss = tape.weighted_sum(out, proj);
  if (with_grad) {
    tape.backward(loss);
    grads_out->clear();
    for (const auto& in : inputs) grads_out->push_back(in->grad);
  }
  return loss->value();
}

std::size_t out_numel(OpKind kind, const Instance& inst) {
  Tape tape;
  std::vector<TensorPtr> inputs;
  for (std::size_t i = 0; i < inst.shapes.size(); ++i)
    inputs.push_back(make_tensor(inst.shapes[i], inst.values[i], false));
  return tape.apply(kind, inputs, inst.args)->data.size();
}

}  // namespace

double check_gradients(OpKind kind, int trials, double step,
                       std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("check_gradients: trials >= 1");
  if (!(step > 0.0 && step <= 1e-3))
    throw std::invalid_argument("check_gradients: step must be in (0, 1e-3]");
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Instance inst = make_instance(kind, rng);
    const std::size_t m = out_numel(kind, inst);
    std::vector<double> proj = draw(rng, m, -1.0, 1.0);

    std::vector<std::vector<double>> ad;
    forward_scalar(kind, inst, proj, true, &ad);

    for (std::size_t i = 0; i < inst.values.size(); ++i) {
      for (std::size_t e = 0; e < inst.values[i].size(); ++e) {
        Instance perturbed = inst;
        perturbed.values[i][e] = inst.values[i][e] + step;
        const double fp = forward_scalar(kind, perturbed, proj, false, nullptr);
        perturbed.values[i][e] = inst.values[i][e] - step;
        const double fm = forward_scalar(kind, perturbed, proj, false, nullptr);
        const double fd = (fp - fm) / (2.0 * step);
        const double g = ad[i][e];
        const double rel =
            std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-2});
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

}  // namespace ddn
