#include "ddn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddn/kernels.hpp"

namespace ddn {

namespace {

constexpr double kNormFloor = 1e-12;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void check(bool ok, const char* msg) {
  if (!ok) fail(msg);
}

const kern::Kernels& K() { return kern::active_kernels(); }

}  // namespace

TensorPtr make_tensor(std::vector<std::int64_t> shape, bool requires_grad) {
  check(!shape.empty() && shape.size() <= 2, "tensor rank must be 1 or 2");
  for (auto d : shape) check(d > 0, "tensor dims must be positive");
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<std::size_t>(t->numel()), 0.0);
  t->grad.assign(t->data.size(), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr make_tensor(std::vector<std::int64_t> shape, std::vector<double> data,
                      bool requires_grad) {
  auto t = make_tensor(std::move(shape), requires_grad);
  check(data.size() == t->data.size(), "data length does not match shape");
  t->data = std::move(data);
  return t;
}

TensorPtr make_scalar(double v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatMul: return "matrix-multiply";
    case OpKind::kAdd: return "add";
    case OpKind::kScalarMul: return "scalar-multiply";
    case OpKind::kRelu: return "relu";
    case OpKind::kMeanAxis: return "mean-over-axis";
    case OpKind::kL2Normalize: return "l2-normalize";
    case OpKind::kCosineSimilarity: return "cosine-similarity";
    case OpKind::kExp: return "exponent";
    case OpKind::kLog: return "natural-log";
    case OpKind::kLogSumExp: return "log-sum-exp";
    case OpKind::kConcat: return "concatenate";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kNllSoftmax: return "negative-log-likelihood-with-softmax";
    case OpKind::kWeightedSum: return "weighted-sum";
  }
  return "unknown";
}

TensorPtr Tape::record(std::vector<TensorPtr> inputs, TensorPtr out,
                       std::function<void()> back) {
  for (const auto& in : inputs) {
    if (in->requires_grad) {
      out->requires_grad = true;
      break;
    }
  }
  nodes_.push_back(Node{std::move(inputs), out, std::move(back)});
  return nodes_.back().out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  check(a->is_matrix() && b->is_matrix(), "matmul: both inputs must be rank 2");
  check(a->shape[1] == b->shape[0], "matmul: inner dimensions differ");
  const std::size_t B = a->shape[0], Kd = a->shape[1], M = b->shape[1];
  auto out = make_tensor({a->shape[0], b->shape[1]});
  K().matmul_nn_acc(B, Kd, M, a->data.data(), b->data.data(),
                    out->data.data());
  return record({a, b}, out, [a, b, out, B, Kd, M] {
    if (a->requires_grad)
      K().matmul_nt_acc(B, Kd, M, out->grad.data(), b->data.data(),
                        a->grad.data());
    if (b->requires_grad)
      K().matmul_tn_acc(B, Kd, M, a->data.data(), out->grad.data(),
                        b->grad.data());
  });
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape == b->shape) {
    auto out = make_tensor(a->shape);
    K().add(out->data.size(), a->data.data(), b->data.data(),
            out->data.data());
    return record({a, b}, out, [a, b, out] {
      const std::size_t n = out->grad.size();
      if (a->requires_grad) K().axpy(n, 1.0, out->grad.data(), a->grad.data());
      if (b->requires_grad) K().axpy(n, 1.0, out->grad.data(), b->grad.data());
    });
  }
  check(a->is_matrix() && !b->is_matrix() && a->shape[1] == b->shape[0],
        "add: shapes must match or broadcast [B,D] + [D]");
  const std::size_t B = a->shape[0], D = a->shape[1];
  auto out = make_tensor(a->shape);
  for (std::size_t i = 0; i < B; ++i) {
    K().add(D, a->data.data() + i * D, b->data.data(),
            out->data.data() + i * D);
  }
  return record({a, b}, out, [a, b, out, B, D] {
    if (a->requires_grad)
      K().axpy(B * D, 1.0, out->grad.data(), a->grad.data());
    if (b->requires_grad)
      K().col_sum_acc(B, D, out->grad.data(), b->grad.data());
  });
}

TensorPtr Tape::scalar_mul(const TensorPtr& a, double c) {
  auto out = make_tensor(a->shape, a->data);
  K().scale(out->data.size(), c, out->data.data());
  return record({a}, out, [a, out, c] {
    if (a->requires_grad)
      K().axpy(out->grad.size(), c, out->grad.data(), a->grad.data());
  });
}

TensorPtr Tape::relu(const TensorPtr& a) {
  auto out = make_tensor(a->shape);
  K().relu(a->data.size(), a->data.data(), out->data.data());
  return record({a}, out, [a, out] {
    if (a->requires_grad)
      K().relu_bw_acc(a->data.size(), a->data.data(), out->grad.data(),
                      a->grad.data());
  });
}

TensorPtr Tape::mean_axis(const TensorPtr& a, int axis) {
  if (!a->is_matrix()) {
    check(axis == 0, "mean-over-axis: vector input only has axis 0");
    const std::size_t n = a->data.size();
    const double inv = 1.0 / static_cast<double>(n);
    auto out = make_scalar(K().sum(a->data.data(), n) * inv);
    return record({a}, out, [a, out, inv] {
      if (!a->requires_grad) return;
      const double g = out->grad[0] * inv;
      for (auto& gi : a->grad) gi += g;
    });
  }
  const std::size_t B = a->shape[0], D = a->shape[1];
  check(axis == 0 || axis == 1, "mean-over-axis: axis must be 0 or 1");
  if (axis == 0) {
    const double inv = 1.0 / static_cast<double>(B);
    auto out = make_tensor({a->shape[1]});
    K().col_sum_acc(B, D, a->data.data(), out->data.data());
    K().scale(D, inv, out->data.data());
    return record({a}, out, [a, out, B, D, inv] {
      if (!a->requires_grad) return;
      for (std::size_t i = 0; i < B; ++i)
        K().axpy(D, inv, out->grad.data(), a->grad.data() + i * D);
    });
  }
  const double inv = 1.0 / static_cast<double>(D);
  auto out = make_tensor({a->shape[0]});
  for (std::size_t i = 0; i < B; ++i)
    out->data[i] = K().sum(a->data.data() + i * D, D) * inv;
  return record({a}, out, [a, out, B, D, inv] {
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < B; ++i) {
      const double g = out->grad[i] * inv;
      double* row = a->grad.data() + i * D;
      for (std::size_t j = 0; j < D; ++j) row[j] += g;
    }
  });
}

TensorPtr Tape::l2_normalize(const TensorPtr& a) {
  const std::size_t rows = a->is_matrix() ? a->shape[0] : 1;
  const std::size_t D = a->is_matrix() ? a->shape[1] : a->shape[0];
  auto out = make_tensor(a->shape);
  auto inv = std::make_shared<std::vector<double>>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = a->data.data() + i * D;
    const double nrm = std::sqrt(K().dot(x, x, D));
    if (!(nrm > kNormFloor)) fail("l2-normalize: zero-norm input");
    (*inv)[i] = 1.0 / nrm;
    for (std::size_t j = 0; j < D; ++j) out->data[i * D + j] = x[j] * (*inv)[i];
  }
  return record({a}, out, [a, out, inv, rows, D] {
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* z = out->data.data() + i * D;
      const double* g = out->grad.data() + i * D;
      double* da = a->grad.data() + i * D;
      const double s = K().dot(g, z, D);
      for (std::size_t j = 0; j < D; ++j) da[j] += (g[j] - s * z[j]) * (*inv)[i];
    }
  });
}

TensorPtr Tape::cosine_similarity(const TensorPtr& a, const TensorPtr& b) {
  std::size_t pairs = 0, D = 0;
  bool broadcast_b = false;
  if (a->is_matrix() && b->is_matrix()) {
    check(a->shape == b->shape, "cosine-similarity: matrix shapes differ");
    pairs = a->shape[0];
    D = a->shape[1];
  } else if (a->is_matrix() && !b->is_matrix()) {
    check(a->shape[1] == b->shape[0],
          "cosine-similarity: vector length must match matrix columns");
    pairs = a->shape[0];
    D = a->shape[1];
    broadcast_b = true;
  } else if (!a->is_matrix() && !b->is_matrix()) {
    check(a->shape == b->shape, "cosine-similarity: vector lengths differ");
    pairs = 1;
    D = a->shape[0];
  } else {
    fail("cosine-similarity: unsupported shape combination");
  }
  auto out = make_tensor({static_cast<std::int64_t>(pairs)});
  struct PairCtx {
    double inv_ab, inv_a2, inv_b2, cosv;
  };
  auto ctx = std::make_shared<std::vector<PairCtx>>(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    const double* x = a->data.data() + i * D;
    const double* y = b->data.data() + (broadcast_b ? 0 : i * D);
    const double na2 = K().dot(x, x, D);
    const double nb2 = K().dot(y, y, D);
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (!(na > kNormFloor) || !(nb > kNormFloor))
      fail("cosine-similarity: zero-norm input");
    const double c = K().dot(x, y, D) / (na * nb);
    (*ctx)[i] = {1.0 / (na * nb), 1.0 / na2, 1.0 / nb2, c};
    out->data[i] = c;
  }
  return record({a, b}, out, [a, b, out, ctx, pairs, D, broadcast_b] {
    for (std::size_t i = 0; i < pairs; ++i) {
      const double g = out->grad[i];
      if (g == 0.0) continue;
      const PairCtx& c = (*ctx)[i];
      const double* x = a->data.data() + i * D;
      const double* y = b->data.data() + (broadcast_b ? 0 : i * D);
      if (a->requires_grad) {
        double* da = a->grad.data() + i * D;
        for (std::size_t j = 0; j < D; ++j)
          da[j] += g * (y[j] * c.inv_ab - c.cosv * x[j] * c.inv_a2);
      }
      if (b->requires_grad) {
        double* db = b->grad.data() + (broadcast_b ? 0 : i * D);
        for (std::size_t j = 0; j < D; ++j)
          db[j] += g * (x[j] * c.inv_ab - c.cosv * y[j] * c.inv_b2);
      }
    }
  });
}

TensorPtr Tape::exp(const TensorPtr& a) {
  auto out = make_tensor(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = std::exp(a->data[i]);
  return record({a}, out, [a, out] {
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < a->grad.size(); ++i)
      a->grad[i] += out->grad[i] * out->data[i];
  });
}

TensorPtr Tape::log(const TensorPtr& a) {
  auto out = make_tensor(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) {
    check(a->data[i] > 0.0, "natural-log: input must be positive");
    out->data[i] = std::log(a->data[i]);
  }
  return record({a}, out, [a, out] {
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < a->grad.size(); ++i)
      a->grad[i] += out->grad[i] / a->data[i];
  });
}

TensorPtr Tape::logsumexp(const TensorPtr& a) {
  const std::size_t rows = a->is_matrix() ? a->shape[0] : 1;
  const std::size_t D = a->is_matrix() ? a->shape[1] : a->shape[0];
  auto out = make_tensor({static_cast<std::int64_t>(rows)});
  auto probs = std::make_shared<std::vector<double>>(rows * D);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = a->data.data() + i * D;
    double m = x[0];
    for (std::size_t j = 1; j < D; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double e = std::exp(x[j] - m);
      (*probs)[i * D + j] = e;
      s += e;
    }
    const double invs = 1.0 / s;
    for (std::size_t j = 0; j < D; ++j) (*probs)[i * D + j] *= invs;
    out->data[i] = m + std::log(s);
  }
  return record({a}, out, [a, out, probs, rows, D] {
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < rows; ++i) {
      const double g = out->grad[i];
      double* da = a->grad.data() + i * D;
      for (std::size_t j = 0; j < D; ++j) da[j] += g * (*probs)[i * D + j];
    }
  });
}

TensorPtr Tape::concat(const std::vector<TensorPtr>& xs) {
  check(!xs.empty(), "concatenate: needs at least one input");
  std::int64_t total = 0;
  for (const auto& x : xs) {
    check(!x->is_matrix(), "concatenate: rank-1 inputs only");
    total += x->numel();
  }
  auto out = make_tensor({total});
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->data.begin(), x->data.end(), out->data.begin() + off);
    off += x->data.size();
  }
  auto inputs = xs;
  return record(inputs, out, [inputs, out] {
    std::size_t off = 0;
    for (const auto& x : inputs) {
      if (x->requires_grad)
        K().axpy(x->grad.size(), 1.0, out->grad.data() + off, x->grad.data());
      off += x->grad.size();
    }
  });
}

TensorPtr Tape::softmax(const TensorPtr& a) {
  const std::size_t rows = a->is_matrix() ? a->shape[0] : 1;
  const std::size_t D = a->is_matrix() ? a->shape[1] : a->shape[0];
  auto out = make_tensor(a->shape);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = a->data.data() + i * D;
    double* z = out->data.data() + i * D;
    double m = x[0];
    for (std::size_t j = 1; j < D; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      z[j] = std::exp(x[j] - m);
      s += z[j];
    }
    for (std::size_t j = 0; j < D; ++j) z[j] /= s;
  }
  return record({a}, out, [a, out, rows, D] {
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* z = out->data.data() + i * D;
      const double* g = out->grad.data() + i * D;
      double* da = a->grad.data() + i * D;
      double gz = 0.0;
      for (std::size_t j = 0; j < D; ++j) gz += g[j] * z[j];
      for (std::size_t j = 0; j < D; ++j) da[j] += z[j] * (g[j] - gz);
    }
  });
}

TensorPtr Tape::nll_softmax(const TensorPtr& logits,
                            const std::vector<int>& labels) {
  check(logits->is_matrix(), "nll: logits must be [B,M]");
  const std::size_t B = logits->shape[0], M = logits->shape[1];
  check(labels.size() == B, "nll: one label per row required");
  for (int y : labels)
    check(y >= 0 && static_cast<std::size_t>(y) < M,
          "nll: label out of range [0,M)");
  auto probs = std::make_shared<std::vector<double>>(B * M);
  // Row losses are summed in row order and divided by B; the backward pass
  // scales (softmax - onehot) by upstream/B. Reference reimplementations
  // that want bit equality must use the same two expressions.
  double acc = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double* x = logits->data.data() + i * M;
    double m = x[0];
    for (std::size_t j = 1; j < M; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      const double e = std::exp(x[j] - m);
      (*probs)[i * M + j] = e;
      s += e;
    }
    const double invs = 1.0 / s;
    for (std::size_t j = 0; j < M; ++j) (*probs)[i * M + j] *= invs;
    acc += std::log(s) - (x[labels[i]] - m);
  }
  auto out = make_scalar(acc / static_cast<double>(B));
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return record({logits}, out, [logits, out, probs, labels_copy, B, M] {
    if (!logits->requires_grad) return;
    const double coef = out->grad[0] / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
      double* dl = logits->grad.data() + i * M;
      const std::size_t y = static_cast<std::size_t>((*labels_copy)[i]);
      for (std::size_t j = 0; j < M; ++j) {
        const double onehot = (j == y) ? 1.0 : 0.0;
        dl[j] += ((*probs)[i * M + j] - onehot) * coef;
      }
    }
  });
}

TensorPtr Tape::weighted_sum(const TensorPtr& a, const std::vector<double>& w) {
  check(w.size() == a->data.size(), "weighted-sum: weight length mismatch");
  auto out = make_scalar(K().dot(a->data.data(), w.data(), w.size()));
  auto wc = std::make_shared<std::vector<double>>(w);
  return record({a}, out, [a, out, wc] {
    if (a->requires_grad)
      K().axpy(wc->size(), out->grad[0], wc->data(), a->grad.data());
  });
}

TensorPtr Tape::apply(OpKind kind, const std::vector<TensorPtr>& inputs,
                      const OpArgs& args) {
  auto need = [&](std::size_t n) {
    check(inputs.size() == n, "apply: wrong number of inputs for op kind");
  };
  switch (kind) {
    case OpKind::kMatMul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::kAdd: need(2); return add(inputs[0], inputs[1]);
    case OpKind::kScalarMul: need(1); return scalar_mul(inputs[0], args.scalar);
    case OpKind::kRelu: need(1); return relu(inputs[0]);
    case OpKind::kMeanAxis: need(1); return mean_axis(inputs[0], args.axis);
    case OpKind::kL2Normalize: need(1); return l2_normalize(inputs[0]);
    case OpKind::kCosineSimilarity:
      need(2);
      return cosine_similarity(inputs[0], inputs[1]);
    case OpKind::kExp: need(1); return exp(inputs[0]);
    case OpKind::kLog: need(1); return log(inputs[0]);
    case OpKind::kLogSumExp: need(1); return logsumexp(inputs[0]);
    case OpKind::kConcat: return concat(inputs);
    case OpKind::kSoftmax: need(1); return softmax(inputs[0]);
    case OpKind::kNllSoftmax: need(1); return nll_softmax(inputs[0], args.labels);
    case OpKind::kWeightedSum:
      need(1);
      return weighted_sum(inputs[0], args.weights);
  }
  fail("apply: unknown op kind");
}

void Tape::backward(const TensorPtr& loss) {
  check(loss->numel() == 1, "backward: loss must be a scalar");
  std::size_t idx = nodes_.size();
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].out == loss) {
      idx = i;
      break;
    }
  }
  check(idx != nodes_.size(), "backward: loss was not produced on this tape");
  loss->grad[0] += 1.0;
  for (std::size_t i = idx + 1; i-- > 0;) {
    if (nodes_[i].out->requires_grad) nodes_[i].back();
  }
}

}  // namespace ddn
