#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ddn {

// Dense float64 tensor with an attached gradient buffer. Rank 1 or 2;
// scalars are shape {1}. data and grad always have product(shape) entries
// and grad starts (and resets) all-zero.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  bool is_matrix() const { return shape.size() == 2; }
  std::int64_t rows() const { return is_matrix() ? shape[0] : 1; }
  std::int64_t cols() const { return is_matrix() ? shape[1] : shape[0]; }
  double value() const { return data[0]; }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::int64_t> shape,
                      bool requires_grad = false);
TensorPtr make_tensor(std::vector<std::int64_t> shape,
                      std::vector<double> data, bool requires_grad = false);
TensorPtr make_scalar(double v, bool requires_grad = false);

enum class OpKind {
  kMatMul,
  kAdd,
  kScalarMul,
  kRelu,
  kMeanAxis,
  kL2Normalize,
  kCosineSimilarity,
  kExp,
  kLog,
  kLogSumExp,
  kConcat,
  kSoftmax,
  kNllSoftmax,
  kWeightedSum,
};

const char* op_kind_name(OpKind kind);

// Extra operands for kinds that need them (scalar factor, reduction axis,
// class labels, projection weights).
struct OpArgs {
  double scalar = 1.0;
  int axis = 0;
  std::vector<int> labels;
  std::vector<double> weights;
};

// Define-by-run tape: records every op in build order; backward walks the
// records in reverse and accumulates into grad buffers of tensors that
// require gradients. One tape per forward/backward pass, one thread per
// tape.
class Tape {
 public:
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  // same shape, or [B,D] + [D] broadcast over rows
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr scalar_mul(const TensorPtr& a, double c);
  TensorPtr relu(const TensorPtr& a);
  // vector axis 0 -> scalar; matrix axis 0 -> column means, axis 1 -> row
  // means
  TensorPtr mean_axis(const TensorPtr& a, int axis);
  // vector, or matrix rows; rejects norm <= 1e-12
  TensorPtr l2_normalize(const TensorPtr& a);
  // ([B,D],[B,D]) -> [B] rowwise; ([B,D],[D]) -> [B]; ([D],[D]) -> scalar
  TensorPtr cosine_similarity(const TensorPtr& a, const TensorPtr& b);
  TensorPtr exp(const TensorPtr& a);
  TensorPtr log(const TensorPtr& a);
  // vector -> scalar, matrix -> per-row vector; max-shifted
  TensorPtr logsumexp(const TensorPtr& a);
  // rank-1 inputs placed end to end
  TensorPtr concat(const std::vector<TensorPtr>& xs);
  // vector or matrix rows; max-shifted
  TensorPtr softmax(const TensorPtr& a);
  // logits [B,M], labels in [0,M); mean negative log-likelihood -> scalar
  TensorPtr nll_softmax(const TensorPtr& logits, const std::vector<int>& labels);
  // sum_i w[i] * a.data[i] over the flat buffer -> scalar
  TensorPtr weighted_sum(const TensorPtr& a, const std::vector<double>& w);

  TensorPtr apply(OpKind kind, const std::vector<TensorPtr>& inputs,
                  const OpArgs& args = {});

  // loss must be a scalar produced on this tape
  void backward(const TensorPtr& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<TensorPtr> inputs;
    TensorPtr out;
    std::function<void()> back;
  };

  TensorPtr record(std::vector<TensorPtr> inputs, TensorPtr out,
                   std::function<void()> back);

  std::vector<Node> nodes_;
};

}  // namespace ddn
