#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

// Minimal reverse-mode autodiff over 2-D row-major double matrices. A
// Tape owns one forward graph; nodes are appended in topological order,
// so backward() is a single reverse sweep. Parameters live outside the
// tape in Param structs and accumulate gradients across tapes, which is
// what gradient accumulation over micro-batches needs.
//
// The op set is exactly what the transformer scorer uses; there is no
// broadcasting beyond add_rowvec and no views. Shapes are checked at
// graph-construction time and violations throw std::invalid_argument.

namespace avemdpo::autograd {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(size_t(r) * size_t(c), 0.0) {}

  double& at(int r, int c) { return data[size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[size_t(r) * cols + c]; }
  size_t size() const { return data.size(); }
};

// A named parameter tensor. `g` persists until explicitly cleared, so
// several tapes can accumulate into one update. Frozen parameters keep
// an empty gradient and never receive accumulation.
struct Param {
  std::string name;
  Matrix w;
  Matrix g;
  bool trainable = true;

  Param() = default;
  Param(std::string n, int rows, int cols, bool train = true)
      : name(std::move(n)), w(rows, cols), trainable(train) {
    if (trainable) g = Matrix(rows, cols);
  }

  void zero_grad() {
    for (double& v : g.data) v = 0.0;
  }
};

using NodeId = int32_t;

class Tape {
 public:
  // Leaves.
  NodeId param(Param& p);
  NodeId constant(Matrix m);

  // value[i, :] = table[ids[i], :]
  NodeId rows_gather(NodeId table, std::vector<int> ids);

  NodeId add(NodeId a, NodeId b);
  // a is N x C, row is 1 x C, broadcast over rows.
  NodeId add_rowvec(NodeId a, NodeId row);
  // (N x K) * (K x M)
  NodeId matmul(NodeId a, NodeId b);
  // (N x K) * (M x K)^T
  NodeId matmul_nt(NodeId a, NodeId b);
  // Per-row RMS normalization scaled by a 1 x C gain.
  NodeId rmsnorm(NodeId a, NodeId gain);
  // Row-wise softmax over a square score matrix with entries j > i masked.
  NodeId causal_softmax(NodeId scores);
  NodeId tanh_op(NodeId a);
  NodeId scale(NodeId a, double factor);
  NodeId slice_cols(NodeId a, int begin, int end);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId concat_rows(NodeId a, NodeId b);
  // 1 x 1 sum of all entries.
  NodeId sum_all(NodeId a);
  // 1 x 1: sum over (row, target) pairs of log softmax(logits[row, :])[target].
  NodeId log_softmax_gather_sum(NodeId logits,
                                std::vector<std::pair<int, int>> picks);

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;

  // Seeds d(root)/d(root) = seed and accumulates into every trainable
  // Param bound to this tape. root must be 1 x 1.
  void backward(NodeId root, double seed = 1.0);

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kParam,
    kConstant,
    kRowsGather,
    kAdd,
    kAddRowvec,
    kMatmul,
    kMatmulNT,
    kRmsNorm,
    kCausalSoftmax,
    kTanh,
    kScale,
    kSliceCols,
    kConcatCols,
    kConcatRows,
    kSumAll,
    kLogSoftmaxGatherSum,
  };

  struct Node {
    Op op;
    Matrix value;
    Matrix grad;  // allocated lazily in backward()
    NodeId a = -1;
    NodeId b = -1;
    Param* bound = nullptr;
    std::vector<int> ids;
    std::vector<std::pair<int, int>> picks;
    int begin = 0;
    int end = 0;
    double factor = 1.0;
  };

  NodeId push(Node n);
  const Node& node(NodeId id) const;
  Matrix& grad_of(Node& n);

  std::vector<Node> nodes_;
};

}  // namespace avemdpo::autograd
