#include "avemdpo/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace avemdpo::autograd {
namespace {

constexpr double kRmsEps = 1e-8;

[[noreturn]] void shape_error(const char* op, const Matrix& a,
                              const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              std::to_string(a.rows) + "x" +
                              std::to_string(a.cols) + " and " +
                              std::to_string(b.rows) + "x" +
                              std::to_string(b.cols));
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw std::invalid_argument("bad node id " + std::to_string(id));
  }
  return nodes_[id];
}

Matrix& Tape::grad_of(Node& n) {
  if (n.grad.size() == 0) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

NodeId Tape::param(Param& p) {
  Node n;
  n.op = Op::kParam;
  n.value = p.w;
  n.bound = &p;
  return push(std::move(n));
}

NodeId Tape::constant(Matrix m) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(m);
  return push(std::move(n));
}

NodeId Tape::rows_gather(NodeId table, std::vector<int> ids) {
  const Matrix& t = node(table).value;
  Matrix out(static_cast<int>(ids.size()), t.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    const int r = ids[i];
    if (r < 0 || r >= t.rows) {
      throw std::invalid_argument("rows_gather: id " + std::to_string(r) +
                                  " out of range [0, " +
                                  std::to_string(t.rows) + ")");
    }
    for (int c = 0; c < t.cols; ++c) out.at(static_cast<int>(i), c) = t.at(r, c);
  }
  Node n;
  n.op = Op::kRowsGather;
  n.value = std::move(out);
  n.a = table;
  n.ids = std::move(ids);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  if (x.rows != y.rows || x.cols != y.cols) shape_error("add", x, y);
  Matrix out(x.rows, x.cols);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] + y.data[i];
  Node n;
  n.op = Op::kAdd;
  n.value = std::move(out);
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::add_rowvec(NodeId a, NodeId row) {
  const Matrix& x = node(a).value;
  const Matrix& r = node(row).value;
  if (r.rows != 1 || r.cols != x.cols) shape_error("add_rowvec", x, r);
  Matrix out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int c = 0; c < x.cols; ++c) out.at(i, c) = x.at(i, c) + r.at(0, c);
  }
  Node n;
  n.op = Op::kAddRowvec;
  n.value = std::move(out);
  n.a = a;
  n.b = row;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  if (x.cols != y.rows) shape_error("matmul", x, y);
  Matrix out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int k = 0; k < x.cols; ++k) {
      const double xv = x.at(i, k);
      if (xv == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) out.at(i, j) += xv * y.at(k, j);
    }
  }
  Node n;
  n.op = Op::kMatmul;
  n.value = std::move(out);
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  if (x.cols != y.cols) shape_error("matmul_nt", x, y);
  Matrix out(x.rows, y.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < y.rows; ++j) {
      double acc = 0.0;
      for (int k = 0; k < x.cols; ++k) acc += x.at(i, k) * y.at(j, k);
      out.at(i, j) = acc;
    }
  }
  Node n;
  n.op = Op::kMatmulNT;
  n.value = std::move(out);
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::rmsnorm(NodeId a, NodeId gain) {
  const Matrix& x = node(a).value;
  const Matrix& g = node(gain).value;
  if (g.rows != 1 || g.cols != x.cols) shape_error("rmsnorm", x, g);
  Matrix out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    double ss = 0.0;
    for (int c = 0; c < x.cols; ++c) ss += x.at(i, c) * x.at(i, c);
    const double rms = std::sqrt(ss / x.cols + kRmsEps);
    for (int c = 0; c < x.cols; ++c) out.at(i, c) = x.at(i, c) / rms * g.at(0, c);
  }
  Node n;
  n.op = Op::kRmsNorm;
  n.value = std::move(out);
  n.a = a;
  n.b = gain;
  return push(std::move(n));
}

NodeId Tape::causal_softmax(NodeId scores) {
  const Matrix& x = node(scores).value;
  if (x.rows != x.cols) {
    throw std::invalid_argument("causal_softmax: matrix must be square, got " +
                                std::to_string(x.rows) + "x" +
                                std::to_string(x.cols));
  }
  Matrix out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    double mx = x.at(i, 0);
    for (int j = 1; j <= i; ++j) mx = std::max(mx, x.at(i, j));
    double denom = 0.0;
    for (int j = 0; j <= i; ++j) denom += std::exp(x.at(i, j) - mx);
    for (int j = 0; j <= i; ++j) out.at(i, j) = std::exp(x.at(i, j) - mx) / denom;
  }
  Node n;
  n.op = Op::kCausalSoftmax;
  n.value = std::move(out);
  n.a = scores;
  return push(std::move(n));
}

NodeId Tape::tanh_op(NodeId a) {
  const Matrix& x = node(a).value;
  Matrix out(x.rows, x.cols);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::tanh(x.data[i]);
  Node n;
  n.op = Op::kTanh;
  n.value = std::move(out);
  n.a = a;
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
  const Matrix& x = node(a).value;
  Matrix out(x.rows, x.cols);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] * factor;
  Node n;
  n.op = Op::kScale;
  n.value = std::move(out);
  n.a = a;
  n.factor = factor;
  return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId a, int begin, int end) {
  const Matrix& x = node(a).value;
  if (begin < 0 || end > x.cols || begin >= end) {
    throw std::invalid_argument("slice_cols: bad range [" +
                                std::to_string(begin) + ", " +
                                std::to_string(end) + ") for " +
                                std::to_string(x.cols) + " columns");
  }
  Matrix out(x.rows, end - begin);
  for (int i = 0; i < x.rows; ++i) {
    for (int c = begin; c < end; ++c) out.at(i, c - begin) = x.at(i, c);
  }
  Node n;
  n.op = Op::kSliceCols;
  n.value = std::move(out);
  n.a = a;
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  if (x.rows != y.rows) shape_error("concat_cols", x, y);
  Matrix out(x.rows, x.cols + y.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int c = 0; c < x.cols; ++c) out.at(i, c) = x.at(i, c);
    for (int c = 0; c < y.cols; ++c) out.at(i, x.cols + c) = y.at(i, c);
  }
  Node n;
  n.op = Op::kConcatCols;
  n.value = std::move(out);
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::concat_rows(NodeId a, NodeId b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  if (x.cols != y.cols) shape_error("concat_rows", x, y);
  Matrix out(x.rows + y.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int c = 0; c < x.cols; ++c) out.at(i, c) = x.at(i, c);
  }
  for (int i = 0; i < y.rows; ++i) {
    for (int c = 0; c < y.cols; ++c) out.at(x.rows + i, c) = y.at(i, c);
  }
  Node n;
  n.op = Op::kConcatRows;
  n.value = std::move(out);
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::sum_all(NodeId a) {
  const Matrix& x = node(a).value;
  Matrix out(1, 1);
  for (double v : x.data) out.data[0] += v;
  Node n;
  n.op = Op::kSumAll;
  n.value = std::move(out);
  n.a = a;
  return push(std::move(n));
}

NodeId Tape::log_softmax_gather_sum(NodeId logits,
                                    std::vector<std::pair<int, int>> picks) {
  const Matrix& x = node(logits).value;
  double total = 0.0;
  for (const auto& [row, tgt] : picks) {
    if (row < 0 || row >= x.rows || tgt < 0 || tgt >= x.cols) {
      throw std::invalid_argument(
          "log_softmax_gather_sum: pick (" + std::to_string(row) + ", " +
          std::to_string(tgt) + ") out of range for " + std::to_string(x.rows) +
          "x" + std::to_string(x.cols));
    }
    double mx = x.at(row, 0);
    for (int c = 1; c < x.cols; ++c) mx = std::max(mx, x.at(row, c));
    double denom = 0.0;
    for (int c = 0; c < x.cols; ++c) denom += std::exp(x.at(row, c) - mx);
    total += x.at(row, tgt) - mx - std::log(denom);
  }
  Matrix out(1, 1);
  out.data[0] = total;
  Node n;
  n.op = Op::kLogSoftmaxGatherSum;
  n.value = std::move(out);
  n.a = logits;
  n.picks = std::move(picks);
  return push(std::move(n));
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

double Tape::scalar(NodeId id) const {
  const Matrix& v = node(id).value;
  if (v.rows != 1 || v.cols != 1) {
    throw std::invalid_argument("scalar: node is " + std::to_string(v.rows) +
                                "x" + std::to_string(v.cols));
  }
  return v.data[0];
}

void Tape::backward(NodeId root, double seed) {
  Node& r = nodes_.at(root);
  if (r.value.rows != 1 || r.value.cols != 1) {
    throw std::invalid_argument("backward: root must be 1x1");
  }
  grad_of(r).data[0] += seed;

  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;  // nothing flowed here
    const Matrix& gy = n.grad;
    switch (n.op) {
      case Op::kParam: {
        if (n.bound->trainable) {
          Matrix& pg = n.bound->g;
          for (size_t i = 0; i < pg.size(); ++i) pg.data[i] += gy.data[i];
        }
        break;
      }
      case Op::kConstant:
        break;
      case Op::kRowsGather: {
        Node& t = nodes_[n.a];
        Matrix& gt = grad_of(t);
        for (size_t i = 0; i < n.ids.size(); ++i) {
          const int r2 = n.ids[i];
          for (int c = 0; c < gt.cols; ++c) {
            gt.at(r2, c) += gy.at(static_cast<int>(i), c);
          }
        }
        break;
      }
      case Op::kAdd: {
        Matrix& ga = grad_of(nodes_[n.a]);
        Matrix& gb = grad_of(nodes_[n.b]);
        for (size_t i = 0; i < gy.size(); ++i) {
          ga.data[i] += gy.data[i];
          gb.data[i] += gy.data[i];
        }
        break;
      }
      case Op::kAddRowvec: {
        Matrix& ga = grad_of(nodes_[n.a]);
        Matrix& gr = grad_of(nodes_[n.b]);
        for (int i = 0; i < gy.rows; ++i) {
          for (int c = 0; c < gy.cols; ++c) {
            ga.at(i, c) += gy.at(i, c);
            gr.at(0, c) += gy.at(i, c);
          }
        }
        break;
      }
      case Op::kMatmul: {
        const Matrix& a = nodes_[n.a].value;
        const Matrix& b = nodes_[n.b].value;
        Matrix& ga = grad_of(nodes_[n.a]);
        Matrix& gb = grad_of(nodes_[n.b]);
        // dA = gy * B^T
        for (int i = 0; i < a.rows; ++i) {
          for (int k = 0; k < a.cols; ++k) {
            double acc = 0.0;
            for (int j = 0; j < b.cols; ++j) acc += gy.at(i, j) * b.at(k, j);
            ga.at(i, k) += acc;
          }
        }
        // dB = A^T * gy
        for (int k = 0; k < b.rows; ++k) {
          for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int i = 0; i < a.rows; ++i) acc += a.at(i, k) * gy.at(i, j);
            gb.at(k, j) += acc;
          }
        }
        break;
      }
      case Op::kMatmulNT: {
        const Matrix& a = nodes_[n.a].value;
        const Matrix& b = nodes_[n.b].value;
        Matrix& ga = grad_of(nodes_[n.a]);
        Matrix& gb = grad_of(nodes_[n.b]);
        // Y = A B^T; dA = gy * B; dB = gy^T * A
        for (int i = 0; i < a.rows; ++i) {
          for (int k = 0; k < a.cols; ++k) {
            double acc = 0.0;
            for (int j = 0; j < b.rows; ++j) acc += gy.at(i, j) * b.at(j, k);
            ga.at(i, k) += acc;
          }
        }
        for (int j = 0; j < b.rows; ++j) {
          for (int k = 0; k < b.cols; ++k) {
            double acc = 0.0;
            for (int i = 0; i < a.rows; ++i) acc += gy.at(i, j) * a.at(i, k);
            gb.at(j, k) += acc;
          }
        }
        break;
      }
      case Op::kRmsNorm: {
        const Matrix& x = nodes_[n.a].value;
        const Matrix& g = nodes_[n.b].value;
        Matrix& gx = grad_of(nodes_[n.a]);
        Matrix& gg = grad_of(nodes_[n.b]);
        for (int i = 0; i < x.rows; ++i) {
          double ss = 0.0;
          for (int c = 0; c < x.cols; ++c) ss += x.at(i, c) * x.at(i, c);
          const double rms = std::sqrt(ss / x.cols + kRmsEps);
          double dot = 0.0;
          for (int c = 0; c < x.cols; ++c) {
            dot += gy.at(i, c) * g.at(0, c) * x.at(i, c);
          }
          const double r3 = rms * rms * rms;
          for (int c = 0; c < x.cols; ++c) {
            gx.at(i, c) += gy.at(i, c) * g.at(0, c) / rms -
                           x.at(i, c) * dot / (x.cols * r3);
            gg.at(0, c) += gy.at(i, c) * x.at(i, c) / rms;
          }
        }
        break;
      }
      case Op::kCausalSoftmax: {
        const Matrix& p = n.value;
        Matrix& gx = grad_of(nodes_[n.a]);
        for (int i = 0; i < p.rows; ++i) {
          double dot = 0.0;
          for (int j = 0; j <= i; ++j) dot += gy.at(i, j) * p.at(i, j);
          for (int j = 0; j <= i; ++j) {
            gx.at(i, j) += p.at(i, j) * (gy.at(i, j) - dot);
          }
        }
        break;
      }
      case Op::kTanh: {
        Matrix& gx = grad_of(nodes_[n.a]);
        for (size_t i = 0; i < gy.size(); ++i) {
          gx.data[i] += gy.data[i] * (1.0 - n.value.data[i] * n.value.data[i]);
        }
        break;
      }
      case Op::kScale: {
        Matrix& gx = grad_of(nodes_[n.a]);
        for (size_t i = 0; i < gy.size(); ++i) {
          gx.data[i] += gy.data[i] * n.factor;
        }
        break;
      }
      case Op::kSliceCols: {
        Matrix& gx = grad_of(nodes_[n.a]);
        for (int i = 0; i < gy.rows; ++i) {
          for (int c = 0; c < gy.cols; ++c) {
            gx.at(i, n.begin + c) += gy.at(i, c);
          }
        }
        break;
      }
      case Op::kConcatCols: {
        Matrix& ga = grad_of(nodes_[n.a]);
        Matrix& gb = grad_of(nodes_[n.b]);
        for (int i = 0; i < gy.rows; ++i) {
          for (int c = 0; c < ga.cols; ++c) ga.at(i, c) += gy.at(i, c);
          for (int c = 0; c < gb.cols; ++c) gb.at(i, c) += gy.at(i, ga.cols + c);
        }
        break;
      }
      case Op::kConcatRows: {
        Matrix& ga = grad_of(nodes_[n.a]);
        Matrix& gb = grad_of(nodes_[n.b]);
        for (int i = 0; i < ga.rows; ++i) {
          for (int c = 0; c < ga.cols; ++c) ga.at(i, c) += gy.at(i, c);
        }
        for (int i = 0; i < gb.rows; ++i) {
          for (int c = 0; c < gb.cols; ++c) gb.at(i, c) += gy.at(ga.rows + i, c);
        }
        break;
      }
      case Op::kSumAll: {
        Matrix& gx = grad_of(nodes_[n.a]);
        for (double& v : gx.data) v += gy.data[0];
        break;
      }
      case Op::kLogSoftmaxGatherSum: {
        const Matrix& x = nodes_[n.a].value;
        Matrix& gx = grad_of(nodes_[n.a]);
        const double s = gy.data[0];
        for (const auto& [row, tgt] : n.picks) {
          double mx = x.at(row, 0);
          for (int c = 1; c < x.cols; ++c) mx = std::max(mx, x.at(row, c));
          double denom = 0.0;
          for (int c = 0; c < x.cols; ++c) denom += std::exp(x.at(row, c) - mx);
          for (int c = 0; c < x.cols; ++c) {
            const double p = std::exp(x.at(row, c) - mx) / denom;
            gx.at(row, c) += s * ((c == tgt ? 1.0 : 0.0) - p);
          }
        }
        break;
      }
    }
  }
}

}  // namespace avemdpo::autograd
