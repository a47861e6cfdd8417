#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ctn/imaging.hpp"

// Reverse-mode differentiation over 2-D double tensors. A Tape records every
// primitive in creation order, which is also a topological order, so backward
// is a single reverse sweep.
namespace ctn::diff {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  static Tensor zeros(int rows, int cols);
  static Tensor scalar(double v);
  static Tensor from(int rows, int cols, std::vector<double> values);
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

class Tape;

class Value {
 public:
  Value() = default;

  int rows() const;
  int cols() const;
  std::size_t size() const;
  std::span<const double> data() const;
  // Empty unless the value requires grad and backward has run.
  std::span<const double> grad() const;
  double item() const;
  Tensor tensor() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Called once during backward with the node's id; reads grad(self) and
  // accumulates into grad(parent) for parents that require grad.
  using Vjp = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value constant(Tensor t);
  Value variable(Tensor t);
  // Borrowed leaf: data must outlive the tape; backward accumulates into grad_sink.
  // An empty grad_sink makes the leaf a constant.
  Value parameter(std::span<const double> data, int rows, int cols, std::span<double> grad_sink);

  Value record(Tensor out, std::vector<int> parents, Vjp vjp);

  // Seeds d(loss)/d(loss) = 1. Throws NonScalarLoss / DoubleBackward.
  void backward(const Value& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  int rows(int id) const { return nodes_[id].rows; }
  int cols(int id) const { return nodes_[id].cols; }
  const double* data(int id) const;
  double* grad(int id);  // null when the node does not require grad
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool backward_done() const noexcept { return done_; }

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> owned;
    const double* borrowed = nullptr;
    std::vector<double> grad_owned;
    double* grad_sink = nullptr;
    bool requires_grad = false;
    std::vector<int> parents;
    Vjp vjp;
  };
  Value push(Node n);

  std::vector<Node> nodes_;
  bool done_ = false;
};

// Compressed sparse rows, n x n.
struct SparseMatrix {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;
};

enum class Axis { Rows, Cols };

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
// x (r x c) plus a 1 x c row added to every row.
Value add_bias(const Value& x, const Value& bias);
Value matmul(const Value& a, const Value& b);
Value relu(const Value& a);
Value concat(std::span<const Value> parts, Axis axis);
Value slice(const Value& a, int row0, int nrows, int col0, int ncols);
Value gather_rows(const Value& a, std::vector<int> rows);
Value sum(const Value& a);
Value mean(const Value& a);
Value l1_norm(const Value& a);
Value l2_norm(const Value& a);
// Per-row Euclidean norm, r x 1.
Value row_l2_norm(const Value& a);
Value sqrt(const Value& a);
Value log(const Value& a);
Value clamp_min(const Value& a, double lo);
// Samples map at (scale * x, scale * y) for every row (x, y) of points (N x 2).
// Gradient flows to the points only; the map is a constant.
Value bilinear_gather(const FeatureMap& map, const Value& points, double scale = 1.0);
// op * x for a square sparse operator.
Value sparse_matmul(const SparseMatrix& op, const Value& x);

}  // namespace ctn::diff
