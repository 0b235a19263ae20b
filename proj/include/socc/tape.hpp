// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "socc/sparse_tensor.hpp"
#include "socc/types.hpp"

namespace socc::nn {

// Reverse-mode tape. Forward ops allocate value slots for their outputs and
// record a closure that, given the output gradient, accumulates gradients
// into input slots and parameters. backward() replays closures in exact
// reverse execution order; fan-out accumulates additively because every
// closure adds into its input slots.
template <class S>
class Tape {
 public:
  using Mat = MatX<S>;

  int alloc(Eigen::Index rows, Eigen::Index cols) {
    shapes_.emplace_back(rows, cols);
    grads_.emplace_back();
    return int(shapes_.size()) - 1;
  }

  // Gradient slot, zero-initialized on first access.
  Mat& grad(int id) {
    auto& g = grads_.at(std::size_t(id));
    if (g.size() == 0)
      g = Mat::Zero(shapes_[std::size_t(id)].first,
                    shapes_[std::size_t(id)].second);
    return g;
  }

  void record(const char* op, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{op, std::move(back)});
  }

  // Seeds d(loss)/d(loss) = seed and propagates. The tape is cleared after
  // use; parameter gradients persist in their Param slots.
  void backward(int loss_id, S seed = S(1)) {
    if (nodes_.empty())
      throw ContractViolation("Tape::backward called without a recorded forward");
    grad(loss_id).setConstant(seed);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back(*this);
    clear();
  }

  void clear() {
    nodes_.clear();
    grads_.clear();
    shapes_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes_;
};

// A sparse tensor with its tape slot; id < 0 means untracked (inference or a
// constant input).
template <class S>
struct Traced {
  SparseTensor<S> t;
  int id = -1;

  Traced() = default;
  explicit Traced(SparseTensor<S> v, int i = -1) : t(std::move(v)), id(i) {}
};

// Dense matrix value on the tape (pooled vectors, gates, scalar losses).
template <class S>
struct TracedMat {
  MatX<S> m;
  int id = -1;
};

// Marks an input as differentiable so gradient checks can read d(loss)/d(input).
template <class S>
Traced<S> leaf(Tape<S>* tape, SparseTensor<S> t) {
  Traced<S> v(std::move(t));
  if (tape) v.id = tape->alloc(v.t.n(), v.t.m());
  return v;
}

}  // namespace socc::nn
