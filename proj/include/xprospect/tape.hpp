#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "xprospect/kernels.hpp"
#include "xprospect/tensor.hpp"

namespace xprospect {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode autodiff record. Ops append nodes as they run; backward()
/// replays them in reverse. Nodes live in a deque so captured pointers to
/// earlier values stay valid.
class Tape {
 public:
  /// Receives the output gradient and one slot per input (null when that
  /// input does not need a gradient). Slots are pre-sized and accumulate.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor*>& grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value, std::string label = "const");
  Var parameter(const std::string& name, Tensor value);

  /// Appends an op result. Throws NonFiniteError naming `label` if the value
  /// contains NaN or infinity.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward, std::string label);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node that needs it.
  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(const Var& v) const;

  /// (name, gradient) for each parameter leaf in creation order.
  std::vector<std::pair<std::string, const Tensor*>> parameter_grads() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string label;
    bool is_parameter = false;
  };
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

class ParamStore;

/// Puts entries of a ParamStore on a tape the first time each is used.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  Var operator()(const std::string& name);
  Tape& tape() const { return tape_; }

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::vector<std::pair<std::string, Var>> bound_;
};

/// Gradients for every entry of `store` after backward(); entries never
/// bound on the tape get zeros.
ParamStore collect_grads(const Tape& tape, const ParamStore& store);

// Differentiable ops. Labels name the layer in non-finite diagnostics.
namespace ag {

/// Channel-last convolution. Rank-4 x with rank-4 w (k1, k2, cin, cout) is a
/// 2-D conv; rank-5 x with rank-5 w is 3-D.
Var conv(const Var& x, const Var& w, const Var& b, const kernels::ConvGeometry& g, const std::string& label);
/// Transposed convolution producing `out_spatial` (2 or 3 extents).
Var conv_transpose(const Var& x, const Var& w, const Var& b, const kernels::ConvGeometry& g,
                   const std::vector<std::size_t>& out_spatial, const std::string& label);
/// (batch, features) x (features, units) + bias.
Var dense(const Var& x, const Var& w, const Var& b, const std::string& label);

Var selu(const Var& x, const std::string& label);
Var sigmoid(const Var& x, const std::string& label);
Var add(const Var& a, const Var& b, const std::string& label);
Var scale(const Var& a, float s, const std::string& label);
Var reshape(const Var& x, Shape shape);
Var concat_channels(const std::vector<Var>& xs, const std::string& label);
/// (b, h, w, c) -> (b, h, w, depth, c) by copying along a new depth axis.
Var replicate_depth(const Var& x, std::size_t depth, const std::string& label);
/// out[b][i][j][k][c] = (a[b][i][j][k][c] + s[b][i][k][j][c]) / 2.
Var permute_average(const Var& a, const Var& s, const std::string& label);

/// mean((pred - target)^2) as a scalar.
Var mse(const Var& pred, const Tensor& target);
/// mean(|pred - target|) as a scalar. The subgradient at 0 is 0.
Var mae(const Var& pred, const Tensor& target);
/// mean(|a - b|) between two recorded values.
Var mean_abs_diff(const Var& a, const Var& b);
/// mean((x - target)^2) against a constant.
Var mean_sq_to(const Var& x, float target);

}  // namespace ag

}  // namespace xprospect
