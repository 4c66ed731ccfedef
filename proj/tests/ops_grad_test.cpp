// Finite-difference checks of every differentiable op's backward pass.
#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "test_util.hpp"
#include "xprospect/error.hpp"
#include "xprospect/parallel.hpp"
#include "xprospect/tape.hpp"

namespace xprospect {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float scale = 1.0f) {
  auto v = test::uniform_values(shape_numel(shape), seed, -scale, scale);
  return Tensor(std::move(shape), std::move(v));
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Scalar loss = mse(op(inputs), target). Compares the tape gradient of every
// input against a central difference of the same loss.
void check_op(const std::vector<Tensor>& inputs, const Builder& build, double tol = 2e-3) {
  Tensor target;
  auto loss_of = [&](const std::vector<Tensor>& xs, Tape& tape, std::vector<Var>& vars) {
    vars.clear();
    for (std::size_t i = 0; i < xs.size(); ++i) vars.push_back(tape.parameter("in" + std::to_string(i), xs[i]));
    Var out = build(tape, vars);
    if (target.numel() == 0) target = random_tensor(out.shape(), 999);
    return ag::mse(out, target);
  };
  Tape tape;
  std::vector<Var> vars;
  Var loss = loss_of(inputs, tape, vars);
  tape.backward(loss);
  const double h = 1e-3;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k]);
    const std::size_t step = std::max<std::size_t>(1, inputs[k].numel() / 40);
    for (std::size_t i = 0; i < inputs[k].numel(); i += step) {
      auto eval = [&](float delta) {
        auto xs = inputs;
        xs[k][i] += delta;
        Tape t;
        std::vector<Var> vs;
        return static_cast<double>(loss_of(xs, t, vs).value()[0]);
      };
      const double fd = (eval(static_cast<float>(h)) - eval(static_cast<float>(-h))) / (2 * h);
      const double a = analytic[i];
      EXPECT_LT(std::abs(a - fd) / std::max(1.0, std::abs(a) + std::abs(fd)), tol)
          << "input " << k << " element " << i << " analytic " << a << " fd " << fd;
    }
  }
}

TEST(OpGrad, Conv2dStrided) {
  const kernels::ConvGeometry g{{3, 3, 1}, {2, 2, 1}, {1, 1, 0}};
  check_op({random_tensor({1, 6, 6, 2}, 1), random_tensor({3, 3, 2, 3}, 2), random_tensor({3}, 3)},
           [&](Tape&, const std::vector<Var>& v) { return ag::conv(v[0], v[1], v[2], g, "conv2d"); });
}

TEST(OpGrad, Conv3dSame) {
  const kernels::ConvGeometry g{};
  check_op({random_tensor({2, 3, 4, 3, 2}, 4), random_tensor({3, 3, 3, 2, 2}, 5), random_tensor({2}, 6)},
           [&](Tape&, const std::vector<Var>& v) { return ag::conv(v[0], v[1], v[2], g, "conv3d"); });
}

TEST(OpGrad, ConvTranspose3d) {
  const kernels::ConvGeometry g{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
  check_op({random_tensor({1, 2, 2, 2, 2}, 7), random_tensor({3, 3, 3, 2, 3}, 8), random_tensor({3}, 9)},
           [&](Tape&, const std::vector<Var>& v) { return ag::conv_transpose(v[0], v[1], v[2], g, {4, 4, 4}, "up"); });
}

TEST(OpGrad, ConvTranspose2d) {
  const kernels::ConvGeometry g{{3, 3, 1}, {2, 2, 1}, {1, 1, 0}};
  check_op({random_tensor({1, 3, 3, 2}, 10), random_tensor({3, 3, 2, 2}, 11), random_tensor({2}, 12)},
           [&](Tape&, const std::vector<Var>& v) { return ag::conv_transpose(v[0], v[1], v[2], g, {6, 6}, "up2"); });
}

TEST(OpGrad, DenseSeluSigmoid) {
  check_op({random_tensor({2, 5}, 13), random_tensor({5, 4}, 14), random_tensor({4}, 15)},
           [&](Tape&, const std::vector<Var>& v) {
             return ag::sigmoid(ag::selu(ag::dense(v[0], v[1], v[2], "dense"), "selu"), "sig");
           });
}

TEST(OpGrad, StructuralOps) {
  check_op({random_tensor({1, 3, 2, 2}, 16), random_tensor({1, 3, 2, 3, 2}, 17)},
           [&](Tape&, const std::vector<Var>& v) {
             Var rep = ag::replicate_depth(v[0], 3, "rep");
             Var cat = ag::concat_channels({rep, ag::scale(rep, 0.5f, "half")}, "cat");
             Var sag = ag::reshape(v[1], {1, 3, 3, 2, 2});
             Var avg = ag::permute_average(v[1], ag::add(sag, ag::scale(sag, 2.0f, "x2"), "x3"), "pa");
             return ag::concat_channels({ag::add(avg, rep, "sum"), cat}, "out");
           });
}

TEST(OpGrad, Losses) {
  const Tensor target = random_tensor({10}, 18);
  check_op({random_tensor({10}, 19), random_tensor({10}, 20)}, [&](Tape&, const std::vector<Var>& v) {
    Var l1 = ag::mean_abs_diff(v[0], v[1]);
    Var l2 = ag::mean_sq_to(v[0], 1.0f);
    Var l3 = ag::mae(v[1], target);
    return ag::add(ag::add(l1, l2, "a"), l3, "b");
  });
}

TEST(Tape, NonFiniteActivationNamesLayer) {
  Tape tape;
  Var x = tape.constant(Tensor({1}, {1e30f}));
  try {
    ag::scale(x, 1e30f, "blowup");
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.where(), "blowup");
  }
}

TEST(Kernels, ParallelAndSerialWeightGradsAgreeBitwise) {
  const kernels::ConvGeometry g{};
  const Tensor x = random_tensor({1, 8, 8, 8, 4}, 30), w = random_tensor({3, 3, 3, 4, 4}, 31),
               gy = random_tensor({1, 8, 8, 8, 4}, 32);
  const auto d = kernels::Dims5::of(x);
  auto run = [&](std::size_t workers) {
    set_worker_count(workers);
    Tensor gw({3, 3, 3, 4, 4});
    kernels::conv_backward(x.data(), d, w.data(), gy.data(), d, g, nullptr, gw.data(), nullptr);
    return gw;
  };
  const auto before = worker_count();
  const Tensor serial = run(1), split = run(4);
  set_worker_count(before);
  EXPECT_EQ(serial, split);
}

}  // namespace
}  // namespace xprospect
