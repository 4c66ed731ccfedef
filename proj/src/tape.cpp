#include "xprospect/tape.hpp"

#include <algorithm>
#include <cmath>

#include "xprospect/activations.hpp"
#include "xprospect/error.hpp"
#include "xprospect/params.hpp"

namespace xprospect {

Var Tape::constant(Tensor value, std::string label) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, {}, std::move(label), false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, {}, name, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward, std::string label) {
  if (!value.all_finite()) throw NonFiniteError("non-finite activation", label);
  Node node{std::move(value), {}, false, {}, std::move(backward), std::move(label), false};
  for (const auto& v : inputs) {
    if (v.tape() != this) throw InvalidInput("op mixes values from different tapes");
    node.inputs.push_back(v.id());
    node.needs_grad = node.needs_grad || nodes_[v.id()].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  if (loss.value().numel() != 1) throw InvalidInput("backward needs a scalar loss");
  for (auto& n : nodes_) {
    if (n.needs_grad) n.grad = Tensor(n.value.shape());
  }
  auto& root = nodes_[loss.id()];
  if (!root.needs_grad) return;
  root.grad[0] = 1.0f;
  std::vector<Tensor*> slots;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.needs_grad || !n.backward) continue;
    slots.clear();
    for (auto in : n.inputs) slots.push_back(nodes_[in].needs_grad ? &nodes_[in].grad : nullptr);
    n.backward(n.grad, slots);
  }
}

const Tensor& Tape::grad(const Var& v) const {
  const auto& n = nodes_[v.id()];
  if (!n.needs_grad) throw InvalidInput("value '" + n.label + "' does not carry a gradient");
  return n.grad;
}

std::vector<std::pair<std::string, const Tensor*>> Tape::parameter_grads() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (const auto& n : nodes_) {
    if (n.is_parameter) out.emplace_back(n.label, &n.grad);
  }
  return out;
}

ParamStore collect_grads(const Tape& tape, const ParamStore& store) {
  const auto bound = tape.parameter_grads();
  ParamStore grads;
  for (const auto& [name, t] : store) {
    auto it = std::ranges::find(bound, name, &std::pair<std::string, const Tensor*>::first);
    grads.add(name, it != bound.end() ? *it->second : Tensor(t.shape()));
  }
  return grads;
}

Var BoundParams::operator()(const std::string& name) {
  for (const auto& [n, v] : bound_) {
    if (n == name) return v;
  }
  Var v = tape_.parameter(name, store_.at(name));
  bound_.emplace_back(name, v);
  return v;
}

namespace ag {

namespace {

void expect(bool ok, const std::string& label, const std::string& what) {
  if (!ok) throw InvalidInput(label + ": " + what);
}

}  // namespace

Var conv(const Var& x, const Var& w, const Var& b, const kernels::ConvGeometry& geom,
         const std::string& label) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  kernels::ConvGeometry g = geom;
  const bool two_d = xv.rank() == 4;
  expect(wv.rank() == xv.rank(), label, "kernel rank does not match input rank");
  if (two_d) {
    g.kernel[2] = 1;
    g.stride[2] = 1;
    g.pad[2] = 0;
  }
  const auto in = kernels::Dims5::of(xv);
  const std::size_t cin = wv.dim(wv.rank() - 2), cout = wv.dim(wv.rank() - 1);
  expect(cin == in.c, label, "input has " + std::to_string(in.c) + " channels, kernel expects " +
                                 std::to_string(cin));
  expect(b.value().numel() == cout, label, "bias size mismatch");
  expect(wv.dim(0) == g.kernel[0] && wv.dim(1) == g.kernel[1] && (two_d || wv.dim(2) == g.kernel[2]),
         label, "kernel extent does not match geometry");
  const auto od = kernels::conv_out_dims(in, g);
  const kernels::Dims5 out{in.b, od[0], od[1], od[2], cout};
  Shape shape = two_d ? Shape{out.b, out.s1, out.s2, cout} : Shape{out.b, out.s1, out.s2, out.s3, cout};
  Tensor y(shape);
  kernels::conv_forward(xv.data(), in, wv.data(), b.value().data(), y.data(), out, g);
  const Tensor* xp = &xv;
  const Tensor* wp = &wv;
  return x.tape()->record(
      std::move(y), {x, w, b},
      [xp, wp, in, out, g](const Tensor& gy, std::vector<Tensor*>& gin) {
        kernels::conv_backward(xp->data(), in, wp->data(), gy.data(), out, g,
                               gin[0] ? gin[0]->data() : nullptr, gin[1] ? gin[1]->data() : nullptr,
                               gin[2] ? gin[2]->data() : nullptr);
      },
      label);
}

Var conv_transpose(const Var& x, const Var& w, const Var& b, const kernels::ConvGeometry& geom,
                   const std::vector<std::size_t>& out_spatial, const std::string& label) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  kernels::ConvGeometry g = geom;
  const bool two_d = xv.rank() == 4;
  expect(wv.rank() == xv.rank(), label, "kernel rank does not match input rank");
  expect(out_spatial.size() == (two_d ? 2u : 3u), label, "output extent count mismatch");
  if (two_d) {
    g.kernel[2] = 1;
    g.stride[2] = 1;
    g.pad[2] = 0;
  }
  const auto in = kernels::Dims5::of(xv);
  const std::size_t cin = wv.dim(wv.rank() - 2), cout = wv.dim(wv.rank() - 1);
  expect(cin == in.c, label, "input channel mismatch");
  expect(b.value().numel() == cout, label, "bias size mismatch");
  const kernels::Dims5 out{in.b, out_spatial[0], out_spatial[1], two_d ? 1 : out_spatial[2], cout};
  // The output must map back onto the input under the forward geometry.
  const auto back = kernels::conv_out_dims(out, g);
  expect(back[0] == in.s1 && back[1] == in.s2 && back[2] == in.s3, label,
         "transposed output extent inconsistent with stride");
  Shape shape = two_d ? Shape{out.b, out.s1, out.s2, cout} : Shape{out.b, out.s1, out.s2, out.s3, cout};
  Tensor y(shape);
  kernels::conv_transpose_forward(xv.data(), in, wv.data(), b.value().data(), y.data(), out, g);
  const Tensor* xp = &xv;
  const Tensor* wp = &wv;
  return x.tape()->record(
      std::move(y), {x, w, b},
      [xp, wp, in, out, g](const Tensor& gy, std::vector<Tensor*>& gin) {
        kernels::conv_transpose_backward(xp->data(), in, wp->data(), gy.data(), out, g,
                                         gin[0] ? gin[0]->data() : nullptr,
                                         gin[1] ? gin[1]->data() : nullptr,
                                         gin[2] ? gin[2]->data() : nullptr);
      },
      label);
}

Var dense(const Var& x, const Var& w, const Var& b, const std::string& label) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  expect(xv.rank() == 2 && wv.rank() == 2, label, "dense expects (batch, features) and (features, units)");
  const std::size_t batch = xv.dim(0), feat = xv.dim(1), units = wv.dim(1);
  expect(wv.dim(0) == feat, label, "feature count mismatch");
  expect(b.value().numel() == units, label, "bias size mismatch");
  Tensor y({batch, units});
  for (std::size_t n = 0; n < batch; ++n) {
    float* yr = y.data() + n * units;
    std::copy_n(b.value().data(), units, yr);
    const float* xr = xv.data() + n * feat;
    for (std::size_t f = 0; f < feat; ++f) {
      const float a = xr[f];
      const float* wr = wv.data() + f * units;
      for (std::size_t u = 0; u < units; ++u) yr[u] += a * wr[u];
    }
  }
  const Tensor* xp = &xv;
  const Tensor* wp = &wv;
  return x.tape()->record(
      std::move(y), {x, w, b},
      [xp, wp, batch, feat, units](const Tensor& gy, std::vector<Tensor*>& gin) {
        for (std::size_t n = 0; n < batch; ++n) {
          const float* gr = gy.data() + n * units;
          const float* xr = xp->data() + n * feat;
          if (gin[0]) {
            float* gx = gin[0]->data() + n * feat;
            for (std::size_t f = 0; f < feat; ++f) {
              const float* wr = wp->data() + f * units;
              float s = 0.0f;
              for (std::size_t u = 0; u < units; ++u) s += wr[u] * gr[u];
              gx[f] += s;
            }
          }
          if (gin[1]) {
            for (std::size_t f = 0; f < feat; ++f) {
              float* gw = gin[1]->data() + f * units;
              const float a = xr[f];
              for (std::size_t u = 0; u < units; ++u) gw[u] += a * gr[u];
            }
          }
          if (gin[2]) {
            float* gb = gin[2]->data();
            for (std::size_t u = 0; u < units; ++u) gb[u] += gr[u];
          }
        }
      },
      label);
}

Var selu(const Var& x, const std::string& label) {
  const auto& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = xprospect::selu(xv[i]);
  const Tensor* xp = &xv;
  return x.tape()->record(
      std::move(y), {x},
      [xp](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gy.numel(); ++i) {
          (*gin[0])[i] += gy[i] * static_cast<float>(selu_grad((*xp)[i]));
        }
      },
      label);
}

Var sigmoid(const Var& x, const std::string& label) {
  const auto& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = static_cast<float>(logistic(xv[i]));
  const Tensor* xp = &xv;
  return x.tape()->record(
      std::move(y), {x},
      [xp](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gy.numel(); ++i) {
          const double s = logistic((*xp)[i]);
          (*gin[0])[i] += gy[i] * static_cast<float>(s * (1.0 - s));
        }
      },
      label);
}

Var add(const Var& a, const Var& b, const std::string& label) {
  expect(a.shape() == b.shape(), label, "add needs equal shapes");
  Tensor y(a.value());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
  return a.tape()->record(
      std::move(y), {a, b},
      [](const Tensor& gy, std::vector<Tensor*>& gin) {
        for (auto* g : gin) {
          if (!g) continue;
          for (std::size_t i = 0; i < gy.numel(); ++i) (*g)[i] += gy[i];
        }
      },
      label);
}

Var scale(const Var& a, float s, const std::string& label) {
  Tensor y(a.value());
  for (auto& v : y.values()) v *= s;
  return a.tape()->record(
      std::move(y), {a},
      [s](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gy.numel(); ++i) (*gin[0])[i] += s * gy[i];
      },
      label);
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape()->record(
      std::move(y), {x},
      [](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gy.numel(); ++i) (*gin[0])[i] += gy[i];
      },
      "reshape");
}

Var concat_channels(const std::vector<Var>& xs, const std::string& label) {
  expect(!xs.empty(), label, "concat of nothing");
  const Shape& s0 = xs[0].shape();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& v : xs) {
    const Shape& s = v.shape();
    expect(s.size() == s0.size() && std::equal(s.begin(), s.end() - 1, s0.begin()), label,
           "concat operands disagree outside the channel axis: " + shape_str(s0) + " vs " + shape_str(s));
    widths.push_back(s.back());
    total += s.back();
  }
  Shape shape = s0;
  shape.back() = total;
  Tensor y(shape);
  const std::size_t positions = y.numel() / total;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const float* src = xs[k].value().data();
    for (std::size_t p = 0; p < positions; ++p) {
      std::copy_n(src + p * widths[k], widths[k], y.data() + p * total + offset);
    }
    offset += widths[k];
  }
  return xs[0].tape()->record(
      std::move(y), xs,
      [widths, total, positions](const Tensor& gy, std::vector<Tensor*>& gin) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < gin.size(); ++k) {
          if (gin[k]) {
            float* dst = gin[k]->data();
            for (std::size_t p = 0; p < positions; ++p)
              for (std::size_t c = 0; c < widths[k]; ++c) dst[p * widths[k] + c] += gy[p * total + off + c];
          }
          off += widths[k];
        }
      },
      label);
}

Var replicate_depth(const Var& x, std::size_t depth, const std::string& label) {
  const auto& xv = x.value();
  expect(xv.rank() == 4, label, "replicate_depth needs a rank-4 input");
  expect(depth >= 1, label, "depth must be at least 1");
  const std::size_t c = xv.dim(3), positions = xv.dim(0) * xv.dim(1) * xv.dim(2);
  Tensor y({xv.dim(0), xv.dim(1), xv.dim(2), depth, c});
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t d = 0; d < depth; ++d) std::copy_n(xv.data() + p * c, c, y.data() + (p * depth + d) * c);
  return x.tape()->record(
      std::move(y), {x},
      [positions, depth, c](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        for (std::size_t p = 0; p < positions; ++p)
          for (std::size_t d = 0; d < depth; ++d)
            for (std::size_t k = 0; k < c; ++k) (*gin[0])[p * c + k] += gy[(p * depth + d) * c + k];
      },
      label);
}

Var permute_average(const Var& a, const Var& s, const std::string& label) {
  const Shape& sa = a.shape();
  const Shape& ss = s.shape();
  expect(sa.size() == 5 && ss.size() == 5, label, "permute_average needs rank-5 inputs");
  expect(sa[0] == ss[0] && sa[1] == ss[1] && sa[2] == ss[3] && sa[3] == ss[2] && sa[4] == ss[4], label,
         "shapes " + shape_str(sa) + " and " + shape_str(ss) + " do not agree after swapping axes 2 and 3");
  const std::size_t nb = sa[0], n1 = sa[1], n2 = sa[2], n3 = sa[3], nc = sa[4];
  auto a_index = [=](std::size_t b, std::size_t i, std::size_t j, std::size_t k) {
    return (((b * n1 + i) * n2 + j) * n3 + k) * nc;
  };
  auto s_index = [=](std::size_t b, std::size_t i, std::size_t j, std::size_t k) {
    return (((b * n1 + i) * n3 + k) * n2 + j) * nc;
  };
  Tensor y(sa);
  const float* av = a.value().data();
  const float* sv = s.value().data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        for (std::size_t k = 0; k < n3; ++k) {
          const std::size_t ai = a_index(b, i, j, k), si = s_index(b, i, j, k);
          for (std::size_t c = 0; c < nc; ++c) y[ai + c] = (av[ai + c] + sv[si + c]) / 2.0f;
        }
  return a.tape()->record(
      std::move(y), {a, s},
      [=](const Tensor& gy, std::vector<Tensor*>& gin) {
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t i = 0; i < n1; ++i)
            for (std::size_t j = 0; j < n2; ++j)
              for (std::size_t k = 0; k < n3; ++k) {
                const std::size_t ai = a_index(b, i, j, k), si = s_index(b, i, j, k);
                for (std::size_t c = 0; c < nc; ++c) {
                  const float g = 0.5f * gy[ai + c];
                  if (gin[0]) (*gin[0])[ai + c] += g;
                  if (gin[1]) (*gin[1])[si + c] += g;
                }
              }
      },
      label);
}

namespace {

Tensor scalar(double v) { return Tensor({1}, std::vector<float>{static_cast<float>(v)}); }

}  // namespace

Var mse(const Var& pred, const Tensor& target) {
  const auto& p = pred.value();
  expect(p.shape() == target.shape(), "mse", "prediction " + shape_str(p.shape()) +
                                                 " vs target " + shape_str(target.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = static_cast<double>(p[i]) - target[i];
    acc += d * d;
  }
  const double n = static_cast<double>(p.numel());
  const Tensor* pp = &p;
  return pred.tape()->record(
      scalar(acc / n), {pred},
      [pp, target, n](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const double k = 2.0 * gy[0] / n;
        for (std::size_t i = 0; i < pp->numel(); ++i) {
          (*gin[0])[i] += static_cast<float>(k * (static_cast<double>((*pp)[i]) - target[i]));
        }
      },
      "mse");
}

Var mae(const Var& pred, const Tensor& target) {
  const auto& p = pred.value();
  expect(p.shape() == target.shape(), "mae", "prediction " + shape_str(p.shape()) +
                                                 " vs target " + shape_str(target.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) acc += std::abs(static_cast<double>(p[i]) - target[i]);
  const double n = static_cast<double>(p.numel());
  const Tensor* pp = &p;
  return pred.tape()->record(
      scalar(acc / n), {pred},
      [pp, target, n](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const float k = static_cast<float>(gy[0] / n);
        for (std::size_t i = 0; i < pp->numel(); ++i) {
          const float d = (*pp)[i] - target[i];
          (*gin[0])[i] += d > 0.0f ? k : (d < 0.0f ? -k : 0.0f);
        }
      },
      "mae");
}

Var mean_abs_diff(const Var& a, const Var& b) {
  expect(a.shape() == b.shape(), "mean_abs_diff", "operand shapes differ");
  const auto& av = a.value();
  const auto& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) acc += std::abs(static_cast<double>(av[i]) - bv[i]);
  const double n = static_cast<double>(av.numel());
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return a.tape()->record(
      scalar(acc / n), {a, b},
      [ap, bp, n](const Tensor& gy, std::vector<Tensor*>& gin) {
        const float k = static_cast<float>(gy[0] / n);
        for (std::size_t i = 0; i < ap->numel(); ++i) {
          const float d = (*ap)[i] - (*bp)[i];
          const float g = d > 0.0f ? k : (d < 0.0f ? -k : 0.0f);
          if (gin[0]) (*gin[0])[i] += g;
          if (gin[1]) (*gin[1])[i] -= g;
        }
      },
      "mean_abs_diff");
}

Var mean_sq_to(const Var& x, float target) {
  const auto& xv = x.value();
  double acc = 0.0;
  for (float v : xv.values()) {
    const double d = static_cast<double>(v) - target;
    acc += d * d;
  }
  const double n = static_cast<double>(xv.numel());
  const Tensor* xp = &xv;
  return x.tape()->record(
      scalar(acc / n), {x},
      [xp, target, n](const Tensor& gy, std::vector<Tensor*>& gin) {
        if (!gin[0]) return;
        const double k = 2.0 * gy[0] / n;
        for (std::size_t i = 0; i < xp->numel(); ++i) {
          (*gin[0])[i] += static_cast<float>(k * (static_cast<double>((*xp)[i]) - target));
        }
      },
      "mean_sq_to");
}

}  // namespace ag

}  // namespace xprospect
