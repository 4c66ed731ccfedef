#include "xprospect/reconnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <optional>
#include <random>

#include "xprospect/error.hpp"
#include "xprospect/projection.hpp"
#include "xprospect/seed.hpp"

namespace xprospect {

namespace {

bool is_pow2(std::size_t v) { return v != 0 && std::has_single_bit(v); }

std::size_t integer_cbrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::llround(std::cbrt(static_cast<double>(n))));
  return r * r * r == n ? r : 0;
}

const kernels::ConvGeometry k3{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
const kernels::ConvGeometry k3_stride2{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
const kernels::ConvGeometry k1{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}};

const char* const kViews[2] = {"frontal", "lateral"};

void expect_rank(const Var& v, std::size_t rank, const std::string& where) {
  if (v.value().rank() != rank) {
    throw InvalidInput(where + ": expected rank-" + std::to_string(rank) + " features, got " +
                       shape_str(v.shape()));
  }
}

std::string stage_name(const std::string& base, std::size_t i) { return base + "." + std::to_string(i); }

}  // namespace

void ModelConfig::validate() const {
  if (input_size < 8 || !is_pow2(input_size)) {
    throw ConfigError("input_size must be a power of two >= 8, got " + std::to_string(input_size));
  }
  const std::size_t n = integer_cbrt(dense_units);
  if (n == 0) throw ConfigError("dense_units must be a perfect cube, got " + std::to_string(dense_units));
  if (!is_pow2(n) || n > input_size) {
    throw ConfigError("cbrt(dense_units) must be a power of two no larger than input_size");
  }
  if (base_channels == 0) throw ConfigError("base_channels must be positive");
}

std::size_t ModelConfig::cube_side() const { return integer_cbrt(dense_units); }

std::size_t ModelConfig::stages() const {
  return static_cast<std::size_t>(std::countr_zero(input_size / cube_side()));
}

std::size_t ModelConfig::encoder_channels(std::size_t stage) const { return base_channels << stage; }

std::size_t ModelConfig::decoder_channels(std::size_t level) const {
  const std::size_t k = stages();
  return base_channels << std::min(level, k == 0 ? 0 : k - 1);
}

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;  // 0 marks a bias
};

void conv_spec(std::vector<ParamSpec>& out, const std::string& name, Shape kernel, std::size_t cin,
               std::size_t cout) {
  std::size_t taps = 1;
  for (auto k : kernel) taps *= k;
  Shape shape = kernel;
  shape.push_back(cin);
  shape.push_back(cout);
  out.push_back({name + ".w", shape, taps * cin});
  out.push_back({name + ".b", {cout}, 0});
}

std::vector<ParamSpec> layout(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.stages(), n = cfg.cube_side();
  const std::size_t bp = cfg.use_backprojection ? 1 : 0;
  std::vector<ParamSpec> out;
  for (const char* view : kViews) {
    const std::string v = view;
    std::size_t cin = 1;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t ch = cfg.encoder_channels(i);
      conv_spec(out, stage_name("enc." + v, i) + ".conv", {3, 3}, cin, ch);
      conv_spec(out, stage_name("enc." + v, i) + ".down", {3, 3}, ch, ch);
      cin = ch;
    }
    out.push_back({"conn_a." + v + ".dense.w", {n * n * cin, cfg.dense_units}, n * n * cin});
    out.push_back({"conn_a." + v + ".dense.b", {cfg.dense_units}, 0});
    conv_spec(out, "conn_a." + v + ".conv", {3, 3, 3}, 1, cfg.decoder_channels(k));
    for (std::size_t j = k; j-- > 0;) {
      const std::size_t dch = cfg.decoder_channels(j);
      const std::size_t up_in = j + 1 == k ? cfg.decoder_channels(k) : 2 * cfg.decoder_channels(j + 1);
      conv_spec(out, stage_name("dec." + v, j) + ".up", {3, 3, 3}, up_in, dch);
      conv_spec(out, stage_name("conn_b." + v, j) + ".proj", {1, 1}, cfg.encoder_channels(j), dch);
      conv_spec(out, stage_name("conn_b." + v, j) + ".conv", {3, 3, 3}, dch, dch);
    }
  }
  for (std::size_t j = k; j-- > 0;) {
    const std::size_t dch = cfg.decoder_channels(j);
    const std::size_t up_in = j + 1 == k ? cfg.decoder_channels(k) + bp : cfg.decoder_channels(j + 1);
    conv_spec(out, stage_name("fusion", j) + ".up", {3, 3, 3}, up_in, dch);
    conv_spec(out, stage_name("fusion", j) + ".conv", {3, 3, 3}, 3 * dch + bp, dch);
  }
  // With no stages the head reads the level-0 fusion input directly.
  const std::size_t head_in = k == 0 ? cfg.decoder_channels(0) + bp : cfg.decoder_channels(0);
  conv_spec(out, "head", {1, 1, 1}, head_in, 1);
  return out;
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg) {
  ParamStore store;
  for (auto& spec : layout(cfg)) {
    Tensor t(spec.shape);
    if (spec.fan_in > 0) {
      std::mt19937_64 rng(derive_seed(cfg.seed, "init/" + spec.name));
      std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(spec.fan_in)));
      for (auto& v : t.values()) v = static_cast<float>(dist(rng));
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

namespace connection {

Var a(BoundParams& params, const std::string& prefix, const Var& bottleneck, const ModelConfig& cfg) {
  expect_rank(bottleneck, 4, prefix);
  const auto& s = bottleneck.shape();
  const std::size_t batch = s[0], n = cfg.cube_side();
  if (n == 0) throw ConfigError("dense_units must be a perfect cube");
  Var flat = ag::reshape(bottleneck, {batch, s[1] * s[2] * s[3]});
  Var dense = ag::selu(ag::dense(flat, params(prefix + ".dense.w"), params(prefix + ".dense.b"), prefix + ".dense"),
                       prefix + ".dense.selu");
  Var cube = ag::reshape(dense, {batch, n, n, n, 1});
  return ag::selu(ag::conv(cube, params(prefix + ".conv.w"), params(prefix + ".conv.b"), k3, prefix + ".conv"),
                  prefix + ".conv.selu");
}

Var b(BoundParams& params, const std::string& prefix, const Var& skip, std::size_t depth) {
  expect_rank(skip, 4, prefix);
  Var proj = ag::selu(ag::conv(skip, params(prefix + ".proj.w"), params(prefix + ".proj.b"), k1, prefix + ".proj"),
                      prefix + ".proj.selu");
  Var expanded = ag::replicate_depth(proj, depth, prefix + ".replicate");
  return ag::selu(
      ag::conv(expanded, params(prefix + ".conv.w"), params(prefix + ".conv.b"), k3, prefix + ".conv"),
      prefix + ".conv.selu");
}

Var c(const Var& coronal, const Var& sagittal) { return ag::permute_average(coronal, sagittal, "connection_c"); }

Var d(const Var& coronal, const Var& sagittal, const Var& prev_fusion) {
  Var avg = c(coronal, sagittal);
  const auto& a = avg.shape();
  const auto& p = prev_fusion.shape();
  if (p.size() != 5 || !std::equal(a.begin(), a.end() - 1, p.begin())) {
    throw InvalidInput("connection_d: spatial mismatch between " + shape_str(a) + " and " + shape_str(p));
  }
  return ag::concat_channels({avg, prev_fusion}, "connection_d");
}

}  // namespace connection

namespace {

// Runs a tape-level op on plain tensors and returns its value.
template <typename F>
Tensor eval_detached(F&& f) {
  Tape tape;
  return Tensor(f(tape).value());
}

}  // namespace

Tensor connection_a(const Tensor& bottleneck, const ParamStore& params, const std::string& prefix,
                    const ModelConfig& cfg) {
  return eval_detached([&](Tape& t) {
    BoundParams bound(t, params);
    return connection::a(bound, prefix, t.constant(bottleneck), cfg);
  });
}

Tensor connection_b(const Tensor& skip, const ParamStore& params, const std::string& prefix, std::size_t depth) {
  return eval_detached([&](Tape& t) {
    BoundParams bound(t, params);
    return connection::b(bound, prefix, t.constant(skip), depth);
  });
}

Tensor connection_c(const Tensor& coronal, const Tensor& sagittal) {
  return eval_detached([&](Tape& t) { return connection::c(t.constant(coronal), t.constant(sagittal)); });
}

Tensor connection_d(const Tensor& coronal, const Tensor& sagittal, const Tensor& prev_fusion) {
  return eval_detached([&](Tape& t) {
    return connection::d(t.constant(coronal), t.constant(sagittal), t.constant(prev_fusion));
  });
}

Tensor volume_to_features(const Volume3D& v) {
  if (!v.cubic()) throw InvalidInput("volume_to_features needs a cubic volume");
  const std::size_t d = v.dz();
  Tensor t({1, d, d, d, 1});
  std::size_t o = 0;
  for (std::size_t z = 0; z < d; ++z)
    for (std::size_t x = 0; x < d; ++x)
      for (std::size_t y = 0; y < d; ++y) t[o++] = v.at(z, y, x);
  return t;
}

Volume3D features_to_volume(const Tensor& t) {
  if (t.rank() != 5 || t.dim(0) != 1 || t.dim(4) != 1 || t.dim(1) != t.dim(2) || t.dim(2) != t.dim(3)) {
    throw InvalidInput("features_to_volume needs shape (1, d, d, d, 1), got " + shape_str(t.shape()));
  }
  const std::size_t d = t.dim(1);
  std::vector<float> out(d * d * d);
  for (std::size_t z = 0; z < d; ++z)
    for (std::size_t x = 0; x < d; ++x)
      for (std::size_t y = 0; y < d; ++y) out[(z * d + y) * d + x] = t[((z * d + x) * d + y)];
  return Volume3D(d, d, d, std::move(out), Domain::Unit);
}

namespace {

Tensor image_features(const Image2D& img) {
  return Tensor({1, img.rows(), img.cols(), 1}, std::vector<float>(img.data().begin(), img.data().end()));
}

struct ViewStreams {
  // Decoder outputs indexed by level; level k holds the Connection-A output.
  std::vector<Var> decoded;
};

ViewStreams run_view(BoundParams& params, const ModelConfig& cfg, const std::string& view, const Image2D& img) {
  Tape& tape = params.tape();
  const std::size_t k = cfg.stages();
  Var x = tape.constant(image_features(img), "input." + view);
  std::vector<Var> skips;
  for (std::size_t i = 0; i < k; ++i) {
    const std::string p = stage_name("enc." + view, i);
    expect_rank(x, 4, p);
    x = ag::selu(ag::conv(x, params(p + ".conv.w"), params(p + ".conv.b"), k3, p + ".conv"), p + ".conv.selu");
    skips.push_back(x);
    x = ag::selu(ag::conv(x, params(p + ".down.w"), params(p + ".down.b"), k3_stride2, p + ".down"),
                 p + ".down.selu");
  }
  ViewStreams out;
  out.decoded.resize(k + 1);
  Var y = connection::a(params, "conn_a." + view, x, cfg);
  out.decoded[k] = y;
  for (std::size_t j = k; j-- > 0;) {
    const std::string p = stage_name("dec." + view, j);
    const std::size_t res = cfg.input_size >> j;
    expect_rank(y, 5, p);
    Var up = ag::selu(ag::conv_transpose(y, params(p + ".up.w"), params(p + ".up.b"), k3_stride2, {res, res, res},
                                         p + ".up"),
                      p + ".up.selu");
    Var skip3d = connection::b(params, stage_name("conn_b." + view, j), skips[j], res);
    y = ag::concat_channels({up, skip3d}, p + ".concat");
    out.decoded[j] = y;
  }
  return out;
}

}  // namespace

Var forward_on_tape(Tape& tape, const ParamStore& params, const ModelConfig& cfg, const Image2D& frontal,
                    const Image2D& lateral) {
  cfg.validate();
  const std::size_t s = cfg.input_size, k = cfg.stages();
  for (const Image2D* img : {&frontal, &lateral}) {
    if (img->rows() != s || img->cols() != s) {
      throw InvalidInput("input image is " + std::to_string(img->rows()) + "x" + std::to_string(img->cols()) +
                         ", model expects " + std::to_string(s) + "x" + std::to_string(s));
    }
  }
  BoundParams bound(tape, params);
  const ViewStreams cor = run_view(bound, cfg, "frontal", frontal);
  const ViewStreams sag = run_view(bound, cfg, "lateral", lateral);

  std::optional<Volume3D> fused;
  if (cfg.use_backprojection) fused = fuse_backprojections(frontal, lateral);
  auto with_injection = [&](const Var& x, std::size_t level, const std::string& label) {
    if (!fused) return x;
    const Volume3D pooled = downsample_volume_mean(*fused, std::size_t{1} << level);
    Var bp = tape.constant(volume_to_features(pooled), label + ".backprojection");
    return ag::concat_channels({x, bp}, label + ".inject");
  };

  Var f = connection::c(cor.decoded[k], sag.decoded[k]);
  f = with_injection(f, k, stage_name("fusion", k));
  for (std::size_t j = k; j-- > 0;) {
    const std::string p = stage_name("fusion", j);
    const std::size_t res = s >> j;
    expect_rank(f, 5, p);
    Var up = ag::selu(
        ag::conv_transpose(f, bound(p + ".up.w"), bound(p + ".up.b"), k3_stride2, {res, res, res}, p + ".up"),
        p + ".up.selu");
    Var merged = with_injection(connection::d(cor.decoded[j], sag.decoded[j], up), j, p);
    f = ag::selu(ag::conv(merged, bound(p + ".conv.w"), bound(p + ".conv.b"), k3, p + ".conv"), p + ".conv.selu");
  }
  Var logits = ag::conv(f, bound("head.w"), bound("head.b"), k1, "head");
  return ag::sigmoid(logits, "head.logistic");
}

Volume3D forward(const ParamStore& params, const ModelConfig& cfg, const Image2D& frontal, const Image2D& lateral) {
  Tape tape;
  Var out = forward_on_tape(tape, params, cfg, frontal, lateral);
  return features_to_volume(out.value());
}

}  // namespace xprospect
