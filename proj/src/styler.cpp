#include "xprospect/styler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "xprospect/dataset.hpp"
#include "xprospect/error.hpp"
#include "xprospect/projection.hpp"
#include "xprospect/seed.hpp"

namespace xprospect {

namespace {

const kernels::ConvGeometry k3{{3, 3, 1}, {1, 1, 1}, {1, 1, 0}};
const kernels::ConvGeometry k3_stride2{{3, 3, 1}, {2, 2, 1}, {1, 1, 0}};
const kernels::ConvGeometry k1{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}};

void add_conv(ParamStore& store, const StyleConfig& cfg, const std::string& name, std::size_t k, std::size_t cin,
              std::size_t cout, double gain = 1.0) {
  Tensor w({k, k, cin, cout});
  std::mt19937_64 rng(derive_seed(cfg.seed, "style/init/" + name));
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(1.0 / static_cast<double>(k * k * cin)));
  for (auto& v : w.values()) v = static_cast<float>(dist(rng));
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor({cout}));
}

Tensor image_tensor(const Image2D& img) {
  return Tensor({1, img.rows(), img.cols(), 1}, std::vector<float>(img.data().begin(), img.data().end()));
}

Image2D tensor_image(const Tensor& t, View view) {
  return Image2D(t.dim(1), t.dim(2), std::vector<float>(t.values().begin(), t.values().end()), view);
}

Var conv_layer(BoundParams& p, const std::string& name, const Var& x, const kernels::ConvGeometry& g) {
  return ag::conv(x, p(name + ".w"), p(name + ".b"), g, name);
}

void check_images(const std::vector<Image2D>& set, std::size_t size, const char* which) {
  if (set.empty()) throw InvalidInput(std::string("style training needs a non-empty ") + which + " set");
  for (const auto& img : set) {
    if (img.rows() != size || img.cols() != size) {
      throw InvalidInput(std::string(which) + " image is " + std::to_string(img.rows()) + "x" +
                         std::to_string(img.cols()) + ", expected " + std::to_string(size));
    }
  }
}

void require_same_dims(const Image2D& a, const Image2D& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput(std::string(what) + ": image size mismatch");
}

std::vector<double> widen(const Image2D& img) { return {img.data().begin(), img.data().end()}; }

}  // namespace

void StyleConfig::validate() const {
  if (!(lambda_cyc > 0.0)) throw ConfigError("lambda_cyc must be positive");
  if (gen_channels == 0 || disc_channels == 0) throw ConfigError("channel widths must be positive");
  if (image_size < 4 || image_size % 4 != 0) throw ConfigError("style image size must be a multiple of 4");
  if (!(residual_init >= 0.0)) throw ConfigError("residual_init must be non-negative");
  if (use_ema && !(ema.decay >= 0.0 && ema.decay < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
  optimizer.validate();
}

ParamStore init_generators(const StyleConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.gen_channels;
  ParamStore store;
  for (const char* g : {"G", "F"}) {
    const std::string p = g;
    add_conv(store, cfg, p + ".enc", 3, 1, c);
    add_conv(store, cfg, p + ".down", 3, c, 2 * c);
    add_conv(store, cfg, p + ".up", 3, 2 * c, c);
    add_conv(store, cfg, p + ".out", 1, c, 1, cfg.residual_init);
  }
  return store;
}

ParamStore init_discriminators(const StyleConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.disc_channels;
  ParamStore store;
  for (const char* d : {"DX", "DY"}) {
    const std::string p = d;
    add_conv(store, cfg, p + ".l0", 3, 1, c);
    add_conv(store, cfg, p + ".l1", 3, c, 2 * c);
    add_conv(store, cfg, p + ".l2", 3, 2 * c, 1);
  }
  return store;
}

Var generator_on_tape(BoundParams& p, const std::string& prefix, const Var& x) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[3] != 1 || s[1] % 2 != 0 || s[2] % 2 != 0) {
    throw InvalidInput(prefix + ": generator needs a (b, h, w, 1) input with even extents, got " + shape_str(s));
  }
  Var h = ag::selu(conv_layer(p, prefix + ".enc", x, k3), prefix + ".enc.selu");
  h = ag::selu(conv_layer(p, prefix + ".down", h, k3_stride2), prefix + ".down.selu");
  h = ag::selu(ag::conv_transpose(h, p(prefix + ".up.w"), p(prefix + ".up.b"), k3_stride2, {s[1], s[2]},
                                  prefix + ".up"),
               prefix + ".up.selu");
  return ag::add(x, conv_layer(p, prefix + ".out", h, k1), prefix + ".residual");
}

Var discriminator_on_tape(BoundParams& p, const std::string& prefix, const Var& x) {
  Var h = ag::selu(conv_layer(p, prefix + ".l0", x, k3_stride2), prefix + ".l0.selu");
  h = ag::selu(conv_layer(p, prefix + ".l1", h, k3_stride2), prefix + ".l1.selu");
  return conv_layer(p, prefix + ".l2", h, k3);
}

Image2D run_generator(const ParamStore& generators, const std::string& prefix, const Image2D& img) {
  Tape tape;
  BoundParams bound(tape, generators);
  Var y = generator_on_tape(bound, prefix, tape.constant(image_tensor(img), "input"));
  return tensor_image(y.value(), img.view());
}

Image2D stylize(const ParamStore& generators, const Image2D& mean_projection) {
  Image2D raw = run_generator(generators, "G", mean_projection);
  std::vector<float> out(raw.data().begin(), raw.data().end());
  for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
  return Image2D(raw.rows(), raw.cols(), std::move(out), mean_projection.view());
}

double cycle_loss(std::span<const double> x, std::span<const double> fgx, std::span<const double> y,
                  std::span<const double> gfy, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("lambda_cyc must be positive");
  if (x.size() != fgx.size() || y.size() != gfy.size() || x.empty() || y.empty()) {
    throw InvalidInput("cycle_loss: image size mismatch");
  }
  auto mean_abs = [](std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  };
  return lambda * (mean_abs(fgx, x) + mean_abs(gfy, y));
}

double cycle_loss(const Image2D& x, const ImageMap& g, const ImageMap& f, const Image2D& y, double lambda) {
  require_same_dims(x, y, "cycle_loss");
  const Image2D fgx = f(g(x)), gfy = g(f(y));
  require_same_dims(fgx, x, "cycle_loss");
  require_same_dims(gfy, y, "cycle_loss");
  return cycle_loss(widen(x), widen(fgx), widen(y), widen(gfy), lambda);
}

AdversarialLoss adversarial_loss(const Tensor& disc_real, const Tensor& disc_fake) {
  auto mean_sq = [](const Tensor& t, double target) {
    double acc = 0.0;
    for (float v : t.values()) acc += (v - target) * (v - target);
    return acc / static_cast<double>(t.numel());
  };
  return {mean_sq(disc_real, 1.0) + mean_sq(disc_fake, 0.0), mean_sq(disc_fake, 1.0)};
}

namespace {

// Cycles through a set in seeded order, reshuffling after each pass.
class SeededCycler {
 public:
  SeededCycler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}
  std::size_t next() {
    if (pos_ == order_.size()) {
      order_ = seeded_permutation(n_, derive_seed(seed_, "pass/" + std::to_string(pass_++)));
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t pass_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

double scalar(const Var& v) { return v.value()[0]; }

}  // namespace

StyleResult style_train(const StyleConfig& cfg, const std::vector<Image2D>& domain_x,
                        const std::vector<Image2D>& domain_y, const std::function<void(const StyleRecord&)>& on_step) {
  cfg.validate();
  check_images(domain_x, cfg.image_size, "domain X");
  check_images(domain_y, cfg.image_size, "domain Y");

  StyleResult result;
  result.generators = init_generators(cfg);
  result.discriminators = init_discriminators(cfg);
  if (cfg.use_ema) result.ema.emplace(result.generators, cfg.ema);
  auto gen_state = OptimizerState::zeros_like(result.generators);
  auto disc_state = OptimizerState::zeros_like(result.discriminators);
  SeededCycler pick_x(domain_x.size(), derive_seed(cfg.seed, "style/order/x"));
  SeededCycler pick_y(domain_y.size(), derive_seed(cfg.seed, "style/order/y"));
  const float lambda = static_cast<float>(cfg.lambda_cyc);

  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    const Tensor x = image_tensor(domain_x[pick_x.next()]);
    const Tensor y = image_tensor(domain_y[pick_y.next()]);
    const std::string where = "step " + std::to_string(step);
    StyleRecord rec{step, 0.0, 0.0, 0.0};
    try {
      // Discriminators against the current generators' fakes.
      Tensor fake_y, fake_x;
      {
        Tape t;
        BoundParams gen(t, result.generators);
        fake_y = generator_on_tape(gen, "G", t.constant(x)).value();
        fake_x = generator_on_tape(gen, "F", t.constant(y)).value();
      }
      {
        Tape t;
        BoundParams disc(t, result.discriminators);
        Var dy = ag::add(ag::mean_sq_to(discriminator_on_tape(disc, "DY", t.constant(y)), 1.0f),
                         ag::mean_sq_to(discriminator_on_tape(disc, "DY", t.constant(fake_y)), 0.0f), "d_loss.y");
        Var dx = ag::add(ag::mean_sq_to(discriminator_on_tape(disc, "DX", t.constant(x)), 1.0f),
                         ag::mean_sq_to(discriminator_on_tape(disc, "DX", t.constant(fake_x)), 0.0f), "d_loss.x");
        Var d_loss = ag::add(dx, dy, "d_loss");
        t.backward(d_loss);
        rec.d_loss = scalar(d_loss);
        optimizer_step(result.discriminators, collect_grads(t, result.discriminators), disc_state, cfg.optimizer);
      }
      // Generators against the updated discriminators.
      {
        Tape t;
        BoundParams gen(t, result.generators);
        BoundParams disc(t, result.discriminators);
        Var xv = t.constant(x, "x"), yv = t.constant(y, "y");
        Var gx = generator_on_tape(gen, "G", xv);
        Var fy = generator_on_tape(gen, "F", yv);
        Var adv = ag::add(ag::mean_sq_to(discriminator_on_tape(disc, "DY", gx), 1.0f),
                          ag::mean_sq_to(discriminator_on_tape(disc, "DX", fy), 1.0f), "g_adv");
        Var cyc = ag::scale(ag::add(ag::mean_abs_diff(generator_on_tape(gen, "F", gx), xv),
                                    ag::mean_abs_diff(generator_on_tape(gen, "G", fy), yv), "cycle.sum"),
                            lambda, "cycle");
        Var total = ag::add(adv, cyc, "g_loss");
        t.backward(total);
        rec.g_adv = scalar(adv);
        rec.cycle = scalar(cyc);
        optimizer_step(result.generators, collect_grads(t, result.generators), gen_state, cfg.optimizer);
      }
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(e.what(), where);
    }
    if (!std::isfinite(rec.d_loss) || !std::isfinite(rec.g_adv) || !std::isfinite(rec.cycle)) {
      throw NonFiniteError("non-finite style loss", where);
    }
    if (result.ema) {
      ema_update(*result.ema, result.generators);
      if (cfg.ema.reset_interval > 0 && step % cfg.ema.reset_interval == 0) ema_reset(result.generators, *result.ema);
    }
    result.log.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

std::string encode_style_log(const std::vector<StyleRecord>& log) {
  std::string out = "step\td_loss\tg_adv_loss\tcycle_loss\n";
  char line[160];
  for (const auto& r : log) {
    std::snprintf(line, sizeof line, "%llu\t%.9g\t%.9g\t%.9g\n", static_cast<unsigned long long>(r.step), r.d_loss,
                  r.g_adv, r.cycle);
    out += line;
  }
  return out;
}

std::pair<std::vector<Image2D>, std::vector<Image2D>> gamma_toy_task(std::uint64_t seed, std::size_t count,
                                                                     std::size_t size, double gamma) {
  if (!(gamma > 0.0)) throw InvalidInput("gamma must be positive");
  std::pair<std::vector<Image2D>, std::vector<Image2D>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const View view = i % 2 == 0 ? View::Frontal : View::Lateral;
    out.first.push_back(mean_project(make_phantom(derive_seed(seed, "toy/x/" + std::to_string(i)), size), view));
    const Image2D src = mean_project(make_phantom(derive_seed(seed, "toy/y/" + std::to_string(i)), size), view);
    std::vector<float> v(src.data().begin(), src.data().end());
    for (auto& p : v) p = static_cast<float>(std::pow(static_cast<double>(p), gamma));
    out.second.emplace_back(size, size, std::move(v), view);
  }
  return out;
}

}  // namespace xprospect
