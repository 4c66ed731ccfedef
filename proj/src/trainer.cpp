#include "xprospect/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include "xprospect/error.hpp"
#include "xprospect/io.hpp"
#include "xprospect/projection.hpp"
#include "xprospect/seed.hpp"

namespace xprospect {

std::string to_string(LossKind k) { return k == LossKind::MSE ? "MSE" : "MAE"; }
std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "Adam" : "Nadam"; }

LossKind parse_loss(const std::string& s) {
  if (s == "MSE" || s == "mse") return LossKind::MSE;
  if (s == "MAE" || s == "mae") return LossKind::MAE;
  throw InvalidInput("unknown loss '" + s + "' (expected MSE or MAE)");
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "Adam" || s == "adam") return OptimizerKind::Adam;
  if (s == "Nadam" || s == "nadam") return OptimizerKind::Nadam;
  throw InvalidInput("unknown optimizer '" + s + "' (expected Adam or Nadam)");
}

namespace {

void check_dims(const Volume3D& a, const Volume3D& b, const char* what) {
  if (a.dz() != b.dz() || a.dy() != b.dy() || a.dx() != b.dx()) {
    throw InvalidInput(std::string(what) + ": volume dims differ");
  }
}

template <typename F>
double mean_over(std::span<const float> a, std::span<const float> b, F f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += f(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return acc / static_cast<double>(a.size());
}

double tensor_loss(const Tensor& pred, const Tensor& target, LossKind kind) {
  if (kind == LossKind::MSE) return mean_over(pred.values(), target.values(), [](double d) { return d * d; });
  return mean_over(pred.values(), target.values(), [](double d) { return std::abs(d); });
}

Var loss_on_tape(const Var& pred, const Tensor& target, LossKind kind) {
  return kind == LossKind::MSE ? ag::mse(pred, target) : ag::mae(pred, target);
}

}  // namespace

double mse(const Volume3D& pred, const Volume3D& label) {
  check_dims(pred, label, "mse");
  return mean_over(pred.data(), label.data(), [](double d) { return d * d; });
}

double mae(const Volume3D& pred, const Volume3D& label) {
  check_dims(pred, label, "mae");
  return mean_over(pred.data(), label.data(), [](double d) { return std::abs(d); });
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (use_ema && !(ema.decay >= 0.0 && ema.decay < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
}

ParamStore loss_gradients(const ParamStore& params, const ModelConfig& cfg, LossKind loss,
                          const TrainingSample& sample, double* loss_value) {
  Tape tape;
  Var pred = forward_on_tape(tape, params, cfg, sample.frontal, sample.lateral);
  Var l = loss_on_tape(pred, volume_to_features(sample.label), loss);
  tape.backward(l);
  if (loss_value) *loss_value = tensor_loss(pred.value(), volume_to_features(sample.label), loss);
  return collect_grads(tape, params);
}

namespace {

class FlushDenormals {
 public:
  FlushDenormals() {
#if defined(__SSE2__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);
#endif
  }
  ~FlushDenormals() {
#if defined(__SSE2__)
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const OptimizerConfig& opt,
                  const std::vector<TrainingSample>& samples, const TrainHooks& hooks) {
  model.validate();
  cfg.validate();
  opt.validate();
  if (samples.empty() && cfg.epochs > 0) throw InvalidInput("no training samples");
  for (const auto& s : samples) {
    if (s.label.dz() != model.input_size || !s.label.cubic()) {
      throw InvalidInput("sample '" + s.id + "' label is not " + std::to_string(model.input_size) + "^3");
    }
  }

  const FlushDenormals ftz;
  TrainResult result;
  result.params = init_params(model);
  if (cfg.prior_head_bias && !samples.empty()) {
    double sum = 0.0, count = 0.0;
    for (const auto& s : samples) {
      for (float v : s.label.data()) sum += v;
      count += static_cast<double>(s.label.size());
    }
    const double mean = std::clamp(sum / count, 1e-4, 1.0 - 1e-4);
    for (auto& b : result.params.at("head.b").values()) b = static_cast<float>(std::log(mean / (1.0 - mean)));
  }
  result.optimizer = OptimizerState::zeros_like(result.params);
  if (cfg.use_ema) result.ema.emplace(result.params, cfg.ema);
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = seeded_permutation(samples.size(), derive_seed(cfg.seed, "shuffle/epoch/" + std::to_string(epoch)));
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t last = std::min(order.size(), first + cfg.batch_size);
      const std::uint64_t step = result.optimizer.step + 1;
      ParamStore grads;
      double batch_loss = 0.0;
      for (std::size_t k = first; k < last; ++k) {
        double value = 0.0;
        ParamStore g;
        try {
          g = loss_gradients(result.params, model, cfg.loss, samples[order[k]], &value);
        } catch (const NonFiniteError& e) {
          throw NonFiniteError(e.what(), "step " + std::to_string(step));
        }
        if (!std::isfinite(value)) throw NonFiniteError("non-finite loss", "step " + std::to_string(step));
        batch_loss += value;
        if (k == first) {
          grads = std::move(g);
        } else {
          auto it = g.begin();
          for (auto& [name, t] : grads) {
            const auto& src = it++->second;
            for (std::size_t i = 0; i < t.numel(); ++i) t[i] += src[i];
          }
        }
      }
      const float inv = 1.0f / static_cast<float>(last - first);
      if (last - first > 1) {
        for (auto& [name, t] : grads)
          for (auto& v : t.values()) v *= inv;
      }
      try {
        optimizer_step(result.params, grads, result.optimizer, opt);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(e.what(), "step " + std::to_string(step));
      }
      if (result.ema) {
        ema_update(*result.ema, result.params);
        if (cfg.ema.reset_interval > 0 && step % cfg.ema.reset_interval == 0) ema_reset(result.params, *result.ema);
      }
      const auto ms = hooks.wall_clock ? std::chrono::duration_cast<std::chrono::milliseconds>(
                                             std::chrono::steady_clock::now() - start)
                                             .count()
                                       : 0;
      StepRecord rec{step, epoch, cfg.loss, batch_loss / static_cast<double>(last - first), ms};
      result.log.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
        hooks.on_checkpoint(step, result.params, result.ema ? &*result.ema : nullptr);
      }
    }
  }
  return result;
}

std::vector<TrainingSample> load_samples(const DatasetManifest& manifest, Split split) {
  std::vector<TrainingSample> out;
  std::string problems;
  for (const auto& row : manifest.rows) {
    if (row.split != split) continue;
    try {
      if (row.frontal_path.empty() || row.lateral_path.empty()) throw Error("row has no projections");
      out.push_back({row.id, load_image(manifest.resolve(row.frontal_path).string()),
                     load_image(manifest.resolve(row.lateral_path).string()),
                     load_volume(manifest.resolve(row.ct_path).string())});
    } catch (const Error& e) {
      problems += "  " + row.id + ": " + e.what() + "\n";
    }
  }
  if (!problems.empty()) throw InvalidInput("manifest rows could not be loaded:\n" + problems);
  return out;
}

std::string log_header() { return "step\tepoch\tloss_name\tloss_value\twall_ms\n"; }

std::string log_line(const StepRecord& r) {
  char value[64];
  std::snprintf(value, sizeof value, "%.9g", r.value);
  return std::to_string(r.step) + "\t" + std::to_string(r.epoch) + "\t" + to_string(r.loss) + "\t" + value + "\t" +
         std::to_string(r.wall_ms) + "\n";
}

std::string encode_log(const std::vector<StepRecord>& log) {
  std::string out = log_header();
  for (const auto& r : log) out += log_line(r);
  return out;
}

bool GradCheckReport::passed() const {
  return std::ranges::all_of(tensors, [](const TensorCheck& t) { return t.passed; });
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport fd_check(const ParamStore& params, const ParamStore& analytic,
                         const std::function<double(const ParamStore&)>& loss, double tolerance,
                         const GradCheckOptions& opts) {
  if (!params.same_layout(analytic)) throw InvalidInput("gradient layout does not match parameters");
  GradCheckReport report;
  report.tolerance = tolerance;
  ParamStore probe = params;
  auto a_it = analytic.begin();
  for (auto& [name, tensor] : probe) {
    const Tensor& grad = a_it++->second;
    TensorCheck check{name};
    auto picks = seeded_permutation(tensor.numel(), derive_seed(opts.seed, "gradcheck/" + name));
    picks.resize(std::min(picks.size(), opts.samples_per_tensor));
    for (std::size_t i : picks) {
      const float orig = tensor[i];
      const float hi = orig + static_cast<float>(opts.step), lo = orig - static_cast<float>(opts.step);
      tensor[i] = hi;
      const double up = loss(probe);
      tensor[i] = lo;
      const double down = loss(probe);
      tensor[i] = orig;
      const double fd = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      check.max_error = std::max(check.max_error, relative_error(grad[i], fd));
      ++check.sampled;
    }
    check.passed = check.max_error < tolerance;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

GradCheckReport grad_check(const ParamStore& params, const ModelConfig& cfg, const TrainingSample& sample,
                           double tolerance, const GradCheckOptions& opts) {
  const ParamStore analytic = loss_gradients(params, cfg, opts.loss, sample);
  const Tensor target = volume_to_features(sample.label);
  auto loss_at = [&](const ParamStore& p) {
    Tape tape;
    return tensor_loss(forward_on_tape(tape, p, cfg, sample.frontal, sample.lateral).value(), target, opts.loss);
  };
  return fd_check(params, analytic, loss_at, tolerance, opts);
}

TrainingSample phantom_sample(std::uint64_t seed, std::size_t size) {
  Volume3D label = make_phantom(seed, size);
  Image2D frontal = mean_project(label, View::Frontal);
  Image2D lateral = mean_project(label, View::Lateral);
  return {"phantom-" + std::to_string(seed), std::move(frontal), std::move(lateral), std::move(label)};
}

GradCheckReport grad_check(const ModelConfig& cfg, double tolerance, const GradCheckOptions& opts) {
  TrainingSample sample = phantom_sample(derive_seed(cfg.seed, "gradcheck/sample"), cfg.input_size);
  std::mt19937_64 rng(derive_seed(cfg.seed, "gradcheck/images"));
  std::uniform_real_distribution<float> unit(0.05f, 0.95f);
  const std::size_t s = cfg.input_size;
  std::vector<float> f(s * s), l(s * s);
  for (auto& v : f) v = unit(rng);
  for (auto& v : l) v = unit(rng);
  sample.frontal = Image2D(s, s, std::move(f), View::Frontal);
  sample.lateral = Image2D(s, s, std::move(l), View::Lateral);
  return grad_check(init_params(cfg), cfg, sample, tolerance, opts);
}

}  // namespace xprospect
