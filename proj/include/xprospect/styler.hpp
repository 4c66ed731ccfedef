#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xprospect/optim.hpp"
#include "xprospect/params.hpp"
#include "xprospect/tape.hpp"
#include "xprospect/volume.hpp"

namespace xprospect {

/// Cycle-consistent style transfer between mean projections (domain X) and
/// X-ray-like images (domain Y). G maps X to Y, F maps Y to X.
struct StyleConfig {
  double lambda_cyc = 20.0;
  std::size_t gen_channels = 8;
  std::size_t disc_channels = 8;
  std::size_t image_size = 64;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{OptimizerKind::Nadam, 2e-5};
  bool use_ema = true;
  EmaConfig ema;
  /// Std multiplier of the generators' output projection; small values start
  /// them close to the identity.
  double residual_init = 0.01;

  void validate() const;
};

/// Parameters of both generators, prefixed "G." and "F.".
ParamStore init_generators(const StyleConfig& cfg);
/// Parameters of both patch discriminators, prefixed "DX." and "DY.".
ParamStore init_discriminators(const StyleConfig& cfg);

/// x + out(up(down(enc(x)))) on a (1, h, w, 1) image tensor, SELU between.
Var generator_on_tape(BoundParams& params, const std::string& prefix, const Var& x);
/// Two stride-2 conv + SELU layers and a linear 3x3 conv: (1, h/4, w/4, 1).
Var discriminator_on_tape(BoundParams& params, const std::string& prefix, const Var& x);

/// Runs generator `prefix` ("G" or "F") without clamping.
Image2D run_generator(const ParamStore& generators, const std::string& prefix, const Image2D& img);

/// G applied to a mean projection, clamped to [0, 1].
Image2D stylize(const ParamStore& generators, const Image2D& mean_projection);

using ImageMap = std::function<Image2D(const Image2D&)>;

/// lambda * (mean|fgx - x| + mean|gfy - y|) on precomputed reconstructions.
double cycle_loss(std::span<const double> x, std::span<const double> fgx, std::span<const double> y,
                  std::span<const double> gfy, double lambda);

/// lambda * (mean|F(G(x)) - x| + mean|G(F(y)) - y|).
double cycle_loss(const Image2D& x, const ImageMap& g, const ImageMap& f, const Image2D& y, double lambda);

struct AdversarialLoss {
  double d_loss;
  double g_loss;
};

/// Least-squares GAN terms on discriminator patch outputs.
AdversarialLoss adversarial_loss(const Tensor& disc_real, const Tensor& disc_fake);

struct StyleRecord {
  std::uint64_t step;
  double d_loss;
  double g_adv;
  double cycle;
};

struct StyleResult {
  ParamStore generators;
  ParamStore discriminators;
  std::optional<EmaState> ema;
  std::vector<StyleRecord> log;
};

/// Alternating discriminator / generator Nadam steps over seeded orders of
/// the two unpaired sets. The generator EMA is updated after each G step and
/// copied into the generators every reset_interval steps.
StyleResult style_train(const StyleConfig& cfg, const std::vector<Image2D>& domain_x,
                        const std::vector<Image2D>& domain_y,
                        const std::function<void(const StyleRecord&)>& on_step = {});

/// TSV: step, d_loss, g_adv_loss, cycle_loss.
std::string encode_style_log(const std::vector<StyleRecord>& log);

/// Unpaired toy sets: mean projections of phantoms for X and, from other
/// phantoms, the same projections passed through v -> v^gamma for Y.
std::pair<std::vector<Image2D>, std::vector<Image2D>> gamma_toy_task(std::uint64_t seed, std::size_t count,
                                                                     std::size_t size, double gamma = 0.5);

}  // namespace xprospect
