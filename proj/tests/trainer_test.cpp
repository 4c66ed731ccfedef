#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "test_util.hpp"
#include "xprospect/dataset.hpp"
#include "xprospect/error.hpp"
#include "xprospect/io.hpp"
#include "xprospect/params.hpp"
#include "xprospect/trainer.hpp"

namespace xprospect {
namespace {

Volume3D pair_volume(float a, float b) { return Volume3D(1, 1, 2, {a, b}, Domain::Unit); }

ModelConfig tiny_model() {
  ModelConfig m;
  m.input_size = 8;
  m.dense_units = 8;
  m.base_channels = 2;
  m.seed = 21;
  return m;
}

std::vector<ManifestRow> numbered_rows(std::size_t n) {
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back({"case" + std::to_string(i), "ct" + std::to_string(i) + ".xvol"});
  return rows;
}

TEST(Losses, Examples) {
  const auto v = test::random_unit_volume(4, 1);
  EXPECT_EQ(mse(v, v), 0.0);
  EXPECT_EQ(mae(v, v), 0.0);
  EXPECT_DOUBLE_EQ(mse(pair_volume(0, 1), pair_volume(1, 0)), 1.0);
  EXPECT_DOUBLE_EQ(mae(pair_volume(0, 1), pair_volume(1, 0)), 1.0);

  std::vector<float> lo(27, 0.2f), hi(27, 0.3f);
  const Volume3D a(3, 3, 3, lo, Domain::Unit), b(3, 3, 3, hi, Domain::Unit);
  EXPECT_NEAR(mse(a, b), 0.01, 1e-8);
  EXPECT_NEAR(mae(a, b), 0.1, 1e-7);
  EXPECT_THROW(mse(a, test::random_unit_volume(4, 2)), InvalidInput);
  EXPECT_THROW(mae(a, test::random_unit_volume(4, 2)), InvalidInput);
}

TEST(Losses, MseBoundedByMaeOnUnitVolumes) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = test::random_unit_volume(5, s), b = test::random_unit_volume(5, s + 100);
    EXPECT_LE(mse(a, b), mae(a, b));
    EXPECT_GT(mse(a, b), 0.0);
  }
}

TEST(Split, FloorRule) {
  auto [t10, v10] = split_dataset(numbered_rows(10), 0.8, 3);
  EXPECT_EQ(t10.size(), 8u);
  EXPECT_EQ(v10.size(), 2u);
  auto [t5, v5] = split_dataset(numbered_rows(5), 0.8, 3);
  EXPECT_EQ(t5.size(), 4u);
  EXPECT_EQ(v5.size(), 1u);
}

TEST(Split, DeterministicDisjointExhaustive) {
  const auto rows = numbered_rows(37);
  const auto a = split_dataset(rows, 0.8, 9), b = split_dataset(rows, 0.8, 9);
  EXPECT_EQ(a, b);
  std::set<std::string> ids;
  for (const auto& r : a.first) {
    EXPECT_EQ(r.split, Split::Train);
    ids.insert(r.id);
  }
  for (const auto& r : a.second) {
    EXPECT_EQ(r.split, Split::Val);
    EXPECT_FALSE(ids.contains(r.id));
    ids.insert(r.id);
  }
  EXPECT_EQ(ids.size(), rows.size());
  EXPECT_NE(split_dataset(rows, 0.8, 10).first, a.first);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_dataset({}, 0.8, 0), InvalidInput);
  EXPECT_THROW(split_dataset(numbered_rows(3), 1.0, 0), ConfigError);
  EXPECT_THROW(split_dataset(numbered_rows(3), 0.0, 0), ConfigError);
}

TEST(Permutation, IsPermutation) {
  auto p = seeded_permutation(100, 5);
  EXPECT_EQ(p, seeded_permutation(100, 5));
  std::ranges::sort(p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

TEST(Phantom, Properties) {
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    const Volume3D p = make_phantom(seed, 16);
    EXPECT_EQ(p, make_phantom(seed, 16));
    EXPECT_EQ(p.domain(), Domain::Unit);
    std::set<float> levels;
    for (float v : p.data()) levels.insert(v);
    EXPECT_TRUE(levels.contains(0.0f));
    EXPECT_TRUE(levels.contains(0.9f));
    EXPECT_GE(levels.size(), 3u);
    for (float v : levels) EXPECT_TRUE(v == 0.0f || (v >= 0.1f - 1e-6f && v <= 0.9f + 1e-6f));
    const auto rod = phantom_rod(16);
    for (std::size_t z = 0; z < 16; ++z) EXPECT_EQ(p.at(z, rod.y, rod.x), 0.9f);
  }
  EXPECT_NE(make_phantom(0, 16), make_phantom(1, 16));
  EXPECT_THROW(make_phantom(0, 4), InvalidInput);
}

TEST(Manifest, RoundTripAndValidation) {
  const auto dir = test::scratch_dir("manifest");
  save_volume(make_phantom(1, 8), (dir / "a.xvol").string());
  DatasetManifest m;
  m.base_dir = dir;
  m.rows.push_back({"a", "a.xvol", "", "", InputSource::Mean, Split::Test});
  write_manifest(m, dir / "m.tsv");
  const auto back = read_manifest(dir / "m.tsv");
  EXPECT_EQ(back.rows, m.rows);
  EXPECT_NO_THROW(back.validate());
  EXPECT_EQ(back.rows_in(Split::Test).size(), 1u);
  EXPECT_TRUE(back.rows_in(Split::Train).empty());

  auto dup = m;
  dup.rows.push_back(m.rows[0]);
  EXPECT_THROW(dup.validate(), InvalidInput);
  auto missing = m;
  missing.rows[0].ct_path = "nope.xvol";
  EXPECT_THROW(missing.validate(), InvalidInput);

  std::ofstream(dir / "bad.tsv") << "id\tct_path\n";
  EXPECT_THROW(read_manifest(dir / "bad.tsv"), Error);
}

TEST(LoadSamples, ReportsEveryBrokenRow) {
  const auto dir = test::scratch_dir("load_samples");
  DatasetManifest m;
  m.base_dir = dir;
  m.rows.push_back({"first", "x.xvol", "f.ximg", "l.ximg"});
  m.rows.push_back({"second", "y.xvol", "", ""});
  try {
    load_samples(m, Split::Train);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("first"), std::string::npos);
    EXPECT_NE(msg.find("second"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTrip) {
  Checkpoint c{init_params(tiny_model()), std::nullopt};
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(c)).params, c.params);
  EXPECT_FALSE(decode_checkpoint(encode_checkpoint(c)).ema.has_value());

  c.ema = c.params;
  c.ema->at("head.b")[0] = 0.25f;
  const auto dir = test::scratch_dir("ckpt");
  save_checkpoint(c, (dir / "c.xckpt").string());
  const auto back = load_checkpoint((dir / "c.xckpt").string());
  EXPECT_EQ(back.params, c.params);
  ASSERT_TRUE(back.ema.has_value());
  EXPECT_EQ(*back.ema, *c.ema);

  const std::string bytes = encode_checkpoint(c);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(decode_checkpoint("XCKPT0" + bytes.substr(6)), FormatError);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  TrainConfig t;
  t.epochs = 0;
  const auto r = train(tiny_model(), t, {}, {});
  EXPECT_EQ(r.params, init_params(tiny_model()));
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, PriorHeadBiasIsLabelLogit) {
  const std::vector<TrainingSample> samples{phantom_sample(1, 8), phantom_sample(2, 8)};
  double sum = 0.0;
  for (const auto& s : samples)
    for (float v : s.label.data()) sum += v;
  const double mean = sum / (2.0 * 512.0);
  TrainConfig t;
  t.epochs = 0;
  t.prior_head_bias = true;
  const auto r = train(tiny_model(), t, {}, samples);
  EXPECT_NEAR(r.params.at("head.b")[0], std::log(mean / (1.0 - mean)), 1e-6);
  auto expect = init_params(tiny_model());
  expect.at("head.b")[0] = r.params.at("head.b")[0];
  EXPECT_EQ(r.params, expect);
}

TEST(Train, DeterministicAndLogged) {
  const std::vector<TrainingSample> samples{phantom_sample(1, 8), phantom_sample(2, 8), phantom_sample(3, 8)};
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 2;
  t.seed = 4;
  t.use_ema = true;
  t.ema = {0.9, 3};
  OptimizerConfig o;
  o.kind = OptimizerKind::Nadam;
  std::vector<std::uint64_t> checkpoints;
  TrainHooks hooks;
  t.checkpoint_every = 2;
  hooks.on_checkpoint = [&](std::uint64_t step, const ParamStore&, const EmaState* ema) {
    EXPECT_NE(ema, nullptr);
    checkpoints.push_back(step);
  };
  const auto a = train(tiny_model(), t, o, samples, hooks);
  const auto b = train(tiny_model(), t, o, samples);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(encode_log(a.log), encode_log(b.log));
  ASSERT_EQ(a.log.size(), 4u);  // 2 epochs x ceil(3 / 2)
  EXPECT_EQ(a.optimizer.step, 4u);
  EXPECT_EQ(a.log.back().epoch, 1u);
  EXPECT_EQ(checkpoints, (std::vector<std::uint64_t>{2, 4}));
  EXPECT_NE(a.params, init_params(tiny_model()));

  const std::string log = encode_log(a.log);
  EXPECT_EQ(log.substr(0, log.find('\n') + 1), log_header());
  EXPECT_NE(log.find("\t1\tMAE\t"), std::string::npos);
}

TEST(Train, RejectsMismatchedSamples) {
  EXPECT_THROW(train(tiny_model(), {}, {}, {phantom_sample(1, 16)}), InvalidInput);
  EXPECT_THROW(train(tiny_model(), {}, {}, {}), InvalidInput);
  TrainConfig t;
  t.batch_size = 0;
  EXPECT_THROW(train(tiny_model(), t, {}, {phantom_sample(1, 8)}), ConfigError);
}

TEST(GradCheck, ScalarSquareProbe) {
  ParamStore theta;
  theta.add("theta", Tensor({1}, 1.0f));
  ParamStore grad;
  grad.add("theta", Tensor({1}, 2.0f));
  const auto r = fd_check(theta, grad, [](const ParamStore& p) {
    const double t = p.at("theta")[0];
    return t * t;
  }, 1e-6);
  ASSERT_EQ(r.tensors.size(), 1u);
  EXPECT_EQ(r.tensors[0].sampled, 1u);
  EXPECT_LT(r.tensors[0].max_error, 1e-6);
  EXPECT_TRUE(r.passed());

  grad.at("theta")[0] = 2.5f;
  EXPECT_FALSE(fd_check(theta, grad, [](const ParamStore& p) {
    const double t = p.at("theta")[0];
    return t * t;
  }, 1e-3).passed());
}

TEST(GradCheck, ZeroWeightHeadBias) {
  const auto cfg = tiny_model();
  ParamStore p = init_params(cfg);
  p.at("head.w").fill(0.0f);
  const auto r = grad_check(p, cfg, phantom_sample(8, 8), 1e-3, {.samples_per_tensor = 4});
  const auto head_b = std::ranges::find(r.tensors, std::string("head.b"), &TensorCheck::name);
  ASSERT_NE(head_b, r.tensors.end());
  EXPECT_TRUE(head_b->passed) << head_b->max_error;
}

TEST(GradCheck, RelativeError) {
  EXPECT_EQ(relative_error(2.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(0.1, 0.2), 0.1);  // denominator floored at 1
  EXPECT_DOUBLE_EQ(relative_error(10.0, 6.0), 0.25);
}

}  // namespace
}  // namespace xprospect
