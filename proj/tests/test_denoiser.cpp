#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "icodiff/denoiser.hpp"
#include "icodiff/errors.hpp"
#include "icodiff/rng.hpp"

using namespace icodiff;

namespace {

FeatureMap random_map(int order, std::size_t channels, std::uint64_t seed, double sd = 1.0) {
  FeatureMap m(order, channels);
  RandomStream rng(seed, 17);
  for (auto& x : m.data()) x = static_cast<float>(sd * rng.normal());
  return m;
}

FeatureMap random_mask(int order, std::uint64_t seed) {
  FeatureMap m(order, 2);
  RandomStream rng(seed, 23);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    const bool g = rng.uniform() < 0.5;
    m.at(0, v) = g ? 1.0f : 0.0f;
    m.at(1, v) = g ? 0.0f : 1.0f;
  }
  return m;
}

nn::Mat random_mat(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  nn::Mat m(rows, cols);
  RandomStream rng(seed, 5);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Direct per-vertex summation, written independently of the im2col path.
FeatureMap ring_conv_oracle(const FeatureMap& x, const nn::Mat& w, const nn::Mat& b, const IcosphereMesh& mesh) {
  const auto out_ch = static_cast<std::size_t>(w.rows());
  FeatureMap out(x.order(), out_ch);
  for (std::size_t v = 0; v < x.vertex_count(); ++v) {
    const auto ring = ordered_ring(mesh, v);
    std::size_t taps[7] = {v, ring[0], ring[1], ring[2], ring[3], ring[4], ring[5]};
    for (std::size_t c = 0; c < out_ch; ++c) {
      double acc = b(Eigen::Index(c), 0);
      for (std::size_t i = 0; i < x.channels(); ++i)
        for (std::size_t k = 0; k < 7; ++k) acc += w(Eigen::Index(c), Eigen::Index(i * 7 + k)) * x.at(i, taps[k]);
      out.at(c, v) = static_cast<float>(acc);
    }
  }
  return out;
}

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.base_order = 2;
  cfg.min_order = 1;
  cfg.widths = {4, 8};
  cfg.blocks_per_level = 1;
  cfg.attention_orders = {1, 2};
  cfg.embed_dim = 8;
  return cfg;
}

}  // namespace

TEST_CASE("ring_conv identity filter") {
  const auto& mesh = cached_mesh(2);
  const auto x = random_map(2, 3, 1);
  nn::Mat w = nn::Mat::Zero(3, 21);
  for (int c = 0; c < 3; ++c) w(c, c * 7) = 1.0;
  CHECK(ring_conv(x, w, nn::Mat::Zero(3, 1), mesh) == x);
}

TEST_CASE("ring_conv averaging keeps constants") {
  const auto& mesh = cached_mesh(3);
  const FeatureMap x(3, 1, 3.0f);
  const nn::Mat w = nn::Mat::Constant(1, 7, 1.0 / 7.0);
  const auto y = ring_conv(x, w, nn::Mat::Zero(1, 1), mesh);
  for (float v : y.data()) CHECK(v == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("ring_conv matches the direct summation oracle") {
  for (int order = 0; order <= 3; ++order) {
    const auto& mesh = cached_mesh(order);
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
      const auto x = random_map(order, 2, 100 + trial);
      const auto w = random_mat(3, 14, 200 + trial);
      const auto b = random_mat(3, 1, 300 + trial);
      const auto got = ring_conv(x, w, b, mesh);
      const auto want = ring_conv_oracle(x, w, b, mesh);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.data()[i] - want.data()[i]) < 1e-6);
    }
  }
}

TEST_CASE("ring_conv shape errors") {
  const auto x = random_map(1, 2, 1);
  CHECK_THROWS_AS(ring_conv(x, nn::Mat::Zero(1, 7), nn::Mat::Zero(1, 1), cached_mesh(1)), ShapeError);
  CHECK_THROWS_AS(ring_conv(x, nn::Mat::Zero(1, 14), nn::Mat::Zero(1, 1), cached_mesh(2)), ShapeError);
}

TEST_CASE("pool and unpool") {
  const auto x = random_map(1, 2, 4);
  const auto p = pool(x, 1);
  REQUIRE(p.vertex_count() == 12);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t v = 0; v < 12; ++v) CHECK(p.at(c, v) == x.at(c, v));

  const FeatureMap ones(0, 1, 1.0f);
  const auto up = unpool(ones, 1);
  for (std::size_t v = 0; v < 42; ++v) CHECK(up.at(0, v) == (v < 12 ? 1.0f : 0.0f));

  for (int order = 0; order <= 5; ++order) {
    const auto y = random_map(order, 2, 50 + order);
    CHECK(pool(unpool(y, order + 1), order + 1) == y);
    double s1 = 0, s2 = 0;
    for (float v : y.data()) s1 += v;
    const auto up_y = unpool(y, order + 1);
    for (float v : up_y.data()) s2 += v;
    CHECK(s1 == s2);
  }
  const FeatureMap c(3, 1, 2.5f);
  CHECK(pool(c, 3) == FeatureMap(2, 1, 2.5f));
  CHECK_THROWS_AS(pool(FeatureMap(0, 1), 0), ShapeError);
  CHECK_THROWS_AS(unpool(FeatureMap(1, 1), 3), ShapeError);
}

TEST_CASE("unpool then identity ring_conv keeps new vertices zero only without bias") {
  const auto& mesh = cached_mesh(2);
  const auto up = unpool(random_map(1, 1, 9), 2);
  const nn::Mat w = nn::Mat::Identity(1, 7);
  const auto zero_bias = ring_conv(up, w, nn::Mat::Zero(1, 1), mesh);
  const auto with_bias = ring_conv(up, w, nn::Mat::Constant(1, 1, 0.5), mesh);
  for (std::size_t v = 42; v < 162; ++v) {
    CHECK(zero_bias.at(0, v) == 0.0f);
    CHECK(with_bias.at(0, v) == 0.5f);
  }
}

TEST_CASE("time embedding") {
  const auto e0 = time_embedding(0, 64);
  for (int i = 0; i < 32; ++i) {
    CHECK(e0[i] == 0.0);
    CHECK(e0[i + 32] == 1.0);
  }
  std::vector<std::vector<double>> all;
  for (int t = 0; t <= 1000; ++t) {
    all.push_back(time_embedding(t, 64));
    for (double x : all.back()) CHECK((x >= -1.0 && x <= 1.0));
  }
  int collisions = 0;
  for (int a = 0; a <= 1000; ++a)
    for (int b = a + 1; b <= 1000; ++b) {
      double diff = 0;
      for (int i = 0; i < 64; ++i) diff = std::max(diff, std::abs(all[a][i] - all[b][i]));
      collisions += diff <= 1e-6;
    }
  CHECK(collisions == 0);
  CHECK_THROWS_AS(time_embedding(3, 7), std::invalid_argument);
}

TEST_CASE("condition embedding") {
  const auto cfg = tiny_config();
  const auto zero = init_params(cfg, 1, InitMode::kZero);
  const auto e = condition_embedding(0.7, 1, zero);
  CHECK(e.size() == static_cast<std::size_t>(cfg.embed_dim));
  for (double x : e) CHECK(x == 0.0);

  const auto params = init_params(cfg, 2);
  const auto g0 = condition_embedding(0.7, 0, params);
  const auto g1 = condition_embedding(0.7, 1, params);
  CHECK(g0 != g1);
  CHECK_THROWS_AS(condition_embedding(0.5, 2, params), std::invalid_argument);
  CHECK_THROWS_AS(condition_embedding(1.5, 0, params), std::invalid_argument);
}

TEST_CASE("config validation") {
  auto cfg = tiny_config();
  cfg.widths = {4};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.min_order = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero output projection gives zero velocity") {
  const auto params = init_params(tiny_config(), 3);
  const auto out = denoiser_forward({random_map(2, 2, 1), random_mask(2, 1), 500, 0.6, 1}, params);
  CHECK(out.channels() == 2);
  for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("output shape at order 6 with a 4-channel input") {
  DenoiserConfig cfg;
  cfg.base_order = 6;
  cfg.min_order = 5;
  cfg.widths = {4, 4};
  cfg.blocks_per_level = 1;
  cfg.attention_orders = {};
  cfg.embed_dim = 8;
  const auto params = init_params(cfg, 1, InitMode::kRandomAll);
  const auto out = denoiser_forward({random_map(6, 2, 1), random_mask(6, 1), 10, 0.5, 0}, params);
  CHECK(out.channels() == 2);
  CHECK(out.vertex_count() == 40962);
  CHECK(out.all_finite());
}

TEST_CASE("forward is deterministic and batch items do not mix") {
  const auto params = init_params(tiny_config(), 4, InitMode::kRandomAll);
  const DenoiserInput a{random_map(2, 2, 1), random_mask(2, 1), 100, 0.6, 0};
  const DenoiserInput b{random_map(2, 2, 2), random_mask(2, 2), 700, 0.8, 1};
  const std::vector<DenoiserInput> ab{a, b};
  const std::vector<DenoiserInput> ba{b, a};
  const auto out_ab = denoiser_forward_batch(ab, params, 2);
  const auto out_ba = denoiser_forward_batch(ba, params, 1);
  CHECK(out_ab[0] == out_ba[1]);
  CHECK(out_ab[1] == out_ba[0]);
  CHECK(out_ab[0] == denoiser_forward(a, params));
}

TEST_CASE("forward rejects bad masks and shapes") {
  const auto params = init_params(tiny_config(), 4);
  auto mask = random_mask(2, 1);
  mask.at(0, 3) = 1.0f;
  mask.at(1, 3) = 1.0f;
  CHECK_THROWS_AS(denoiser_forward({random_map(2, 2, 1), mask, 1, 0.5, 0}, params), ShapeError);
  CHECK_THROWS_AS(denoiser_forward({random_map(1, 2, 1), random_mask(1, 1), 1, 0.5, 0}, params), ShapeError);
  CHECK_THROWS_AS(denoiser_forward({random_map(2, 2, 1), random_mask(2, 1), 1, 0.5, 3}, params),
                  std::invalid_argument);
}

TEST_CASE("mask conditioning is not degenerate") {
  int changed = 0;
  for (std::uint64_t init = 0; init < 10; ++init) {
    const auto params = init_params(tiny_config(), 1000 + init, InitMode::kRandomAll);
    DenoiserInput in{random_map(2, 2, init), random_mask(2, init), 400, 0.7, 1};
    const auto base = denoiser_forward(in, params);
    std::swap(in.mask.at(0, 77), in.mask.at(1, 77));
    const auto flipped = denoiser_forward(in, params);
    double diff = 0;
    for (std::size_t i = 0; i < base.size(); ++i) diff = std::max(diff, double(std::abs(base.data()[i] - flipped.data()[i])));
    changed += diff > 1e-8;
  }
  CHECK(changed >= 9);
}

TEST_CASE("loss is zero when the target velocity is zero and the model predicts zero") {
  const auto cfg = tiny_config();
  const auto params = init_params(cfg, 5);
  const auto sched = cosine_schedule(1000);
  const std::vector<TrainingItem> batch{{FeatureMap(2, 2), random_mask(2, 3), 0.5, 0}};
  const std::vector<int> steps{300};
  const std::vector<FeatureMap> noise{FeatureMap(2, 2)};
  const auto lg = loss_and_grad(batch, steps, noise, sched, params);
  CHECK(lg.loss == 0.0);
  CHECK(lg.grads.size() == params.arrays().size());
}

TEST_CASE("loss is nonnegative and batch-order independent in value") {
  const auto params = init_params(tiny_config(), 6, InitMode::kRandomAll);
  const auto sched = cosine_schedule(1000);
  std::vector<TrainingItem> batch{{random_map(2, 2, 1, 0.3), random_mask(2, 1), 0.5, 0},
                                  {random_map(2, 2, 2, 0.3), random_mask(2, 2), 0.8, 1}};
  std::vector<int> steps{10, 900};
  std::vector<FeatureMap> noise{random_map(2, 2, 3), random_map(2, 2, 4)};
  const auto one = loss_and_grad(batch, steps, noise, sched, params, 1);
  const auto two = loss_and_grad(batch, steps, noise, sched, params, 2);
  CHECK(one.loss >= 0.0);
  CHECK(one.loss == two.loss);
  for (std::size_t a = 0; a < one.grads.size(); ++a) CHECK(one.grads[a] == two.grads[a]);
}
