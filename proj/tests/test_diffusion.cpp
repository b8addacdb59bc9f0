#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "icodiff/errors.hpp"
#include "icodiff/sampler.hpp"
#include "icodiff/schedule.hpp"
#include "oracles.hpp"

using namespace icodiff;

namespace {

// Closed form evaluated directly, with no clipping.
double alpha_bar_closed(int t, int T, double s) {
  const auto f = [&](int k) {
    const double c = std::cos((static_cast<double>(k) / T + s) / (1.0 + s) * M_PI / 2.0);
    return c * c;
  };
  return f(t) / f(0);
}

}  // namespace

TEST_CASE("cosine schedule invariants") {
  const auto s = cosine_schedule(1000, 0.008);
  CHECK(s.alpha_bar[0] == 1.0);
  CHECK(s.alpha_bar.size() == 1001);
  CHECK(s.alpha_bar[1000] < 1e-4);
  CHECK(alpha_bar_closed(1000, 1000, 0.008) < 1e-4);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK(s.beta_at(t) <= 0.999);
    CHECK(s.beta_at(t) > 0.0);
  }
  // Recomputing the running product from beta reproduces alpha_bar.
  double prod = 1.0;
  double worst = 0.0;
  for (int t = 1; t <= 1000; ++t) {
    prod *= 1.0 - s.beta_at(t);
    worst = std::max(worst, std::abs(prod - s.alpha_bar[t]));
  }
  CHECK(worst < 1e-12);
  // Away from the clipped tail the schedule equals the closed form.
  for (int t : {1, 10, 250, 500, 750, 900})
    CHECK(s.alpha_bar[t] == doctest::Approx(alpha_bar_closed(t, 1000, 0.008)).epsilon(1e-9));
  for (int t = 1; t <= 1000; ++t) {
    const double expect = s.beta_at(t) * (1 - s.alpha_bar[t - 1]) / (1 - s.alpha_bar[t]);
    CHECK(s.posterior_var[t] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("cosine schedule rejects bad arguments") {
  CHECK_THROWS_AS(cosine_schedule(0), std::invalid_argument);
  CHECK_THROWS_AS(cosine_schedule(10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cosine_schedule(10, -1.0), std::invalid_argument);
  CHECK_NOTHROW(cosine_schedule(1));
}

TEST_CASE("q_sample and v algebra round trips at every t") {
  const auto s = cosine_schedule();
  const auto x0 = oracle::random_map(1, 2, 3, 0.5);
  const auto eps = oracle::random_map(1, 2, 4);
  CHECK(q_sample(x0, 0, eps, s) == x0);
  double worst_x = 0, worst_e = 0;
  for (int t = 1; t <= 1000; ++t) {
    const auto xt = q_sample(x0, t, eps, s);
    const auto v = v_target(x0, eps, t, s);
    const auto xr = predict_x0_from_v(xt, v, t, s, false);
    const auto er = predict_eps_from_v(xt, v, t, s);
    for (std::size_t i = 0; i < x0.data().size(); ++i) {
      worst_x = std::max(worst_x, static_cast<double>(std::abs(xr.data()[i] - x0.data()[i])));
      worst_e = std::max(worst_e, static_cast<double>(std::abs(er.data()[i] - eps.data()[i])));
    }
  }
  CHECK(worst_x < 1e-6);
  CHECK(worst_e < 1e-6);
}

TEST_CASE("v_target and clamp edge cases") {
  const auto s = cosine_schedule();
  const auto x0 = oracle::random_map(0, 2, 5);
  const FeatureMap zero(0, 2, 0.0f);
  // eps = 0 at t = 0 (alpha_bar = 1) gives v = 0.
  const auto v0 = v_target(x0, zero, 0, s);
  for (float v : v0.data()) CHECK(v == 0.0f);
  const auto hi = predict_x0_from_v(FeatureMap(0, 2, 5.0f), zero, 0, s);
  for (float v : hi.data()) CHECK(v == 1.0f);
  const auto lo = predict_x0_from_v(FeatureMap(0, 2, -5.0f), zero, 0, s);
  for (float v : lo.data()) CHECK(v == -1.0f);
  CHECK_THROWS_AS(q_sample(x0, 1, FeatureMap(1, 2), s), ShapeError);
  CHECK_THROWS_AS(q_sample(x0, 1001, zero, s), std::out_of_range);
}

TEST_CASE("q_sample Monte Carlo variance matches 1 - alpha_bar") {
  const auto s = cosine_schedule();
  const FeatureMap x0(0, 1, 0.0f);
  for (int t : {100, 500, 900}) {
    double sum = 0, sum2 = 0;
    const int n = 10000;
    RandomStream rng(77, static_cast<std::uint64_t>(t));
    FeatureMap eps(0, 1);
    for (int i = 0; i < n; ++i) {
      rng.fill_normal(eps.data());
      const double x = q_sample(x0, t, eps, s).at(0, 0);
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = (sum2 - n * mean * mean) / (n - 1);
    CHECK(std::abs(var / (1.0 - s.alpha_bar[t]) - 1.0) < 0.05);
  }
}

TEST_CASE("composed single-step transitions match the marginal mean") {
  const auto s = cosine_schedule();
  const int t_end = 300;
  const int runs = 400;
  const double x0 = 0.8;
  std::vector<double> finals;
  for (int r = 0; r < runs; ++r) {
    RandomStream rng(91, static_cast<std::uint64_t>(r));
    for (int v = 0; v < 12; ++v) {
      double x = x0;
      for (int t = 1; t <= t_end; ++t) x = std::sqrt(1 - s.beta_at(t)) * x + std::sqrt(s.beta_at(t)) * rng.normal();
      finals.push_back(x);
    }
  }
  double mean = 0;
  for (double f : finals) mean += f;
  mean /= static_cast<double>(finals.size());
  double var = 0;
  for (double f : finals) var += (f - mean) * (f - mean);
  var /= static_cast<double>(finals.size() - 1);
  const double se = std::sqrt((1 - s.alpha_bar[t_end]) / static_cast<double>(finals.size()));
  CHECK(std::abs(mean - std::sqrt(s.alpha_bar[t_end]) * x0) < 3 * se);
  CHECK(var == doctest::Approx(1 - s.alpha_bar[t_end]).epsilon(0.1));
}

TEST_CASE("reverse_step at t = 1 adds no noise") {
  const auto s = cosine_schedule();
  const auto xt = oracle::random_map(1, 2, 8, 0.3);
  const auto v = oracle::random_map(1, 2, 9, 0.3);
  RandomStream a(1, 1), b(2, 2);
  const auto ra = reverse_step(xt, v, 1, s, &a);
  const auto rb = reverse_step(xt, v, 1, s, &b);
  const auto rn = reverse_step(xt, v, 1, s, nullptr);
  CHECK(ra == rb);
  CHECK(ra == rn);
  // At t = 1 the posterior mean is the clamped x0 estimate.
  const auto x0 = predict_x0_from_v(xt, v, 1, s);
  for (std::size_t i = 0; i < x0.data().size(); ++i) CHECK(ra.data()[i] == doctest::Approx(x0.data()[i]).epsilon(1e-6));
  CHECK_THROWS_AS(reverse_step(xt, v, 0, s, nullptr), std::out_of_range);
}

TEST_CASE("reverse_step is reproducible for a fixed stream") {
  const auto s = cosine_schedule();
  const auto xt = oracle::random_map(1, 2, 10);
  const auto v = oracle::random_map(1, 2, 11);
  RandomStream a(5, 6), b(5, 6), c(5, 7);
  const auto ra = reverse_step(xt, v, 400, s, &a);
  CHECK(ra == reverse_step(xt, v, 400, s, &b));
  CHECK_FALSE(ra == reverse_step(xt, v, 400, s, &c));
}

TEST_CASE("oracle velocity drives the chain to x0") {
  const auto s = cosine_schedule();
  double total = 0;
  int count = 0;
  for (int run = 0; run < 100; ++run) {
    RandomStream rng(1234, static_cast<std::uint64_t>(run));
    FeatureMap x0(0, 1);
    for (auto& v : x0.data()) v = static_cast<float>(2 * rng.uniform() - 1);
    FeatureMap x(0, 1);
    rng.fill_normal(x.data());
    for (int t = s.steps; t >= 1; --t) {
      // The v that is exactly consistent with the true x0 at state x.
      const double a = s.sqrt_alpha_bar[t], b = s.sqrt_one_minus_alpha_bar[t];
      FeatureMap v(0, 1);
      for (std::size_t i = 0; i < v.data().size(); ++i) {
        const double eps = (x.data()[i] - a * x0.data()[i]) / b;
        v.data()[i] = static_cast<float>(a * eps - b * x0.data()[i]);
      }
      x = reverse_step(x, v, t, s, &rng);
    }
    for (std::size_t i = 0; i < x.data().size(); ++i) {
      total += std::abs(x.data()[i] - x0.data()[i]);
      ++count;
    }
  }
  CHECK(total / count < 0.05);
}

TEST_CASE("sampler config validation") {
  const auto s = cosine_schedule(100);
  SamplerConfig c;
  CHECK_THROWS_AS(c.validate(s), std::invalid_argument);  // t_noise 500 > T
  c.t_noise = 100;
  CHECK_NOTHROW(c.validate(s));
  c.t_noise = 0;
  CHECK_THROWS_AS(c.validate(s), std::invalid_argument);
  c.t_noise = 50;
  c.n_samples = 0;
  CHECK_THROWS_AS(c.validate(s), std::invalid_argument);
}

TEST_CASE("sampling is deterministic per seed and differs across seeds") {
  const auto cfg = oracle::tiny_config();
  const auto params = init_params(cfg, 3, InitMode::kRandomAll);
  const auto sched = cosine_schedule(40);
  const Conditioning cond{oracle::random_mask(cfg.base_order, 4), 0.72, 1};

  const auto a = sample_from_noise(cond, params, sched, 11);
  CHECK(a.channels() == 2);
  CHECK(a.vertex_count() == prefix_count(cfg.base_order));
  CHECK(a == sample_from_noise(cond, params, sched, 11));
  CHECK_FALSE(a == sample_from_noise(cond, params, sched, 12));

  SamplerConfig sc;
  sc.t_noise = 20;
  sc.n_samples = 10;
  sc.rng_seed = 5;
  const auto x0 = oracle::random_map(cfg.base_order, 2, 6, 0.4);
  const auto r1 = reconstruct(x0, cond, params, sched, sc, 1);
  const auto r2 = reconstruct(x0, cond, params, sched, sc, 3);
  REQUIRE(r1.size() == 10);
  CHECK(r1 == r2);
  CHECK_FALSE(r1[0] == r1[1]);

  sc.stochastic = false;
  sc.n_samples = 2;
  const auto d = reconstruct(x0, cond, params, sched, sc, 1);
  CHECK(d.size() == 2);
  CHECK(d[0].all_finite());
}
