// Copyright 2026 The tailrisk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tailrisk/estimator.hpp"

using namespace tailrisk;
using Catch::Approx;

namespace {

using Vec = std::vector<double>;

Vec grid_x() {
  Vec x;
  for (int i = 1; i <= 9; ++i) x.push_back(i / 10.0);
  return x;
}

RiskDataset as_points(const Vec& x, const Vec& y, std::optional<int> k = std::nullopt) {
  RiskDataset d;
  for (std::size_t i = 0; i < x.size(); ++i)
    d.push_back({"s" + std::to_string(i), x[i], y[i], 0.001, k, "loss_tnr"});
  return d;
}

std::pair<Vec, Vec> noisy_line(std::size_t n, double slope, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, sigma);
  Vec x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = u(rng);
    y[i] = slope * x[i] + e(rng);
  }
  return {x, y};
}

}  // namespace

TEST_CASE("linear fit through the origin", "[estimator]") {
  const auto exact = fit_linear_origin(Vec{1, 2}, Vec{2, 4});
  CHECK(exact.params[0] == 2.0);
  CHECK(exact.gof.r2 == 1.0);
  CHECK(fit_linear_origin(Vec{1, 2}, Vec{1, 1}).params[0] == Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(fit_linear_origin(Vec{}, Vec{}), ValidationError);
  CHECK_THROWS_AS(fit_linear_origin(Vec{0, 0}, Vec{1, 2}), ValidationError);
  CHECK(exact(0.0) == 0.0);
}

TEST_CASE("linear fit matches a dense slope scan", "[estimator]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [x, y] = noisy_line(12, 0.4, 0.05, seed);
    const double got = fit_linear_origin(x, y).params[0];
    double max_ratio = 0;
    for (std::size_t i = 0; i < x.size(); ++i) max_ratio = std::max(max_ratio, y[i] / x[i]);
    double best = 0, best_rss = INFINITY;
    for (double b = 0; b <= 2 * max_ratio; b += 1e-5) {
      double rss = 0;
      for (std::size_t i = 0; i < x.size(); ++i) rss += (y[i] - b * x[i]) * (y[i] - b * x[i]);
      if (rss < best_rss) {
        best_rss = rss;
        best = b;
      }
    }
    CHECK(got == Approx(best).margin(1e-4));
    CHECK(got == Approx(oracle::origin_slope_scan(x, y)).margin(1e-9));
  }
}

TEST_CASE("quadratic recovers an exact parabola", "[estimator]") {
  const auto m = fit_nonlinear(Vec{1, 2, 3}, Vec{1, 4, 9}, Family::quadratic);
  CHECK(m.params[0] == Approx(1.0).margin(1e-12));
  CHECK(m.params[1] == Approx(0.0).margin(1e-12));
  CHECK(*m.gof.r2 == Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(fit_nonlinear(Vec{1, 2}, Vec{1, 4}, Family::quadratic), ValidationError);
}

TEST_CASE("exponential recovers exact parameters", "[estimator]") {
  const auto x = grid_x();
  Vec y;
  for (double v : x) y.push_back(0.05 * std::expm1(3.0 * v));
  const auto m = fit_nonlinear(x, y, Family::exponential);
  CHECK(m.converged);
  CHECK(m.params[0] == Approx(0.05).epsilon(1e-4));
  CHECK(m.params[1] == Approx(3.0).epsilon(1e-4));
  CHECK(m(0.0) == 0.0);
}

TEST_CASE("power recovers exact parameters and handles x = 0", "[estimator]") {
  Vec x = grid_x();
  x.push_back(0.0);
  Vec y;
  for (double v : x) y.push_back(0.3 * std::pow(v, 1.7));
  const auto m = fit_nonlinear(x, y, Family::power);
  CHECK(m.params[0] == Approx(0.3).epsilon(1e-4));
  CHECK(m.params[1] == Approx(1.7).epsilon(1e-4));
  CHECK(m(0.0) == 0.0);
  x[0] = -0.1;
  CHECK_THROWS_AS(fit_nonlinear(x, y, Family::power), ValidationError);
}

TEST_CASE("exponential on straight-line data predicts like the linear fit", "[estimator]") {
  const auto x = grid_x();
  Vec y;
  for (double v : x) y.push_back(0.35 * v);
  const auto e = fit_nonlinear(x, y, Family::exponential);
  const auto l = fit_linear_origin(x, y);
  for (double v = 0.1; v <= 0.9; v += 0.05) CHECK(std::abs(e(v) - l(v)) <= 1e-3);
}

TEST_CASE("nonlinear fits beat every multi-start grid point", "[estimator]") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (Family f : {Family::exponential, Family::power}) {
    for (int t = 0; t < 5; ++t) {
      const auto x = grid_x();
      Vec y;
      for (double v : x) y.push_back(0.04 * std::expm1(2.5 * v) + noise(rng));
      const auto m = fit_nonlinear(x, y, f);
      for (double b : nonlinear_start_grid()) {
        // Best a for this b in closed form.
        double num = 0, den = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double g = f == Family::exponential ? std::expm1(b * x[i]) : std::pow(x[i], b);
          num += g * y[i];
          den += g * g;
        }
        const double a = num / den;
        double rss = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double g = f == Family::exponential ? std::expm1(b * x[i]) : std::pow(x[i], b);
          rss += (y[i] - a * g) * (y[i] - a * g);
        }
        CHECK(m.rss <= rss * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("r2 of the refit is unchanged by scaling y", "[estimator]") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.02);
  const auto x = grid_x();
  Vec y;
  for (double v : x) y.push_back(0.1 * std::expm1(2 * v) + noise(rng));
  Vec y3 = y;
  for (auto& v : y3) v *= 3.0;
  for (Family f : kAllFamilies) {
    const auto a = fit(x, y, f), b = fit(x, y3, f);
    CHECK(*a.gof.r2 == Approx(*b.gof.r2).margin(1e-8));
  }
}

TEST_CASE("goodness of fit", "[estimator]") {
  FitModel perfect;
  perfect.family = Family::linear_origin;
  perfect.params = {2.0};
  const auto g = goodness_of_fit(Vec{1, 2, 3}, Vec{2, 4, 6}, perfect);
  CHECK(*g.r2 == 1.0);
  CHECK(g.rmse == 0.0);
  CHECK(g.mae == 0.0);

  // All x equal: the fitted line predicts mean(y) everywhere.
  const auto mean_model = fit_linear_origin(Vec{1, 1, 1}, Vec{1, 2, 3});
  CHECK(*mean_model.gof.r2 == Approx(0.0).margin(1e-15));

  FitModel unit;
  unit.params = {1.0};
  const auto r = goodness_of_fit(Vec{1, 2}, Vec{1.1, 1.9}, unit);
  CHECK(r.rmse == Approx(0.1).epsilon(1e-12));
  CHECK(r.mae == Approx(0.1).epsilon(1e-12));

  CHECK_FALSE(goodness_of_fit(Vec{1, 2}, Vec{3, 3}, unit).r2.has_value());
  CHECK_FALSE(goodness_of_fit(Vec{1}, Vec{3}, unit).r2.has_value());
}

TEST_CASE("percentile interval uses the central mass", "[estimator]") {
  Vec v;
  for (int i = 0; i <= 100; ++i) v.push_back(i);
  const auto ci = percentile_interval(v, 0.975);
  CHECK(ci.lower == Approx(1.25));
  CHECK(ci.upper == Approx(98.75));
}

TEST_CASE("bootstrap: exact line gives zero width", "[estimator]") {
  const auto x = grid_x();
  Vec y;
  for (double v : x) y.push_back(0.25 * v);
  BootstrapOptions opt;
  opt.iters = 200;
  const auto m = bootstrap_fit(x, y, Family::linear_origin, opt);
  REQUIRE(m.bootstrap);
  CHECK(m.bootstrap->param_ci[0].width() == Approx(0.0).margin(1e-15));
  CHECK(m.bootstrap->skipped == 0);
}

TEST_CASE("bootstrap: deterministic for a seed and independent of threads", "[estimator]") {
  const auto [x, y] = noisy_line(36, 0.4, 0.01, 1);
  BootstrapOptions opt;
  opt.iters = 500;
  opt.seed = 42;
  const auto a = bootstrap_fit(x, y, Family::exponential, opt);
  const auto b = bootstrap_fit(x, y, Family::exponential, opt);
  opt.threads = 3;
  const auto c = bootstrap_fit(x, y, Family::exponential, opt);
  CHECK(a.bootstrap->params == b.bootstrap->params);
  CHECK(a.bootstrap->params == c.bootstrap->params);
  CHECK(a.bootstrap->param_ci[1].lower == c.bootstrap->param_ci[1].lower);
  opt.seed = 43;
  const auto d = bootstrap_fit(x, y, Family::exponential, opt);
  CHECK(a.bootstrap->params != d.bootstrap->params);
}

TEST_CASE("bootstrap: all-zero resamples are skipped and counted", "[estimator]") {
  BootstrapOptions opt;
  opt.iters = 400;
  const auto m = bootstrap_fit(Vec{0, 0, 0, 1}, Vec{0, 0.1, 0, 0.5}, Family::linear_origin, opt);
  // P(all four draws hit a zero) = (3/4)^4.
  CHECK(m.bootstrap->skipped > 0);
  CHECK(m.bootstrap->skipped + static_cast<int>(m.bootstrap->params.size()) == 400);
  CHECK(m.bootstrap->skipped == Approx(400 * std::pow(0.75, 4)).margin(40));
  CHECK_THROWS_AS(bootstrap_fit(Vec{1, 2}, Vec{1, 2}, Family::linear_origin, {0}), ValidationError);
}

TEST_CASE("bootstrap: interval narrows as the sample grows", "[estimator]") {
  double prev = INFINITY;
  for (std::size_t n : {10, 100, 1000}) {
    double width = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto [x, y] = noisy_line(n, 0.4, 0.05, 100 + seed);
      BootstrapOptions opt;
      opt.iters = 300;
      opt.seed = seed;
      width += bootstrap_fit(x, y, Family::linear_origin, opt).bootstrap->param_ci[0].width();
    }
    CHECK(width <= prev);
    prev = width;
  }
}

TEST_CASE("predict_risk", "[estimator]") {
  for (Family f : kAllFamilies) {
    FitModel m;
    m.family = f;
    m.params = param_count(f) == 1 ? Vec{0.7} : Vec{0.3, 2.0};
    CHECK(predict_risk(0.0, m).tpr_hat == 0.0);
  }
  FitModel lin;
  lin.params = {0.5};
  CHECK(predict_risk(0.3, lin).tpr_hat == 0.15);
  FitModel ex;
  ex.family = Family::exponential;
  ex.params = {0.02, 4.0};
  CHECK(predict_risk(0.8, ex).tpr_hat == Approx(0.4706).margin(1e-4));
  lin.params = {3.0};
  CHECK(predict_risk(0.9, lin).tpr_hat == 1.0);
  CHECK_THROWS_AS(predict_risk(1.1, lin), ValidationError);

  const auto [x, y] = noisy_line(30, 0.4, 0.02, 5);
  BootstrapOptions opt;
  opt.iters = 300;
  const auto m = bootstrap_fit(x, y, Family::linear_origin, opt);
  const auto p = predict_risk(0.5, m);
  REQUIRE(p.ci);
  CHECK(p.ci->contains(p.tpr_hat));
}

TEST_CASE("k sweep", "[estimator]") {
  const auto [x, y] = noisy_line(20, 0.3, 0.02, 8);
  BootstrapOptions opt;
  opt.iters = 100;
  const auto one = k_sweep(as_points(x, y, 8), opt);
  REQUIRE(one.size() == 1);
  CHECK(one[0].k == 8);
  CHECK(one[0].fit.params[0] == fit_linear_origin(x, y).params[0]);

  auto both = as_points(x, y, 4);
  const auto more = as_points(x, y, 16);
  both.insert(both.end(), more.begin(), more.end());
  const auto sweep = k_sweep(both, opt);
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[0].fit.params == sweep[1].fit.params);
  CHECK(sweep[0].fit.bootstrap->param_ci[0].lower == sweep[1].fit.bootstrap->param_ci[0].lower);
  CHECK_THROWS_AS(k_sweep(as_points(x, y), opt), ValidationError);
}

TEST_CASE("family names", "[estimator]") {
  for (Family f : kAllFamilies) CHECK(parse_family(to_string(f)) == f);
  CHECK(parse_family("linear") == Family::linear_origin);
  CHECK_THROWS_AS(parse_family("cubic"), ValidationError);
}
