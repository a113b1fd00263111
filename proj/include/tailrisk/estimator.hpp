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

#pragma once

// Origin-anchored estimator curves mapping a reference-free predictor (LOSS
// TNR, LOSS AUC, ...) to the TPR of a reference-model attack, with
// goodness-of-fit, percentile bootstrap intervals and a K sweep.
//
// Families (all satisfy f(0) = 0):
//   linear_origin  slope * x
//   exponential    a * (exp(b x) - 1)
//   power          a * x^b
//   quadratic      a * x^2 + b * x

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tailrisk/error.hpp"
#include "tailrisk/metrics.hpp"
#include "tailrisk/score_store.hpp"

namespace tailrisk {

enum class Family { linear_origin, exponential, power, quadratic };

inline constexpr std::array<Family, 4> kAllFamilies = {Family::exponential, Family::quadratic,
                                                       Family::power, Family::linear_origin};

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::linear_origin: return "linear_origin";
    case Family::exponential: return "exponential";
    case Family::power: return "power";
    case Family::quadratic: return "quadratic";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "linear" || s == "linear_origin") return Family::linear_origin;
  if (s == "exponential" || s == "exp") return Family::exponential;
  if (s == "power") return Family::power;
  if (s == "quadratic") return Family::quadratic;
  throw ValidationError("unknown family '" + std::string(s) + "'");
}

inline std::size_t param_count(Family f) { return f == Family::linear_origin ? 1 : 2; }

/// Curve value at x for the given parameters.
inline double evaluate(Family f, std::span<const double> p, double x) {
  switch (f) {
    case Family::linear_origin: return p[0] * x;
    case Family::exponential: return p[0] * std::expm1(p[1] * x);
    case Family::power: return x == 0.0 ? 0.0 : p[0] * std::pow(x, p[1]);
    case Family::quadratic: return p[0] * x * x + p[1] * x;
  }
  return 0.0;
}

struct GoodnessOfFit {
  std::optional<double> r2;  ///< undefined when y has zero variance or n < 2
  double rmse = 0.0;
  double mae = 0.0;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
  bool contains(double v) const { return v >= lower && v <= upper; }
};

struct BootstrapResult {
  int iters = 0;
  double level = 0.975;
  std::uint64_t seed = 0;
  int skipped = 0;                          ///< degenerate resamples
  std::vector<Interval> param_ci;           ///< one per parameter
  std::vector<std::vector<double>> params;  ///< accepted resample fits, in index order
};

struct FitModel {
  Family family = Family::linear_origin;
  std::vector<double> params;
  GoodnessOfFit gof;
  std::size_t n_points = 0;
  double rss = 0.0;
  bool converged = true;
  std::optional<BootstrapResult> bootstrap;

  double operator()(double x) const { return evaluate(family, params, x); }
};

inline GoodnessOfFit goodness_of_fit(std::span<const double> x, std::span<const double> y,
                                     const FitModel& model) {
  if (x.size() != y.size() || x.empty())
    throw ValidationError("goodness_of_fit: need matching, non-empty x and y");
  const auto n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - model(x[i]);
    ss_res += r * r;
    abs_sum += std::abs(r);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  GoodnessOfFit g;
  g.rmse = std::sqrt(ss_res / n);
  g.mae = abs_sum / n;
  if (y.size() >= 2 && ss_tot > 0.0) g.r2 = 1.0 - ss_res / ss_tot;
  return g;
}

namespace detail {

inline double rss(Family f, std::span<const double> p, std::span<const double> x,
                  std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = evaluate(f, p, x[i]) - y[i];
    s += r * r;
  }
  return s;
}

inline FitModel finish(Family f, std::vector<double> params, std::span<const double> x,
                       std::span<const double> y, bool converged) {
  FitModel m;
  m.family = f;
  m.params = std::move(params);
  m.n_points = x.size();
  m.converged = converged;
  m.rss = rss(f, m.params, x, y);
  m.gof = goodness_of_fit(x, y, m);
  return m;
}

// Basis g(x; b) with f = a * g, and its derivative in b.
inline double basis(Family f, double b, double x) {
  if (f == Family::exponential) return std::expm1(b * x);
  return x == 0.0 ? 0.0 : std::pow(x, b);
}

inline double basis_db(Family f, double b, double x) {
  if (f == Family::exponential) return x * std::exp(b * x);
  return x == 0.0 ? 0.0 : std::pow(x, b) * std::log(x);
}

struct Candidate {
  double a = 0.0;
  double b = 0.0;
  double rss = std::numeric_limits<double>::infinity();
};

// Closed-form optimal a for fixed b.
inline Candidate profile(Family f, double b, std::span<const double> x, std::span<const double> y) {
  double gy = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = basis(f, b, x[i]);
    gy += g * y[i];
    gg += g * g;
  }
  Candidate c;
  c.b = b;
  if (!(gg > 0.0) || !std::isfinite(gg)) return c;
  c.a = gy / gg;
  const double p[2] = {c.a, c.b};
  c.rss = rss(f, p, x, y);
  if (!std::isfinite(c.rss)) c.rss = std::numeric_limits<double>::infinity();
  return c;
}

struct Refined {
  Candidate best;
  bool converged = false;
};

// Levenberg-Marquardt damped Gauss-Newton on (a, b).
inline Refined refine(Family f, Candidate start, std::span<const double> x,
                      std::span<const double> y, double grad_tol = 1e-10, int max_iter = 200) {
  Refined out{start, false};
  double a = start.a, b = start.b, cur = start.rss, lambda = 1e-3;
  for (int it = 0; it < max_iter; ++it) {
    double jaa = 0, jab = 0, jbb = 0, ga = 0, gb = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = basis(f, b, x[i]);
      const double da = g, db = a * basis_db(f, b, x[i]);
      const double r = a * g - y[i];
      jaa += da * da;
      jab += da * db;
      jbb += db * db;
      ga += da * r;
      gb += db * r;
    }
    if (2.0 * std::hypot(ga, gb) <= grad_tol) {
      out.converged = true;
      break;
    }
    bool stepped = false;
    while (lambda < 1e16) {
      const double m11 = jaa * (1 + lambda), m22 = jbb * (1 + lambda), m12 = jab;
      const double det = m11 * m22 - m12 * m12;
      if (det > 0.0 && std::isfinite(det)) {
        const double na = a - (m22 * ga - m12 * gb) / det;
        const double nb = b - (m11 * gb - m12 * ga) / det;
        const double p[2] = {na, nb};
        const double trial = rss(f, p, x, y);
        if (std::isfinite(trial) && trial < cur) {
          a = na;
          b = nb;
          cur = trial;
          lambda = std::max(lambda / 10.0, 1e-12);
          stepped = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!stepped) break;  // no descent direction left at working precision
  }
  out.best = {a, b, cur};
  return out;
}

}  // namespace detail

/// Least squares through the origin: slope = sum(x y) / sum(x^2).
inline FitModel fit_linear_origin(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("fit: x and y differ in length");
  if (x.empty()) throw ValidationError("fit_linear_origin: no points");
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
  }
  if (!(sxx > 0.0)) throw ValidationError("fit_linear_origin: all predictors are zero");
  return detail::finish(Family::linear_origin, {sxy / sxx}, x, y, true);
}

/// Log-spaced starting values for b used by the nonlinear families.
inline std::vector<double> nonlinear_start_grid(std::size_t per_decade = 20) {
  std::vector<double> grid;
  const std::size_t n = 4 * per_decade;
  for (std::size_t i = 0; i <= n; ++i)
    grid.push_back(std::pow(10.0, -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(n)));
  return grid;
}

inline FitModel fit_nonlinear(std::span<const double> x, std::span<const double> y,
                              Family family) {
  if (x.size() != y.size()) throw ValidationError("fit: x and y differ in length");
  if (family == Family::linear_origin) return fit_linear_origin(x, y);
  if (x.size() < 3) throw ValidationError("fit_nonlinear: need at least 3 points");

  if (family == Family::quadratic) {
    double s4 = 0, s3 = 0, s2 = 0, s2y = 0, s1y = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xx = x[i] * x[i];
      s4 += xx * xx;
      s3 += xx * x[i];
      s2 += xx;
      s2y += xx * y[i];
      s1y += x[i] * y[i];
    }
    const double det = s4 * s2 - s3 * s3;
    if (!(std::abs(det) > 0.0))
      throw ValidationError("fit quadratic: predictors do not determine two parameters");
    return detail::finish(family, {(s2y * s2 - s3 * s1y) / det, (s4 * s1y - s3 * s2y) / det}, x,
                          y, true);
  }

  if (family == Family::power)
    for (double v : x)
      if (v < 0.0) throw ValidationError("fit power: negative predictor");

  const auto grid = nonlinear_start_grid();
  std::vector<detail::Candidate> profiled;
  for (double b : grid) profiled.push_back(detail::profile(family, b, x, y));

  // Refine from the grid's local minima, best first.
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < profiled.size(); ++i) {
    const double v = profiled[i].rss;
    if (!std::isfinite(v)) continue;
    const bool left = i == 0 || v <= profiled[i - 1].rss;
    const bool right = i + 1 == profiled.size() || v <= profiled[i + 1].rss;
    if (left && right) starts.push_back(i);
  }
  if (starts.empty())
    throw ValidationError("fit " + std::string(to_string(family)) + ": no finite start");
  std::sort(starts.begin(), starts.end(),
            [&](auto l, auto r) { return profiled[l].rss < profiled[r].rss; });
  if (starts.size() > 5) starts.resize(5);

  detail::Refined best{profiled[starts.front()], false};
  for (auto i : starts) {
    const auto r = detail::refine(family, profiled[i], x, y);
    if (r.best.rss < best.best.rss || (r.best.rss == best.best.rss && r.converged))
      best = r;
  }
  return detail::finish(family, {best.best.a, best.best.b}, x, y, best.converged);
}

inline FitModel fit(std::span<const double> x, std::span<const double> y, Family family) {
  return family == Family::linear_origin ? fit_linear_origin(x, y) : fit_nonlinear(x, y, family);
}

struct XY {
  std::vector<double> x, y;
};

inline XY to_xy(const RiskDataset& points) {
  XY out;
  for (const auto& p : points) {
    out.x.push_back(p.predictor);
    out.y.push_back(p.target_tpr);
  }
  return out;
}

inline FitModel fit(const RiskDataset& points, Family family) {
  const auto xy = to_xy(points);
  return fit(xy.x, xy.y, family);
}

inline GoodnessOfFit goodness_of_fit(const RiskDataset& points, const FitModel& model) {
  const auto xy = to_xy(points);
  return goodness_of_fit(xy.x, xy.y, model);
}

struct BootstrapOptions {
  int iters = 1000;
  double level = 0.975;  ///< central mass of the percentile interval
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Bounds of the central percentile interval holding `level` of the mass.
inline Interval percentile_interval(std::vector<double> v, double level) {
  std::sort(v.begin(), v.end());
  const double tail = (1.0 - level) / 2.0;
  return {percentile_linear(v, tail), percentile_linear(v, 1.0 - tail)};
}

/// Random engine for resample `index`: a pure function of (seed, index).
inline std::mt19937_64 resample_engine(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Point fit on the full data plus a percentile bootstrap over setups.
inline FitModel bootstrap_fit(std::span<const double> x, std::span<const double> y,
                              Family family, const BootstrapOptions& opt) {
  if (opt.iters < 1) throw ValidationError("bootstrap: iters must be >= 1");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw ValidationError("bootstrap: level outside (0,1)");
  FitModel model = fit(x, y, family);
  const std::size_t n = x.size();

  std::vector<std::optional<std::vector<double>>> results(static_cast<std::size_t>(opt.iters));
  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<double> rx(n), ry(n);
    for (std::size_t i = begin; i < end; ++i) {
      auto eng = resample_engine(opt.seed, i);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      bool any_nonzero = false;
      for (std::size_t j = 0; j < n; ++j) {
        const auto k = pick(eng);
        rx[j] = x[k];
        ry[j] = y[k];
        any_nonzero = any_nonzero || rx[j] != 0.0;
      }
      if (!any_nonzero) continue;
      try {
        results[i] = fit(rx, ry, family).params;
      } catch (const ValidationError&) {
        // degenerate resample, counted below
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, opt.iters));
  if (threads == 1) {
    run(0, results.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (results.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(results.size(), b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
  }

  BootstrapResult boot;
  boot.iters = opt.iters;
  boot.level = opt.level;
  boot.seed = opt.seed;
  for (auto& r : results) {
    if (r)
      boot.params.push_back(std::move(*r));
    else
      ++boot.skipped;
  }
  if (!boot.params.empty()) {
    for (std::size_t p = 0; p < model.params.size(); ++p) {
      std::vector<double> v;
      for (const auto& s : boot.params) v.push_back(s[p]);
      boot.param_ci.push_back(percentile_interval(std::move(v), opt.level));
    }
  }
  model.bootstrap = std::move(boot);
  return model;
}

inline FitModel bootstrap_fit(const RiskDataset& points, Family family,
                              const BootstrapOptions& opt) {
  const auto xy = to_xy(points);
  return bootstrap_fit(xy.x, xy.y, family, opt);
}

struct RiskPrediction {
  double tpr_hat = 0.0;
  std::optional<Interval> ci;
};

/// f(value) clamped to [0, 1]; the interval comes from the bootstrap curves.
inline RiskPrediction predict_risk(double value, const FitModel& model) {
  if (!(value >= 0.0 && value <= 1.0))
    throw ValidationError("predict_risk: predictor value outside [0,1]");
  RiskPrediction out;
  out.tpr_hat = std::clamp(model(value), 0.0, 1.0);
  if (model.bootstrap && !model.bootstrap->params.empty()) {
    std::vector<double> v;
    for (const auto& p : model.bootstrap->params)
      v.push_back(std::clamp(evaluate(model.family, p, value), 0.0, 1.0));
    out.ci = percentile_interval(std::move(v), model.bootstrap->level);
  }
  return out;
}

struct KSweepEntry {
  int k = 0;
  FitModel fit;
};

/// One origin-anchored linear fit (with bootstrap interval) per reference-model count.
inline std::vector<KSweepEntry> k_sweep(const RiskDataset& points, const BootstrapOptions& opt) {
  std::map<int, RiskDataset> groups;
  for (const auto& p : points) {
    if (!p.k) throw ValidationError("k_sweep: point '" + p.setup_id + "' has no k");
    groups[*p.k].push_back(p);
  }
  if (groups.empty()) throw ValidationError("k_sweep: no points");
  std::vector<KSweepEntry> out;
  for (const auto& [k, group] : groups)
    out.push_back({k, bootstrap_fit(group, Family::linear_origin, opt)});
  return out;
}

}  // namespace tailrisk
