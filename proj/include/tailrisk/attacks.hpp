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

// Membership scoring: LOSS, online LiRA and RMIA. Every attack maps its
// inputs to one score per target sample, higher meaning more member-like.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tailrisk/error.hpp"
#include "tailrisk/score_store.hpp"

namespace tailrisk {

enum class AttackKind { loss, lira, rmia };
enum class VarianceMode { per_sample, global };

inline std::string_view to_string(AttackKind a) {
  switch (a) {
    case AttackKind::loss: return "loss";
    case AttackKind::lira: return "lira";
    case AttackKind::rmia: return "rmia";
  }
  return "?";
}

inline std::string_view to_string(VarianceMode v) {
  return v == VarianceMode::per_sample ? "per_sample" : "global";
}

inline VarianceMode parse_variance_mode(std::string_view s) {
  if (s == "per_sample") return VarianceMode::per_sample;
  if (s == "global") return VarianceMode::global;
  throw ValidationError("unknown variance mode '" + std::string(s) + "'");
}

/// Configuration echo carried alongside the scores.
struct AttackParams {
  std::optional<int> k;
  std::optional<VarianceMode> variance_mode;
  std::optional<double> sigma_floor;
  std::optional<double> gamma;
  std::optional<double> eps;
};

struct MembershipScores {
  AttackKind attack = AttackKind::loss;
  AttackParams params;
  std::vector<std::string> sample_ids;
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
};

inline void write_scores(std::ostream& out, const MembershipScores& s) {
  out << "sample_id,score\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << s.sample_ids[i] << ',' << csv::format(s.scores[i]) << '\n';
}

inline MembershipScores parse_scores(std::istream& in, std::string_view source,
                                     AttackKind kind = AttackKind::loss) {
  csv::LineReader reader(in);
  std::string line;
  while (reader.next(line) && line.empty()) {
  }
  if (line != "sample_id,score")
    throw ValidationError(csv::where(source, reader.line_no()) + "expected header 'sample_id,score'");
  MembershipScores out;
  out.attack = kind;
  std::unordered_set<std::string> seen;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto ln = reader.line_no();
    const auto f = csv::split(line);
    if (f.size() != 2)
      throw ValidationError(csv::where(source, ln) + "expected 2 fields, got " +
                            std::to_string(f.size()));
    if (!seen.emplace(f[0]).second)
      throw ValidationError(csv::where(source, ln) + "duplicate sample_id '" + std::string(f[0]) +
                            "'");
    out.sample_ids.emplace_back(f[0]);
    out.scores.push_back(csv::finite_double(f[1], "score", source, ln));
  }
  return out;
}

/// log(p / (1 - p)) after clamping p to [eps, 1 - eps].
inline double logit_transform(double p, double eps = 1e-6) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("logit_transform: p outside [0,1]");
  if (!(eps > 0.0 && eps < 0.5)) throw ValidationError("logit_transform: eps outside (0, 0.5)");
  p = std::clamp(p, eps, 1.0 - eps);
  const double q = p >= 1.0 - eps ? eps : 1.0 - p;
  return std::log(p / q);
}

/// LOSS attack: score = -loss.
inline MembershipScores loss_attack_scores(const ScoreLog& log) {
  if (log.records.empty()) throw ValidationError("loss attack: empty score log");
  MembershipScores out;
  out.attack = AttackKind::loss;
  out.sample_ids.reserve(log.size());
  out.scores.reserve(log.size());
  for (const auto& r : log.records) {
    out.sample_ids.push_back(r.sample_id);
    out.scores.push_back(-r.loss);
  }
  return out;
}

// ---------------------------------------------------------------------------
// LiRA (online)

struct GaussianPair {
  double mu_in = 0.0;
  double sigma_in = 1.0;
  double mu_out = 0.0;
  double sigma_out = 1.0;
};

/// log N(x; mu_in, sigma_in^2) - log N(x; mu_out, sigma_out^2).
inline double lira_score(double x, const GaussianPair& g) {
  const double zi = (x - g.mu_in) / g.sigma_in;
  const double zo = (x - g.mu_out) / g.sigma_out;
  return std::log(g.sigma_out / g.sigma_in) + 0.5 * (zo * zo - zi * zi);
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  ///< unbiased, n - 1 denominator
  double ss = 0.0;   ///< sum of squared deviations
};

inline MeanVar mean_var(std::span<const double> v) {
  MeanVar out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  for (double x : v) out.ss += (x - out.mean) * (x - out.mean);
  out.var = v.size() > 1 ? out.ss / static_cast<double>(v.size() - 1) : 0.0;
  return out;
}

struct LiraOptions {
  VarianceMode variance_mode = VarianceMode::per_sample;
  double sigma_floor = 1e-8;
  double eps = 1e-6;
};

/// Target-model observation in the domain of the reference statistics.
///
/// Logit-domain references: mean logit of the augmentation confidences, else
/// logit(confidence), else -loss. Loss-domain references: the loss itself.
inline double lira_observation(const SampleRecord& r, StatKind kind, double eps) {
  if (kind == StatKind::loss) return r.loss;
  if (!r.aug_confidences.empty()) {
    double sum = 0.0;
    for (double c : r.aug_confidences) sum += logit_transform(c, eps);
    return sum / static_cast<double>(r.aug_confidences.size());
  }
  if (r.confidence) return logit_transform(*r.confidence, eps);
  return -r.loss;
}

inline MembershipScores lira_online_scores(const ScoreLog& log, const ReferenceMatrix& refs,
                                           const LiraOptions& opt = {}) {
  if (!(opt.sigma_floor > 0.0)) throw ValidationError("lira: sigma_floor must be > 0");
  const auto n = log.size();
  std::vector<std::size_t> row(n);
  std::vector<std::string> short_ids;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = refs.find_sample(log.records[i].sample_id);
    const auto c = s ? refs.counts(*s) : InOutCounts{};
    if (c.in < 2 || c.out < 2) {
      short_ids.push_back(log.records[i].sample_id);
      continue;
    }
    row[i] = *s;
  }
  if (!short_ids.empty()) {
    std::string msg = "lira: " + std::to_string(short_ids.size()) +
                      " sample(s) lack 2 IN and 2 OUT reference models:";
    for (std::size_t i = 0; i < short_ids.size() && i < 20; ++i) msg += " " + short_ids[i];
    if (short_ids.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }

  std::vector<MeanVar> in_fit(n), out_fit(n);
  for (std::size_t i = 0; i < n; ++i) {
    in_fit[i] = mean_var(refs.side_stats(row[i], Side::in));
    out_fit[i] = mean_var(refs.side_stats(row[i], Side::out));
  }

  // Pooled within-sample variance: sum of squared deviations over sum of (n_s - 1).
  double pooled_in = 0.0, pooled_out = 0.0;
  if (opt.variance_mode == VarianceMode::global) {
    double ss_in = 0.0, ss_out = 0.0, dof_in = 0.0, dof_out = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = refs.counts(row[i]);
      ss_in += in_fit[i].ss;
      ss_out += out_fit[i].ss;
      dof_in += c.in - 1;
      dof_out += c.out - 1;
    }
    pooled_in = dof_in > 0 ? ss_in / dof_in : 0.0;
    pooled_out = dof_out > 0 ? ss_out / dof_out : 0.0;
  }

  MembershipScores out;
  out.attack = AttackKind::lira;
  out.params.variance_mode = opt.variance_mode;
  out.params.sigma_floor = opt.sigma_floor;
  out.params.eps = opt.eps;
  if (refs.model_count() > 0) out.params.k = static_cast<int>(refs.model_count());
  out.sample_ids.reserve(n);
  out.scores.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double var_in = opt.variance_mode == VarianceMode::global ? pooled_in : in_fit[i].var;
    const double var_out =
        opt.variance_mode == VarianceMode::global ? pooled_out : out_fit[i].var;
    const GaussianPair g{in_fit[i].mean, std::max(std::sqrt(var_in), opt.sigma_floor),
                         out_fit[i].mean, std::max(std::sqrt(var_out), opt.sigma_floor)};
    const double x = lira_observation(log.records[i], refs.stat_kind(), opt.eps);
    out.sample_ids.push_back(log.records[i].sample_id);
    out.scores.push_back(lira_score(x, g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// RMIA

struct RmiaOptions {
  double gamma = 2.0;
  double eps = 1e-6;  ///< lower clamp for probabilities in ratio denominators
};

/// Probability of the true class from one reference statistic.
inline double stat_to_probability(double stat, StatKind kind) {
  if (kind == StatKind::logit) return 1.0 / (1.0 + std::exp(-stat));
  return std::exp(-stat);  // cross-entropy loss
}

/// Target-model probability P(x | theta): mean augmentation confidence, else
/// confidence, else exp(-loss).
inline double target_probability(const SampleRecord& r) {
  if (!r.aug_confidences.empty()) {
    double sum = 0.0;
    for (double c : r.aug_confidences) sum += c;
    return sum / static_cast<double>(r.aug_confidences.size());
  }
  if (r.confidence) return *r.confidence;
  return std::exp(-r.loss);
}

/// Mean reference-model probability over every model with a value, IN or OUT.
/// Augmentations are averaged per model first.
inline std::optional<double> mean_reference_probability(const ReferenceMatrix& refs,
                                                        std::size_t s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < refs.model_count(); ++m) {
    if (refs.side(s, m) == Side::missing) continue;
    double cell = 0.0;
    std::size_t na = 0;
    for (std::size_t a = 0; a < refs.aug_count(); ++a) {
      if (auto v = refs.stat(s, m, a)) {
        cell += stat_to_probability(*v, refs.stat_kind());
        ++na;
      }
    }
    sum += cell / static_cast<double>(na);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Likelihood ratio P(x | theta) / P_bar(x), both clamped below by eps.
inline double rmia_ratio(double target_p, double reference_p, double eps) {
  return std::max(target_p, eps) / std::max(reference_p, eps);
}

/// Fraction of population samples z with ratio(x) / ratio(z) >= gamma.
inline MembershipScores rmia_scores(const ScoreLog& log, const ReferenceMatrix& refs,
                                    const ScoreLog& population, const RmiaOptions& opt = {}) {
  if (population.records.empty()) throw ValidationError("rmia: empty population");
  if (!(opt.gamma > 0.0)) throw ValidationError("rmia: gamma must be > 0");
  if (!(opt.eps > 0.0)) throw ValidationError("rmia: eps must be > 0");

  std::unordered_set<std::string_view> members;
  for (const auto& r : log.records)
    if (r.is_member) members.insert(r.sample_id);

  auto ratio_of = [&](const SampleRecord& r) {
    const auto s = refs.find_sample(r.sample_id);
    const auto pbar = s ? mean_reference_probability(refs, *s) : std::nullopt;
    if (!pbar)
      throw ValidationError("rmia: no reference statistics for sample '" + r.sample_id + "'");
    return rmia_ratio(target_probability(r), *pbar, opt.eps);
  };

  std::vector<double> pop;
  pop.reserve(population.size());
  for (const auto& z : population.records) {
    if (members.contains(z.sample_id))
      throw ValidationError("rmia: population sample '" + z.sample_id +
                            "' is a scored member");
    pop.push_back(ratio_of(z));
  }
  // x / z is non-increasing in z under correctly rounded division, so the
  // set of dominated population points is a prefix of the sorted ratios.
  std::sort(pop.begin(), pop.end());

  MembershipScores out;
  out.attack = AttackKind::rmia;
  out.params.gamma = opt.gamma;
  out.params.eps = opt.eps;
  out.params.k = static_cast<int>(refs.model_count());
  for (const auto& r : log.records) {
    const double rx = ratio_of(r);
    const auto first_fail = std::partition_point(
        pop.begin(), pop.end(), [&](double rz) { return rx / rz >= opt.gamma; });
    out.sample_ids.push_back(r.sample_id);
    out.scores.push_back(static_cast<double>(first_fail - pop.begin()) /
                         static_cast<double>(pop.size()));
  }
  return out;
}

}  // namespace tailrisk
