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

// Synthetic member/non-member loss logs with a controllable tail-to-head
// migration, plus simulated reference-model statistics.
//
// Every sample has a latent difficulty: head (easy) or tail (hard), each a
// lognormal loss law. Its OUT loss (what a model that never saw it would
// report) is a draw from that law. A tail sample is "migratable" when its OUT
// loss lies in the upper `migration` quantile of the tail law; training on a
// migratable sample replaces its loss by an independent head draw. Members
// report their IN loss, non-members their OUT loss. Reference models observe
// logit(exp(-loss)) of the IN or OUT loss plus Gaussian noise.
//
// All random draws happen in a fixed order per sample regardless of the
// configuration's probabilities, so configurations that differ only in
// `migration` share their random numbers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tailrisk/attacks.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/metrics.hpp"
#include "tailrisk/score_store.hpp"

namespace tailrisk {

struct SynthConfig {
  std::string setup_id = "synth";
  int n_members = 25000;
  int n_nonmembers = 25000;
  double head_mu = -4.0;  ///< log-loss mean of the head component
  double head_sigma = 1.0;
  double tail_mu = 0.5;
  double tail_sigma = 0.8;
  double tail_prob = 0.1;
  double migration = 0.0;
  /// Uniform log-loss shift applied to IN losses; 0 except in the
  /// near-symmetric preset.
  double member_shift = 0.0;
  int k_in = 32;
  int k_out = 32;
  int augmentations = 1;
  double ref_noise = 6.0;  ///< per-model noise sd in the logit domain
  std::uint64_t seed = 0;
};

inline void validate(const SynthConfig& c) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("synth config '" + c.setup_id + "': " + what);
  };
  if (c.n_members < 1 || c.n_nonmembers < 1) fail("need at least one member and one non-member");
  if (!(c.tail_prob >= 0.0 && c.tail_prob <= 1.0)) fail("tail_prob outside [0,1]");
  if (!(c.migration >= 0.0 && c.migration <= 1.0)) fail("migration outside [0,1]");
  if (!(c.tail_mu > c.head_mu)) fail("tail_mu must exceed head_mu");
  if (!(c.head_sigma > 0.0) || !(c.tail_sigma > 0.0)) fail("sigmas must be > 0");
  if (c.k_in < 2 || c.k_out < 2) fail("k_in and k_out must be >= 2");
  if (c.augmentations < 1) fail("augmentations must be >= 1");
  if (!(c.ref_noise >= 0.0)) fail("ref_noise must be >= 0");
  if (!std::isfinite(c.member_shift)) fail("member_shift must be finite");
  if (c.setup_id.empty() || c.setup_id.find(',') != std::string::npos) fail("bad setup_id");
}

/// Near-symmetric member/non-member laws with a small uniform shift, the
/// regime where LOSS AUC rather than TNR tracks the attack.
inline SynthConfig symmetric_preset(double member_shift, std::uint64_t seed) {
  SynthConfig c;
  c.setup_id = "symmetric";
  c.head_mu = 1.0;
  c.head_sigma = 0.3;
  c.tail_mu = 2.0;
  c.tail_prob = 0.0;
  c.member_shift = member_shift;
  c.ref_noise = 0.05;
  c.seed = seed;
  return c;
}

/// logit(exp(-loss)): the logit-confidence of a cross-entropy loss.
inline double loss_to_logit(double loss) { return -loss - std::log(-std::expm1(-loss)); }

/// Inverse of loss_to_logit: softplus(-logit).
inline double logit_to_loss(double logit) {
  if (logit < -30.0) return -logit + std::log1p(std::exp(logit));
  return std::log1p(std::exp(-logit));
}

/// Logit-domain matrix re-expressed as cross-entropy losses.
inline ReferenceMatrix to_loss_domain(const ReferenceMatrix& refs) {
  if (refs.stat_kind() == StatKind::loss) return refs;
  return refs.transformed(logit_to_loss, StatKind::loss);
}

struct SampleTruth {
  bool tail = false;
  bool migratable = false;  ///< tail sample that training moves to the head
  bool migrated = false;    ///< migratable and a member
};

struct SynthSetup {
  ScoreLog log;
  ReferenceMatrix refs;  ///< logit domain
  std::vector<SampleTruth> truth;
};

inline SynthSetup synth_setup(const SynthConfig& cfg) {
  validate(cfg);
  const auto n = static_cast<std::size_t>(cfg.n_members) + static_cast<std::size_t>(cfg.n_nonmembers);
  const auto k = static_cast<std::size_t>(cfg.k_in + cfg.k_out);
  const auto augs = static_cast<std::size_t>(cfg.augmentations);
  const bool mirror = cfg.k_in == cfg.k_out;

  std::mt19937_64 eng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SynthSetup out;
  out.log.setup_id = cfg.setup_id;
  out.log.records.reserve(n);
  out.truth.reserve(n);
  std::vector<std::string> ids;
  ids.reserve(n);
  std::vector<Side> sides(n * k);
  std::vector<double> stats(n * k * augs);
  std::vector<std::size_t> perm(k);

  for (std::size_t i = 0; i < n; ++i) {
    const bool member = i < static_cast<std::size_t>(cfg.n_members);
    const double u_tail = unif(eng);
    const double z_out = normal(eng);
    const double z_head = normal(eng);

    SampleTruth t;
    t.tail = u_tail < cfg.tail_prob;
    // Upper-tail probability of z_out under the standard normal.
    t.migratable = t.tail && 0.5 * std::erfc(z_out / std::numbers::sqrt2) < cfg.migration;
    t.migrated = member && t.migratable;

    const double out_loss = t.tail ? std::exp(cfg.tail_mu + cfg.tail_sigma * z_out)
                                   : std::exp(cfg.head_mu + cfg.head_sigma * z_out);
    const double trained = t.migratable ? std::exp(cfg.head_mu + cfg.head_sigma * z_head) : out_loss;
    const double in_loss = trained * std::exp(-cfg.member_shift);
    const double in_logit = loss_to_logit(in_loss), out_logit = loss_to_logit(out_loss);

    // IN/OUT assignment over reference models.
    if (mirror) {
      for (std::size_t p = 0; p < k / 2; ++p) {
        const bool first_in = unif(eng) < 0.5;
        sides[i * k + 2 * p] = first_in ? Side::in : Side::out;
        sides[i * k + 2 * p + 1] = first_in ? Side::out : Side::in;
      }
    } else {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t j = 0; j < k; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, k - 1);
        std::swap(perm[j], perm[pick(eng)]);
      }
      for (std::size_t j = 0; j < k; ++j)
        sides[i * k + perm[j]] = j < static_cast<std::size_t>(cfg.k_in) ? Side::in : Side::out;
    }
    for (std::size_t m = 0; m < k; ++m) {
      const double center = sides[i * k + m] == Side::in ? in_logit : out_logit;
      for (std::size_t a = 0; a < augs; ++a)
        stats[(i * k + m) * augs + a] = center + cfg.ref_noise * normal(eng);
    }

    char id[32];
    std::snprintf(id, sizeof(id), "s%07zu", i);
    ids.emplace_back(id);
    SampleRecord r;
    r.sample_id = id;
    r.is_member = member;
    r.loss = member ? in_loss : out_loss;
    r.confidence = std::exp(-r.loss);
    r.correct = r.loss < std::numbers::ln2;
    out.log.records.push_back(std::move(r));
    out.truth.push_back(t);
  }

  std::vector<std::string> models;
  for (std::size_t m = 0; m < k; ++m) models.push_back("ref" + std::to_string(m));
  out.refs = ReferenceMatrix(std::move(ids), std::move(models), augs, StatKind::logit,
                             std::move(sides), std::move(stats));
  validate_score_log(out.log);
  return out;
}

/// Parse "key = value" lines ('#' starts a comment) into a config.
inline SynthConfig parse_synth_config(std::istream& in, std::string_view source,
                                      SynthConfig cfg = {}) {
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(csv::where(source, ln) + "expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto real = [&] { return csv::finite_double(value, key, source, ln); };
    auto integer = [&] { return static_cast<int>(csv::integer(value, key, source, ln)); };
    if (key == "setup_id") cfg.setup_id = value;
    else if (key == "n_members") cfg.n_members = integer();
    else if (key == "n_nonmembers") cfg.n_nonmembers = integer();
    else if (key == "head_mu") cfg.head_mu = real();
    else if (key == "head_sigma") cfg.head_sigma = real();
    else if (key == "tail_mu") cfg.tail_mu = real();
    else if (key == "tail_sigma") cfg.tail_sigma = real();
    else if (key == "tail_prob") cfg.tail_prob = real();
    else if (key == "migration") cfg.migration = real();
    else if (key == "member_shift") cfg.member_shift = real();
    else if (key == "k_in") cfg.k_in = integer();
    else if (key == "k_out") cfg.k_out = integer();
    else if (key == "augmentations") cfg.augmentations = integer();
    else if (key == "ref_noise") cfg.ref_noise = real();
    else if (key == "seed") {
      const auto s = csv::integer(value, key, source, ln);
      if (s < 0) throw ValidationError(csv::where(source, ln) + "seed must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else {
      throw ValidationError(csv::where(source, ln) + "unknown key '" + key + "'");
    }
  }
  validate(cfg);
  return cfg;
}

inline void write_synth_config(std::ostream& out, const SynthConfig& c) {
  out << "setup_id = " << c.setup_id << "\nn_members = " << c.n_members
      << "\nn_nonmembers = " << c.n_nonmembers << "\nhead_mu = " << csv::format(c.head_mu)
      << "\nhead_sigma = " << csv::format(c.head_sigma) << "\ntail_mu = " << csv::format(c.tail_mu)
      << "\ntail_sigma = " << csv::format(c.tail_sigma)
      << "\ntail_prob = " << csv::format(c.tail_prob) << "\nmigration = " << csv::format(c.migration)
      << "\nmember_shift = " << csv::format(c.member_shift) << "\nk_in = " << c.k_in
      << "\nk_out = " << c.k_out << "\naugmentations = " << c.augmentations
      << "\nref_noise = " << csv::format(c.ref_noise) << "\nseed = " << c.seed << '\n';
}

inline void write_truth(std::ostream& out, const SynthSetup& s) {
  out << "sample_id,tail,migratable,migrated\n";
  for (std::size_t i = 0; i < s.truth.size(); ++i) {
    const auto& t = s.truth[i];
    out << s.log.records[i].sample_id << ',' << t.tail << ',' << t.migratable << ','
        << t.migrated << '\n';
  }
}

/// The fixed seed schedule for a grid of `n` setups: migration sweeps
/// linearly from 0 to `max_migration`, the loss laws vary per setup.
inline std::vector<SynthConfig> default_grid(int n, std::uint64_t base_seed,
                                             double max_migration = 0.2, int n_members = 25000,
                                             int n_nonmembers = 25000) {
  if (n < 2) throw ValidationError("default_grid: need at least 2 setups");
  std::mt19937_64 eng(base_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unif(eng); };
  std::vector<SynthConfig> out;
  for (int i = 0; i < n; ++i) {
    SynthConfig c;
    char id[32];
    std::snprintf(id, sizeof(id), "grid%03d", i);
    c.setup_id = id;
    c.n_members = n_members;
    c.n_nonmembers = n_nonmembers;
    c.migration = max_migration * i / (n - 1);
    c.head_mu = between(-5.0, -3.0);
    c.head_sigma = between(0.8, 1.2);
    c.tail_mu = between(0.0, 1.0);
    c.tail_sigma = between(0.5, 1.0);
    c.tail_prob = between(0.05, 0.15);
    c.seed = base_seed * 1000003ULL + static_cast<std::uint64_t>(i);
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid simulation

struct GridOptions {
  std::vector<double> alphas = kDefaultAlphas;
  /// Reference-model counts to evaluate (first k models); empty = all.
  std::vector<int> ks;
  std::vector<std::string> predictor_kinds = {std::string(predictor_kind::loss_tnr)};
  LiraOptions lira;
  RmiaOptions rmia;
};

struct SetupSummary {
  std::string setup_id;
  std::map<double, TnrAtFnr> loss_tnr;               ///< by alpha
  std::map<double, double> loss_tpr;                 ///< LOSS-attack TPR by alpha
  std::map<std::pair<int, double>, double> lira_tpr;  ///< by (k, alpha)
  std::map<double, double> rmia_tpr;                 ///< 2 reference models, by alpha
  double loss_auc = 0.0;
  double train_test_gap = 0.0;
  double migrated_fraction = 0.0;  ///< migrated members / members
};

struct GridResult {
  RiskDataset points;
  std::vector<SetupSummary> setups;
};

inline SetupSummary evaluate_setup(const SynthSetup& s, const GridOptions& opt) {
  SetupSummary sum;
  sum.setup_id = s.log.setup_id;
  const auto& log = s.log;
  const auto loss_roc = roc_points(loss_attack_scores(log), log);
  sum.loss_auc = auc(loss_roc);
  sum.train_test_gap = train_test_gap(log);
  std::size_t migrated = 0;
  for (const auto& t : s.truth) migrated += t.migrated ? 1 : 0;
  sum.migrated_fraction = static_cast<double>(migrated) / static_cast<double>(log.member_count());
  for (double a : opt.alphas) {
    sum.loss_tnr[a] = tnr_at_fnr(log, a);
    sum.loss_tpr[a] = tpr_at_fpr(loss_roc, a).tpr;
  }

  std::vector<int> ks = opt.ks;
  if (ks.empty()) ks.push_back(static_cast<int>(s.refs.model_count()));
  for (int k : ks) {
    if (k < 4 || static_cast<std::size_t>(k) > s.refs.model_count())
      throw ValidationError("grid: k=" + std::to_string(k) + " outside [4, model count]");
    std::vector<std::size_t> first(static_cast<std::size_t>(k));
    std::iota(first.begin(), first.end(), std::size_t{0});
    const auto sub = static_cast<std::size_t>(k) == s.refs.model_count() ? s.refs
                                                                         : s.refs.select_models(first);
    const auto roc = roc_points(lira_online_scores(log, sub, opt.lira), log);
    for (double a : opt.alphas) sum.lira_tpr[{k, a}] = tpr_at_fpr(roc, a).tpr;
  }

  const bool want_rmia =
      std::find(opt.predictor_kinds.begin(), opt.predictor_kinds.end(), predictor_kind::rmia_tpr) !=
      opt.predictor_kinds.end();
  if (want_rmia) {
    const std::size_t two[] = {0, 1};
    const auto sub = s.refs.select_models(two);
    ScoreLog population;
    for (const auto& r : log.records)
      if (!r.is_member) population.records.push_back(r);
    const auto roc = roc_points(rmia_scores(log, sub, population, opt.rmia), log);
    for (double a : opt.alphas) sum.rmia_tpr[a] = tpr_at_fpr(roc, a).tpr;
  }
  return sum;
}

/// Generate each setup, run the attacks and emit one RiskPoint per
/// (alpha, k, predictor kind); the target is always the LiRA TPR.
inline GridResult simulate_grid(const std::vector<SynthConfig>& cfgs, const GridOptions& opt) {
  if (cfgs.size() < 2) throw ValidationError("simulate_grid: need at least 2 configs");
  GridResult out;
  for (const auto& cfg : cfgs) {
    const auto summary = evaluate_setup(synth_setup(cfg), opt);
    for (const auto& [key, tpr] : summary.lira_tpr) {
      const auto [k, a] = key;
      for (const auto& kind : opt.predictor_kinds) {
        RiskPoint p;
        p.setup_id = summary.setup_id;
        p.alpha = a;
        p.k = k;
        p.predictor_kind = kind;
        p.target_tpr = tpr;
        if (kind == predictor_kind::loss_tnr)
          p.predictor = summary.loss_tnr.at(a).tnr;
        else if (kind == predictor_kind::loss_auc)
          p.predictor = summary.loss_auc;
        else if (kind == predictor_kind::train_test_gap)
          p.predictor = summary.train_test_gap;
        else if (kind == predictor_kind::rmia_tpr)
          p.predictor = summary.rmia_tpr.at(a);
        else
          throw ValidationError("grid: predictor kind '" + kind + "' is not simulated");
        validate_risk_point(p);
        out.points.push_back(std::move(p));
      }
    }
    out.setups.push_back(summary);
  }
  return out;
}

}  // namespace tailrisk
