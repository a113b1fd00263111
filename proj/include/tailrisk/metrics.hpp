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

// Empirical ROC machinery and the model-level measures built on it.
//
// Tie rule everywhere: a sample is predicted member when score >= tau and
// flagged non-member when loss >= tau. Operating points are chosen on the
// empirical curve without interpolation, so the achieved error rate never
// exceeds the requested one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailrisk/attacks.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/score_store.hpp"

namespace tailrisk {

/// Default FPR levels reported by every audit.
inline const std::vector<double> kDefaultAlphas = {0.01, 0.001, 0.0001};

struct RocPoint {
  double threshold;  ///< predict positive when score >= threshold
  std::size_t tp;
  std::size_t fp;
};

class RocCurve {
 public:
  /// Build from raw scores; `positive[i]` is the true label of `scores[i]`.
  static RocCurve from_scores(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size())
      throw ValidationError("roc: scores and labels differ in length");
    RocCurve c;
    for (bool p : positive) (p ? c.positives_ : c.negatives_) += 1;
    if (c.positives_ == 0 || c.negatives_ == 0)
      throw ValidationError("roc: need at least one positive and one negative");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

    c.points_.push_back({std::numeric_limits<double>::infinity(), 0, 0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
      const double t = scores[order[i]];
      for (; i < order.size() && scores[order[i]] == t; ++i) (positive[order[i]] ? tp : fp) += 1;
      c.points_.push_back({t, tp, fp});
    }
    return c;
  }

  /// Points in order of decreasing threshold; the first is (+inf, 0, 0).
  const std::vector<RocPoint>& points() const { return points_; }
  std::size_t positives() const { return positives_; }
  std::size_t negatives() const { return negatives_; }

  double tpr(std::size_t i) const {
    return static_cast<double>(points_[i].tp) / static_cast<double>(positives_);
  }
  double fpr(std::size_t i) const {
    return static_cast<double>(points_[i].fp) / static_cast<double>(negatives_);
  }

 private:
  std::vector<RocPoint> points_;
  std::size_t positives_ = 0;
  std::size_t negatives_ = 0;
};

/// ROC of an attack against the membership labels of `log`.
inline RocCurve roc_points(const MembershipScores& scores, const ScoreLog& log) {
  const auto idx = log.index_by_id();
  std::vector<bool> labels;
  labels.reserve(scores.size());
  for (const auto& id : scores.sample_ids) {
    auto it = idx.find(id);
    if (it == idx.end()) throw ValidationError("roc: no membership label for sample '" + id + "'");
    labels.push_back(log.records[it->second].is_member);
  }
  // std::vector<bool> has no contiguous storage.
  std::unique_ptr<bool[]> flat(new bool[labels.size()]);
  std::copy(labels.begin(), labels.end(), flat.get());
  return RocCurve::from_scores(scores.scores, std::span<const bool>(flat.get(), labels.size()));
}

inline void check_alpha(double alpha, std::string_view what) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw ValidationError(std::string(what) + ": alpha must lie in [0, 1)");
}

struct TprAtFpr {
  double tpr = 0.0;
  double tau = std::numeric_limits<double>::infinity();
  double achieved_fpr = 0.0;
};

/// Operating point with the smallest threshold whose empirical FPR <= alpha.
inline TprAtFpr tpr_at_fpr(const RocCurve& curve, double alpha) {
  check_alpha(alpha, "tpr_at_fpr");
  const auto& pts = curve.points();
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size() && curve.fpr(i) <= alpha; ++i) best = i;
  return {curve.tpr(best), pts[best].threshold, curve.fpr(best)};
}

struct TnrAtFnr {
  double tnr = 0.0;
  double tau = std::numeric_limits<double>::infinity();
  double achieved_fnr = 0.0;
  /// alpha * |members| < 1: no member may be flagged, so the threshold sits
  /// above the largest member loss.
  bool below_resolution = false;
};

/// LOSS-attack TNR at a member false-negative rate of at most alpha.
///
/// A sample is flagged non-member when loss >= tau. tau is the smallest
/// observed loss value for which the fraction of flagged members is <= alpha;
/// tnr is the fraction of flagged non-members.
inline TnrAtFnr tnr_at_fnr(const ScoreLog& log, double alpha) {
  check_alpha(alpha, "tnr_at_fnr");
  log.require_both_partitions();
  auto members = log.losses(true);
  auto nonmembers = log.losses(false);
  std::sort(members.begin(), members.end());
  std::sort(nonmembers.begin(), nonmembers.end());
  const auto m = static_cast<double>(members.size());
  const auto n = static_cast<double>(nonmembers.size());

  std::vector<double> candidates;
  candidates.reserve(members.size() + nonmembers.size());
  std::merge(members.begin(), members.end(), nonmembers.begin(), nonmembers.end(),
             std::back_inserter(candidates));
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto at_or_above = [](const std::vector<double>& sorted, double t) {
    return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  };
  // Flagged-member fraction is non-increasing in tau.
  const auto it = std::partition_point(candidates.begin(), candidates.end(),
                                       [&](double t) { return at_or_above(members, t) / m > alpha; });

  TnrAtFnr out;
  out.below_resolution = alpha * m < 1.0;
  if (it == candidates.end()) return out;
  out.tau = *it;
  out.achieved_fnr = at_or_above(members, out.tau) / m;
  out.tnr = at_or_above(nonmembers, out.tau) / n;
  return out;
}

/// Trapezoidal area under the ROC; equals the Mann-Whitney statistic with
/// ties counted one half. Accumulated in integers, so the result is exact
/// up to the final division.
inline double auc(const RocCurve& curve) {
  const auto& pts = curve.points();
  std::uint64_t twice_area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    twice_area += static_cast<std::uint64_t>(pts[i].fp - pts[i - 1].fp) *
                  static_cast<std::uint64_t>(pts[i].tp + pts[i - 1].tp);
  return static_cast<double>(twice_area) /
         (2.0 * static_cast<double>(curve.positives()) * static_cast<double>(curve.negatives()));
}

/// AUC of the LOSS attack (score = -loss).
inline double loss_auc(const ScoreLog& log) {
  log.require_both_partitions();
  return auc(roc_points(loss_attack_scores(log), log));
}

/// Mean member accuracy minus mean non-member accuracy.
inline double train_test_gap(const ScoreLog& log) {
  log.require_both_partitions();
  double correct_m = 0, correct_n = 0, m = 0, n = 0;
  for (const auto& r : log.records) {
    if (!r.correct)
      throw ValidationError("train_test_gap: sample '" + r.sample_id + "' has no correctness flag");
    (r.is_member ? m : n) += 1;
    if (*r.correct) (r.is_member ? correct_m : correct_n) += 1;
  }
  return correct_m / m - correct_n / n;
}

/// Percentile of sorted data with linear interpolation between order
/// statistics (position p * (n - 1)).
inline double percentile_linear(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("percentile of empty data");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Per-sample interquartile range of the loss trajectory.
inline MembershipScores lt_iqr_scores(const TrajectoryLog& traj) {
  if (traj.losses.empty()) throw ValidationError("lt_iqr: empty trajectory log");
  if (traj.ragged()) throw ValidationError("lt_iqr: trajectories have unequal lengths");
  if (traj.losses.front().size() < 2)
    throw ValidationError("lt_iqr: trajectories need at least 2 epochs");
  MembershipScores out;
  out.attack = AttackKind::loss;
  for (std::size_t i = 0; i < traj.losses.size(); ++i) {
    auto v = traj.losses[i];
    std::sort(v.begin(), v.end());
    out.sample_ids.push_back(traj.sample_ids[i]);
    out.scores.push_back(percentile_linear(v, 0.75) - percentile_linear(v, 0.25));
  }
  return out;
}

/// AUC of LT-IQR scores against the labels of `log`; trajectories for
/// samples absent from the log are ignored.
inline double lt_iqr_auc(const TrajectoryLog& traj, const ScoreLog& log) {
  auto scores = lt_iqr_scores(traj);
  const auto idx = log.index_by_id();
  MembershipScores kept;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!idx.contains(scores.sample_ids[i])) continue;
    kept.sample_ids.push_back(scores.sample_ids[i]);
    kept.scores.push_back(scores.scores[i]);
  }
  return auc(roc_points(kept, log));
}

// ---------------------------------------------------------------------------
// Tail-migration diagnostics

struct QuantileSummary {
  double q25 = 0, q50 = 0, q75 = 0, q90 = 0;
};

inline QuantileSummary summarize(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {percentile_linear(v, 0.25), percentile_linear(v, 0.5), percentile_linear(v, 0.75),
          percentile_linear(v, 0.9)};
}

struct FlaggedSample {
  std::string sample_id;
  double lira_score;
  double target_loss;
  double l_out;  ///< mean loss over OUT reference models
};

struct MigrationReport {
  double alpha = 0.0;
  double tau = std::numeric_limits<double>::infinity();
  double achieved_fpr = 0.0;
  double tpr = 0.0;
  std::vector<FlaggedSample> flagged;
  std::optional<QuantileSummary> flagged_l_out;
  std::optional<QuantileSummary> flagged_target_loss;
  QuantileSummary member_loss;
  QuantileSummary nonmember_loss;
  /// Fraction of flagged samples whose l_out reaches the non-member 90th percentile.
  double tail_fraction = 0.0;
};

/// Members identified by LiRA at FPR = alpha, with their OUT-model mean loss.
inline MigrationReport migration_report(const ScoreLog& log, const ReferenceMatrix& refs,
                                        const MembershipScores& lira, double alpha) {
  if (refs.stat_kind() != StatKind::loss)
    throw ValidationError("migration_report: reference statistics must be losses");
  const auto op = tpr_at_fpr(roc_points(lira, log), alpha);
  MigrationReport rep;
  rep.alpha = alpha;
  rep.tau = op.tau;
  rep.tpr = op.tpr;
  rep.achieved_fpr = op.achieved_fpr;
  rep.member_loss = summarize(log.losses(true));
  rep.nonmember_loss = summarize(log.losses(false));

  const auto idx = log.index_by_id();
  std::vector<double> l_out, target;
  for (std::size_t i = 0; i < lira.size(); ++i) {
    const auto& rec = log.records[idx.at(lira.sample_ids[i])];
    if (!rec.is_member || !(lira.scores[i] >= op.tau)) continue;
    const auto s = refs.find_sample(rec.sample_id);
    const auto mean = s ? refs.side_mean(*s, Side::out) : std::nullopt;
    if (!mean)
      throw ValidationError("migration_report: no OUT reference losses for '" + rec.sample_id +
                            "'");
    rep.flagged.push_back({rec.sample_id, lira.scores[i], rec.loss, *mean});
    l_out.push_back(*mean);
    target.push_back(rec.loss);
  }
  if (!rep.flagged.empty()) {
    rep.flagged_l_out = summarize(l_out);
    rep.flagged_target_loss = summarize(target);
    const auto tail = static_cast<double>(std::count_if(
        l_out.begin(), l_out.end(), [&](double v) { return v >= rep.nonmember_loss.q90; }));
    rep.tail_fraction = tail / static_cast<double>(l_out.size());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Log-log histograms (plot data only)

inline constexpr double kLossFloor = 1e-10;

struct HistogramSpec {
  std::vector<double> edges;  ///< bins + 1 geometric edges
  std::vector<std::size_t> counts;
  bool degenerate = false;    ///< all losses equal after flooring: one bin
};

/// Histogram over explicit [lo, hi]; values are floored at kLossFloor and
/// clamped into the range. Bins are left-closed, the last also right-closed.
inline HistogramSpec loglog_histogram(std::span<const double> losses, int bins, double lo,
                                      double hi) {
  if (losses.empty()) throw ValidationError("histogram: no losses");
  if (bins < 2) throw ValidationError("histogram: need at least 2 bins");
  lo = std::max(lo, kLossFloor);
  hi = std::max(hi, kLossFloor);
  HistogramSpec h;
  if (!(hi > lo)) {
    h.degenerate = true;
    h.edges = {lo, hi};
    h.counts = {losses.size()};
    return h;
  }
  const double ratio = hi / lo;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[i] = lo * std::pow(ratio, static_cast<double>(i) / bins);
  h.edges.front() = lo;
  h.edges.back() = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : losses) {
    v = std::max(v, kLossFloor);
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
    auto bin = static_cast<std::ptrdiff_t>(it - h.edges.begin()) - 1;
    bin = std::clamp<std::ptrdiff_t>(bin, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

inline HistogramSpec loglog_histogram(std::span<const double> losses, int bins) {
  if (losses.empty()) throw ValidationError("histogram: no losses");
  const auto [mn, mx] = std::minmax_element(losses.begin(), losses.end());
  return loglog_histogram(losses, bins, *mn, *mx);
}

}  // namespace tailrisk
