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

// Per-sample log data model and the canonical comma-separated file formats:
//
//   score log          [#setup_id=..] [#epoch=..]
//                      sample_id,is_member,loss,confidence,correct[,conf_aug0..]
//   reference matrix   #stat_kind=loss|logit
//                      sample_id,ref_model_id,in_flag,aug_index,stat
//   trajectory         sample_id,epoch,loss
//   risk dataset       setup_id,alpha,k,predictor_kind,predictor,target_tpr
//
// All loaded structures are immutable after construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tailrisk/csv.hpp"
#include "tailrisk/error.hpp"

namespace tailrisk {

struct SampleRecord {
  std::string sample_id;
  bool is_member = false;
  double loss = 0.0;
  std::optional<double> confidence;
  std::optional<bool> correct;
  std::vector<double> aug_confidences;
};

struct ScoreLog {
  std::vector<SampleRecord> records;
  std::string setup_id;
  std::optional<int> epoch;
  /// Non-fatal findings from loading (e.g. an empty partition).
  std::vector<std::string> warnings;

  std::size_t size() const { return records.size(); }

  std::size_t member_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return r.is_member; }));
  }
  std::size_t nonmember_count() const { return records.size() - member_count(); }

  std::vector<double> losses(bool members) const {
    std::vector<double> out;
    for (const auto& r : records)
      if (r.is_member == members) out.push_back(r.loss);
    return out;
  }

  /// Throws unless both partitions are non-empty. Called by every metric.
  void require_both_partitions() const {
    const auto m = member_count();
    if (m == 0 || m == records.size()) {
      throw ValidationError("score log '" + setup_id + "': need at least one member and one " +
                            "non-member (members=" + std::to_string(m) +
                            ", non-members=" + std::to_string(records.size() - m) + ")");
    }
  }

  std::unordered_map<std::string, std::size_t> index_by_id() const {
    std::unordered_map<std::string, std::size_t> idx;
    idx.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) idx.emplace(records[i].sample_id, i);
    return idx;
  }
};

/// Check record invariants; fills `log.warnings` for empty partitions.
inline void validate_score_log(ScoreLog& log) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(log.records.size());
  for (const auto& r : log.records) {
    if (!seen.insert(r.sample_id).second)
      throw ValidationError("duplicate sample_id '" + r.sample_id + "'");
    if (!std::isfinite(r.loss) || r.loss < 0.0)
      throw ValidationError("sample '" + r.sample_id + "': loss must be finite and >= 0");
    if (r.confidence && !(*r.confidence >= 0.0 && *r.confidence <= 1.0))
      throw ValidationError("sample '" + r.sample_id + "': confidence outside [0,1]");
    for (double c : r.aug_confidences)
      if (!(c >= 0.0 && c <= 1.0))
        throw ValidationError("sample '" + r.sample_id + "': augmentation confidence outside [0,1]");
  }
  const auto m = log.member_count();
  if (m == 0) log.warnings.push_back("no member records");
  if (m == log.records.size()) log.warnings.push_back("no non-member records");
}

namespace detail {

struct Preamble {
  std::map<std::string, std::string> values;
  std::vector<std::string> conflicts;
};

// Consumes leading "#key=value" lines and returns the header line.
inline std::optional<std::string> read_preamble(csv::LineReader& reader, Preamble& pre) {
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    if (line.front() != '#') return line;
    std::string_view body(line);
    body.remove_prefix(1);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) continue;  // plain comment
    std::string key(body.substr(0, eq)), value(body.substr(eq + 1));
    auto [it, inserted] = pre.values.emplace(key, value);
    if (!inserted && it->second != value) pre.conflicts.push_back(key);
  }
  return std::nullopt;
}

}  // namespace detail

inline ScoreLog parse_score_log(std::istream& in, std::string_view source,
                                std::string default_setup_id = "") {
  csv::LineReader reader(in);
  detail::Preamble pre;
  auto header = detail::read_preamble(reader, pre);
  if (!header) throw ValidationError(std::string(source) + ": empty score log (header missing)");

  const auto cols = csv::split(*header);
  static constexpr std::string_view kFixed[] = {"sample_id", "is_member", "loss", "confidence",
                                                "correct"};
  if (cols.size() < 5 || !std::equal(std::begin(kFixed), std::end(kFixed), cols.begin())) {
    throw ValidationError(csv::where(source, reader.line_no()) +
                          "expected header 'sample_id,is_member,loss,confidence,correct'");
  }
  const std::size_t n_aug = cols.size() - 5;
  for (std::size_t a = 0; a < n_aug; ++a) {
    if (cols[5 + a] != "conf_aug" + std::to_string(a)) {
      throw ValidationError(csv::where(source, reader.line_no()) + "augmentation column " +
                            std::to_string(5 + a) + " must be named conf_aug" +
                            std::to_string(a));
    }
  }

  ScoreLog log;
  log.setup_id = default_setup_id;
  if (!pre.conflicts.empty())
    throw ValidationError(std::string(source) + ": conflicting '#" + pre.conflicts.front() +
                          "' lines");
  for (const auto& [key, value] : pre.values) {
    if (key == "setup_id") {
      log.setup_id = value;
    } else if (key == "epoch") {
      auto e = csv::to_int(value);
      if (!e) throw ValidationError(std::string(source) + ": '#epoch' is not an integer");
      log.epoch = static_cast<int>(*e);
    } else {
      log.warnings.push_back("unknown preamble key '" + key + "' ignored");
    }
  }

  std::unordered_set<std::string> seen;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const auto ln = reader.line_no();
    if (f.size() != cols.size()) {
      throw ValidationError(csv::where(source, ln) + "expected " + std::to_string(cols.size()) +
                            " fields, got " + std::to_string(f.size()));
    }
    SampleRecord r;
    r.sample_id = std::string(f[0]);
    if (r.sample_id.empty()) throw ValidationError(csv::where(source, ln) + "empty sample_id");
    if (!seen.insert(r.sample_id).second)
      throw ValidationError(csv::where(source, ln) + "duplicate sample_id '" + r.sample_id + "'");
    r.is_member = csv::flag01(f[1], "is_member", source, ln);
    r.loss = csv::finite_double(f[2], "loss", source, ln);
    if (r.loss < 0.0) throw ValidationError(csv::where(source, ln) + "loss < 0");
    if (!f[3].empty()) {
      const double c = csv::finite_double(f[3], "confidence", source, ln);
      if (c < 0.0 || c > 1.0)
        throw ValidationError(csv::where(source, ln) + "confidence outside [0,1]");
      r.confidence = c;
    }
    if (!f[4].empty()) r.correct = csv::flag01(f[4], "correct", source, ln);

    std::size_t filled = 0;
    for (std::size_t a = 0; a < n_aug; ++a) filled += f[5 + a].empty() ? 0 : 1;
    if (filled != 0 && filled != n_aug) {
      throw ValidationError(csv::where(source, ln) +
                            "augmentation columns must be all filled or all empty");
    }
    if (filled == n_aug) {
      for (std::size_t a = 0; a < n_aug; ++a) {
        const double c = csv::finite_double(f[5 + a], cols[5 + a], source, ln);
        if (c < 0.0 || c > 1.0)
          throw ValidationError(csv::where(source, ln) + "augmentation confidence outside [0,1]");
        r.aug_confidences.push_back(c);
      }
    }
    log.records.push_back(std::move(r));
  }
  validate_score_log(log);
  return log;
}

inline ScoreLog load_score_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open score log '" + path.string() + "'");
  return parse_score_log(in, path.string(), path.stem().string());
}

inline void write_score_log(std::ostream& out, const ScoreLog& log) {
  std::size_t n_aug = 0;
  for (const auto& r : log.records) n_aug = std::max(n_aug, r.aug_confidences.size());
  if (!log.setup_id.empty()) out << "#setup_id=" << log.setup_id << '\n';
  if (log.epoch) out << "#epoch=" << *log.epoch << '\n';
  out << "sample_id,is_member,loss,confidence,correct";
  for (std::size_t a = 0; a < n_aug; ++a) out << ",conf_aug" << a;
  out << '\n';
  for (const auto& r : log.records) {
    out << r.sample_id << ',' << (r.is_member ? '1' : '0') << ',' << csv::format(r.loss) << ',';
    if (r.confidence) out << csv::format(*r.confidence);
    out << ',';
    if (r.correct) out << (*r.correct ? '1' : '0');
    for (std::size_t a = 0; a < n_aug; ++a) {
      out << ',';
      if (a < r.aug_confidences.size()) out << csv::format(r.aug_confidences[a]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Reference-model statistics

enum class StatKind { loss, logit };

inline std::string_view to_string(StatKind k) { return k == StatKind::loss ? "loss" : "logit"; }

inline StatKind parse_stat_kind(std::string_view s) {
  if (s == "loss") return StatKind::loss;
  if (s == "logit") return StatKind::logit;
  throw ValidationError("unknown stat_kind '" + std::string(s) + "' (expected loss|logit)");
}

/// Whether a sample was in a reference model's training set.
enum class Side : std::int8_t { missing = -1, out = 0, in = 1 };

struct InOutCounts {
  int in = 0;
  int out = 0;
};

/// Dense sample x model x augmentation table of reference-model statistics.
///
/// A (sample, model) cell is either missing or carries a side (IN/OUT) plus
/// one value per augmentation; individual augmentations may be missing.
/// Missing values are stored as NaN, which can never come from a file since
/// non-finite stats are rejected at load.
class ReferenceMatrix {
 public:
  ReferenceMatrix() = default;

  ReferenceMatrix(std::vector<std::string> sample_ids, std::vector<std::string> model_ids,
                  std::size_t aug_count, StatKind kind, std::vector<Side> sides,
                  std::vector<double> stats)
      : sample_ids_(std::move(sample_ids)),
        model_ids_(std::move(model_ids)),
        aug_count_(aug_count),
        kind_(kind),
        sides_(std::move(sides)),
        stats_(std::move(stats)) {
    const auto n_s = sample_ids_.size(), n_m = model_ids_.size();
    if (aug_count_ == 0) throw ValidationError("reference matrix: need at least one augmentation");
    if (sides_.size() != n_s * n_m || stats_.size() != n_s * n_m * aug_count_)
      throw ValidationError("reference matrix: storage size does not match dimensions");
    for (std::size_t s = 0; s < n_s; ++s) {
      if (!sample_index_.emplace(sample_ids_[s], s).second)
        throw ValidationError("reference matrix: duplicate sample_id '" + sample_ids_[s] + "'");
    }
    std::unordered_set<std::string_view> models;
    for (const auto& m : model_ids_)
      if (!models.insert(m).second)
        throw ValidationError("reference matrix: duplicate ref_model_id '" + m + "'");

    counts_.resize(n_s);
    for (std::size_t s = 0; s < n_s; ++s) {
      for (std::size_t m = 0; m < n_m; ++m) {
        const Side side = sides_[s * n_m + m];
        std::size_t present = 0;
        for (std::size_t a = 0; a < aug_count_; ++a) {
          const double v = stats_[(s * n_m + m) * aug_count_ + a];
          if (std::isnan(v)) continue;
          if (!std::isfinite(v))
            throw ValidationError("reference matrix: non-finite stat for sample '" +
                                  sample_ids_[s] + "'");
          ++present;
        }
        if (side == Side::missing && present != 0)
          throw ValidationError("reference matrix: stat without membership for sample '" +
                                sample_ids_[s] + "'");
        if (side != Side::missing && present == 0)
          throw ValidationError("reference matrix: membership without any stat for sample '" +
                                sample_ids_[s] + "'");
        if (side == Side::in) ++counts_[s].in;
        if (side == Side::out) ++counts_[s].out;
      }
    }
  }

  std::size_t sample_count() const { return sample_ids_.size(); }
  std::size_t model_count() const { return model_ids_.size(); }
  std::size_t aug_count() const { return aug_count_; }
  StatKind stat_kind() const { return kind_; }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<std::string>& model_ids() const { return model_ids_; }

  std::optional<std::size_t> find_sample(std::string_view id) const {
    auto it = sample_index_.find(std::string(id));
    if (it == sample_index_.end()) return std::nullopt;
    return it->second;
  }

  Side side(std::size_t s, std::size_t m) const { return sides_[s * model_ids_.size() + m]; }

  std::optional<double> stat(std::size_t s, std::size_t m, std::size_t a) const {
    const double v = stats_[(s * model_ids_.size() + m) * aug_count_ + a];
    if (std::isnan(v)) return std::nullopt;
    return v;
  }

  /// Per-model value: mean over the augmentations present for the cell.
  std::optional<double> model_stat(std::size_t s, std::size_t m) const {
    if (side(s, m) == Side::missing) return std::nullopt;
    double sum = 0.0;
    std::size_t n = 0;
    const double* cell = &stats_[(s * model_ids_.size() + m) * aug_count_];
    for (std::size_t a = 0; a < aug_count_; ++a) {
      if (std::isnan(cell[a])) continue;
      sum += cell[a];
      ++n;
    }
    return sum / static_cast<double>(n);
  }

  /// Per-model values for one side, in model order.
  std::vector<double> side_stats(std::size_t s, Side which) const {
    std::vector<double> out;
    for (std::size_t m = 0; m < model_ids_.size(); ++m)
      if (side(s, m) == which) out.push_back(*model_stat(s, m));
    return out;
  }

  /// Arithmetic mean of the per-model values on one side (l_in / l_out).
  std::optional<double> side_mean(std::size_t s, Side which) const {
    const auto v = side_stats(s, which);
    if (v.empty()) return std::nullopt;
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
  }

  InOutCounts counts(std::size_t s) const { return counts_[s]; }

  /// Samples with fewer than `min_per_side` IN or OUT models.
  std::vector<std::string> under_covered(int min_per_side = 2) const {
    std::vector<std::string> out;
    for (std::size_t s = 0; s < sample_ids_.size(); ++s)
      if (counts_[s].in < min_per_side || counts_[s].out < min_per_side)
        out.push_back(sample_ids_[s]);
    return out;
  }

  /// Keep only the given models (by index), in the given order.
  ReferenceMatrix select_models(std::span<const std::size_t> models) const {
    const auto n_s = sample_ids_.size(), n_m = model_ids_.size(), n_k = models.size();
    std::vector<std::string> ids;
    for (auto m : models) {
      if (m >= n_m) throw ValidationError("select_models: model index out of range");
      ids.push_back(model_ids_[m]);
    }
    std::vector<Side> sides(n_s * n_k);
    std::vector<double> stats(n_s * n_k * aug_count_);
    for (std::size_t s = 0; s < n_s; ++s) {
      for (std::size_t j = 0; j < n_k; ++j) {
        sides[s * n_k + j] = sides_[s * n_m + models[j]];
        std::copy_n(&stats_[(s * n_m + models[j]) * aug_count_], aug_count_,
                    &stats[(s * n_k + j) * aug_count_]);
      }
    }
    return ReferenceMatrix(sample_ids_, std::move(ids), aug_count_, kind_, std::move(sides),
                           std::move(stats));
  }

  /// Apply `fn` to every present value and relabel the stat kind.
  template <typename Fn>
  ReferenceMatrix transformed(Fn&& fn, StatKind kind) const {
    auto stats = stats_;
    for (double& v : stats)
      if (!std::isnan(v)) v = fn(v);
    return ReferenceMatrix(sample_ids_, model_ids_, aug_count_, kind, sides_, std::move(stats));
  }

  /// Findings recorded at load (e.g. samples below two IN/OUT models).
  std::vector<std::string> warnings;

 private:
  std::vector<std::string> sample_ids_;
  std::vector<std::string> model_ids_;
  std::size_t aug_count_ = 1;
  StatKind kind_ = StatKind::logit;
  std::vector<Side> sides_;
  std::vector<double> stats_;
  std::unordered_map<std::string, std::size_t> sample_index_;
  std::vector<InOutCounts> counts_;
};

/// Assembles a ReferenceMatrix from long-format cells.
class ReferenceMatrixBuilder {
 public:
  explicit ReferenceMatrixBuilder(StatKind kind) : kind_(kind) {}

  /// `context` prefixes error messages (e.g. a file location).
  void add(std::string_view sample_id, std::string_view model_id, bool in, std::size_t aug,
           double stat, std::string_view context = "") {
    if (!std::isfinite(stat))
      throw ValidationError(std::string(context) + "non-finite stat");
    const auto s = intern(sample_index_, sample_ids_, sample_id);
    const auto m = intern(model_index_, model_ids_, model_id);
    const auto key = std::pair{s, m};
    auto [it, inserted] = sides_.emplace(key, in ? Side::in : Side::out);
    if (!inserted && it->second != (in ? Side::in : Side::out)) {
      throw ValidationError(std::string(context) + "conflicting in_flag for sample '" +
                            std::string(sample_id) + "' and model '" + std::string(model_id) +
                            "'");
    }
    auto [sit, sinserted] = stats_.emplace(std::tuple{s, m, aug}, stat);
    if (!sinserted && sit->second != stat) {
      throw ValidationError(std::string(context) + "cell (" + std::string(sample_id) + ", " +
                            std::string(model_id) + ", aug " + std::to_string(aug) +
                            ") listed twice with different stat");
    }
    aug_count_ = std::max(aug_count_, aug + 1);
  }

  ReferenceMatrix build() const {
    const auto n_s = sample_ids_.size(), n_m = model_ids_.size();
    std::vector<Side> sides(n_s * n_m, Side::missing);
    std::vector<double> stats(n_s * n_m * aug_count_, std::numeric_limits<double>::quiet_NaN());
    for (const auto& [key, side] : sides_) sides[key.first * n_m + key.second] = side;
    for (const auto& [key, v] : stats_) {
      const auto [s, m, a] = key;
      stats[(s * n_m + m) * aug_count_ + a] = v;
    }
    ReferenceMatrix out(sample_ids_, model_ids_, aug_count_, kind_, std::move(sides),
                        std::move(stats));
    for (const auto& id : out.under_covered(2))
      out.warnings.push_back("sample '" + id + "' has fewer than 2 IN or 2 OUT reference models");
    return out;
  }

 private:
  static std::size_t intern(std::unordered_map<std::string, std::size_t>& index,
                            std::vector<std::string>& ids, std::string_view id) {
    auto [it, inserted] = index.emplace(std::string(id), ids.size());
    if (inserted) ids.emplace_back(id);
    return it->second;
  }

  StatKind kind_;
  std::size_t aug_count_ = 1;
  std::unordered_map<std::string, std::size_t> sample_index_, model_index_;
  std::vector<std::string> sample_ids_, model_ids_;
  std::map<std::pair<std::size_t, std::size_t>, Side> sides_;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> stats_;
};

inline ReferenceMatrix parse_reference_matrix(std::istream& in, std::string_view source) {
  csv::LineReader reader(in);
  detail::Preamble pre;
  auto header = detail::read_preamble(reader, pre);
  if (std::find(pre.conflicts.begin(), pre.conflicts.end(), "stat_kind") != pre.conflicts.end())
    throw ValidationError(std::string(source) + ": stat_kind mixed within one file");
  auto kind_it = pre.values.find("stat_kind");
  if (kind_it == pre.values.end())
    throw ValidationError(std::string(source) + ": missing '#stat_kind=loss|logit' line");
  const StatKind kind = parse_stat_kind(kind_it->second);
  if (!header || *header != "sample_id,ref_model_id,in_flag,aug_index,stat") {
    throw ValidationError(csv::where(source, reader.line_no()) +
                          "expected header 'sample_id,ref_model_id,in_flag,aug_index,stat'");
  }

  ReferenceMatrixBuilder builder(kind);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto ln = reader.line_no();
    if (line.front() == '#') {
      if (line.rfind("#stat_kind=", 0) == 0 && line.substr(11) != to_string(kind))
        throw ValidationError(csv::where(source, ln) + "stat_kind mixed within one file");
      continue;
    }
    const auto f = csv::split(line);
    if (f.size() != 5)
      throw ValidationError(csv::where(source, ln) + "expected 5 fields, got " +
                            std::to_string(f.size()));
    if (f[0].empty() || f[1].empty())
      throw ValidationError(csv::where(source, ln) + "empty sample_id or ref_model_id");
    const bool in_flag = csv::flag01(f[2], "in_flag", source, ln);
    const auto aug = csv::integer(f[3], "aug_index", source, ln);
    if (aug < 0) throw ValidationError(csv::where(source, ln) + "aug_index < 0");
    const double stat = csv::finite_double(f[4], "stat", source, ln);
    builder.add(f[0], f[1], in_flag, static_cast<std::size_t>(aug), stat, csv::where(source, ln));
  }
  return builder.build();
}

inline ReferenceMatrix load_reference_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open reference matrix '" + path.string() + "'");
  return parse_reference_matrix(in, path.string());
}

inline void write_reference_matrix(std::ostream& out, const ReferenceMatrix& refs) {
  out << "#stat_kind=" << to_string(refs.stat_kind()) << '\n';
  out << "sample_id,ref_model_id,in_flag,aug_index,stat\n";
  for (std::size_t s = 0; s < refs.sample_count(); ++s) {
    for (std::size_t m = 0; m < refs.model_count(); ++m) {
      const Side side = refs.side(s, m);
      if (side == Side::missing) continue;
      for (std::size_t a = 0; a < refs.aug_count(); ++a) {
        const auto v = refs.stat(s, m, a);
        if (!v) continue;
        out << refs.sample_ids()[s] << ',' << refs.model_ids()[m] << ','
            << (side == Side::in ? '1' : '0') << ',' << a << ',' << csv::format(*v) << '\n';
      }
    }
  }
}

struct ValidationReport {
  std::vector<std::string> missing_from_refs;  ///< in the log, absent from refs
  std::vector<std::string> missing_from_log;   ///< in refs, absent from the log
  double coverage = 0.0;                       ///< fraction of log ids present in refs

  bool clean() const { return missing_from_refs.empty() && missing_from_log.empty(); }
};

inline ValidationReport validate_pairing(const ScoreLog& log, const ReferenceMatrix& refs) {
  ValidationReport rep;
  std::size_t hit = 0;
  for (const auto& r : log.records) {
    if (refs.find_sample(r.sample_id))
      ++hit;
    else
      rep.missing_from_refs.push_back(r.sample_id);
  }
  const auto idx = log.index_by_id();
  for (const auto& id : refs.sample_ids())
    if (!idx.contains(id)) rep.missing_from_log.push_back(id);
  rep.coverage = log.records.empty() ? 0.0
                                     : static_cast<double>(hit) /
                                           static_cast<double>(log.records.size());
  return rep;
}

// ---------------------------------------------------------------------------
// Loss trajectories

struct TrajectoryLog {
  std::vector<std::string> sample_ids;
  std::vector<std::vector<double>> losses;  ///< per sample, ordered by epoch
  std::vector<std::string> warnings;

  bool ragged() const {
    return std::any_of(losses.begin(), losses.end(),
                       [&](const auto& t) { return t.size() != losses.front().size(); });
  }
};

inline TrajectoryLog parse_trajectory_log(std::istream& in, std::string_view source) {
  csv::LineReader reader(in);
  std::string line;
  while (reader.next(line) && line.empty()) {
  }
  if (line != "sample_id,epoch,loss")
    throw ValidationError(csv::where(source, reader.line_no()) +
                          "expected header 'sample_id,epoch,loss'");

  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> ids;
  std::vector<std::map<std::int64_t, double>> rows;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto ln = reader.line_no();
    const auto f = csv::split(line);
    if (f.size() != 3)
      throw ValidationError(csv::where(source, ln) + "expected 3 fields, got " +
                            std::to_string(f.size()));
    const auto epoch = csv::integer(f[1], "epoch", source, ln);
    const double loss = csv::finite_double(f[2], "loss", source, ln);
    if (loss < 0.0) throw ValidationError(csv::where(source, ln) + "loss < 0");
    auto [it, inserted] = index.emplace(std::string(f[0]), ids.size());
    if (inserted) {
      ids.emplace_back(f[0]);
      rows.emplace_back();
    }
    if (!rows[it->second].emplace(epoch, loss).second)
      throw ValidationError(csv::where(source, ln) + "duplicate epoch for sample '" +
                            std::string(f[0]) + "'");
  }
  TrajectoryLog traj;
  traj.sample_ids = std::move(ids);
  for (auto& r : rows) {
    std::vector<double> t;
    for (const auto& [epoch, loss] : r) t.push_back(loss);
    traj.losses.push_back(std::move(t));
  }
  if (!traj.losses.empty() && traj.ragged())
    traj.warnings.push_back("trajectories have unequal lengths");
  for (std::size_t i = 0; i < traj.losses.size(); ++i)
    if (traj.losses[i].size() < 2)
      traj.warnings.push_back("sample '" + traj.sample_ids[i] + "' has fewer than 2 epochs");
  return traj;
}

inline TrajectoryLog load_trajectory_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trajectory file '" + path.string() + "'");
  return parse_trajectory_log(in, path.string());
}

inline void write_trajectory_log(std::ostream& out, const TrajectoryLog& traj) {
  out << "sample_id,epoch,loss\n";
  for (std::size_t i = 0; i < traj.sample_ids.size(); ++i)
    for (std::size_t e = 0; e < traj.losses[i].size(); ++e)
      out << traj.sample_ids[i] << ',' << e << ',' << csv::format(traj.losses[i][e]) << '\n';
}

// ---------------------------------------------------------------------------
// Setup-level (predictor, target TPR) pairs

namespace predictor_kind {
inline constexpr std::string_view loss_tnr = "loss_tnr";
inline constexpr std::string_view loss_auc = "loss_auc";
inline constexpr std::string_view train_test_gap = "train_test_gap";
inline constexpr std::string_view lt_iqr_auc = "lt_iqr_auc";
inline constexpr std::string_view rmia_tpr = "rmia_tpr";
}  // namespace predictor_kind

struct RiskPoint {
  std::string setup_id;
  double predictor = 0.0;
  double target_tpr = 0.0;
  double alpha = 0.001;
  std::optional<int> k;
  std::string predictor_kind = std::string(predictor_kind::loss_tnr);
};

using RiskDataset = std::vector<RiskPoint>;

inline void validate_risk_point(const RiskPoint& p) {
  // An accuracy gap is a signed difference; every other predictor is a rate.
  const double lo = p.predictor_kind == predictor_kind::train_test_gap ? -1.0 : 0.0;
  if (!(p.predictor >= lo && p.predictor <= 1.0))
    throw ValidationError("risk point '" + p.setup_id + "': predictor out of range");
  if (!(p.target_tpr >= 0.0 && p.target_tpr <= 1.0))
    throw ValidationError("risk point '" + p.setup_id + "': target_tpr outside [0,1]");
  if (!(p.alpha > 0.0 && p.alpha < 1.0))
    throw ValidationError("risk point '" + p.setup_id + "': alpha outside (0,1)");
  if (p.predictor_kind.empty() || p.predictor_kind.find(',') != std::string::npos)
    throw ValidationError("risk point '" + p.setup_id + "': bad predictor_kind");
}

inline RiskDataset parse_risk_dataset(std::istream& in, std::string_view source) {
  csv::LineReader reader(in);
  std::string line;
  while (reader.next(line) && line.empty()) {
  }
  if (line != "setup_id,alpha,k,predictor_kind,predictor,target_tpr")
    throw ValidationError(csv::where(source, reader.line_no()) +
                          "expected header 'setup_id,alpha,k,predictor_kind,predictor,target_tpr'");
  RiskDataset data;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto ln = reader.line_no();
    const auto f = csv::split(line);
    if (f.size() != 6)
      throw ValidationError(csv::where(source, ln) + "expected 6 fields, got " +
                            std::to_string(f.size()));
    RiskPoint p;
    p.setup_id = std::string(f[0]);
    p.alpha = csv::finite_double(f[1], "alpha", source, ln);
    if (!f[2].empty()) p.k = static_cast<int>(csv::integer(f[2], "k", source, ln));
    p.predictor_kind = std::string(f[3]);
    p.predictor = csv::finite_double(f[4], "predictor", source, ln);
    p.target_tpr = csv::finite_double(f[5], "target_tpr", source, ln);
    try {
      validate_risk_point(p);
    } catch (const ValidationError& e) {
      throw ValidationError(csv::where(source, ln) + e.what());
    }
    data.push_back(std::move(p));
  }
  return data;
}

inline RiskDataset load_risk_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open risk dataset '" + path.string() + "'");
  return parse_risk_dataset(in, path.string());
}

inline void write_risk_dataset(std::ostream& out, const RiskDataset& data) {
  out << "setup_id,alpha,k,predictor_kind,predictor,target_tpr\n";
  for (const auto& p : data) {
    out << p.setup_id << ',' << csv::format(p.alpha) << ',';
    if (p.k) out << *p.k;
    out << ',' << p.predictor_kind << ',' << csv::format(p.predictor) << ','
        << csv::format(p.target_tpr) << '\n';
  }
}

/// Points matching an alpha (exact) and predictor kind, optionally a k.
inline RiskDataset select_points(const RiskDataset& data, double alpha, std::string_view kind,
                                 std::optional<int> k = std::nullopt) {
  RiskDataset out;
  for (const auto& p : data)
    if (p.alpha == alpha && p.predictor_kind == kind && (!k || p.k == k)) out.push_back(p);
  return out;
}

}  // namespace tailrisk
