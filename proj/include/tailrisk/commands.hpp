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

// Audit workflows behind the command-line front end. Each command is a pure
// function of its input files and options; errors surface as
// ValidationError (exit 2) or InfeasibleError (exit 3).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tailrisk/attacks.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/estimator.hpp"
#include "tailrisk/metrics.hpp"
#include "tailrisk/report.hpp"
#include "tailrisk/score_store.hpp"
#include "tailrisk/synthgen.hpp"

namespace tailrisk::cli {

enum class OutputFormat { text, json };

struct CommonOptions {
  std::vector<double> alphas = kDefaultAlphas;
  bool alphas_explicit = false;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  OutputFormat format = OutputFormat::text;
};

namespace fs = std::filesystem;

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  fn(out);
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

inline void check_alphas(const CommonOptions& common) {
  if (common.alphas.empty()) throw ValidationError("at least one --alpha is required");
  for (double a : common.alphas)
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("--alpha must lie in (0,1)");
}

// ---------------------------------------------------------------------------
// Audit reports

struct AuditInputs {
  const ScoreLog* log = nullptr;
  const std::vector<FitRecord>* fits = nullptr;
  const TrajectoryLog* trajectories = nullptr;
  int bins = 50;
};

inline bool has_correctness(const ScoreLog& log) {
  return std::all_of(log.records.begin(), log.records.end(),
                     [](const auto& r) { return r.correct.has_value(); });
}

/// Reference-free part of the audit: TNR, AUC, baselines, histograms and
/// estimator predictions. Never touches reference-model data.
inline AuditReport build_audit(const AuditInputs& in, const CommonOptions& common) {
  check_alphas(common);
  const ScoreLog& log = *in.log;
  log.require_both_partitions();

  AuditReport rep;
  rep.setup_id = log.setup_id;
  rep.n_members = log.member_count();
  rep.n_nonmembers = log.nonmember_count();
  rep.loss_auc = loss_auc(log);
  for (const auto& w : log.warnings) rep.notices.push_back("score log: " + w);

  if (has_correctness(log))
    rep.train_test_gap = train_test_gap(log);
  else
    rep.notices.push_back("train-test gap skipped: correctness flags missing");
  if (in.trajectories) rep.lt_iqr_auc = lt_iqr_auc(*in.trajectories, log);

  {
    const auto members = log.losses(true), nonmembers = log.losses(false);
    auto all = members;
    all.insert(all.end(), nonmembers.begin(), nonmembers.end());
    const auto [mn, mx] = std::minmax_element(all.begin(), all.end());
    rep.member_histogram = loglog_histogram(members, in.bins, *mn, *mx);
    rep.nonmember_histogram = loglog_histogram(nonmembers, in.bins, *mn, *mx);
    if (rep.member_histogram->degenerate)
      rep.notices.push_back("histogram degenerate: every loss is equal after flooring");
  }

  if (!in.fits) rep.notices.push_back("no fit model supplied: reporting raw TNR/AUC only");
  for (double alpha : common.alphas) {
    AlphaEntry e;
    e.alpha = alpha;
    e.loss_tnr = tnr_at_fnr(log, alpha);
    if (e.loss_tnr.below_resolution) {
      const std::string msg = "alpha=" + fmt_num(alpha) + ": alpha * |members| < 1, threshold " +
                              "sits above the largest member loss";
      if (common.strict) throw InfeasibleError(msg);
      rep.notices.push_back(msg);
    }
    if (in.fits) {
      bool any = false;
      for (const auto& f : *in.fits) {
        if (f.alpha != alpha) continue;
        std::optional<double> value;
        if (f.predictor_kind == predictor_kind::loss_tnr) value = e.loss_tnr.tnr;
        else if (f.predictor_kind == predictor_kind::loss_auc) value = rep.loss_auc;
        else if (f.predictor_kind == predictor_kind::train_test_gap) value = rep.train_test_gap;
        else if (f.predictor_kind == predictor_kind::lt_iqr_auc) value = rep.lt_iqr_auc;
        if (!value || *value < 0.0 || *value > 1.0) {
          rep.notices.push_back("fit '" + std::string(to_string(f.model.family)) + "' on " +
                                f.predictor_kind + " at alpha=" + fmt_num(alpha) +
                                " skipped: predictor unavailable from these inputs");
          continue;
        }
        e.predicted.push_back({std::string(to_string(f.model.family)), f.predictor_kind, f.k,
                               *value, predict_risk(*value, f.model)});
        any = true;
      }
      if (!any) rep.notices.push_back("no fitted estimator for alpha=" + fmt_num(alpha));
    }
    rep.per_alpha.push_back(std::move(e));
  }
  if (in.fits) rep.fits = *in.fits;
  return rep;
}

/// Adds measured LiRA TPR per alpha and, with loss-domain statistics, the
/// tail-migration diagnostics at `migration_alpha`.
inline void add_reference_measurements(AuditReport& rep, const ScoreLog& log,
                                       const ReferenceMatrix& refs,
                                       const ReferenceMatrix* loss_refs,
                                       const LiraOptions& lira, double migration_alpha) {
  const auto pairing = validate_pairing(log, refs);
  if (!pairing.missing_from_refs.empty())
    rep.notices.push_back(std::to_string(pairing.missing_from_refs.size()) +
                          " log sample(s) missing from the reference matrix");
  const auto scores = lira_online_scores(log, refs, lira);
  rep.lira_params = scores.params;
  const auto roc = roc_points(scores, log);
  for (auto& e : rep.per_alpha) e.measured_lira = tpr_at_fpr(roc, e.alpha);

  const ReferenceMatrix* for_losses = refs.stat_kind() == StatKind::loss ? &refs : loss_refs;
  if (for_losses)
    rep.migration = migration_report(log, *for_losses, scores, migration_alpha);
  else
    rep.notices.push_back("migration report skipped: no loss-domain reference statistics");
}

inline void emit(std::ostream& out, const AuditReport& rep, OutputFormat format) {
  if (format == OutputFormat::json)
    out << to_json(rep).dump(2) << '\n';
  else
    out << to_text(rep);
}

struct EstimateArgs {
  fs::path log;
  std::optional<fs::path> model;
  std::optional<fs::path> trajectories;
  int bins = 50;
};

inline void cmd_estimate(const EstimateArgs& args, const CommonOptions& common, std::ostream& out) {
  const auto log = load_score_log(args.log);
  std::optional<std::vector<FitRecord>> fits;
  if (args.model) fits = load_fit_file(*args.model);
  std::optional<TrajectoryLog> traj;
  if (args.trajectories) traj = load_trajectory_log(*args.trajectories);
  AuditInputs in{&log, fits ? &*fits : nullptr, traj ? &*traj : nullptr, args.bins};
  emit(out, build_audit(in, common), common.format);
}

struct ReportArgs {
  EstimateArgs base;
  fs::path refs;
  std::optional<fs::path> loss_refs;
  LiraOptions lira;
  double migration_alpha = 0.001;
};

inline void cmd_report(const ReportArgs& args, const CommonOptions& common, std::ostream& out) {
  const auto log = load_score_log(args.base.log);
  std::optional<std::vector<FitRecord>> fits;
  if (args.base.model) fits = load_fit_file(*args.base.model);
  std::optional<TrajectoryLog> traj;
  if (args.base.trajectories) traj = load_trajectory_log(*args.base.trajectories);
  AuditInputs in{&log, fits ? &*fits : nullptr, traj ? &*traj : nullptr, args.base.bins};
  auto rep = build_audit(in, common);
  const auto refs = load_reference_matrix(args.refs);
  std::optional<ReferenceMatrix> loss_refs;
  if (args.loss_refs) loss_refs = load_reference_matrix(*args.loss_refs);
  add_reference_measurements(rep, log, refs, loss_refs ? &*loss_refs : nullptr, args.lira,
                             args.migration_alpha);
  emit(out, rep, common.format);
}

// ---------------------------------------------------------------------------
// attack

struct AttackArgs {
  AttackKind attack = AttackKind::loss;
  fs::path log;
  std::optional<fs::path> refs;
  std::optional<fs::path> population;
  LiraOptions lira;
  RmiaOptions rmia;
  std::optional<fs::path> out;
};

inline MembershipScores run_attack(const AttackArgs& args) {
  const auto log = load_score_log(args.log);
  switch (args.attack) {
    case AttackKind::loss:
      return loss_attack_scores(log);
    case AttackKind::lira: {
      if (!args.refs) throw ValidationError("attack lira requires --refs <reference matrix>");
      return lira_online_scores(log, load_reference_matrix(*args.refs), args.lira);
    }
    case AttackKind::rmia: {
      if (!args.refs) throw ValidationError("attack rmia requires --refs <reference matrix>");
      if (!args.population)
        throw ValidationError(
            "attack rmia requires --population <score log of population samples disjoint "
            "from the members>, e.g. --population test_pool.csv");
      return rmia_scores(log, load_reference_matrix(*args.refs), load_score_log(*args.population),
                         args.rmia);
    }
  }
  throw ValidationError("unknown attack");
}

inline void cmd_attack(const AttackArgs& args, std::ostream& out) {
  const auto scores = run_attack(args);
  if (args.out)
    write_file(*args.out, [&](std::ostream& o) { write_scores(o, scores); });
  else
    write_scores(out, scores);
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
  fs::path log;
  std::optional<fs::path> scores;
  std::optional<fs::path> trajectories;
};

inline void cmd_metrics(const MetricsArgs& args, const CommonOptions& common, std::ostream& out) {
  check_alphas(common);
  const auto log = load_score_log(args.log);
  log.require_both_partitions();
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["setup_id"] = log.setup_id;
  const auto loss_roc = roc_points(loss_attack_scores(log), log);
  j["loss_auc"] = auc(loss_roc);
  if (has_correctness(log)) j["train_test_gap"] = train_test_gap(log);
  if (args.trajectories) j["lt_iqr_auc"] = lt_iqr_auc(load_trajectory_log(*args.trajectories), log);
  std::optional<RocCurve> score_roc;
  if (args.scores) {
    std::ifstream in(*args.scores);
    if (!in) throw ValidationError("cannot open scores file '" + args.scores->string() + "'");
    score_roc = roc_points(parse_scores(in, args.scores->string()), log);
    j["scores_auc"] = auc(*score_roc);
  }
  j["per_alpha"] = Json::array();
  for (double a : common.alphas) {
    const auto tnr = tnr_at_fnr(log, a);
    if (tnr.below_resolution && common.strict)
      throw InfeasibleError("alpha=" + fmt_num(a) + ": alpha * |members| < 1");
    Json e;
    e["alpha"] = a;
    e["loss_tnr"] = tnr.tnr;
    e["loss_tnr_tau"] = number_or_null(tnr.tau);
    e["achieved_fnr"] = tnr.achieved_fnr;
    e["below_resolution"] = tnr.below_resolution;
    e["loss_tpr"] = tpr_at_fpr(loss_roc, a).tpr;
    if (score_roc) {
      const auto op = tpr_at_fpr(*score_roc, a);
      e["scores_tpr"] = op.tpr;
      e["scores_achieved_fpr"] = op.achieved_fpr;
    }
    j["per_alpha"].push_back(std::move(e));
  }
  if (common.format == OutputFormat::json) {
    out << j.dump(2) << '\n';
    return;
  }
  out << "setup: " << log.setup_id << '\n';
  out << "loss AUC: " << fmt_num(j["loss_auc"].get<double>()) << '\n';
  if (j.contains("train_test_gap"))
    out << "train-test gap: " << fmt_num(j["train_test_gap"].get<double>()) << '\n';
  if (j.contains("lt_iqr_auc"))
    out << "LT-IQR AUC: " << fmt_num(j["lt_iqr_auc"].get<double>()) << '\n';
  if (j.contains("scores_auc"))
    out << "scores AUC: " << fmt_num(j["scores_auc"].get<double>()) << '\n';
  for (const auto& e : j["per_alpha"]) {
    out << "alpha=" << fmt_num(e["alpha"].get<double>())
        << "  loss TNR@FNR=" << fmt_num(e["loss_tnr"].get<double>())
        << "  loss TPR@FPR=" << fmt_num(e["loss_tpr"].get<double>());
    if (e.contains("scores_tpr")) out << "  scores TPR@FPR=" << fmt_num(e["scores_tpr"].get<double>());
    if (e["below_resolution"].get<bool>()) out << "  [below resolution]";
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// fit / predict

struct FitArgs {
  fs::path data;
  std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};
  std::string predictor_kind = std::string(predictor_kind::loss_tnr);
  int iters = 1000;
  double level = 0.975;
  unsigned threads = 1;
  std::optional<fs::path> out;
};

/// Fits every requested family on each (alpha, k) slice of the dataset.
inline std::vector<FitRecord> run_fits(const RiskDataset& data, const FitArgs& args,
                                       const CommonOptions& common) {
  std::set<double> alphas;
  if (common.alphas_explicit)
    alphas.insert(common.alphas.begin(), common.alphas.end());
  else
    for (const auto& p : data)
      if (p.predictor_kind == args.predictor_kind) alphas.insert(p.alpha);
  if (alphas.empty())
    throw ValidationError("fit: no points with predictor_kind '" + args.predictor_kind + "'");

  BootstrapOptions boot;
  boot.iters = args.iters;
  boot.level = args.level;
  boot.seed = common.seed.value_or(0);
  boot.threads = args.threads;

  std::vector<FitRecord> fits;
  for (double alpha : alphas) {
    std::map<std::optional<int>, RiskDataset> groups;
    for (const auto& p : data)
      if (p.alpha == alpha && p.predictor_kind == args.predictor_kind) groups[p.k].push_back(p);
    if (groups.empty())
      throw ValidationError("fit: no points at alpha=" + fmt_num(alpha) + " for predictor_kind '" +
                            args.predictor_kind + "'");
    for (const auto& [k, pts] : groups) {
      for (Family f : args.families) {
        FitRecord r;
        r.alpha = alpha;
        r.predictor_kind = args.predictor_kind;
        r.k = k;
        r.model = args.iters > 0 ? bootstrap_fit(pts, f, boot) : fit(pts, f);
        fits.push_back(std::move(r));
      }
    }
  }
  return fits;
}

/// Goodness-of-fit table per slice; the best value in each column is bolded.
inline void write_gof_table(std::ostream& out, const std::vector<FitRecord>& fits) {
  std::size_t i = 0;
  while (i < fits.size()) {
    std::size_t j = i;
    while (j < fits.size() && fits[j].alpha == fits[i].alpha && fits[j].k == fits[i].k) ++j;
    out << "alpha=" << fmt_num(fits[i].alpha) << "  predictor=" << fits[i].predictor_kind;
    if (fits[i].k) out << "  k=" << *fits[i].k;
    out << "  n=" << fits[i].model.n_points << '\n';
    double best_r2 = -std::numeric_limits<double>::infinity();
    double best_mae = std::numeric_limits<double>::infinity(), best_rmse = best_mae;
    for (std::size_t t = i; t < j; ++t) {
      const auto& g = fits[t].model.gof;
      if (g.r2) best_r2 = std::max(best_r2, *g.r2);
      best_mae = std::min(best_mae, g.mae);
      best_rmse = std::min(best_rmse, g.rmse);
    }
    auto cell = [](double v, bool best) {
      const auto s = fmt_num(v, 4);
      return best ? "**" + s + "**" : s;
    };
    out << std::left << std::setw(16) << "Function" << std::setw(14) << "R2" << std::setw(14)
        << "MAE" << std::setw(14) << "RMSE" << "Params\n";
    for (std::size_t t = i; t < j; ++t) {
      const auto& m = fits[t].model;
      out << std::setw(16) << to_string(m.family)
          << std::setw(14) << (m.gof.r2 ? cell(*m.gof.r2, *m.gof.r2 == best_r2) : "undefined")
          << std::setw(14) << cell(m.gof.mae, m.gof.mae == best_mae) << std::setw(14)
          << cell(m.gof.rmse, m.gof.rmse == best_rmse);
      for (std::size_t p = 0; p < m.params.size(); ++p) {
        out << (p ? " " : "") << fmt_num(m.params[p]);
        if (m.bootstrap && p < m.bootstrap->param_ci.size())
          out << " [" << fmt_num(m.bootstrap->param_ci[p].lower) << ", "
              << fmt_num(m.bootstrap->param_ci[p].upper) << "]";
      }
      if (!m.converged) out << "  (not converged)";
      out << '\n';
    }
    out << '\n';
    i = j;
  }
}

inline void cmd_fit(const FitArgs& args, const CommonOptions& common, std::ostream& out) {
  const auto data = load_risk_dataset(args.data);
  const auto fits = run_fits(data, args, common);
  if (args.out) write_file(*args.out, [&](std::ostream& o) { o << fit_file_json(fits); });
  if (common.format == OutputFormat::json) {
    Json j;
    j["schema_version"] = kFitFileSchemaVersion;
    j["models"] = Json::array();
    for (const auto& f : fits) j["models"].push_back(to_json(f, false));
    out << j.dump(2) << '\n';
  } else {
    write_gof_table(out, fits);
  }
}

struct PredictArgs {
  fs::path model;
  double value = 0.0;
  std::optional<Family> family;
  std::string predictor_kind = std::string(predictor_kind::loss_tnr);
};

inline void cmd_predict(const PredictArgs& args, const CommonOptions& common, std::ostream& out) {
  const auto fits = load_fit_file(args.model);
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["predictor_kind"] = args.predictor_kind;
  j["predictor"] = args.value;
  j["predictions"] = Json::array();
  for (const auto& f : fits) {
    if (f.predictor_kind != args.predictor_kind) continue;
    if (args.family && f.model.family != *args.family) continue;
    if (common.alphas_explicit &&
        std::find(common.alphas.begin(), common.alphas.end(), f.alpha) == common.alphas.end())
      continue;
    const auto p = predict_risk(args.value, f.model);
    Json e;
    e["alpha"] = f.alpha;
    e["k"] = f.k ? Json(*f.k) : Json(nullptr);
    e["family"] = std::string(to_string(f.model.family));
    e["tpr_hat"] = p.tpr_hat;
    e["ci"] = p.ci ? to_json(*p.ci) : Json(nullptr);
    j["predictions"].push_back(std::move(e));
  }
  if (j["predictions"].empty()) throw ValidationError("predict: no matching fitted model");
  if (common.format == OutputFormat::json) {
    out << j.dump(2) << '\n';
    return;
  }
  for (const auto& e : j["predictions"]) {
    out << "alpha=" << fmt_num(e["alpha"].get<double>());
    if (!e["k"].is_null()) out << " k=" << e["k"].get<int>();
    out << " " << e["family"].get<std::string>() << ": " << fmt_num(e["tpr_hat"].get<double>());
    if (!e["ci"].is_null())
      out << " [" << fmt_num(e["ci"][0].get<double>()) << ", " << fmt_num(e["ci"][1].get<double>())
          << "]";
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// synth / grid

struct SynthArgs {
  SynthConfig config;
  fs::path out_dir;
};

/// Writes log.csv, refs_logit.csv, refs_loss.csv, truth.csv and config.txt.
inline void cmd_synth(const SynthArgs& args, std::ostream& out) {
  const auto s = synth_setup(args.config);
  write_file(args.out_dir / "log.csv", [&](std::ostream& o) { write_score_log(o, s.log); });
  write_file(args.out_dir / "refs_logit.csv",
             [&](std::ostream& o) { write_reference_matrix(o, s.refs); });
  write_file(args.out_dir / "refs_loss.csv",
             [&](std::ostream& o) { write_reference_matrix(o, to_loss_domain(s.refs)); });
  write_file(args.out_dir / "truth.csv", [&](std::ostream& o) { write_truth(o, s); });
  write_file(args.out_dir / "config.txt", [&](std::ostream& o) { write_synth_config(o, args.config); });
  std::size_t migrated = 0;
  for (const auto& t : s.truth) migrated += t.migrated;
  out << "wrote " << s.log.size() << " samples x " << s.refs.model_count()
      << " reference models to " << args.out_dir.string() << " (" << migrated
      << " migrated members)\n";
}

struct GridArgs {
  std::vector<SynthConfig> configs;  ///< explicit configs; empty = default schedule
  int setups = 30;
  double max_migration = 0.2;
  int n_members = 25000;
  int n_nonmembers = 25000;
  std::vector<int> ks;
  std::vector<std::string> predictor_kinds = {std::string(predictor_kind::loss_tnr)};
  LiraOptions lira;
  fs::path out;
};

inline void cmd_grid(const GridArgs& args, const CommonOptions& common, std::ostream& out) {
  check_alphas(common);
  auto cfgs = args.configs;
  if (cfgs.empty())
    cfgs = default_grid(args.setups, common.seed.value_or(1), args.max_migration, args.n_members,
                        args.n_nonmembers);
  GridOptions opt;
  opt.alphas = common.alphas;
  opt.ks = args.ks;
  opt.predictor_kinds = args.predictor_kinds;
  opt.lira = args.lira;
  const auto grid = simulate_grid(cfgs, opt);
  write_file(args.out, [&](std::ostream& o) { write_risk_dataset(o, grid.points); });
  if (common.format == OutputFormat::json) {
    Json j;
    j["schema_version"] = kReportSchemaVersion;
    j["setups"] = Json::array();
    for (const auto& s : grid.setups) {
      Json e;
      e["setup_id"] = s.setup_id;
      e["loss_auc"] = s.loss_auc;
      e["train_test_gap"] = s.train_test_gap;
      e["migrated_fraction"] = s.migrated_fraction;
      e["loss_tnr"] = Json::object();
      for (const auto& [a, t] : s.loss_tnr) e["loss_tnr"][fmt_num(a)] = t.tnr;
      e["lira_tpr"] = Json::array();
      for (const auto& [key, v] : s.lira_tpr)
        e["lira_tpr"].push_back(Json{{"k", key.first}, {"alpha", key.second}, {"tpr", v}});
      j["setups"].push_back(std::move(e));
    }
    out << j.dump(2) << '\n';
    return;
  }
  out << "wrote " << grid.points.size() << " risk points for " << grid.setups.size()
      << " setups to " << args.out.string() << '\n';
  for (const auto& s : grid.setups) {
    out << s.setup_id << "  migrated=" << fmt_num(s.migrated_fraction)
        << "  loss_auc=" << fmt_num(s.loss_auc);
    for (const auto& [a, t] : s.loss_tnr) out << "  tnr@" << fmt_num(a) << "=" << fmt_num(t.tnr);
    for (const auto& [key, v] : s.lira_tpr)
      out << "  lira[k=" << key.first << "]@" << fmt_num(key.second) << "=" << fmt_num(v);
    out << '\n';
  }
}

}  // namespace tailrisk::cli
