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

// Audit report and fit-model file: JSON documents with a schema_version plus
// a plain-text rendering. Output is a pure function of the report contents.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailrisk/attacks.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/estimator.hpp"
#include "tailrisk/metrics.hpp"

namespace tailrisk {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kFitFileSchemaVersion = 1;

/// A fitted estimator together with the data slice it was fitted on.
struct FitRecord {
  double alpha = 0.001;
  std::string predictor_kind = std::string(predictor_kind::loss_tnr);
  std::optional<int> k;
  FitModel model;
};

// JSON has no infinity; thresholds above every observation are written as null.
inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const Interval& i) { return Json::array({i.lower, i.upper}); }

inline Json to_json(const GoodnessOfFit& g) {
  Json j;
  j["r2"] = g.r2 ? Json(*g.r2) : Json(nullptr);
  j["rmse"] = g.rmse;
  j["mae"] = g.mae;
  return j;
}

inline Json to_json(const FitRecord& r, bool with_samples = true) {
  Json j;
  j["alpha"] = r.alpha;
  j["predictor_kind"] = r.predictor_kind;
  j["k"] = r.k ? Json(*r.k) : Json(nullptr);
  j["family"] = std::string(to_string(r.model.family));
  j["params"] = r.model.params;
  j["gof"] = to_json(r.model.gof);
  j["n_points"] = r.model.n_points;
  j["converged"] = r.model.converged;
  if (r.model.bootstrap) {
    const auto& b = *r.model.bootstrap;
    Json bj;
    bj["iters"] = b.iters;
    bj["level"] = b.level;
    bj["seed"] = b.seed;
    bj["skipped"] = b.skipped;
    bj["param_ci"] = Json::array();
    for (const auto& ci : b.param_ci) bj["param_ci"].push_back(to_json(ci));
    if (with_samples) bj["params"] = b.params;
    j["bootstrap"] = std::move(bj);
  } else {
    j["bootstrap"] = nullptr;
  }
  return j;
}

inline FitRecord fit_record_from_json(const Json& j) {
  try {
    FitRecord r;
    r.alpha = j.at("alpha").get<double>();
    r.predictor_kind = j.at("predictor_kind").get<std::string>();
    if (!j.at("k").is_null()) r.k = j.at("k").get<int>();
    r.model.family = parse_family(j.at("family").get<std::string>());
    r.model.params = j.at("params").get<std::vector<double>>();
    if (r.model.params.size() != param_count(r.model.family))
      throw ValidationError("fit model: wrong parameter count for family");
    const auto& g = j.at("gof");
    if (!g.at("r2").is_null()) r.model.gof.r2 = g.at("r2").get<double>();
    r.model.gof.rmse = g.at("rmse").get<double>();
    r.model.gof.mae = g.at("mae").get<double>();
    r.model.n_points = j.at("n_points").get<std::size_t>();
    r.model.converged = j.value("converged", true);
    if (j.contains("bootstrap") && !j.at("bootstrap").is_null()) {
      const auto& bj = j.at("bootstrap");
      BootstrapResult b;
      b.iters = bj.at("iters").get<int>();
      b.level = bj.at("level").get<double>();
      b.seed = bj.at("seed").get<std::uint64_t>();
      b.skipped = bj.at("skipped").get<int>();
      for (const auto& ci : bj.at("param_ci"))
        b.param_ci.push_back({ci.at(0).get<double>(), ci.at(1).get<double>()});
      if (bj.contains("params")) b.params = bj.at("params").get<std::vector<std::vector<double>>>();
      r.model.bootstrap = std::move(b);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fit model: malformed entry: ") + e.what());
  }
}

inline std::string fit_file_json(const std::vector<FitRecord>& fits) {
  Json j;
  j["schema_version"] = kFitFileSchemaVersion;
  j["models"] = Json::array();
  for (const auto& f : fits) j["models"].push_back(to_json(f));
  return j.dump(2) + "\n";
}

inline std::vector<FitRecord> parse_fit_file(std::istream& in, std::string_view source) {
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(source) + ": not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("schema_version", 0) != kFitFileSchemaVersion)
    throw ValidationError(std::string(source) + ": unsupported fit model schema_version");
  std::vector<FitRecord> out;
  for (const auto& m : j.at("models")) out.push_back(fit_record_from_json(m));
  return out;
}

inline std::vector<FitRecord> load_fit_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open fit model file '" + path.string() + "'");
  return parse_fit_file(in, path.string());
}

inline Json to_json(const HistogramSpec& h) {
  Json j;
  j["edges"] = h.edges;
  j["counts"] = h.counts;
  j["degenerate"] = h.degenerate;
  return j;
}

inline Json to_json(const QuantileSummary& q) {
  return Json{{"q25", q.q25}, {"q50", q.q50}, {"q75", q.q75}, {"q90", q.q90}};
}

inline Json to_json(const MigrationReport& m) {
  Json j;
  j["alpha"] = m.alpha;
  j["tau"] = number_or_null(m.tau);
  j["achieved_fpr"] = m.achieved_fpr;
  j["tpr"] = m.tpr;
  j["n_flagged"] = m.flagged.size();
  j["flagged_l_out"] = m.flagged_l_out ? to_json(*m.flagged_l_out) : Json(nullptr);
  j["flagged_target_loss"] =
      m.flagged_target_loss ? to_json(*m.flagged_target_loss) : Json(nullptr);
  j["member_loss"] = to_json(m.member_loss);
  j["nonmember_loss"] = to_json(m.nonmember_loss);
  j["tail_fraction"] = m.tail_fraction;
  j["flagged"] = Json::array();
  for (const auto& f : m.flagged)
    j["flagged"].push_back(Json{{"sample_id", f.sample_id},
                                {"lira_score", f.lira_score},
                                {"target_loss", f.target_loss},
                                {"l_out", f.l_out}});
  return j;
}

// ---------------------------------------------------------------------------

struct PredictionEntry {
  std::string family;
  std::string predictor_kind;
  std::optional<int> k;  ///< reference-model count of the training grid slice
  double predictor = 0.0;
  RiskPrediction prediction;
};

struct AlphaEntry {
  double alpha = 0.0;
  TnrAtFnr loss_tnr;
  std::vector<PredictionEntry> predicted;
  std::optional<TprAtFpr> measured_lira;
};

struct AuditReport {
  std::string setup_id;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  double loss_auc = 0.0;
  std::vector<AlphaEntry> per_alpha;
  std::optional<double> train_test_gap;
  std::optional<double> lt_iqr_auc;
  std::optional<HistogramSpec> member_histogram;
  std::optional<HistogramSpec> nonmember_histogram;
  std::optional<MigrationReport> migration;
  std::optional<AttackParams> lira_params;
  std::vector<FitRecord> fits;
  std::vector<std::string> notices;
};

inline Json to_json(const AuditReport& r) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["setup_id"] = r.setup_id;
  j["n_members"] = r.n_members;
  j["n_nonmembers"] = r.n_nonmembers;
  j["loss_auc"] = r.loss_auc;
  j["per_alpha"] = Json::array();
  for (const auto& a : r.per_alpha) {
    Json e;
    e["alpha"] = a.alpha;
    e["loss_tnr"] = a.loss_tnr.tnr;
    e["tau"] = number_or_null(a.loss_tnr.tau);
    e["achieved_fnr"] = a.loss_tnr.achieved_fnr;
    e["below_resolution"] = a.loss_tnr.below_resolution;
    e["predicted_tpr"] = Json::array();
    for (const auto& p : a.predicted) {
      Json pj;
      pj["family"] = p.family;
      pj["predictor_kind"] = p.predictor_kind;
      pj["k"] = p.k ? Json(*p.k) : Json(nullptr);
      pj["predictor"] = p.predictor;
      pj["tpr_hat"] = p.prediction.tpr_hat;
      pj["ci"] = p.prediction.ci ? to_json(*p.prediction.ci) : Json(nullptr);
      e["predicted_tpr"].push_back(std::move(pj));
    }
    if (a.measured_lira) {
      e["measured_tpr"] = a.measured_lira->tpr;
      e["measured_tau"] = number_or_null(a.measured_lira->tau);
      e["measured_achieved_fpr"] = a.measured_lira->achieved_fpr;
    }
    j["per_alpha"].push_back(std::move(e));
  }
  Json base = Json::object();
  if (r.train_test_gap) base["train_test_gap"] = *r.train_test_gap;
  if (r.lt_iqr_auc) base["lt_iqr_auc"] = *r.lt_iqr_auc;
  j["baselines"] = std::move(base);
  Json hist = Json::object();
  if (r.member_histogram) hist["member"] = to_json(*r.member_histogram);
  if (r.nonmember_histogram) hist["nonmember"] = to_json(*r.nonmember_histogram);
  j["histograms"] = std::move(hist);
  j["migration"] = r.migration ? to_json(*r.migration) : Json(nullptr);
  if (r.lira_params) {
    Json lp;
    lp["k"] = r.lira_params->k ? Json(*r.lira_params->k) : Json(nullptr);
    lp["variance_mode"] = r.lira_params->variance_mode
                              ? Json(std::string(to_string(*r.lira_params->variance_mode)))
                              : Json(nullptr);
    lp["sigma_floor"] = r.lira_params->sigma_floor.value_or(0.0);
    lp["eps"] = r.lira_params->eps.value_or(0.0);
    j["lira_params"] = std::move(lp);
  }
  j["fits"] = Json::array();
  for (const auto& f : r.fits) j["fits"].push_back(to_json(f, false));
  j["notices"] = r.notices;
  // Which operation produced each number.
  j["trace"] = Json{{"loss_auc", "auc(roc_points(loss_attack_scores))"},
                    {"per_alpha.loss_tnr", "tnr_at_fnr"},
                    {"per_alpha.predicted_tpr", "predict_risk"},
                    {"per_alpha.measured_tpr", "tpr_at_fpr(roc_points(lira_online_scores))"},
                    {"baselines.train_test_gap", "train_test_gap"},
                    {"baselines.lt_iqr_auc", "auc(roc_points(lt_iqr_scores))"},
                    {"histograms", "loglog_histogram"},
                    {"migration", "migration_report"}};
  return j;
}

inline std::string fmt_num(double v, int precision = 6) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(precision) << v;
  return os.str();
}

inline std::string to_text(const AuditReport& r) {
  std::ostringstream os;
  os << "audit report (schema " << kReportSchemaVersion << ")\n";
  os << "setup: " << r.setup_id << "  members: " << r.n_members
     << "  non-members: " << r.n_nonmembers << '\n';
  os << "loss AUC: " << fmt_num(r.loss_auc) << '\n';
  if (r.train_test_gap) os << "train-test gap: " << fmt_num(*r.train_test_gap) << '\n';
  if (r.lt_iqr_auc) os << "LT-IQR AUC: " << fmt_num(*r.lt_iqr_auc) << '\n';
  for (const auto& a : r.per_alpha) {
    os << "\nalpha = " << fmt_num(a.alpha) << '\n';
    os << "  LOSS TNR@FNR: " << fmt_num(a.loss_tnr.tnr) << "  (tau " << fmt_num(a.loss_tnr.tau)
       << ", achieved FNR " << fmt_num(a.loss_tnr.achieved_fnr) << ")"
       << (a.loss_tnr.below_resolution ? "  [below resolution]" : "") << '\n';
    for (const auto& p : a.predicted) {
      os << "  predicted TPR [" << p.family << " on " << p.predictor_kind;
      if (p.k) os << ", k=" << *p.k;
      os << "]: " << fmt_num(p.prediction.tpr_hat);
      if (p.prediction.ci)
        os << "  CI [" << fmt_num(p.prediction.ci->lower) << ", " << fmt_num(p.prediction.ci->upper)
           << "]";
      os << '\n';
    }
    if (a.measured_lira)
      os << "  measured LiRA TPR@FPR: " << fmt_num(a.measured_lira->tpr) << "  (achieved FPR "
         << fmt_num(a.measured_lira->achieved_fpr) << ")\n";
  }
  if (r.migration) {
    const auto& m = *r.migration;
    os << "\nmigration (LiRA members at FPR " << fmt_num(m.alpha) << "): " << m.flagged.size()
       << " flagged\n";
    if (m.flagged_l_out)
      os << "  median OUT-model loss of flagged: " << fmt_num(m.flagged_l_out->q50)
         << "  median target loss of flagged: " << fmt_num(m.flagged_target_loss->q50) << '\n';
    os << "  member loss median: " << fmt_num(m.member_loss.q50)
       << "  non-member loss median/q90: " << fmt_num(m.nonmember_loss.q50) << " / "
       << fmt_num(m.nonmember_loss.q90) << '\n';
    os << "  flagged with OUT loss in non-member tail: " << fmt_num(m.tail_fraction) << '\n';
  }
  for (const auto& n : r.notices) os << "note: " << n << '\n';
  return os.str();
}

}  // namespace tailrisk
