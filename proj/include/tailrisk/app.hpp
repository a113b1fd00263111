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

// Argument parsing for the tailrisk executable. run() is callable in-process
// so the command surface can be exercised without spawning processes.

#include <algorithm>
#include <exception>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tailrisk/commands.hpp"

namespace tailrisk::cli {

enum ExitCode : int { kOk = 0, kUnexpected = 1, kValidation = 2, kInfeasible = 3 };

namespace detail {

inline std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

struct SynthOverrides {
  std::string config;
  std::string setup_id;
  std::optional<int> n_members, n_nonmembers, k_in, k_out, augmentations;
  std::optional<double> migration, member_shift, ref_noise, tail_prob;
};

inline void add_synth_flags(CLI::App* sub, SynthOverrides& o) {
  sub->add_option("--config", o.config, "key = value config file");
  sub->add_option("--setup-id", o.setup_id);
  sub->add_option("--members", o.n_members, "number of member samples");
  sub->add_option("--nonmembers", o.n_nonmembers, "number of non-member samples");
  sub->add_option("--k-in", o.k_in, "reference models trained with each sample");
  sub->add_option("--k-out", o.k_out, "reference models trained without each sample");
  sub->add_option("--augs", o.augmentations, "augmentations per reference statistic");
  sub->add_option("--migration", o.migration, "fraction of tail members that migrate to the head");
  sub->add_option("--member-shift", o.member_shift, "uniform log-loss shift for IN losses");
  sub->add_option("--ref-noise", o.ref_noise, "reference noise sd (logit units)");
  sub->add_option("--tail-prob", o.tail_prob, "tail component weight");
}

inline SynthConfig load_synth(const SynthOverrides& o, const CommonOptions& common) {
  SynthConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ValidationError("cannot open config '" + o.config + "'");
    cfg = parse_synth_config(in, o.config);
  }
  if (!o.setup_id.empty()) cfg.setup_id = o.setup_id;
  if (o.n_members) cfg.n_members = *o.n_members;
  if (o.n_nonmembers) cfg.n_nonmembers = *o.n_nonmembers;
  if (o.k_in) cfg.k_in = *o.k_in;
  if (o.k_out) cfg.k_out = *o.k_out;
  if (o.augmentations) cfg.augmentations = *o.augmentations;
  if (o.migration) cfg.migration = *o.migration;
  if (o.member_shift) cfg.member_shift = *o.member_shift;
  if (o.ref_noise) cfg.ref_noise = *o.ref_noise;
  if (o.tail_prob) cfg.tail_prob = *o.tail_prob;
  if (common.seed) cfg.seed = *common.seed;
  validate(cfg);
  return cfg;
}

}  // namespace detail

/// Runs the command line given as argv[1..]; returns the process exit code.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"tailrisk: loss-tail membership-inference risk audits"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  std::vector<double> alphas;
  std::uint64_t seed = 0;
  std::string format = "text";
  app.add_option("--alpha", alphas, "target FPR/FNR level (repeatable)")->take_all();
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_flag("--strict", common.strict, "treat alpha * |members| < 1 as an error (exit 3)");
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"text", "json"}));

  std::string log_path, model_path, traj_path, refs_path, loss_refs_path, population_path,
      out_path, scores_path, data_path;
  int bins = 50;
  std::string variance = "per_sample";
  double sigma_floor = 1e-8, migration_alpha = 0.001, gamma = 2.0;

  auto* estimate = app.add_subcommand("estimate", "reference-free risk estimate from a score log");
  estimate->add_option("--log", log_path, "score log")->required();
  estimate->add_option("--model", model_path, "fit model file");
  estimate->add_option("--trajectories", traj_path, "per-epoch trajectory log");
  estimate->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "full audit report including reference attacks");
  report->add_option("--log", log_path, "score log")->required();
  report->add_option("--refs", refs_path, "reference matrix for LiRA")->required();
  report->add_option("--loss-refs", loss_refs_path, "loss-domain reference matrix for migration");
  report->add_option("--model", model_path, "fit model file");
  report->add_option("--trajectories", traj_path, "per-epoch trajectory log");
  report->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
  report->add_option("--variance", variance)->check(CLI::IsMember({"per_sample", "global"}));
  report->add_option("--sigma-floor", sigma_floor);
  report->add_option("--migration-alpha", migration_alpha, "FPR level for migration diagnostics");

  std::string attack_name = "loss";
  auto* attack = app.add_subcommand("attack", "membership scores for one attack");
  attack->add_option("--attack", attack_name)->check(CLI::IsMember({"loss", "lira", "rmia"}));
  attack->add_option("--log", log_path, "score log")->required();
  attack->add_option("--refs", refs_path, "reference matrix");
  attack->add_option("--population", population_path, "population score log (rmia)");
  attack->add_option("--variance", variance)->check(CLI::IsMember({"per_sample", "global"}));
  attack->add_option("--sigma-floor", sigma_floor);
  attack->add_option("--gamma", gamma, "rmia pairwise threshold");
  attack->add_option("--out", out_path, "scores file (default stdout)");

  auto* metrics = app.add_subcommand("metrics", "threshold metrics and baselines");
  metrics->add_option("--log", log_path, "score log")->required();
  metrics->add_option("--scores", scores_path, "membership scores to evaluate");
  metrics->add_option("--trajectories", traj_path, "per-epoch trajectory log");

  FitArgs fit_args;
  std::vector<std::string> families;
  auto* fit = app.add_subcommand("fit", "fit the risk estimator on a risk dataset");
  fit->add_option("--data", data_path, "risk dataset")->required();
  fit->add_option("--family", families, "function family (repeatable; default all)")->take_all();
  fit->add_option("--predictor", fit_args.predictor_kind, "predictor kind");
  fit->add_option("--iters", fit_args.iters, "bootstrap resamples (0 disables)")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--level", fit_args.level, "central interval mass");
  fit->add_option("--threads", fit_args.threads, "bootstrap worker threads")
      ->check(CLI::PositiveNumber);
  fit->add_option("--out", out_path, "fit model file to write");

  PredictArgs predict_args;
  std::string predict_family;
  auto* predict = app.add_subcommand("predict", "map a predictor value through a fitted model");
  predict->add_option("--model", model_path, "fit model file")->required();
  predict->add_option("--value", predict_args.value, "predictor value in [0,1]")->required();
  predict->add_option("--family", predict_family, "restrict to one family");
  predict->add_option("--predictor", predict_args.predictor_kind, "predictor kind");

  detail::SynthOverrides synth_over;
  auto* synth = app.add_subcommand("synth", "generate one synthetic setup");
  detail::add_synth_flags(synth, synth_over);
  synth->add_option("--out-dir", out_path, "output directory")->required();

  GridArgs grid_args;
  std::vector<std::string> grid_configs;
  auto* grid = app.add_subcommand("grid", "simulate a grid of setups into a risk dataset");
  grid->add_option("--config", grid_configs, "setup config files (default: built-in schedule)")
      ->take_all();
  grid->add_option("--setups", grid_args.setups, "setups in the built-in schedule");
  grid->add_option("--max-migration", grid_args.max_migration);
  grid->add_option("--members", grid_args.n_members);
  grid->add_option("--nonmembers", grid_args.n_nonmembers);
  grid->add_option("--k", grid_args.ks, "reference-model subsample sizes (repeatable)")->take_all();
  grid->add_option("--kind", grid_args.predictor_kinds, "predictor kinds (repeatable)")->take_all();
  grid->add_option("--variance", variance)->check(CLI::IsMember({"per_sample", "global"}));
  grid->add_option("--out", out_path, "risk dataset to write")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (!alphas.empty()) {
      common.alphas = alphas;
      common.alphas_explicit = true;
    }
    if (*seed_opt) common.seed = seed;
    common.format = format == "json" ? OutputFormat::json : OutputFormat::text;
    LiraOptions lira;
    lira.variance_mode = parse_variance_mode(variance);
    lira.sigma_floor = sigma_floor;

    if (*estimate) {
      cmd_estimate({log_path, detail::opt_path(model_path), detail::opt_path(traj_path), bins},
                   common, out);
    } else if (*report) {
      ReportArgs a;
      a.base = {log_path, detail::opt_path(model_path), detail::opt_path(traj_path), bins};
      a.refs = refs_path;
      a.loss_refs = detail::opt_path(loss_refs_path);
      a.lira = lira;
      a.migration_alpha = migration_alpha;
      cmd_report(a, common, out);
    } else if (*attack) {
      AttackArgs a;
      a.attack = attack_name == "loss"   ? AttackKind::loss
                 : attack_name == "lira" ? AttackKind::lira
                                         : AttackKind::rmia;
      a.log = log_path;
      a.refs = detail::opt_path(refs_path);
      a.population = detail::opt_path(population_path);
      a.lira = lira;
      a.rmia.gamma = gamma;
      a.out = detail::opt_path(out_path);
      cmd_attack(a, out);
    } else if (*metrics) {
      cmd_metrics({log_path, detail::opt_path(scores_path), detail::opt_path(traj_path)}, common,
                  out);
    } else if (*fit) {
      fit_args.data = data_path;
      if (!families.empty()) {
        fit_args.families.clear();
        for (const auto& f : families) fit_args.families.push_back(parse_family(f));
      }
      fit_args.out = detail::opt_path(out_path);
      cmd_fit(fit_args, common, out);
    } else if (*predict) {
      predict_args.model = model_path;
      if (!predict_family.empty()) predict_args.family = parse_family(predict_family);
      cmd_predict(predict_args, common, out);
    } else if (*synth) {
      cmd_synth({detail::load_synth(synth_over, common), out_path}, out);
    } else if (*grid) {
      for (const auto& path : grid_configs) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config '" + path + "'");
        grid_args.configs.push_back(parse_synth_config(in, path));
      }
      grid_args.lira = lira;
      grid_args.out = out_path;
      cmd_grid(grid_args, common, out);
    }
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kOk;
}

}  // namespace tailrisk::cli
