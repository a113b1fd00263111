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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tailrisk/attacks.hpp"
#include "tailrisk/metrics.hpp"
#include "tailrisk/synthgen.hpp"

using namespace tailrisk;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

// One sample with IN stats `in` and OUT stats `out`, one augmentation.
ReferenceMatrix one_sample_refs(const std::vector<double>& in, const std::vector<double>& out,
                                StatKind kind = StatKind::logit, std::string id = "x") {
  ReferenceMatrixBuilder b(kind);
  int m = 0;
  for (double v : in) b.add(id, "m" + std::to_string(m++), true, 0, v);
  for (double v : out) b.add(id, "m" + std::to_string(m++), false, 0, v);
  return b.build();
}

ScoreLog single(std::string id, double loss, std::optional<double> conf = std::nullopt,
                bool member = true) {
  ScoreLog log;
  SampleRecord r;
  r.sample_id = std::move(id);
  r.is_member = member;
  r.loss = loss;
  r.confidence = conf;
  log.records.push_back(r);
  return log;
}

}  // namespace

TEST_CASE("logit transform values", "[attacks]") {
  CHECK(logit_transform(0.5) == 0.0);
  CHECK(logit_transform(0.9) == Approx(std::log(9.0)).epsilon(1e-14));
  CHECK(logit_transform(1.0, 1e-6) == Approx(std::log((1 - 1e-6) / 1e-6)).epsilon(1e-12));
  CHECK(logit_transform(1.0) == Approx(13.81551).margin(1e-5));
  CHECK(logit_transform(0.0) == Approx(-13.81551).margin(1e-5));
  CHECK_THROWS_AS(logit_transform(1.01), ValidationError);
  CHECK_THROWS_AS(logit_transform(-0.1), ValidationError);
  CHECK_THROWS_AS(logit_transform(0.5, 0.5), ValidationError);
  double prev = -1e300;
  for (int i = 0; i <= 1000; ++i) {
    const double v = logit_transform(i / 1000.0);
    CHECK(std::isfinite(v));
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("loss attack negates losses", "[attacks]") {
  const auto log = fixtures::parse_log(
      "sample_id,is_member,loss,confidence,correct\na,1,0,,\nb,0,2.5,,\n");
  const auto s = loss_attack_scores(log);
  REQUIRE(s.size() == 2);
  CHECK(s.scores[0] == 0.0);
  CHECK(s.scores[1] == -2.5);
  CHECK(s.attack == AttackKind::loss);
  CHECK_THROWS_AS(loss_attack_scores(ScoreLog{}), ValidationError);
}

TEST_CASE("loss attack: descending score order is ascending loss order", "[attacks]") {
  std::mt19937_64 rng(1);
  const auto log = fixtures::make_log(fixtures::random_losses(rng, 200, false),
                                      fixtures::random_losses(rng, 200, false));
  const auto s = loss_attack_scores(log);
  std::vector<std::size_t> by_score(log.size()), by_loss(log.size());
  std::iota(by_score.begin(), by_score.end(), 0);
  std::iota(by_loss.begin(), by_loss.end(), 0);
  std::sort(by_score.begin(), by_score.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
  std::sort(by_loss.begin(), by_loss.end(),
            [&](auto a, auto b) { return log.records[a].loss < log.records[b].loss; });
  CHECK(by_score == by_loss);
}

TEST_CASE("loss attack AUC is one minus raw-loss AUC without ties", "[attacks]") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto log = fixtures::make_log(fixtures::random_losses(rng, 150, false),
                                        fixtures::random_losses(rng, 90, false, 1.3));
    MembershipScores raw;
    for (const auto& r : log.records) {
      raw.sample_ids.push_back(r.sample_id);
      raw.scores.push_back(r.loss);
    }
    CHECK(loss_auc(log) == Approx(1.0 - auc(roc_points(raw, log))).margin(1e-12));
  }
}

TEST_CASE("lira: closed-form examples", "[attacks]") {
  CHECK(lira_score(0.7, {0.3, 1.2, 0.3, 1.2}) == 0.0);
  CHECK(lira_score(1.0, {1.0, 1.0, -1.0, 1.0}) == Approx(2.0).epsilon(1e-15));

  // IN {0, 2}: mean 1, unbiased var 2.  OUT all equal: floored.
  const auto refs = one_sample_refs({0.0, 2.0}, {-1.0, -1.0, -1.0});
  auto log = single("x", 0.1, 0.9);
  LiraOptions opt;
  opt.sigma_floor = 1e-3;
  const auto s = lira_online_scores(log, refs, opt);
  const double x = std::log(9.0);
  const double si = std::sqrt(2.0), so = 1e-3;
  const double expected =
      std::log(so / si) + 0.5 * (std::pow((x + 1) / so, 2) - std::pow((x - 1) / si, 2));
  REQUIRE(std::isfinite(s.scores[0]));
  CHECK(s.scores[0] == Approx(expected).epsilon(1e-12));
}

TEST_CASE("lira: observation priority", "[attacks]") {
  SampleRecord r;
  r.loss = 0.5;
  CHECK(lira_observation(r, StatKind::logit, 1e-6) == -0.5);
  r.confidence = 0.8;
  CHECK(lira_observation(r, StatKind::logit, 1e-6) == Approx(std::log(4.0)));
  r.aug_confidences = {0.5, 0.9};
  CHECK(lira_observation(r, StatKind::logit, 1e-6) == Approx(0.5 * std::log(9.0)));
  CHECK(lira_observation(r, StatKind::loss, 1e-6) == 0.5);
}

TEST_CASE("lira: augmentations are averaged per model before fitting", "[attacks]") {
  ReferenceMatrixBuilder b(StatKind::logit);
  // Per-model means IN {1, 3}, OUT {-1, -2}.
  b.add("x", "a", true, 0, 0.0);
  b.add("x", "a", true, 1, 2.0);
  b.add("x", "b", true, 0, 3.0);
  b.add("x", "b", true, 1, 3.0);
  b.add("x", "c", false, 0, -1.0);
  b.add("x", "c", false, 1, -1.0);
  b.add("x", "d", false, 0, -3.0);
  b.add("x", "d", false, 1, -1.0);
  const auto refs = b.build();
  const auto log = single("x", 0.2, 0.75);
  const auto s = lira_online_scores(log, refs);
  CHECK(s.scores[0] == Approx(oracle::lira(std::log(3.0), {1.0, 3.0}, {-1.0, -2.0})).epsilon(1e-12));
}

TEST_CASE("lira: insufficient reference models is a hard error naming samples", "[attacks]") {
  ReferenceMatrixBuilder b(StatKind::logit);
  b.add("ok", "a", true, 0, 1);
  b.add("ok", "b", true, 0, 2);
  b.add("ok", "c", false, 0, 1);
  b.add("ok", "d", false, 0, 3);
  b.add("short", "a", true, 0, 1);
  b.add("short", "b", false, 0, 2);
  b.add("short", "c", false, 0, 2);
  const auto refs = b.build();
  auto log = single("ok", 0.1);
  log.records.push_back(single("short", 0.1, std::nullopt, false).records[0]);
  log.records.push_back(single("absent", 0.1, std::nullopt, false).records[0]);
  try {
    lira_online_scores(log, refs);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK_THAT(e.what(), ContainsSubstring("short"));
    CHECK_THAT(e.what(), ContainsSubstring("absent"));
    CHECK_THAT(e.what(), !ContainsSubstring(" ok"));
  }
}

TEST_CASE("lira: translation invariance and swap antisymmetry", "[attacks]") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const GaussianPair g{n(rng), 0.2 + std::abs(n(rng)), n(rng), 0.2 + std::abs(n(rng))};
    const double x = n(rng), c = 3.0 * n(rng);
    const double s = lira_score(x, g);
    CHECK(lira_score(x + c, {g.mu_in + c, g.sigma_in, g.mu_out + c, g.sigma_out}) ==
          Approx(s).margin(1e-12 * std::max(1.0, std::abs(s)) + 1e-12));
    CHECK(lira_score(x, {g.mu_out, g.sigma_out, g.mu_in, g.sigma_in}) ==
          Approx(-s).margin(1e-12 * std::max(1.0, std::abs(s))));
  }
}

TEST_CASE("lira: global variance pools within-sample deviations", "[attacks]") {
  ReferenceMatrixBuilder b(StatKind::loss);
  // Sample p: IN {1,3} ss=2, OUT {0,4} ss=8. Sample q: IN {2,2,5} ss=6, OUT {1,2} ss=0.5.
  b.add("p", "a", true, 0, 1);
  b.add("p", "b", true, 0, 3);
  b.add("p", "c", false, 0, 0);
  b.add("p", "d", false, 0, 4);
  b.add("q", "a", true, 0, 2);
  b.add("q", "b", true, 0, 2);
  b.add("q", "e", true, 0, 5);
  b.add("q", "c", false, 0, 1);
  b.add("q", "d", false, 0, 2);
  const auto refs = b.build();
  auto log = single("p", 1.5);
  log.records.push_back(single("q", 0.5, std::nullopt, false).records[0]);
  LiraOptions opt;
  opt.variance_mode = VarianceMode::global;
  const auto s = lira_online_scores(log, refs, opt);
  const double si = std::sqrt(8.0 / 3.0), so = std::sqrt(8.5 / 2.0);
  CHECK(s.scores[0] == Approx(lira_score(1.5, {2.0, si, 2.0, so})).epsilon(1e-13));
  CHECK(s.scores[1] == Approx(lira_score(0.5, {3.0, si, 1.5, so})).epsilon(1e-13));
  CHECK(s.params.variance_mode == VarianceMode::global);
}

TEST_CASE("lira: row permutation changes no score", "[attacks]") {
  SynthConfig cfg;
  cfg.n_members = 200;
  cfg.n_nonmembers = 200;
  cfg.k_in = cfg.k_out = 4;
  cfg.migration = 0.5;
  cfg.seed = 21;
  const auto s = synth_setup(cfg);
  const auto a = lira_online_scores(s.log, s.refs);
  auto shuffled = s.log;
  std::mt19937_64 rng(2);
  std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
  const auto b = lira_online_scores(shuffled, s.refs);
  std::map<std::string, double> by_id;
  for (std::size_t i = 0; i < a.size(); ++i) by_id[a.sample_ids[i]] = a.scores[i];
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(by_id.at(b.sample_ids[i]) == b.scores[i]);
}

TEST_CASE("rmia: hand-computed 1 target, 3 population points, 2 models", "[attacks]") {
  // Loss-domain references: P = exp(-loss).
  ReferenceMatrixBuilder b(StatKind::loss);
  auto put = [&](std::string id, double l0, double l1) {
    b.add(id, "r0", true, 0, l0);
    b.add(id, "r1", false, 0, l1);
  };
  put("x", std::log(2.0), std::log(2.0));  // Pbar(x) = 0.5
  put("z0", std::log(2.0), std::log(2.0));
  put("z1", std::log(4.0), std::log(4.0));  // Pbar = 0.25
  put("z2", 0.0, 0.0);                      // Pbar = 1
  const auto refs = b.build();
  auto log = single("x", 0.0, 0.9);  // ratio 1.8
  ScoreLog pop;
  for (auto [id, c] : std::vector<std::pair<std::string, double>>{
           {"z0", 0.4}, {"z1", 0.5}, {"z2", 0.5}}) {  // ratios 0.8, 2.0, 0.5
    pop.records.push_back(single(id, 1.0, c, false).records[0]);
  }
  // 1.8/0.8 = 2.25 >= 2, 1.8/2 = 0.9 < 2, 1.8/0.5 = 3.6 >= 2.
  const auto s = rmia_scores(log, refs, pop);
  CHECK(s.scores[0] == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.params.gamma == 2.0);
}

TEST_CASE("rmia: bounds, ties and monotonicity in gamma", "[attacks]") {
  ReferenceMatrixBuilder b(StatKind::logit);
  for (std::string id : {"x", "z0", "z1"}) {
    b.add(id, "r0", true, 0, 0.0);
    b.add(id, "r1", false, 0, 0.0);
  }
  const auto refs = b.build();
  auto log = single("x", 0.0, 0.5);
  ScoreLog pop;
  pop.records.push_back(single("z0", 0.0, 0.5, false).records[0]);
  pop.records.push_back(single("z1", 0.0, 0.1, false).records[0]);
  RmiaOptions opt;
  opt.gamma = 1.0;
  CHECK(rmia_scores(log, refs, pop, opt).scores[0] == 1.0);  // tie with z0 counts
  opt.gamma = 5.0;
  CHECK(rmia_scores(log, refs, pop, opt).scores[0] == 0.5);
  opt.gamma = 5.0 + 1e-9;
  CHECK(rmia_scores(log, refs, pop, opt).scores[0] == 0.0);

  double prev = 2.0;
  for (double g = 0.1; g < 10; g *= 1.3) {
    opt.gamma = g;
    const double v = rmia_scores(log, refs, pop, opt).scores[0];
    CHECK(v <= prev);
    CHECK(v >= 0.0);
    prev = v;
  }
}

TEST_CASE("rmia: errors", "[attacks]") {
  const auto refs = one_sample_refs({0, 0}, {0, 0});
  auto log = single("x", 0.1, 0.9);
  CHECK_THROWS_WITH(rmia_scores(log, refs, ScoreLog{}), ContainsSubstring("empty population"));
  CHECK_THROWS_WITH(rmia_scores(log, refs, log), ContainsSubstring("scored member"));
  RmiaOptions opt;
  opt.gamma = 0;
  auto pop = single("x", 0.1, 0.9, false);
  CHECK_THROWS_AS(rmia_scores(single("y", 0.1), refs, pop, opt), ValidationError);
  // Zero probabilities are clamped, never an error.
  const auto zero = one_sample_refs({-1000, -1000}, {-1000, -1000});
  const auto scored = rmia_scores(single("x", 50, 0.0, false), zero, single("x", 50, 0.0, false));
  CHECK(scored.scores[0] == 0.0);
}

TEST_CASE("rmia: matches pairwise enumeration on small random instances", "[attacks]") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 300; ++t) {
    const int k = 1 + static_cast<int>(u(rng) * 4), npop = 1 + static_cast<int>(u(rng) * 5);
    ReferenceMatrixBuilder b(StatKind::logit);
    std::vector<std::vector<double>> probs;
    std::vector<std::string> ids = {"x"};
    for (int z = 0; z < npop; ++z) ids.push_back("z" + std::to_string(z));
    for (const auto& id : ids) {
      std::vector<double> p;
      for (int m = 0; m < k; ++m) {
        const double v = n(rng);
        b.add(id, "m" + std::to_string(m), m % 2 == 0, 0, v);
        p.push_back(oracle::sigmoid(v));
      }
      probs.push_back(p);
    }
    const auto refs = b.build();
    std::vector<double> conf;
    for (std::size_t i = 0; i < ids.size(); ++i) conf.push_back(u(rng));
    auto log = single("x", 0.1, conf[0]);
    ScoreLog pop;
    for (int z = 0; z < npop; ++z) pop.records.push_back(single(ids[z + 1], 0.1, conf[z + 1], false).records[0]);
    RmiaOptions opt;
    opt.gamma = 0.5 + 2.0 * u(rng);
    const auto s = rmia_scores(log, refs, pop, opt);
    std::vector<double> tz(conf.begin() + 1, conf.end());
    std::vector<std::vector<double>> rz(probs.begin() + 1, probs.end());
    CHECK(s.scores[0] == oracle::rmia(conf[0], probs[0], tz, rz, opt.gamma, opt.eps));
  }
}

TEST_CASE("scores file round trip", "[attacks]") {
  MembershipScores s;
  s.sample_ids = {"a", "b"};
  s.scores = {0.125, -3.5e-17};
  std::ostringstream os;
  write_scores(os, s);
  CHECK(os.str().rfind("sample_id,score\n", 0) == 0);
  std::istringstream in(os.str());
  const auto back = parse_scores(in, "<s>");
  CHECK(back.sample_ids == s.sample_ids);
  CHECK(back.scores == s.scores);
}
