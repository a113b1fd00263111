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

#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tailrisk/score_store.hpp"

namespace fixtures {

// Log with per-partition losses; ids m<i> and n<i>.
inline tailrisk::ScoreLog make_log(const std::vector<double>& member_loss,
                                   const std::vector<double>& nonmember_loss,
                                   std::string setup_id = "t") {
  tailrisk::ScoreLog log;
  log.setup_id = std::move(setup_id);
  for (std::size_t i = 0; i < member_loss.size(); ++i) {
    tailrisk::SampleRecord r;
    r.sample_id = "m" + std::to_string(i);
    r.is_member = true;
    r.loss = member_loss[i];
    log.records.push_back(r);
  }
  for (std::size_t i = 0; i < nonmember_loss.size(); ++i) {
    tailrisk::SampleRecord r;
    r.sample_id = "n" + std::to_string(i);
    r.is_member = false;
    r.loss = nonmember_loss[i];
    log.records.push_back(r);
  }
  return log;
}

// Random losses; with `ties`, values are drawn from a small lattice.
inline std::vector<double> random_losses(std::mt19937_64& rng, std::size_t n, bool ties,
                                         double scale = 1.0) {
  std::vector<double> v(n);
  if (ties) {
    std::uniform_int_distribution<int> d(0, 12);
    for (auto& x : v) x = 0.25 * d(rng) * scale;
  } else {
    std::lognormal_distribution<double> d(-1.0, 1.5);
    for (auto& x : v) x = d(rng) * scale;
  }
  return v;
}

inline tailrisk::ScoreLog parse_log(const std::string& text, std::string id = "t") {
  std::istringstream in(text);
  return tailrisk::parse_score_log(in, "<test>", id);
}

inline tailrisk::ReferenceMatrix parse_refs(const std::string& text) {
  std::istringstream in(text);
  return tailrisk::parse_reference_matrix(in, "<test>");
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("tailrisk_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace fixtures
