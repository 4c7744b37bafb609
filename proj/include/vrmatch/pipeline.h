/*
 * Copyright 2026 The vrmatch Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// End-to-end runs: ingest, score, stratify, match, report.

#ifndef VRMATCH_PIPELINE_H_
#define VRMATCH_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vrmatch/diagnostics.h"
#include "vrmatch/matcher.h"

namespace vrmatch {

struct RunConfig {
  std::filesystem::path input;
  char delimiter = ',';
  std::string id_column;
  std::string treatment_column = "treatment";
  std::vector<std::string> covariates;
  std::vector<std::string> nominal;
  std::vector<std::string> exclude;

  double ridge = 0.0;
  std::string score_column;

  int K = 5;
  bool pair_match = false;
  bool use_caliper = true;
  double caliper = 0.5;
  std::optional<double> penalty_scale;
  std::vector<std::string> fine_balance;
  CommonSupportPolicy policy = CommonSupportPolicy::kSubsetMatch;
  std::int64_t cost_scale = 10'000;
  std::filesystem::path distance_file;

  std::filesystem::path out_dir;
  std::uint64_t seed = 20120101;
  int draws = 1000;
  bool dump_networks = false;

  // Throws ValidationError.
  void validate() const;
};

// Reads a JSON config. Relative paths resolve against the file's directory.
RunConfig LoadRunConfig(const std::filesystem::path& path);
// Applies JSON keys on top of `base` (same keys as LoadRunConfig).
void ApplyConfigJson(const std::string& json_text,
                     const std::filesystem::path& base_dir, RunConfig& config);

struct RunOutcome {
  MatchResult match;
  BalanceReport unmatched;
  BalanceReport matched;
  // Artifact file name -> content, already written under out_dir.
  std::map<std::string, std::string> artifacts;
};

// Runs the whole pipeline and writes the artifacts. Nothing is left in
// out_dir when a stage fails.
RunOutcome RunPipeline(const RunConfig& config);

// Same as RunPipeline without touching the file system.
RunOutcome ComputeRun(const RunConfig& config);

struct ComparisonRow {
  std::string covariate;
  double std_diff_a = 0.0;
  double std_diff_b = 0.0;
  double delta() const { return std_diff_b - std_diff_a; }
};

struct RunComparison {
  std::vector<ComparisonRow> rows;
  std::size_t a_at_least_010 = 0;
  std::size_t a_at_least_020 = 0;
  std::size_t b_at_least_010 = 0;
  std::size_t b_at_least_020 = 0;
  double ess_a = 0.0;
  double ess_b = 0.0;
  std::size_t discarded_treated_a = 0;
  std::size_t discarded_treated_b = 0;
  std::size_t discarded_controls_a = 0;
  std::size_t discarded_controls_b = 0;
  std::vector<std::string> warnings;

  std::string Render() const;
};

// Compares the matched balance recorded in two run manifests (JSON text).
RunComparison CompareRuns(const std::string& manifest_a,
                          const std::string& manifest_b);

}  // namespace vrmatch

#endif  // VRMATCH_PIPELINE_H_
