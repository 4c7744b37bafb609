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
// Covariate balance before and after matching.
//
// Matched control means weight each control by 1/k_i inside its set and
// each set equally, so a 1:5 set counts as much as a pair. Standardized
// differences always divide by the pooled SD of the unmatched sample.

#ifndef VRMATCH_DIAGNOSTICS_H_
#define VRMATCH_DIAGNOSTICS_H_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vrmatch/ingest.h"
#include "vrmatch/matcher.h"

namespace vrmatch {

struct GroupMeans {
  double treated = 0.0;
  double control = 0.0;
};

// Set-weighted means for covariate `j` over a match.
GroupMeans WeightedMeans(const MatchResult& result, const CovariateTable& table,
                         std::size_t j);
// All covariates at once.
std::vector<GroupMeans> WeightedMeans(const MatchResult& result,
                                      const CovariateTable& table);

// sqrt((s_t^2 + s_c^2) / 2) on the full table (sample variances).
double PooledSdBefore(const CovariateTable& table, std::size_t j);

struct StdDiff {
  double value = 0.0;
  bool zero_variance = false;
};

// (mean_t - mean_c) / pooled_sd; pooled_sd <= 0 yields 0 with the flag set.
StdDiff StandardizedDifference(double mean_treated, double mean_control,
                               double pooled_sd_before);

// Pair-equivalent count: sum over sets of 2 k_i / (k_i + 1).
double EffectiveSampleSize(const MatchResult& result);
double EffectiveSampleSize(std::span<const int> set_sizes);

// Two-sided Monte-Carlo p-value for the set-weighted mean difference of
// covariate `j`, relabeling which unit of each matched set is treated.
// Uses (count + 1) / (draws + 1).
double PermutationPValue(const MatchResult& result, const CovariateTable& table,
                         std::size_t j, int draws, std::uint64_t seed);

// Same test on the unmatched sample: treatment labels are permuted over all
// subjects, holding the number treated fixed.
double PermutationPValueUnmatched(const CovariateTable& table, std::size_t j,
                                  int draws, std::uint64_t seed);

// Exact two-sided p-value over every relabeling of the matched sets (for
// small matches only; throws beyond 2^22 relabelings).
double ExactPermutationPValue(const MatchResult& result,
                              const CovariateTable& table, std::size_t j);

// ((i - 0.5) / n, p_(i)) for the sorted p-values.
std::vector<std::pair<double, double>> QqUniform(std::vector<double> pvalues);

enum class SampleLabel { kUnmatched, kMatched };

struct BalanceRow {
  std::string covariate;
  double mean_control = 0.0;
  double mean_treated = 0.0;
  double std_diff = 0.0;
  double p_value = 1.0;
  bool zero_variance = false;
};

struct BalanceReport {
  SampleLabel label = SampleLabel::kUnmatched;
  std::vector<BalanceRow> rows;
  double effective_sample_size = 0.0;
  std::string test = "stratified permutation";
  int draws = 0;
  std::uint64_t seed = 0;

  std::size_t count_at_least(double threshold) const;
};

struct DiagnosticsOptions {
  int draws = 1000;
  std::uint64_t seed = 20120101;
};

BalanceReport UnmatchedBalance(const CovariateTable& table,
                               const DiagnosticsOptions& options = {});
BalanceReport MatchedBalance(const MatchResult& result,
                             const CovariateTable& table,
                             const DiagnosticsOptions& options = {});

// Seed of the independent stream for covariate `j`.
std::uint64_t CovariateSeed(std::uint64_t master, std::size_t j);

}  // namespace vrmatch

#endif  // VRMATCH_DIAGNOSTICS_H_
