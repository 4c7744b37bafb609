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
// Variable-ratio matching with near-fine balance inside entire-number strata.
//
// Each stratum k is matched at a fixed 1:k ratio (reduced when controls are
// scarce) by one min-cost flow. With a fine-balance variable the flow routes
// every selected control through a node for its level; a level node passes
// at most k * n_b controls for free (n_b = treated at level b in the
// stratum) and any excess through an overflow arc priced above the largest
// possible total distance. The optimum therefore minimizes the balance
// deviation first and the total distance second.

#ifndef VRMATCH_MATCHER_H_
#define VRMATCH_MATCHER_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrmatch/distance.h"
#include "vrmatch/ingest.h"
#include "vrmatch/netflow.h"
#include "vrmatch/propensity.h"

namespace vrmatch {

// A nominal balance variable: `level_of[i]` indexes `levels` for subject i.
struct FineBalanceSpec {
  std::string variable;
  std::vector<std::string> levels;
  std::vector<int> level_of;

  int num_levels() const { return static_cast<int>(levels.size()); }
  void validate(std::size_t num_subjects) const;
};

// Cross-product of the observed level combinations of discrete columns.
// Levels are labelled "a:b" in the order columns are given and sorted
// lexicographically. Missing cells form their own "NA" level.
FineBalanceSpec Interact(const CovariateTable& table,
                         const std::vector<std::string>& columns);

enum class CommonSupportPolicy { kSubsetMatch, kTrimScores, kFail };
enum class RatioMode { kEntireNumber, kPair };

std::string_view PolicyName(CommonSupportPolicy policy);
CommonSupportPolicy ParsePolicy(std::string_view name);

struct MatchConfig {
  int K = 5;
  int alpha = 1;
  std::optional<FineBalanceSpec> fine_balance;
  CommonSupportPolicy common_support = CommonSupportPolicy::kSubsetMatch;
  // kPair ignores the strata and pair-matches the whole sample.
  RatioMode ratio_mode = RatioMode::kEntireNumber;
  CostValue cost_scale = 10'000;

  bool use_caliper = true;
  double caliper_width = 0.5;  // multiple of the score SD
  std::optional<double> penalty_scale;  // default: DefaultPenaltyScale

  void validate() const;
};

struct MatchedSet {
  int stratum = 0;
  std::string treated_id;
  std::size_t treated_row = 0;
  std::vector<std::string> control_ids;
  std::vector<std::size_t> control_rows;

  int k() const { return static_cast<int>(control_ids.size()); }
};

enum class DiscardReason {
  kNoCommonSupport,     // left out by optimal subset matching
  kNoControlsInStratum,
  kScoreAboveControlMax,  // trimmed treated
  kScoreBelowTreatedMin,  // trimmed control
  kUnmatched,             // control not selected
  kNoTreatedInStratum,
};

std::string_view DiscardReasonCode(DiscardReason reason);

struct Discard {
  std::string id;
  std::size_t row = 0;
  int stratum = 0;
  DiscardReason reason = DiscardReason::kUnmatched;
};

// Outcome of matching one distance matrix.
struct StratumMatch {
  std::vector<MatchedSet> sets;
  std::vector<std::size_t> unmatched_treated;  // rows
  std::vector<std::size_t> unmatched_controls;  // rows
  // Sum over levels of |matched_b - target_b|.
  int deviation = 0;
  // Controls routed past their level's target; deviation / 2.
  int excess = 0;
  double total_distance = 0.0;
  CostValue total_cost = 0;  // integerized distance, balance term excluded
};

struct StratumSummary {
  int stratum = 0;
  std::size_t n_treated = 0;
  std::size_t n_controls = 0;
  int target_ratio = 0;
  int ratio = 0;
  bool scarcity = false;
  bool subset_matched = false;
  std::size_t n_sets = 0;
  int deviation = 0;
  double total_distance = 0.0;
};

struct MatchResult {
  std::vector<MatchedSet> sets;
  std::vector<Discard> discarded_treated;
  std::vector<Discard> discarded_controls;
  std::vector<StratumSummary> strata;
  bool trimmed = false;

  int total_deviation() const;
};

// 1:k optimal matching, lexicographically minimizing (fine-balance
// deviation, total distance). Throws when there are fewer than
// k * #treated controls.
StratumMatch FixedRatioMatch(const DistanceMatrix& dm, int k,
                             const FineBalanceSpec* fb = nullptr,
                             CostValue cost_scale = 10'000,
                             std::string* network_dump = nullptr);

struct RatioDecision {
  int ratio = 1;
  bool scarcity = false;  // fewer controls than treated
};

// max(1, min(k_target, floor(n_controls / n_treated))).
RatioDecision ReduceRatio(std::size_t n_treated, std::size_t n_controls,
                          int k_target);

// With more treated than controls, pair-matches every control to a distinct
// treated unit (roles swapped, balance targets taken from the controls) and
// leaves the remaining treated unmatched.
StratumMatch SubsetMatch(const DistanceMatrix& dm,
                         const FineBalanceSpec* fb = nullptr,
                         CostValue cost_scale = 10'000);

struct TrimResult {
  std::vector<bool> keep;  // per subject
  std::vector<Discard> discarded_treated;
  std::vector<Discard> discarded_controls;
};

// Drops treated whose score exceeds the largest control score and controls
// whose score is below the smallest treated score.
TrimResult TrimScores(const PropensityResult& result,
                      const CovariateTable& table);

// Produces the distance matrix for one stratum's treated and control rows.
using DistanceSource = std::function<DistanceMatrix(
    int stratum, std::vector<std::size_t> treated_rows,
    std::vector<std::size_t> control_rows)>;

// Builds a DistanceSource from rank-based Mahalanobis distances on every
// covariate of `table`, with the caliper settings of `config`.
DistanceSource RankMahalanobisSource(const CovariateTable& table,
                                     const PropensityResult& propensity,
                                     const MatchConfig& config);

// Optional hook receiving each solved network as text, keyed by stratum.
using NetworkDumpSink = std::function<void(int stratum, const std::string&)>;

MatchResult VariableRatioMatch(const CovariateTable& table,
                               const PropensityResult& propensity,
                               const StratumPartition& partition,
                               const MatchConfig& config,
                               const DistanceSource& distances,
                               const NetworkDumpSink& dump = nullptr);

}  // namespace vrmatch

#endif  // VRMATCH_MATCHER_H_
