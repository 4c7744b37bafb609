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
// Logistic propensity scores, entire numbers and entire-number strata.
//
// The entire number of a subject is the inverse odds of its propensity
// score, (1 - e) / e: the expected number of controls sharing its covariate
// value. Subjects are grouped into strata S_1..S_K on the score scale,
//
//   S_1 = (1/3, 1],  S_k = (1/(k+2), 1/(k+1)] for 2 <= k < K,
//   S_K = [0, 1/(K+1)],
//
// and each stratum k is matched at a fixed 1:k ratio.

#ifndef VRMATCH_PROPENSITY_H_
#define VRMATCH_PROPENSITY_H_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vrmatch/ingest.h"

namespace vrmatch {

inline constexpr double kScoreClamp = 1e-6;

struct PropensityResult {
  // coefficients[0] is the intercept; coefficients[j + 1] belongs to
  // covariate j. Empty when scores were supplied externally.
  std::vector<double> coefficients;
  std::vector<double> scores;
  std::vector<double> entire_numbers;
  double score_sd = 0.0;
  int iterations = 0;
  bool external = false;
  std::vector<std::string> warnings;
};

struct FitOptions {
  double ridge = 0.0;  // L2 penalty on the non-intercept coefficients
  int max_iterations = 100;
  double tolerance = 1e-8;  // max absolute coefficient change
};

// Maximum (penalized) likelihood logistic regression by iteratively
// reweighted least squares on every covariate of an imputed table.
PropensityResult FitPropensity(const CovariateTable& table,
                               const FitOptions& options = {});

// Wraps externally estimated scores (clamped to [1e-6, 1 - 1e-6]).
PropensityResult PropensityFromScores(std::vector<double> scores);

// Gradient of the penalized log-likelihood at `coefficients`, for checking
// stationarity of a fit.
std::vector<double> PenalizedGradient(const CovariateTable& table,
                                      std::span<const double> coefficients,
                                      double ridge);
double PenalizedLogLikelihood(const CovariateTable& table,
                              std::span<const double> coefficients,
                              double ridge);

// (1 - score) / score. Throws unless 0 < score < 1.
double EntireNumber(double score);

// Controls per treated subject: max(1, min(floor(nu), beta)).
int RatioRule(double nu, int beta);

struct StratumPartition {
  int K = 0;
  std::vector<int> assignment;  // per subject, in 1..K

  // Score interval of stratum k as (lower, upper] except S_K = [0, upper].
  static std::pair<double, double> Interval(int k, int K);
  // Label of the stratum containing `score`.
  static int StratumOf(double score, int K);

  std::vector<std::size_t> members(int k) const;
};

StratumPartition Stratify(const PropensityResult& result, int K);

}  // namespace vrmatch

#endif  // VRMATCH_PROPENSITY_H_
