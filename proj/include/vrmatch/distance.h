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
// Rank-based Mahalanobis distances with a graduated propensity caliper.

#ifndef VRMATCH_DISTANCE_H_
#define VRMATCH_DISTANCE_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vrmatch/ingest.h"

namespace vrmatch {

// Treated x control distances for one stratum. Rows follow `treated_rows`,
// columns follow `control_rows`; both index subjects of the source table.
struct DistanceMatrix {
  int stratum = 0;
  std::vector<std::size_t> treated_rows;
  std::vector<std::size_t> control_rows;
  std::vector<std::string> treated_ids;
  std::vector<std::string> control_ids;
  Eigen::MatrixXd d;

  std::size_t num_treated() const { return treated_rows.size(); }
  std::size_t num_controls() const { return control_rows.size(); }
  void validate() const;
  DistanceMatrix transposed() const;
};

// Average ranks (ties share the mean rank) of a single column, 1-based.
std::vector<double> AverageRanks(std::span<const double> values);

// N x p matrix of column ranks over all subjects. An empty `columns` means
// every covariate.
Eigen::MatrixXd RankTransform(const CovariateTable& table,
                              const std::vector<std::string>& columns = {});

// Mahalanobis metric on ranks. The rank covariance is rescaled so every
// diagonal entry equals the untied-rank variance (N^2 - 1) / 12, and inverted
// through a pseudoinverse (eigenvalues below 1e-10 x max dropped).
class RankMahalanobis {
 public:
  explicit RankMahalanobis(const Eigen::MatrixXd& ranks);

  double operator()(std::size_t a, std::size_t b) const;
  const Eigen::MatrixXd& precision() const { return precision_; }

  DistanceMatrix Matrix(const CovariateTable& table, int stratum,
                        std::vector<std::size_t> treated_rows,
                        std::vector<std::size_t> control_rows) const;

 private:
  Eigen::MatrixXd ranks_;
  Eigen::MatrixXd precision_;
};

DistanceMatrix RankMahalanobisMatrix(const CovariateTable& table,
                                     const Eigen::MatrixXd& ranks,
                                     std::vector<std::size_t> treated_rows,
                                     std::vector<std::size_t> control_rows);

// 1000 x median entry, or 1000 when every entry is zero.
double DefaultPenaltyScale(const DistanceMatrix& dm);

// Adds penalty_scale * (|e_t - e_c| - w) / w to entries whose score gap
// exceeds w = width_multiplier * score_sd. `scores` is indexed by subject.
DistanceMatrix ApplyCaliper(DistanceMatrix dm, std::span<const double> scores,
                            double score_sd, double width_multiplier,
                            double penalty_scale);

// User-supplied distances, keyed by (treated id, control id).
//
// The file holds one or more blocks separated by blank lines. Each block
// starts with a header whose first cell is ignored and whose remaining cells
// are control ids; each following row is a treated id and its distances.
// Empty or NA cells mark pairs without a distance.
class DistanceTable {
 public:
  static DistanceTable Load(const std::filesystem::path& path,
                            char delimiter = ',');
  static DistanceTable Parse(std::istream& in, char delimiter = ',');

  // Throws when a required pair is absent.
  DistanceMatrix Matrix(const CovariateTable& table, int stratum,
                        std::vector<std::size_t> treated_rows,
                        std::vector<std::size_t> control_rows) const;

  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, double> entries_;
};

}  // namespace vrmatch

#endif  // VRMATCH_DISTANCE_H_
