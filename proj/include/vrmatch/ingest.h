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
// Loading covariate tables from delimited text and mean imputation with
// missingness indicators.

#ifndef VRMATCH_INGEST_H_
#define VRMATCH_INGEST_H_

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vrmatch {

enum class CovariateKind { kBinary, kOrdinal, kContinuous, kNominal };

std::string_view CovariateKindName(CovariateKind kind);

// Column roles for a delimited input file.
struct Schema {
  // Empty means subjects are identified by their 1-based row number.
  std::string id_column;
  std::string treatment_column;
  // Empty means every column not otherwise claimed (id, treatment, score,
  // label-only, excluded) is a covariate.
  std::vector<std::string> covariates;
  // Covariates to treat as unordered categories. Must also be covariates
  // (implicitly or explicitly).
  std::vector<std::string> nominal;
  // Columns loaded only as raw labels, e.g. a fine-balance variable that
  // should not enter the distance or the score model.
  std::vector<std::string> label_only;
  std::vector<std::string> exclude;
  // Optional column of externally estimated propensity scores.
  std::string score_column;
  char delimiter = ',';
};

struct Subject {
  std::string id;
  int z = 0;  // 1 = treated
  std::vector<double> values;
  std::vector<bool> missing_mask;
};

// Subjects are stored row-wise; `values[j]` lines up with
// `covariate_names[j]` and `covariate_kinds[j]`.
struct CovariateTable {
  std::vector<Subject> subjects;
  std::vector<std::string> covariate_names;
  std::vector<CovariateKind> covariate_kinds;
  // Raw cell text of every declared source column (covariates before one-hot
  // expansion, plus label-only columns). Missing cells are stored as "NA".
  std::map<std::string, std::vector<std::string>> labels;
  // Source columns that were declared nominal.
  std::vector<std::string> nominal_sources;
  std::optional<std::vector<double>> external_scores;
  // Set by ImputeWithIndicators; missing_mask is then an audit trail only.
  bool imputed = false;

  std::size_t size() const { return subjects.size(); }
  std::size_t num_covariates() const { return covariate_names.size(); }
  std::size_t num_treated() const;
  std::size_t num_controls() const { return size() - num_treated(); }

  // Column index by name, or nullopt.
  std::optional<std::size_t> find_covariate(std::string_view name) const;
  std::vector<double> column(std::size_t j) const;
  std::vector<int> treatment() const;

  // Throws ValidationError when a structural invariant is broken.
  void validate() const;
};

// The missing-value sentinel: an empty cell or "NA" in any letter case.
bool IsMissingToken(std::string_view cell);

CovariateTable ParseTable(std::istream& in, const Schema& schema,
                          const std::string& source_name = "<input>");
CovariateTable LoadTable(const std::filesystem::path& path,
                         const Schema& schema);

// Replaces every missing cell with the pooled column mean and appends a
// "<name>_missing" indicator for each column that had at least one missing
// cell. The original masks are kept for audit.
CovariateTable ImputeWithIndicators(const CovariateTable& table);

// Splits one delimited line, honoring double-quoted fields.
std::vector<std::string> SplitDelimited(std::string_view line, char delimiter);

}  // namespace vrmatch

#endif  // VRMATCH_INGEST_H_
