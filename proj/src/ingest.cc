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
#include "vrmatch/ingest.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "vrmatch/error.h"

namespace vrmatch {

namespace {

constexpr const char* kMissingLabel = "NA";

std::string Trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<double> ParseNumber(const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

bool Contains(const std::vector<std::string>& names, const std::string& s) {
  return std::find(names.begin(), names.end(), s) != names.end();
}

CovariateKind ClassifyNumeric(const std::vector<double>& values,
                              const std::vector<bool>& missing) {
  bool binary = true;
  bool integral = true;
  for (size_t i = 0; i < values.size(); ++i) {
    if (missing[i]) continue;
    const double v = values[i];
    if (v != 0.0 && v != 1.0) binary = false;
    if (v != std::floor(v)) integral = false;
  }
  if (binary) return CovariateKind::kBinary;
  if (integral) return CovariateKind::kOrdinal;
  return CovariateKind::kContinuous;
}

}  // namespace

std::string_view CovariateKindName(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::kBinary:
      return "binary";
    case CovariateKind::kOrdinal:
      return "ordinal";
    case CovariateKind::kContinuous:
      return "continuous";
    case CovariateKind::kNominal:
      return "nominal";
  }
  return "unknown";
}

bool IsMissingToken(std::string_view cell) {
  if (cell.empty()) return true;
  return cell.size() == 2 && (cell[0] == 'N' || cell[0] == 'n') &&
         (cell[1] == 'A' || cell[1] == 'a');
}

std::size_t CovariateTable::num_treated() const {
  return static_cast<std::size_t>(
      std::count_if(subjects.begin(), subjects.end(),
                    [](const Subject& s) { return s.z == 1; }));
}

std::optional<std::size_t> CovariateTable::find_covariate(
    std::string_view name) const {
  for (size_t j = 0; j < covariate_names.size(); ++j) {
    if (covariate_names[j] == name) return j;
  }
  return std::nullopt;
}

std::vector<double> CovariateTable::column(std::size_t j) const {
  std::vector<double> out;
  out.reserve(subjects.size());
  for (const Subject& s : subjects) out.push_back(s.values[j]);
  return out;
}

std::vector<int> CovariateTable::treatment() const {
  std::vector<int> out;
  out.reserve(subjects.size());
  for (const Subject& s : subjects) out.push_back(s.z);
  return out;
}

void CovariateTable::validate() const {
  if (subjects.empty()) throw ValidationError("no subjects");
  if (covariate_kinds.size() != covariate_names.size()) {
    throw ValidationError("covariate kinds and names differ in length");
  }
  std::unordered_set<std::string> ids;
  for (const Subject& s : subjects) {
    if (s.z != 0 && s.z != 1) {
      throw ValidationError("subject " + s.id + ": treatment must be 0 or 1");
    }
    if (s.values.size() != covariate_names.size() ||
        s.missing_mask.size() != covariate_names.size()) {
      throw ValidationError("subject " + s.id + ": wrong number of values");
    }
    if (!ids.insert(s.id).second) {
      throw ValidationError("duplicate subject id '" + s.id + "'");
    }
  }
  const size_t nt = num_treated();
  if (nt == 0) throw ValidationError("no treated subjects");
  if (nt == subjects.size()) throw ValidationError("no control subjects");
  for (const auto& [name, col] : labels) {
    if (col.size() != subjects.size()) {
      throw ValidationError("label column '" + name + "' has wrong length");
    }
  }
  if (external_scores && external_scores->size() != subjects.size()) {
    throw ValidationError("score column has wrong length");
  }
}

std::vector<std::string> SplitDelimited(std::string_view line,
                                        char delimiter) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      out.push_back(Trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(Trim(cur));
  return out;
}

CovariateTable ParseTable(std::istream& in, const Schema& schema,
                          const std::string& source_name) {
  if (schema.treatment_column.empty()) {
    throw ValidationError("schema must name a treatment column");
  }

  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    header = SplitDelimited(line, schema.delimiter);
    break;
  }
  if (header.empty()) throw ValidationError(source_name + ": no subjects");
  // Strip a UTF-8 byte order mark.
  if (header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header[0] = header[0].substr(3);
  }

  std::unordered_map<std::string, size_t> pos;
  for (size_t c = 0; c < header.size(); ++c) {
    if (!pos.emplace(header[c], c).second) {
      throw ValidationError(source_name + ": duplicate column '" + header[c] +
                            "'");
    }
  }
  auto require = [&](const std::string& name) {
    if (!pos.count(name)) {
      throw ValidationError(source_name + ": column '" + name +
                            "' named in schema is absent from file");
    }
    return pos.at(name);
  };

  const size_t treat_col = require(schema.treatment_column);
  std::optional<size_t> id_col;
  if (!schema.id_column.empty()) id_col = require(schema.id_column);
  std::optional<size_t> score_col;
  if (!schema.score_column.empty()) score_col = require(schema.score_column);
  for (const auto& n : schema.nominal) require(n);
  for (const auto& n : schema.label_only) require(n);
  for (const auto& n : schema.exclude) require(n);

  std::vector<std::string> covariates = schema.covariates;
  if (covariates.empty()) {
    for (const auto& name : header) {
      if (name == schema.treatment_column || name == schema.id_column ||
          name == schema.score_column || Contains(schema.label_only, name) ||
          Contains(schema.exclude, name)) {
        continue;
      }
      covariates.push_back(name);
    }
  }
  for (const auto& n : covariates) {
    require(n);
    if (n == schema.treatment_column || n == schema.id_column ||
        n == schema.score_column) {
      throw ValidationError("column '" + n +
                            "' cannot be both a covariate and a role column");
    }
  }
  for (const auto& n : schema.nominal) {
    if (!Contains(covariates, n)) {
      throw ValidationError("nominal column '" + n + "' is not a covariate");
    }
  }

  // Raw cells, column-wise, for every column we need.
  std::vector<std::string> ids;
  std::vector<int> z;
  std::vector<std::vector<std::string>> cells(header.size());
  std::vector<double> scores;
  size_t row = 0;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    ++row;
    std::vector<std::string> fields = SplitDelimited(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw ValidationError(source_name + ": line " + std::to_string(line_no) +
                            " has " + std::to_string(fields.size()) +
                            " fields, header has " +
                            std::to_string(header.size()));
    }
    const std::string& t = fields[treat_col];
    std::optional<double> tv = ParseNumber(t);
    if (!tv || (*tv != 0.0 && *tv != 1.0)) {
      throw ValidationError(source_name + ": row " + std::to_string(row) +
                            ": treatment value '" + t + "' is not 0 or 1");
    }
    z.push_back(static_cast<int>(*tv));
    ids.push_back(id_col ? fields[*id_col] : std::to_string(row));
    if (score_col) {
      std::optional<double> sv = ParseNumber(fields[*score_col]);
      if (!sv || !(*sv > 0.0 && *sv < 1.0)) {
        throw ValidationError(source_name + ": row " + std::to_string(row) +
                              ": score '" + fields[*score_col] +
                              "' is not in (0,1)");
      }
      scores.push_back(*sv);
    }
    for (size_t c = 0; c < header.size(); ++c) {
      cells[c].push_back(std::move(fields[c]));
    }
  }
  if (row == 0) throw ValidationError(source_name + ": no subjects");

  CovariateTable table;
  table.subjects.resize(row);
  for (size_t i = 0; i < row; ++i) {
    table.subjects[i].id = ids[i];
    table.subjects[i].z = z[i];
  }
  if (score_col) table.external_scores = std::move(scores);

  auto add_column = [&](const std::string& name, CovariateKind kind,
                        const std::vector<double>& v,
                        const std::vector<bool>& miss) {
    table.covariate_names.push_back(name);
    table.covariate_kinds.push_back(kind);
    for (size_t i = 0; i < row; ++i) {
      table.subjects[i].values.push_back(v[i]);
      table.subjects[i].missing_mask.push_back(miss[i]);
    }
  };
  auto store_labels = [&](const std::string& name) {
    std::vector<std::string> col = cells[pos.at(name)];
    for (auto& s : col) {
      if (IsMissingToken(s)) s = kMissingLabel;
    }
    table.labels[name] = std::move(col);
  };

  for (const auto& name : covariates) {
    const std::vector<std::string>& col = cells[pos.at(name)];
    store_labels(name);
    if (Contains(schema.nominal, name)) {
      table.nominal_sources.push_back(name);
      const std::vector<std::string>& labels = table.labels[name];
      std::set<std::string> levels(labels.begin(), labels.end());
      std::vector<std::string> coded(levels.begin(), levels.end());
      // Two levels collapse to one 0/1 column; wider factors get one column
      // per level. A missing cell is its own level.
      if (coded.size() == 2) coded.erase(coded.begin());
      const std::vector<bool> no_missing(row, false);
      for (const auto& level : coded) {
        std::vector<double> v(row);
        for (size_t i = 0; i < row; ++i) v[i] = labels[i] == level ? 1.0 : 0.0;
        add_column(name + "=" + level, CovariateKind::kNominal, v, no_missing);
      }
      continue;
    }
    std::vector<double> v(row, 0.0);
    std::vector<bool> miss(row, false);
    for (size_t i = 0; i < row; ++i) {
      if (IsMissingToken(col[i])) {
        miss[i] = true;
        continue;
      }
      std::optional<double> x = ParseNumber(col[i]);
      if (!x) {
        throw ValidationError(source_name + ": row " + std::to_string(i + 1) +
                              ": column '" + name + "' value '" + col[i] +
                              "' is not numeric (declare it nominal?)");
      }
      v[i] = *x;
    }
    add_column(name, ClassifyNumeric(v, miss), v, miss);
  }
  for (const auto& name : schema.label_only) {
    if (!table.labels.count(name)) store_labels(name);
  }

  table.validate();
  return table;
}

CovariateTable LoadTable(const std::filesystem::path& path,
                         const Schema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open input file '" + path.string() + "'");
  }
  return ParseTable(in, schema, path.string());
}

CovariateTable ImputeWithIndicators(const CovariateTable& table) {
  CovariateTable out = table;
  out.imputed = true;
  const size_t p = table.num_covariates();
  const size_t n = table.size();
  for (size_t j = 0; j < p; ++j) {
    double sum = 0.0;
    size_t observed = 0;
    for (const Subject& s : table.subjects) {
      if (!s.missing_mask[j]) {
        sum += s.values[j];
        ++observed;
      }
    }
    if (observed == n) continue;
    if (observed == 0) {
      throw ValidationError("covariate '" + table.covariate_names[j] +
                            "' is entirely missing");
    }
    const double mean = sum / static_cast<double>(observed);
    out.covariate_names.push_back(table.covariate_names[j] + "_missing");
    out.covariate_kinds.push_back(CovariateKind::kBinary);
    for (size_t i = 0; i < n; ++i) {
      Subject& s = out.subjects[i];
      if (s.missing_mask[j]) s.values[j] = mean;
      s.values.push_back(s.missing_mask[j] ? 1.0 : 0.0);
      s.missing_mask.push_back(false);
    }
  }
  return out;
}

}  // namespace vrmatch
