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
#include "vrmatch/distance.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vrmatch/error.h"

namespace vrmatch {

namespace {

constexpr double kPinvRelativeTolerance = 1e-10;

}  // namespace

void DistanceMatrix::validate() const {
  if (treated_ids.size() != treated_rows.size() ||
      control_ids.size() != control_rows.size() ||
      d.rows() != static_cast<Eigen::Index>(treated_rows.size()) ||
      d.cols() != static_cast<Eigen::Index>(control_rows.size())) {
    throw ValidationError("distance matrix dimensions do not match its ids");
  }
  if (!d.allFinite() || (d.size() > 0 && d.minCoeff() < 0.0)) {
    throw ValidationError("distance matrix entries must be finite and >= 0");
  }
}

DistanceMatrix DistanceMatrix::transposed() const {
  DistanceMatrix t;
  t.stratum = stratum;
  t.treated_rows = control_rows;
  t.control_rows = treated_rows;
  t.treated_ids = control_ids;
  t.control_ids = treated_ids;
  t.d = d.transpose();
  return t;
}

std::vector<double> AverageRanks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share ranks i+1..j+1.
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t m = i; m <= j; ++m) ranks[order[m]] = avg;
    i = j + 1;
  }
  return ranks;
}

Eigen::MatrixXd RankTransform(const CovariateTable& table,
                              const std::vector<std::string>& columns) {
  std::vector<size_t> idx;
  if (columns.empty()) {
    idx.resize(table.num_covariates());
    std::iota(idx.begin(), idx.end(), size_t{0});
  } else {
    for (const auto& name : columns) {
      auto j = table.find_covariate(name);
      if (!j) throw ValidationError("unknown distance column '" + name + "'");
      idx.push_back(*j);
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(table.size());
  Eigen::MatrixXd r(n, static_cast<Eigen::Index>(idx.size()));
  for (size_t c = 0; c < idx.size(); ++c) {
    const std::vector<double> col = table.column(idx[c]);
    const std::vector<double> rk = AverageRanks(col);
    for (Eigen::Index i = 0; i < n; ++i) {
      r(i, static_cast<Eigen::Index>(c)) = rk[static_cast<size_t>(i)];
    }
  }
  return r;
}

RankMahalanobis::RankMahalanobis(const Eigen::MatrixXd& ranks)
    : ranks_(ranks) {
  const Eigen::Index n = ranks.rows();
  const Eigen::Index p = ranks.cols();
  if (n < 2) {
    throw ValidationError("rank Mahalanobis distance needs at least 2 subjects");
  }
  const Eigen::MatrixXd centered = ranks.rowwise() - ranks.colwise().mean();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);

  const double untied =
      (static_cast<double>(n) * static_cast<double>(n) - 1.0) / 12.0;
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    // A constant column has zero rank variance and contributes nothing.
    scale(j) = cov(j, j) > 0.0 ? std::sqrt(untied / cov(j, j)) : 0.0;
  }
  cov = scale.asDiagonal() * cov * scale.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double max_ev = p > 0 ? ev.cwiseAbs().maxCoeff() : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (ev(j) > kPinvRelativeTolerance * max_ev) inv(j) = 1.0 / ev(j);
  }
  precision_ = eig.eigenvectors() * inv.asDiagonal() *
               eig.eigenvectors().transpose();
}

double RankMahalanobis::operator()(std::size_t a, std::size_t b) const {
  const Eigen::VectorXd delta =
      (ranks_.row(static_cast<Eigen::Index>(a)) -
       ranks_.row(static_cast<Eigen::Index>(b)))
          .transpose();
  const double q = delta.dot(precision_ * delta);
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

DistanceMatrix RankMahalanobis::Matrix(
    const CovariateTable& table, int stratum,
    std::vector<std::size_t> treated_rows,
    std::vector<std::size_t> control_rows) const {
  DistanceMatrix dm;
  dm.stratum = stratum;
  dm.treated_rows = std::move(treated_rows);
  dm.control_rows = std::move(control_rows);
  for (size_t r : dm.treated_rows) dm.treated_ids.push_back(table.subjects[r].id);
  for (size_t r : dm.control_rows) dm.control_ids.push_back(table.subjects[r].id);
  const Eigen::Index nt = static_cast<Eigen::Index>(dm.treated_rows.size());
  const Eigen::Index nc = static_cast<Eigen::Index>(dm.control_rows.size());
  dm.d.resize(nt, nc);
  for (Eigen::Index t = 0; t < nt; ++t) {
    for (Eigen::Index c = 0; c < nc; ++c) {
      dm.d(t, c) = (*this)(dm.treated_rows[static_cast<size_t>(t)],
                           dm.control_rows[static_cast<size_t>(c)]);
    }
  }
  return dm;
}

DistanceMatrix RankMahalanobisMatrix(const CovariateTable& table,
                                     const Eigen::MatrixXd& ranks,
                                     std::vector<std::size_t> treated_rows,
                                     std::vector<std::size_t> control_rows) {
  RankMahalanobis metric(ranks);
  return metric.Matrix(table, 0, std::move(treated_rows),
                       std::move(control_rows));
}

double DefaultPenaltyScale(const DistanceMatrix& dm) {
  if (dm.d.size() == 0) return 1000.0;
  std::vector<double> v(dm.d.data(), dm.d.data() + dm.d.size());
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid),
                   v.end());
  double median = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(
        v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return 1000.0 * (median > 0.0 ? median : 1.0);
}

DistanceMatrix ApplyCaliper(DistanceMatrix dm, std::span<const double> scores,
                            double score_sd, double width_multiplier,
                            double penalty_scale) {
  if (!(width_multiplier > 0.0)) {
    throw ValidationError("caliper width multiplier must be positive");
  }
  if (!(penalty_scale > 0.0)) {
    throw ValidationError("caliper penalty scale must be positive");
  }
  const double w = width_multiplier * score_sd;
  // With no score spread there is nothing to penalize.
  if (!(w > 0.0)) return dm;
  for (Eigen::Index t = 0; t < dm.d.rows(); ++t) {
    const double et = scores[dm.treated_rows[static_cast<size_t>(t)]];
    for (Eigen::Index c = 0; c < dm.d.cols(); ++c) {
      const double gap =
          std::abs(et - scores[dm.control_rows[static_cast<size_t>(c)]]);
      if (gap > w) dm.d(t, c) += penalty_scale * (gap - w) / w;
    }
  }
  return dm;
}

DistanceTable DistanceTable::Load(const std::filesystem::path& path,
                                  char delimiter) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open distance file '" + path.string() + "'");
  }
  return Parse(in, delimiter);
}

DistanceTable DistanceTable::Parse(std::istream& in, char delimiter) {
  DistanceTable table;
  std::vector<std::string> header;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      header.clear();
      continue;
    }
    std::vector<std::string> fields = SplitDelimited(line, delimiter);
    if (header.empty()) {
      header = std::move(fields);
      if (header.size() < 2) {
        throw ValidationError("distance file line " + std::to_string(line_no) +
                              ": header needs at least one control id");
      }
      continue;
    }
    if (fields.size() != header.size()) {
      throw ValidationError("distance file line " + std::to_string(line_no) +
                            ": expected " + std::to_string(header.size()) +
                            " fields");
    }
    for (size_t c = 1; c < fields.size(); ++c) {
      if (IsMissingToken(fields[c])) continue;
      double v = 0.0;
      try {
        size_t used = 0;
        v = std::stod(fields[c], &used);
        if (used != fields[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ValidationError("distance file line " + std::to_string(line_no) +
                              ": bad value '" + fields[c] + "'");
      }
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("distance file line " + std::to_string(line_no) +
                              ": distances must be finite and >= 0");
      }
      table.entries_[{fields[0], header[c]}] = v;
    }
  }
  return table;
}

DistanceMatrix DistanceTable::Matrix(
    const CovariateTable& table, int stratum,
    std::vector<std::size_t> treated_rows,
    std::vector<std::size_t> control_rows) const {
  DistanceMatrix dm;
  dm.stratum = stratum;
  dm.treated_rows = std::move(treated_rows);
  dm.control_rows = std::move(control_rows);
  for (size_t r : dm.treated_rows) dm.treated_ids.push_back(table.subjects[r].id);
  for (size_t r : dm.control_rows) dm.control_ids.push_back(table.subjects[r].id);
  dm.d.resize(static_cast<Eigen::Index>(dm.treated_ids.size()),
              static_cast<Eigen::Index>(dm.control_ids.size()));
  for (size_t t = 0; t < dm.treated_ids.size(); ++t) {
    for (size_t c = 0; c < dm.control_ids.size(); ++c) {
      auto it = entries_.find({dm.treated_ids[t], dm.control_ids[c]});
      if (it == entries_.end()) {
        throw ValidationError("distance file has no entry for treated '" +
                              dm.treated_ids[t] + "' and control '" +
                              dm.control_ids[c] + "'");
      }
      dm.d(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
          it->second;
    }
  }
  return dm;
}

}  // namespace vrmatch
