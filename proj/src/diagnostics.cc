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
#include "vrmatch/diagnostics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "vrmatch/error.h"

namespace vrmatch {

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform integer in [0, n). std::uniform_int_distribution is not specified
// bit-for-bit across standard libraries, so draws are done by hand.
std::uint64_t Below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

bool AtLeastAsExtreme(double stat, double observed) {
  const double a = std::abs(observed);
  return std::abs(stat) >= a - 1e-12 * std::max(1.0, a);
}

// Per matched set: every unit's value, treated first.
struct SetValues {
  std::vector<std::vector<double>> units;
  std::vector<double> sums;
};

SetValues CollectSets(const MatchResult& result, const CovariateTable& table,
                      std::size_t j) {
  SetValues sv;
  for (const MatchedSet& s : result.sets) {
    std::vector<double> u;
    u.push_back(table.subjects[s.treated_row].values[j]);
    for (size_t r : s.control_rows) u.push_back(table.subjects[r].values[j]);
    sv.sums.push_back(std::accumulate(u.begin(), u.end(), 0.0));
    sv.units.push_back(std::move(u));
  }
  return sv;
}

// Set-weighted difference when unit `pick` of set i is labelled treated.
double SetDiff(const SetValues& sv, size_t i, size_t pick) {
  const double x = sv.units[i][pick];
  const double k = static_cast<double>(sv.units[i].size() - 1);
  return x - (sv.sums[i] - x) / k;
}

double SampleVariance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

GroupMeans WeightedMeans(const MatchResult& result, const CovariateTable& table,
                         std::size_t j) {
  if (result.sets.empty()) throw ValidationError("empty match");
  GroupMeans m;
  for (const MatchedSet& s : result.sets) {
    if (s.control_rows.empty()) throw ValidationError("matched set without controls");
    m.treated += table.subjects[s.treated_row].values[j];
    double c = 0.0;
    for (size_t r : s.control_rows) c += table.subjects[r].values[j];
    m.control += c / static_cast<double>(s.control_rows.size());
  }
  const double sets = static_cast<double>(result.sets.size());
  m.treated /= sets;
  m.control /= sets;
  return m;
}

std::vector<GroupMeans> WeightedMeans(const MatchResult& result,
                                      const CovariateTable& table) {
  std::vector<GroupMeans> out;
  for (size_t j = 0; j < table.num_covariates(); ++j) {
    out.push_back(WeightedMeans(result, table, j));
  }
  return out;
}

double PooledSdBefore(const CovariateTable& table, std::size_t j) {
  std::vector<double> t;
  std::vector<double> c;
  for (const Subject& s : table.subjects) {
    (s.z == 1 ? t : c).push_back(s.values[j]);
  }
  return std::sqrt(0.5 * (SampleVariance(t) + SampleVariance(c)));
}

StdDiff StandardizedDifference(double mean_treated, double mean_control,
                               double pooled_sd_before) {
  if (!(pooled_sd_before > 0.0)) return {0.0, true};
  return {(mean_treated - mean_control) / pooled_sd_before, false};
}

double EffectiveSampleSize(std::span<const int> set_sizes) {
  double ess = 0.0;
  for (int k : set_sizes) {
    ess += 2.0 * static_cast<double>(k) / (static_cast<double>(k) + 1.0);
  }
  return ess;
}

double EffectiveSampleSize(const MatchResult& result) {
  std::vector<int> sizes;
  sizes.reserve(result.sets.size());
  for (const MatchedSet& s : result.sets) sizes.push_back(s.k());
  return EffectiveSampleSize(sizes);
}

double PermutationPValue(const MatchResult& result, const CovariateTable& table,
                         std::size_t j, int draws, std::uint64_t seed) {
  if (result.sets.empty()) throw ValidationError("empty match");
  if (draws < 1) throw ValidationError("draws must be positive");
  const SetValues sv = CollectSets(result, table, j);
  const size_t m = sv.units.size();
  double observed = 0.0;
  for (size_t i = 0; i < m; ++i) observed += SetDiff(sv, i, 0);
  observed /= static_cast<double>(m);

  std::mt19937_64 rng(seed);
  int count = 0;
  for (int d = 0; d < draws; ++d) {
    double stat = 0.0;
    for (size_t i = 0; i < m; ++i) {
      stat += SetDiff(sv, i, Below(rng, sv.units[i].size()));
    }
    stat /= static_cast<double>(m);
    if (AtLeastAsExtreme(stat, observed)) ++count;
  }
  return static_cast<double>(count + 1) / static_cast<double>(draws + 1);
}

double PermutationPValueUnmatched(const CovariateTable& table, std::size_t j,
                                  int draws, std::uint64_t seed) {
  if (draws < 1) throw ValidationError("draws must be positive");
  const size_t n = table.size();
  const size_t nt = table.num_treated();
  const size_t nc = n - nt;
  if (nt == 0 || nc == 0) throw ValidationError("need treated and controls");
  std::vector<double> x = table.column(j);
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  auto stat_of = [&](double sum_t) {
    return sum_t / static_cast<double>(nt) -
           (total - sum_t) / static_cast<double>(nc);
  };
  double sum_t = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (table.subjects[i].z == 1) sum_t += x[i];
  }
  const double observed = stat_of(sum_t);

  std::mt19937_64 rng(seed);
  int count = 0;
  for (int d = 0; d < draws; ++d) {
    // Partial Fisher-Yates: the first nt slots form a uniform random subset.
    double s = 0.0;
    for (size_t i = 0; i < nt; ++i) {
      const size_t r = i + static_cast<size_t>(Below(rng, n - i));
      std::swap(x[i], x[r]);
      s += x[i];
    }
    if (AtLeastAsExtreme(stat_of(s), observed)) ++count;
  }
  return static_cast<double>(count + 1) / static_cast<double>(draws + 1);
}

double ExactPermutationPValue(const MatchResult& result,
                              const CovariateTable& table, std::size_t j) {
  if (result.sets.empty()) throw ValidationError("empty match");
  const SetValues sv = CollectSets(result, table, j);
  const size_t m = sv.units.size();
  double total = 1.0;
  for (const auto& u : sv.units) total *= static_cast<double>(u.size());
  if (total > static_cast<double>(1 << 22)) {
    throw ValidationError("too many relabelings for exact enumeration");
  }
  double observed = 0.0;
  for (size_t i = 0; i < m; ++i) observed += SetDiff(sv, i, 0);
  observed /= static_cast<double>(m);

  std::vector<size_t> pick(m, 0);
  long long count = 0;
  long long seen = 0;
  while (true) {
    double stat = 0.0;
    for (size_t i = 0; i < m; ++i) stat += SetDiff(sv, i, pick[i]);
    stat /= static_cast<double>(m);
    if (AtLeastAsExtreme(stat, observed)) ++count;
    ++seen;
    size_t i = 0;
    while (i < m && ++pick[i] == sv.units[i].size()) pick[i++] = 0;
    if (i == m) break;
  }
  return static_cast<double>(count) / static_cast<double>(seen);
}

std::vector<std::pair<double, double>> QqUniform(std::vector<double> pvalues) {
  if (pvalues.empty()) throw ValidationError("no p-values");
  for (double p : pvalues) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p-value outside [0,1]");
  }
  std::sort(pvalues.begin(), pvalues.end());
  const double n = static_cast<double>(pvalues.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(pvalues.size());
  for (size_t i = 0; i < pvalues.size(); ++i) {
    out.emplace_back((static_cast<double>(i) + 0.5) / n, pvalues[i]);
  }
  return out;
}

std::size_t BalanceReport::count_at_least(double threshold) const {
  return static_cast<size_t>(
      std::count_if(rows.begin(), rows.end(), [&](const BalanceRow& r) {
        return std::abs(r.std_diff) >= threshold;
      }));
}

std::uint64_t CovariateSeed(std::uint64_t master, std::size_t j) {
  return SplitMix64(master ^ SplitMix64(static_cast<std::uint64_t>(j) + 1));
}

BalanceReport UnmatchedBalance(const CovariateTable& table,
                               const DiagnosticsOptions& options) {
  BalanceReport report;
  report.label = SampleLabel::kUnmatched;
  report.draws = options.draws;
  report.seed = options.seed;
  report.test = "permutation of treatment labels";
  const double nt = static_cast<double>(table.num_treated());
  const double nc = static_cast<double>(table.num_controls());
  for (size_t j = 0; j < table.num_covariates(); ++j) {
    BalanceRow row;
    row.covariate = table.covariate_names[j];
    for (const Subject& s : table.subjects) {
      (s.z == 1 ? row.mean_treated : row.mean_control) += s.values[j];
    }
    row.mean_treated /= nt;
    row.mean_control /= nc;
    const StdDiff sd = StandardizedDifference(
        row.mean_treated, row.mean_control, PooledSdBefore(table, j));
    row.std_diff = sd.value;
    row.zero_variance = sd.zero_variance;
    row.p_value = PermutationPValueUnmatched(table, j, options.draws,
                                             CovariateSeed(options.seed, j));
    report.rows.push_back(row);
  }
  // Every treated unit counts as one pair-equivalent before matching.
  report.effective_sample_size = nt;
  return report;
}

BalanceReport MatchedBalance(const MatchResult& result,
                             const CovariateTable& table,
                             const DiagnosticsOptions& options) {
  BalanceReport report;
  report.label = SampleLabel::kMatched;
  report.draws = options.draws;
  report.seed = options.seed;
  report.test = "stratified permutation within matched sets";
  for (size_t j = 0; j < table.num_covariates(); ++j) {
    BalanceRow row;
    row.covariate = table.covariate_names[j];
    const GroupMeans m = WeightedMeans(result, table, j);
    row.mean_treated = m.treated;
    row.mean_control = m.control;
    const StdDiff sd = StandardizedDifference(m.treated, m.control,
                                              PooledSdBefore(table, j));
    row.std_diff = sd.value;
    row.zero_variance = sd.zero_variance;
    row.p_value = PermutationPValue(result, table, j, options.draws,
                                    CovariateSeed(options.seed, j));
    report.rows.push_back(row);
  }
  report.effective_sample_size = EffectiveSampleSize(result);
  return report;
}

}  // namespace vrmatch
