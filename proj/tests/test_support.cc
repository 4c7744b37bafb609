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
#include "test_support.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>

#ifndef VRMATCH_TEST_DATA_DIR
#error "VRMATCH_TEST_DATA_DIR must be defined"
#endif

namespace vrmatch::testing {

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();

bool Better(const LexOptimum& a, const LexOptimum& b) {
  if (a.deviation != b.deviation) return a.deviation < b.deviation;
  return a.cost < b.cost;
}

// Uniform double in [0, 1) from the top 53 bits.
double Uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double Normal(std::mt19937_64& rng) {
  // Box-Muller; the second variate is dropped to keep the stream simple.
  double u1 = Uniform(rng);
  while (u1 <= 0.0) u1 = Uniform(rng);
  const double u2 = Uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Bernoulli(std::mt19937_64& rng, double p) { return Uniform(rng) < p ? 1 : 0; }

int BelowInt(std::mt19937_64& rng, int n) {
  return static_cast<int>(Uniform(rng) * n);
}

}  // namespace

std::int64_t BruteForceAssignment(const IntMatrix& cost) {
  const size_t rows = cost.size();
  if (rows == 0) return 0;
  const size_t cols = cost[0].size();
  std::vector<char> used(cols, 0);
  std::int64_t best = kInf;
  std::function<void(size_t, std::int64_t)> go = [&](size_t r, std::int64_t acc) {
    if (r == rows) {
      best = std::min(best, acc);
      return;
    }
    for (size_t c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      go(r + 1, acc + cost[r][c]);
      used[c] = 0;
    }
  };
  go(0, 0);
  return best;
}

LexOptimum BruteForceFixedRatio(const IntMatrix& cost, int k,
                                const std::vector<int>& treated_level,
                                const std::vector<int>& control_level,
                                int num_levels) {
  const int nt = static_cast<int>(cost.size());
  const int nc = nt == 0 ? 0 : static_cast<int>(cost[0].size());
  const bool balance = num_levels > 0;
  std::vector<int> target(static_cast<size_t>(num_levels), 0);
  if (balance) {
    for (int b : treated_level) target[static_cast<size_t>(b)] += k;
  }
  std::vector<int> matched(static_cast<size_t>(num_levels), 0);
  std::vector<char> used(static_cast<size_t>(nc), 0);
  LexOptimum best{std::numeric_limits<int>::max(), kInf};

  // Treated t picks its controls in increasing column order starting at
  // `from`; `left` controls remain to pick for t.
  std::function<void(int, int, int, std::int64_t)> go =
      [&](int t, int from, int left, std::int64_t acc) {
        if (t == nt) {
          LexOptimum cand{0, acc};
          for (int b = 0; b < num_levels; ++b) {
            cand.deviation += std::abs(matched[static_cast<size_t>(b)] -
                                       target[static_cast<size_t>(b)]);
          }
          if (Better(cand, best)) best = cand;
          return;
        }
        if (left == 0) {
          go(t + 1, 0, k, acc);
          return;
        }
        for (int c = from; c < nc; ++c) {
          if (used[static_cast<size_t>(c)]) continue;
          used[static_cast<size_t>(c)] = 1;
          if (balance) ++matched[static_cast<size_t>(control_level[static_cast<size_t>(c)])];
          go(t, c + 1, left - 1, acc + cost[static_cast<size_t>(t)][static_cast<size_t>(c)]);
          if (balance) --matched[static_cast<size_t>(control_level[static_cast<size_t>(c)])];
          used[static_cast<size_t>(c)] = 0;
        }
      };
  go(0, 0, k, 0);
  return best;
}

LexOptimum BruteForceSubset(const IntMatrix& cost,
                            const std::vector<int>& treated_level,
                            const std::vector<int>& control_level,
                            int num_levels) {
  const size_t nt = cost.size();
  const size_t nc = nt == 0 ? 0 : cost[0].size();
  IntMatrix swapped(nc, std::vector<std::int64_t>(nt));
  for (size_t t = 0; t < nt; ++t) {
    for (size_t c = 0; c < nc; ++c) swapped[c][t] = cost[t][c];
  }
  return BruteForceFixedRatio(swapped, 1, control_level, treated_level,
                              num_levels);
}

RandomStratum MakeRandomStratum(std::mt19937_64& rng, int nt, int nc,
                                int num_levels, std::int64_t scale) {
  RandomStratum s;
  for (int i = 0; i < nt + nc; ++i) {
    Subject sub;
    sub.id = (i < nt ? "t" : "c") + std::to_string(i < nt ? i : i - nt);
    sub.z = i < nt ? 1 : 0;
    s.table.subjects.push_back(sub);
  }
  s.dm.stratum = 1;
  for (int i = 0; i < nt; ++i) {
    s.dm.treated_rows.push_back(static_cast<size_t>(i));
    s.dm.treated_ids.push_back(s.table.subjects[static_cast<size_t>(i)].id);
  }
  for (int i = nt; i < nt + nc; ++i) {
    s.dm.control_rows.push_back(static_cast<size_t>(i));
    s.dm.control_ids.push_back(s.table.subjects[static_cast<size_t>(i)].id);
  }
  s.dm.d.resize(nt, nc);
  s.cost.assign(static_cast<size_t>(nt), std::vector<std::int64_t>(static_cast<size_t>(nc)));
  for (int t = 0; t < nt; ++t) {
    for (int c = 0; c < nc; ++c) {
      // Tenths on a small range: ties are common.
      const int v = BelowInt(rng, 200);
      s.dm.d(t, c) = v / 10.0;
      s.cost[static_cast<size_t>(t)][static_cast<size_t>(c)] = v * (scale / 10);
    }
  }
  if (num_levels > 0) {
    s.fb.variable = "level";
    for (int b = 0; b < num_levels; ++b) s.fb.levels.push_back("L" + std::to_string(b));
    for (int i = 0; i < nt + nc; ++i) {
      s.fb.level_of.push_back(BelowInt(rng, num_levels));
    }
    s.treated_level.assign(s.fb.level_of.begin(), s.fb.level_of.begin() + nt);
    s.control_level.assign(s.fb.level_of.begin() + nt, s.fb.level_of.end());
  }
  return s;
}

void WriteSyntheticStudy(const std::filesystem::path& path,
                         const SyntheticOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());

  const double x_shift[8] = {0.15, 0.1, 0.1, 0.1, 0.05, 0.05, 0.1, 0.0};
  const double b_treated[6] = {0.50, 0.40, 0.30, 0.50, 0.20, 0.60};
  const double b_control[6] = {0.35, 0.30, 0.25, 0.50, 0.15, 0.50};
  const double o_treated[4] = {0.55, 0.50, 0.50, 0.40};
  const double o_control[4] = {0.45, 0.45, 0.50, 0.35};

  out << "id,treatment,free_lunch,drug_use";
  for (int j = 1; j <= 8; ++j) out << ",x" << j;
  for (int j = 1; j <= 6; ++j) out << ",b" << j;
  for (int j = 1; j <= 4; ++j) out << ",o" << j;
  out << "\n";
  const int n = options.n_treated + options.n_controls;
  char buf[32];
  int written_t = 0;
  int written_c = 0;
  for (int i = 0; i < n; ++i) {
    // Interleave groups so row order carries no information.
    bool treated;
    if (written_t == options.n_treated) {
      treated = false;
    } else if (written_c == options.n_controls) {
      treated = true;
    } else {
      treated = Uniform(rng) <
                static_cast<double>(options.n_treated - written_t) /
                    static_cast<double>(n - written_t - written_c);
    }
    (treated ? written_t : written_c)++;
    out << "s" << (i + 1) << "," << (treated ? 1 : 0);
    out << "," << Bernoulli(rng, treated ? 0.90 : 0.55);
    out << "," << Bernoulli(rng, treated ? 0.28 : 0.20);
    for (int j = 0; j < 8; ++j) {
      const double x = Normal(rng) + (treated ? x_shift[j] : 0.0);
      const bool missing = j >= 6 && Uniform(rng) < 0.05;
      if (missing) {
        out << ",NA";
      } else {
        std::snprintf(buf, sizeof(buf), "%.6f", x);
        out << "," << buf;
      }
    }
    for (int j = 0; j < 6; ++j) {
      out << "," << Bernoulli(rng, treated ? b_treated[j] : b_control[j]);
    }
    for (int j = 0; j < 4; ++j) {
      int v = 0;
      for (int r = 0; r < 4; ++r) {
        v += Bernoulli(rng, treated ? o_treated[j] : o_control[j]);
      }
      out << "," << v;
    }
    out << "\n";
  }
}

std::filesystem::path DataPath(const std::string& name) {
  return std::filesystem::path(VRMATCH_TEST_DATA_DIR) / name;
}

SmallExample LoadSmallExample() {
  Schema schema;
  schema.id_column = "id";
  schema.treatment_column = "treatment";
  schema.covariates = {"drug_use", "entire_number"};
  schema.score_column = "score";
  SmallExample ex{
      .table = LoadTable(DataPath("small_example.csv"), schema),
      .distances = DistanceTable::Load(DataPath("small_example_distances.csv")),
      .propensity = {},
      .partition = {},
      .drug_use = {},
  };
  ex.propensity = PropensityFromScores(*ex.table.external_scores);
  ex.partition = Stratify(ex.propensity, 5);
  ex.drug_use = Interact(ex.table, {"drug_use"});
  return ex;
}

DistanceMatrix SmallExampleStratum(const SmallExample& ex, int k) {
  std::vector<size_t> t;
  std::vector<size_t> c;
  for (size_t i : ex.partition.members(k)) {
    (ex.table.subjects[i].z == 1 ? t : c).push_back(i);
  }
  return ex.distances.Matrix(ex.table, k, t, c);
}

std::vector<std::string> ControlsOf(const std::vector<MatchedSet>& sets,
                                    const std::string& treated_id) {
  for (const MatchedSet& s : sets) {
    if (s.treated_id == treated_id) {
      std::vector<std::string> ids = s.control_ids;
      std::sort(ids.begin(), ids.end());
      return ids;
    }
  }
  return {};
}

}  // namespace vrmatch::testing
