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
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "test_support.h"
#include "vrmatch/diagnostics.h"
#include "vrmatch/pipeline.h"

namespace vrmatch {
namespace {

namespace fs = std::filesystem;
using testing::ControlsOf;
using Ids = std::vector<std::string>;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void Report(int number, const std::string& title, double budget_seconds,
            const std::function<Verdict()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  if (budget_seconds > 0 && secs >= budget_seconds) {
    v.pass = false;
    v.detail += " [over the " + std::to_string(budget_seconds) + " s budget]";
  }
  if (!v.pass) ++failures;
  std::printf("%s criterion %2d: %s: %s (%.3f s)\n", v.pass ? "PASS" : "FAIL",
              number, title.c_str(), v.detail.c_str(), secs);
  std::fflush(stdout);
}

DistanceSource FixtureSource(const testing::SmallExample& ex) {
  return [&ex](int k, std::vector<size_t> t, std::vector<size_t> c) {
    return ex.distances.Matrix(ex.table, k, std::move(t), std::move(c));
  };
}

Verdict SmallExample(bool fine) {
  const auto ex = testing::LoadSmallExample();
  const FineBalanceSpec* fb = fine ? &ex.drug_use : nullptr;
  const StratumMatch s1 =
      FixedRatioMatch(testing::SmallExampleStratum(ex, 1), 1, fb);
  const StratumMatch s2 =
      FixedRatioMatch(testing::SmallExampleStratum(ex, 2), 2, fb);
  const StratumMatch s3 =
      FixedRatioMatch(testing::SmallExampleStratum(ex, 3), 3, fb);
  std::map<std::string, Ids> want = {
      {"t1", {fine ? "c6" : "c5"}},
      {"t2", {fine ? "c5" : "c1"}},
      {"t3", {"c2"}},
      {"t4", {"c4"}},
      {"t5", {"c11", "c7"}},
      {"t6", {"c10", "c13"}},
      {"t7", {"c8", "c9"}},
      {"t8", {fine ? "c15" : "c14", "c16", "c17"}},
  };
  std::vector<MatchedSet> sets = s1.sets;
  sets.insert(sets.end(), s2.sets.begin(), s2.sets.end());
  sets.insert(sets.end(), s3.sets.begin(), s3.sets.end());
  std::string mismatch;
  for (const auto& [t, ids] : want) {
    if (ControlsOf(sets, t) != ids) mismatch += " " + t;
  }

  // The full procedure must agree with the per-stratum matches.
  MatchConfig config;
  config.use_caliper = false;
  if (fine) config.fine_balance = ex.drug_use;
  const MatchResult full = VariableRatioMatch(ex.table, ex.propensity,
                                              ex.partition, config,
                                              FixtureSource(ex));
  for (const auto& [t, ids] : want) {
    if (ControlsOf(full.sets, t) != ids) mismatch += " full:" + t;
  }

  const CostValue want_cost = fine ? 105000 : 48000;
  std::ostringstream d;
  d << "stratum-1 integer cost " << s1.total_cost << " (want " << want_cost
    << "), stratum-1 distance " << s1.total_distance;
  if (fine) {
    d << ", stratum-3 controls c15 c16 c17 "
      << (ControlsOf(s3.sets, "t8") == want["t8"] ? "yes" : "no")
      << ", stratum-3 deviation " << s3.deviation;
  }
  if (!mismatch.empty()) d << ", mismatched sets:" << mismatch;
  return {mismatch.empty() && s1.total_cost == want_cost, d.str()};
}

Verdict EffectiveSize() {
  std::vector<int> sizes;
  for (auto [count, k] :
       std::vector<std::pair<int, int>>{{75, 1}, {23, 2}, {7, 3}, {11, 5}}) {
    sizes.insert(sizes.end(), static_cast<size_t>(count), k);
  }
  const double ess = EffectiveSampleSize(sizes);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "Sigma 2k/(k+1) = %.12f", ess);
  return {std::abs(ess - 134.5) < 1e-9, buf};
}

Verdict BruteForceOracle() {
  std::mt19937_64 rng(20260101);
  int agree = 0;
  int total = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + trial % 3;
    const int max_nt = std::min(6, 10 / k);
    const int nt = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_nt));
    const int nc = k * nt + static_cast<int>(rng() % static_cast<unsigned>(10 - k * nt + 1));
    const int levels = 2 + static_cast<int>(rng() % 3);
    const auto s = testing::MakeRandomStratum(rng, nt, nc, levels);
    const StratumMatch m = FixedRatioMatch(s.dm, k, &s.fb);
    const auto want = testing::BruteForceFixedRatio(s.cost, k, s.treated_level,
                                                    s.control_level, levels);
    ++total;
    if (m.deviation == want.deviation && m.total_cost == want.cost) ++agree;
  }
  return {agree == total && total >= 200,
          std::to_string(agree) + "/" + std::to_string(total) +
              " instances agree on (deviation, cost)"};
}

Verdict FineBalanceAttainment() {
  std::mt19937_64 rng(777);
  int zero = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + trial % 3;
    const int levels = 2 + trial % 3;
    const int nt = 1 + static_cast<int>(rng() % 4);
    std::vector<int> per_level(static_cast<size_t>(levels), 0);
    std::vector<int> level_of;
    for (int t = 0; t < nt; ++t) {
      const int b = static_cast<int>(rng() % static_cast<unsigned>(levels));
      ++per_level[static_cast<size_t>(b)];
      level_of.push_back(b);
    }
    std::vector<int> controls;
    for (int b = 0; b < levels; ++b) {
      const int n = k * per_level[static_cast<size_t>(b)] + static_cast<int>(rng() % 3);
      controls.insert(controls.end(), static_cast<size_t>(n), b);
    }
    std::shuffle(controls.begin(), controls.end(), rng);
    level_of.insert(level_of.end(), controls.begin(), controls.end());
    auto s = testing::MakeRandomStratum(rng, nt, static_cast<int>(controls.size()),
                                        levels);
    s.fb.level_of = level_of;
    if (FixedRatioMatch(s.dm, k, &s.fb).deviation == 0) ++zero;
  }
  return {zero == 100, std::to_string(zero) + "/100 instances with deviation 0"};
}

Verdict SubsetProperty() {
  std::mt19937_64 rng(4242);
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int nc = 1 + static_cast<int>(rng() % 5);
    const int nt = nc + 1 + static_cast<int>(rng() % static_cast<unsigned>(8 - nc));
    const auto s = testing::MakeRandomStratum(rng, nt, nc, 0);
    const StratumMatch m = SubsetMatch(s.dm);
    const auto want = testing::BruteForceSubset(s.cost, {}, {}, 0);
    if (m.unmatched_treated.size() == static_cast<size_t>(nt - nc) &&
        m.total_cost == want.cost) {
      ++ok;
    }
  }
  return {ok == 100, std::to_string(ok) +
                         "/100 instances discard #T-#C and reach the optimum"};
}

Verdict Stratification() {
  constexpr int kGrid = 100000;
  long bad_partition = 0;
  long bad_interval = 0;
  for (int K = 2; K <= 10; ++K) {
    for (int i = 0; i <= kGrid; ++i) {
      const double e = static_cast<double>(i) / kGrid;
      int hits = 0;
      for (int k = 1; k <= K; ++k) {
        const auto [lo, hi] = StratumPartition::Interval(k, K);
        hits += (k == K ? e >= lo : e > lo) && e <= hi;
      }
      const int k = StratumPartition::StratumOf(e, K);
      const auto [lo, hi] = StratumPartition::Interval(k, K);
      const bool inside = (k == K ? e >= lo : e > lo) && e <= hi;
      if (hits != 1 || !inside) ++bad_partition;
      if (i > 0 && i < kGrid) {
        const double nu = EntireNumber(e);
        for (int m = 2; m < K; ++m) {
          if ((k == m) != (nu >= m && nu < m + 1)) ++bad_interval;
        }
      }
    }
  }
  return {bad_partition == 0 && bad_interval == 0,
          std::to_string(bad_partition) + " partition and " +
              std::to_string(bad_interval) +
              " entire-number mismatches over 9 x 100001 scores"};
}

Verdict SolverOracle() {
  std::mt19937_64 rng(8888);
  int agree = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 8);
    const int cols = rows + static_cast<int>(rng() % static_cast<unsigned>(8 - rows + 1));
    testing::IntMatrix cost(static_cast<size_t>(rows),
                            std::vector<std::int64_t>(static_cast<size_t>(cols)));
    FlowNetwork net;
    for (int r = 0; r < rows; ++r) net.AddNode(1);
    for (int c = 0; c < cols; ++c) net.AddNode(0);
    const int sink = net.AddNode(-rows);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const auto v = static_cast<std::int64_t>(rng() % 100000);
        cost[static_cast<size_t>(r)][static_cast<size_t>(c)] = v;
        net.AddArc(r, rows + c, 1, v);
      }
    }
    for (int c = 0; c < cols; ++c) net.AddArc(rows + c, sink, 1, 0);
    const FlowSolution s = SolveMinCostFlow(net);
    if (s.feasible && s.total_cost == testing::BruteForceAssignment(cost)) ++agree;
  }
  return {agree == 500, std::to_string(agree) + "/500 costs equal enumeration"};
}

Verdict EntireNumbers() {
  const double nu = EntireNumber(0.25);
  bool ok = nu == 3.0 && RatioRule(3.0, 5) == 3;
  // max{1, min(floor(nu), beta)} on a grid.
  for (int beta = 1; beta <= 8; ++beta) {
    for (int i = 1; i < 2000; ++i) {
      const double v = i * 0.01;
      const int want = std::max(1, std::min(static_cast<int>(std::floor(v)), beta));
      ok = ok && RatioRule(v, beta) == want;
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "nu(1/4) = %g, ratio_rule(3.0, 5) = %d", nu,
                RatioRule(3.0, 5));
  return {ok, buf};
}

std::map<std::string, std::string> ReadTree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

struct SyntheticRuns {
  fs::path dir;
  fs::path data;

  RunConfig Baseline(const std::string& out) const {
    RunConfig c;
    c.input = data;
    c.id_column = "id";
    c.pair_match = true;
    c.use_caliper = true;
    c.out_dir = dir / out;
    return c;
  }
  RunConfig FineBalanced(const std::string& out) const {
    RunConfig c;
    c.input = data;
    c.id_column = "id";
    c.K = 5;
    c.fine_balance = {"free_lunch", "drug_use"};
    c.out_dir = dir / out;
    return c;
  }
};

double StdDiffOf(const BalanceReport& r, const std::string& name) {
  for (const BalanceRow& row : r.rows) {
    if (row.covariate == name) return row.std_diff;
  }
  throw std::runtime_error("no balance row for " + name);
}

Verdict SyntheticBalance(const SyntheticRuns& runs) {
  using Clock = std::chrono::steady_clock;
  auto t0 = Clock::now();
  const RunOutcome base = RunPipeline(runs.Baseline("baseline"));
  const double base_secs = std::chrono::duration<double>(Clock::now() - t0).count();
  t0 = Clock::now();
  const RunOutcome fine = RunPipeline(runs.FineBalanced("fine"));
  const double fine_secs = std::chrono::duration<double>(Clock::now() - t0).count();

  const size_t base_count = base.matched.count_at_least(0.1);
  const size_t fine_count = fine.matched.count_at_least(0.1);
  const double lunch = StdDiffOf(fine.matched, "free_lunch");
  const double drug = StdDiffOf(fine.matched, "drug_use");
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "|sd|>=0.1: baseline %zu of %zu, fine-balanced %zu; "
                "free_lunch %.4f, drug_use %.4f (unmatched %.3f, %.3f); "
                "ESS %.1f vs %.1f; runs %.2f s and %.2f s",
                base_count, base.matched.rows.size(), fine_count, lunch, drug,
                StdDiffOf(fine.unmatched, "free_lunch"),
                StdDiffOf(fine.unmatched, "drug_use"),
                base.matched.effective_sample_size,
                fine.matched.effective_sample_size, base_secs, fine_secs);
  const bool pass = fine_count < base_count && std::abs(lunch) < 0.05 &&
                    std::abs(drug) < 0.05 && base_secs < 30 && fine_secs < 30;
  return {pass, buf};
}

Verdict Determinism(const SyntheticRuns& runs) {
  RunPipeline(runs.FineBalanced("fine_again"));
  RunPipeline(runs.Baseline("baseline_again"));
  size_t files = 0;
  std::string differ;
  for (const auto& [a, b] : {std::pair<std::string, std::string>{"fine", "fine_again"},
                             {"baseline", "baseline_again"}}) {
    const auto ta = ReadTree(runs.dir / a);
    const auto tb = ReadTree(runs.dir / b);
    if (ta.size() != tb.size()) differ += " " + a + ":file-set";
    for (const auto& [name, content] : ta) {
      ++files;
      auto it = tb.find(name);
      if (it == tb.end() || it->second != content) differ += " " + a + "/" + name;
    }
  }
  return {differ.empty() && files > 0,
          std::to_string(files) + " artifacts compared" +
              (differ.empty() ? ", all byte-identical" : ", differing:" + differ)};
}

}  // namespace
}  // namespace vrmatch

int main() {
  using namespace vrmatch;
  Report(1, "small example without fine balance", 1.0,
         [] { return SmallExample(false); });
  Report(2, "small example with near-fine balance on drug use", 1.0,
         [] { return SmallExample(true); });
  Report(3, "effective sample size arithmetic", 0, EffectiveSize);
  Report(4, "fixed-ratio match equals brute-force optimum", 60.0,
         BruteForceOracle);
  Report(5, "fine balance attained when levels suffice", 0,
         FineBalanceAttainment);
  Report(6, "subset matching discards and optimality", 0, SubsetProperty);
  Report(7, "entire-number strata partition the unit interval", 0,
         Stratification);
  Report(8, "min-cost flow equals assignment enumeration", 0, SolverOracle);
  Report(9, "entire number and ratio rule", 0, EntireNumbers);

  SyntheticRuns runs;
  runs.dir = fs::temp_directory_path() /
             ("vrmatch_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(runs.dir);
  fs::create_directories(runs.dir);
  runs.data = runs.dir / "synthetic.csv";
  testing::WriteSyntheticStudy(runs.data);
  Report(10, "synthetic study: near-fine balance beats pair matching", 0,
         [&] { return SyntheticBalance(runs); });
  Report(11, "synthetic study artifacts are reproducible", 0,
         [&] { return Determinism(runs); });
  fs::remove_all(runs.dir);

  std::printf("%d criteria failed\n", vrmatch::failures);
  return vrmatch::failures == 0 ? 0 : 1;
}
