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
// Brute-force oracles, instance generators and fixtures shared by the unit
// and acceptance suites. Nothing here calls the flow solver.

#ifndef VRMATCH_TESTS_TEST_SUPPORT_H_
#define VRMATCH_TESTS_TEST_SUPPORT_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vrmatch/distance.h"
#include "vrmatch/ingest.h"
#include "vrmatch/matcher.h"

namespace vrmatch::testing {

using IntMatrix = std::vector<std::vector<std::int64_t>>;

// Minimum cost of assigning each row to a distinct column (rows <= cols),
// by enumerating every injective map.
std::int64_t BruteForceAssignment(const IntMatrix& cost);

struct LexOptimum {
  int deviation = 0;  // sum_b |matched_b - k n_b|
  std::int64_t cost = 0;
};

// Lexicographic (deviation, cost) optimum over every 1:k match: each
// treated row receives k distinct columns, no column used twice.
// `treated_level` / `control_level` may be empty (no balance variable).
LexOptimum BruteForceFixedRatio(const IntMatrix& cost, int k,
                                const std::vector<int>& treated_level,
                                const std::vector<int>& control_level,
                                int num_levels);

// Lexicographic optimum over every way of pairing each control (column) to
// a distinct treated row, with balance targets taken from the controls.
LexOptimum BruteForceSubset(const IntMatrix& cost,
                            const std::vector<int>& treated_level,
                            const std::vector<int>& control_level,
                            int num_levels);

// A random stratum: integer-valued distances (so integerization is exact),
// with subject rows 0..nt-1 treated and nt..nt+nc-1 controls.
struct RandomStratum {
  CovariateTable table;
  DistanceMatrix dm;
  FineBalanceSpec fb;
  IntMatrix cost;  // dm.d x scale
  std::vector<int> treated_level;
  std::vector<int> control_level;
};

RandomStratum MakeRandomStratum(std::mt19937_64& rng, int nt, int nc,
                                int num_levels, std::int64_t scale = 10'000);

// Writes the synthetic observational study used by the acceptance run.
struct SyntheticOptions {
  int n_treated = 120;
  int n_controls = 360;
  std::uint64_t seed = 424242;
};
void WriteSyntheticStudy(const std::filesystem::path& path,
                         const SyntheticOptions& options = {});

// Path of a file in tests/data.
std::filesystem::path DataPath(const std::string& name);

// Loads the small worked example (25 students) with its distance blocks.
struct SmallExample {
  CovariateTable table;
  DistanceTable distances;
  PropensityResult propensity;
  StratumPartition partition;
  FineBalanceSpec drug_use;
};
SmallExample LoadSmallExample();

// Distance matrix for one stratum of the small example.
DistanceMatrix SmallExampleStratum(const SmallExample& ex, int k);

// Ids of the controls matched to `treated_id`, sorted.
std::vector<std::string> ControlsOf(const std::vector<MatchedSet>& sets,
                                    const std::string& treated_id);

}  // namespace vrmatch::testing

#endif  // VRMATCH_TESTS_TEST_SUPPORT_H_
