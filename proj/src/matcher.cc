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
#include "vrmatch/matcher.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <set>

#include "vrmatch/error.h"

namespace vrmatch {

namespace {

// Headroom kept below INT64_MAX for path sums inside the solver.
constexpr long double kCostCeiling = 4.0e18L;

bool IsDiscreteLabel(const std::string& label) {
  if (label == "NA") return true;
  double v = 0.0;
  auto [ptr, ec] =
      std::from_chars(label.data(), label.data() + label.size(), v);
  if (ec != std::errc() || ptr != label.data() + label.size()) {
    return true;  // free text is a category
  }
  return v == std::floor(v);
}

}  // namespace

void FineBalanceSpec::validate(std::size_t num_subjects) const {
  if (levels.size() < 2) {
    throw ValidationError("fine-balance variable '" + variable +
                          "' needs at least 2 levels");
  }
  if (level_of.size() != num_subjects) {
    throw ValidationError("fine-balance variable '" + variable +
                          "' does not cover every subject");
  }
  for (int b : level_of) {
    if (b < 0 || b >= num_levels()) {
      throw ValidationError("fine-balance level out of range");
    }
  }
}

FineBalanceSpec Interact(const CovariateTable& table,
                         const std::vector<std::string>& columns) {
  if (columns.empty()) {
    throw ValidationError("fine balance needs at least one column");
  }
  const size_t n = table.size();
  std::vector<std::string> combo(n);
  std::string name;
  for (size_t c = 0; c < columns.size(); ++c) {
    const std::string& col = columns[c];
    auto it = table.labels.find(col);
    if (it == table.labels.end()) {
      throw ValidationError("fine-balance column '" + col + "' was not loaded");
    }
    const bool nominal =
        std::find(table.nominal_sources.begin(), table.nominal_sources.end(),
                  col) != table.nominal_sources.end();
    if (!nominal) {
      for (const std::string& label : it->second) {
        if (!IsDiscreteLabel(label)) {
          throw ValidationError("fine-balance column '" + col +
                                "' is not discrete (value '" + label + "')");
        }
      }
    }
    for (size_t i = 0; i < n; ++i) {
      if (c > 0) combo[i] += ":";
      combo[i] += it->second[i];
    }
    if (c > 0) name += " x ";
    name += col;
  }
  std::set<std::string> observed(combo.begin(), combo.end());
  FineBalanceSpec fb;
  fb.variable = name;
  fb.levels.assign(observed.begin(), observed.end());
  std::map<std::string, int> index;
  for (size_t b = 0; b < fb.levels.size(); ++b) {
    index[fb.levels[b]] = static_cast<int>(b);
  }
  fb.level_of.resize(n);
  for (size_t i = 0; i < n; ++i) fb.level_of[i] = index.at(combo[i]);
  fb.validate(n);
  return fb;
}

std::string_view PolicyName(CommonSupportPolicy policy) {
  switch (policy) {
    case CommonSupportPolicy::kSubsetMatch:
      return "subset";
    case CommonSupportPolicy::kTrimScores:
      return "trim";
    case CommonSupportPolicy::kFail:
      return "fail";
  }
  return "unknown";
}

CommonSupportPolicy ParsePolicy(std::string_view name) {
  if (name == "subset") return CommonSupportPolicy::kSubsetMatch;
  if (name == "trim") return CommonSupportPolicy::kTrimScores;
  if (name == "fail") return CommonSupportPolicy::kFail;
  throw ValidationError("unknown common-support policy '" + std::string(name) +
                        "' (expected subset, trim or fail)");
}

void MatchConfig::validate() const {
  if (K < 2) throw ValidationError("K must be at least 2");
  if (alpha < 1 || alpha > K) {
    throw ValidationError("alpha must lie in [1, K]");
  }
  if (cost_scale <= 0) throw ValidationError("cost scale must be positive");
  if (use_caliper && !(caliper_width > 0.0)) {
    throw ValidationError("caliper multiplier must be positive");
  }
  if (penalty_scale && !(*penalty_scale > 0.0)) {
    throw ValidationError("penalty scale must be positive");
  }
}

std::string_view DiscardReasonCode(DiscardReason reason) {
  switch (reason) {
    case DiscardReason::kNoCommonSupport:
      return "no_common_support";
    case DiscardReason::kNoControlsInStratum:
      return "no_controls_in_stratum";
    case DiscardReason::kScoreAboveControlMax:
      return "trimmed_score_above_control_max";
    case DiscardReason::kScoreBelowTreatedMin:
      return "trimmed_score_below_treated_min";
    case DiscardReason::kUnmatched:
      return "unmatched";
    case DiscardReason::kNoTreatedInStratum:
      return "no_treated_in_stratum";
  }
  return "unknown";
}

int MatchResult::total_deviation() const {
  int total = 0;
  for (const auto& s : strata) total += s.deviation;
  return total;
}

StratumMatch FixedRatioMatch(const DistanceMatrix& dm, int k,
                             const FineBalanceSpec* fb, CostValue cost_scale,
                             std::string* network_dump) {
  dm.validate();
  if (k < 1) throw ValidationError("matching ratio must be at least 1");
  const int nt = static_cast<int>(dm.num_treated());
  const int nc = static_cast<int>(dm.num_controls());
  if (static_cast<long long>(nc) < static_cast<long long>(k) * nt) {
    throw ValidationError("stratum " + std::to_string(dm.stratum) + ": " +
                          std::to_string(nc) + " controls cannot form 1:" +
                          std::to_string(k) + " sets for " +
                          std::to_string(nt) + " treated");
  }
  StratumMatch out;
  if (nt == 0) {
    out.unmatched_controls = dm.control_rows;
    return out;
  }

  const CostMatrix cost = Integerize(dm.d, cost_scale);
  long double cost_sum = 0.0L;
  for (Eigen::Index i = 0; i < cost.size(); ++i) {
    cost_sum += static_cast<long double>(cost.data()[i]);
  }
  const FlowQuantity demand = static_cast<FlowQuantity>(k) * nt;

  FlowNetwork net;
  for (int t = 0; t < nt; ++t) net.AddNode(k);
  for (int c = 0; c < nc; ++c) net.AddNode(0);
  const int first_control = nt;
  for (int t = 0; t < nt; ++t) {
    for (int c = 0; c < nc; ++c) {
      net.AddArc(t, first_control + c, 1, cost(t, c));
    }
  }

  const int num_levels = fb ? fb->num_levels() : 0;
  std::vector<FlowQuantity> target(static_cast<size_t>(num_levels), 0);
  if (fb) {
    // One unit of excess must outweigh any achievable total distance.
    const long double penalty = cost_sum + static_cast<long double>(cost_scale);
    if (penalty * static_cast<long double>(demand) + cost_sum > kCostCeiling) {
      throw NumericError("fine-balance penalty overflows the solver range; "
                         "use a smaller cost scale");
    }
    const CostValue lambda = static_cast<CostValue>(penalty);
    for (size_t r : dm.treated_rows) {
      target[static_cast<size_t>(fb->level_of[r])] += k;
    }
    const int first_level = net.num_nodes();
    for (int b = 0; b < num_levels; ++b) net.AddNode(0);
    const int overflow = net.AddNode(0);
    const int sink = net.AddNode(-demand);
    for (int c = 0; c < nc; ++c) {
      const int b = fb->level_of[dm.control_rows[static_cast<size_t>(c)]];
      net.AddArc(first_control + c, first_level + b, 1, 0);
    }
    for (int b = 0; b < num_levels; ++b) {
      net.AddArc(first_level + b, sink, target[static_cast<size_t>(b)], 0);
      net.AddArc(first_level + b, overflow, nc, lambda);
    }
    net.AddArc(overflow, sink, demand, 0);
  } else {
    if (cost_sum > kCostCeiling) {
      throw NumericError("total distance overflows the solver range; "
                         "use a smaller cost scale");
    }
    const int sink = net.AddNode(-demand);
    for (int c = 0; c < nc; ++c) net.AddArc(first_control + c, sink, 1, 0);
  }
  if (network_dump) *network_dump = net.DumpText();

  const FlowSolution sol = SolveMinCostFlow(net);
  if (!sol.feasible) {
    // Unreachable given the control-count precondition and dense arcs.
    throw InfeasibleError("stratum " + std::to_string(dm.stratum) +
                          ": matching network is infeasible");
  }

  std::vector<char> used(static_cast<size_t>(nc), 0);
  std::vector<FlowQuantity> matched(static_cast<size_t>(num_levels), 0);
  for (int t = 0; t < nt; ++t) {
    MatchedSet set;
    set.stratum = dm.stratum;
    set.treated_row = dm.treated_rows[static_cast<size_t>(t)];
    set.treated_id = dm.treated_ids[static_cast<size_t>(t)];
    for (int c = 0; c < nc; ++c) {
      if (sol.flow[static_cast<size_t>(t * nc + c)] == 0) continue;
      used[static_cast<size_t>(c)] = 1;
      set.control_rows.push_back(dm.control_rows[static_cast<size_t>(c)]);
      set.control_ids.push_back(dm.control_ids[static_cast<size_t>(c)]);
      out.total_distance += dm.d(t, c);
      out.total_cost += cost(t, c);
      if (fb) {
        ++matched[static_cast<size_t>(
            fb->level_of[dm.control_rows[static_cast<size_t>(c)]])];
      }
    }
    out.sets.push_back(std::move(set));
  }
  for (int c = 0; c < nc; ++c) {
    if (!used[static_cast<size_t>(c)]) {
      out.unmatched_controls.push_back(dm.control_rows[static_cast<size_t>(c)]);
    }
  }
  for (int b = 0; b < num_levels; ++b) {
    const FlowQuantity diff =
        matched[static_cast<size_t>(b)] - target[static_cast<size_t>(b)];
    out.deviation += static_cast<int>(diff < 0 ? -diff : diff);
    if (diff > 0) out.excess += static_cast<int>(diff);
  }
  return out;
}

RatioDecision ReduceRatio(std::size_t n_treated, std::size_t n_controls,
                          int k_target) {
  if (n_treated == 0) throw ValidationError("reduce_ratio needs treated units");
  RatioDecision r;
  const std::size_t fit = n_controls / n_treated;
  r.ratio = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(std::max(k_target, 1)), fit));
  r.ratio = std::max(r.ratio, 1);
  r.scarcity = n_controls < n_treated;
  return r;
}

StratumMatch SubsetMatch(const DistanceMatrix& dm, const FineBalanceSpec* fb,
                         CostValue cost_scale) {
  dm.validate();
  StratumMatch out;
  if (dm.num_controls() == 0) {
    out.unmatched_treated = dm.treated_rows;
    return out;
  }
  if (dm.num_controls() > dm.num_treated()) {
    throw ValidationError("subset matching needs at least as many treated as "
                          "controls");
  }
  // Controls play the treated role; each picks one distinct treated unit.
  const StratumMatch swapped =
      FixedRatioMatch(dm.transposed(), 1, fb, cost_scale);
  std::map<std::size_t, MatchedSet> by_treated;
  for (const MatchedSet& s : swapped.sets) {
    MatchedSet set;
    set.stratum = dm.stratum;
    set.treated_row = s.control_rows.front();
    set.treated_id = s.control_ids.front();
    set.control_rows = {s.treated_row};
    set.control_ids = {s.treated_id};
    by_treated.emplace(set.treated_row, std::move(set));
  }
  for (std::size_t row : dm.treated_rows) {
    auto it = by_treated.find(row);
    if (it != by_treated.end()) {
      out.sets.push_back(std::move(it->second));
    } else {
      out.unmatched_treated.push_back(row);
    }
  }
  out.deviation = swapped.deviation;
  out.excess = swapped.excess;
  out.total_distance = swapped.total_distance;
  out.total_cost = swapped.total_cost;
  return out;
}

TrimResult TrimScores(const PropensityResult& result,
                      const CovariateTable& table) {
  if (result.scores.size() != table.size()) {
    throw ValidationError("scores do not cover the table");
  }
  double max_control = -1.0;
  double min_treated = 2.0;
  for (size_t i = 0; i < table.size(); ++i) {
    if (table.subjects[i].z == 1) {
      min_treated = std::min(min_treated, result.scores[i]);
    } else {
      max_control = std::max(max_control, result.scores[i]);
    }
  }
  TrimResult out;
  out.keep.assign(table.size(), true);
  size_t kept_treated = 0;
  size_t kept_controls = 0;
  for (size_t i = 0; i < table.size(); ++i) {
    const Subject& s = table.subjects[i];
    if (s.z == 1 && result.scores[i] > max_control) {
      out.keep[i] = false;
      out.discarded_treated.push_back(
          {s.id, i, 0, DiscardReason::kScoreAboveControlMax});
    } else if (s.z == 0 && result.scores[i] < min_treated) {
      out.keep[i] = false;
      out.discarded_controls.push_back(
          {s.id, i, 0, DiscardReason::kScoreBelowTreatedMin});
    } else if (s.z == 1) {
      ++kept_treated;
    } else {
      ++kept_controls;
    }
  }
  if (kept_treated == 0 || kept_controls == 0) {
    throw InfeasibleError("score trimming leaves no " +
                          std::string(kept_treated == 0 ? "treated" : "control") +
                          " subjects");
  }
  return out;
}

DistanceSource RankMahalanobisSource(const CovariateTable& table,
                                     const PropensityResult& propensity,
                                     const MatchConfig& config) {
  auto metric = std::make_shared<const RankMahalanobis>(RankTransform(table));
  auto scores = std::make_shared<const std::vector<double>>(propensity.scores);
  const double sd = propensity.score_sd;
  const CovariateTable* tab = &table;
  return [metric, scores, sd, tab, config](int stratum,
                                           std::vector<std::size_t> treated,
                                           std::vector<std::size_t> controls) {
    DistanceMatrix dm = metric->Matrix(*tab, stratum, std::move(treated),
                                       std::move(controls));
    if (!config.use_caliper) return dm;
    const double penalty =
        config.penalty_scale ? *config.penalty_scale : DefaultPenaltyScale(dm);
    return ApplyCaliper(std::move(dm), *scores, sd, config.caliper_width,
                        penalty);
  };
}

MatchResult VariableRatioMatch(const CovariateTable& table,
                               const PropensityResult& propensity,
                               const StratumPartition& partition,
                               const MatchConfig& config,
                               const DistanceSource& distances,
                               const NetworkDumpSink& dump) {
  config.validate();
  const size_t n = table.size();
  if (propensity.scores.size() != n || partition.assignment.size() != n) {
    throw ValidationError("propensity or partition does not cover the table");
  }
  const FineBalanceSpec* fb =
      config.fine_balance ? &*config.fine_balance : nullptr;
  if (fb) fb->validate(n);

  const bool pair = config.ratio_mode == RatioMode::kPair;
  const int num_strata = pair ? 1 : partition.K;
  std::vector<int> stratum(n);
  for (size_t i = 0; i < n; ++i) stratum[i] = pair ? 1 : partition.assignment[i];

  MatchResult result;
  std::vector<bool> active(n, true);

  auto counts = [&](int k) {
    size_t t = 0;
    size_t c = 0;
    for (size_t i = 0; i < n; ++i) {
      if (!active[i] || stratum[i] != k) continue;
      (table.subjects[i].z == 1 ? t : c) += 1;
    }
    return std::pair<size_t, size_t>{t, c};
  };
  auto first_scarce = [&]() -> int {
    for (int k = 1; k <= num_strata; ++k) {
      auto [t, c] = counts(k);
      if (t > 0 && c < t) return k;
    }
    return 0;
  };

  if (int k = first_scarce(); k != 0) {
    if (config.common_support == CommonSupportPolicy::kFail) {
      auto [t, c] = counts(k);
      throw InfeasibleError("stratum " + std::to_string(k) + " has " +
                            std::to_string(t) + " treated but only " +
                            std::to_string(c) + " controls");
    }
    if (config.common_support == CommonSupportPolicy::kTrimScores) {
      TrimResult trim = TrimScores(propensity, table);
      for (size_t i = 0; i < n; ++i) active[i] = trim.keep[i];
      for (Discard& d : trim.discarded_treated) {
        d.stratum = stratum[d.row];
        result.discarded_treated.push_back(d);
      }
      for (Discard& d : trim.discarded_controls) {
        d.stratum = stratum[d.row];
        result.discarded_controls.push_back(d);
      }
      result.trimmed = true;
    }
  }

  for (int k = 1; k <= num_strata; ++k) {
    std::vector<std::size_t> treated;
    std::vector<std::size_t> controls;
    for (size_t i = 0; i < n; ++i) {
      if (!active[i] || stratum[i] != k) continue;
      (table.subjects[i].z == 1 ? treated : controls).push_back(i);
    }
    if (treated.empty()) {
      for (size_t r : controls) {
        result.discarded_controls.push_back(
            {table.subjects[r].id, r, k, DiscardReason::kNoTreatedInStratum});
      }
      continue;
    }
    StratumSummary summary;
    summary.stratum = k;
    summary.n_treated = treated.size();
    summary.n_controls = controls.size();
    summary.target_ratio = pair ? 1 : std::max(k, config.alpha);

    if (controls.empty()) {
      for (size_t r : treated) {
        result.discarded_treated.push_back(
            {table.subjects[r].id, r, k, DiscardReason::kNoControlsInStratum});
      }
      summary.scarcity = true;
      result.strata.push_back(summary);
      continue;
    }

    const RatioDecision ratio =
        ReduceRatio(treated.size(), controls.size(), summary.target_ratio);
    summary.ratio = ratio.ratio;
    summary.scarcity = ratio.scarcity;
    const DistanceMatrix dm = distances(k, treated, controls);

    StratumMatch m;
    if (ratio.scarcity) {
      // Reached only under the subset policy, or when trimming did not
      // restore enough controls.
      m = SubsetMatch(dm, fb, config.cost_scale);
      summary.subset_matched = true;
      for (size_t r : m.unmatched_treated) {
        result.discarded_treated.push_back(
            {table.subjects[r].id, r, k, DiscardReason::kNoCommonSupport});
      }
    } else {
      std::string text;
      m = FixedRatioMatch(dm, ratio.ratio, fb, config.cost_scale,
                          dump ? &text : nullptr);
      if (dump) dump(k, text);
      for (size_t r : m.unmatched_controls) {
        result.discarded_controls.push_back(
            {table.subjects[r].id, r, k, DiscardReason::kUnmatched});
      }
    }
    summary.n_sets = m.sets.size();
    summary.deviation = m.deviation;
    summary.total_distance = m.total_distance;
    result.strata.push_back(summary);
    for (MatchedSet& s : m.sets) result.sets.push_back(std::move(s));
  }

  std::stable_sort(result.sets.begin(), result.sets.end(),
                   [](const MatchedSet& a, const MatchedSet& b) {
                     if (a.stratum != b.stratum) return a.stratum < b.stratum;
                     return a.treated_row < b.treated_row;
                   });
  auto by_row = [](const Discard& a, const Discard& b) { return a.row < b.row; };
  std::stable_sort(result.discarded_treated.begin(),
                   result.discarded_treated.end(), by_row);
  std::stable_sort(result.discarded_controls.begin(),
                   result.discarded_controls.end(), by_row);
  return result;
}

}  // namespace vrmatch
