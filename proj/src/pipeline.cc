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
#include "vrmatch/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vrmatch/error.h"

namespace vrmatch {

namespace {

using nlohmann::json;

std::string Fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string Num(double v) { return Fmt("%.10g", v); }

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n\t") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool Contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> StringList(const json& j, const char* key) {
  if (!j.is_array()) {
    throw ValidationError(std::string("config key '") + key +
                          "' must be a list of strings");
  }
  std::vector<std::string> out;
  for (const auto& e : j) out.push_back(e.get<std::string>());
  return out;
}

std::filesystem::path Resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

json ConfigEcho(const RunConfig& c) {
  json j;
  j["input"] = c.input.filename().string();
  j["delimiter"] = std::string(1, c.delimiter == '\t' ? 't' : c.delimiter);
  j["id"] = c.id_column;
  j["treatment"] = c.treatment_column;
  j["covariates"] = c.covariates;
  j["nominal"] = c.nominal;
  j["exclude"] = c.exclude;
  j["ridge"] = c.ridge;
  j["scores"] = c.score_column;
  j["K"] = c.K;
  j["mode"] = c.pair_match ? "pair" : "entire_number";
  j["caliper"] = c.use_caliper ? json(c.caliper) : json(nullptr);
  j["penalty_scale"] = c.penalty_scale ? json(*c.penalty_scale) : json(nullptr);
  j["fine_balance"] = c.fine_balance;
  j["policy"] = std::string(PolicyName(c.policy));
  j["cost_scale"] = c.cost_scale;
  j["distance_file"] = c.distance_file.empty()
                           ? json(nullptr)
                           : json(c.distance_file.filename().string());
  j["seed"] = c.seed;
  j["draws"] = c.draws;
  return j;
}

std::string BalanceCsv(const BalanceReport& r) {
  std::ostringstream out;
  out << "covariate,mean_control,mean_treated,std_diff,p_value,zero_variance\n";
  for (const BalanceRow& row : r.rows) {
    out << CsvField(row.covariate) << "," << Num(row.mean_control) << ","
        << Num(row.mean_treated) << "," << Num(row.std_diff) << ","
        << Num(row.p_value) << "," << (row.zero_variance ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string BalanceText(const BalanceReport& before,
                        const BalanceReport& after) {
  size_t width = 9;
  for (const BalanceRow& row : before.rows) {
    width = std::max(width, row.covariate.size());
  }
  std::ostringstream out;
  char buf[256];
  auto line = [&](const std::string& name, const std::string& rest) {
    out << name << std::string(width - std::min(width, name.size()) + 2, ' ')
        << rest << "\n";
  };
  std::snprintf(buf, sizeof(buf), "%9s %9s %9s %7s | %9s %9s %9s %7s",
                "Mean C", "Mean T", "Std Diff", "P-val", "Mean C", "Mean T",
                "Std Diff", "P-val");
  line("", std::string(19, ' ') + "unmatched" + std::string(29, ' ') +
               "matched");
  line("covariate", buf);
  for (size_t j = 0; j < before.rows.size(); ++j) {
    const BalanceRow& a = before.rows[j];
    const BalanceRow& b = after.rows[j];
    std::snprintf(buf, sizeof(buf),
                  "%9.3f %9.3f %9.3f %7.3f | %9.3f %9.3f %9.3f %7.3f",
                  a.mean_control, a.mean_treated, a.std_diff, a.p_value,
                  b.mean_control, b.mean_treated, b.std_diff, b.p_value);
    line(a.covariate, buf);
  }
  out << "\n";
  std::snprintf(buf, sizeof(buf), "%.4f", after.effective_sample_size);
  out << "effective sample size (matched, pair-equivalents): " << buf << "\n";
  out << "|std diff| >= 0.10: unmatched " << before.count_at_least(0.1)
      << ", matched " << after.count_at_least(0.1) << "\n";
  out << "|std diff| >= 0.20: unmatched " << before.count_at_least(0.2)
      << ", matched " << after.count_at_least(0.2) << "\n";
  out << "p-values: " << after.test << ", " << after.draws
      << " draws, seed " << after.seed << "\n";
  return out.str();
}

std::string QqText(const BalanceReport& r) {
  std::vector<double> p;
  for (const BalanceRow& row : r.rows) p.push_back(row.p_value);
  std::ostringstream out;
  out << "uniform_quantile p_value\n";
  for (const auto& [q, v] : QqUniform(p)) out << Num(q) << " " << Num(v) << "\n";
  return out.str();
}

json BalanceJson(const BalanceReport& r) {
  json rows = json::array();
  for (const BalanceRow& row : r.rows) {
    rows.push_back({{"covariate", row.covariate},
                    {"mean_control", row.mean_control},
                    {"mean_treated", row.mean_treated},
                    {"std_diff", row.std_diff},
                    {"p_value", row.p_value},
                    {"zero_variance", row.zero_variance}});
  }
  return rows;
}

json DiscardJson(const std::vector<Discard>& v) {
  json out = json::array();
  for (const Discard& d : v) {
    out.push_back({{"id", d.id},
                   {"stratum", d.stratum},
                   {"reason", std::string(DiscardReasonCode(d.reason))}});
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (input.empty()) throw ValidationError("no input file given");
  if (treatment_column.empty()) throw ValidationError("no treatment column");
  if (!pair_match && K < 2) throw ValidationError("K must be at least 2");
  if (use_caliper && !(caliper > 0.0)) {
    throw ValidationError("caliper multiplier must be positive");
  }
  if (penalty_scale && !(*penalty_scale > 0.0)) {
    throw ValidationError("penalty scale must be positive");
  }
  if (ridge < 0.0) throw ValidationError("ridge must be nonnegative");
  if (draws < 1) throw ValidationError("draws must be positive");
  if (cost_scale <= 0) throw ValidationError("cost scale must be positive");
  for (const auto& n : nominal) {
    if (!covariates.empty() && !Contains(covariates, n)) {
      throw ValidationError("nominal column '" + n + "' is not a covariate");
    }
  }
}

void ApplyConfigJson(const std::string& json_text,
                     const std::filesystem::path& base_dir, RunConfig& c) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = {
      "input", "delimiter", "id", "treatment", "covariates", "nominal",
      "exclude", "ridge", "scores", "K", "mode", "caliper", "penalty_scale",
      "fine_balance", "policy", "cost_scale", "distance_file", "out", "seed",
      "draws", "dump_networks"};
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) {
        throw ValidationError("unknown config key '" + key + "'");
      }
      if (key == "input") c.input = Resolve(base_dir, value.get<std::string>());
      if (key == "delimiter") {
        const std::string d = value.get<std::string>();
        if (d == "tab" || d == "\t" || d == "t") {
          c.delimiter = '\t';
        } else if (d.size() == 1) {
          c.delimiter = d[0];
        } else {
          throw ValidationError("delimiter must be one character or 'tab'");
        }
      }
      if (key == "id") c.id_column = value.get<std::string>();
      if (key == "treatment") c.treatment_column = value.get<std::string>();
      if (key == "covariates") c.covariates = StringList(value, "covariates");
      if (key == "nominal") c.nominal = StringList(value, "nominal");
      if (key == "exclude") c.exclude = StringList(value, "exclude");
      if (key == "ridge") c.ridge = value.get<double>();
      if (key == "scores") c.score_column = value.get<std::string>();
      if (key == "K") c.K = value.get<int>();
      if (key == "mode") {
        const std::string m = value.get<std::string>();
        if (m != "pair" && m != "entire_number") {
          throw ValidationError("mode must be 'pair' or 'entire_number'");
        }
        c.pair_match = m == "pair";
      }
      if (key == "caliper") {
        if (value.is_null()) {
          c.use_caliper = false;
        } else {
          c.use_caliper = true;
          c.caliper = value.get<double>();
        }
      }
      if (key == "penalty_scale") {
        if (value.is_null()) {
          c.penalty_scale.reset();
        } else {
          c.penalty_scale = value.get<double>();
        }
      }
      if (key == "fine_balance") {
        c.fine_balance = value.is_string()
                             ? std::vector<std::string>{value.get<std::string>()}
                             : StringList(value, "fine_balance");
      }
      if (key == "policy") c.policy = ParsePolicy(value.get<std::string>());
      if (key == "cost_scale") c.cost_scale = value.get<std::int64_t>();
      if (key == "distance_file") {
        c.distance_file = Resolve(base_dir, value.get<std::string>());
      }
      if (key == "out") c.out_dir = Resolve(base_dir, value.get<std::string>());
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      if (key == "draws") c.draws = value.get<int>();
      if (key == "dump_networks") c.dump_networks = value.get<bool>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  ApplyConfigJson(ss.str(), path.parent_path(), c);
  return c;
}

RunOutcome ComputeRun(const RunConfig& config) {
  config.validate();

  Schema schema;
  schema.id_column = config.id_column;
  schema.treatment_column = config.treatment_column;
  schema.covariates = config.covariates;
  schema.nominal = config.nominal;
  schema.exclude = config.exclude;
  schema.score_column = config.score_column;
  schema.delimiter = config.delimiter;
  for (const auto& fb : config.fine_balance) {
    const bool is_covariate = config.covariates.empty()
                                  ? !Contains(config.exclude, fb)
                                  : Contains(config.covariates, fb);
    if (!is_covariate) schema.label_only.push_back(fb);
  }

  std::optional<DistanceTable> distance_table;
  if (!config.distance_file.empty()) {
    distance_table = DistanceTable::Load(config.distance_file, config.delimiter);
  }

  const CovariateTable raw = LoadTable(config.input, schema);
  const CovariateTable table = ImputeWithIndicators(raw);

  MatchConfig mc;
  mc.K = config.pair_match ? std::max(config.K, 2) : config.K;
  mc.ratio_mode = config.pair_match ? RatioMode::kPair : RatioMode::kEntireNumber;
  mc.common_support = config.policy;
  mc.cost_scale = config.cost_scale;
  mc.use_caliper = config.use_caliper;
  mc.caliper_width = config.caliper;
  mc.penalty_scale = config.penalty_scale;
  if (!config.fine_balance.empty()) {
    mc.fine_balance = Interact(table, config.fine_balance);
  }
  mc.validate();

  const PropensityResult propensity =
      table.external_scores
          ? PropensityFromScores(*table.external_scores)
          : FitPropensity(table, FitOptions{.ridge = config.ridge});
  const StratumPartition partition = Stratify(propensity, mc.K);

  DistanceSource source;
  if (distance_table) {
    const DistanceTable* dt = &*distance_table;
    const CovariateTable* tab = &table;
    source = [dt, tab](int stratum, std::vector<std::size_t> t,
                       std::vector<std::size_t> c) {
      return dt->Matrix(*tab, stratum, std::move(t), std::move(c));
    };
  } else {
    source = RankMahalanobisSource(table, propensity, mc);
  }

  RunOutcome outcome;
  NetworkDumpSink dump;
  if (config.dump_networks) {
    dump = [&outcome](int stratum, const std::string& text) {
      outcome.artifacts["networks/stratum_" + std::to_string(stratum) +
                        ".txt"] = text;
    };
  }
  outcome.match =
      VariableRatioMatch(table, propensity, partition, mc, source, dump);
  if (outcome.match.sets.empty()) {
    throw InfeasibleError("the match is empty; no treated unit could be matched");
  }

  const DiagnosticsOptions diag{.draws = config.draws, .seed = config.seed};
  outcome.unmatched = UnmatchedBalance(table, diag);
  outcome.matched = MatchedBalance(outcome.match, table, diag);

  // Matches: one row per (set, control).
  {
    std::ostringstream out;
    out << "set_id,stratum,treated_id,control_id,k_i\n";
    for (size_t s = 0; s < outcome.match.sets.size(); ++s) {
      const MatchedSet& set = outcome.match.sets[s];
      for (const auto& c : set.control_ids) {
        out << (s + 1) << "," << set.stratum << "," << CsvField(set.treated_id)
            << "," << CsvField(c) << "," << set.k() << "\n";
      }
    }
    outcome.artifacts["matches.csv"] = out.str();
  }
  {
    std::ostringstream out;
    out << "id,group,stratum,reason\n";
    for (const Discard& d : outcome.match.discarded_treated) {
      out << CsvField(d.id) << ",treated," << d.stratum << ","
          << DiscardReasonCode(d.reason) << "\n";
    }
    for (const Discard& d : outcome.match.discarded_controls) {
      out << CsvField(d.id) << ",control," << d.stratum << ","
          << DiscardReasonCode(d.reason) << "\n";
    }
    outcome.artifacts["discards.csv"] = out.str();
  }
  outcome.artifacts["balance_unmatched.csv"] = BalanceCsv(outcome.unmatched);
  outcome.artifacts["balance_matched.csv"] = BalanceCsv(outcome.matched);
  outcome.artifacts["balance.txt"] =
      BalanceText(outcome.unmatched, outcome.matched);
  outcome.artifacts["qq_unmatched.txt"] = QqText(outcome.unmatched);
  outcome.artifacts["qq_matched.txt"] = QqText(outcome.matched);

  json manifest;
  manifest["tool"] = "vrmatch";
  manifest["config"] = ConfigEcho(config);
  manifest["seed"] = config.seed;
  manifest["subjects"] = {{"treated", table.num_treated()},
                          {"controls", table.num_controls()}};
  manifest["propensity"] = {{"external", propensity.external},
                            {"iterations", propensity.iterations},
                            {"score_sd", propensity.score_sd},
                            {"coefficients", propensity.coefficients},
                            {"warnings", propensity.warnings}};
  json strata = json::array();
  for (const StratumSummary& s : outcome.match.strata) {
    strata.push_back({{"stratum", s.stratum},
                      {"n_treated", s.n_treated},
                      {"n_controls", s.n_controls},
                      {"target_ratio", s.target_ratio},
                      {"ratio", s.ratio},
                      {"scarcity", s.scarcity},
                      {"subset_matched", s.subset_matched},
                      {"sets", s.n_sets},
                      {"deviation", s.deviation},
                      {"total_distance", s.total_distance}});
  }
  manifest["strata"] = strata;
  manifest["fine_balance"] =
      mc.fine_balance ? json{{"variable", mc.fine_balance->variable},
                             {"levels", mc.fine_balance->levels}}
                      : json(nullptr);
  manifest["deviation_total"] = outcome.match.total_deviation();
  manifest["trimmed"] = outcome.match.trimmed;
  std::map<std::string, int> sizes;
  for (const MatchedSet& s : outcome.match.sets) sizes[std::to_string(s.k())]++;
  manifest["set_sizes"] = sizes;
  manifest["sets"] = outcome.match.sets.size();
  manifest["effective_sample_size"] = outcome.matched.effective_sample_size;
  manifest["discarded_treated"] = DiscardJson(outcome.match.discarded_treated);
  manifest["discarded_controls"] = DiscardJson(outcome.match.discarded_controls);
  manifest["balance"] = {{"unmatched", BalanceJson(outcome.unmatched)},
                         {"matched", BalanceJson(outcome.matched)}};
  manifest["p_value_test"] = {{"matched", outcome.matched.test},
                              {"unmatched", outcome.unmatched.test},
                              {"draws", config.draws}};
  std::vector<std::string> names;
  for (const auto& [name, _] : outcome.artifacts) names.push_back(name);
  names.push_back("manifest.json");
  manifest["artifacts"] = names;
  outcome.artifacts["manifest.json"] = manifest.dump(2) + "\n";
  return outcome;
}

RunOutcome RunPipeline(const RunConfig& config) {
  if (config.out_dir.empty()) throw ValidationError("no output directory given");
  RunOutcome outcome = ComputeRun(config);
  std::vector<std::filesystem::path> written;
  try {
    std::filesystem::create_directories(config.out_dir);
    for (const auto& [name, content] : outcome.artifacts) {
      const std::filesystem::path path = config.out_dir / name;
      std::filesystem::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << content;
      out.close();
      if (!out) throw ValidationError("cannot write '" + path.string() + "'");
      written.push_back(path);
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) std::filesystem::remove(p, ec);
    throw;
  }
  return outcome;
}

std::string RunComparison::Render() const {
  std::ostringstream out;
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.covariate.size());
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%10s %10s %10s", "std_diff_a", "std_diff_b",
                "delta");
  out << "covariate" << std::string(width - 9 + 2, ' ') << buf << "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%10.4f %10.4f %10.4f", r.std_diff_a,
                  r.std_diff_b, r.delta());
    out << r.covariate << std::string(width - r.covariate.size() + 2, ' ')
        << buf << "\n";
  }
  out << "\n                        run a    run b\n";
  std::snprintf(buf, sizeof(buf), "|std diff| >= 0.10  %8zu %8zu\n",
                a_at_least_010, b_at_least_010);
  out << buf;
  std::snprintf(buf, sizeof(buf), "|std diff| >= 0.20  %8zu %8zu\n",
                a_at_least_020, b_at_least_020);
  out << buf;
  std::snprintf(buf, sizeof(buf), "effective size      %8.2f %8.2f\n", ess_a,
                ess_b);
  out << buf;
  std::snprintf(buf, sizeof(buf), "discarded treated   %8zu %8zu\n",
                discarded_treated_a, discarded_treated_b);
  out << buf;
  std::snprintf(buf, sizeof(buf), "discarded controls  %8zu %8zu\n",
                discarded_controls_a, discarded_controls_b);
  out << buf;
  return out.str();
}

RunComparison CompareRuns(const std::string& manifest_a,
                          const std::string& manifest_b) {
  json a;
  json b;
  try {
    a = json::parse(manifest_a);
    b = json::parse(manifest_b);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  RunComparison cmp;
  try {
    std::map<std::string, double> sd_b;
    for (const auto& row : b.at("balance").at("matched")) {
      sd_b[row.at("covariate").get<std::string>()] =
          row.at("std_diff").get<double>();
    }
    std::set<std::string> names_a;
    for (const auto& row : a.at("balance").at("matched")) {
      const std::string name = row.at("covariate").get<std::string>();
      names_a.insert(name);
      auto it = sd_b.find(name);
      if (it == sd_b.end()) continue;
      cmp.rows.push_back({name, row.at("std_diff").get<double>(), it->second});
    }
    const bool same = names_a.size() == sd_b.size() &&
                      cmp.rows.size() == names_a.size();
    if (!same) {
      cmp.warnings.push_back(
          cmp.rows.empty()
              ? "runs share no covariates"
              : "covariate sets differ; comparing the intersection only");
    }
    for (const auto& r : cmp.rows) {
      if (std::abs(r.std_diff_a) >= 0.1) ++cmp.a_at_least_010;
      if (std::abs(r.std_diff_a) >= 0.2) ++cmp.a_at_least_020;
      if (std::abs(r.std_diff_b) >= 0.1) ++cmp.b_at_least_010;
      if (std::abs(r.std_diff_b) >= 0.2) ++cmp.b_at_least_020;
    }
    cmp.ess_a = a.at("effective_sample_size").get<double>();
    cmp.ess_b = b.at("effective_sample_size").get<double>();
    cmp.discarded_treated_a = a.at("discarded_treated").size();
    cmp.discarded_treated_b = b.at("discarded_treated").size();
    cmp.discarded_controls_a = a.at("discarded_controls").size();
    cmp.discarded_controls_b = b.at("discarded_controls").size();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("not a vrmatch manifest: ") + e.what());
  }
  return cmp;
}

}  // namespace vrmatch
