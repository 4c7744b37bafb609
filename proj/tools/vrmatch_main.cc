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
// vrmatch: variable-ratio matching with near-fine balance.
//
//   vrmatch run --config study.json --out results/
//   vrmatch run --input data.csv --treatment z --fine-balance lunch,drug
//   vrmatch compare results_a/manifest.json results_b/manifest.json
//
// Exit codes: 0 success, 2 validation error (including bad flags), 3
// infeasible under the fail policy (or an empty match), 1 anything else.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "vrmatch/error.h"
#include "vrmatch/pipeline.h"

namespace {

int ExitCode(vrmatch::ErrorKind kind) {
  switch (kind) {
    case vrmatch::ErrorKind::kValidation:
      return 2;
    case vrmatch::ErrorKind::kInfeasible:
      return 3;
    case vrmatch::ErrorKind::kNumeric:
      return 1;
  }
  return 1;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vrmatch::ValidationError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable-ratio matching with near-fine balance"};
  app.require_subcommand(1);

  // run
  CLI::App* run = app.add_subcommand("run", "Build a matched sample");
  std::string config_path;
  std::string input, out, scores, distance_file, policy, id, treatment,
      delimiter, fine_balance, covariates, nominal, exclude;
  int K = 0;
  int draws = 0;
  double caliper = 0.0;
  double ridge = -1.0;
  double penalty_scale = 0.0;
  long long cost_scale = 0;
  unsigned long long seed = 0;
  bool pair = false;
  bool no_caliper = false;
  bool dump_networks = false;
  run->add_option("--config", config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  run->add_option("--input", input, "Delimited input table");
  run->add_option("--out", out, "Output directory");
  run->add_option("--K", K, "Maximum controls per treated unit");
  run->add_option("--caliper", caliper, "Caliper width in score SDs");
  run->add_flag("--no-caliper", no_caliper, "Disable the caliper penalty");
  run->add_option("--penalty-scale", penalty_scale, "Caliper penalty scale");
  run->add_option("--fine-balance", fine_balance,
                  "Fine-balance column(s), comma separated");
  run->add_option("--policy", policy, "Common support: subset, trim or fail")
      ->check(CLI::IsMember({"subset", "trim", "fail"}));
  run->add_option("--seed", seed, "Master seed for permutation tests");
  run->add_option("--draws", draws, "Permutation draws per covariate");
  run->add_option("--scores", scores, "Column of external propensity scores");
  run->add_option("--distance-file", distance_file,
                  "Treated x control distance blocks");
  run->add_option("--id", id, "Subject id column");
  run->add_option("--treatment", treatment, "Treatment column (0/1)");
  run->add_option("--covariates", covariates, "Covariate columns, comma separated");
  run->add_option("--nominal", nominal, "Nominal covariates, comma separated");
  run->add_option("--exclude", exclude, "Columns to ignore, comma separated");
  run->add_option("--delimiter", delimiter, "Field delimiter (or 'tab')");
  run->add_option("--ridge", ridge, "Ridge penalty for the score model");
  run->add_option("--cost-scale", cost_scale, "Distance integerization scale");
  run->add_flag("--pair", pair, "Pair-match the whole sample instead");
  run->add_flag("--dump-networks", dump_networks,
                "Write each stratum's flow network");

  // compare
  CLI::App* compare = app.add_subcommand("compare", "Compare two run manifests");
  std::string manifest_a, manifest_b;
  compare->add_option("manifest_a", manifest_a)->required();
  compare->add_option("manifest_b", manifest_b)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; bad flags are validation errors.
    return app.exit(e) == 0 ? 0 : 2;
  }

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  };

  try {
    if (*compare) {
      const vrmatch::RunComparison cmp = vrmatch::CompareRuns(
          ReadFile(manifest_a), ReadFile(manifest_b));
      std::cout << cmp.Render();
      return 0;
    }

    vrmatch::RunConfig config;
    if (!config_path.empty()) config = vrmatch::LoadRunConfig(config_path);
    if (run->count("--input")) config.input = input;
    if (run->count("--out")) config.out_dir = out;
    if (run->count("--K")) config.K = K;
    if (run->count("--caliper")) {
      config.caliper = caliper;
      config.use_caliper = true;
    }
    if (no_caliper) config.use_caliper = false;
    if (run->count("--penalty-scale")) config.penalty_scale = penalty_scale;
    if (run->count("--fine-balance")) config.fine_balance = split(fine_balance);
    if (run->count("--policy")) config.policy = vrmatch::ParsePolicy(policy);
    if (run->count("--seed")) config.seed = seed;
    if (run->count("--draws")) config.draws = draws;
    if (run->count("--scores")) config.score_column = scores;
    if (run->count("--distance-file")) config.distance_file = distance_file;
    if (run->count("--id")) config.id_column = id;
    if (run->count("--treatment")) config.treatment_column = treatment;
    if (run->count("--covariates")) config.covariates = split(covariates);
    if (run->count("--nominal")) config.nominal = split(nominal);
    if (run->count("--exclude")) config.exclude = split(exclude);
    if (run->count("--delimiter")) {
      if (delimiter == "tab" || delimiter == "\\t") {
        config.delimiter = '\t';
      } else if (delimiter.size() == 1) {
        config.delimiter = delimiter[0];
      } else {
        throw vrmatch::ValidationError("delimiter must be one character");
      }
    }
    if (run->count("--ridge")) config.ridge = ridge;
    if (run->count("--cost-scale")) config.cost_scale = cost_scale;
    if (pair) config.pair_match = true;
    if (dump_networks) config.dump_networks = true;

    const vrmatch::RunOutcome outcome = vrmatch::RunPipeline(config);
    std::cout << "matched sets: " << outcome.match.sets.size()
              << ", effective sample size: "
              << outcome.matched.effective_sample_size
              << ", discarded treated: "
              << outcome.match.discarded_treated.size()
              << ", fine-balance deviation: "
              << outcome.match.total_deviation() << "\n"
              << "artifacts written to " << config.out_dir.string() << "\n";
    return 0;
  } catch (const vrmatch::Error& e) {
    std::cerr << "vrmatch: " << e.what() << "\n";
    return ExitCode(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "vrmatch: " << e.what() << "\n";
    return 1;
  }
}
