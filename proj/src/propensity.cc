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
#include "vrmatch/propensity.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "vrmatch/error.h"

namespace vrmatch {

namespace {

Eigen::MatrixXd DesignMatrix(const CovariateTable& table) {
  const Eigen::Index n = static_cast<Eigen::Index>(table.size());
  const Eigen::Index p = static_cast<Eigen::Index>(table.num_covariates());
  Eigen::MatrixXd x(n, p + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    const Subject& s = table.subjects[static_cast<size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) {
      x(i, j + 1) = s.values[static_cast<size_t>(j)];
    }
  }
  return x;
}

Eigen::VectorXd Outcome(const CovariateTable& table) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(table.size()));
  for (size_t i = 0; i < table.size(); ++i) z(i) = table.subjects[i].z;
  return z;
}

double Logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double Softplus(double eta) {
  if (eta > 0) return eta + std::log1p(std::exp(-eta));
  return std::log1p(std::exp(eta));
}

double LogLik(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
              const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += z(i) * eta(i) - Softplus(eta(i));
  }
  ll -= 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
  return ll;
}

double SampleSd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void FillDerived(PropensityResult& r) {
  r.entire_numbers.resize(r.scores.size());
  for (size_t i = 0; i < r.scores.size(); ++i) {
    r.entire_numbers[i] = EntireNumber(r.scores[i]);
  }
  r.score_sd = SampleSd(r.scores);
}

}  // namespace

PropensityResult FitPropensity(const CovariateTable& table,
                               const FitOptions& options) {
  if (options.ridge < 0) throw ValidationError("ridge must be nonnegative");
  for (const Subject& s : table.subjects) {
    if (table.imputed) break;
    for (bool m : s.missing_mask) {
      if (m) {
        throw ValidationError("propensity fit needs an imputed table (subject " +
                              s.id + " has a missing value)");
      }
    }
  }
  const Eigen::MatrixXd x_full = DesignMatrix(table);
  const Eigen::VectorXd z = Outcome(table);
  const Eigen::Index n = x_full.rows();

  // Constant covariates are confounded with the intercept; they are left out
  // of the fit and get a zero coefficient.
  std::vector<Eigen::Index> active = {0};
  for (Eigen::Index j = 1; j < x_full.cols(); ++j) {
    const double lo = x_full.col(j).minCoeff();
    const double hi = x_full.col(j).maxCoeff();
    if (hi > lo) active.push_back(j);
  }
  const Eigen::Index q = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd x(n, q);
  for (Eigen::Index a = 0; a < q; ++a) x.col(a) = x_full.col(active[a]);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  const double treated_fraction = z.mean();
  beta(0) = std::log(treated_fraction / (1.0 - treated_fraction));

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(q, options.ridge);
  penalty(0) = 0.0;

  PropensityResult result;
  bool converged = false;
  double ll = LogLik(x, z, beta, options.ridge);
  int iter = 0;
  for (; iter < options.max_iterations && !converged; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd mu(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = Logistic(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    const Eigen::VectorXd grad =
        x.transpose() * (z - mu) - penalty.cwiseProduct(beta);
    Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    info.diagonal() += penalty;
    Eigen::VectorXd step = info.completeOrthogonalDecomposition().solve(grad);

    // Step halving keeps the penalized likelihood nondecreasing.
    Eigen::VectorXd next = beta + step;
    double next_ll = LogLik(x, z, next, options.ridge);
    for (int h = 0; h < 30 && next_ll < ll - 1e-12 * std::abs(ll); ++h) {
      step *= 0.5;
      next = beta + step;
      next_ll = LogLik(x, z, next, options.ridge);
    }
    converged = step.cwiseAbs().maxCoeff() < options.tolerance;
    beta = next;
    ll = next_ll;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "propensity fit did not converge after " << options.max_iterations
        << " iterations";
    if (options.ridge == 0.0) {
      msg << "; the data may be separable, try a positive ridge value";
    }
    throw NumericError(msg.str());
  }

  result.iterations = iter;
  result.coefficients.assign(static_cast<size_t>(x_full.cols()), 0.0);
  for (Eigen::Index a = 0; a < q; ++a) {
    result.coefficients[static_cast<size_t>(active[a])] = beta(a);
  }
  const Eigen::VectorXd eta = x * beta;
  result.scores.resize(static_cast<size_t>(n));
  bool clamped = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    double e = Logistic(eta(i));
    if (e < kScoreClamp || e > 1.0 - kScoreClamp) clamped = true;
    result.scores[static_cast<size_t>(i)] =
        std::clamp(e, kScoreClamp, 1.0 - kScoreClamp);
  }
  if (clamped && options.ridge == 0.0) {
    result.warnings.push_back(
        "some fitted scores reached the clamp bound; possible separation");
  }
  FillDerived(result);
  return result;
}

PropensityResult PropensityFromScores(std::vector<double> scores) {
  PropensityResult result;
  result.external = true;
  for (double& s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("propensity scores must lie in [0,1]");
    }
    s = std::clamp(s, kScoreClamp, 1.0 - kScoreClamp);
  }
  result.scores = std::move(scores);
  FillDerived(result);
  return result;
}

std::vector<double> PenalizedGradient(const CovariateTable& table,
                                      std::span<const double> coefficients,
                                      double ridge) {
  const Eigen::MatrixXd x = DesignMatrix(table);
  const Eigen::VectorXd z = Outcome(table);
  if (static_cast<Eigen::Index>(coefficients.size()) != x.cols()) {
    throw ValidationError("coefficient vector has wrong length");
  }
  Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(
      coefficients.data(), static_cast<Eigen::Index>(coefficients.size()));
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    resid(i) = z(i) - Logistic(eta(i));
  }
  Eigen::VectorXd g = x.transpose() * resid;
  for (Eigen::Index j = 1; j < g.size(); ++j) g(j) -= ridge * beta(j);
  return std::vector<double>(g.data(), g.data() + g.size());
}

double PenalizedLogLikelihood(const CovariateTable& table,
                              std::span<const double> coefficients,
                              double ridge) {
  const Eigen::MatrixXd x = DesignMatrix(table);
  const Eigen::VectorXd z = Outcome(table);
  if (static_cast<Eigen::Index>(coefficients.size()) != x.cols()) {
    throw ValidationError("coefficient vector has wrong length");
  }
  Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(
      coefficients.data(), static_cast<Eigen::Index>(coefficients.size()));
  return LogLik(x, z, beta, ridge);
}

double EntireNumber(double score) {
  if (!(score > 0.0 && score < 1.0)) {
    throw ValidationError("entire number needs a score strictly inside (0,1)");
  }
  return (1.0 - score) / score;
}

int RatioRule(double nu, int beta) {
  if (beta < 1) throw ValidationError("beta must be at least 1");
  const double fl = std::floor(nu);
  if (fl >= static_cast<double>(beta)) return beta;
  return std::max(1, static_cast<int>(fl));
}

std::pair<double, double> StratumPartition::Interval(int k, int K) {
  if (k == 1) return {1.0 / 3.0, 1.0};
  if (k == K) return {0.0, 1.0 / (K + 1.0)};
  return {1.0 / (k + 2.0), 1.0 / (k + 1.0)};
}

int StratumPartition::StratumOf(double score, int K) {
  if (K < 2) throw ValidationError("K must be at least 2");
  if (score > 1.0 / 3.0) return 1;
  // S_k = (1/(k+2), 1/(k+1)]: the largest k with score <= 1/(k+1).
  for (int k = 2; k < K; ++k) {
    if (score > 1.0 / (k + 2.0)) return k;
  }
  return K;
}

std::vector<std::size_t> StratumPartition::members(int k) const {
  std::vector<std::size_t> out;
  for (size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == k) out.push_back(i);
  }
  return out;
}

StratumPartition Stratify(const PropensityResult& result, int K) {
  if (K < 2) throw ValidationError("K must be at least 2");
  StratumPartition part;
  part.K = K;
  part.assignment.reserve(result.scores.size());
  for (double s : result.scores) {
    part.assignment.push_back(StratumPartition::StratumOf(s, K));
  }
  return part;
}

}  // namespace vrmatch
