#include "macc/consensus.hpp"

#include <cmath>
#include <sstream>

namespace macc::consensus {

ConsensusMatrix::ConsensusMatrix(Matrix weights) : weights_(std::move(weights)) {
  if (weights_.rows() != weights_.cols())
    throw std::invalid_argument("ConsensusMatrix: must be square");
  for (int i = 0; i < weights_.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < weights_.cols(); ++j) {
      if (weights_(i, j) < 0.0) throw std::invalid_argument("ConsensusMatrix: negative weight");
      sum += weights_(i, j);
    }
    if (std::fabs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("ConsensusMatrix: row " + std::to_string(i) +
                                  " sums to " + std::to_string(sum) + ", not 1");
  }
}

ConsensusMatrix ConsensusMatrix::uniform(int n) {
  Matrix m(n, n, 1.0 / n);
  // Make rows sum to exactly one.
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n - 1; ++j) sum += m(i, j);
    m(i, n - 1) = 1.0 - sum;
  }
  return ConsensusMatrix(std::move(m));
}

ConsensusMatrix ConsensusMatrix::identity(int n) { return ConsensusMatrix(Matrix::identity(n)); }

ConsensusMatrix ConsensusMatrix::gossip_pair(int n, int i, int j) {
  if (i == j) throw std::invalid_argument("gossip_pair: need two distinct agents");
  Matrix m = Matrix::identity(n);
  m(i, i) = 0.5;
  m(i, j) = 0.5;
  m(j, j) = 0.5;
  m(j, i) = 0.5;
  return ConsensusMatrix(std::move(m));
}

bool ConsensusMatrix::doubly_stochastic(double tol) const {
  for (int j = 0; j < weights_.cols(); ++j) {
    double sum = 0.0;
    for (int i = 0; i < weights_.rows(); ++i) sum += weights_(i, j);
    if (std::fabs(sum - 1.0) > tol) return false;
  }
  return true;
}

std::vector<Vec> apply_consensus(const std::vector<Vec>& params, const ConsensusMatrix& c) {
  const int n = static_cast<int>(params.size());
  if (n != c.n()) throw std::invalid_argument("apply_consensus: agent count mismatch");
  if (n == 0) return {};
  const std::size_t dim = params[0].size();
  for (const Vec& p : params)
    if (p.size() != dim) throw std::invalid_argument("apply_consensus: dimension mismatch");

  std::vector<Vec> out(n, Vec(dim, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double w = c.weights()(i, j);
      if (w == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) out[i][d] += w * params[j][d];
    }
  return out;
}

Disagreement disagreement(const std::vector<Vec>& params) {
  Disagreement res;
  if (params.empty()) return res;
  const std::size_t dim = params[0].size();
  res.mean.assign(dim, 0.0);
  for (const Vec& p : params) {
    if (p.size() != dim) throw std::invalid_argument("disagreement: dimension mismatch");
    for (std::size_t d = 0; d < dim; ++d) res.mean[d] += p[d];
  }
  for (double& x : res.mean) x /= static_cast<double>(params.size());
  double sq = 0.0;
  for (const Vec& p : params)
    for (std::size_t d = 0; d < dim; ++d) {
      double dev = p[d] - res.mean[d];
      sq += dev * dev;
    }
  res.norm = std::sqrt(sq);
  return res;
}

AssumptionReport validate_assumptions(ConsensusSampler& sampler, const StepSchedule& critic_schedule,
                                      const StepSchedule& actor_schedule,
                                      const exact::FeatureMap* features,
                                      const ValidateOptions& opts) {
  AssumptionReport report;
  const int n = sampler.n();
  Rng rng(opts.seed);

  // 4(i) + 4(ii): sample the process.
  Matrix mean_c(n, n, 0.0);
  Matrix mean_q(n, n, 0.0);  // E[C^T (I - 11^T/N) C]
  bool rows_ok = true;
  std::string row_detail;
  for (int t = 0; t < opts.n_samples; ++t) {
    ConsensusMatrix c = sampler.draw(rng);
    const Matrix& w = c.weights();
    for (int i = 0; i < n && rows_ok; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) sum += w(i, j);
      if (std::fabs(sum - 1.0) > opts.row_tolerance) {
        rows_ok = false;
        row_detail = "sample " + std::to_string(t) + " row " + std::to_string(i) + " is not stochastic";
      }
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) mean_c(i, j) += w(i, j);
    // C^T Q C with Q = I - 11^T/n: compute QC once, then C^T (QC).
    Matrix qc(n, n, 0.0);
    for (int j = 0; j < n; ++j) {
      double col_mean = 0.0;
      for (int i = 0; i < n; ++i) col_mean += w(i, j);
      col_mean /= n;
      for (int i = 0; i < n; ++i) qc(i, j) = w(i, j) - col_mean;
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int r = 0; r < n; ++r) s += w(r, i) * qc(r, j);
        mean_q(i, j) += s;
      }
  }
  for (double& x : mean_c.data()) x /= opts.n_samples;
  for (double& x : mean_q.data()) x /= opts.n_samples;

  bool cols_ok = true;
  std::string col_detail;
  for (int j = 0; j < n && cols_ok; ++j) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += mean_c(i, j);
    if (std::fabs(sum - 1.0) > opts.column_tolerance) {
      cols_ok = false;
      col_detail = "column " + std::to_string(j) + " of the mean matrix sums to " + std::to_string(sum);
    }
  }
  report.stochasticity.name = "assumption 4(i): row-stochastic samples, column-stochastic mean";
  report.stochasticity.pass = rows_ok && cols_ok;
  report.stochasticity.detail = !rows_ok ? row_detail : (!cols_ok ? col_detail : "ok");

  report.spectral_quantity = spectral_norm_symmetric(mean_q);
  report.spectral.name = "assumption 4(ii): disagreement contraction";
  report.spectral.pass = report.spectral_quantity < 1.0 - opts.spectral_margin;
  {
    std::ostringstream ss;
    ss << "spectral norm of E[C^T (I - 11^T/N) C] = " << report.spectral_quantity;
    report.spectral.detail = ss.str();
  }

  // Assumption 3, decided analytically from the exponents.
  report.stepsizes.name = "assumption 3: stepsize conditions";
  bool critic_ok = critic_schedule.sums_diverge() && critic_schedule.square_sums_converge();
  bool actor_ok = actor_schedule.sums_diverge() && actor_schedule.square_sums_converge();
  bool ratio_ok = actor_schedule.kind == ScheduleKind::kPowerDecay &&
                  critic_schedule.kind == ScheduleKind::kPowerDecay &&
                  actor_schedule.exponent > critic_schedule.exponent;
  report.stepsizes.pass = critic_ok && actor_ok && ratio_ok;
  if (!critic_ok)
    report.stepsizes.detail = "critic schedule must be a power decay with exponent in (1/2, 1]";
  else if (!actor_ok)
    report.stepsizes.detail = "actor schedule must be a power decay with exponent in (1/2, 1]";
  else if (!ratio_ok)
    report.stepsizes.detail = "actor stepsizes must decay faster than critic stepsizes";
  else
    report.stepsizes.detail = "ok";

  report.features_full_rank.name = "assumption 2: features have full column rank";
  if (features == nullptr) {
    report.features_full_rank.pass = true;
    report.features_full_rank.detail = "no features supplied; skipped";
  } else if (features->full_column_rank()) {
    report.features_full_rank.pass = true;
    report.features_full_rank.detail = "rank " + std::to_string(features->effective_rank());
  } else {
    report.features_full_rank.pass = false;
    report.features_full_rank.detail =
        "rejected, assumption 2 violated: effective rank " +
        std::to_string(features->effective_rank()) + " < " + std::to_string(features->k());
  }
  return report;
}

std::string AssumptionReport::summary() const {
  std::ostringstream out;
  auto line = [&](const AssumptionCheck& c) {
    out << (c.pass ? "[pass] " : "[FAIL] ") << c.name << " - " << c.detail << '\n';
  };
  line(stochasticity);
  line(spectral);
  line(stepsizes);
  line(features_full_rank);
  out << (all_pass() ? "all assumptions hold" : "assumption violation detected");
  return out.str();
}

}  // namespace macc::consensus
