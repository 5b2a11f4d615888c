#include "clab/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "clab/error.hpp"

namespace clab {

namespace {

Eigen::MatrixXd design(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  for (Eigen::Index c = 0; c < x.cols(); ++c) z.col(c + 1) = (x.col(c).array() - mean(c)) / scale(c);
  return z;
}

// Row-wise softmax with an implicit zero score for the reference level.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& eta) {
  Eigen::MatrixXd p(eta.rows(), eta.cols() + 1);
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double mx = std::max(0.0, eta.row(i).maxCoeff());
    double total = std::exp(-mx);
    p(i, 0) = total;
    for (Eigen::Index k = 0; k < eta.cols(); ++k) {
      p(i, k + 1) = std::exp(eta(i, k) - mx);
      total += p(i, k + 1);
    }
    p.row(i) /= total;
  }
  return p;
}

double objective(const Eigen::MatrixXd& z, const Eigen::MatrixXd& coef, std::span<const int> y, double ridge) {
  const Eigen::MatrixXd eta = z * coef;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double mx = std::max(0.0, eta.row(i).maxCoeff());
    double lse = std::exp(-mx);
    for (Eigen::Index k = 0; k < eta.cols(); ++k) lse += std::exp(eta(i, k) - mx);
    lse = std::log(lse) + mx;
    const int yi = y[static_cast<std::size_t>(i)];
    ll += (yi == 0 ? 0.0 : eta(i, yi - 1)) - lse;
  }
  return ll - 0.5 * ridge * coef.bottomRows(coef.rows() - 1).squaredNorm();
}

}  // namespace

std::size_t PropensityModel::level_index(int level) const {
  const auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) throw DataError("treatment level " + std::to_string(level) + " not in model");
  return static_cast<std::size_t>(it - levels.begin());
}

Eigen::MatrixXd PropensityModel::probabilities(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw DataError("covariate count does not match propensity model");
  return softmax_rows(design(x, mean, scale) * coef);
}

Eigen::VectorXd PropensityModel::level_logit(const Eigen::MatrixXd& x, int level) const {
  const auto k = static_cast<Eigen::Index>(level_index(level));
  const Eigen::MatrixXd eta = design(x, mean, scale) * coef;
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    // log p_k - log(1 - p_k) computed on the score scale.
    const double own = k == 0 ? 0.0 : eta(i, k - 1);
    double mx = k == 0 ? -std::numeric_limits<double>::infinity() : 0.0;
    for (Eigen::Index j = 0; j < eta.cols(); ++j) {
      if (j + 1 != k) mx = std::max(mx, eta(i, j));
    }
    double rest = k == 0 ? 0.0 : std::exp(-mx);
    for (Eigen::Index j = 0; j < eta.cols(); ++j) {
      if (j + 1 != k) rest += std::exp(eta(i, j) - mx);
    }
    out(i) = own - (std::log(rest) + mx);
  }
  return out;
}

PropensityModel fit_propensity(const Eigen::MatrixXd& x, std::span<const int> treatment,
                               const PropensityOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != treatment.size()) throw DataError("treatment and covariate rows differ");
  PropensityModel m;
  m.levels.assign(treatment.begin(), treatment.end());
  std::sort(m.levels.begin(), m.levels.end());
  m.levels.erase(std::unique(m.levels.begin(), m.levels.end()), m.levels.end());
  if (m.levels.size() < 2) throw DataError("propensity model needs at least two treatment levels");

  const Eigen::Index n = x.rows(), p = x.cols();
  m.mean = x.colwise().mean().transpose();
  m.scale.resize(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const double sd = std::sqrt((x.col(c).array() - m.mean(c)).square().mean());
    m.scale(c) = sd > 1e-12 ? sd : 1.0;
  }
  const Eigen::MatrixXd z = design(x, m.mean, m.scale);
  std::vector<int> y(treatment.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(m.level_index(treatment[i]));

  const Eigen::Index q = p + 1;
  const Eigen::Index K = static_cast<Eigen::Index>(m.levels.size()) - 1;
  m.coef = Eigen::MatrixXd::Zero(q, K);
  double obj = objective(z, m.coef, y, options.ridge);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    m.iterations = iter;
    const Eigen::MatrixXd prob = softmax_rows(z * m.coef);
    Eigen::VectorXd grad(q * K);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(q * K, q * K);  // negative Hessian
    for (Eigen::Index a = 0; a < K; ++a) {
      Eigen::VectorXd resid(n);
      for (Eigen::Index i = 0; i < n; ++i) resid(i) = (y[static_cast<std::size_t>(i)] == a + 1 ? 1.0 : 0.0) - prob(i, a + 1);
      Eigen::VectorXd g = z.transpose() * resid;
      g.tail(p) -= options.ridge * m.coef.col(a).tail(p);
      grad.segment(a * q, q) = g;
      for (Eigen::Index b = a; b < K; ++b) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          w(i) = prob(i, a + 1) * ((a == b ? 1.0 : 0.0) - prob(i, b + 1));
        }
        const Eigen::MatrixXd block = z.transpose() * w.asDiagonal() * z;
        hess.block(a * q, b * q, q, q) = block;
        if (a != b) hess.block(b * q, a * q, q, q) = block.transpose();
      }
      for (Eigen::Index j = 1; j < q; ++j) hess(a * q + j, a * q + j) += options.ridge;
      hess(a * q, a * q) += 1e-12;
    }
    const Eigen::VectorXd step_flat = hess.ldlt().solve(grad);
    if (!step_flat.allFinite()) throw ConvergenceError("propensity Newton step is not finite", iter);
    Eigen::MatrixXd step(q, K);
    for (Eigen::Index a = 0; a < K; ++a) step.col(a) = step_flat.segment(a * q, q);

    double t = 1.0, next = obj;
    Eigen::MatrixXd candidate;
    for (int halving = 0; halving < 40; ++halving) {
      candidate = m.coef + t * step;
      next = objective(z, candidate, y, options.ridge);
      if (next >= obj - 1e-12 * std::abs(obj)) break;
      t *= 0.5;
    }
    const double change = std::abs(next - obj);
    const double max_step = (t * step).cwiseAbs().maxCoeff();
    if (next >= obj - 1e-12 * std::abs(obj)) {
      m.coef = candidate;
      obj = next;
    }
    if (max_step < options.tol || change < options.tol * (1.0 + std::abs(obj))) {
      m.log_likelihood = obj;
      return m;
    }
  }
  throw ConvergenceError("propensity model did not converge", options.max_iter);
}

double roc_auc(std::span<const double> score, std::span<const int> positive) {
  if (score.size() != positive.size()) throw DataError("score and label lengths differ");
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0, neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) {
        rank_sum += rank;
        ++pos;
      } else {
        ++neg;
      }
    }
    i = j + 1;
  }
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1) / 2.0) / (p * q);
}

}  // namespace clab
