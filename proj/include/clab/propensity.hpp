#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace clab {

struct PropensityOptions {
  double ridge = 1e-6;  // L2 penalty on slopes (not the intercept), standardized scale
  double tol = 1e-8;
  int max_iter = 100;
};

// Binary (two levels) or multinomial logistic regression of treatment level
// on covariates. Covariates are standardized internally; the first level in
// `levels` is the reference category.
class PropensityModel {
 public:
  std::vector<int> levels;     // distinct treatment levels, ascending
  Eigen::VectorXd mean;        // per covariate
  Eigen::VectorXd scale;       // per covariate, 1 for constant columns
  Eigen::MatrixXd coef;        // (p + 1) x (levels - 1); row 0 is the intercept
  int iterations = 0;
  double log_likelihood = 0.0;

  bool binary() const { return levels.size() == 2; }
  // n x levels.size() class probabilities.
  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const;
  // log(p / (1 - p)) of the given level for every row.
  Eigen::VectorXd level_logit(const Eigen::MatrixXd& x, int level) const;
  std::size_t level_index(int level) const;
};

// Newton-Raphson with step halving. Throws DataError with fewer than two
// levels and ConvergenceError if the tolerance is not met.
PropensityModel fit_propensity(const Eigen::MatrixXd& x, std::span<const int> treatment,
                               const PropensityOptions& options = {});

// Area under the ROC curve of `score` for positives vs negatives, with ties
// counted as one half. Returns NaN if either group is empty.
double roc_auc(std::span<const double> score, std::span<const int> positive);

}  // namespace clab
