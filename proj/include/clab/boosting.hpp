#pragma once

// Multi-class gradient-boosted regression trees with a softmax
// cross-entropy objective. Each round fits one tree per class on the
// gradient/hessian of the current scores; leaves take second-order weights
// -G / (H + lambda) scaled by the learning rate. Split search runs over
// per-feature histograms of at most max_bins bins.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace clab {

struct BoostParams {
  int max_depth = 6;
  double learning_rate = 0.1;
  int n_rounds = 300;
  double min_child_weight = 1.0;
  double lambda = 1.0;          // L2 penalty on leaf weights
  double min_split_gain = 1e-6; // splits must reduce loss by more than this
  int max_bins = 256;
};

// Dense row-major feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // taken when x[feature] < threshold
  int right = -1;
  double value = 0.0;  // leaf output (already scaled by the learning rate)
  double gain = 0.0;   // loss reduction of the split
  double cover = 0.0;  // hessian sum
};

class RegressionTree {
 public:
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  std::size_t split_count() const;
};

class BoostedForest {
 public:
  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  BoostParams params;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  std::vector<std::vector<RegressionTree>> rounds;  // rounds[r][class]

  std::vector<double> predict_raw(std::span<const double> x) const;
  // Softmax of the raw scores. Throws DataError on wrong arity.
  std::vector<double> predict_proba(std::span<const double> x) const;
  std::size_t predict(std::span<const double> x) const;

  std::size_t split_count() const;

  // Mean loss reduction per split for each feature, normalized to sum 1.
  // Throws DataError for a model without splits.
  std::vector<double> gain_importance() const;

  nlohmann::json to_json() const;
  static BoostedForest from_json(const nlohmann::json& j);

  // Keeps only the first `n` rounds.
  BoostedForest truncated(std::size_t n) const;
};

// Rows are put in a canonical order (by features, then label) before
// fitting, so the model does not depend on input row order.
BoostedForest fit_boosted_forest(const FeatureMatrix& x, std::span<const int> y,
                                 std::size_t num_classes, const BoostParams& params,
                                 std::uint64_t seed = 0);

// Mean softmax cross-entropy.
double mean_log_loss(const BoostedForest& model, const FeatureMatrix& x, std::span<const int> y);

}  // namespace clab
