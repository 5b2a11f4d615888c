#include "clab/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "clab/error.hpp"

namespace clab {

double RegressionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

std::size_t RegressionTree::split_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature >= 0; }));
}

std::vector<double> BoostedForest::predict_raw(std::span<const double> x) const {
  if (x.size() != num_features) {
    throw DataError("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                    std::to_string(num_features));
  }
  std::vector<double> score(num_classes, 0.0);
  for (const auto& round : rounds) {
    for (std::size_t k = 0; k < num_classes; ++k) score[k] += round[k].predict(x);
  }
  return score;
}

namespace {

void softmax_inplace(std::span<double> s) {
  const double mx = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  for (double& v : s) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : s) v /= total;
}

}  // namespace

std::vector<double> BoostedForest::predict_proba(std::span<const double> x) const {
  auto s = predict_raw(x);
  softmax_inplace(s);
  return s;
}

std::size_t BoostedForest::predict(std::span<const double> x) const {
  const auto p = predict_raw(x);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::size_t BoostedForest::split_count() const {
  std::size_t n = 0;
  for (const auto& round : rounds) {
    for (const auto& t : round) n += t.split_count();
  }
  return n;
}

std::vector<double> BoostedForest::gain_importance() const {
  std::vector<double> total(num_features, 0.0);
  std::vector<std::size_t> count(num_features, 0);
  for (const auto& round : rounds) {
    for (const auto& tree : round) {
      for (const auto& n : tree.nodes) {
        if (n.feature < 0) continue;
        total[static_cast<std::size_t>(n.feature)] += n.gain;
        ++count[static_cast<std::size_t>(n.feature)];
      }
    }
  }
  std::vector<double> mean(num_features, 0.0);
  double sum = 0.0;
  for (std::size_t f = 0; f < num_features; ++f) {
    if (count[f] > 0) mean[f] = total[f] / static_cast<double>(count[f]);
    sum += mean[f];
  }
  if (!(sum > 0.0)) throw DataError("model has no splits; GAIN importance is undefined");
  for (double& v : mean) v /= sum;
  return mean;
}

BoostedForest BoostedForest::truncated(std::size_t n) const {
  BoostedForest out = *this;
  if (out.rounds.size() > n) out.rounds.resize(n);
  return out;
}

namespace {

nlohmann::json node_to_json(const RegressionTree& tree, int index) {
  const auto& n = tree.nodes[static_cast<std::size_t>(index)];
  if (n.feature < 0) return {{"leaf", n.value}, {"cover", n.cover}};
  return {{"split", n.feature},
          {"threshold", n.threshold},
          {"gain", n.gain},
          {"cover", n.cover},
          {"yes", node_to_json(tree, n.left)},
          {"no", node_to_json(tree, n.right)}};
}

int node_from_json(const nlohmann::json& j, RegressionTree& tree) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    tree.nodes.back().value = j.at("leaf").get<double>();
    tree.nodes.back().cover = j.value("cover", 0.0);
    return index;
  }
  TreeNode n;
  n.feature = j.at("split").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.gain = j.value("gain", 0.0);
  n.cover = j.value("cover", 0.0);
  n.left = node_from_json(j.at("yes"), tree);
  n.right = node_from_json(j.at("no"), tree);
  tree.nodes[static_cast<std::size_t>(index)] = n;
  return index;
}

}  // namespace

nlohmann::json BoostedForest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& round : rounds) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& t : round) r.push_back(node_to_json(t, 0));
    trees.push_back(std::move(r));
  }
  return {{"format", "clab-boosted-forest"},
          {"version", 1},
          {"num_classes", num_classes},
          {"num_features", num_features},
          {"class_names", class_names},
          {"feature_names", feature_names},
          {"seed", seed},
          {"params",
           {{"max_depth", params.max_depth},
            {"learning_rate", params.learning_rate},
            {"n_rounds", params.n_rounds},
            {"min_child_weight", params.min_child_weight},
            {"lambda", params.lambda},
            {"min_split_gain", params.min_split_gain},
            {"max_bins", params.max_bins}}},
          {"trees", trees}};
}

BoostedForest BoostedForest::from_json(const nlohmann::json& j) {
  BoostedForest m;
  try {
    if (j.at("format").get<std::string>() != "clab-boosted-forest") throw DataError("not a model file");
    if (j.at("version").get<int>() != 1) throw DataError("unsupported model version");
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.num_features = j.at("num_features").get<std::size_t>();
    m.class_names = j.value("class_names", std::vector<std::string>{});
    m.feature_names = j.value("feature_names", std::vector<std::string>{});
    m.seed = j.value("seed", std::uint64_t{0});
    const auto& p = j.at("params");
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.learning_rate = p.at("learning_rate").get<double>();
    m.params.n_rounds = p.at("n_rounds").get<int>();
    m.params.min_child_weight = p.at("min_child_weight").get<double>();
    m.params.lambda = p.at("lambda").get<double>();
    m.params.min_split_gain = p.at("min_split_gain").get<double>();
    m.params.max_bins = p.at("max_bins").get<int>();
    for (const auto& r : j.at("trees")) {
      std::vector<RegressionTree> round;
      for (const auto& t : r) {
        RegressionTree tree;
        node_from_json(t, tree);
        for (const auto& n : tree.nodes) {
          if (n.feature >= static_cast<int>(m.num_features)) throw DataError("split feature out of range");
        }
        round.push_back(std::move(tree));
      }
      if (round.size() != m.num_classes) throw DataError("round has wrong number of trees");
      m.rounds.push_back(std::move(round));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model JSON: ") + e.what());
  }
  return m;
}

namespace {

struct BinnedColumns {
  std::size_t rows = 0;
  std::vector<std::vector<double>> cuts;      // per feature, ascending
  std::vector<std::vector<std::uint16_t>> bin;  // per feature, per row

  std::size_t bins(std::size_t f) const { return cuts[f].size() + 1; }
};

std::vector<double> make_cuts(std::vector<double> column, int max_bins) {
  std::sort(column.begin(), column.end());
  std::vector<double> uniq;
  std::vector<std::size_t> counts;
  for (double v : column) {
    if (uniq.empty() || v != uniq.back()) {
      uniq.push_back(v);
      counts.push_back(1);
    } else {
      ++counts.back();
    }
  }
  std::vector<double> cuts;
  if (uniq.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i) cuts.push_back(0.5 * (uniq[i] + uniq[i + 1]));
    return cuts;
  }
  const double per_bin = static_cast<double>(column.size()) / max_bins;
  double next = per_bin;
  std::size_t cumulative = 0;
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i) {
    cumulative += counts[i];
    if (static_cast<double>(cumulative) >= next) {
      cuts.push_back(0.5 * (uniq[i] + uniq[i + 1]));
      while (next <= static_cast<double>(cumulative)) next += per_bin;
      if (cuts.size() + 1 >= static_cast<std::size_t>(max_bins)) break;
    }
  }
  return cuts;
}

BinnedColumns bin_features(const FeatureMatrix& x, int max_bins) {
  BinnedColumns b;
  b.rows = x.rows;
  b.cuts.resize(x.cols);
  b.bin.resize(x.cols);
  std::vector<double> column(x.rows);
  for (std::size_t f = 0; f < x.cols; ++f) {
    for (std::size_t i = 0; i < x.rows; ++i) column[i] = x(i, f);
    b.cuts[f] = make_cuts(column, max_bins);
    b.bin[f].resize(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
      b.bin[f][i] = static_cast<std::uint16_t>(
          std::upper_bound(b.cuts[f].begin(), b.cuts[f].end(), x(i, f)) - b.cuts[f].begin());
    }
  }
  return b;
}

struct GradPair {
  double g = 0.0;
  double h = 0.0;
};

// Flattened per-feature histograms.
struct Histogram {
  std::vector<GradPair> cells;
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedColumns& data, const BoostParams& params,
              std::span<const double> grad, std::span<const double> hess)
      : data_(data), params_(params), grad_(grad), hess_(hess) {
    offsets_.resize(data.cuts.size() + 1, 0);
    for (std::size_t f = 0; f < data.cuts.size(); ++f) offsets_[f + 1] = offsets_[f] + data.bins(f);
  }

  // Grows a tree over `rows` (reordered in place) and adds the leaf value of
  // each row to scores[row].
  RegressionTree build(std::vector<std::uint32_t>& rows, std::span<double> scores) {
    tree_ = RegressionTree{};
    rows_ = &rows;
    scores_ = scores;
    Histogram root = histogram(0, rows.size());
    grow(0, rows.size(), 0, root);
    return std::move(tree_);
  }

 private:
  struct Split {
    double gain = 0.0;
    int feature = -1;
    std::size_t bin = 0;  // left side holds bins <= bin
  };

  Histogram histogram(std::size_t begin, std::size_t end) const {
    Histogram h;
    h.cells.assign(offsets_.back(), GradPair{});
    const auto& rows = *rows_;
    for (std::size_t f = 0; f < data_.cuts.size(); ++f) {
      GradPair* cell = h.cells.data() + offsets_[f];
      const std::uint16_t* bins = data_.bin[f].data();
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = rows[i];
        GradPair& c = cell[bins[r]];
        c.g += grad_[r];
        c.h += hess_[r];
      }
    }
    return h;
  }

  double score(double g, double h) const { return g * g / (h + params_.lambda); }

  Split best_split(const Histogram& hist, double g_total, double h_total) const {
    Split best;
    best.gain = params_.min_split_gain;
    const double parent = score(g_total, h_total);
    for (std::size_t f = 0; f < data_.cuts.size(); ++f) {
      const GradPair* cell = hist.cells.data() + offsets_[f];
      double gl = 0.0, hl = 0.0;
      const std::size_t nbins = data_.bins(f);
      for (std::size_t b = 0; b + 1 < nbins; ++b) {
        gl += cell[b].g;
        hl += cell[b].h;
        const double gr = g_total - gl;
        const double hr = h_total - hl;
        if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
        const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent);
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.bin = b;
        }
      }
    }
    return best;
  }

  int grow(std::size_t begin, std::size_t end, int depth, const Histogram& hist) {
    double g_total = 0.0, h_total = 0.0;
    {
      const GradPair* cell = hist.cells.data();
      for (std::size_t b = 0; b < data_.bins(0); ++b) {
        g_total += cell[b].g;
        h_total += cell[b].h;
      }
    }
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.back().cover = h_total;

    Split split;
    if (depth < params_.max_depth && h_total >= 2.0 * params_.min_child_weight) {
      split = best_split(hist, g_total, h_total);
    }
    if (split.feature < 0) {
      const double value = -g_total / (h_total + params_.lambda) * params_.learning_rate;
      tree_.nodes[static_cast<std::size_t>(index)].value = value;
      for (std::size_t i = begin; i < end; ++i) scores_[(*rows_)[i]] += value;
      return index;
    }

    const auto f = static_cast<std::size_t>(split.feature);
    const auto& bins = data_.bin[f];
    auto& rows = *rows_;
    const auto mid_it = std::stable_partition(
        rows.begin() + static_cast<std::ptrdiff_t>(begin), rows.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::uint32_t r) { return bins[r] <= split.bin; });
    const auto mid = static_cast<std::size_t>(mid_it - rows.begin());

    Histogram left, right;
    if (mid - begin <= end - mid) {
      left = histogram(begin, mid);
      right.cells.resize(hist.cells.size());
      for (std::size_t c = 0; c < hist.cells.size(); ++c) {
        right.cells[c] = {hist.cells[c].g - left.cells[c].g, hist.cells[c].h - left.cells[c].h};
      }
    } else {
      right = histogram(mid, end);
      left.cells.resize(hist.cells.size());
      for (std::size_t c = 0; c < hist.cells.size(); ++c) {
        left.cells[c] = {hist.cells[c].g - right.cells[c].g, hist.cells[c].h - right.cells[c].h};
      }
    }

    TreeNode node;
    node.feature = split.feature;
    node.threshold = data_.cuts[f][split.bin];
    node.gain = split.gain;
    node.cover = h_total;
    node.left = grow(begin, mid, depth + 1, left);
    node.right = grow(mid, end, depth + 1, right);
    tree_.nodes[static_cast<std::size_t>(index)] = node;
    return index;
  }

  const BinnedColumns& data_;
  const BoostParams& params_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  std::vector<std::size_t> offsets_;
  RegressionTree tree_;
  std::vector<std::uint32_t>* rows_ = nullptr;
  std::span<double> scores_;
};

}  // namespace

BoostedForest fit_boosted_forest(const FeatureMatrix& x_in, std::span<const int> y_in,
                                 std::size_t num_classes, const BoostParams& params,
                                 std::uint64_t seed) {
  if (x_in.rows == 0) throw DataError("cannot train on an empty dataset");
  if (y_in.size() != x_in.rows) throw DataError("label count does not match row count");
  if (num_classes < 2) throw DataError("need at least two classes");
  if (params.max_bins < 2 || params.max_bins > 65535) throw UsageError("max_bins must be in [2, 65535]");
  for (int label : y_in) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) throw DataError("label out of range");
  }

  // Canonical row order.
  std::vector<std::uint32_t> order(x_in.rows);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto ra = x_in.row(a), rb = x_in.row(b);
    for (std::size_t c = 0; c < x_in.cols; ++c) {
      if (ra[c] != rb[c]) return ra[c] < rb[c];
    }
    return y_in[a] < y_in[b];
  });
  FeatureMatrix x(x_in.rows, x_in.cols);
  std::vector<int> y(x_in.rows);
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy_n(x_in.row(order[i]).begin(), x_in.cols, x.row(i).begin());
    y[i] = y_in[order[i]];
  }

  const std::size_t n = x.rows;
  const std::size_t k_classes = num_classes;
  const BinnedColumns data = bin_features(x, params.max_bins);

  BoostedForest model;
  model.num_classes = num_classes;
  model.num_features = x.cols;
  model.params = params;
  model.seed = seed;

  std::vector<double> scores(n * k_classes, 0.0);  // class-major: scores[k * n + i]
  std::vector<double> prob(n * k_classes);
  std::vector<double> grad(n), hess(n);
  std::vector<std::uint32_t> rows(n);
  std::vector<double> tmp(k_classes);

  for (int round = 0; round < params.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < k_classes; ++k) tmp[k] = scores[k * n + i];
      softmax_inplace(tmp);
      for (std::size_t k = 0; k < k_classes; ++k) prob[k * n + i] = tmp[k];
    }
    std::vector<RegressionTree> trees;
    trees.reserve(k_classes);
    for (std::size_t k = 0; k < k_classes; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[k * n + i];
        grad[i] = p - (static_cast<std::size_t>(y[i]) == k ? 1.0 : 0.0);
        hess[i] = std::max(p * (1.0 - p), 1e-16);
      }
      std::iota(rows.begin(), rows.end(), 0u);
      TreeBuilder builder(data, params, grad, hess);
      trees.push_back(builder.build(rows, std::span<double>(scores.data() + k * n, n)));
    }
    model.rounds.push_back(std::move(trees));
  }
  return model;
}

double mean_log_loss(const BoostedForest& model, const FeatureMatrix& x, std::span<const int> y) {
  if (x.rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto s = model.predict_raw(x.row(i));
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    total += std::log(z) + mx - s[static_cast<std::size_t>(y[i])];
  }
  return total / static_cast<double>(x.rows);
}

}  // namespace clab
