#include "clab/mechclass.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "clab/error.hpp"
#include "clab/parallel.hpp"
#include "clab/rng.hpp"

namespace clab {

ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw DataError("truth and prediction lengths differ");
  ClassificationMetrics m;
  m.count = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = m.count ? static_cast<double>(correct) / static_cast<double>(m.count) : 0.0;
  double f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < kMechanismCount; ++c) {
    std::size_t tp = m.confusion[c][c], actual = 0, pred = 0;
    for (std::size_t o = 0; o < kMechanismCount; ++o) {
      actual += m.confusion[c][o];
      pred += m.confusion[o][c];
    }
    auto& pc = m.per_class[c];
    pc.support = actual;
    pc.precision = pred ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    pc.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    pc.f1 = pc.precision + pc.recall > 0 ? 2 * pc.precision * pc.recall / (pc.precision + pc.recall) : 0.0;
    if (actual || pred) {
      f1_sum += pc.f1;
      ++present;
    }
  }
  m.macro_f1 = present ? f1_sum / static_cast<double>(present) : 0.0;
  return m;
}

nlohmann::json ClassificationMetrics::to_json() const {
  nlohmann::json classes = nlohmann::json::object();
  for (Mechanism mech : kMechanisms) {
    const auto& pc = per_class[static_cast<std::size_t>(mech)];
    classes[std::string(to_string(mech))] = {
        {"precision", pc.precision}, {"recall", pc.recall}, {"f1", pc.f1}, {"support", pc.support}};
  }
  return {{"macro_f1", macro_f1}, {"accuracy", accuracy}, {"count", count},
          {"per_class", classes}, {"confusion", confusion}};
}

FeatureMatrix to_matrix(std::span<const LabeledEvent> events) {
  FeatureMatrix x(events.size(), kFeatureCount);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto a = events[i].features.to_array();
    std::copy(a.begin(), a.end(), x.row(i).begin());
  }
  return x;
}

namespace {

bool canonical_less(const LabeledEvent& a, const LabeledEvent& b) {
  const auto xa = a.features.to_array(), xb = b.features.to_array();
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    if (xa[c] != xb[c]) return xa[c] < xb[c];
  }
  return a.mechanism < b.mechanism;
}

}  // namespace

std::vector<bool> stratified_holdout(std::span<const LabeledEvent> events, double fraction,
                                     std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw UsageError("holdout fraction must be in [0, 1)");
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return canonical_less(events[a], events[b]); });
  std::vector<bool> holdout(events.size(), false);
  for (Mechanism mech : kMechanisms) {
    std::vector<std::size_t> members;
    for (std::size_t i : order) {
      if (events[i].mechanism == mech) members.push_back(i);
    }
    if (members.empty()) continue;
    Rng rng(derive_seed(seed, 0xC1A55 + static_cast<std::uint64_t>(mech)));
    rng.shuffle(members.begin(), members.end());
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    take = std::min(take, members.size() - 1);
    for (std::size_t j = 0; j < take; ++j) holdout[members[j]] = true;
  }
  return holdout;
}

namespace {

BoostedForest fit(std::span<const LabeledEvent> events, const TrainOptions& options) {
  const FeatureMatrix x = to_matrix(events);
  std::vector<int> y(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) y[i] = static_cast<int>(events[i].mechanism);
  auto model = fit_boosted_forest(x, y, kMechanismCount, options.boost, options.seed);
  for (Mechanism m : kMechanisms) model.class_names.emplace_back(to_string(m));
  for (auto name : kFeatureNames) model.feature_names.emplace_back(name);
  return model;
}

ClassificationMetrics evaluate(const BoostedForest& model, std::span<const LabeledEvent> events) {
  std::vector<int> truth, pred;
  for (const auto& e : events) {
    truth.push_back(static_cast<int>(e.mechanism));
    pred.push_back(static_cast<int>(predict(model, e.features).label));
  }
  return classification_metrics(truth, pred);
}

}  // namespace

TrainResult train_classifier(std::span<const LabeledEvent> events, const TrainOptions& options) {
  if (events.empty()) throw DataError("no training events");
  std::array<bool, kMechanismCount> seen{};
  for (const auto& e : events) seen[static_cast<std::size_t>(e.mechanism)] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2) throw DataError("training data has a single class");

  const auto flags = stratified_holdout(events, options.holdout_fraction, options.seed);
  std::vector<LabeledEvent> train, test;
  for (std::size_t i = 0; i < events.size(); ++i) (flags[i] ? test : train).push_back(events[i]);

  TrainResult out;
  out.model = fit(train, options);
  out.training = evaluate(out.model, train);
  out.holdout = evaluate(out.model, test);
  out.train_rows = train.size();
  out.holdout_rows = test.size();
  return out;
}

Prediction predict(const BoostedForest& model, const FeatureVector& x) {
  if (model.num_classes != kMechanismCount) throw DataError("model does not have the four mechanism classes");
  const auto a = x.to_array();
  const auto p = model.predict_proba(a);
  Prediction out;
  std::copy(p.begin(), p.end(), out.probabilities.begin());
  out.label = static_cast<Mechanism>(std::max_element(p.begin(), p.end()) - p.begin());
  return out;
}

DecompositionReport decompose(const BoostedForest& model, const AdoptionLog& log, const DirectedGraph& g,
                              const ShockSchedule& shocks, std::size_t threads) {
  if (log.records.empty()) throw DataError("adoption log is empty");
  log.validate(g.node_count());
  const auto days = log.adoption_days(g.node_count());
  const auto records = log.sorted_records();

  DecompositionReport report;
  report.first_day = log.first_day;
  report.events.resize(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    auto& row = report.events[i];
    row.node = records[i].node;
    row.day = records[i].day;
    row.features = extract_features(g, days, shocks, row.node, row.day);
    row.prediction = predict(model, row.features);
  });

  const auto span = static_cast<std::size_t>(log.last_day - log.first_day + 1);
  report.daily_counts.assign(span, {});
  report.daily_proportions.assign(span, {});
  std::array<std::size_t, kMechanismCount> totals{};
  for (const auto& row : report.events) {
    const auto c = static_cast<std::size_t>(row.prediction.label);
    ++report.daily_counts[static_cast<std::size_t>(row.day - log.first_day)][c];
    ++totals[c];
  }
  for (std::size_t d = 0; d < span; ++d) {
    const auto& counts = report.daily_counts[d];
    const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (n == 0) continue;
    for (std::size_t c = 0; c < kMechanismCount; ++c) {
      report.daily_proportions[d][c] = static_cast<double>(counts[c]) / static_cast<double>(n);
    }
  }
  for (std::size_t c = 0; c < kMechanismCount; ++c) {
    report.shares[c] = static_cast<double>(totals[c]) / static_cast<double>(report.events.size());
  }
  return report;
}

nlohmann::json DecompositionReport::to_json(const DirectedGraph& g, bool include_events) const {
  nlohmann::json shares_json = nlohmann::json::object();
  for (Mechanism m : kMechanisms) shares_json[std::string(to_string(m))] = shares[static_cast<std::size_t>(m)];
  nlohmann::json daily = nlohmann::json::array();
  for (std::size_t d = 0; d < daily_counts.size(); ++d) {
    const auto& counts = daily_counts[d];
    if (std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 0) continue;
    nlohmann::json c = nlohmann::json::object(), p = nlohmann::json::object();
    for (Mechanism m : kMechanisms) {
      c[std::string(to_string(m))] = counts[static_cast<std::size_t>(m)];
      p[std::string(to_string(m))] = daily_proportions[d][static_cast<std::size_t>(m)];
    }
    daily.push_back({{"day", first_day + static_cast<int>(d)}, {"counts", c}, {"proportions", p}});
  }
  nlohmann::json out = {{"adopters", events.size()}, {"shares", shares_json}, {"daily", daily}};
  if (include_events) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : events) {
      nlohmann::json probs = nlohmann::json::object();
      for (Mechanism m : kMechanisms) {
        probs[std::string(to_string(m))] = row.prediction.probabilities[static_cast<std::size_t>(m)];
      }
      rows.push_back({{"node", g.external_id(row.node)},
                      {"day", row.day},
                      {"mechanism", to_string(row.prediction.label)},
                      {"probabilities", probs}});
    }
    out["events"] = rows;
  }
  return out;
}

}  // namespace clab
