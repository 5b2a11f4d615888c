#include "clab/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clab/adoption_log.hpp"
#include "clab/calibrate.hpp"
#include "clab/cascade.hpp"
#include "clab/csv.hpp"
#include "clab/error.hpp"
#include "clab/features.hpp"
#include "clab/graph.hpp"
#include "clab/matching.hpp"
#include "clab/mechclass.hpp"
#include "clab/order_test.hpp"
#include "clab/panel.hpp"
#include "clab/parallel.hpp"
#include "clab/rng.hpp"
#include "clab/shocks.hpp"
#include "clab/synth.hpp"

namespace clab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams split from the global --seed.
enum Stream : std::uint64_t {
  kGraphStream = 1,
  kParamsStream = 2,
  kCascadeStream = 3,
  kHomophilyStream = 4,
  kEnsembleStream = 5,
  kSplitStream = 6,
  kPlaceboStream = 7,
};

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string config;
  bool verbose = false;
  std::string out;
};

// What a subcommand produced; written into the manifest.
struct RunRecord {
  std::vector<fs::path> outputs;
  json seeds = json::object();
};

struct Context {
  std::ostream* out;
  std::ostream* err;
  Common common;
  RunRecord record;

  std::size_t threads() const { return resolve_thread_count(common.threads); }
  void log(const std::string& msg) const {
    if (common.verbose) *err << "[contagion-lab] " << msg << '\n';
  }
  void wrote(const fs::path& p) { record.outputs.push_back(p); }
  std::uint64_t stream(const std::string& name, Stream s) {
    const auto value = derive_seed(common.seed, s);
    record.seeds[name] = value;
    return value;
  }
};

// `<dir>/<stem>.<suffix>` next to the primary output.
fs::path sidecar(const fs::path& out, const std::string& suffix) {
  return out.parent_path() / (out.stem().string() + "." + suffix);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

LoadedGraph load_graph(const std::string& edges, const std::string& node_map) {
  if (!node_map.empty()) return load_edge_list(edges, fs::path(node_map));
  const auto implicit = sidecar(edges, "nodes.csv");
  if (fs::exists(implicit)) return load_edge_list(edges, implicit);
  return load_edge_list(edges);
}

// Accepts a bare schedule array or an object carrying one under "shocks" or
// "schedule" (params and fit-shock outputs).
ShockSchedule load_shocks(const std::string& path) {
  if (path.empty()) return {};
  const json j = read_json(path);
  if (j.is_object()) {
    if (j.contains("shocks")) return ShockSchedule::from_json(j.at("shocks"));
    if (j.contains("schedule")) return ShockSchedule::from_json(j.at("schedule"));
    throw DataError(path + ": no shock schedule found");
  }
  return ShockSchedule::from_json(j);
}

std::vector<ShockRange> load_ranges(const std::string& path) {
  const json j = read_json(path);
  std::vector<ShockRange> ranges;
  try {
    for (const auto& r : j.at("ranges")) {
      ranges.push_back({r.at("first").get<int>(), r.at("last").get<int>(), r.at("peak").get<int>(),
                        r.at("peak_count").get<std::int64_t>()});
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return ranges;
}

json ranges_json(std::span<const ShockRange> ranges) {
  json out = json::array();
  for (const auto& r : ranges) {
    out.push_back({{"first", r.first}, {"last", r.last}, {"peak", r.peak}, {"peak_count", r.peak_count}});
  }
  return out;
}

// Per-node numeric columns from a `node,<name>...` CSV.
struct StaticColumns {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // [column][node]
};

StaticColumns read_static_columns(const std::string& path, const DirectedGraph& g) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  auto names = csv::split_record(header);
  if (names.size() < 2 || names[0] != "node") throw DataError(path + ": header must be node,<columns>");
  names.erase(names.begin());
  StaticColumns cols;
  cols.names = names;
  cols.values.assign(names.size(), std::vector<double>(g.node_count(), 0.0));
  std::vector<bool> seen(g.node_count(), false);
  csv::read_rows(path, {"node"}, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != names.size() + 1) throw DataError(path + ": line " + std::to_string(line) + ": wrong column count");
    const auto id = g.find(f[0]);
    if (!id) throw DataError(path + ": line " + std::to_string(line) + ": unknown node '" + f[0] + "'");
    seen[*id] = true;
    for (std::size_t c = 0; c < names.size(); ++c) cols.values[c][*id] = csv::parse_double(f[c + 1], line);
  });
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw DataError(path + ": every node needs a row");
  }
  return cols;
}

// Node labels from a `node,day,mechanism` CSV.
std::map<NodeId, Mechanism> read_labels(const std::string& path, const DirectedGraph& g) {
  std::map<NodeId, Mechanism> labels;
  csv::read_rows(path, {"node", "day", "mechanism"}, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 3) throw DataError(path + ": line " + std::to_string(line) + ": expected node,day,mechanism");
    const auto id = g.find(f[0]);
    if (!id) throw DataError(path + ": line " + std::to_string(line) + ": unknown node '" + f[0] + "'");
    labels[*id] = parse_mechanism(f[2]);
  });
  return labels;
}

AdoptionSeries series_from(const std::string& series, const std::string& graph, const std::string& node_map,
                           const std::string& log_path, int* offset) {
  *offset = 0;
  if (!series.empty()) return AdoptionSeries::load(series);
  if (graph.empty() || log_path.empty()) throw UsageError("give --series, or --graph with --log");
  const auto g = load_graph(graph, node_map).graph;
  const auto log = load_adoption_log(log_path, g);
  *offset = log.first_day;
  return log.daily_counts();
}

std::uint64_t fnv1a(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// ---------------------------------------------------------------- commands

struct GraphArgs {
  std::string graph, node_map;
};

void add_graph(CLI::App* sub, GraphArgs& a, bool required = true) {
  auto* opt = sub->add_option("--graph", a.graph, "Edge-list CSV (source,target)");
  if (required) opt->required();
  sub->add_option("--node-map", a.node_map, "Node map CSV (id,external_id); defaults to <graph stem>.nodes.csv if present");
}

struct IngestArgs {
  std::string edges, node_map, log;
};

void run_ingest(Context& ctx, const IngestArgs& a) {
  const auto loaded = a.node_map.empty() ? load_edge_list(a.edges) : load_edge_list(a.edges, fs::path(a.node_map));
  const fs::path out = ctx.common.out;
  write_edge_list(loaded.graph, out);
  ctx.wrote(out);
  const auto nodes = sidecar(out, "nodes.csv");
  write_node_map(loaded.graph, nodes);
  ctx.wrote(nodes);
  json report = {{"nodes", loaded.graph.node_count()},
                 {"edges", loaded.graph.edge_count()},
                 {"records", loaded.report.records},
                 {"duplicates_dropped", loaded.report.duplicates_dropped},
                 {"self_loops_dropped", loaded.report.self_loops_dropped}};
  if (!a.log.empty()) {
    const auto log = load_adoption_log(a.log, loaded.graph);
    log.validate(loaded.graph.node_count());
    const auto log_out = sidecar(out, "log.csv");
    write_adoption_log(log, loaded.graph, log_out);
    ctx.wrote(log_out);
    report["adopters"] = log.records.size();
    report["first_day"] = log.first_day;
    report["last_day"] = log.last_day;
  }
  const auto report_path = sidecar(out, "report.json");
  write_json(report_path, report);
  ctx.wrote(report_path);
  ctx.log("ingested " + std::to_string(loaded.graph.node_count()) + " nodes");
}

struct SynthArgs {
  SynthConfig config;
  double shock_scale = kReferenceShockProbAtPeak;
  std::string log;
  std::string cascade = "mixed";
  std::vector<double> rates = {0.01, 0.001};
  int days = 730;
  std::size_t random_seeds = 0;
};

void run_synth(Context& ctx, SynthArgs a) {
  a.config.seed = ctx.stream("graph", kGraphStream);
  const auto world = gen_graph(a.config);
  const auto& g = world.graph;
  const fs::path out = ctx.common.out;
  write_edge_list(g, out);
  ctx.wrote(out);
  const auto nodes = sidecar(out, "nodes.csv");
  write_node_map(g, nodes);
  ctx.wrote(nodes);
  {
    const auto traits = sidecar(out, "traits.csv");
    std::ofstream t(traits);
    if (!t) throw DataError("cannot write " + traits.string());
    t << "node,trait\n";
    for (NodeId i = 0; i < g.node_count(); ++i) t << csv::escape(g.external_id(i)) << ',' << world.trait[i] << '\n';
    ctx.wrote(traits);
  }
  const auto params = reference_params(g.node_count(), ctx.stream("params", kParamsStream), a.shock_scale);
  const auto params_path = sidecar(out, "params.json");
  write_json(params_path, params.to_json());
  ctx.wrote(params_path);

  if (a.log.empty()) return;
  const fs::path log_path = a.log;
  CascadeConfig cfg;
  cfg.random_seeds = a.random_seeds;
  if (a.cascade == "homophily") {
    const auto log = gen_homophily_adoptions(g, world.trait, a.rates, a.days, ctx.stream("homophily", kHomophilyStream));
    write_adoption_log(log, g, log_path);
    ctx.wrote(log_path);
    return;
  }
  const auto seed = ctx.stream("cascade", kCascadeStream);
  std::vector<std::pair<Adoption, Mechanism>> labeled;
  if (a.cascade == "mixed") {
    const auto run = run_realization(g, params, seed, cfg);
    for (NodeId s : run.seeds) labeled.push_back({{s, 0}, Mechanism::Spontaneous});
    for (const auto& e : run.events) labeled.push_back({{e.node, e.day}, e.mechanism});
  } else {
    const Mechanism m = parse_mechanism(std::string(1, static_cast<char>(std::toupper(a.cascade[0]))) + a.cascade.substr(1));
    const auto log = gen_pure_cascade(g, m, params, seed, cfg);
    for (const auto& r : log.records) labeled.push_back({r, m});
  }
  std::sort(labeled.begin(), labeled.end(), [](const auto& x, const auto& y) {
    return std::pair(x.first.day, x.first.node) < std::pair(y.first.day, y.first.node);
  });
  AdoptionLog log;
  for (const auto& [r, m] : labeled) log.records.push_back(r);
  write_adoption_log(log, g, log_path);
  ctx.wrote(log_path);
  const auto labels_path = sidecar(log_path, "labels.csv");
  std::ofstream l(labels_path);
  if (!l) throw DataError("cannot write " + labels_path.string());
  l << "node,day,mechanism\n";
  for (const auto& [r, m] : labeled) l << csv::escape(g.external_id(r.node)) << ',' << r.day << ',' << to_string(m) << '\n';
  l.close();
  ctx.wrote(labels_path);
  ctx.log("synthetic cascade with " + std::to_string(labeled.size()) + " adopters");
}

struct SimulateArgs {
  GraphArgs graph;
  std::string params;
  std::size_t runs = 100;
  double stop_fraction = 0.18;
  int horizon = 730;
  std::size_t random_seeds = 0;
  std::vector<std::string> seeds;
};

void run_simulate(Context& ctx, const SimulateArgs& a) {
  const auto g = load_graph(a.graph.graph, a.graph.node_map).graph;
  const auto params = MechanismParams::from_json(read_json(a.params), g.node_count(), ctx.stream("params", kParamsStream));
  CascadeConfig cfg;
  cfg.stop_fraction = a.stop_fraction;
  cfg.horizon_days = a.horizon;
  cfg.random_seeds = a.random_seeds;
  for (const auto& s : a.seeds) {
    const auto id = g.find(s);
    if (!id) throw DataError("seed node '" + s + "' is not in the graph");
    cfg.seeds.push_back(*id);
  }
  if (a.runs == 0) throw UsageError("--runs must be positive");
  const auto seed0 = ctx.stream("ensemble", kEnsembleStream);
  ctx.log("simulating " + std::to_string(a.runs) + " realizations on " + std::to_string(ctx.threads()) + " threads");
  const auto result = run_ensemble(g, params, a.runs, seed0, cfg, ctx.threads());
  const fs::path out = ctx.common.out;
  write_events_jsonl(result.events, g, out);
  ctx.wrote(out);
  const auto summary = sidecar(out, "summary.json");
  write_json(summary, ensemble_summary_json(result));
  ctx.wrote(summary);
}

struct CalibrateArgs {
  GraphArgs graph;
  std::string log, posts, shocks, shock_ranges;
  bool detect = false;
  std::int64_t min_count = 150;
  int last_day = -1;
  double shock_scale = kReferenceShockProbAtPeak;
};

json summary_json(const PoolSummary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"min", s.min}, {"max", s.max}};
}

void run_calibrate(Context& ctx, const CalibrateArgs& a) {
  const auto g = load_graph(a.graph.graph, a.graph.node_map).graph;
  auto log = load_adoption_log(a.log, g, 0, a.last_day);
  log.validate(g.node_count());
  if (!a.shock_ranges.empty()) {
    log.shock_periods = load_ranges(a.shock_ranges);
  } else if (a.detect) {
    DetectOptions opts;
    opts.min_count = a.min_count;
    log.shock_periods = detect_shocks(log.daily_counts().counts, opts);
    for (auto& r : log.shock_periods) {
      r.first += log.first_day;
      r.last += log.first_day;
      r.peak += log.first_day;
    }
  }
  const auto beta = calibrate_transmission(g, log);
  const auto phi = calibrate_thresholds(g, log);
  const auto bg = calibrate_background(g, log);
  json out = {{"version", 1}, {"beta_pool", beta.values}, {"phi_pool", phi.values}, {"r", bg.r}};
  if (!a.posts.empty()) {
    const auto cols = read_static_columns(a.posts, g);
    if (cols.names.size() != 1) throw DataError(a.posts + ": expected node,posts");
    out["activity"] = calibrate_activity(cols.values[0]);
  } else {
    out["activity"] = ActivityOptions{}.target_mean;
  }
  if (!a.shocks.empty()) {
    out["shocks"] = load_shocks(a.shocks).to_json();
    out["shock_prob_at_peak"] = a.shock_scale;
  }
  out["summary"] = {{"beta", summary_json(beta.summary)},
                    {"phi", summary_json(phi.summary)},
                    {"zero_exposure_adopters", bg.zero_exposure_adopters},
                    {"susceptible_days", bg.susceptible_days},
                    {"shock_periods", ranges_json(log.shock_periods)}};
  write_json(ctx.common.out, out);
  ctx.wrote(ctx.common.out);
}

struct FeaturesArgs {
  GraphArgs graph;
  std::string log, shocks, labels;
};

void run_features(Context& ctx, const FeaturesArgs& a) {
  const auto g = load_graph(a.graph.graph, a.graph.node_map).graph;
  const auto log = load_adoption_log(a.log, g);
  log.validate(g.node_count());
  const auto shocks = load_shocks(a.shocks);
  std::map<NodeId, Mechanism> labels;
  if (!a.labels.empty()) labels = read_labels(a.labels, g);
  const auto days = log.adoption_days(g.node_count());
  std::vector<FeatureRow> rows;
  for (const auto& r : log.sorted_records()) {
    FeatureRow row{g.external_id(r.node), r.day, extract_features(g, days, shocks, r.node, r.day), std::nullopt};
    if (!a.labels.empty()) {
      const auto it = labels.find(r.node);
      if (it == labels.end()) throw DataError("no label for node '" + g.external_id(r.node) + "'");
      row.label = static_cast<int>(it->second);
    }
    rows.push_back(std::move(row));
  }
  write_feature_csv(rows, ctx.common.out);
  ctx.wrote(ctx.common.out);
}

struct TrainArgs {
  std::string events, features;
  TrainOptions options;
};

void run_train(Context& ctx, TrainArgs a) {
  std::vector<LabeledEvent> events;
  if (!a.events.empty() == !a.features.empty()) throw UsageError("give exactly one of --events or --features");
  if (!a.events.empty()) {
    events = read_events_jsonl(a.events);
  } else {
    for (const auto& row : read_feature_csv(a.features)) {
      if (!row.label) throw DataError(a.features + ": every row needs a label");
      events.push_back({row.x, static_cast<Mechanism>(*row.label)});
    }
  }
  a.options.seed = ctx.stream("split", kSplitStream);
  ctx.log("training on " + std::to_string(events.size()) + " events");
  const auto result = train_classifier(events, a.options);
  write_json(ctx.common.out, result.model.to_json());
  ctx.wrote(ctx.common.out);
  json importance = json::object();
  if (result.model.split_count() > 0) {
    const auto gain = result.model.gain_importance();
    for (std::size_t f = 0; f < kFeatureCount; ++f) importance[std::string(kFeatureNames[f])] = gain[f];
  }
  const json metrics = {{"train_rows", result.train_rows},
                        {"holdout_rows", result.holdout_rows},
                        {"holdout", result.holdout.to_json()},
                        {"training", result.training.to_json()},
                        {"gain_importance", importance}};
  const auto metrics_path = sidecar(ctx.common.out, "metrics.json");
  write_json(metrics_path, metrics);
  ctx.wrote(metrics_path);
}

BoostedForest load_model(const std::string& path) {
  try {
    return BoostedForest::from_json(read_json(path));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

struct ClassifyArgs {
  std::string model, features;
};

void run_classify(Context& ctx, const ClassifyArgs& a) {
  const auto model = load_model(a.model);
  const auto rows = read_feature_csv(a.features);
  std::ofstream out(ctx.common.out);
  if (!out) throw DataError("cannot write " + ctx.common.out);
  out << "node,day,label";
  for (Mechanism m : kMechanisms) out << ",p_" << to_string(m);
  out << '\n' << std::setprecision(17);
  std::vector<int> truth, pred;
  for (const auto& row : rows) {
    const auto p = predict(model, row.x);
    out << csv::escape(row.node) << ',' << row.day << ',' << to_string(p.label);
    for (double v : p.probabilities) out << ',' << v;
    out << '\n';
    if (row.label) {
      truth.push_back(*row.label);
      pred.push_back(static_cast<int>(p.label));
    }
  }
  out.close();
  ctx.wrote(ctx.common.out);
  if (!truth.empty()) {
    const auto metrics_path = sidecar(ctx.common.out, "metrics.json");
    write_json(metrics_path, classification_metrics(truth, pred).to_json());
    ctx.wrote(metrics_path);
  }
}

struct DecomposeArgs {
  GraphArgs graph;
  std::string model, log, shocks;
  bool events = false;
};

void run_decompose(Context& ctx, const DecomposeArgs& a) {
  const auto g = load_graph(a.graph.graph, a.graph.node_map).graph;
  const auto model = load_model(a.model);
  const auto log = load_adoption_log(a.log, g);
  log.validate(g.node_count());
  const auto report = decompose(model, log, g, load_shocks(a.shocks), ctx.threads());
  write_json(ctx.common.out, report.to_json(g, a.events));
  ctx.wrote(ctx.common.out);
}

struct OrderArgs {
  GraphArgs graph;
  std::string log;
  std::string degree = "in";
};

void run_order(Context& ctx, const OrderArgs& a) {
  const auto g = load_graph(a.graph.graph, a.graph.node_map).graph;
  const auto log = load_adoption_log(a.log, g);
  log.validate(g.node_count());
  const auto kind = parse_degree_kind(a.degree);
  json j = degree_order_test(g, log, kind).to_json();
  j["degree"] = std::string(to_string(kind));
  write_json(ctx.common.out, j);
  ctx.wrote(ctx.common.out);
}

struct SeriesArgs {
  GraphArgs graph;
  std::string series, log;
};

void add_series(CLI::App* sub, SeriesArgs& a) {
  sub->add_option("--series", a.series, "Daily adoption counts CSV (day,count)");
  add_graph(sub, a.graph, false);
  sub->add_option("--log", a.log, "Adoption log CSV (node,day), used with --graph");
}

struct DetectArgs {
  SeriesArgs input;
  DetectOptions options;
};

void run_detect(Context& ctx, const DetectArgs& a) {
  int offset = 0;
  const auto series = series_from(a.input.series, a.input.graph.graph, a.input.graph.node_map, a.input.log, &offset);
  auto ranges = detect_shocks(series.counts, a.options);
  for (auto& r : ranges) {
    r.first += offset;
    r.last += offset;
    r.peak += offset;
  }
  const json j = {{"min_count", a.options.min_count},
                  {"window", a.options.window},
                  {"z", a.options.z},
                  {"ranges", ranges_json(ranges)}};
  write_json(ctx.common.out, j);
  ctx.wrote(ctx.common.out);
}

struct FitArgs {
  SeriesArgs input;
  std::vector<int> peaks;
  std::string ranges;
  int end = -1;
  PowerLawFitOptions options;
};

void run_fit(Context& ctx, const FitArgs& a) {
  int offset = 0;
  const auto series = series_from(a.input.series, a.input.graph.graph, a.input.graph.node_map, a.input.log, &offset);
  std::vector<int> peaks = a.peaks;
  if (!a.ranges.empty()) {
    for (const auto& r : load_ranges(a.ranges)) peaks.push_back(r.peak);
  }
  if (peaks.empty()) throw UsageError("give --peak or --ranges");
  std::sort(peaks.begin(), peaks.end());
  peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());
  if (a.end >= 0 && peaks.size() != 1) throw UsageError("--end needs exactly one peak");
  const auto counts = series.as_double();
  json fits = json::array();
  std::vector<Shock> schedule;
  double max_peak = 0.0;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    const int peak = peaks[i] - offset;
    if (peak < 0 || peak >= static_cast<int>(counts.size())) throw DataError("peak day outside the series");
    auto opts = a.options;
    opts.end_day = a.end >= 0 ? a.end - offset : (i + 1 < peaks.size() ? peaks[i + 1] - offset : -1);
    const auto fit = fit_power_law(counts, peak, opts);
    fits.push_back({{"peak", peaks[i]},
                    {"peak_count", counts[static_cast<std::size_t>(peak)]},
                    {"alpha", fit.alpha},
                    {"r_squared", fit.r_squared},
                    {"height", fit.height},
                    {"gamma", fit.gamma},
                    {"iterations", fit.iterations},
                    {"points", fit.points}});
    schedule.push_back({peaks[i], counts[static_cast<std::size_t>(peak)], std::max(fit.alpha, 1e-9)});
    max_peak = std::max(max_peak, counts[static_cast<std::size_t>(peak)]);
  }
  json j = {{"fits", fits}};
  if (max_peak > 0.0) j["schedule"] = ShockSchedule::normalized(schedule).to_json();
  write_json(ctx.common.out, j);
  ctx.wrote(ctx.common.out);
}

struct MatchArgs {
  GraphArgs graph;
  std::string log, panel, schema, covariates, panel_out;
  std::string kind = "timing", direction = "followee", placebo = "none";
  int d = 1;
  int lag = 7;
  int first_day = -1, last_day = -1, stride = 1;
  int horizon_end = -1;
  MatchOptions options;
};

void run_match(Context& ctx, MatchArgs a) {
  const auto g = load_graph(a.graph.graph, a.graph.node_map).graph;
  TreatmentPanel panel;
  if (!a.panel.empty()) {
    if (a.schema.empty()) throw UsageError("--panel needs --schema");
    panel = read_panel(a.panel, a.schema, g);
  } else {
    if (a.log.empty()) throw UsageError("give --log or --panel");
    const auto log = load_adoption_log(a.log, g, 0, a.horizon_end);
    log.validate(g.node_count());
    PanelSpec spec;
    spec.kind = parse_treatment_kind(a.kind);
    spec.d = a.d;
    spec.direction = parse_direction(a.direction);
    spec.placebo = parse_placebo(a.placebo);
    spec.seed = ctx.stream("placebo", kPlaceboStream);
    spec.covariate_lag = a.lag;
    spec.first_day = a.first_day;
    spec.last_day = a.last_day;
    spec.day_stride = a.stride;
    StaticColumns cols;
    if (!a.covariates.empty()) cols = read_static_columns(a.covariates, g);
    panel = build_network_panel(g, log, spec, cols.names, cols.values);
    if (!a.panel_out.empty()) {
      const fs::path p = a.panel_out;
      const auto schema = sidecar(p, "schema.json");
      write_panel(panel, g, p, schema);
      ctx.wrote(p);
      ctx.wrote(schema);
    }
  }
  a.options.threads = ctx.threads();
  ctx.log("matching " + std::to_string(panel.rows()) + " panel rows");
  const auto result = match_panel(panel, a.options);
  const auto pairs = result.pairs();
  json skipped = json::array();
  for (const auto& s : result.skipped) skipped.push_back({{"day", s.day}, {"reason", s.reason}});
  json j = {{"kind", std::string(to_string(panel.kind))},
            {"rows", panel.rows()},
            {"pairs", pairs.size()},
            {"days_matched", result.days.size()},
            {"skipped", skipped},
            {"naive", naive_risk_ratio(panel).to_json()}};
  j["matched"] = pairs.empty() ? json(nullptr) : pool_risk_ratio(pairs).to_json();
  json per_level = json::object();
  for (int level = 1; level < panel.level_count(); ++level) {
    std::vector<MatchedPair> lp;
    for (const auto& p : pairs) {
      if (p.level == level) lp.push_back(p);
    }
    if (!lp.empty()) {
      const auto name = panel.kind == TreatmentKind::Dose ? dose_label(level) : std::to_string(level);
      per_level[name] = pool_risk_ratio(lp).to_json();
    }
  }
  j["by_level"] = per_level;
  write_json(ctx.common.out, j);
  ctx.wrote(ctx.common.out);
  const auto pairs_path = sidecar(ctx.common.out, "pairs.csv");
  write_pairs_csv(pairs, g, pairs_path);
  ctx.wrote(pairs_path);
  const auto diag_path = sidecar(ctx.common.out, "diagnostics.json");
  write_json(diag_path, diagnostics_json(diagnostics(result), panel.kind));
  ctx.wrote(diag_path);
}

struct ReportArgs {
  std::vector<std::string> manifests;
};

void run_report(Context& ctx, const ReportArgs& a) {
  constexpr std::uintmax_t kEmbedLimit = 64 * 1024;
  json runs = json::array();
  for (const auto& m : a.manifests) {
    const json manifest = read_json(m);
    const fs::path dir = fs::path(m).parent_path();
    json outputs = json::array();
    for (const auto& name : manifest.at("outputs")) {
      const fs::path p = dir / name.get<std::string>();
      if (!fs::exists(p)) throw DataError(m + ": output " + p.string() + " is missing");
      const auto bytes = fs::file_size(p);
      if (bytes == 0) throw DataError(m + ": output " + p.string() + " is empty");
      json entry = {{"file", name}, {"bytes", bytes}, {"fnv1a64", hex(fnv1a(p))}};
      if (p.extension() == ".json" && bytes <= kEmbedLimit) entry["content"] = read_json(p);
      outputs.push_back(entry);
    }
    runs.push_back({{"manifest", fs::path(m).filename().string()},
                    {"command", manifest.value("command", "")},
                    {"outputs", outputs}});
  }
  write_json(ctx.common.out, {{"runs", runs}});
  ctx.wrote(ctx.common.out);
}

// ------------------------------------------------------------- plumbing

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
  auto* out = sub->add_option("--out", c.out, "Primary output path");
  if (out_required) out->required();
  sub->add_option("--seed", c.seed, "Global seed; every random stream is derived from it")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores; CONTAGION_LAB_THREADS overrides)")
      ->capture_default_str();
  sub->add_option("--config", c.config, "Flat key = value file mirroring flags; flags on the command line win");
  sub->add_flag("-v,--verbose", c.verbose, "Progress messages on stderr");
}

json config_echo(const CLI::App* sub) {
  json j = json::object();
  for (const auto* opt : sub->get_options()) {
    const auto& name = opt->get_single_name();
    if (name == "help" || name == "config" || name == "verbose" || name == "threads") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r[0]) : json(r);
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_manifest(const Context& ctx, const CLI::App* sub) {
  const fs::path path = ctx.common.out + ".manifest.json";
  const fs::path dir = path.parent_path();
  json outputs = json::array();
  for (const auto& p : ctx.record.outputs) {
    outputs.push_back(dir.empty() ? p.generic_string() : p.lexically_relative(dir).generic_string());
  }
  json seeds = ctx.record.seeds;
  seeds["seed"] = ctx.common.seed;
  const json manifest = {{"tool", "contagion-lab"},
                         {"version", std::string(kVersion)},
                         {"command", sub->get_name()},
                         {"config", config_echo(sub)},
                         {"seeds", seeds},
                         {"outputs", outputs}};
  write_json(path, manifest);
}

// Prepends flags from a --config file that the command line does not set.
std::vector<std::string> apply_config(const CLI::App& app, std::vector<std::string> args) {
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty() || args.empty()) return args;
  const CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[0]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::vector<std::pair<std::string, std::string>> items;
  if (fs::path(config).extension() == ".json") {
    const json j = read_json(config);
    if (!j.is_object()) throw UsageError(config + ": config must be a flat JSON object");
    for (const auto& [k, v] : j.items()) {
      if (v.is_object() || v.is_array()) throw UsageError(config + ": key '" + k + "' is not a scalar");
      items.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
    }
  } else {
    std::ifstream in(config);
    if (!in) throw UsageError("cannot open config file " + config);
    for (const auto& item : CLI::ConfigTOML().from_config(in)) {
      if (item.name == "++" || item.name == "--") continue;
      if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == sub->get_name())) continue;
      if (item.inputs.size() != 1) throw UsageError(config + ": key '" + item.name + "' needs one value");
      items.emplace_back(item.name, item.inputs[0]);
    }
  }
  std::vector<std::string> injected = {args[0]};
  for (const auto& [key, value] : items) {
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin() + 1, args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    if (key == "config" || sub->get_option_no_throw(flag) == nullptr) {
      throw UsageError(config + ": '" + key + "' is not a flag of " + sub->get_name());
    }
    injected.push_back(flag + "=" + value);
  }
  injected.insert(injected.end(), args.begin() + 1, args.end());
  return injected;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-mechanism contagion simulation, mechanism classification and peer-influence matching",
               "contagion-lab"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Context ctx{&out, &err, {}, {}};
  std::function<void()> run;

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Load an edge list, drop self-loops and duplicates, write canonical files");
  s_ingest->add_option("--edges", ingest.edges, "Edge-list CSV (source,target)")->required();
  s_ingest->add_option("--node-map", ingest.node_map, "Node map CSV (id,external_id)");
  s_ingest->add_option("--log", ingest.log, "Adoption log CSV (node,day) to validate");
  add_common(s_ingest, ctx.common);
  s_ingest->callback([&] { run = [&] { run_ingest(ctx, ingest); }; });

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a heavy-tailed graph, traits, reference parameters and optional adoptions");
  s_synth->add_option("--nodes", synth.config.n_nodes, "Node count")->capture_default_str();
  s_synth->add_option("--mean-degree", synth.config.mean_degree, "Mean followees per node")->capture_default_str();
  s_synth->add_option("--exponent", synth.config.exponent, "Power-law exponent")->capture_default_str();
  s_synth->add_option("--homophily", synth.config.homophily, "Same-trait edge restriction in [0,1]")->capture_default_str();
  s_synth->add_option("--trait-prob", synth.config.trait_prob, "P(trait = 1)")->capture_default_str();
  s_synth->add_option("--shock-scale", synth.shock_scale, "Shock adoption probability at the largest peak")
      ->capture_default_str();
  s_synth->add_option("--log", synth.log, "Also write an adoption log here");
  s_synth->add_option("--cascade", synth.cascade, "Log generator")
      ->check(CLI::IsMember({"mixed", "simple", "complex", "spontaneous", "shock", "homophily"}))
      ->capture_default_str();
  s_synth->add_option("--rates", synth.rates, "Per-trait daily adoption rates (homophily)")->delimiter(',')
      ->capture_default_str();
  s_synth->add_option("--days", synth.days, "Horizon of homophily adoptions")->capture_default_str();
  s_synth->add_option("--random-seeds", synth.random_seeds, "Random day-0 adopters for cascades")->capture_default_str();
  add_common(s_synth, ctx.common);
  s_synth->callback([&] { run = [&] { run_synth(ctx, synth); }; });

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Run a cascade ensemble and write labeled adoption events");
  add_graph(s_sim, sim.graph);
  s_sim->add_option("--params", sim.params, "Mechanism parameters JSON")->required();
  s_sim->add_option("--runs", sim.runs, "Realizations")->capture_default_str();
  s_sim->add_option("--stop-fraction", sim.stop_fraction, "Stop once this fraction has adopted")->capture_default_str();
  s_sim->add_option("--horizon", sim.horizon, "Maximum simulated days")->capture_default_str();
  s_sim->add_option("--random-seeds", sim.random_seeds, "Random day-0 adopters per realization")->capture_default_str();
  s_sim->add_option("--seeds", sim.seeds, "Explicit day-0 adopters (external ids)")->delimiter(',');
  add_common(s_sim, ctx.common);
  s_sim->callback([&] { run = [&] { run_simulate(ctx, sim); }; });

  CalibrateArgs cal;
  auto* s_cal = app.add_subcommand("calibrate", "Estimate beta and phi pools, r and activity from an adoption log");
  add_graph(s_cal, cal.graph);
  s_cal->add_option("--log", cal.log, "Adoption log CSV (node,day)")->required();
  s_cal->add_option("--last-day", cal.last_day, "Last observed day (default: last adoption)")->capture_default_str();
  s_cal->add_option("--posts", cal.posts, "Posting counts CSV (node,posts) for activity");
  s_cal->add_option("--shocks", cal.shocks, "Shock schedule JSON to carry into the output");
  s_cal->add_option("--shock-scale", cal.shock_scale, "Shock adoption probability at the largest peak")
      ->capture_default_str();
  s_cal->add_option("--shock-ranges", cal.shock_ranges, "Shock periods from detect-shocks");
  s_cal->add_flag("--detect", cal.detect, "Detect shock periods from the log");
  s_cal->add_option("--min-count", cal.min_count, "Detection floor")->capture_default_str();
  add_common(s_cal, ctx.common);
  s_cal->callback([&] { run = [&] { run_calibrate(ctx, cal); }; });

  FeaturesArgs feat;
  auto* s_feat = app.add_subcommand("features", "Extract the feature vector of every adopter");
  add_graph(s_feat, feat.graph);
  s_feat->add_option("--log", feat.log, "Adoption log CSV (node,day)")->required();
  s_feat->add_option("--shocks", feat.shocks, "Shock schedule JSON (or params JSON with shocks)");
  s_feat->add_option("--labels", feat.labels, "Mechanism labels CSV (node,day,mechanism)");
  add_common(s_feat, ctx.common);
  s_feat->callback([&] { run = [&] { run_features(ctx, feat); }; });

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Fit the mechanism classifier");
  s_train->add_option("--events", train.events, "Events JSON-lines from simulate");
  s_train->add_option("--features", train.features, "Labeled feature CSV");
  s_train->add_option("--rounds", train.options.boost.n_rounds, "Boosting rounds")->capture_default_str();
  s_train->add_option("--depth", train.options.boost.max_depth, "Maximum tree depth")->capture_default_str();
  s_train->add_option("--learning-rate", train.options.boost.learning_rate, "Shrinkage")->capture_default_str();
  s_train->add_option("--lambda", train.options.boost.lambda, "L2 penalty on leaf weights")->capture_default_str();
  s_train->add_option("--min-child-weight", train.options.boost.min_child_weight, "Minimum hessian per child")
      ->capture_default_str();
  s_train->add_option("--max-bins", train.options.boost.max_bins, "Histogram bins per feature")->capture_default_str();
  s_train->add_option("--holdout", train.options.holdout_fraction, "Stratified holdout fraction")->capture_default_str();
  add_common(s_train, ctx.common);
  s_train->callback([&] { run = [&] { run_train(ctx, train); }; });

  ClassifyArgs cls;
  auto* s_cls = app.add_subcommand("classify", "Predict mechanisms for a feature CSV");
  s_cls->add_option("--model", cls.model, "Model JSON")->required();
  s_cls->add_option("--features", cls.features, "Feature CSV")->required();
  add_common(s_cls, ctx.common);
  s_cls->callback([&] { run = [&] { run_classify(ctx, cls); }; });

  DecomposeArgs dec;
  auto* s_dec = app.add_subcommand("decompose", "Classify every adoption in a log and report mechanism shares");
  add_graph(s_dec, dec.graph);
  s_dec->add_option("--model", dec.model, "Model JSON")->required();
  s_dec->add_option("--log", dec.log, "Adoption log CSV (node,day)")->required();
  s_dec->add_option("--shocks", dec.shocks, "Shock schedule JSON (or params JSON with shocks)");
  s_dec->add_flag("--events", dec.events, "Include per-adoption rows");
  add_common(s_dec, ctx.common);
  s_dec->callback([&] { run = [&] { run_decompose(ctx, dec); }; });

  OrderArgs ord;
  auto* s_ord = app.add_subcommand("degree-order-test", "Spearman correlation of adopter degree with adoption day");
  add_graph(s_ord, ord.graph);
  s_ord->add_option("--log", ord.log, "Adoption log CSV (node,day)")->required();
  s_ord->add_option("--degree", ord.degree, "Degree kind")
      ->check(CLI::IsMember({"in", "out", "total"}))
      ->capture_default_str();
  add_common(s_ord, ctx.common);
  s_ord->callback([&] { run = [&] { run_order(ctx, ord); }; });

  DetectArgs det;
  auto* s_det = app.add_subcommand("detect-shocks", "Flag days far above the trailing moving average");
  add_series(s_det, det.input);
  s_det->add_option("--min-count", det.options.min_count, "Minimum daily count")->capture_default_str();
  s_det->add_option("--window", det.options.window, "Trailing window in days")->capture_default_str();
  s_det->add_option("--z", det.options.z, "Standard deviations above the mean")->capture_default_str();
  add_common(s_det, ctx.common);
  s_det->callback([&] { run = [&] { run_detect(ctx, det); }; });

  FitArgs fit;
  auto* s_fit = app.add_subcommand("fit-shock", "Fit power-law decay exponents after shock peaks");
  add_series(s_fit, fit.input);
  s_fit->add_option("--peak", fit.peaks, "Peak day (repeatable)");
  s_fit->add_option("--ranges", fit.ranges, "Shock ranges JSON from detect-shocks");
  s_fit->add_option("--end", fit.end, "Exclusive end day (single peak only)");
  s_fit->add_option("--huber-k", fit.options.huber_k, "Huber tuning constant")->capture_default_str();
  add_common(s_fit, ctx.common);
  s_fit->callback([&] { run = [&] { run_fit(ctx, fit); }; });

  MatchArgs match;
  auto* s_match = app.add_subcommand("match", "Propensity-matched risk ratios for timing or dose exposure");
  add_graph(s_match, match.graph);
  s_match->add_option("--log", match.log, "Adoption log CSV (node,day)");
  s_match->add_option("--last-day", match.horizon_end, "Last observed day of the log")->capture_default_str();
  s_match->add_option("--panel", match.panel, "Prebuilt panel CSV");
  s_match->add_option("--schema", match.schema, "Panel schema JSON");
  s_match->add_option("--covariates", match.covariates, "Static per-node covariates CSV (node,<columns>)");
  s_match->add_option("--kind", match.kind, "Treatment")->check(CLI::IsMember({"timing", "dose"}))->capture_default_str();
  s_match->add_option("--d", match.d, "Timing window in days")->capture_default_str();
  s_match->add_option("--direction", match.direction, "Tie direction")
      ->check(CLI::IsMember({"followee", "follower", "mutual"}))
      ->capture_default_str();
  s_match->add_option("--placebo", match.placebo, "Placebo")
      ->check(CLI::IsMember({"none", "future", "permute"}))
      ->capture_default_str();
  s_match->add_option("--lag", match.lag, "Covariate lag in days")->capture_default_str();
  s_match->add_option("--first-day", match.first_day, "First outcome day")->capture_default_str();
  s_match->add_option("--to-day", match.last_day, "Last outcome day")->capture_default_str();
  s_match->add_option("--stride", match.stride, "Outcome day stride")->capture_default_str();
  s_match->add_option("--caliper", match.options.caliper_mult, "Caliper in logit SDs")->capture_default_str();
  s_match->add_option("--shortlist", match.options.shortlist, "Nearest controls considered")->capture_default_str();
  s_match->add_option("--min-rows", match.options.min_rows_per_level, "Rows needed per level and day")
      ->capture_default_str();
  s_match->add_option("--panel-out", match.panel_out, "Also write the built panel here");
  add_common(s_match, ctx.common);
  s_match->callback([&] { run = [&] { run_match(ctx, match); }; });

  ReportArgs rep;
  auto* s_rep = app.add_subcommand("report", "Check run manifests and collect their outputs");
  s_rep->add_option("--manifest", rep.manifests, "Manifest JSON (repeatable)")->required();
  add_common(s_rep, ctx.common);
  s_rep->callback([&] { run = [&] { run_report(ctx, rep); }; });

  std::vector<std::string> argv;
  try {
    argv = apply_config(app, args);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    run();
    write_manifest(ctx, sub);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << " (after " << e.iterations() << " iterations)\n";
    return 3;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace clab::cli
