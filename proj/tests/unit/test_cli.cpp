#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"

#include "clab/cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using clab::test::TempDir;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = clab::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(clab::test::read_text(p)); }

}  // namespace

TEST_CASE("help exits zero with usage text") {
  const auto top = run({"--help"});
  CHECK(top.code == 0);
  CHECK(top.out.find("simulate") != std::string::npos);
  const auto sub = run({"simulate", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("--graph") != std::string::npos);
  CHECK(run({"--version"}).code == 0);
}

TEST_CASE("missing required flag exits one and names it") {
  TempDir dir;
  const auto r = run({"simulate", "--params", (dir / "p.json").string(), "--out", (dir / "e.jsonl").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("--graph") != std::string::npos);
}

TEST_CASE("unknown flags and subcommands exit one") {
  CHECK(run({"synth", "--bogus", "1", "--out", "x.csv"}).code == 1);
  CHECK(run({"transmogrify"}).code == 1);
  CHECK(run({}).code == 1);
}

TEST_CASE("missing input file is a data error") {
  TempDir dir;
  const auto r = run({"degree-order-test", "--graph", (dir / "none.csv").string(), "--log",
                      (dir / "none.log").string(), "--out", (dir / "o.json").string()});
  CHECK(r.code == 2);
}

TEST_CASE("synth, simulate, train and decompose run end to end") {
  TempDir dir;
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  REQUIRE(run({"synth", "--nodes", "1000", "--mean-degree", "20", "--seed", "3", "--out", p("g.csv"), "--log",
               p("log.csv"), "--cascade", "mixed", "--random-seeds", "5", "--threads", "1"})
              .code == 0);
  REQUIRE(run({"simulate", "--graph", p("g.csv"), "--params", p("g.params.json"), "--runs", "5", "--random-seeds",
               "5", "--seed", "3", "--out", p("events.jsonl")})
              .code == 0);
  REQUIRE(run({"train", "--events", p("events.jsonl"), "--rounds", "20", "--seed", "3", "--out", p("model.json")})
              .code == 0);
  const auto dec = run({"decompose", "--graph", p("g.csv"), "--model", p("model.json"), "--log", p("log.csv"),
                        "--shocks", p("g.params.json"), "--out", p("dec.json")});
  REQUIRE(dec.code == 0);

  for (const std::string name : {"g.csv", "events.jsonl", "model.json", "dec.json"}) {
    const auto manifest = read_json(dir / (name + ".manifest.json"));
    CHECK(manifest.at("tool") == "contagion-lab");
    CHECK(manifest.at("version") == std::string(clab::cli::kVersion));
    CHECK(manifest.at("seeds").contains("seed"));
    REQUIRE(!manifest.at("outputs").empty());
    for (const auto& out : manifest.at("outputs")) {
      const auto path = dir.path() / out.get<std::string>();
      CHECK(fs::exists(path));
      CHECK(fs::file_size(path) > 0);
    }
  }
  const auto report = read_json(dir / "dec.json");
  double sum = 0;
  for (const auto& [name, share] : report.at("shares").items()) sum += share.get<double>();
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("identical invocations give identical artifacts") {
  TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    REQUIRE(run({"synth", "--nodes", "500", "--seed", "8", "--out", (*dir / "g.csv").string(), "--log",
                 (*dir / "log.csv").string(), "--cascade", "simple", "--random-seeds", "4"})
                .code == 0);
  }
  for (const std::string name : {"g.csv", "g.nodes.csv", "g.traits.csv", "g.params.json", "log.csv", "log.labels.csv"}) {
    CHECK(clab::test::read_text(a / name) == clab::test::read_text(b / name));
  }
  // Echoed paths differ between the two directories; all else must match.
  auto ma = read_json(a / "g.csv.manifest.json");
  auto mb = read_json(b / "g.csv.manifest.json");
  for (const char* key : {"out", "log"}) {
    ma["config"].erase(key);
    mb["config"].erase(key);
  }
  CHECK(ma == mb);
}

TEST_CASE("config file values apply unless the flag is given") {
  TempDir dir;
  clab::test::write_text(dir / "synth.toml", "nodes = 300\nmean-degree = 6\nseed = 4\n");
  REQUIRE(run({"synth", "--config", (dir / "synth.toml").string(), "--out", (dir / "a.csv").string()}).code == 0);
  auto manifest = read_json(dir / "a.csv.manifest.json");
  CHECK(manifest.at("config").at("nodes") == "300");
  CHECK(manifest.at("config").at("mean-degree") == "6");

  REQUIRE(run({"synth", "--config", (dir / "synth.toml").string(), "--nodes", "200", "--out",
               (dir / "b.csv").string()})
              .code == 0);
  manifest = read_json(dir / "b.csv.manifest.json");
  CHECK(manifest.at("config").at("nodes") == "200");
  CHECK(manifest.at("config").at("mean-degree") == "6");

  clab::test::write_text(dir / "bad.toml", "no-such-flag = 1\n");
  CHECK(run({"synth", "--config", (dir / "bad.toml").string(), "--out", (dir / "c.csv").string()}).code == 1);
}

TEST_CASE("shock detection from a series file") {
  TempDir dir;
  std::string text = "day,count\n";
  for (int d = 0; d < 40; ++d) text += std::to_string(d) + "," + (d == 35 ? "500" : "10") + "\n";
  clab::test::write_text(dir / "s.csv", text);
  REQUIRE(run({"detect-shocks", "--series", (dir / "s.csv").string(), "--out", (dir / "r.json").string()}).code == 0);
  const auto ranges = read_json(dir / "r.json").at("ranges");
  REQUIRE(ranges.size() == 1);
  CHECK(ranges[0].at("first") == 35);
  CHECK(ranges[0].at("peak_count") == 500);
}
