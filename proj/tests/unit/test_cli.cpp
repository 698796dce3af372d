#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using iontrap::cli::ExitCode;
using iontrap::cli::run;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "iontrap");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("iontrap_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Value in the second column of the summary row starting with `key`.
double summary_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string k;
    double v = 0.0;
    if (row >> k && k == key && row >> v) return v;
  }
  FAIL("missing summary row " << key);
  return 0.0;
}

}  // namespace

TEST_CASE("budget with the reported preset ends near 375 counts/s") {
  const Result r = call({"budget", "--preset", "paper-2012"});
  REQUIRE(r.code == ExitCode::kOk);
  const double total = summary_value(r.out, "total_counts_per_s");
  CHECK(total > 335.0);
  CHECK(total < 415.0);
  CHECK(summary_value(r.out, "output_coupling") == doctest::Approx(0.13));
}

TEST_CASE("configuration errors exit with code 2") {
  const fs::path dir = scratch("config");
  CHECK(call({"budget", "--scenario", write_file(dir, "empty.json", "").string()}).code ==
        ExitCode::kConfigError);
  CHECK(call({"budget", "--scenario", write_file(dir, "obj.json", "{}").string()}).code ==
        ExitCode::kConfigError);
  CHECK(call({"budget", "--scenario",
              write_file(dir, "unknown.json", R"({"command": "budget", "colour": 1})").string()})
            .code == ExitCode::kConfigError);
  CHECK(call({"budget", "--scenario",
              write_file(dir, "section.json", R"({"command": "budget", "budget": {"bogus": 1}})").string()})
            .code == ExitCode::kConfigError);
  CHECK(call({"fringe", "--scenario",
              write_file(dir, "mismatch.json", R"({"command": "budget"})").string()})
            .code == ExitCode::kConfigError);
  CHECK(call({"budget", "--scenario", (dir / "missing.json").string()}).code == ExitCode::kConfigError);
  CHECK(call({"budget", "--preset", "nope"}).code == ExitCode::kConfigError);
  CHECK(call({"split-stats"}).code == ExitCode::kConfigError);
  CHECK(call({"nonsense"}).code == ExitCode::kConfigError);
  CHECK(call({"budget", "--format", "xml"}).code == ExitCode::kConfigError);
}

TEST_CASE("physics errors exit with code 3") {
  const fs::path dir = scratch("physics");
  const std::string s = R"({"command": "fringe", "fringe": {"visibility": 1.5}})";
  const Result r = call({"fringe", "--scenario", write_file(dir, "v.json", s).string()});
  CHECK(r.code == ExitCode::kPhysicsError);
  CHECK(!r.err.empty());
}

TEST_CASE("split-stats is byte-identical for a fixed scenario and seed") {
  const fs::path dir = scratch("determinism");
  const std::string s =
      R"({"command": "split-stats", "seed": 17, "split": {"trials": 300, "purity": 0.95}})";
  const fs::path scenario = write_file(dir, "split.json", s);
  REQUIRE(call({"run", "--scenario", scenario.string(), "--out", (dir / "a").string()}).code == 0);
  REQUIRE(call({"split-stats", "--scenario", scenario.string(), "--out", (dir / "b").string()}).code == 0);
  REQUIRE(call({"split-stats", "--scenario", scenario.string(), "--out", (dir / "c").string(),
                "--format", "json"}).code == 0);
  std::size_t csv = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const fs::path other = dir / "b" / e.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(e.path()) == slurp(other));
    if (e.path().extension() == ".csv") {
      ++csv;
      CHECK(fs::exists(e.path().string() + ".meta.json"));
      const auto meta = nlohmann::json::parse(slurp(e.path().string() + ".meta.json"));
      CHECK(meta.at("seed") == 17);
      CHECK(meta.at("scenario_hash").get<std::string>().rfind("fnv1a64:", 0) == 0);
      CHECK(meta.contains("version"));
      CHECK(slurp(e.path()).find('\n') > 0);
    }
  }
  CHECK(csv >= 2);
  const auto doc = nlohmann::json::parse(slurp(dir / "c" / "split_stats.json"));
  CHECK(doc.at("meta").at("seed") == 17);

  // A different seed changes the statistics.
  REQUIRE(call({"split-stats", "--scenario", scenario.string(), "--seed", "18", "--out",
                (dir / "d").string()}).code == 0);
  CHECK(slurp(dir / "a" / "split_histogram.csv") != slurp(dir / "d" / "split_histogram.csv"));
}

TEST_CASE("characterize on the reference layout") {
  const Result r = call({"characterize", "--layout", "reference"});
  REQUIRE(r.code == ExitCode::kOk);
  CHECK(summary_value(r.out, "height") == doctest::Approx(134.0).epsilon(0.05));
  CHECK(summary_value(r.out, "mathieu_q") == doctest::Approx(0.22).epsilon(0.10));
}

TEST_CASE("every analysis command runs with its defaults") {
  for (const char* c : {"axial", "chain", "fringe", "spectrum", "compensate", "presets"}) {
    const Result r = call({c});
    CHECK_MESSAGE(r.code == ExitCode::kOk, c << ": " << r.err);
    CHECK(!r.out.empty());
  }
}

TEST_CASE("scenario hash is stable") {
  CHECK(iontrap::cli::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(iontrap::cli::fnv1a_hex("a") == "af63dc4c8601ec8c");
}
