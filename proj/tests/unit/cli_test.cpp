#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "geoprobe/cli.hpp"
#include "geoprobe/manifest.hpp"
#include "support.hpp"

using namespace geoprobe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "geoprobe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string fixture_csv() { return std::string(GEOPROBE_TEST_DATA) + "/worldcities_sample.csv"; }

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

fs::path ingest_fixture() {
  const auto dir = testsupport::fresh_dir("ingest");
  const auto r = run({"ingest", "--csv", fixture_csv(), "--out", dir.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

fs::path extract_fixture(const fs::path& catalog_dir) {
  const auto dir = testsupport::fresh_dir("extract");
  const auto r = run({"extract", "--catalog", (catalog_dir / "catalog.json").string(), "--d", "16", "--layers", "6",
                      "--out", dir.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

const std::vector<std::string> kSmallWorld{"--synthetic-countries", "8", "--synthetic-cities", "10", "--d", "16"};

std::vector<std::string> with_world(std::vector<std::string> args) {
  args.insert(args.end(), kSmallWorld.begin(), kSmallWorld.end());
  return args;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_NE(run({"--help"}).out.find("ingest"), std::string::npos);
  EXPECT_EQ(run({"probe", "--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"ingest", "--bogus"}).code, 2);
  EXPECT_EQ(run({"ingest", "--synthetic-countries", "3"}).code, 2);
  const auto r = run({"ingest", "--out", testsupport::fresh_dir("x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err).at("error"), "config_error");
}

TEST(Cli, IngestWritesCatalogAndManifest) {
  const auto dir = ingest_fixture();
  EXPECT_TRUE(fs::exists(dir / "catalog.json"));
  const auto m = manifest::read_manifest(dir);
  EXPECT_EQ(m.command, "ingest");
  EXPECT_EQ(m.inputs.at(fixture_csv()), manifest::hash_file(fixture_csv()));
  EXPECT_EQ(m.outputs.at("catalog.json"), manifest::hash_file(dir / "catalog.json"));
  EXPECT_EQ(m.argv.front(), "geoprobe");
}

TEST(Cli, OutputDirectoryOfAnotherCommandIsRefused) {
  const auto dir = ingest_fixture();
  const auto r = run({"extract", "--catalog", (dir / "catalog.json").string(), "--d", "16", "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  const auto err = json::parse(r.err);
  EXPECT_EQ(err.at("error"), "config_error");
  EXPECT_EQ(err.at("command"), "extract");
}

TEST(Cli, ProbeWritesTenFoldReport) {
  const auto cat = ingest_fixture();
  const auto act = extract_fixture(cat);
  ASSERT_TRUE(fs::exists(act / "layer_6.gact"));
  const auto dir = testsupport::fresh_dir("probe");
  const auto r = run({"probe", "--activations", (act / "layer_6.gact").string(), "--targets",
                      (cat / "catalog.json").string(), "--folds", "10", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(manifest::read_text(dir / "cv_report.json"));
  EXPECT_EQ(report.at("fold_losses").size(), 10u);
  EXPECT_EQ(report.at("layer"), 6);
  EXPECT_TRUE(fs::exists(dir / "predictions.csv"));
  EXPECT_TRUE(fs::exists(dir / "probe.json"));
}

TEST(Cli, InterveneCountryTrace) {
  const auto dir = testsupport::fresh_dir("intervene");
  const auto r = run(with_world({"intervene", "country", "--iters", "80", "--eval-stride", "8", "--out", dir.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(manifest::read_text(dir / "trace.csv")), 12u);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_EQ(manifest::read_manifest(dir).command, "intervene country");
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto a = testsupport::fresh_dir("a"), b = testsupport::fresh_dir("b");
  const auto args = [](const fs::path& out) {
    return with_world({"intervene", "country", "--iters", "16", "--mode", "random", "--seed", "5", "--out", out.string()});
  };
  ASSERT_EQ(run(args(a)).code, 0);
  ASSERT_EQ(run(args(b)).code, 0);
  const auto ma = manifest::read_manifest(a), mb = manifest::read_manifest(b);
  EXPECT_EQ(ma.outputs, mb.outputs);
  for (const auto& [name, hash] : ma.outputs) {
    EXPECT_EQ(manifest::read_text(a / name), manifest::read_text(b / name)) << name;
    EXPECT_EQ(manifest::hash_file(a / name), hash) << name;
  }
}

TEST(Cli, ReportFromProbeAndIntervention) {
  const auto run_dir = testsupport::fresh_dir("intervene");
  ASSERT_EQ(run(with_world({"intervene", "country", "--iters", "8", "--out", run_dir.string()})).code, 0);
  const auto out = testsupport::fresh_dir("report");
  const auto r = run({"report", "--run", run_dir.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "accuracy.svg"));

  const auto missing = run({"report", "--run", testsupport::fresh_dir("nothing").string(), "--out",
                            testsupport::fresh_dir("report2").string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(json::parse(missing.err).at("error"), "report_error");
}

TEST(Cli, ProcessBackendMatchesInProcess) {
  const auto cat = testsupport::fresh_dir("cat");
  ASSERT_EQ(run({"ingest", "--synthetic-countries", "5", "--synthetic-cities", "4", "--out", cat.string()}).code, 0);
  const auto catalog = (cat / "catalog.json").string();
  const auto local = testsupport::fresh_dir("local"), remote = testsupport::fresh_dir("remote");
  ASSERT_EQ(run({"extract", "--catalog", catalog, "--d", "16", "--layers", "3", "--out", local.string()}).code, 0);
  const std::string server = std::string(GEOPROBE_SERVER) + " --synthetic-countries 5 --synthetic-cities 4 --d 16";
  const auto r = run({"extract", "--catalog", catalog, "--backend-cmd", server, "--layers", "3", "--out", remote.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(manifest::read_text(local / "layer_3.gact"), manifest::read_text(remote / "layer_3.gact"));
}

TEST(Cli, LayersAcceptCommaList) {
  const auto cat = ingest_fixture();
  const auto dir = testsupport::fresh_dir("extract");
  const auto r = run({"extract", "--catalog", (cat / "catalog.json").string(), "--d", "16", "--layers", "4,12",
                      "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "layer_4.gact"));
  EXPECT_TRUE(fs::exists(dir / "layer_12.gact"));
}
