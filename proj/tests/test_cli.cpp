#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "almh/cli.hpp"

using namespace almh;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("almh_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json base(const std::string& command, json numerics) {
  return {{"schema_version", 1}, {"command", command}, {"model", "adaptation-1d"}, {"numerics", numerics}, {"seed", 3}};
}

int run_json(const json& j, const fs::path& dir, cli::Overrides ov = {}) {
  auto path = dir / "config.json";
  std::ofstream(path) << j.dump();
  ov.out = (dir / "out").string();
  return cli::run_file(path.string(), ov).status;
}

}  // namespace

TEST(Config, PresetRoundTrip) {
  for (const auto& name : preset_names()) {
    json j = model_to_json(preset(name));
    json again = model_to_json(model_from_json(j));
    EXPECT_EQ(j, again) << name;
  }
}

TEST(Config, RejectsUnknownFields) {
  json m = model_to_json(preset("stp"));
  m["intensity"]["shape"] = 3;
  EXPECT_THROW(model_from_json(m), ConfigError);
  json rc = base("simulate", {{"N", 5}, {"T", 1.0}});
  rc["extra"] = 1;
  EXPECT_THROW(cli::parse_run_config(rc), ConfigError);
  rc = base("simulate", {{"N", 5}, {"T", 1.0}, {"speed", 2}});
  EXPECT_EQ(run_json(rc, scratch("unknown_numerics")), cli::kValidation);
}

TEST(Config, SchemaVersionAndTypes) {
  json rc = base("validate", json::object());
  rc["schema_version"] = 2;
  EXPECT_THROW(cli::parse_run_config(rc), ConfigError);
  rc = base("validate", json::object());
  rc["seed"] = "seven";
  EXPECT_THROW(cli::parse_run_config(rc), ConfigError);
}

TEST(Cli, ExitCodes) {
  auto dir = scratch("exit");
  EXPECT_EQ(run_json(base("simulate", {{"N", 0}, {"T", 1.0}}), dir), cli::kValidation);
  EXPECT_EQ(cli::run_file((dir / "missing.json").string(), {}).status, cli::kMissingFile);
  EXPECT_EQ(run_json(base("simulate", {{"N", 5}, {"T", 1.0}}), dir), cli::kOk);
  // A pathint run whose truncation exceeds the tail budget warns; --strict turns it into exit 3.
  json pi = base("pathint", {{"t", 0.5}, {"K_max", 0}, {"gl_order", 4}, {"a_max", 1.0}, {"n_a", 2}, {"n_m", {5}}, {"dt", 0.1}});
  pi["model"] = {{"preset", "plain-hawkes"}, {"interaction", {{"J", 0.0}}}};
  EXPECT_EQ(run_json(pi, dir), cli::kOk);
  cli::Overrides strict;
  strict.strict = true;
  EXPECT_EQ(run_json(pi, dir, strict), cli::kStrict);
}

TEST(Cli, ManifestAndArtifacts) {
  auto dir = scratch("manifest");
  ASSERT_EQ(run_json(base("simulate", {{"N", 8}, {"T", 1.0}, {"save_times", {0.5, 1.0}}}), dir), cli::kOk);
  auto m = read_json_file((dir / "out" / "manifest.json").string());
  EXPECT_EQ(m["tool"], "almh");
  EXPECT_EQ(m["seed"], 3);
  for (const char* f : {"events.csv", "snapshots.csv", "summary.json"}) {
    ASSERT_TRUE(m["artifacts"].contains(f)) << f;
    EXPECT_EQ(m["artifacts"][f], hex64(file_hash((dir / "out" / f).string())));
  }
  auto snap = read_csv((dir / "out" / "snapshots.csv").string());
  EXPECT_EQ(snap.rows.size(), 16u);
}

TEST(Io, CsvRoundTripIsExact) {
  auto dir = scratch("csv");
  CsvTable t{{"a", "b"}, {{0.1, 1.0 / 3.0}, {-2.5e-300, 12345678.9}}};
  write_csv((dir / "t.csv").string(), t);
  auto r = read_csv((dir / "t.csv").string());
  EXPECT_EQ(r.header, t.header);
  EXPECT_EQ(r.rows, t.rows);
}

TEST(Io, GridDumpRoundTrip) {
  auto dir = scratch("grid");
  auto s = preset("stp");
  Grid g = default_grid(s, 0.2);
  g.dt = 0.05;
  g.n_m = {11, 1};
  g.save_times = {0.1, 0.2};
  auto sol = solve_alm_pde(s, g);
  write_grid_dump((dir / "d.bin").string(), sol.snapshots, sol.dt);
  auto [hdr, vals] = read_grid_dump((dir / "d.bin").string());
  EXPECT_EQ(hdr["dtype"], "float64");
  std::vector<double> all;
  for (const auto& sn : sol.snapshots) all.insert(all.end(), sn.values.begin(), sn.values.end());
  EXPECT_EQ(vals, all);
}

TEST(Io, ComplementCoordinatesOnOutput) {
  auto s = preset("stp");
  Grid g = default_grid(s, 0.1);
  g.dt = 0.05;
  g.n_m = {3, 1};
  g.save_times = {0.1};
  auto sol = solve_alm_pde(s, g);
  auto t = density_table(sol.snapshots, true);
  auto u = density_table(sol.snapshots, false);
  ASSERT_EQ(t.rows.size(), u.rows.size());
  EXPECT_NEAR(t.rows[0][2], 1.0 - u.rows[0][2], 1e-15);
}
