#include "stratlab/scenario.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

using namespace stratlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stratlab-test-" + name);
  fs::remove_all(p);
  return p;
}

const char* kSmall = R"(
name: small
seed: 5
models:
  f: radial(3,2)
  g: geodesic(2,0,0)
tasks:
  - { name: prof, type: energy-profile, model: f, random: 3, levels: 3, identity_levels: 1 }
  - { name: tube, type: tube-fit, model: g, set: points, points: [[0,0,0]], samples: 500 }
)";

struct Shell {
  int code;
  std::string out;
};

Shell sh(const std::string& cmd) {
  Shell r{0, ""};
  FILE* p = popen((cmd + " 2>&1").c_str(), "r");
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

}  // namespace

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_scenario("[1, 2"), ConfigError);
  EXPECT_THROW(parse_scenario("- a"), ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: radial(3)}\ntasks: [{type: strata, model: f}]\nextra: 1"),
               ConfigError);
  EXPECT_THROW(parse_scenario("models: {f: radial(3)}\ntasks: [{type: strata, model: f}]"), ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: radial(3)}\ntasks: [{type: bogus, model: f}]"), ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: radial(3)}\ntasks: [{type: strata, model: g}]"), ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: simons-cone}\ntasks: [{type: strata, model: f}]"), ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: radial(3)}\ntasks: [{type: current-suite, model: f}]"),
               ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: radial(3)}\nanalysis: {gamma: 1.5}\ntasks: [{type: strata, model: f}]"),
               ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: radial(3)}\ntasks: [{name: a, type: strata, model: f},"
                              " {name: a, type: strata, model: f}]"),
               ConfigError);
  EXPECT_THROW(parse_scenario("seed: 1\nmodels: {f: nonsense(3)}\ntasks: [{type: strata, model: f}]"), ConfigError);
}

TEST(Config, Defaults) {
  const auto sc = parse_scenario("seed: 9\nmodels: {f: radial(3)}\ntasks: [{type: strata, model: f}]");
  EXPECT_EQ(sc.name, "scenario");
  EXPECT_EQ(sc.seed, 9u);
  EXPECT_EQ(sc.tasks[0].name, "strata-1");
  EXPECT_DOUBLE_EQ(sc.analysis.gamma, 0.5);
  EXPECT_EQ(sc.analysis.deltas.size(), 3u);
}

TEST(Run, OutputsAreReproducible) {
  const auto sc = parse_scenario(kSmall, "small.yaml");
  const fs::path a = scratch("a"), b = scratch("b");
  RunOverrides oa, ob;
  oa.output = a;
  ob.output = b;
  const auto ra = run_scenario(sc, oa);
  const auto rb = run_scenario(sc, ob);
  EXPECT_TRUE(ra.ok());
  EXPECT_TRUE(rb.ok());
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++csvs;
    EXPECT_EQ(read_text(e.path()), read_text(b / e.path().filename())) << e.path();
  }
  EXPECT_EQ(csvs, 4);
  const auto rows = parse_csv(read_text(a / "prof.csv"));
  EXPECT_EQ(rows.size(), 1u + 3 * 4);
  const auto man = read_text(a / "manifest.txt");
  EXPECT_NE(man.find("config_hash fnv1a64:" + hex64(fnv1a(sc.text))), std::string::npos);
  EXPECT_NE(man.find("seed 5\n"), std::string::npos);
  EXPECT_NE(man.find("result pass"), std::string::npos);
  const auto js = Json::parse(read_text(a / "summary.json"));
  EXPECT_EQ(js["tasks"].size(), 2u);
  EXPECT_EQ(js["result"], "pass");
}

TEST(Run, SeedOverrideChangesSampledCentres) {
  const auto sc = parse_scenario(kSmall);
  RunOverrides o1, o2;
  o1.output = scratch("s1");
  o2.output = scratch("s2");
  o2.seed = 6;
  run_scenario(sc, o1);
  const auto r2 = run_scenario(sc, o2);
  EXPECT_EQ(r2.seed, 6u);
  EXPECT_NE(read_text(*o1.output / "prof_centers.csv"), read_text(*o2.output / "prof_centers.csv"));
}

TEST(Run, FailedAssertionsAreRecorded) {
  const auto sc = parse_scenario(R"y(
seed: 1
models: {g: "geodesic(2,0,0)"}
tasks:
  - { name: t, type: tube-fit, model: g, set: points, points: [[0,0,0]], expect: { slope: [0.0, 1.0] } }
)y");
  RunOverrides o;
  o.output = scratch("fail");
  const auto r = run_scenario(sc, o);
  EXPECT_FALSE(r.ok());
  ASSERT_EQ(r.tasks.size(), 1u);
  EXPECT_EQ(r.tasks[0].status, "fail");
  EXPECT_NE(read_text(*o.output / "manifest.txt").find("result fail"), std::string::npos);
}

TEST(Run, ManifestWrittenWhenConfigErrorsSurfaceLate) {
  const auto sc = parse_scenario(R"y(
seed: 1
models: {g: "geodesic(2,0,0)"}
tasks:
  - { name: t, type: tube-fit, model: g, set: nowhere }
)y");
  RunOverrides o;
  o.output = scratch("late");
  EXPECT_THROW(run_scenario(sc, o), ConfigError);
  EXPECT_TRUE(fs::exists(*o.output / "manifest.txt"));
}

TEST(Binary, SubcommandsAndExitCodes) {
  const std::string bin = STRATLAB_BINARY;
  const auto list = sh(bin + " list-models");
  EXPECT_EQ(list.code, 0);
  EXPECT_NE(list.out.find("radial"), std::string::npos);
  EXPECT_NE(list.out.find("simons-cone"), std::string::npos);

  const std::string dir = STRATLAB_SCENARIOS;
  for (const char* f : {"monotonicity.yaml", "radial-lp.yaml", "radial4-lp.yaml", "strata.yaml", "tubes.yaml",
                        "cone-split.yaml", "simons.yaml"}) {
    const auto v = sh(bin + " validate " + dir + "/" + f);
    EXPECT_EQ(v.code, 0) << f << v.out;
    EXPECT_EQ(v.out.rfind("ok ", 0), 0u) << v.out;
  }
  const fs::path bad = scratch("bad.yaml");
  write_text(bad, "seed: 1\nmodels: {}\ntasks: []\n");
  EXPECT_EQ(sh(bin + " validate " + bad.string()).code, 2);
  EXPECT_NE(sh(bin + " validate /nonexistent.yaml").code, 0);
  EXPECT_NE(sh(bin).code, 0);

  const fs::path cfg = scratch("small.yaml"), out = scratch("cli-out");
  write_text(cfg, kSmall);
  const auto run = sh(bin + " run " + cfg.string() + " --out " + out.string() + " --seed 5 --threads 1");
  EXPECT_EQ(run.code, 0) << run.out;
  EXPECT_NE(run.out.find("result pass"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "manifest.txt"));
}
