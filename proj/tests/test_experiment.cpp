#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "spotdiff/experiment.hpp"

using namespace spotdiff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("spotdiff_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small, fast geometry for end-to-end runs.
std::vector<std::string> quick() {
  return {"sampler.panorama_width=64", "sampler.window_width=16", "sampler.stride=4",
          "sampler.height=4",          "sampler.channels=2",      "sampler.steps=10"};
}

CommandOptions opts_in(const fs::path& dir, std::vector<std::string> extra = {}) {
  CommandOptions o;
  o.sets = quick();
  o.sets.insert(o.sets.end(), extra.begin(), extra.end());
  o.out = dir.string();
  return o;
}

/// PLAT payload without the header line (whose tag is the config digest).
std::string plat_payload(const fs::path& p) {
  const auto bytes = slurp(p);
  return bytes.substr(bytes.find('\n') + 1);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SPOTDIFF_CLI) + " " + args + " 2>/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config text sets every section") {
  const auto cfg = parse_config(R"(
# comment
[sampler]
strategy = multidiffusion
panorama_width = 128
window_width = 32
stride = 8
steps = 20
rule = ddim
eta = 0.25
seed = 9
[prior]
length_scale = 4
[output]
pgm = false
[compare]
strategies = spotdiffusion, multidiffusion:8
)");
  CHECK(cfg.sampler.strategy == Strategy::multidiffusion);
  CHECK(cfg.sampler.panorama_width == 128);
  CHECK(cfg.sampler.rule.kind == StepRule::Kind::ddim);
  CHECK(cfg.sampler.rule.eta == 0.25);
  CHECK(cfg.sampler.seed == 9);
  CHECK(cfg.prior.length_scale == 4.0);
  CHECK_FALSE(cfg.output.pgm);
  REQUIRE(cfg.compare.size() == 2);
  CHECK(cfg.compare[1].stride == 8);
}

TEST_CASE("defaults describe the reference geometry") {
  const auto cfg = parse_config("");
  CHECK(cfg.sampler.panorama_width == 256);
  CHECK(cfg.sampler.window_width == 64);
  CHECK(cfg.sampler.steps == 50);
  CHECK(cfg.sampler.rule.kind == StepRule::Kind::ddpm);
  CHECK(cfg.schedule == ScheduleKind::linear);
  CHECK(cfg.denoiser.kind == "mrf");
}

TEST_CASE("config errors are ConfigError") {
  CHECK_THROWS_AS(parse_config("[sampler]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[sampler]\nsteps = ten\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[sampler]\nstrategy = tiled\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("", {"sampler.panorama_width=250"}), ConfigError);
  CHECK_THROWS_AS(parse_config("", {"sampler.steps"}), ConfigError);
  CHECK_THROWS_AS(parse_config("", {"denoiser.kind=replay"}), ConfigError);
  CHECK_THROWS_AS(parse_config("", {"sampler.shift_law=fixed"}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/spotdiff.ini"), ConfigError);
}

TEST_CASE("overrides win and change the digest") {
  const auto a = parse_config("[sampler]\nseed = 1\n");
  const auto b = parse_config("[sampler]\nseed = 1\n", {"sampler.seed=2"});
  CHECK(b.sampler.seed == 2);
  CHECK(a.digest() != b.digest());
  CHECK(a.digest() == parse_config("", {"sampler.seed=1"}).digest());
  CHECK(a.digest().size() == 16);
  CHECK(a.canonical().find("sampler.seed = 1\n") != std::string::npos);
}

TEST_CASE("denoiser flag forms") {
  auto cfg = parse_config("");
  apply_denoiser_flag(cfg, "external:python3 mock.py --mode echo");
  CHECK(cfg.denoiser.kind == "external");
  CHECK(cfg.denoiser.command == "python3 mock.py --mode echo");
  CHECK_THROWS_AS(apply_denoiser_flag(cfg, "gpu"), ConfigError);
}

TEST_CASE("generate writes image, latent and metrics with the digest") {
  const auto dir = fresh_dir("generate");
  std::ostringstream log;
  auto o = opts_in(dir, {"output.name=pano"});
  REQUIRE(cmd_generate(o, log) == 0);
  CHECK(fs::exists(dir / "pano.pgm"));
  CHECK(fs::exists(dir / "pano.plat"));
  const auto digest = load_config("", o.sets).digest();
  CHECK(slurp(dir / "pano.pgm").find(digest) != std::string::npos);
  const auto csv = slurp(dir / "metrics.csv");
  CHECK(csv.rfind(metrics_csv_header(), 0) == 0);
  CHECK(csv.find("spotdiffusion,64,16,16,10,0,4,40,") != std::string::npos);
  CHECK(csv.find(digest) != std::string::npos);
  const auto p = read_plat((dir / "pano.plat").string());
  CHECK(p.width() == 64);
  CHECK(p.height() == 4);
  CHECK(p.channels() == 2);
}

TEST_CASE("generate is reproducible byte for byte") {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  std::ostringstream log;
  auto oa = opts_in(a, {"output.name=x", "sampler.seed=17"});
  auto ob = opts_in(b, {"output.name=x", "sampler.seed=17"});
  REQUIRE(cmd_generate(oa, log) == 0);
  REQUIRE(cmd_generate(ob, log) == 0);
  CHECK(slurp(a / "x.plat") == slurp(b / "x.plat"));
  CHECK(slurp(a / "x.pgm") == slurp(b / "x.pgm"));
}

TEST_CASE("every output embeds the config digest") {
  const auto dir = fresh_dir("digest");
  std::ostringstream log;
  auto o = opts_in(dir, {"output.name=d"});
  REQUIRE(cmd_generate(o, log) == 0);
  const auto digest = load_config("", o.sets).digest();
  CHECK(slurp(dir / "d.plat").find(digest) != std::string::npos);
  CHECK(slurp(dir / "d.pgm").find(digest) != std::string::npos);
}

TEST_CASE("multidiffusion stride 16 on 256 columns logs 13 calls per step") {
  const auto dir = fresh_dir("md16");
  std::ostringstream log;
  CommandOptions o;
  o.out = dir.string();
  o.sets = {"sampler.strategy=multidiffusion", "sampler.stride=16", "sampler.height=2",
            "sampler.channels=1", "output.pgm=false"};
  REQUIRE(cmd_generate(o, log) == 0);
  CHECK(slurp(dir / "metrics.csv").find("multidiffusion,256,64,16,50,0,13,650,") != std::string::npos);
}

TEST_CASE("repeat runs consecutive seeds") {
  const auto dir = fresh_dir("repeat");
  std::ostringstream log;
  auto o = opts_in(dir, {"output.name=r"});
  o.seeds = 3;
  REQUIRE(cmd_generate(o, log) == 0);
  for (int s = 0; s < 3; ++s) CHECK(fs::exists(dir / ("r-s" + std::to_string(s) + ".plat")));
  CHECK(slurp(dir / "r-s0.plat") != slurp(dir / "r-s1.plat"));
}

TEST_CASE("compare reports the call ratio") {
  const auto dir = fresh_dir("compare");
  std::ostringstream log;
  CommandOptions o;
  o.out = dir.string();
  o.sets = {"sampler.height=2", "sampler.channels=1", "output.pgm=false", "output.raw=false"};
  o.seeds = 2;
  REQUIRE(cmd_compare(o, log) == 0);
  const auto summary = slurp(dir / "summary.csv");
  CHECK(summary.find("multidiffusion,16,13,650,3.25,2,") != std::string::npos);
  CHECK(summary.find("spotdiffusion,64,4,200,1,2,") != std::string::npos);
}

TEST_CASE("single-strategy compare matches generate") {
  const auto dir = fresh_dir("compare_one");
  std::ostringstream log;
  auto gen = opts_in(dir / "gen", {"sampler.seed=4", "output.name=one"});
  auto cmp = opts_in(dir / "cmp", {"sampler.seed=4", "output.name=one", "compare.strategies=spotdiffusion"});
  REQUIRE(cmd_generate(gen, log) == 0);
  REQUIRE(cmd_compare(cmp, log) == 0);
  int matched = 0;
  for (const auto& e : fs::directory_iterator(dir / "gen")) {
    if (e.path().extension() != ".plat") continue;
    CHECK(plat_payload(e.path()) == plat_payload(dir / "cmp" / e.path().filename()));
    ++matched;
  }
  CHECK(matched == 1);
}

TEST_CASE("record then replay through the config") {
  const auto dir = fresh_dir("record");
  const auto fixture = (dir / "run.fix").string();
  std::ostringstream log;
  auto rec = opts_in(dir / "a", {"output.name=x", "denoiser.record=" + fixture});
  REQUIRE(cmd_generate(rec, log) == 0);
  auto rep = opts_in(dir / "b", {"output.name=x", "denoiser.kind=replay", "denoiser.fixture=" + fixture});
  REQUIRE(cmd_generate(rep, log) == 0);
  CHECK(plat_payload(dir / "a" / "x.plat") == plat_payload(dir / "b" / "x.plat"));
  auto other = rep;
  other.sets.push_back("sampler.seed=5");
  CHECK(cmd_generate(other, log) == 1);
}

TEST_CASE("calibration on an uncorrelated prior fails at runtime") {
  const auto dir = fresh_dir("calib");
  std::ostringstream log;
  CommandOptions o;
  o.out = dir.string();
  o.sets = {"sampler.panorama_width=32", "sampler.window_width=8", "sampler.height=2",
            "sampler.channels=1", "sampler.steps=10", "prior.length_scale=0"};
  CHECK(cmd_calibrate(o, log) == 1);
  CHECK(log.str().find("CalibrationFailed") != std::string::npos);

  o.sets.back() = "prior.length_scale=4";
  std::ostringstream ok;
  REQUIRE(cmd_calibrate(o, ok) == 0);
  const auto first = slurp(dir / "thresholds.csv");
  REQUIRE(cmd_calibrate(o, ok) == 0);
  CHECK(slurp(dir / "thresholds.csv") == first);
}

TEST_CASE("serve-check against the mock server") {
  CommandOptions o;
  o.sets = {"sampler.window_width=16", "sampler.panorama_width=64", "sampler.height=4",
            "sampler.channels=2", "sampler.steps=20"};
  std::ostringstream log;
  o.denoiser = std::string("external:") + MOCK_SERVER + " echo";
  CHECK(cmd_serve_check(o, 100, ServeExpectation::echo, log) == 0);
  o.denoiser = std::string("external:") + MOCK_SERVER + " diagonal";
  CHECK(cmd_serve_check(o, 40, ServeExpectation::analytic, log) == 0);
  o.denoiser = std::string("external:") + MOCK_SERVER + " zero";
  CHECK(cmd_serve_check(o, 5, ServeExpectation::echo, log) == 1);
  o.denoiser = std::string("external:") + MOCK_SERVER + " die-after 3";
  CHECK(cmd_serve_check(o, 5, ServeExpectation::any, log) == 1);
  o.denoiser = "mrf";
  CHECK(cmd_serve_check(o, 5, ServeExpectation::any, log) == 2);
}

TEST_CASE("command-line exit codes") {
  const auto dir = fresh_dir("cli");
  const std::string out = " --out " + dir.string();
  CHECK(run_cli("generate --set sampler.steps=5 --set sampler.height=2" + out) == 0);
  CHECK(run_cli("generate --set sampler.panorama_width=250" + out) == 2);
  CHECK(run_cli("generate --set nope.key=1" + out) == 2);
  CHECK(run_cli("generate --config /nonexistent.ini" + out) == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("generate --denoiser replay --set denoiser.fixture=/nonexistent.fix" + out) == 1);
  CHECK(run_cli("serve-check --expect telepathy --denoiser external:true" + out) == 2);
}
