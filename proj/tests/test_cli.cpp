// Drives the installed command-line binary end to end through temporary
// directories: synth -> train -> eval pipeline, accounting output, config
// schema rejection, and the run manifest contract.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = RPPG_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rppg_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  os << j.dump(2);
}

}  // namespace

TEST_CASE("count prints the reference parameter budget") {
  TempDir tmp("count");
  const fs::path log = tmp.path / "log.txt";
  CHECK(run("count --c1 16 --c2 32 --order 2", log) == 0);
  const std::string out = slurp(log);
  CHECK(out.find("params=5249") != std::string::npos);
  CHECK(out.find("macs=") != std::string::npos);
}

TEST_CASE("unknown config keys are rejected with a schema error and exit code 2") {
  TempDir tmp("schema");
  write_json(tmp.path / "bad.json", {{"frames", 64}, {"typo_key", 1}, {"another_bad", 2}});
  const fs::path log = tmp.path / "log.txt";
  CHECK(run("--config " + (tmp.path / "bad.json").string() + " --out " + (tmp.path / "o").string() +
                " synth",
            log) == 2);
  const std::string out = slurp(log);
  CHECK(out.find("error: config:") != std::string::npos);
  CHECK(out.find("typo_key") != std::string::npos);
  CHECK(out.find("another_bad") != std::string::npos);
}

TEST_CASE("synth -> train -> eval pipeline with the shift-adaptive loss") {
  TempDir tmp("pipe");
  const fs::path log = tmp.path / "log.txt";

  // synth: two subjects with known offsets
  json synth_cfg;
  synth_cfg["frames"] = 256;
  synth_cfg["height"] = 8;
  synth_cfg["width"] = 8;
  synth_cfg["videos_per_subject"] = 1;
  synth_cfg["subjects"] = json::array({
      {{"subject_id", "s01"},
       {"hr_trajectory", {{0.0, 70.0}, {8.5, 100.0}}},
       {"true_offset", 3},
       {"modulation_depth", 0.15},
       {"noise_sigma", 0.01},
       {"seed", 1}},
      {{"subject_id", "s02"},
       {"hr_trajectory", {{0.0, 95.0}, {8.5, 120.0}}},
       {"true_offset", -2},
       {"modulation_depth", 0.15},
       {"noise_sigma", 0.01},
       {"seed", 2}},
  });
  write_json(tmp.path / "synth.json", synth_cfg);
  const fs::path synth_out = tmp.path / "synth_out";
  REQUIRE(run("--config " + (tmp.path / "synth.json").string() + " --out " + synth_out.string() +
                  " synth",
              log) == 0);
  const fs::path manifest = synth_out / "cohort" / "manifest.json";
  REQUIRE(fs::exists(manifest));
  REQUIRE(fs::exists(synth_out / "run_manifest.json"));

  // train with talos
  json train_cfg;
  train_cfg["cohort_manifest"] = manifest.string();
  train_cfg["train"] = {{"loss", "talos"}, {"order", 2},     {"c1", 4},   {"c2", 8},
                        {"epochs", 12},    {"batch_size", 2}, {"seed", 3}, {"sgd_lr", 0.01}};
  write_json(tmp.path / "train.json", train_cfg);
  const fs::path train_out = tmp.path / "train_out";
  REQUIRE(run("--config " + (tmp.path / "train.json").string() + " --out " + train_out.string() +
                  " train",
              log) == 0);
  REQUIRE(fs::exists(train_out / "checkpoint.rtc"));
  REQUIRE(fs::exists(train_out / "train_log.jsonl"));
  REQUIRE(fs::exists(train_out / "theta_registry.tsv"));

  const std::string registry = slurp(train_out / "theta_registry.tsv");
  CHECK(registry.find("s01") != std::string::npos);
  CHECK(registry.find("s02") != std::string::npos);

  // the training log is line-delimited json with epoch and loss fields
  {
    std::ifstream is(train_out / "train_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
      const json e = json::parse(line);
      CHECK(e.contains("epoch"));
      CHECK(e.contains("loss"));
      CHECK(e.contains("wall_ms"));
      ++lines;
    }
    CHECK(lines == 12);
  }

  // eval, whole-video protocol with signal dumps
  json eval_cfg;
  eval_cfg["checkpoint"] = (train_out / "checkpoint.rtc").string();
  eval_cfg["cohort_manifest"] = manifest.string();
  eval_cfg["protocol"] = "whole_video";
  eval_cfg["dump_signals"] = true;
  write_json(tmp.path / "eval.json", eval_cfg);
  const fs::path eval_out = tmp.path / "eval_out";
  REQUIRE(run("--config " + (tmp.path / "eval.json").string() + " --out " + eval_out.string() +
                  " eval",
              log) == 0);
  REQUIRE(fs::exists(eval_out / "report.json"));
  REQUIRE(fs::exists(eval_out / "report.csv"));
  REQUIRE(fs::exists(eval_out / "signals_v000.csv"));

  const json report = json::parse(slurp(eval_out / "report.json"));
  CHECK(report["protocol"] == "whole_video");
  CHECK(report["items"].size() == 2);
  CHECK(report["params"].get<long long>() == 449);  // c1=4, c2=8, order=2

  // run manifest records the config hash and artifact list
  const json rm = json::parse(slurp(eval_out / "run_manifest.json"));
  CHECK(rm["command"] == "eval");
  CHECK(rm.contains("config_hash"));
  CHECK(rm["artifacts"].size() >= 3);

  // every artifact the pipeline declared lives inside its output directory
  for (const fs::path out_dir : {synth_out, train_out, eval_out}) {
    const json m = json::parse(slurp(out_dir / "run_manifest.json"));
    for (const auto& artifact : m["artifacts"]) {
      const std::string a = artifact.get<std::string>();
      CHECK(a.find(out_dir.string()) == 0);
      CHECK(fs::exists(a));
    }
  }
}

TEST_CASE("gradcheck subcommand passes at the stated tolerance") {
  TempDir tmp("gc");
  const fs::path log = tmp.path / "log.txt";
  CHECK(run("gradcheck --seeds 3", log) == 0);
  const std::string out = slurp(log);
  CHECK(out.find("FAIL") == std::string::npos);
  CHECK(out.find("conv2d") != std::string::npos);
  CHECK(out.find("model+talos composite") != std::string::npos);
}

TEST_CASE("sgd_lr without the talos loss is a schema error") {
  TempDir tmp("sgdlr");
  json cfg;
  cfg["cohort_manifest"] = "nonexistent.json";
  cfg["train"] = {{"loss", "mse"}, {"sgd_lr", 0.01}};
  write_json(tmp.path / "bad.json", cfg);
  const fs::path log = tmp.path / "log.txt";
  CHECK(run("--config " + (tmp.path / "bad.json").string() + " --out " + (tmp.path / "o").string() +
                " train",
            log) == 2);
  CHECK(slurp(log).find("sgd_lr") != std::string::npos);
}
