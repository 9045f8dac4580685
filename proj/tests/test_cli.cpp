// End-to-end checks of the command line tool: every subcommand runs from a
// config file, artifacts are byte-identical across reruns (metadata sidecars
// excluded), and error paths return nonzero with a machine-readable record.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "hmpcnn/io.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("HMPCNN_CLI");
  REQUIRE_MESSAGE(p != nullptr, "HMPCNN_CLI must point at the built binary");
  return p;
}

fs::path work_dir() {
  const char* p = std::getenv("HMPCNN_TEST_TMP");
  fs::path dir = p ? fs::path(p) : fs::temp_directory_path() / "hmpcnn_cli_tests";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) { return hmpcnn::io::read_text(p.string()); }

}  // namespace

TEST_CASE("cli pipeline: gen-model, sample, train, eval-risk") {
  const fs::path dir = work_dir() / "pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);

  write(dir / "model.json.cfg", R"({
    "level": 1, "family": "affine-clamped", "seed": 3, "d1": 4, "d2": 4,
    "out_model": "model.json", "audit_pairs": 200
  })");
  CHECK(run("gen-model --config " + (dir / "model.json.cfg").string() + " --out " +
            dir.string()) == 0);
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "model.json.meta.json"));

  write(dir / "sample.cfg", R"({
    "model": "model.json", "n": 64, "seed": 5,
    "out_data": "data.bin", "out_csv": "data.csv"
  })");
  CHECK(run("sample --config " + (dir / "sample.cfg").string() + " --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "data.bin"));
  CHECK(fs::exists(dir / "data.csv"));

  write(dir / "train.cfg", R"({
    "data": "data.bin",
    "schedule": {"level": 1, "p": 1.0, "c1": 0.5, "c4": 4, "c5": 4, "scale": 0.2},
    "train": {"optimizer": "adam", "step_size": 0.02, "epochs": 20, "restarts": 1, "seed": 9},
    "out_weights": "weights.bin", "out_report": "train_report.json", "out_losses": "losses.csv"
  })");
  CHECK(run("train --config " + (dir / "train.cfg").string() + " --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "weights.bin"));
  CHECK(fs::exists(dir / "losses.csv"));

  write(dir / "risk.cfg", R"({
    "model": "model.json", "weights": "weights.bin", "mc": 2000, "seed": 13,
    "out_report": "risk.json"
  })");
  CHECK(run("eval-risk --config " + (dir / "risk.cfg").string() + " --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "risk.json"));
  const std::string risk = slurp(dir / "risk.json");
  CHECK(risk.find("\"excess01\"") != std::string::npos);
  CHECK(risk.find("\"config_hash\"") != std::string::npos);
  CHECK(risk.find("\"tool_version\"") != std::string::npos);
}

TEST_CASE("reruns produce byte-identical artifacts") {
  const fs::path dir = work_dir() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");

  const std::string model_cfg = R"({
    "level": 1, "family": "soft-max-blend", "seed": 21, "d1": 4, "d2": 4,
    "out_model": "model.json", "audit_pairs": 100
  })";
  write(dir / "m.cfg", model_cfg);
  REQUIRE(run("gen-model --config " + (dir / "m.cfg").string() + " --out " +
              (dir / "a").string()) == 0);
  REQUIRE(run("gen-model --config " + (dir / "m.cfg").string() + " --out " +
              (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "model.json") == slurp(dir / "b" / "model.json"));
  CHECK(slurp(dir / "a" / "model.json.summary.json") ==
        slurp(dir / "b" / "model.json.summary.json"));

  write(dir / "a" / "s.cfg", R"({"model":"model.json","n":32,"seed":2,"out_data":"d.bin","out_csv":"d.csv"})");
  REQUIRE(run("sample --config " + (dir / "a" / "s.cfg").string() + " --out " +
              (dir / "a").string()) == 0);
  REQUIRE(run("sample --config " + (dir / "a" / "s.cfg").string() + " --out " +
              (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "d.bin") == slurp(dir / "b" / "d.bin"));
  CHECK(slurp(dir / "a" / "d.csv") == slurp(dir / "b" / "d.csv"));

  // thread count must not change artifacts
  REQUIRE(run("sample --config " + (dir / "a" / "s.cfg").string() + " --out " +
              (dir / "b").string() + " --threads 4") == 0);
  CHECK(slurp(dir / "a" / "d.bin") == slurp(dir / "b" / "d.bin"));

  write(dir / "l7.cfg", R"({"K":[6,12],"grid_points":2000,"eval_points":2001,
    "out_report":"l7.json","out_csv":"l7.csv"})");
  REQUIRE(run("lemma7 --config " + (dir / "l7.cfg").string() + " --out " +
              (dir / "a").string()) == 0);
  REQUIRE(run("lemma7 --config " + (dir / "l7.cfg").string() + " --out " +
              (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "l7.json") == slurp(dir / "b" / "l7.json"));
  CHECK(slurp(dir / "a" / "l7.csv") == slurp(dir / "b" / "l7.csv"));
}

TEST_CASE("seed override changes artifacts deterministically") {
  const fs::path dir = work_dir() / "seeds";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write(dir / "m.cfg", R"({
    "level": 1, "family": "affine-clamped", "seed": 1, "d1": 4, "d2": 4,
    "out_model": "model.json", "audit_pairs": 50
  })");
  REQUIRE(run("gen-model --config " + (dir / "m.cfg").string() + " --out " + dir.string()) == 0);
  const std::string base = slurp(dir / "model.json");
  REQUIRE(run("gen-model --config " + (dir / "m.cfg").string() + " --out " + dir.string() +
              " --seed 99") == 0);
  const std::string overridden = slurp(dir / "model.json");
  CHECK(base != overridden);
  REQUIRE(run("gen-model --config " + (dir / "m.cfg").string() + " --out " + dir.string() +
              " --seed 99") == 0);
  CHECK(slurp(dir / "model.json") == overridden);
}

TEST_CASE("compile and bound checks run end to end") {
  const fs::path dir = work_dir() / "checks";
  fs::remove_all(dir);
  fs::create_directories(dir);

  write(dir / "c.cfg", R"({"level":1,"d1":4,"d2":4,"hidden_layers":1,"width":4,
    "seed":3,"images":20,"out_weights":"compiled.bin","out_report":"compile.json"})");
  CHECK(run("compile-cnn --config " + (dir / "c.cfg").string() + " --out " + dir.string()) == 0);
  const std::string rep = slurp(dir / "compile.json");
  CHECK(rep.find("\"max_abs_deviation\"") != std::string::npos);

  write(dir / "b.cfg", R"({"eps_list":[0.5,0.25],"seed":4,"cover_budget":16,"cover_points":4,
    "out_report":"bounds.json","out_csv":"bounds.csv"})");
  CHECK(run("check-bounds --config " + (dir / "b.cfg").string() + " --out " + dir.string()) == 0);

  write(dir / "l8.cfg", R"({"levels":[1],"triples":25,"grid_points":11,"seed":5,
    "out_report":"pert.json","out_csv":"pert.csv"})");
  CHECK(run("check-lemma8 --config " + (dir / "l8.cfg").string() + " --out " + dir.string()) == 0);

  write(dir / "l1.cfg", R"({"models":[{"level":1,"family":"constant","constant_value":0.75,
    "seed":1,"d1":4,"d2":4}],"mc":4000,"seed":6,"out_report":"cmp.json"})");
  CHECK(run("check-lemma1 --config " + (dir / "l1.cfg").string() + " --out " + dir.string()) == 0);
}

TEST_CASE("error paths return nonzero with diagnostics") {
  const fs::path dir = work_dir() / "errors";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // malformed JSON
  write(dir / "bad.cfg", "{nope");
  CHECK(run("gen-model --config " + (dir / "bad.cfg").string() + " --out " + dir.string()) == 1);

  // missing required field
  write(dir / "missing.cfg", R"({"family":"constant","seed":1})");
  CHECK(run("gen-model --config " + (dir / "missing.cfg").string() + " --out " + dir.string()) ==
        1);

  // unknown family
  write(dir / "fam.cfg", R"({"level":1,"family":"nope","seed":1})");
  CHECK(run("gen-model --config " + (dir / "fam.cfg").string() + " --out " + dir.string()) != 0);

  // missing input artifact names the expected path
  write(dir / "s.cfg", R"({"model":"does_not_exist.json","n":8,"seed":1,"out_data":"d.bin"})");
  CHECK(run("sample --config " + (dir / "s.cfg").string() + " --out " + dir.string()) == 2);

  // nonexistent config file
  CHECK(run("gen-model --config " + (dir / "nothere.cfg").string() + " --out " + dir.string()) ==
        2);
}
