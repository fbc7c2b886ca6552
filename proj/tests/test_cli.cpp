// End-to-end tests of the command-line binary via std::system.
#include <doctest.h>

#include <array>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = MORPHSEG_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("morphseg_cli_" +
            std::to_string(
                std::chrono::steady_clock::now().time_since_epoch().count()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

int run(const std::string& args, const std::string& out_file = "",
        const std::string& err_file = "") {
  std::string cmd = kCli + " " + args;
  if (!out_file.empty()) cmd += " > " + out_file;
  if (!err_file.empty()) cmd += " 2> " + err_file;
  int rc = std::system(cmd.c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

const char* kCleanSpec = R"({
  "shape": [16, 32, 32], "tube_count": 1, "radius_range": [3, 3],
  "noise_sigma": 0.0, "axis_aligned": true, "seed": 7
})";

}  // namespace

TEST_CASE("cli: phantom -> acwe -> eval reaches DICE 1.0 on a clean phantom") {
  TempDir d;
  write_text(d.file("spec.json"), kCleanSpec);
  CHECK(run("phantom --spec " + d.file("spec.json") + " --out " +
            d.file("img.nrrd") + " --gt " + d.file("gt.nrrd")) == 0);
  CHECK(run("acwe --in " + d.file("img.nrrd") + " --out " +
            d.file("mask.nrrd") + " --iters 100 --log " + d.file("conv.csv"),
            d.file("acwe.out")) == 0);
  std::string acwe_out = slurp(d.file("acwe.out"));
  CHECK(acwe_out.find("iterations=") != std::string::npos);
  CHECK(acwe_out.find("converged=1") != std::string::npos);
  CHECK(run("eval --pred " + d.file("mask.nrrd") + " --gt " + d.file("gt.nrrd") +
            " --report " + d.file("report.json"),
            d.file("eval.out")) == 0);
  auto report = nlohmann::json::parse(slurp(d.file("report.json")));
  CHECK(report["dice"].get<double>() == doctest::Approx(1.0));
  CHECK(report["ji"].get<double>() == doctest::Approx(1.0));
  // stdout carries the CSV with the header row
  CHECK(slurp(d.file("eval.out"))
            .find("AP,F1,Sensitivity,Specificity,JI,DICE,mIoU") !=
        std::string::npos);
  // convergence log has the expected header
  CHECK(slurp(d.file("conv.csv")).rfind("iteration,changed_voxels,c1,c2", 0) ==
        0);
}

TEST_CASE("cli: phantom output is deterministic across invocations") {
  TempDir d;
  write_text(d.file("spec.json"), kCleanSpec);
  REQUIRE(run("phantom --spec " + d.file("spec.json") + " --out " +
              d.file("a.nrrd") + " --gt " + d.file("ga.nrrd")) == 0);
  REQUIRE(run("phantom --spec " + d.file("spec.json") + " --out " +
              d.file("b.nrrd") + " --gt " + d.file("gb.nrrd")) == 0);
  CHECK(slurp(d.file("a.nrrd")) == slurp(d.file("b.nrrd")));
  CHECK(slurp(d.file("ga.nrrd")) == slurp(d.file("gb.nrrd")));
}

TEST_CASE("cli: train then segment produces a score map of the input shape") {
  TempDir d;
  fs::create_directories(d.path / "data");
  write_text(d.file("spec.json"), R"({
    "shape": [16, 32, 32], "tube_count": 2, "radius_range": [3, 4],
    "noise_sigma": 0.1, "axis_aligned": true, "seed": 3
  })");
  REQUIRE(run("phantom --spec " + d.file("spec.json") + " --out " +
              (d.path / "data" / "img.nrrd").string() + " --gt " +
              d.file("gt.nrrd")) == 0);
  write_text(d.file("train.json"), R"({
    "steps": 2, "seed": 1, "batch_size": 2, "crop_shape": [8, 16, 16],
    "encoder_widths": [4, 4, 8], "decoder_widths": [4, 4, 4]
  })");
  REQUIRE(run("train --data " + (d.path / "data").string() + " --config " +
              d.file("train.json") + " --out " + d.file("ckpt") + " --log " +
              d.file("log.jsonl"),
              d.file("train.out")) == 0);
  CHECK(slurp(d.file("train.out")).find("steps=2") != std::string::npos);
  CHECK(fs::exists(d.file("ckpt") + "/model.bin"));
  REQUIRE(run("segment --ckpt " + d.file("ckpt") + "/model --in " +
              (d.path / "data" / "img.nrrd").string() + " --out " +
              d.file("prob.nrrd") + " --mask " + d.file("mask.nrrd") +
              " --stride 4,8,8") == 0);
  // the score map mirrors the input header geometry
  std::string hdr = slurp(d.file("prob.nrrd"));
  CHECK(hdr.find("sizes: 32 32 16") != std::string::npos);
  CHECK(fs::exists(d.file("mask.nrrd")));
}

TEST_CASE("cli: gradcheck op scope exits 0") {
  TempDir d;
  CHECK(run("gradcheck --scope op", d.file("gc.out")) == 0);
  std::string out = slurp(d.file("gc.out"));
  CHECK(out.find("overall max_rel_err=") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);
}

TEST_CASE("cli: error contract uses distinct exit codes and one-line stderr") {
  TempDir d;
  // unknown flag -> CLI error (2)
  CHECK(run("acwe --no-such-flag", "", d.file("e1.txt")) == 2);
  // missing input file -> IO error (3)
  CHECK(run("acwe --in " + d.file("missing.nrrd") + " --out " +
            d.file("o.nrrd"),
            "", d.file("e2.txt")) == 3);
  std::string e2 = slurp(d.file("e2.txt"));
  CHECK(e2.rfind("error: IO", 0) == 0);
  CHECK(e2.find('\n') == e2.size() - 1);  // single line
  // invalid phantom spec values -> VOLUME error (4)
  write_text(d.file("bad.json"), R"({"shape": [0, 8, 8]})");
  CHECK(run("phantom --spec " + d.file("bad.json") + " --out " +
            d.file("o.nrrd") + " --gt " + d.file("g.nrrd"),
            "", d.file("e3.txt")) == 4);
  CHECK(slurp(d.file("e3.txt")).rfind("error: VOLUME", 0) == 0);
  // unreadable checkpoint -> IO error (3)
  CHECK(run("segment --ckpt " + d.file("nope") + " --in " + d.file("x.nrrd") +
            " --out " + d.file("y.nrrd"),
            "", d.file("e4.txt")) == 3);
}
