#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlm/checkpoint.hpp"
#include "dlm/data.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Scratch directory holding a tiny experiment config.
struct Workspace {
  fs::path dir;

  Workspace() : dir(fs::temp_directory_path() / "dlm_test_cli") {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const json config = {
        {"data", {{"window", 16}, {"stride", 16}, {"synth", {{"sequences", 12}, {"steps", 32}}}}},
        {"model",
         {{"codebooks", 3}, {"code_dim", 4}, {"encoder_hidden", 5}, {"decoder_hidden", 5}, {"kernel_hidden", 5}, {"depth", 1}}},
        {"train", {{"epochs", 2}, {"beta_warmup_epochs", 1}, {"batch_size", 8}}},
        {"vqvae",
         {{"autoencoder", {{"epochs", 2}, {"beta_warmup_epochs", 1}}}, {"prior", {{"epochs", 2}, {"beta_warmup_epochs", 1}}}}},
        {"hmm", {{"states", 2}, {"iterations", 5}}},
        {"eval", {{"samples", 4}}}};
    std::ofstream(path("config.json")) << config.dump(2);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  // Runs the tool; stdout and stderr go to files in the workspace.
  int run(const std::string& args) const {
    const std::string cmd = std::string(DLM_CLI) + " " + args + " > " + path("stdout.txt") + " 2> " + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return status == 0 ? 0 : (status == -1 ? -1 : 1);
  }
  std::string read(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::string config() const { return " --config " + path("config.json"); }
};

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

}  // namespace

TEST_CASE("usage errors exit nonzero") {
  Workspace w;
  CHECK(w.run("") != 0);
  CHECK(w.run("frobnicate") != 0);
  CHECK(w.run("train --no-such-flag" + w.config()) != 0);
  CHECK(w.run("train --kernel lstm" + w.config() + " --out " + w.path("m.ckpt")) != 0);
  CHECK(w.run("evaluate" + w.config()) != 0);
  CHECK(w.run("train --config " + w.path("missing.json") + " --out " + w.path("m.ckpt")) != 0);
  CHECK(w.run("--help") == 0);
  CHECK(w.read("stdout.txt").find("train") != std::string::npos);
}

TEST_CASE("file errors name the path") {
  Workspace w;
  CHECK(w.run("evaluate" + w.config() + " --checkpoint " + w.path("nope.ckpt") + " --out " + w.path("r.json")) != 0);
  CHECK(w.read("stderr.txt").find(w.path("nope.ckpt")) != std::string::npos);
  std::ofstream(w.path("garbage.ckpt")) << "not a checkpoint";
  CHECK(w.run("evaluate" + w.config() + " --checkpoint " + w.path("garbage.ckpt") + " --out " + w.path("r.json")) != 0);
  CHECK(w.read("stderr.txt").find(w.path("garbage.ckpt")) != std::string::npos);
  CHECK_FALSE(fs::exists(w.path("r.json")));
}

TEST_CASE("train, evaluate, sample and usage") {
  Workspace w;
  REQUIRE(w.run("train --quiet" + w.config() + " --out " + w.path("m.ckpt") + " --log " + w.path("log.jsonl")) == 0);
  const dlm::Archive a = dlm::load_archive(w.path("m.ckpt"));
  CHECK(a.kind == "joint");
  CHECK(a.meta["epoch"] == 2);
  CHECK(a.meta["extra"]["data"]["window"] == 16);
  std::istringstream log(w.read("log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const json rec = json::parse(line);
    CHECK(rec["epoch"] == ++lines);
  }
  CHECK(lines == 2);

  REQUIRE(w.run("evaluate" + w.config() + " --checkpoint " + w.path("m.ckpt") + " --out " + w.path("r.json")) == 0);
  const json report = json::parse(w.read("r.json"));
  CHECK(report["model_kind"] == "joint");
  CHECK(report["samples"] == 4);
  CHECK(report["rmse"].size() == 4);  // 2 validation sequences x 2 windows
  CHECK(report["rmse_mean"].get<double>() > 0.0);
  CHECK_FALSE(report.contains("seconds_per_window"));
  REQUIRE(w.run("evaluate --timing --n 2" + w.config() + " --checkpoint " + w.path("m.ckpt") + " --out " +
                w.path("r2.json")) == 0);
  CHECK(json::parse(w.read("r2.json")).contains("seconds_per_window"));
  CHECK(json::parse(w.read("r2.json"))["samples"] == 2);

  REQUIRE(w.run("sample --n 100 --window 1" + w.config() + " --checkpoint " + w.path("m.ckpt") + " --out " +
                w.path("s.csv")) == 0);
  const auto rows = read_csv(w.read("s.csv"));
  REQUIRE(rows.size() == 17);
  CHECK(rows[0] == std::vector<std::string>{"t", "low.x", "mean.x", "high.x"});
  for (std::size_t r = 1; r < rows.size(); ++r) {
    REQUIRE(rows[r].size() == 4);
    CHECK(std::stoi(rows[r][0]) == static_cast<int>(r - 1));
    CHECK(std::stod(rows[r][1]) <= std::stod(rows[r][2]));
    CHECK(std::stod(rows[r][2]) <= std::stod(rows[r][3]));
  }

  std::ofstream(w.path("u.csv")) << "u1,u2\n0.1,0.2\n0.3,-0.4\n1.5,0\n-1,2\n0,0\n";
  REQUIRE(w.run("sample --n 20 --commands " + w.path("u.csv") + w.config() + " --checkpoint " + w.path("m.ckpt") +
                " --out " + w.path("s2.csv")) == 0);
  CHECK(read_csv(w.read("s2.csv")).size() == 6);

  REQUIRE(w.run("usage --n 30 --commands " + w.path("u.csv") + w.config() + " --checkpoint " + w.path("m.ckpt") +
                " --out " + w.path("usage.json")) == 0);
  const json usage = json::parse(w.read("usage.json"));
  CHECK(usage["most_selected"].size() == 5);
  REQUIRE(usage["counts"].size() == 3);
  for (std::size_t t = 0; t < 5; ++t) {
    double col = 0.0;
    for (std::size_t k = 0; k < 3; ++k) col += usage["counts"][k][t].get<double>();
    CHECK(col == 30.0);
  }
  std::ofstream(w.path("bad_u.csv")) << "v1,v2\n0,0\n";
  CHECK(w.run("usage --commands " + w.path("bad_u.csv") + w.config() + " --checkpoint " + w.path("m.ckpt") +
              " --out " + w.path("usage2.json")) != 0);
}

TEST_CASE("same seed gives byte-identical checkpoints and reports") {
  Workspace w;
  REQUIRE(w.run("train --quiet --seed 7" + w.config() + " --out " + w.path("a.ckpt")) == 0);
  REQUIRE(w.run("train --quiet --seed 7" + w.config() + " --out " + w.path("b.ckpt")) == 0);
  CHECK(w.read("a.ckpt") == w.read("b.ckpt"));
  REQUIRE(w.run("train --quiet --seed 8" + w.config() + " --out " + w.path("c.ckpt")) == 0);
  CHECK(w.read("a.ckpt") != w.read("c.ckpt"));
  REQUIRE(w.run("evaluate --seed 7" + w.config() + " --checkpoint " + w.path("a.ckpt") + " --out " + w.path("ra.json")) == 0);
  REQUIRE(w.run("evaluate --seed 7" + w.config() + " --checkpoint " + w.path("b.ckpt") + " --out " + w.path("rb.json")) == 0);
  CHECK(w.read("ra.json") == w.read("rb.json"));
}

TEST_CASE("baselines and synthetic data") {
  Workspace w;
  REQUIRE(w.run("synth" + w.config() + " --out " + w.path("data.csv")) == 0);
  const dlm::Dataset d = dlm::load_dataset(w.path("data.csv"));
  CHECK(d.train.size() == 10);
  CHECK(d.validation.size() == 2);

  REQUIRE(w.run("vqvae-train --quiet" + w.config() + " --data " + w.path("data.csv") + " --out " + w.path("vq.ckpt")) == 0);
  CHECK(dlm::load_archive(w.path("vq.ckpt")).kind == "vqvae");
  REQUIRE(w.run("evaluate" + w.config() + " --data " + w.path("data.csv") + " --checkpoint " + w.path("vq.ckpt") +
                " --out " + w.path("vq.json")) == 0);
  CHECK(json::parse(w.read("vq.json"))["model_kind"] == "vqvae");

  REQUIRE(w.run("hmm-fit --states 2 --iterations 4" + w.config() + " --data " + w.path("data.csv") + " --out " +
                w.path("hmm.ckpt")) == 0);
  const dlm::Archive h = dlm::load_archive(w.path("hmm.ckpt"));
  CHECK(h.kind == "hmm");
  CHECK(h.get("hmm.means").rows() == 2);
  REQUIRE(w.run("evaluate --raw-units" + w.config() + " --data " + w.path("data.csv") + " --checkpoint " +
                w.path("hmm.ckpt") + " --out " + w.path("hmm.json")) == 0);
  const json r = json::parse(w.read("hmm.json"));
  CHECK(r["model_kind"] == "hmm");
  CHECK(r["units"] == "raw");
}
