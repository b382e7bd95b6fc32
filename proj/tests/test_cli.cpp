// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Runs the disclip binary end to end in a scratch directory.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("disclip-cli-" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  // Runs the CLI with the given arguments and environment prefix; stderr is
  // kept in err.txt. Returns the exit status.
  int run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" DISCLIP_CLI_PATH "' " + args +
                            " 2> err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

std::vector<std::string> lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("generate with guidance off reproduces the language model") {
  Scratch s;
  REQUIRE(s.run("toy-scenes --out-dir scenes --count 3 --distractors 1 --adversarial") == 0);
  REQUIRE(s.run("generate --scenes scenes --beta 0 --out gen.jsonl") == 0);
  const auto out = lines(s.path("gen.jsonl"));
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto rec = json::parse(out[i]);
    CHECK(rec["scene_id"] == "toy-" + std::to_string(i).insert(0, 4 - std::to_string(i).size(), '0'));
    CHECK(rec["expression"] == "red.");
  }
  // Same through the environment.
  REQUIRE(s.run("generate --scenes scenes --out env.jsonl", "DISCLIP_BETA=0") == 0);
  CHECK(slurp(s.path("env.jsonl")) == slurp(s.path("gen.jsonl")));
  // Worker count does not change the output.
  REQUIRE(s.run("generate --scenes scenes --beta 0 --workers 3 --out par.jsonl") == 0);
  CHECK(slurp(s.path("par.jsonl")) == slurp(s.path("gen.jsonl")));
}

TEST_CASE("missing images produce error records and a nonzero exit") {
  Scratch s;
  REQUIRE(s.run("toy-scenes --out-dir scenes --count 2") == 0);
  fs::remove(s.path("scenes/toy-0001.png"));
  const int rc = s.run("generate --scenes scenes --out gen.jsonl");
  CHECK(rc != 0);
  const auto out = lines(s.path("gen.jsonl"));
  REQUIRE(out.size() == 2);
  CHECK(json::parse(out[0]).contains("expression"));
  const auto err = json::parse(out[1]);
  CHECK(err["scene_id"] == "toy-0001");
  CHECK(err["error"]["kind"] == "io");
}

TEST_CASE("evaluate ground truth and trace output") {
  Scratch s;
  REQUIRE(s.run("toy-scenes --out-dir scenes --count 5 --distractors 2") == 0);
  {
    std::ofstream out(s.path("gt.jsonl"));
    for (const auto& l : lines(s.path("scenes/scenes.jsonl"))) {
      const auto doc = json::parse(l);
      out << json{{"scene_id", doc["id"]}, {"expression", doc["ground_truth"][0]}}.dump() << "\n";
    }
  }
  REQUIRE(s.run("evaluate --expressions gt.jsonl --scenes scenes --out eval.jsonl") == 0);
  const auto out = lines(s.path("eval.jsonl"));
  REQUIRE(out.size() == 6);
  const auto summary = json::parse(out.back())["summary"];
  CHECK(summary["listener_accuracy"] == 1.0);
  CHECK(summary["bleu1"] == 1.0);

  std::ofstream(s.path("empty.jsonl")).close();
  CHECK(s.run("evaluate --expressions empty.jsonl --scenes scenes --out e2.jsonl") != 0);

  REQUIRE(s.run("generate --scenes scenes --trace --out - > traced.jsonl") == 0);
  const auto traced = json::parse(lines(s.path("traced.jsonl")).at(0));
  CHECK(traced["trace"].size() == traced["tokens"].size());
}

TEST_CASE("sweep counting, validation and best-cell reuse") {
  Scratch s;
  REQUIRE(s.run("toy-scenes --out-dir one --count 1 --adversarial") == 0);
  REQUIRE(s.run("sweep --scenes one --deltas 0,1 --lambdas 0.5,1 --out grid.csv") == 0);
  const auto rows = lines(s.path("grid.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "delta,lambda,accuracy,n");

  CHECK(s.run("sweep --scenes one --deltas 0,1.5 --lambdas 0.5 --out bad.csv") == 2);  // config
  CHECK_FALSE(fs::exists(s.path("bad.csv")));

  REQUIRE(s.run("generate --scenes one --from-sweep grid.csv --out best.jsonl") == 0);
  CHECK(slurp(s.path("err.txt")).find("using sweep cell delta=0 lambda=0.5") != std::string::npos);
}

TEST_CASE("ablate and convert") {
  Scratch s;
  REQUIRE(s.run("toy-scenes --out-dir adv --count 4 --adversarial") == 0);
  REQUIRE(s.run("ablate --set adv=adv --set again=adv --lambda 0.5 --out table.csv") == 0);
  const auto rows = lines(s.path("table.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "representation,adv,again");
  CHECK(rows[1].rfind("crop-blur,", 0) == 0);
  CHECK(s.run("ablate --set nonsense --out t.csv") != 0);

  {
    std::ofstream out(s.path("flickr.json"));
    out << R"({"images": [{"file_name": "7.jpg", "width": 30, "height": 30,
      "boxes": [{"id": "b1", "bbox": [0, 0, 10, 10]}, {"id": "b2", "bbox": [15, 15, 10, 10]}],
      "phrases": [{"id": "p", "phrase": "a cat", "box_ids": ["b1"]},
                  {"id": "q", "phrase": "cats", "box_ids": ["b1", "b2"]}]}]})";
  }
  REQUIRE(s.run("convert --input flickr.json --format flickr_like --out scenes.jsonl") == 0);
  const auto conv = lines(s.path("scenes.jsonl"));
  REQUIRE(conv.size() == 1);
  CHECK(json::parse(conv[0])["target_id"] == "b1");
  CHECK(slurp(s.path("err.txt")).find("1 group references skipped") != std::string::npos);

  {
    std::ofstream out(s.path("bad.json"));
    out << R"({"images": [{"file_name": "7.jpg", "width": 30, "height": 30,
      "boxes": [{"id": "b1", "bbox": [0, 0, 10]}], "phrases": []}]})";
  }
  CHECK(s.run("convert --input bad.json --format flickr_like --out x.jsonl") == 5);  // parse
  CHECK(slurp(s.path("err.txt")).find("$.images[0].boxes[0].bbox") != std::string::npos);
}

TEST_CASE("generate against a served toy backend") {
  Scratch s;
  REQUIRE(s.run("toy-scenes --out-dir scenes --count 2") == 0);
  REQUIRE(s.run("generate --scenes scenes --out local.jsonl") == 0);
  std::thread server([&] { s.run("serve-toy --listen 127.0.0.1:0 --max-connections 1 > port.txt"); });
  std::string port;
  for (int i = 0; i < 200 && port.empty(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    const std::string text = slurp(s.path("port.txt"));
    if (text.find('\n') != std::string::npos) port = text.substr(text.rfind(' ') + 1);
  }
  REQUIRE_FALSE(port.empty());
  while (!port.empty() && port.back() == '\n') port.pop_back();
  CHECK(s.run("generate --scenes scenes --backend 127.0.0.1:" + port + " --out remote.jsonl") == 0);
  server.join();
  CHECK(slurp(s.path("remote.jsonl")) == slurp(s.path("local.jsonl")));
}

TEST_CASE("usage errors") {
  Scratch s;
  CHECK(s.run("") != 0);
  CHECK(s.run("generate") != 0);
  CHECK(s.run("--help > help.txt") == 0);
  CHECK(slurp(s.path("help.txt")).find("sweep") != std::string::npos);
  CHECK(s.run("generate --scenes nowhere --out x.jsonl") == 4);  // io
}
