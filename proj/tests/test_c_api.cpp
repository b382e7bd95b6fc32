// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared library through its C header only.

#include <disclip/disclip.h>

#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("disclip-capi-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Engine {
  disclip_engine* ptr = nullptr;
  Engine() { REQUIRE(disclip_engine_create_toy(nullptr, &ptr) == DISCLIP_OK); }
  ~Engine() { disclip_engine_free(ptr); }
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(disclip_version()) == "0.1.0");
  CHECK(std::string(disclip_status_name(DISCLIP_OK)) == "ok");
  CHECK(std::string(disclip_status_name(DISCLIP_ERR_CONFIG)) == "config");
}

TEST_CASE("setters validate and report") {
  Engine e;
  CHECK(disclip_engine_set_real(e.ptr, "lambda", 0.5) == DISCLIP_OK);
  CHECK(disclip_engine_set_real(e.ptr, "lambda", 1.5) == DISCLIP_ERR_CONFIG);
  CHECK(std::string(disclip_last_error()).find("lambda") != std::string::npos);
  CHECK(disclip_engine_set_real(e.ptr, "gamma", 0.5) == DISCLIP_ERR_CONFIG);
  CHECK(disclip_engine_set_int(e.ptr, "k", 0) == DISCLIP_ERR_CONFIG);
  CHECK(disclip_engine_set_int(e.ptr, "workers", 2) == DISCLIP_OK);
  CHECK(disclip_engine_set_string(e.ptr, "norm_mode", "raw") == DISCLIP_OK);
  CHECK(disclip_engine_set_string(e.ptr, "norm_mode", "loud") == DISCLIP_ERR_CONFIG);
  CHECK(disclip_engine_set_string(e.ptr, "crop_style", "mirror") == DISCLIP_OK);
  const int32_t stops[] = {15};
  CHECK(disclip_engine_set_stop_tokens(e.ptr, stops, 1) == DISCLIP_OK);
  CHECK(disclip_engine_set_stop_tokens(e.ptr, nullptr, 0) == DISCLIP_OK);
  CHECK(disclip_engine_set_real(nullptr, "lambda", 0.5) == DISCLIP_ERR_INVALID_ARGUMENT);
  disclip_engine* none = nullptr;
  CHECK(disclip_engine_create_toy("/nonexistent/world.json", &none) == DISCLIP_ERR_IO);
  CHECK(none == nullptr);
}

TEST_CASE("end-to-end toy pipeline") {
  TempDir dir;
  const std::string scenes = dir.file("scenes");
  REQUIRE(disclip_write_toy_scenes(nullptr, scenes.c_str(), 6, 1, 1, 11) == DISCLIP_OK);
  CHECK(fs::exists(scenes + "/toy-0000.png"));
  REQUIRE(fs::exists(scenes + "/scenes.jsonl"));

  Engine e;
  REQUIRE(disclip_engine_set_real(e.ptr, "lambda", 0.5) == DISCLIP_OK);
  disclip_run_summary summary{};
  const std::string gen = dir.file("gen.jsonl");
  REQUIRE(disclip_run_generate(e.ptr, scenes.c_str(), gen.c_str(), 0, &summary) == DISCLIP_OK);
  CHECK(summary.processed == 6);
  CHECK(summary.failed == 0);
  CHECK(read_lines(gen).size() == 6);

  const std::string eval = dir.file("eval.jsonl");
  REQUIRE(disclip_run_evaluate(e.ptr, gen.c_str(), scenes.c_str(), eval.c_str(), &summary) == DISCLIP_OK);
  const auto lines = read_lines(eval);
  REQUIRE(lines.size() == 7);
  CHECK(json::parse(lines.back())["summary"]["listener_accuracy"] == 1.0);

  const double deltas[] = {0.5};
  const double lambdas[] = {0.5, 1.0};
  const std::string csv = dir.file("sweep.csv");
  REQUIRE(disclip_run_sweep(e.ptr, scenes.c_str(), deltas, 1, lambdas, 2, 200, 0, csv.c_str(), &summary) ==
          DISCLIP_OK);
  CHECK(summary.processed == 2);
  CHECK(read_lines(csv).size() == 3);
  double d = -1, l = -1, acc = -1;
  REQUIRE(disclip_sweep_best(csv.c_str(), &d, &l, &acc) == DISCLIP_OK);
  CHECK(d == 0.5);
  CHECK(l == 0.5);
  CHECK(acc == 1.0);

  const char* names[] = {"adv"};
  const char* paths[] = {scenes.c_str()};
  const std::string table = dir.file("ablation.csv");
  REQUIRE(disclip_run_ablation(e.ptr, names, paths, 1, table.c_str()) == DISCLIP_OK);
  const auto rows = read_lines(table);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "representation,adv");

  // Single scene through disclip_generate.
  std::ifstream in(scenes + "/scenes.jsonl");
  std::string first;
  std::getline(in, first);
  json doc = json::parse(first);
  doc["image"] = (fs::path(scenes) / doc["image"].get<std::string>()).string();
  disclip_result* result = nullptr;
  REQUIRE(disclip_generate(e.ptr, doc.dump().c_str(), &result) == DISCLIP_OK);
  CHECK(std::string(disclip_result_stop_reason(result)) == "stop_token");
  CHECK(disclip_result_token_count(result) >= 1);
  CHECK(json::parse(disclip_result_trace_json(result)).size() == disclip_result_token_count(result));
  CHECK(json::parse(read_lines(gen)[0])["expression"] == disclip_result_expression(result));
  disclip_result_free(result);
}

TEST_CASE("partial failures and bad inputs") {
  TempDir dir;
  {
    std::ofstream out(dir.file("s.jsonl"));
    out << R"({"id":"gone","image":"missing.png","width":4,"height":4,)"
        << R"("regions":[{"id":"a","bbox":[0,0,2,2]}],"target_id":"a"})" << "\n";
  }
  Engine e;
  disclip_run_summary summary{};
  const std::string out = dir.file("o.jsonl");
  CHECK(disclip_run_generate(e.ptr, dir.file("s.jsonl").c_str(), out.c_str(), 0, &summary) ==
        DISCLIP_ERR_PARTIAL);
  CHECK(summary.failed == 1);
  CHECK(json::parse(read_lines(out)[0])["error"]["kind"] == "io");

  disclip_result* result = nullptr;
  CHECK(disclip_generate(e.ptr, "{not json", &result) == DISCLIP_ERR_PARSE);
  CHECK(result == nullptr);
  CHECK(disclip_run_generate(e.ptr, dir.file("none.jsonl").c_str(), out.c_str(), 0, &summary) ==
        DISCLIP_ERR_IO);

  const double bad[] = {2.0};
  CHECK(disclip_run_sweep(e.ptr, dir.file("s.jsonl").c_str(), bad, 1, bad, 1, 1, 0, out.c_str(), &summary) ==
        DISCLIP_ERR_CONFIG);
}

TEST_CASE("convert writes scene lines") {
  TempDir dir;
  {
    std::ofstream out(dir.file("in.json"));
    out << R"({"images": [{"id": 1, "file_name": "a.jpg", "width": 40, "height": 40}],
      "annotations": [{"id": 1, "image_id": 1, "bbox": [0, 0, 10, 10]},
                      {"id": 2, "image_id": 1, "bbox": [20, 20, 10, 10]}],
      "refs": [{"ref_id": 1, "ann_id": 2, "image_id": 1, "sentences": ["right box"]},
               {"ref_id": 2, "ann_id": 1, "image_id": 1, "sentences": ["both"], "group": true}]})";
  }
  size_t written = 0, skipped = 0;
  const std::string out = dir.file("out.jsonl");
  REQUIRE(disclip_convert(dir.file("in.json").c_str(), "refcoco_like", nullptr, out.c_str(), &written,
                          &skipped) == DISCLIP_OK);
  CHECK(written == 1);
  CHECK(skipped == 1);
  const auto doc = json::parse(read_lines(out).at(0));
  CHECK(doc["target_id"] == "ann2");
  CHECK(doc["regions"].size() == 2);
  CHECK(disclip_convert(dir.file("in.json").c_str(), "coco", nullptr, out.c_str(), &written, &skipped) ==
        DISCLIP_ERR_CONFIG);
}

TEST_CASE("remote engine over the toy server") {
  std::promise<int> ready;
  auto port = ready.get_future();
  std::thread server([&] {
    disclip_serve_toy(nullptr, "127.0.0.1:0", 1,
                      [](int p, void* user) { static_cast<std::promise<int>*>(user)->set_value(p); },
                      &ready);
  });
  const std::string endpoint = "127.0.0.1:" + std::to_string(port.get());
  {
    disclip_engine* remote = nullptr;
    REQUIRE(disclip_engine_connect(endpoint.c_str(), &remote) == DISCLIP_OK);
    TempDir dir;
    REQUIRE(disclip_write_toy_scenes(nullptr, dir.file("s").c_str(), 2, 1, 1, 3) == DISCLIP_OK);
    disclip_run_summary summary{};
    CHECK(disclip_run_generate(remote, dir.file("s").c_str(), dir.file("g.jsonl").c_str(), 0, &summary) ==
          DISCLIP_OK);
    CHECK(summary.processed == 2);
    disclip_engine_free(remote);
  }
  server.join();

  disclip_engine* nothing = nullptr;
  CHECK(disclip_engine_connect("unix:/nonexistent/x.sock", &nothing) == DISCLIP_ERR_BACKEND);
}
