// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/socket.h>
#include <unistd.h>

#include <random>
#include <future>
#include <thread>

#include "decoding.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "protocol.hpp"
#include "toy_world.hpp"

using namespace disclip;
using namespace disclip::protocol;

namespace {

// A connected pair: one end served on a thread, the other returned.
struct Loopback {
  int fds[2] = {-1, -1};
  std::thread server;

  explicit Loopback(Backend backend) {
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    server = std::thread([fd = fds[1], backend]() mutable {
      LineChannel ch(fd);
      serve_channel(ch, backend);
    });
  }
  // Scripted server: answers each request line with the next canned line.
  explicit Loopback(std::vector<std::string> replies) {
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    server = std::thread([fd = fds[1], replies = std::move(replies)] {
      LineChannel ch(fd);
      std::string line;
      for (const auto& r : replies) {
        if (!ch.read_line(line)) return;
        ch.write_line(r);
      }
      while (ch.read_line(line)) {
      }
    });
  }
  std::unique_ptr<LineChannel> channel() { return std::make_unique<LineChannel>(fds[0]); }
  ~Loopback() {
    if (server.joinable()) server.join();
  }
};

const std::string kHello = R"({"ok":true,"dim":3,"vocab_size":5,"eot_token":4,"protocol_version":1})";

}  // namespace

TEST_CASE("base64 test vectors") {
  auto enc = [](const std::string& s) { return base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())); };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");
  std::mt19937_64 rng(51);
  for (int n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK_THROWS_AS(base64_decode("abc"), Error);
  CHECK_THROWS_AS(base64_decode("a*b="), Error);
}

TEST_CASE("requests round-trip") {
  std::mt19937_64 rng(52);
  const std::vector<Request> requests{
      HelloRequest{},
      EncodeTextRequest{"a red ball \"quoted\"\n"},
      EncodeImageRequest{testing::random_image(rng, 5, 3)},
      TopKRequest{{50256, 1, 2}, 3},
      TopKRequest{{}, 1},
      TokenizeRequest{"A photo of"},
      DetokenizeRequest{{9, 10, 11}},
  };
  for (const auto& r : requests) {
    const std::string line = serialize_request(r);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(parse_request(line) == r);
  }
  CHECK(serialize_request(EncodeTextRequest{"a red ball"}) == R"({"op":"encode_text","text":"a red ball"})");
}

TEST_CASE("responses round-trip with exact floats") {
  const std::vector<std::pair<Response, std::string>> responses{
      {HelloReply{512, 50257, 50256, 1}, "hello"},
      {EmbeddingReply{{0.1, -1.0 / 3.0, 1e-300, 123456.789}}, "encode_text"},
      {EmbeddingReply{{1.0}}, "encode_image"},
      {CandidatesReply{{{64, 0.03, {0.5, 0.25}}, {65, 0.02, {1.0 / 7.0, 2.0}}}}, "top_k"},
      {TokensReply{{1, 2, 3}}, "tokenize"},
      {TextReply{"red."}, "detokenize"},
      {ErrorReply{"unknown_op", "no such op"}, "encode_text"},
  };
  for (const auto& [r, op] : responses) CHECK(parse_response(serialize_response(r), op) == r);
}

TEST_CASE("malformed messages are rejected") {
  CHECK_THROWS_AS(parse_request("not json"), RequestError);
  try {
    parse_request(R"({"op":"nope"})");
    FAIL("expected unknown_op");
  } catch (const RequestError& e) {
    CHECK(e.code() == "unknown_op");
  }
  try {
    parse_request(R"({"op":"top_k","k":"three"})");
    FAIL("expected bad_request");
  } catch (const RequestError& e) {
    CHECK(e.code() == "bad_request");
  }
  CHECK_THROWS_AS(parse_request(R"({"op":"encode_image","width":2,"height":2,"data":"AAAA"})"), RequestError);
  CHECK_THROWS_AS(parse_response(R"({"embedding":[1]})", "encode_text"), Error);
  CHECK_THROWS_AS(parse_response(R"({"ok":true})", "encode_text"), Error);
  CHECK_THROWS_AS(parse_response("[1,2", "hello"), Error);
}

TEST_CASE("server answers unknown ops with an error code") {
  Loopback lb(make_toy_backend());
  {
    LineChannel ch(lb.fds[0]);
    ch.write_line(R"({"op":"nope"})");
    std::string line;
    REQUIRE(ch.read_line(line));
    const auto j = nlohmann::json::parse(line);
    CHECK(j["ok"] == false);
    CHECK(j["error"]["code"] == "unknown_op");

    ch.write_line(R"({"op":"tokenize","text":"purple"})");
    REQUIRE(ch.read_line(line));
    CHECK(nlohmann::json::parse(line)["error"]["code"] == "backend_error");

    ch.write_line(R"({"op":"encode_text","text":"a red ball"})");
    REQUIRE(ch.read_line(line));
    const auto ok = nlohmann::json::parse(line);
    CHECK(ok["ok"] == true);
    CHECK(ok["embedding"].size() == 10);
  }
}

TEST_CASE("remote backend reproduces the toy backend") {
  Loopback lb(make_toy_backend());
  Backend remote = make_remote_backend(std::make_shared<Client>(lb.channel()));
  Backend local = make_toy_backend();
  CHECK(remote.encoder->dim() == local.encoder->dim());
  CHECK(remote.lm->vocab_size() == local.lm->vocab_size());
  CHECK(remote.lm->eot_token() == local.lm->eot_token());

  // Conformance: sorted top_k, probabilities in (0, 1], fixed width, determinism.
  for (const std::vector<TokenId>& ctx : std::vector<std::vector<TokenId>>{{}, {0}, {14}, {9, 10, 11}}) {
    for (int k : {1, 3, 45}) {
      const auto cands = remote.lm->top_k(ctx, k);
      CHECK(cands.size() == std::min<std::size_t>(k, remote.lm->vocab_size()));
      for (std::size_t i = 0; i < cands.size(); ++i) {
        CHECK(cands[i].p > 0.0);
        CHECK(cands[i].p <= 1.0);
        if (i > 0) {
          CHECK((cands[i - 1].p > cands[i].p ||
                 (cands[i - 1].p == cands[i].p && cands[i - 1].token < cands[i].token)));
        }
      }
      const auto again = remote.lm->top_k(ctx, k);
      const auto mine = local.lm->top_k(ctx, k);
      REQUIRE(again.size() == mine.size());
      for (std::size_t i = 0; i < mine.size(); ++i) {
        CHECK(again[i].token == mine[i].token);
        CHECK(again[i].p == mine[i].p);
        CHECK(again[i].hidden == mine[i].hidden);
      }
    }
  }
  CHECK(remote.lm->tokenize("A photo of") == local.lm->tokenize("A photo of"));
  CHECK(remote.lm->detokenize({0, 14}) == "red.");

  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  const auto sample = build_toy_scene(*world, {{{"red", "ball"}, {"blue", "ball"}}, 1}, "x", "x.png");
  CHECK(remote.encoder->encode_image(sample.image) == local.encoder->encode_image(sample.image));
  CHECK(remote.encoder->encode_text("red ball").dim() == remote.encoder->dim());

  const auto remote_embs = precompute_scene_embeddings(sample.scene, sample.image, *remote.encoder, ImagingConfig{});
  const auto local_embs = precompute_scene_embeddings(sample.scene, sample.image, *local.encoder, ImagingConfig{});
  Hyperparameters hp;
  CHECK(generate(remote_embs, *remote.lm, *remote.encoder, hp) ==
        generate(local_embs, *local.lm, *local.encoder, hp));

  try {
    remote.lm->tokenize("purple");
    FAIL("expected a server error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kBackend);
    CHECK(std::string(e.what()).find("backend_error") != std::string::npos);
  }
}

TEST_CASE("embedding width must match the negotiated dim") {
  Loopback lb(std::vector<std::string>{kHello, R"({"ok":true,"embedding":[1,2]})"});
  Backend remote = make_remote_backend(std::make_shared<Client>(lb.channel()));
  try {
    remote.encoder->encode_text("x");
    FAIL("expected a protocol error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kProtocol);
    CHECK(std::string(e.what()).find("dim 3") != std::string::npos);
  }
}

TEST_CASE("bad replies surface as protocol errors") {
  {
    Loopback lb(std::vector<std::string>{kHello, "garbage"});
    Client client(lb.channel());
    CHECK_THROWS_AS(client.call(EncodeTextRequest{"x"}), Error);
  }
  {
    Loopback lb(std::vector<std::string>{kHello, R"({"ok":true,"candidates":[{"token":1,"p":1.5,"hidden":[1]}]})"});
    Backend remote = make_remote_backend(std::make_shared<Client>(lb.channel()));
    CHECK_THROWS_AS(remote.lm->top_k({}, 1), Error);
  }
  {
    Loopback lb(std::vector<std::string>{R"({"ok":true,"dim":3,"vocab_size":5,"eot_token":4,"protocol_version":2})"});
    CHECK_THROWS_AS(Client(lb.channel()), Error);
  }
  {
    // Server closes right away.
    Loopback lb(std::vector<std::string>{});
    ::shutdown(lb.fds[0], SHUT_WR);
    CHECK_THROWS_AS(Client(lb.channel()), Error);
  }
}

TEST_CASE("tcp server on an ephemeral port") {
  std::promise<int> ready;
  auto port_future = ready.get_future();
  std::thread server([&] {
    serve_tcp("127.0.0.1:0", [] { return make_toy_backend(); },
              [&](int port) { ready.set_value(port); }, 1);
  });
  const int port = port_future.get();
  {
    Backend remote = connect_remote_backend("tcp://127.0.0.1:" + std::to_string(port));
    CHECK(remote.encoder->dim() == 10);
    CHECK(remote.lm->detokenize({1}) == "blue");
  }
  server.join();
}

TEST_CASE("connection failures are backend errors") {
  try {
    connect_remote_backend("unix:/nonexistent/disclip.sock");
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kBackend);
  }
  CHECK_THROWS_AS(connect_endpoint("no-port-here"), Error);
}

TEST_CASE("toy similarity matches the closed form for small subsets") {
  const ToyWorld w = ToyWorld::standard();
  const std::uint32_t all = (1u << w.attribute_count()) - 1;
  auto small = [](std::uint32_t m) { return oracle::popcount(m) >= 1 && oracle::popcount(m) <= 4; };
  for (std::uint32_t a = 1; a <= all; ++a) {
    if (!small(a)) continue;
    std::string text;
    for (std::size_t i = 0; i < w.attribute_count(); ++i) {
      if (a & (1u << i)) text += w.attributes()[i] + " the ";
    }
    const Embedding te = w.encode_text(text);
    for (std::uint32_t b = 1; b <= all; b += 7) {
      if (!small(b)) continue;
      double dot = 0;
      const Embedding re = w.embed_mask(b);
      for (std::size_t i = 0; i < te.dim(); ++i) dot += te[i] * re[i];
      CHECK(std::abs(dot - oracle::toy_cosine(a, b)) < 1e-12);
    }
  }
  CHECK(w.encode_text("the the the") == w.embed_mask(0));
}
