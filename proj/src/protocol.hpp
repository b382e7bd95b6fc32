// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Newline-delimited JSON protocol between the engine and model servers.
// One request per line, one response per line, strictly in order.
//
//   {"op":"hello"}                           -> {"ok":true,"dim":D,"vocab_size":V,
//                                                "eot_token":E,"protocol_version":1}
//   {"op":"encode_text","text":S}            -> {"ok":true,"embedding":[...]}
//   {"op":"encode_image","width":W,"height":H,
//    "data":base64(RGB8)}                    -> {"ok":true,"embedding":[...]}
//   {"op":"top_k","context":[ids],"k":K}     -> {"ok":true,"candidates":
//                                                [{"token":t,"p":p,"hidden":[...]}]}
//   {"op":"tokenize","text":S}               -> {"ok":true,"tokens":[ids]}
//   {"op":"detokenize","tokens":[ids]}       -> {"ok":true,"text":S}
//
// Failures: {"ok":false,"error":{"code":C,"message":M}}.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "backends.hpp"
#include "core.hpp"
#include "image.hpp"

namespace disclip::protocol {

inline constexpr int kProtocolVersion = 1;

struct HelloRequest {
  bool operator==(const HelloRequest&) const = default;
};
struct EncodeTextRequest {
  std::string text;
  bool operator==(const EncodeTextRequest&) const = default;
};
struct EncodeImageRequest {
  Image image;
  bool operator==(const EncodeImageRequest&) const = default;
};
struct TopKRequest {
  std::vector<TokenId> context;
  int k = 1;
  bool operator==(const TopKRequest&) const = default;
};
struct TokenizeRequest {
  std::string text;
  bool operator==(const TokenizeRequest&) const = default;
};
struct DetokenizeRequest {
  std::vector<TokenId> tokens;
  bool operator==(const DetokenizeRequest&) const = default;
};

using Request = std::variant<HelloRequest, EncodeTextRequest, EncodeImageRequest, TopKRequest,
                             TokenizeRequest, DetokenizeRequest>;

const char* op_name(const Request& request);

struct HelloReply {
  std::size_t dim = 0;
  std::size_t vocab_size = 0;
  TokenId eot_token = 0;
  int protocol_version = kProtocolVersion;
  bool operator==(const HelloReply&) const = default;
};
struct EmbeddingReply {
  std::vector<double> embedding;
  bool operator==(const EmbeddingReply&) const = default;
};
struct WireCandidate {
  TokenId token = 0;
  double p = 0.0;
  std::vector<double> hidden;
  bool operator==(const WireCandidate&) const = default;
};
struct CandidatesReply {
  std::vector<WireCandidate> candidates;
  bool operator==(const CandidatesReply&) const = default;
};
struct TokensReply {
  std::vector<TokenId> tokens;
  bool operator==(const TokensReply&) const = default;
};
struct TextReply {
  std::string text;
  bool operator==(const TextReply&) const = default;
};
struct ErrorReply {
  std::string code;
  std::string message;
  bool operator==(const ErrorReply&) const = default;
};

using Response = std::variant<HelloReply, EmbeddingReply, CandidatesReply, TokensReply, TextReply,
                              ErrorReply>;

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Single-line JSON, no trailing newline.
std::string serialize_request(const Request& request);
// A request the server cannot act on; code is "unknown_op" or "bad_request".
class RequestError : public Error {
 public:
  RequestError(std::string code, const std::string& what)
      : Error(ErrorKind::kProtocol, what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

Request parse_request(const std::string& line);

std::string serialize_response(const Response& response);
// The op of the request being answered decides the payload shape.
Response parse_response(const std::string& line, const std::string& op);

// Line-oriented stream over a connected file descriptor.
class LineChannel {
 public:
  explicit LineChannel(int fd, bool owns = true);
  LineChannel(int read_fd, int write_fd, bool owns);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  // Returns false on clean end of stream.
  bool read_line(std::string& line);
  void write_line(const std::string& line);

 private:
  int read_fd_;
  int write_fd_;
  bool owns_;
  std::string buffer_;
};

// "tcp://host:port", "host:port" or "unix:/path".
int connect_endpoint(const std::string& endpoint);

class Client {
 public:
  explicit Client(std::unique_ptr<LineChannel> channel);
  static std::unique_ptr<Client> connect(const std::string& endpoint);

  // Raw exchange. Transport and framing problems throw kProtocol; a
  // server-reported failure comes back as ErrorReply.
  Response call(const Request& request);

  const HelloReply& hello() const { return hello_; }

 private:
  std::unique_ptr<LineChannel> channel_;
  HelloReply hello_;
};

// LanguageModel and Encoder views over one connection. Server errors are
// raised as kBackend carrying the server's code and message; payloads whose
// width differs from the negotiated dim raise kProtocol.
Backend make_remote_backend(std::shared_ptr<Client> client);
Backend connect_remote_backend(const std::string& endpoint);

// Answers requests on one channel until end of stream.
void serve_channel(LineChannel& channel, Backend& backend);

// Accepts TCP connections on host:port and serves each on its own thread
// with a fresh backend from the factory. Blocks. `on_ready` receives the
// bound port (useful with port 0).
void serve_tcp(const std::string& address, const std::function<Backend()>& factory,
               const std::function<void(int)>& on_ready = {},
               std::optional<int> max_connections = std::nullopt);

}  // namespace disclip::protocol
