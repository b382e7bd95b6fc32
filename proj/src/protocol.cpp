// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <thread>

#include "json.hpp"

namespace disclip::protocol {

using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void protocol_error(const std::string& what) { fail(ErrorKind::kProtocol, what); }

}  // namespace

const char* op_name(const Request& request) {
  return std::visit(Overloaded{
                        [](const HelloRequest&) { return "hello"; },
                        [](const EncodeTextRequest&) { return "encode_text"; },
                        [](const EncodeImageRequest&) { return "encode_image"; },
                        [](const TopKRequest&) { return "top_k"; },
                        [](const TokenizeRequest&) { return "tokenize"; },
                        [](const DetokenizeRequest&) { return "detokenize"; },
                    },
                    request);
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) protocol_error("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) protocol_error("base64: invalid character");
  // EVP_DecodeBlock keeps the bytes produced by '=' padding.
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::string serialize_request(const Request& request) {
  json j;
  j["op"] = op_name(request);
  std::visit(Overloaded{
                 [](const HelloRequest&) {},
                 [&](const EncodeTextRequest& r) { j["text"] = r.text; },
                 [&](const EncodeImageRequest& r) {
                   j["width"] = r.image.width;
                   j["height"] = r.image.height;
                   j["data"] = base64_encode(r.image.pixels);
                 },
                 [&](const TopKRequest& r) {
                   j["context"] = r.context;
                   j["k"] = r.k;
                 },
                 [&](const TokenizeRequest& r) { j["text"] = r.text; },
                 [&](const DetokenizeRequest& r) { j["tokens"] = r.tokens; },
             },
             request);
  return j.dump();
}

Request parse_request(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw RequestError("bad_request", std::string("request is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) {
    throw RequestError("bad_request", "request lacks a string 'op'");
  }
  const std::string op = j["op"].get<std::string>();
  try {
    if (op == "hello") return HelloRequest{};
    if (op == "encode_text") return EncodeTextRequest{j.at("text").get<std::string>()};
    if (op == "encode_image") {
      const int w = j.at("width").get<int>();
      const int h = j.at("height").get<int>();
      std::vector<std::uint8_t> data = base64_decode(j.at("data").get<std::string>());
      return EncodeImageRequest{Image(w, h, std::move(data))};
    }
    if (op == "top_k") {
      return TopKRequest{j.at("context").get<std::vector<TokenId>>(), j.at("k").get<int>()};
    }
    if (op == "tokenize") return TokenizeRequest{j.at("text").get<std::string>()};
    if (op == "detokenize") return DetokenizeRequest{j.at("tokens").get<std::vector<TokenId>>()};
  } catch (const json::exception& e) {
    throw RequestError("bad_request", "op '" + op + "': " + e.what());
  } catch (const Error& e) {
    throw RequestError("bad_request", "op '" + op + "': " + e.what());
  }
  throw RequestError("unknown_op", "unknown op '" + op + "'");
}

std::string serialize_response(const Response& response) {
  json j;
  j["ok"] = !std::holds_alternative<ErrorReply>(response);
  std::visit(Overloaded{
                 [&](const HelloReply& r) {
                   j["dim"] = r.dim;
                   j["vocab_size"] = r.vocab_size;
                   j["eot_token"] = r.eot_token;
                   j["protocol_version"] = r.protocol_version;
                 },
                 [&](const EmbeddingReply& r) { j["embedding"] = r.embedding; },
                 [&](const CandidatesReply& r) {
                   json list = json::array();
                   for (const WireCandidate& c : r.candidates) {
                     list.push_back({{"token", c.token}, {"p", c.p}, {"hidden", c.hidden}});
                   }
                   j["candidates"] = std::move(list);
                 },
                 [&](const TokensReply& r) { j["tokens"] = r.tokens; },
                 [&](const TextReply& r) { j["text"] = r.text; },
                 [&](const ErrorReply& r) {
                   j["error"] = {{"code", r.code}, {"message", r.message}};
                 },
             },
             response);
  return j.dump();
}

Response parse_response(const std::string& line, const std::string& op) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    protocol_error(std::string("malformed response: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("ok") || !j["ok"].is_boolean()) {
      protocol_error("malformed response: missing boolean 'ok'");
    }
    if (!j["ok"].get<bool>()) {
      const json& err = j.at("error");
      return ErrorReply{err.at("code").get<std::string>(), err.value("message", std::string())};
    }
    if (op == "hello") {
      return HelloReply{j.at("dim").get<std::size_t>(), j.at("vocab_size").get<std::size_t>(),
                        j.at("eot_token").get<TokenId>(), j.at("protocol_version").get<int>()};
    }
    if (op == "encode_text" || op == "encode_image") {
      return EmbeddingReply{j.at("embedding").get<std::vector<double>>()};
    }
    if (op == "top_k") {
      CandidatesReply reply;
      for (const json& c : j.at("candidates")) {
        reply.candidates.push_back({c.at("token").get<TokenId>(), c.at("p").get<double>(),
                                    c.at("hidden").get<std::vector<double>>()});
      }
      return reply;
    }
    if (op == "tokenize") return TokensReply{j.at("tokens").get<std::vector<TokenId>>()};
    if (op == "detokenize") return TextReply{j.at("text").get<std::string>()};
  } catch (const json::exception& e) {
    protocol_error("malformed response to '" + op + "': " + e.what());
  }
  protocol_error("no response schema for op '" + op + "'");
}

LineChannel::LineChannel(int fd, bool owns) : read_fd_(fd), write_fd_(fd), owns_(owns) {}

LineChannel::LineChannel(int read_fd, int write_fd, bool owns)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}

LineChannel::~LineChannel() {
  if (!owns_) return;
  ::close(read_fd_);
  if (write_fd_ != read_fd_) ::close(write_fd_);
}

bool LineChannel::read_line(std::string& line) {
  for (;;) {
    if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
      line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return true;
    }
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      protocol_error(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      if (buffer_.empty()) return false;
      protocol_error("connection closed mid-line");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void LineChannel::write_line(const std::string& line) {
  const std::string framed = line + '\n';
  std::size_t sent = 0;
  while (sent < framed.size()) {
    ssize_t n = ::send(write_fd_, framed.data() + sent, framed.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = ::write(write_fd_, framed.data() + sent, framed.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      protocol_error(std::string("write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

namespace {

std::pair<std::string, std::string> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    fail(ErrorKind::kConfig, "endpoint: expected host:port, got '" + address + "'");
  }
  return {address.substr(0, colon), address.substr(colon + 1)};
}

}  // namespace

int connect_endpoint(const std::string& endpoint) {
  std::string rest = endpoint;
  if (rest.rfind("unix:", 0) == 0) {
    std::string path = rest.substr(5);
    while (path.rfind("//", 0) == 0) path.erase(0, 1);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof addr.sun_path) fail(ErrorKind::kConfig, "endpoint: socket path too long");
    std::strncpy(addr.sun_path, path.c_str(), sizeof addr.sun_path - 1);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0 || ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const std::string reason = std::strerror(errno);
      if (fd >= 0) ::close(fd);
      fail(ErrorKind::kBackend, "cannot connect to " + endpoint + ": " + reason);
    }
    return fd;
  }
  if (rest.rfind("tcp://", 0) == 0) rest = rest.substr(6);
  const auto [host, port] = split_host_port(rest);

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    fail(ErrorKind::kBackend, "cannot resolve " + endpoint + ": " + ::gai_strerror(rc));
  }
  std::string reason = "no addresses";
  for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(found);
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return fd;
    }
    reason = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(found);
  fail(ErrorKind::kBackend, "cannot connect to " + endpoint + ": " + reason);
}

Client::Client(std::unique_ptr<LineChannel> channel) : channel_(std::move(channel)) {
  const Response r = call(HelloRequest{});
  if (const auto* err = std::get_if<ErrorReply>(&r)) {
    fail(ErrorKind::kBackend, "hello rejected: " + err->code + ": " + err->message);
  }
  hello_ = std::get<HelloReply>(r);
  if (hello_.protocol_version != kProtocolVersion) {
    protocol_error("server speaks protocol version " + std::to_string(hello_.protocol_version));
  }
  if (hello_.dim == 0) protocol_error("server advertised dim 0");
}

std::unique_ptr<Client> Client::connect(const std::string& endpoint) {
  return std::make_unique<Client>(std::make_unique<LineChannel>(connect_endpoint(endpoint)));
}

Response Client::call(const Request& request) {
  channel_->write_line(serialize_request(request));
  std::string line;
  if (!channel_->read_line(line)) protocol_error("connection closed before a response arrived");
  return parse_response(line, op_name(request));
}

namespace {

template <class Reply>
Reply expect(Client& client, const Request& request) {
  Response r = client.call(request);
  if (const auto* err = std::get_if<ErrorReply>(&r)) {
    fail(ErrorKind::kBackend, std::string("server error on '") + op_name(request) + "': " +
                                  err->code + ": " + err->message);
  }
  return std::get<Reply>(std::move(r));
}

Embedding checked_embedding(std::vector<double> values, std::size_t dim) {
  if (values.size() != dim) {
    protocol_error("embedding width " + std::to_string(values.size()) +
                   " differs from negotiated dim " + std::to_string(dim));
  }
  try {
    return Embedding(std::move(values));
  } catch (const Error& e) {
    protocol_error(std::string("invalid embedding: ") + e.what());
  }
}

class RemoteLanguageModel : public LanguageModel {
 public:
  explicit RemoteLanguageModel(std::shared_ptr<Client> client) : client_(std::move(client)) {}

  std::vector<TokenId> tokenize(const std::string& text) override {
    return expect<TokensReply>(*client_, TokenizeRequest{text}).tokens;
  }
  std::string detokenize(const std::vector<TokenId>& tokens) override {
    return expect<TextReply>(*client_, DetokenizeRequest{tokens}).text;
  }
  std::vector<TokenCandidate> top_k(const std::vector<TokenId>& context, int k) override {
    CandidatesReply reply = expect<CandidatesReply>(*client_, TopKRequest{context, k});
    if (reply.candidates.size() > static_cast<std::size_t>(k)) {
      protocol_error("top_k returned more than k candidates");
    }
    std::vector<TokenCandidate> out;
    out.reserve(reply.candidates.size());
    for (WireCandidate& c : reply.candidates) {
      if (!(c.p > 0.0 && c.p <= 1.0)) protocol_error("top_k probability outside (0, 1]");
      try {
        out.push_back({c.token, c.p, Embedding(std::move(c.hidden))});
      } catch (const Error& e) {
        protocol_error(std::string("invalid hidden state: ") + e.what());
      }
    }
    return out;
  }
  TokenId eot_token() const override { return client_->hello().eot_token; }
  std::size_t vocab_size() const override { return client_->hello().vocab_size; }

 private:
  std::shared_ptr<Client> client_;
};

class RemoteEncoder : public Encoder {
 public:
  explicit RemoteEncoder(std::shared_ptr<Client> client) : client_(std::move(client)) {}

  Embedding encode_text(const std::string& text) override {
    return checked_embedding(expect<EmbeddingReply>(*client_, EncodeTextRequest{text}).embedding,
                             dim());
  }
  Embedding encode_image(const Image& image) override {
    return checked_embedding(expect<EmbeddingReply>(*client_, EncodeImageRequest{image}).embedding,
                             dim());
  }
  std::size_t dim() const override { return client_->hello().dim; }

 private:
  std::shared_ptr<Client> client_;
};

Response dispatch(const Request& request, Backend& backend) {
  return std::visit(
      Overloaded{
          [&](const HelloRequest&) -> Response {
            return HelloReply{backend.encoder->dim(), backend.lm->vocab_size(),
                              backend.lm->eot_token(), kProtocolVersion};
          },
          [&](const EncodeTextRequest& r) -> Response {
            return EmbeddingReply{backend.encoder->encode_text(r.text).values()};
          },
          [&](const EncodeImageRequest& r) -> Response {
            return EmbeddingReply{backend.encoder->encode_image(r.image).values()};
          },
          [&](const TopKRequest& r) -> Response {
            CandidatesReply reply;
            for (TokenCandidate& c : backend.lm->top_k(r.context, r.k)) {
              reply.candidates.push_back({c.token, c.p, c.hidden.values()});
            }
            return reply;
          },
          [&](const TokenizeRequest& r) -> Response {
            return TokensReply{backend.lm->tokenize(r.text)};
          },
          [&](const DetokenizeRequest& r) -> Response {
            return TextReply{backend.lm->detokenize(r.tokens)};
          },
      },
      request);
}

}  // namespace

Backend make_remote_backend(std::shared_ptr<Client> client) {
  return {std::make_shared<RemoteLanguageModel>(client), std::make_shared<RemoteEncoder>(client)};
}

Backend connect_remote_backend(const std::string& endpoint) {
  return make_remote_backend(Client::connect(endpoint));
}

void serve_channel(LineChannel& channel, Backend& backend) {
  std::string line;
  while (channel.read_line(line)) {
    if (line.empty()) continue;
    Response response;
    try {
      response = dispatch(parse_request(line), backend);
    } catch (const RequestError& e) {
      response = ErrorReply{e.code(), e.what()};
    } catch (const std::exception& e) {
      response = ErrorReply{"backend_error", e.what()};
    }
    channel.write_line(serialize_response(response));
  }
}

void serve_tcp(const std::string& address, const std::function<Backend()>& factory,
               const std::function<void(int)>& on_ready, std::optional<int> max_connections) {
  std::string rest = address;
  if (rest.rfind("tcp://", 0) == 0) rest = rest.substr(6);
  const auto [host, port] = split_host_port(rest);

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* found = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    fail(ErrorKind::kConfig, "cannot resolve listen address " + address + ": " + ::gai_strerror(rc));
  }
  const int listener = ::socket(found->ai_family, found->ai_socktype, found->ai_protocol);
  const int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (listener < 0 || ::bind(listener, found->ai_addr, found->ai_addrlen) != 0 ||
      ::listen(listener, 16) != 0) {
    const std::string reason = std::strerror(errno);
    ::freeaddrinfo(found);
    if (listener >= 0) ::close(listener);
    fail(ErrorKind::kIo, "cannot listen on " + address + ": " + reason);
  }
  ::freeaddrinfo(found);

  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&bound), &len);
  if (on_ready) on_ready(ntohs(bound.sin_port));

  std::vector<std::thread> workers;
  for (int accepted = 0; !max_connections || accepted < *max_connections; ++accepted) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    workers.emplace_back([fd, &factory] {
      try {
        LineChannel channel(fd);
        Backend backend = factory();
        serve_channel(channel, backend);
      } catch (const std::exception&) {
        // The peer went away; nothing to report to.
      }
    });
  }
  ::close(listener);
  for (std::thread& t : workers) t.join();
}

}  // namespace disclip::protocol
