// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core.hpp"
#include "image.hpp"

namespace disclip {

struct TokenCandidate {
  TokenId token = 0;
  double p = 0.0;
  Embedding hidden;
};

// Causal language model. top_k returns min(k, vocab_size) candidates sorted
// by probability descending, ties by token id ascending. Implementations are
// deterministic for a fixed context. One caller at a time per instance.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::vector<TokenId> tokenize(const std::string& text) = 0;
  virtual std::string detokenize(const std::vector<TokenId>& tokens) = 0;
  virtual std::vector<TokenCandidate> top_k(const std::vector<TokenId>& context, int k) = 0;
  virtual TokenId eot_token() const = 0;
  virtual std::size_t vocab_size() const = 0;
};

// Visual-semantic encoder with a shared text/image space of fixed width.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual Embedding encode_text(const std::string& text) = 0;
  virtual Embedding encode_image(const Image& image) = 0;
  virtual std::size_t dim() const = 0;
};

// A language model and encoder served together, as by one bridge process.
struct Backend {
  std::shared_ptr<LanguageModel> lm;
  std::shared_ptr<Encoder> encoder;
};

}  // namespace disclip
