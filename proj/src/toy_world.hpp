// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// A synthetic backend in which every similarity has a closed form.
//
// Text embeds as the L2-normalized indicator of the attribute words it
// contains; text without attribute words maps to a reserved extra axis.
// Scenes are rendered with each region filled by a color that encodes its
// attribute set (low byte in R, high byte in G, checksum in B) on a black
// background, so the image encoder can recover attribute sets from pixels:
// it unions the masks of every valid color covering at least a quarter as
// many pixels as the most common one. Crops of a region therefore embed to
// exactly its attribute indicator. The blur view embeds the same way once
// the blur has smeared the other regions into invalid colors, which the
// default layout and sigma guarantee; with little blur it also picks up the
// attributes of the other regions.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "backends.hpp"
#include "core.hpp"
#include "image.hpp"

namespace disclip {

class ToyWorld {
 public:
  static constexpr std::size_t kMaxAttributes = 16;

  // Token ids: attributes first, then fillers, then ".", then "<eot>".
  ToyWorld(std::vector<std::string> attributes, std::vector<std::string> fillers);

  // Colors, sizes and shapes plus the filler words of the default prompt.
  static ToyWorld standard();

  std::size_t attribute_count() const { return attributes_.size(); }
  std::size_t vocab_size() const { return words_.size(); }
  std::size_t dim() const { return attributes_.size() + 1; }
  TokenId period_token() const { return static_cast<TokenId>(words_.size() - 2); }
  TokenId eot_token() const { return static_cast<TokenId>(words_.size() - 1); }
  bool is_attribute(TokenId token) const {
    return token >= 0 && static_cast<std::size_t>(token) < attributes_.size();
  }

  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::vector<std::string>& fillers() const { return fillers_; }
  const std::string& word(TokenId token) const;
  std::optional<TokenId> find(const std::string& word) const;

  // Bit i set for attribute i. Throws kInvalidArgument on an unknown attribute.
  std::uint32_t attribute_mask(const std::vector<std::string>& attributes) const;
  Embedding embed_mask(std::uint32_t mask) const;

  Embedding encode_text(const std::string& text) const;
  Embedding encode_image(const Image& image) const;

  static std::array<std::uint8_t, 3> code_color(std::uint32_t mask);
  static std::optional<std::uint32_t> decode_color(const std::uint8_t* rgb);

 private:
  std::vector<std::string> attributes_;
  std::vector<std::string> fillers_;
  std::vector<std::string> words_;
  std::map<std::string, TokenId> index_;
};

// Next-token table. A row holds one positive weight per vocabulary word and
// is normalized on use; an empty row means uniform. Lookup order: exact
// context, then last token, then the default row.
struct ToyLmTable {
  std::vector<double> default_row;
  std::map<TokenId, std::vector<double>> after;
  std::map<std::vector<TokenId>, std::vector<double>> contexts;
};

// Attribute words are likely after the prompt; after an attribute word the
// period dominates, so expressions come out as one attribute and a period.
ToyLmTable standard_lm_table(const ToyWorld& world);

class ToyLanguageModel : public LanguageModel {
 public:
  ToyLanguageModel(std::shared_ptr<const ToyWorld> world, ToyLmTable table = {});

  std::vector<TokenId> tokenize(const std::string& text) override;
  std::string detokenize(const std::vector<TokenId>& tokens) override;
  // Hidden states are one-hot token vectors, so a repeated token has
  // degeneration penalty exactly 1.
  std::vector<TokenCandidate> top_k(const std::vector<TokenId>& context, int k) override;
  TokenId eot_token() const override { return world_->eot_token(); }
  std::size_t vocab_size() const override { return world_->vocab_size(); }

  std::vector<double> distribution(const std::vector<TokenId>& context) const;

 private:
  std::shared_ptr<const ToyWorld> world_;
  ToyLmTable table_;
};

class ToyEncoder : public Encoder {
 public:
  explicit ToyEncoder(std::shared_ptr<const ToyWorld> world) : world_(std::move(world)) {}

  Embedding encode_text(const std::string& text) override { return world_->encode_text(text); }
  Embedding encode_image(const Image& image) override { return world_->encode_image(image); }
  std::size_t dim() const override { return world_->dim(); }

 private:
  std::shared_ptr<const ToyWorld> world_;
};

Backend make_toy_backend(std::shared_ptr<const ToyWorld> world, ToyLmTable table);
Backend make_toy_backend();

// World file: {"attributes": [...], "fillers": [...],
//              "lm": {"floor": w, "default": {word: w}, "after": {word: {word: w}}}}
// Words missing from a listed row get the floor weight (default 1e-3).
// Without "lm" the standard table is used.
struct ToyWorldSpec {
  std::shared_ptr<const ToyWorld> world;
  ToyLmTable table;
};
ToyWorldSpec parse_toy_world(const nlohmann::json& doc);
ToyWorldSpec load_toy_world(const std::string& path);

struct ToyRendering {
  Image image;
  std::vector<BBox> boxes;
};

// Regions are size x size squares in one row, separated and surrounded by
// gap pixels of black background.
ToyRendering render_toy_scene(const ToyWorld& world,
                              const std::vector<std::vector<std::string>>& attribute_sets,
                              int region_size = 24, int gap = 24);

// Mutually exclusive attribute groups of the standard world: colors, sizes, shapes.
std::vector<std::vector<std::string>> standard_attribute_groups();

struct ToyLayout {
  std::vector<std::vector<std::string>> attribute_sets;  // one per region, scene order
  std::size_t target_index = 0;
};

// Each region takes one value per group. Adversarial layouts give every
// distractor the target's values except in one shared group, where each
// distractor differs (so that group needs more values than distractors).
// Random layouts draw every region independently and redraw distractors
// equal to the target. The target position is uniform. Deterministic in seed.
std::vector<ToyLayout> sample_toy_layouts(const std::vector<std::vector<std::string>>& groups,
                                          std::size_t count, std::size_t distractors,
                                          bool adversarial, std::uint64_t seed);

struct ToySample {
  Scene scene;
  Image image;
};

// Regions "r0", "r1", ...; ground truth is the target's attribute words.
ToySample build_toy_scene(const ToyWorld& world, const ToyLayout& layout, const std::string& id,
                          const std::string& image_path);

}  // namespace disclip
