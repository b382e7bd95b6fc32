// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "toy_world.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace disclip {

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(lowercase(text));
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string strip_punctuation(const std::string& w) {
  std::size_t b = 0;
  std::size_t e = w.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
  return w.substr(b, e - b);
}

constexpr const char* kPeriod = ".";
constexpr const char* kEot = "<eot>";

}  // namespace

ToyWorld::ToyWorld(std::vector<std::string> attributes, std::vector<std::string> fillers)
    : attributes_(std::move(attributes)), fillers_(std::move(fillers)) {
  if (attributes_.size() > kMaxAttributes) {
    fail(ErrorKind::kConfig, "toy world: at most 16 attribute words are supported");
  }
  for (auto* list : {&attributes_, &fillers_}) {
    for (std::string& w : *list) {
      w = lowercase(w);
      if (w.empty() || w == kPeriod || w == kEot || w.find_first_of(" \t\n") != std::string::npos) {
        fail(ErrorKind::kConfig, "toy world: invalid vocabulary word '" + w + "'");
      }
      words_.push_back(w);
    }
  }
  words_.emplace_back(kPeriod);
  words_.emplace_back(kEot);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
      fail(ErrorKind::kConfig, "toy world: duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

ToyWorld ToyWorld::standard() {
  return ToyWorld({"red", "blue", "green", "yellow", "small", "large", "ball", "cube", "cone"},
                  {"a", "photo", "of", "the", "object"});
}

const std::string& ToyWorld::word(TokenId token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= words_.size()) {
    fail(ErrorKind::kBackend, "toy tokenizer: token id out of range: " + std::to_string(token));
  }
  return words_[token];
}

std::optional<TokenId> ToyWorld::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t ToyWorld::attribute_mask(const std::vector<std::string>& attributes) const {
  std::uint32_t mask = 0;
  for (const std::string& a : attributes) {
    auto id = find(lowercase(a));
    if (!id || !is_attribute(*id)) {
      fail(ErrorKind::kInvalidArgument, "toy world: unknown attribute '" + a + "'");
    }
    mask |= 1u << *id;
  }
  return mask;
}

Embedding ToyWorld::embed_mask(std::uint32_t mask) const {
  std::vector<double> v(dim(), 0.0);
  const int count = std::popcount(mask);
  if (count == 0) {
    v.back() = 1.0;
    return Embedding(std::move(v));
  }
  const double value = 1.0 / std::sqrt(static_cast<double>(count));
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (mask & (1u << i)) v[i] = value;
  }
  return Embedding(std::move(v));
}

Embedding ToyWorld::encode_text(const std::string& text) const {
  std::uint32_t mask = 0;
  for (const std::string& raw : split_words(text)) {
    auto id = find(strip_punctuation(raw));
    if (id && is_attribute(*id)) mask |= 1u << *id;
  }
  return embed_mask(mask);
}

std::array<std::uint8_t, 3> ToyWorld::code_color(std::uint32_t mask) {
  const std::uint8_t r = static_cast<std::uint8_t>(mask & 0xFFu);
  const std::uint8_t g = static_cast<std::uint8_t>((mask >> 8) & 0xFFu);
  const std::uint8_t b = static_cast<std::uint8_t>((r * 31u + g * 17u + 101u) & 0xFFu);
  return {r, g, b};
}

std::optional<std::uint32_t> ToyWorld::decode_color(const std::uint8_t* rgb) {
  const std::uint32_t mask = rgb[0] | (static_cast<std::uint32_t>(rgb[1]) << 8);
  if (code_color(mask)[2] != rgb[2]) return std::nullopt;
  return mask;
}

Embedding ToyWorld::encode_image(const Image& image) const {
  std::unordered_map<std::uint32_t, std::size_t> counts;
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < n; ++i) {
    if (auto mask = decode_color(&image.pixels[i * 3])) ++counts[*mask];
  }
  std::size_t dominant = 0;
  for (const auto& [mask, count] : counts) dominant = std::max(dominant, count);
  std::uint32_t mask = 0;
  for (const auto& [code, count] : counts) {
    if (4 * count >= dominant) mask |= code;
  }
  // Bits beyond the vocabulary cannot come from a rendered scene.
  mask &= (attributes_.size() >= 32) ? ~0u : ((1u << attributes_.size()) - 1u);
  return embed_mask(mask);
}

ToyLmTable standard_lm_table(const ToyWorld& world) {
  const std::size_t v = world.vocab_size();
  std::vector<double> after_prompt(v, 0.01);
  std::vector<double> after_attribute(v, 0.01);
  for (std::size_t i = 0; i < world.attribute_count(); ++i) {
    after_prompt[i] = 1.0;
    after_attribute[i] = 1.0;
  }
  after_attribute[world.period_token()] = 8.0;
  std::vector<double> after_period(v, 0.01);
  after_period[world.eot_token()] = 1.0;

  ToyLmTable table;
  table.default_row = after_prompt;
  for (std::size_t i = 0; i < world.attribute_count(); ++i) {
    table.after[static_cast<TokenId>(i)] = after_attribute;
  }
  table.after[world.period_token()] = after_period;
  return table;
}

ToyLanguageModel::ToyLanguageModel(std::shared_ptr<const ToyWorld> world, ToyLmTable table)
    : world_(std::move(world)), table_(std::move(table)) {
  auto check_row = [&](const std::vector<double>& row) {
    if (row.empty()) return;
    if (row.size() != world_->vocab_size()) {
      fail(ErrorKind::kConfig, "toy lm: row length differs from the vocabulary size");
    }
    for (double w : row) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        fail(ErrorKind::kConfig, "toy lm: weights must be positive and finite");
      }
    }
  };
  check_row(table_.default_row);
  for (const auto& [_, row] : table_.after) check_row(row);
  for (const auto& [_, row] : table_.contexts) check_row(row);
}

std::vector<TokenId> ToyLanguageModel::tokenize(const std::string& text) {
  std::vector<TokenId> out;
  for (std::string w : split_words(text)) {
    bool trailing_period = false;
    if (w.size() > 1 && w.back() == '.') {
      w.pop_back();
      trailing_period = true;
    }
    auto id = world_->find(w);
    if (!id) fail(ErrorKind::kBackend, "toy tokenizer: unknown word '" + w + "'");
    out.push_back(*id);
    if (trailing_period) out.push_back(world_->period_token());
  }
  return out;
}

std::string ToyLanguageModel::detokenize(const std::vector<TokenId>& tokens) {
  std::string out;
  for (TokenId t : tokens) {
    if (t == world_->eot_token()) continue;
    const std::string& w = world_->word(t);
    if (!out.empty() && t != world_->period_token()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<double> ToyLanguageModel::distribution(const std::vector<TokenId>& context) const {
  const std::vector<double>* row = &table_.default_row;
  if (auto it = table_.contexts.find(context); it != table_.contexts.end()) {
    row = &it->second;
  } else if (!context.empty()) {
    if (auto jt = table_.after.find(context.back()); jt != table_.after.end()) row = &jt->second;
  }
  const std::size_t v = world_->vocab_size();
  std::vector<double> p = row->empty() ? std::vector<double>(v, 1.0) : *row;
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return p;
}

std::vector<TokenCandidate> ToyLanguageModel::top_k(const std::vector<TokenId>& context, int k) {
  if (k < 1) fail(ErrorKind::kInvalidArgument, "top_k: k must be >= 1");
  const std::vector<double> p = distribution(context);
  std::vector<TokenId> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return p[a] > p[b]; });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));

  std::vector<TokenCandidate> out;
  out.reserve(order.size());
  for (TokenId t : order) {
    std::vector<double> hidden(p.size(), 0.0);
    hidden[t] = 1.0;
    out.push_back({t, p[t], Embedding(std::move(hidden))});
  }
  return out;
}

Backend make_toy_backend(std::shared_ptr<const ToyWorld> world, ToyLmTable table) {
  return {std::make_shared<ToyLanguageModel>(world, std::move(table)),
          std::make_shared<ToyEncoder>(world)};
}

Backend make_toy_backend() {
  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  return make_toy_backend(world, standard_lm_table(*world));
}

ToyWorldSpec parse_toy_world(const nlohmann::json& doc) {
  try {
    auto world = std::make_shared<const ToyWorld>(
        doc.at("attributes").get<std::vector<std::string>>(),
        doc.value("fillers", std::vector<std::string>{}));
    if (!doc.contains("lm")) return {world, standard_lm_table(*world)};

    const nlohmann::json& lm = doc.at("lm");
    const double floor = lm.value("floor", 1e-3);
    auto token_of = [&](const std::string& w) {
      auto id = world->find(w);
      if (!id) fail(ErrorKind::kConfig, "toy world: lm refers to unknown word '" + w + "'");
      return *id;
    };
    auto parse_row = [&](const nlohmann::json& obj) {
      std::vector<double> row(world->vocab_size(), floor);
      for (const auto& [w, weight] : obj.items()) row[token_of(w)] = weight.get<double>();
      return row;
    };
    ToyLmTable table;
    if (lm.contains("default")) table.default_row = parse_row(lm.at("default"));
    if (lm.contains("after")) {
      for (const auto& [w, row] : lm.at("after").items()) table.after[token_of(w)] = parse_row(row);
    }
    return {world, std::move(table)};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("toy world: ") + e.what());
  }
}

ToyWorldSpec load_toy_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "toy world: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "toy world: " + path + ": " + e.what());
  }
  return parse_toy_world(doc);
}

ToyRendering render_toy_scene(const ToyWorld& world,
                              const std::vector<std::vector<std::string>>& attribute_sets,
                              int region_size, int gap) {
  if (attribute_sets.empty()) fail(ErrorKind::kInvalidArgument, "toy scene: no regions");
  if (region_size < 1 || gap < 0) fail(ErrorKind::kInvalidArgument, "toy scene: bad layout");
  const int n = static_cast<int>(attribute_sets.size());
  ToyRendering out;
  out.image = Image(gap + n * (region_size + gap), 2 * gap + region_size);
  for (int i = 0; i < n; ++i) {
    const BBox box{gap + i * (region_size + gap), gap, region_size, region_size};
    const auto color = ToyWorld::code_color(world.attribute_mask(attribute_sets[i]));
    for (int y = box.y; y < box.y + box.h; ++y) {
      for (int x = box.x; x < box.x + box.w; ++x) std::copy(color.begin(), color.end(), out.image.at(x, y));
    }
    out.boxes.push_back(box);
  }
  return out;
}

std::vector<std::vector<std::string>> standard_attribute_groups() {
  return {{"red", "blue", "green", "yellow"}, {"small", "large"}, {"ball", "cube", "cone"}};
}

namespace {

// Modulo reduction keeps sampling identical across standard libraries.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

std::vector<ToyLayout> sample_toy_layouts(const std::vector<std::vector<std::string>>& groups,
                                          std::size_t count, std::size_t distractors,
                                          bool adversarial, std::uint64_t seed) {
  if (groups.empty()) fail(ErrorKind::kInvalidArgument, "toy layouts: no attribute groups");
  std::size_t combos = 1;
  for (const auto& g : groups) {
    if (g.empty()) fail(ErrorKind::kInvalidArgument, "toy layouts: empty attribute group");
    combos *= g.size();
  }
  if (combos < 2) fail(ErrorKind::kInvalidArgument, "toy layouts: regions cannot differ");
  std::vector<std::size_t> wide;  // groups usable for the adversarial swap
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() > distractors) wide.push_back(g);
  }
  if (adversarial && wide.empty()) {
    fail(ErrorKind::kInvalidArgument, "toy layouts: no group has more values than distractors");
  }

  std::mt19937_64 rng(seed);
  auto pick = [&](std::vector<std::size_t>& choice) {
    choice.resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) choice[g] = draw(rng, groups[g].size());
  };
  std::vector<ToyLayout> out;
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<std::size_t> target;
    pick(target);
    std::vector<std::vector<std::size_t>> others;
    if (adversarial) {
      const std::size_t g = wide[draw(rng, wide.size())];
      std::vector<std::size_t> values;
      for (std::size_t v = 0; v < groups[g].size(); ++v) {
        if (v != target[g]) values.push_back(v);
      }
      for (std::size_t d = 0; d < distractors; ++d) {
        const std::size_t j = d + draw(rng, values.size() - d);
        std::swap(values[d], values[j]);
        others.push_back(target);
        others.back()[g] = values[d];
      }
    } else {
      for (std::size_t d = 0; d < distractors; ++d) {
        std::vector<std::size_t> other;
        do {
          pick(other);
        } while (other == target);
        others.push_back(other);
      }
    }
    ToyLayout layout;
    layout.target_index = draw(rng, distractors + 1);
    others.insert(others.begin() + static_cast<std::ptrdiff_t>(layout.target_index), target);
    for (const auto& choice : others) {
      std::vector<std::string> attrs;
      for (std::size_t g = 0; g < groups.size(); ++g) attrs.push_back(groups[g][choice[g]]);
      layout.attribute_sets.push_back(std::move(attrs));
    }
    out.push_back(std::move(layout));
  }
  return out;
}

ToySample build_toy_scene(const ToyWorld& world, const ToyLayout& layout, const std::string& id,
                          const std::string& image_path) {
  if (layout.target_index >= layout.attribute_sets.size()) {
    fail(ErrorKind::kInvalidArgument, "toy scene: target index out of range");
  }
  ToyRendering r = render_toy_scene(world, layout.attribute_sets);
  ToySample out{Scene{}, std::move(r.image)};
  out.scene.id = id;
  out.scene.image_path = image_path;
  out.scene.width = out.image.width;
  out.scene.height = out.image.height;
  for (std::size_t i = 0; i < r.boxes.size(); ++i) {
    out.scene.regions.push_back({"r" + std::to_string(i), r.boxes[i], layout.attribute_sets[i]});
  }
  out.scene.target_id = out.scene.regions[layout.target_index].id;
  std::string gt;
  for (const auto& a : layout.attribute_sets[layout.target_index]) gt += (gt.empty() ? "" : " ") + a;
  out.scene.ground_truth = {gt};
  return out;
}

}  // namespace disclip
