// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "decoding.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "imaging.hpp"
#include "oracles.hpp"
#include "toy_world.hpp"

using namespace disclip;

TEST_CASE("standard vocabulary layout") {
  const ToyWorld w = ToyWorld::standard();
  CHECK(w.attribute_count() == 9);
  CHECK(w.vocab_size() == 16);
  CHECK(w.word(w.period_token()) == ".");
  CHECK(w.word(w.eot_token()) == "<eot>");
  CHECK(*w.find("cone") == 8);
  CHECK(*w.find("a") == 9);
  CHECK_FALSE(w.find("purple"));
  CHECK_THROWS_AS(w.attribute_mask({"purple"}), Error);
  CHECK_THROWS_AS(w.attribute_mask({"photo"}), Error);
}

TEST_CASE("bad worlds are rejected") {
  CHECK_THROWS_AS(ToyWorld({"red", "red"}, {}), Error);
  CHECK_THROWS_AS(ToyWorld({"two words"}, {}), Error);
  CHECK_THROWS_AS(ToyWorld({"."}, {}), Error);
  std::vector<std::string> many;
  for (int i = 0; i < 17; ++i) many.push_back("w" + std::to_string(i));
  CHECK_THROWS_AS(ToyWorld(many, {}), Error);
}

TEST_CASE("color codes round-trip and reject noise") {
  for (std::uint32_t m = 0; m < (1u << 16); m += 37) {
    const auto c = ToyWorld::code_color(m);
    CHECK(ToyWorld::decode_color(c.data()) == m);
  }
  std::uint8_t black[3] = {0, 0, 0};
  CHECK_FALSE(ToyWorld::decode_color(black));
}

TEST_CASE("text embeds to the indicator of its attribute words") {
  const ToyWorld w = ToyWorld::standard();
  CHECK(w.encode_text("A photo of the red ball.") == w.embed_mask(w.attribute_mask({"red", "ball"})));
  CHECK(w.encode_text("RED") == w.embed_mask(w.attribute_mask({"red"})));
  const Embedding none = w.encode_text("a photo of");
  CHECK(none.values().back() == 1.0);
  CHECK(none == w.embed_mask(0));
}

TEST_CASE("image encoder recovers every region of a rendering") {
  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  ToyEncoder enc(world);
  const std::vector<std::vector<std::string>> sets{{"red", "small", "ball"}, {"blue", "cube"}, {"cone"}};
  const auto r = render_toy_scene(*world, sets);
  CHECK(r.image.width == 24 + 3 * 48);
  CHECK(r.image.height == 72);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    CHECK(enc.encode_image(extract(r.image, r.boxes[i])) == world->embed_mask(world->attribute_mask(sets[i])));
  }
  // The whole scene is a union of equally large regions.
  CHECK(enc.encode_image(r.image) ==
        world->embed_mask(world->attribute_mask({"red", "small", "ball", "blue", "cube", "cone"})));
}

TEST_CASE("blur view of a default toy scene embeds like the crop") {
  // The decoding oracles rely on this.
  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  ToyEncoder enc(world);
  for (bool adversarial : {true, false}) {
    for (const auto& layout : sample_toy_layouts(standard_attribute_groups(), 20, 2, adversarial, 3)) {
      const auto sample = build_toy_scene(*world, layout, "x", "x.png");
      const auto embs = precompute_scene_embeddings(sample.scene, sample.image, enc, ImagingConfig{});
      for (std::size_t i = 0; i < embs.all.size(); ++i) {
        CHECK(embs.all[i].blur_emb == embs.all[i].crop_emb);
        CHECK(embs.all[i].crop_emb ==
              world->embed_mask(world->attribute_mask(layout.attribute_sets[i])));
      }
    }
  }
}

TEST_CASE("tokenizer round-trip") {
  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  ToyLanguageModel lm(world, standard_lm_table(*world));
  const auto ids = lm.tokenize("A photo of the red ball.");
  CHECK(ids.size() == 7);
  CHECK(ids.back() == world->period_token());
  CHECK(lm.detokenize(ids) == "a photo of the red ball.");
  CHECK(lm.tokenize(".") == std::vector<TokenId>{world->period_token()});
  CHECK(lm.detokenize({0, world->period_token(), world->eot_token()}) == "red.");
  CHECK_THROWS_AS(lm.tokenize("purple"), Error);
  CHECK_THROWS_AS(lm.detokenize({99}), Error);
}

TEST_CASE("top_k orders by probability then id") {
  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  ToyLanguageModel lm(world, standard_lm_table(*world));
  const auto after_red = lm.top_k({0}, 4);
  REQUIRE(after_red.size() == 4);
  CHECK(after_red[0].token == world->period_token());
  for (std::size_t i = 1; i < 4; ++i) CHECK(after_red[i].token == static_cast<TokenId>(i - 1));
  CHECK(lm.top_k({0}, 1000).size() == world->vocab_size());
  double total = 0;
  for (const auto& c : lm.top_k({0}, 1000)) total += c.p;
  CHECK(total == doctest::Approx(1.0));
  CHECK(after_red[0].hidden[static_cast<std::size_t>(world->period_token())] == 1.0);
  CHECK_THROWS_AS(lm.top_k({}, 0), Error);
}

TEST_CASE("distribution follows the lookup order") {
  std::mt19937_64 rng(21);
  const auto c = testing::random_toy_case(rng);
  ToyLanguageModel lm(c.world, c.problem.table);
  for (const std::vector<TokenId>& ctx :
       std::vector<std::vector<TokenId>>{{}, {4}, {4, 0}, {4, 1, 2}, {5}, {6}}) {
    const auto ours = lm.distribution(ctx);
    const auto ref = oracle::lm_probs(c.problem, ctx);
    for (std::size_t i = 0; i < ours.size(); ++i) CHECK(ours[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  }
}

TEST_CASE("lm table rows are validated") {
  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  ToyLmTable bad;
  bad.default_row = {1.0, 2.0};
  CHECK_THROWS_AS(ToyLanguageModel(world, bad), Error);
  bad.default_row.assign(world->vocab_size(), 1.0);
  bad.default_row[3] = 0.0;
  CHECK_THROWS_AS(ToyLanguageModel(world, bad), Error);
}

TEST_CASE("world files parse with floor weights") {
  const auto doc = nlohmann::json::parse(R"({
    "attributes": ["hot", "cold"], "fillers": ["it"],
    "lm": {"floor": 0.5, "default": {"hot": 2}, "after": {"hot": {".": 3}}}})");
  const ToyWorldSpec spec = parse_toy_world(doc);
  CHECK(spec.world->vocab_size() == 5);
  CHECK(spec.table.default_row == std::vector<double>{2, 0.5, 0.5, 0.5, 0.5});
  CHECK(spec.table.after.at(0) == std::vector<double>{0.5, 0.5, 0.5, 3, 0.5});

  CHECK_THROWS_AS(parse_toy_world(nlohmann::json::parse(R"({"fillers": []})")), Error);
  CHECK_THROWS_AS(parse_toy_world(nlohmann::json::parse(
                      R"({"attributes": ["x"], "lm": {"default": {"nope": 1}}})")),
                  Error);
  CHECK_THROWS_AS(load_toy_world("/nonexistent/world.json"), Error);
}

TEST_CASE("layout sampling") {
  const auto groups = standard_attribute_groups();
  const auto a = sample_toy_layouts(groups, 50, 2, true, 9);
  CHECK(a.size() == 50);
  const auto again = sample_toy_layouts(groups, 50, 2, true, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].attribute_sets == again[i].attribute_sets);
    CHECK(a[i].target_index == again[i].target_index);
  }
  for (const auto& l : a) {
    REQUIRE(l.attribute_sets.size() == 3);
    const auto& t = l.attribute_sets[l.target_index];
    std::set<std::vector<std::string>> seen;
    std::size_t shared_group = 99;
    for (std::size_t r = 0; r < 3; ++r) {
      seen.insert(l.attribute_sets[r]);
      if (r == l.target_index) continue;
      std::size_t diffs = 0;
      for (std::size_t g = 0; g < t.size(); ++g) {
        if (l.attribute_sets[r][g] != t[g]) {
          ++diffs;
          if (shared_group == 99) shared_group = g;
          CHECK(g == shared_group);
        }
      }
      CHECK(diffs == 1);
    }
    CHECK(seen.size() == 3);
  }
  for (const auto& l : sample_toy_layouts(groups, 50, 3, false, 4)) {
    for (std::size_t r = 0; r < l.attribute_sets.size(); ++r) {
      if (r != l.target_index) CHECK(l.attribute_sets[r] != l.attribute_sets[l.target_index]);
    }
  }
  // Only colors have more than 3 values.
  CHECK_THROWS_AS(sample_toy_layouts(groups, 1, 4, true, 0), Error);
  CHECK_THROWS_AS(sample_toy_layouts({}, 1, 1, false, 0), Error);
}

TEST_CASE("built scenes validate and name the target") {
  const ToyWorld w = ToyWorld::standard();
  const ToyLayout layout{{{"red", "ball"}, {"blue", "ball"}}, 1};
  const auto s = build_toy_scene(w, layout, "id7", "img.png");
  CHECK(s.scene.target_id == "r1");
  CHECK(s.scene.ground_truth == std::vector<std::string>{"blue ball"});
  CHECK(s.scene.width == 120);
  CHECK(s.scene.height == 72);
  CHECK(validate_scene(s.scene, s.image.width, s.image.height) == s.scene);
}

TEST_CASE("standard table without guidance says one attribute and a period") {
  auto world = std::make_shared<const ToyWorld>(ToyWorld::standard());
  ToyLanguageModel lm(world, standard_lm_table(*world));
  ToyEncoder enc(world);
  Hyperparameters hp;
  hp.beta = 0.0;
  const auto embs = testing::toy_embeddings(*world, {world->attribute_mask({"green", "cone"})}, 0);
  const auto res = generate(embs, lm, enc, hp);
  CHECK(res.expression == "red.");
  CHECK(res.stop_reason == StopReason::kStopToken);
}
