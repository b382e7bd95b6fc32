// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "decoding.hpp"
#include "io.hpp"
#include "oracles.hpp"
#include "toy_world.hpp"

namespace testing {

// In-memory scene entries for toy layouts; images never touch the disk.
inline std::vector<disclip::io::SceneEntry> toy_entries(const disclip::ToyWorld& world,
                                                        const std::vector<disclip::ToyLayout>& layouts,
                                                        const std::string& prefix = "s") {
  std::vector<disclip::io::SceneEntry> out;
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    const std::string id = prefix + std::to_string(i);
    auto sample = disclip::build_toy_scene(world, layouts[i], id, id + ".png");
    out.push_back({id, sample.scene, "", std::make_shared<const disclip::Image>(std::move(sample.image))});
  }
  return out;
}

inline disclip::Image random_image(std::mt19937_64& rng, int w, int h) {
  disclip::Image img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
  return img;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// A small random decoding problem: attributes {red, blue, ball, cube},
// filler "a" as the prompt, then "." and "<eot>" (7 tokens), a random LM
// table and random hyperparameters.
struct ToyCase {
  std::shared_ptr<const disclip::ToyWorld> world;
  oracle::ToyProblem problem;
};

inline ToyCase random_toy_case(std::mt19937_64& rng) {
  ToyCase c;
  c.world = std::make_shared<const disclip::ToyWorld>(
      std::vector<std::string>{"red", "blue", "ball", "cube"}, std::vector<std::string>{"a"});
  oracle::ToyProblem& p = c.problem;
  p.vocab = c.world->vocab_size();
  p.attributes = c.world->attribute_count();
  p.prompt = {*c.world->find("a")};
  p.stops = {c.world->period_token(), c.world->eot_token()};
  auto row = [&] {
    std::vector<double> r(p.vocab);
    for (double& w : r) w = uniform(rng, 0.05, 1.0);
    return r;
  };
  p.table.default_row = row();
  for (std::size_t t = 0; t < p.vocab; ++t) {
    if (uniform_int(rng, 0, 2) > 0) p.table.after[static_cast<disclip::TokenId>(t)] = row();
  }
  const int regions = uniform_int(rng, 1, 3);
  for (int r = 0; r < regions; ++r) {
    p.region_masks.push_back(static_cast<std::uint32_t>(uniform_int(rng, 1, 15)));
  }
  p.target = static_cast<std::size_t>(uniform_int(rng, 0, regions - 1));
  disclip::Hyperparameters& h = p.hyper;
  h.lambda = uniform(rng, 0.0, 1.0);
  h.delta = uniform(rng, 0.0, 1.0);
  h.beta = uniform(rng, 0.0, 4.0);
  h.alpha = uniform(rng, 0.0, 1.0);
  h.k = uniform_int(rng, 1, static_cast<int>(p.vocab));
  h.max_tokens = uniform_int(rng, 1, 3);
  h.norm_mode = uniform_int(rng, 0, 1) ? disclip::NormMode::kSoftmax : disclip::NormMode::kRaw;
  h.sim_mode = uniform_int(rng, 0, 1) ? disclip::SimMode::kClipScore : disclip::SimMode::kCosine;
  return c;
}

// Scene embeddings straight from the closed form: both views embed to the
// region's attribute indicator.
inline disclip::SceneEmbeddings toy_embeddings(const disclip::ToyWorld& world,
                                               const std::vector<std::uint32_t>& masks,
                                               std::size_t target) {
  disclip::SceneEmbeddings e;
  for (std::uint32_t m : masks) e.all.push_back({world.embed_mask(m), world.embed_mask(m)});
  e.target_index = target;
  e.target = e.all[target];
  for (std::size_t i = 0; i < e.all.size(); ++i) {
    if (i != target) e.distractors.push_back(e.all[i]);
  }
  return e;
}

inline disclip::GenerationResult run_engine(const ToyCase& c) {
  disclip::ToyLanguageModel lm(c.world, c.problem.table);
  disclip::ToyEncoder enc(c.world);
  disclip::DecodeSettings settings;
  settings.prompt = "a";
  settings.strip_prompt_for_clip = c.problem.strip_prompt;
  return disclip::generate(toy_embeddings(*c.world, c.problem.region_masks, c.problem.target), lm,
                           enc, c.problem.hyper, settings);
}

}  // namespace testing
