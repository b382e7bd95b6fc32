// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scene files, raster images and dataset conversion.
//
// SceneFile:
//   {"id": "...", "image": "path", "width": W, "height": H,
//    "regions": [{"id": "...", "bbox": [x, y, w, h], "attributes": [...]}],
//    "target_id": "...", "ground_truth": ["..."]}
// "id", "attributes" and "ground_truth" are optional. Relative image paths
// resolve against the directory of the file that holds the scene.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "image.hpp"
#include "json.hpp"

namespace disclip::io {

Scene scene_from_json(const nlohmann::json& doc, const std::string& base_dir,
                      const std::string& fallback_id);
nlohmann::json scene_to_json(const Scene& scene);

struct SceneEntry {
  std::string id;
  std::optional<Scene> scene;
  std::string error;  // set when the scene could not be parsed or validated
  // Preloaded pixels; when null the image is read from scene->image_path.
  std::shared_ptr<const Image> image;
};

// Accepts a .jsonl file (one scene per line), a .json file holding one
// scene or an array of scenes, or a directory of such files in name order.
// Unreadable files inside a directory become error entries.
std::vector<SceneEntry> load_scenes(const std::string& path);

// PNG, JPEG or binary PPM, detected from the file signature.
Image read_image(const std::string& path);
void write_png(const std::string& path, const Image& image);

// Image for a scene; checks the decoded size against the declared one.
Image load_scene_image(const Scene& scene);

std::vector<nlohmann::json> read_jsonl(const std::string& path);

enum class DatasetFormat { kRefcocoLike, kFlickrLike };
DatasetFormat parse_dataset_format(const std::string& text);

struct ConvertSummary {
  std::size_t written = 0;
  std::size_t skipped_group = 0;
};

// refcoco_like:
//   {"images": [{"id", "file_name", "width", "height"}],
//    "annotations": [{"id", "image_id", "bbox": [x, y, w, h]}],
//    "refs": [{"ref_id", "ann_id", "image_id", "sentences": [str | {"sent"}], "group"?}]}
// flickr_like:
//   {"images": [{"file_name", "width", "height", "boxes": [{"id", "bbox"}],
//                "phrases": [{"id", "phrase", "box_ids": [...], "group"?}]}]}
// One scene per referred object; every other box in the image becomes a
// distractor. Group references (flagged, or a phrase naming several boxes)
// are skipped and counted. Fractional boxes are expanded to whole pixels.
std::vector<Scene> convert_dataset(const nlohmann::json& doc, DatasetFormat format,
                                   const std::string& image_root, ConvertSummary& summary);

}  // namespace disclip::io
