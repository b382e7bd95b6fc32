// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace disclip::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void parse_error(const std::string& where, const std::string& what) {
  fail(ErrorKind::kParse, where + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) parse_error(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) parse_error(where + "." + key, "missing");
  return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  parse_error(where + "." + key, "expected a string");
}

int get_int(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number_integer()) parse_error(where + "." + key, "expected an integer");
  return v.get<int>();
}

std::vector<double> get_box_numbers(const json& obj, const std::string& where) {
  const json& v = field(obj, "bbox", where);
  if (!v.is_array() || v.size() != 4) parse_error(where + ".bbox", "expected an array of 4 numbers");
  std::vector<double> out;
  for (const json& x : v) {
    if (!x.is_number()) parse_error(where + ".bbox", "expected an array of 4 numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

BBox integer_bbox(const std::vector<double>& b, const std::string& where) {
  for (double x : b) {
    if (x != std::floor(x)) parse_error(where + ".bbox", "scene boxes must be whole pixels");
  }
  return {static_cast<int>(b[0]), static_cast<int>(b[1]), static_cast<int>(b[2]),
          static_cast<int>(b[3])};
}

// Smallest whole-pixel box covering a fractional one, clipped to the image.
BBox covering_bbox(const std::vector<double>& b, int width, int height) {
  const int x1 = std::clamp(static_cast<int>(std::floor(b[0])), 0, width);
  const int y1 = std::clamp(static_cast<int>(std::floor(b[1])), 0, height);
  const int x2 = std::clamp(static_cast<int>(std::ceil(b[0] + b[2])), 0, width);
  const int y2 = std::clamp(static_cast<int>(std::ceil(b[1] + b[3])), 0, height);
  return {x1, y1, x2 - x1, y2 - y1};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

Scene scene_from_json(const json& doc, const std::string& base_dir, const std::string& fallback_id) {
  const std::string where = "scene";
  Scene scene;
  scene.id = doc.is_object() && doc.contains("id") ? get_string(doc, "id", where) : fallback_id;
  scene.image_path = get_string(doc, "image", where);
  if (!base_dir.empty() && fs::path(scene.image_path).is_relative()) {
    scene.image_path = (fs::path(base_dir) / scene.image_path).lexically_normal().string();
  }
  scene.width = get_int(doc, "width", where);
  scene.height = get_int(doc, "height", where);
  const json& regions = field(doc, "regions", where);
  if (!regions.is_array()) parse_error(where + ".regions", "expected an array");
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::string rw = where + ".regions[" + std::to_string(i) + "]";
    Region r;
    r.id = get_string(regions[i], "id", rw);
    r.bbox = integer_bbox(get_box_numbers(regions[i], rw), rw);
    if (regions[i].contains("attributes")) {
      const json& attrs = regions[i]["attributes"];
      if (!attrs.is_array()) parse_error(rw + ".attributes", "expected an array of strings");
      for (const json& a : attrs) {
        if (!a.is_string()) parse_error(rw + ".attributes", "expected an array of strings");
        r.attributes.push_back(a.get<std::string>());
      }
    }
    scene.regions.push_back(std::move(r));
  }
  scene.target_id = get_string(doc, "target_id", where);
  if (doc.contains("ground_truth")) {
    const json& gt = doc["ground_truth"];
    if (!gt.is_array()) parse_error(where + ".ground_truth", "expected an array of strings");
    for (const json& s : gt) {
      if (!s.is_string()) parse_error(where + ".ground_truth", "expected an array of strings");
      scene.ground_truth.push_back(s.get<std::string>());
    }
  }
  return validate_scene(scene, scene.width, scene.height);
}

json scene_to_json(const Scene& scene) {
  json regions = json::array();
  for (const Region& r : scene.regions) {
    json jr = {{"id", r.id}, {"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}}};
    if (!r.attributes.empty()) jr["attributes"] = r.attributes;
    regions.push_back(std::move(jr));
  }
  json doc = {{"id", scene.id},         {"image", scene.image_path},
              {"width", scene.width},   {"height", scene.height},
              {"regions", regions},     {"target_id", scene.target_id}};
  if (!scene.ground_truth.empty()) doc["ground_truth"] = scene.ground_truth;
  return doc;
}

namespace {

SceneEntry entry_from(const json& doc, const std::string& base_dir, const std::string& fallback_id) {
  SceneEntry e;
  e.id = fallback_id;
  if (doc.is_object() && doc.contains("id") && (doc["id"].is_string() || doc["id"].is_number_integer())) {
    e.id = doc["id"].is_string() ? doc["id"].get<std::string>()
                                 : std::to_string(doc["id"].get<long long>());
  }
  try {
    e.scene = scene_from_json(doc, base_dir, fallback_id);
  } catch (const Error& err) {
    e.error = err.what();
  }
  return e;
}

}  // namespace

namespace {

std::vector<SceneEntry> load_scene_file(const fs::path& p) {
  std::vector<SceneEntry> out;
  const std::string base = p.parent_path().string();
  const std::string stem = p.stem().string();
  if (p.extension() == ".jsonl") {
    std::istringstream in(read_file(p.string()));
    std::string line;
    std::size_t index = 0;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string fallback = stem + ":" + std::to_string(index++);
      try {
        out.push_back(entry_from(json::parse(line), base, fallback));
      } catch (const json::exception& e) {
        out.push_back({fallback, std::nullopt, std::string("invalid JSON: ") + e.what(), nullptr});
      }
    }
    return out;
  }
  json doc;
  try {
    doc = json::parse(read_file(p.string()));
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, p.string() + ": " + e.what());
  }
  if (doc.is_array()) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      out.push_back(entry_from(doc[i], base, stem + ":" + std::to_string(i)));
    }
  } else {
    out.push_back(entry_from(doc, base, stem));
  }
  return out;
}

}  // namespace

std::vector<SceneEntry> load_scenes(const std::string& path) {
  const fs::path p(path);
  if (!fs::is_directory(p)) return load_scene_file(p);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(p)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".json" || ext == ".jsonl")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SceneEntry> out;
  for (const fs::path& f : files) {
    try {
      auto part = load_scene_file(f);
      out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    } catch (const Error& e) {
      out.push_back({f.stem().string(), std::nullopt, e.what(), nullptr});
    }
  }
  return out;
}

namespace {

Image read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    fail(ErrorKind::kIo, "cannot decode PNG '" + path + "': " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, data.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::kIo, "cannot decode PNG '" + path + "': " + msg);
  }
  return Image(static_cast<int>(png.width), static_cast<int>(png.height), std::move(data));
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Recoverable warnings are not printed.
void jpeg_quiet(j_common_ptr) {}

Image read_jpeg(const std::string& path) {
  std::FILE* file = std::fopen(path.c_str(), "rb");
  if (!file) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.output_message = jpeg_quiet;
  // Everything the longjmp may skip over lives outside this frame's C++ objects.
  static thread_local std::vector<std::uint8_t> data;
  data.clear();
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(file);
    fail(ErrorKind::kIo, "cannot decode JPEG '" + path + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * 3;
  data.resize(stride * cinfo.output_height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = data.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(file);
  return Image(w, h, data);
}

Image read_ppm(const std::string& path, const std::string& bytes) {
  std::size_t pos = 2;
  auto next_token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail(ErrorKind::kIo, "cannot decode PPM '" + path + "': truncated header");
    return std::stoi(bytes.substr(start, pos - start));
  };
  const int w = next_token();
  const int h = next_token();
  const int maxval = next_token();
  if (maxval != 255) fail(ErrorKind::kIo, "cannot decode PPM '" + path + "': only 8-bit supported");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (w <= 0 || h <= 0 || bytes.size() < pos + need) {
    fail(ErrorKind::kIo, "cannot decode PPM '" + path + "': truncated pixel data");
  }
  return Image(w, h, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + need));
}

}  // namespace

Image read_image(const std::string& path) {
  if (!fs::is_regular_file(path)) fail(ErrorKind::kIo, "image file not found: '" + path + "'");
  const std::string bytes = read_file(path);
  if (bytes.size() >= 8 && bytes.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0) return read_png(path);
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8) {
    return read_jpeg(path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return read_ppm(path, bytes);
  fail(ErrorKind::kIo, "unsupported image format: '" + path + "'");
}

void write_png(const std::string& path, const Image& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, "cannot write PNG '" + path + "': " + png.message);
  }
}

Image load_scene_image(const Scene& scene) {
  Image image = read_image(scene.image_path);
  if (image.width != scene.width || image.height != scene.height) {
    std::ostringstream msg;
    msg << "image '" << scene.image_path << "' is " << image.width << "x" << image.height
        << " but the scene declares " << scene.width << "x" << scene.height;
    fail(ErrorKind::kValidation, msg.str());
  }
  return image;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::kParse, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

DatasetFormat parse_dataset_format(const std::string& text) {
  if (text == "refcoco_like") return DatasetFormat::kRefcocoLike;
  if (text == "flickr_like") return DatasetFormat::kFlickrLike;
  fail(ErrorKind::kConfig, "format: expected 'refcoco_like' or 'flickr_like', got '" + text + "'");
}

namespace {

std::string join_image(const std::string& root, const std::string& file) {
  if (root.empty()) return file;
  return (fs::path(root) / file).string();
}

bool flagged_group(const json& obj) {
  auto it = obj.find("group");
  return it != obj.end() && it->is_boolean() && it->get<bool>();
}

struct ImageInfo {
  std::string file;
  int width = 0;
  int height = 0;
};

ImageInfo image_info(const json& img, const std::string& where) {
  return {get_string(img, "file_name", where), get_int(img, "width", where),
          get_int(img, "height", where)};
}

std::vector<Scene> convert_refcoco(const json& doc, const std::string& image_root,
                                   ConvertSummary& summary) {
  const auto list = [&](const char* key) -> const json& {
    const json& v = field(doc, key, "$");
    if (!v.is_array()) parse_error(std::string("$.") + key, "expected an array");
    return v;
  };
  std::map<std::string, ImageInfo> images;
  const json& jimages = list("images");
  for (std::size_t i = 0; i < jimages.size(); ++i) {
    const std::string where = "$.images[" + std::to_string(i) + "]";
    images[get_string(jimages[i], "id", where)] = image_info(jimages[i], where);
  }
  struct Ann {
    std::string id;
    std::vector<double> box;
  };
  std::map<std::string, std::vector<Ann>> anns_by_image;
  const json& janns = list("annotations");
  for (std::size_t i = 0; i < janns.size(); ++i) {
    const std::string where = "$.annotations[" + std::to_string(i) + "]";
    const std::string image_id = get_string(janns[i], "image_id", where);
    if (!images.contains(image_id)) parse_error(where + ".image_id", "unknown image '" + image_id + "'");
    anns_by_image[image_id].push_back({get_string(janns[i], "id", where), get_box_numbers(janns[i], where)});
  }

  std::vector<Scene> out;
  const json& refs = list("refs");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::string where = "$.refs[" + std::to_string(i) + "]";
    const json& ref = refs[i];
    if (flagged_group(ref)) {
      ++summary.skipped_group;
      continue;
    }
    const std::string ann_id = get_string(ref, "ann_id", where);
    const std::string image_id = get_string(ref, "image_id", where);
    auto img = images.find(image_id);
    if (img == images.end()) parse_error(where + ".image_id", "unknown image '" + image_id + "'");

    Scene scene;
    scene.id = ref.contains("ref_id") ? "ref" + get_string(ref, "ref_id", where)
                                      : "ref#" + std::to_string(i);
    scene.image_path = join_image(image_root, img->second.file);
    scene.width = img->second.width;
    scene.height = img->second.height;
    for (const Ann& a : anns_by_image[image_id]) {
      scene.regions.push_back({"ann" + a.id, covering_bbox(a.box, scene.width, scene.height), {}});
    }
    scene.target_id = "ann" + ann_id;
    if (ref.contains("sentences")) {
      const json& sents = ref["sentences"];
      if (!sents.is_array()) parse_error(where + ".sentences", "expected an array");
      for (std::size_t s = 0; s < sents.size(); ++s) {
        if (sents[s].is_string()) {
          scene.ground_truth.push_back(sents[s].get<std::string>());
        } else {
          scene.ground_truth.push_back(
              get_string(sents[s], "sent", where + ".sentences[" + std::to_string(s) + "]"));
        }
      }
    }
    try {
      validate_scene(scene, scene.width, scene.height);
    } catch (const Error& e) {
      parse_error(where, e.what());
    }
    out.push_back(std::move(scene));
    ++summary.written;
  }
  return out;
}

std::vector<Scene> convert_flickr(const json& doc, const std::string& image_root,
                                  ConvertSummary& summary) {
  const json& jimages = field(doc, "images", "$");
  if (!jimages.is_array()) parse_error("$.images", "expected an array");
  std::vector<Scene> out;
  for (std::size_t i = 0; i < jimages.size(); ++i) {
    const std::string where = "$.images[" + std::to_string(i) + "]";
    const json& img = jimages[i];
    const ImageInfo info = image_info(img, where);
    const json& boxes = field(img, "boxes", where);
    if (!boxes.is_array()) parse_error(where + ".boxes", "expected an array");
    std::vector<Region> regions;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const std::string bw = where + ".boxes[" + std::to_string(b) + "]";
      regions.push_back({get_string(boxes[b], "id", bw),
                         covering_bbox(get_box_numbers(boxes[b], bw), info.width, info.height),
                         {}});
    }
    const json& phrases = field(img, "phrases", where);
    if (!phrases.is_array()) parse_error(where + ".phrases", "expected an array");
    for (std::size_t p = 0; p < phrases.size(); ++p) {
      const std::string pw = where + ".phrases[" + std::to_string(p) + "]";
      const json& phrase = phrases[p];
      const json& box_ids = field(phrase, "box_ids", pw);
      if (!box_ids.is_array()) parse_error(pw + ".box_ids", "expected an array");
      if (flagged_group(phrase) || box_ids.size() > 1) {
        ++summary.skipped_group;
        continue;
      }
      if (box_ids.empty()) parse_error(pw + ".box_ids", "refers to no box");
      Scene scene;
      const std::string phrase_id = phrase.contains("id") ? get_string(phrase, "id", pw)
                                                          : std::to_string(p);
      scene.id = fs::path(info.file).stem().string() + "#" + phrase_id;
      scene.image_path = join_image(image_root, info.file);
      scene.width = info.width;
      scene.height = info.height;
      scene.regions = regions;
      scene.target_id = box_ids[0].is_string() ? box_ids[0].get<std::string>()
                                               : std::to_string(box_ids[0].get<long long>());
      if (phrase.contains("phrase")) scene.ground_truth.push_back(get_string(phrase, "phrase", pw));
      try {
        validate_scene(scene, scene.width, scene.height);
      } catch (const Error& e) {
        parse_error(pw, e.what());
      }
      out.push_back(std::move(scene));
      ++summary.written;
    }
  }
  return out;
}

}  // namespace

std::vector<Scene> convert_dataset(const json& doc, DatasetFormat format,
                                   const std::string& image_root, ConvertSummary& summary) {
  try {
    return format == DatasetFormat::kRefcocoLike ? convert_refcoco(doc, image_root, summary)
                                                 : convert_flickr(doc, image_root, summary);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("schema mismatch: ") + e.what());
  }
}

}  // namespace disclip::io
