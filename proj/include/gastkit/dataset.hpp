#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "gastkit/box.hpp"
#include "gastkit/errors.hpp"
#include "gastkit/geometry_prior.hpp"
#include "gastkit/runtime.hpp"
#include "gastkit/synthscene.hpp"

// On-disk dataset layout
//
//   <root>/manifest.json
//   <root>/<video>/annotations.jsonl     one line per box: {"frame","category","x1","y1","x2","y2"}
//   <root>/<video>/frame_<NNNN>.gkf      planar float frames, or
//   <root>/<video>/frame_<NNNN>.png      8-bit RGB frames
//
// A .gkf frame is the 4 bytes "GKF1", then little-endian u32 C, H, W, then
// C*H*W little-endian IEEE-754 f32 values in channel-major (planar) order.

namespace gastkit {

namespace fs = std::filesystem;

enum class ImageFormat { f32, png };

inline std::string format_name(ImageFormat f) { return f == ImageFormat::f32 ? "f32" : "png"; }
inline ImageFormat parse_format(const std::string& s) {
  if (s == "f32") return ImageFormat::f32;
  if (s == "png") return ImageFormat::png;
  throw ContractError("unknown image format '" + s + "' (expected f32 or png)");
}

/// Records every annotation file opened through the dataset layer, so callers
/// can prove which splits a command touched.
class FileAccessLog {
 public:
  static FileAccessLog& instance() {
    static FileAccessLog log;
    return log;
  }
  void record(const std::string& path) {
    std::lock_guard<std::mutex> lock(mu_);
    paths_.push_back(path);
  }
  std::vector<std::string> paths() const {
    std::lock_guard<std::mutex> lock(mu_);
    return paths_;
  }
  void clear() {
    std::lock_guard<std::mutex> lock(mu_);
    paths_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> paths_;
};

struct Frame {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated frame file '" + path + "'");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

}  // namespace detail

inline void write_frame_f32(const std::string& path, const Frame& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  os.write("GKF1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(f.channels));
  detail::put_u32(os, static_cast<std::uint32_t>(f.height));
  detail::put_u32(os, static_cast<std::uint32_t>(f.width));
  for (float v : f.data) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw DataError("write failed for '" + path + "'");
}

inline Frame read_frame_f32(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open frame '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "GKF1", 4) != 0) throw DataError("bad frame header in '" + path + "'");
  Frame f;
  f.channels = static_cast<int>(detail::get_u32(is, path));
  f.height = static_cast<int>(detail::get_u32(is, path));
  f.width = static_cast<int>(detail::get_u32(is, path));
  const std::size_t n = static_cast<std::size_t>(f.channels) * f.height * f.width;
  f.data.resize(n);
  for (auto& v : f.data) v = std::bit_cast<float>(detail::get_u32(is, path));
  return f;
}

inline void write_frame_png(const std::string& path, const Frame& f) {
  if (f.channels != 3) throw ContractError("write_frame_png: only 3-channel frames are supported");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("PNG encoding failed for '" + path + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, f.width, f.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t plane = static_cast<std::size_t>(f.height) * f.width;
  std::vector<png_byte> row(static_cast<std::size_t>(f.width) * 3);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(f.data[c * plane + static_cast<std::size_t>(y) * f.width + x], 0.0f, 1.0f);
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Frame read_frame_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("cannot open frame '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("PNG decoding failed for '" + path + "'");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  Frame f;
  f.channels = 3;
  f.height = static_cast<int>(png_get_image_height(png, info));
  f.width = static_cast<int>(png_get_image_width(png, info));
  const std::size_t plane = static_cast<std::size_t>(f.height) * f.width;
  f.data.resize(3 * plane);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < f.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < f.width; ++x)
      for (int c = 0; c < 3; ++c)
        f.data[c * plane + static_cast<std::size_t>(y) * f.width + x] = row[static_cast<std::size_t>(x) * 3 + c] / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return f;
}

inline std::string frame_file_name(int index, ImageFormat fmt) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.%s", index, fmt == ImageFormat::f32 ? "gkf" : "png");
  return buf;
}

inline void write_annotations(const std::string& path, const std::vector<AnnotatedFrame>& frames) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write '" + path + "'");
  for (const auto& f : frames) {
    for (const auto& b : f.boxes) {
      nlohmann::json j{{"frame", f.frame_index}, {"category", b.category}, {"x1", b.box.x1},
                       {"y1", b.box.y1},          {"x2", b.box.x2},          {"y2", b.box.y2}};
      os << j.dump() << '\n';
    }
  }
}

/// Per-frame boxes of one video; frames without boxes are empty entries.
inline std::vector<std::vector<LabeledBox>> read_annotations(const std::string& path, int frames) {
  FileAccessLog::instance().record(path);
  std::ifstream is(path);
  if (!is) throw DataError("cannot open annotations '" + path + "'");
  std::vector<std::vector<LabeledBox>> out(static_cast<std::size_t>(frames));
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const int f = j.at("frame").get<int>();
      if (f < 0 || f >= frames) throw DataError("frame index " + std::to_string(f) + " out of range");
      out[f].push_back({j.at("category").get<int>(),
                        {j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(),
                         j.at("y2").get<double>()}});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation spec (gen-data input) and manifest.

struct DatasetSpec {
  std::vector<SceneSpec> views = default_views();
  double test_fraction = 0.2;
  ImageFormat image_format = ImageFormat::f32;

  void validate() const {
    if (views.empty()) throw ContractError("DatasetSpec: no views");
    if (!(test_fraction >= 0 && test_fraction < 1)) throw ContractError("DatasetSpec: test_fraction must be in [0,1)");
    for (const auto& v : views) {
      v.validate();
      if (v.camera.image_height != views[0].camera.image_height ||
          v.camera.image_width != views[0].camera.image_width) {
        throw ContractError("DatasetSpec: all views must share one image size");
      }
      if (v.categories.size() != views[0].categories.size()) {
        throw ContractError("DatasetSpec: all views must share one category list");
      }
    }
  }
};

inline nlohmann::json to_json(const Camera& c) {
  return {{"focal", c.focal}, {"height", c.height}, {"pitch", c.pitch}, {"image_height", c.image_height},
          {"image_width", c.image_width}};
}

inline Camera camera_from_json(const nlohmann::json& j, const Camera& base = {}) {
  Camera c = base;
  c.focal = j.value("focal", c.focal);
  c.height = j.value("height", c.height);
  c.pitch = j.value("pitch", c.pitch);
  c.image_height = j.value("image_height", c.image_height);
  c.image_width = j.value("image_width", c.image_width);
  return c;
}

inline nlohmann::json to_json(const SceneSpec& s) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : s.categories) {
    cats.push_back({{"id", c.id},
                    {"name", c.name},
                    {"height_mean", c.height_mean},
                    {"height_std", c.height_std},
                    {"width_mean", c.width_mean},
                    {"width_std", c.width_std},
                    {"color", c.color},
                    {"speed_min", c.speed_min},
                    {"speed_max", c.speed_max}});
  }
  return {{"view", s.view},
          {"camera", to_json(s.camera)},
          {"categories", cats},
          {"min_objects", s.min_objects},
          {"max_objects", s.max_objects},
          {"depth_min", s.depth_min},
          {"depth_max", s.depth_max},
          {"frame_rate", s.frame_rate},
          {"videos", s.videos},
          {"frames_per_video", s.frames_per_video},
          {"noise_sigma", s.noise_sigma},
          {"min_visible_fraction", s.min_visible_fraction}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j, const SceneSpec& base = {}) {
  SceneSpec s = base;
  s.view = j.value("view", s.view);
  if (j.contains("camera")) s.camera = camera_from_json(j.at("camera"), s.camera);
  if (j.contains("categories")) {
    s.categories.clear();
    for (const auto& c : j.at("categories")) {
      CategorySpec cs;
      cs.id = c.value("id", static_cast<int>(s.categories.size()));
      cs.name = c.value("name", "category" + std::to_string(cs.id));
      cs.height_mean = c.value("height_mean", cs.height_mean);
      cs.height_std = c.value("height_std", cs.height_std);
      cs.width_mean = c.value("width_mean", cs.width_mean);
      cs.width_std = c.value("width_std", cs.width_std);
      if (c.contains("color")) cs.color = c.at("color").get<std::array<double, 3>>();
      cs.speed_min = c.value("speed_min", cs.speed_min);
      cs.speed_max = c.value("speed_max", cs.speed_max);
      s.categories.push_back(cs);
    }
  }
  s.min_objects = j.value("min_objects", s.min_objects);
  s.max_objects = j.value("max_objects", s.max_objects);
  s.depth_min = j.value("depth_min", s.depth_min);
  s.depth_max = j.value("depth_max", s.depth_max);
  s.frame_rate = j.value("frame_rate", s.frame_rate);
  s.videos = j.value("videos", s.videos);
  s.frames_per_video = j.value("frames_per_video", s.frames_per_video);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.min_visible_fraction = j.value("min_visible_fraction", s.min_visible_fraction);
  return s;
}

inline nlohmann::json to_json(const DatasetSpec& d) {
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : d.views) views.push_back(to_json(v));
  return {{"views", views}, {"test_fraction", d.test_fraction}, {"image_format", format_name(d.image_format)}};
}

/// Missing fields keep the default desk-scale values. A "views" entry is
/// overlaid on the default view with the same index when one exists.
inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec d;
  try {
    if (j.contains("views")) {
      const auto defaults = default_views();
      std::vector<SceneSpec> views;
      for (std::size_t i = 0; i < j.at("views").size(); ++i) {
        SceneSpec base = i < defaults.size() ? defaults[i] : defaults.back();
        base.view = static_cast<int>(i);
        views.push_back(scene_from_json(j.at("views")[i], base));
      }
      d.views = views;
    }
    if (j.contains("videos_per_view"))
      for (auto& v : d.views) v.videos = j.at("videos_per_view").get<int>();
    if (j.contains("frames_per_video"))
      for (auto& v : d.views) v.frames_per_video = j.at("frames_per_video").get<int>();
    d.test_fraction = j.value("test_fraction", d.test_fraction);
    if (j.contains("image_format")) d.image_format = parse_format(j.at("image_format").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("dataset spec: ") + e.what());
  }
  d.validate();
  return d;
}

enum class Split { train, test };
inline std::string split_name(Split s) { return s == Split::train ? "train" : "test"; }
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ContractError("unknown split '" + s + "' (expected train or test)");
}

struct VideoEntry {
  std::string name;
  int view = 0;
  Split split = Split::train;
  int frames = 0;
};

struct ViewEntry {
  int id = 0;
  Camera camera;
  double horizon_row = 0;
};

struct Manifest {
  int format_version = 1;
  ImageFormat image_format = ImageFormat::f32;
  int height = 0;
  int width = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> category_names;
  std::vector<ViewEntry> views;
  std::vector<VideoEntry> videos;

  int categories() const { return static_cast<int>(category_names.size()); }
};

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json views = nlohmann::json::array(), videos = nlohmann::json::array();
  for (const auto& v : m.views) views.push_back({{"id", v.id}, {"camera", to_json(v.camera)}, {"horizon_row", v.horizon_row}});
  for (const auto& v : m.videos) {
    videos.push_back({{"name", v.name}, {"view", v.view}, {"split", split_name(v.split)}, {"frames", v.frames}});
  }
  return {{"format_version", m.format_version},
          {"image_format", format_name(m.image_format)},
          {"height", m.height},
          {"width", m.width},
          {"seed", m.seed},
          {"categories", m.category_names},
          {"views", views},
          {"videos", videos}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) throw DataError("unsupported manifest version " + std::to_string(m.format_version));
    m.image_format = parse_format(j.at("image_format").get<std::string>());
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.category_names = j.at("categories").get<std::vector<std::string>>();
    for (const auto& v : j.at("views")) {
      m.views.push_back({v.at("id").get<int>(), camera_from_json(v.at("camera")), v.at("horizon_row").get<double>()});
    }
    for (const auto& v : j.at("videos")) {
      m.videos.push_back({v.at("name").get<std::string>(), v.at("view").get<int>(),
                          parse_split(v.at("split").get<std::string>()), v.at("frames").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write '" + path + "'");
  os << j.dump(2) << '\n';
}

/// The last round(test_fraction * videos) videos of each view form the test split.
inline Split split_of(int video_index, int videos, double test_fraction) {
  const int test = static_cast<int>(std::lround(test_fraction * videos));
  return video_index >= videos - test ? Split::test : Split::train;
}

/// Generates every view and writes the dataset under `root`.
inline Manifest write_dataset(const std::string& root, const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  fs::create_directories(root);
  Manifest m;
  m.image_format = spec.image_format;
  m.height = spec.views[0].camera.image_height;
  m.width = spec.views[0].camera.image_width;
  m.seed = seed;
  for (const auto& c : spec.views[0].categories) m.category_names.push_back(c.name);
  const int threads = worker_threads();
  for (const auto& view : spec.views) {
    m.views.push_back({view.view, view.camera, view.camera.horizon_row()});
    std::vector<VideoEntry> entries(static_cast<std::size_t>(view.videos));
    parallel_for(view.videos, threads, [&](int i) {
      const std::string name = "view" + std::to_string(view.view) + "_video" + std::to_string(i);
      const auto v = generate_video(
          view, derive_seed(seed, static_cast<std::uint64_t>(view.view), static_cast<std::uint64_t>(i)), name);
      const fs::path dir = fs::path(root) / v.name;
      fs::create_directories(dir);
      for (const auto& f : v.frames) {
        const Frame frame{3, f.height, f.width, f.image};
        const std::string path = (dir / frame_file_name(f.frame_index, spec.image_format)).string();
        if (spec.image_format == ImageFormat::f32)
          write_frame_f32(path, frame);
        else
          write_frame_png(path, frame);
      }
      write_annotations((dir / "annotations.jsonl").string(), v.frames);
      entries[i] = {v.name, v.view, split_of(i, view.videos, spec.test_fraction), static_cast<int>(v.frames.size())};
    });
    m.videos.insert(m.videos.end(), entries.begin(), entries.end());
  }
  write_json_file((fs::path(root) / "manifest.json").string(), to_json(m));
  return m;
}

class Dataset {
 public:
  static Dataset open(const std::string& root) {
    Dataset d;
    d.root_ = root;
    d.manifest_ = manifest_from_json(read_json_file((fs::path(root) / "manifest.json").string()));
    return d;
  }

  const Manifest& manifest() const { return manifest_; }
  const std::string& root() const { return root_; }

  std::vector<int> videos(Split split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < manifest_.videos.size(); ++i)
      if (manifest_.videos[i].split == split) out.push_back(static_cast<int>(i));
    return out;
  }

  std::string annotation_path(int video) const {
    return (fs::path(root_) / manifest_.videos.at(video).name / "annotations.jsonl").string();
  }

  std::vector<std::vector<LabeledBox>> annotations(int video) const {
    return read_annotations(annotation_path(video), manifest_.videos.at(video).frames);
  }

  Frame frame(int video, int index) const {
    const auto& v = manifest_.videos.at(video);
    if (index < 0 || index >= v.frames) throw DataError("frame " + std::to_string(index) + " out of range for " + v.name);
    const std::string path = (fs::path(root_) / v.name / frame_file_name(index, manifest_.image_format)).string();
    Frame f = manifest_.image_format == ImageFormat::f32 ? read_frame_f32(path) : read_frame_png(path);
    if (f.channels != 3 || f.height != manifest_.height || f.width != manifest_.width) {
      throw DataError("frame '" + path + "' has shape " + std::to_string(f.channels) + "x" + std::to_string(f.height) +
                      "x" + std::to_string(f.width) + ", manifest says 3x" + std::to_string(manifest_.height) + "x" +
                      std::to_string(manifest_.width));
    }
    return f;
  }

 private:
  std::string root_;
  Manifest manifest_;
};

}  // namespace gastkit
