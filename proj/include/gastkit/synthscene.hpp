#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gastkit/box.hpp"
#include "gastkit/errors.hpp"

namespace gastkit {

class ProjectionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Pinhole camera at height `height` metres above a flat ground plane,
/// pitched down by `pitch` radians, principal point at the image centre.
/// World frame: X right, Y up, Z forward along the ground; camera at (0, height, 0).
struct Camera {
  double focal = 200.0;  // pixels
  double height = 4.0;   // metres
  double pitch = 0.30;   // radians, positive looks down
  int image_height = 96;
  int image_width = 144;

  double cx() const { return image_width / 2.0; }
  double cy() const { return image_height / 2.0; }
  // Image row of the vanishing line of the ground plane.
  double horizon_row() const { return cy() - focal * std::tan(pitch); }
};

struct ImagePoint {
  double u = 0;
  double v = 0;
};

struct WorldPoint {
  double x = 0, y = 0, z = 0;
};

// Depth of a world point along the optical axis.
inline double camera_depth(const WorldPoint& p, const Camera& cam) {
  return -(p.y - cam.height) * std::sin(cam.pitch) + p.z * std::cos(cam.pitch);
}

inline ImagePoint project(const WorldPoint& p, const Camera& cam) {
  const double dy = p.y - cam.height;
  const double depth = -dy * std::sin(cam.pitch) + p.z * std::cos(cam.pitch);
  if (!(depth > 0)) throw ProjectionError("project: point is not in front of the camera");
  const double down = -dy * std::cos(cam.pitch) - p.z * std::sin(cam.pitch);
  return {cam.cx() + cam.focal * p.x / depth, cam.cy() + cam.focal * down / depth};
}

struct CategorySpec {
  int id = 0;
  std::string name;
  double height_mean = 1.7;  // metres
  double height_std = 0.1;
  double width_mean = 0.8;
  double width_std = 0.05;
  std::array<double, 3> color{0.8, 0.2, 0.2};
  double speed_min = 0.8;  // m/s along the ground
  double speed_max = 1.8;
};

struct SceneSpec {
  int view = 0;
  Camera camera;
  std::vector<CategorySpec> categories;
  int min_objects = 2;
  int max_objects = 4;
  double depth_min = 9.0;  // ground distance range objects live in (metres)
  double depth_max = 22.0;
  double frame_rate = 10.0;
  int videos = 20;
  int frames_per_video = 40;
  double noise_sigma = 0.02;
  double min_visible_fraction = 0.25;

  void validate() const {
    if (!(camera.height > 0)) throw ContractError("SceneSpec: camera must be above the ground plane");
    if (!(camera.focal > 0)) throw ContractError("SceneSpec: focal length must be positive");
    if (camera.image_height < 2 || camera.image_width < 2) throw ContractError("SceneSpec: image too small");
    if (categories.empty()) throw ContractError("SceneSpec: no categories");
    if (!(depth_min > 0) || depth_max < depth_min) throw ContractError("SceneSpec: invalid depth range");
    if (min_objects < 0 || max_objects < min_objects) throw ContractError("SceneSpec: invalid object count range");
    if (!(frame_rate > 0) || videos < 1 || frames_per_video < 1) throw ContractError("SceneSpec: invalid timing");
    for (const auto& c : categories) {
      if (!(c.height_mean > 0) || c.height_std < 0 || !(c.width_mean > 0) || c.width_std < 0 || c.speed_min < 0 ||
          c.speed_max < c.speed_min) {
        throw ContractError("SceneSpec: invalid physical parameters for category '" + c.name + "'");
      }
    }
    if (camera_depth({0, 0, depth_min}, camera) <= 0) {
      throw ContractError("SceneSpec: nearest ground point is behind the camera");
    }
  }
};

// Default desk-scale categories: pedestrians and vehicles.
inline std::vector<CategorySpec> default_categories() {
  return {
      {0, "pedestrian", 1.7, 0.1, 0.8, 0.05, {0.85, 0.25, 0.2}, 0.8, 1.8},
      {1, "vehicle", 1.5, 0.1, 3.6, 0.3, {0.2, 0.35, 0.9}, 3.0, 6.0},
  };
}

// Three static views with distinct camera placements.
inline std::vector<SceneSpec> default_views() {
  const std::array<Camera, 3> cams{Camera{200.0, 4.0, 0.30, 96, 144}, Camera{190.0, 3.5, 0.27, 96, 144},
                                   Camera{220.0, 4.5, 0.34, 96, 144}};
  std::vector<SceneSpec> views;
  for (int v = 0; v < 3; ++v) {
    SceneSpec s;
    s.view = v;
    s.camera = cams[v];
    s.categories = default_categories();
    // Nearest ground distance whose contact point is still inside the image.
    const double t = std::tan(s.camera.pitch);
    const double k = (s.camera.image_height - s.camera.cy()) / s.camera.focal;
    s.depth_min = std::ceil(s.camera.height * (1 - k * t) / (k + t) + 0.5);
    s.depth_max = s.depth_min + 8.0;
    views.push_back(s);
  }
  return views;
}

struct GroundTruthObject {
  int instance = 0;
  int category = 0;
  double ground_x = 0, ground_z = 0;
  double physical_height = 0, physical_width = 0;
  Box projected;    // unclipped projected box
  Box box;          // clipped to the image
  double visible_fraction = 0;
};

struct AnnotatedFrame {
  int view = 0;
  int frame_index = 0;
  int height = 0;
  int width = 0;
  std::vector<float> image;  // [3,H,W] planar, values in [0,1]
  std::vector<LabeledBox> boxes;
  std::vector<GroundTruthObject> objects;  // annotated objects, same order as boxes
};

struct Video {
  std::string name;
  int view = 0;
  std::vector<AnnotatedFrame> frames;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct SceneObject {
  int instance;
  int category;
  double x, z, vx, vz;
  double height, width;
  std::array<double, 3> color;
};

// Number of pixel centres (i + 0.5) inside [a, b).
inline int covered_pixels(double a, double b) {
  const int n = static_cast<int>(std::ceil(b - 0.5) - std::ceil(a - 0.5));
  return std::max(n, 0);
}

inline int first_covered(double a) { return static_cast<int>(std::ceil(a - 0.5)); }

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return detail::splitmix64(detail::splitmix64(seed ^ detail::splitmix64(a + 1)) ^ (b + 0x632be59bd9b4e019ULL));
}

/// Unclipped image box of an upright object rectangle standing on the ground.
inline Box object_box(double ground_x, double ground_z, double height, double width, const Camera& cam) {
  Box b{1e300, 1e300, -1e300, -1e300};
  for (double dx : {-width / 2, width / 2}) {
    for (double y : {0.0, height}) {
      const auto p = project({ground_x + dx, y, ground_z}, cam);
      b.x1 = std::min(b.x1, p.u);
      b.x2 = std::max(b.x2, p.u);
      b.y1 = std::min(b.y1, p.v);
      b.y2 = std::max(b.y2, p.v);
    }
  }
  return b;
}

/// Renders one video of a static view. All randomness derives from `seed`.
inline Video generate_video(const SceneSpec& spec, std::uint64_t seed, const std::string& name) {
  spec.validate();
  const Camera& cam = spec.camera;
  const int h = cam.image_height, w = cam.image_width;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Per-video background: sky above the horizon, ground gradient below.
  const std::array<double, 3> sky{0.55 + 0.1 * unit(rng), 0.65 + 0.1 * unit(rng), 0.75 + 0.1 * unit(rng)};
  const std::array<double, 3> ground_far{0.45 + 0.1 * unit(rng), 0.45 + 0.1 * unit(rng), 0.4 + 0.1 * unit(rng)};
  const std::array<double, 3> ground_near{0.3 + 0.1 * unit(rng), 0.32 + 0.1 * unit(rng), 0.28 + 0.1 * unit(rng)};
  const double horizon = cam.horizon_row();

  auto half_width_at = [&](double z) { return cam.cx() / cam.focal * camera_depth({0, 0, z}, cam); };
  int next_instance = 0;
  auto spawn = [&]() {
    const auto& cat = spec.categories[static_cast<std::size_t>(unit(rng) * spec.categories.size()) %
                                      spec.categories.size()];
    detail::SceneObject o{};
    o.instance = next_instance++;
    o.category = cat.id;
    o.z = spec.depth_min + unit(rng) * (spec.depth_max - spec.depth_min);
    const double hw = half_width_at(o.z);
    o.x = (2 * unit(rng) - 1) * hw;
    const double speed = cat.speed_min + unit(rng) * (cat.speed_max - cat.speed_min);
    const double heading = 2 * M_PI * unit(rng);
    o.vx = speed * std::cos(heading);
    o.vz = speed * std::sin(heading);
    o.height = std::max(0.1, cat.height_mean + cat.height_std * normal(rng));
    o.width = std::max(0.1, cat.width_mean + cat.width_std * normal(rng));
    for (int k = 0; k < 3; ++k) o.color[k] = std::clamp(cat.color[k] + 0.1 * (2 * unit(rng) - 1), 0.0, 1.0);
    return o;
  };

  const int count = spec.min_objects + static_cast<int>(unit(rng) * (spec.max_objects - spec.min_objects + 1));
  std::vector<detail::SceneObject> objects;
  for (int i = 0; i < std::min(count, spec.max_objects); ++i) objects.push_back(spawn());

  Video video;
  video.name = name;
  video.view = spec.view;
  const double dt = 1.0 / spec.frame_rate;
  std::vector<int> owner(static_cast<std::size_t>(h) * w);
  for (int f = 0; f < spec.frames_per_video; ++f) {
    if (f > 0) {
      for (auto& o : objects) {
        o.x += o.vx * dt;
        o.z += o.vz * dt;
        if (o.z < spec.depth_min || o.z > spec.depth_max || std::abs(o.x) > half_width_at(o.z) + o.width) o = spawn();
      }
    }
    AnnotatedFrame frame;
    frame.view = spec.view;
    frame.frame_index = f;
    frame.height = h;
    frame.width = w;
    frame.image.resize(static_cast<std::size_t>(3) * h * w);
    for (int r = 0; r < h; ++r) {
      std::array<double, 3> base;
      if (r + 0.5 < horizon) {
        base = sky;
      } else {
        const double t = std::clamp((r + 0.5 - horizon) / std::max(1.0, h - horizon), 0.0, 1.0);
        for (int k = 0; k < 3; ++k) base[k] = ground_far[k] + t * (ground_near[k] - ground_far[k]);
      }
      for (int c = 0; c < w; ++c)
        for (int k = 0; k < 3; ++k) frame.image[(static_cast<std::size_t>(k) * h + r) * w + c] = static_cast<float>(base[k]);
    }

    // Painter's order: far to near; `owner` keeps the visible instance per pixel.
    std::vector<std::size_t> order(objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return objects[a].z > objects[b].z; });
    std::fill(owner.begin(), owner.end(), -1);
    std::vector<Box> projected(objects.size());
    for (std::size_t i : order) {
      const auto& o = objects[i];
      projected[i] = object_box(o.x, o.z, o.height, o.width, cam);
      const Box& b = projected[i];
      const int r0 = std::max(0, detail::first_covered(b.y1));
      const int r1 = std::min(h, detail::first_covered(b.y1) + detail::covered_pixels(b.y1, b.y2));
      const int c0 = std::max(0, detail::first_covered(b.x1));
      const int c1 = std::min(w, detail::first_covered(b.x1) + detail::covered_pixels(b.x1, b.x2));
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
          owner[static_cast<std::size_t>(r) * w + c] = static_cast<int>(i);
          for (int k = 0; k < 3; ++k)
            frame.image[(static_cast<std::size_t>(k) * h + r) * w + c] = static_cast<float>(o.color[k]);
        }
    }
    std::vector<int> visible(objects.size(), 0);
    for (int id : owner)
      if (id >= 0) ++visible[id];
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const Box& b = projected[i];
      const int area = detail::covered_pixels(b.x1, b.x2) * detail::covered_pixels(b.y1, b.y2);
      const double fraction = area > 0 ? static_cast<double>(visible[i]) / area : 0.0;
      if (fraction < spec.min_visible_fraction) continue;
      Box clipped{std::clamp(b.x1, 0.0, double(w)), std::clamp(b.y1, 0.0, double(h)), std::clamp(b.x2, 0.0, double(w)),
                  std::clamp(b.y2, 0.0, double(h))};
      if (!clipped.valid()) continue;
      const auto& o = objects[i];
      frame.boxes.push_back({o.category, clipped});
      frame.objects.push_back({o.instance, o.category, o.x, o.z, o.height, o.width, b, clipped, fraction});
    }
    for (auto& v : frame.image) {
      v = static_cast<float>(std::clamp(static_cast<double>(v) + spec.noise_sigma * normal(rng), 0.0, 1.0));
    }
    video.frames.push_back(std::move(frame));
  }
  return video;
}

/// All videos of one view; video i uses a seed derived from (seed, view, i).
inline std::vector<Video> generate(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<Video> out;
  for (int i = 0; i < spec.videos; ++i) {
    out.push_back(generate_video(spec, derive_seed(seed, static_cast<std::uint64_t>(spec.view), static_cast<std::uint64_t>(i)),
                                 "view" + std::to_string(spec.view) + "_video" + std::to_string(i)));
  }
  return out;
}

struct Clip {
  int video = 0;
  std::vector<int> frames;  // frame indices, first and last are the supervised slots

  int first() const { return frames.front(); }
  int last() const { return frames.back(); }
};

/// The video is subsampled every `stride` frames and every window of T
/// consecutive sampled frames becomes a clip. Sampled frame k is the first
/// frame of the window starting at k and the last frame of the window
/// starting at k - (T-1), whenever those exist.
inline std::vector<Clip> sample_clips(int video_length, int clip_len, int stride, int video = 0) {
  if (clip_len < 1 || stride < 1) throw ContractError("sample_clips: clip length and stride must be >= 1");
  const int sampled = video_length > 0 ? (video_length + stride - 1) / stride : 0;
  std::vector<Clip> clips;
  if (sampled < clip_len) {
    warn("sample_clips: video " + std::to_string(video) + " has " + std::to_string(sampled) +
         " sampled frames, fewer than the clip length " + std::to_string(clip_len) + "; skipped");
    return clips;
  }
  for (int start = 0; start + clip_len <= sampled; ++start) {
    Clip c;
    c.video = video;
    for (int k = 0; k < clip_len; ++k) c.frames.push_back((start + k) * stride);
    clips.push_back(std::move(c));
  }
  return clips;
}

}  // namespace gastkit
