#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gastkit/box.hpp"
#include "gastkit/nn.hpp"

namespace gastkit {

struct Annotation {
  int view = 0;
  int category = 0;
  Box box;
};

// Normalized image-plane coordinates; gx varies along columns, gy along rows, both in [0,1].
template <typename Real>
struct CoordMaps {
  Tensor<Real> gx;
  Tensor<Real> gy;
};

template <typename Real = double>
CoordMaps<Real> make_coord_maps(int height, int width) {
  if (height < 2 || width < 2) {
    throw ContractError("make_coord_maps: height and width must be >= 2, got " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  std::vector<Real> gx(static_cast<std::size_t>(height) * width), gy(gx.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      gx[r * width + c] = static_cast<Real>(static_cast<double>(c) / (width - 1));
      gy[r * width + c] = static_cast<Real>(static_cast<double>(r) / (height - 1));
    }
  }
  return {Tensor<Real>::from_data({height, width}, std::move(gx)), Tensor<Real>::from_data({height, width}, std::move(gy))};
}

/// Expected object pixel height per image row for one (view, category) pair.
/// Values are constant along a row; `rows[r]` holds the value for row r.
struct PseudoDepthMap {
  int view = 0;
  int category = 0;
  int height = 0;
  int width = 0;
  std::vector<double> rows;
  std::set<int> populated_rows;

  template <typename Real = double>
  Tensor<Real> values() const {
    std::vector<Real> v(static_cast<std::size_t>(height) * width);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) v[r * width + c] = static_cast<Real>(rows[r]);
    return Tensor<Real>::from_data({height, width}, std::move(v));
  }
};

/// Builds the pseudo depth map of (view, category) from box annotations.
///
/// A box contributes its height to the row of its bottom edge (floor(y2),
/// clamped into the map). Populated rows hold (max + min) / 2 of their
/// heights; empty rows between populated ones are linearly interpolated and
/// rows outside the populated span take the nearest populated value.
inline PseudoDepthMap estimate_pseudo_depth(std::span<const Annotation> annotations, int view, int category,
                                            int height, int width) {
  if (height < 1 || width < 1) throw ContractError("estimate_pseudo_depth: map extents must be positive");
  std::vector<double> lo(height, 0.0), hi(height, 0.0);
  std::vector<bool> seen(height, false);
  for (const auto& a : annotations) {
    if (a.view != view || a.category != category) continue;
    if (!(a.box.y2 > a.box.y1)) {
      throw ContractError("estimate_pseudo_depth: box with non-positive height in view " + std::to_string(view));
    }
    const int row = std::clamp(static_cast<int>(std::floor(a.box.y2)), 0, height - 1);
    const double h = a.box.height();
    if (!seen[row]) {
      lo[row] = hi[row] = h;
      seen[row] = true;
    } else {
      lo[row] = std::min(lo[row], h);
      hi[row] = std::max(hi[row], h);
    }
  }
  PseudoDepthMap map{view, category, height, width, std::vector<double>(height, 0.0), {}};
  for (int r = 0; r < height; ++r) {
    if (seen[r]) {
      map.rows[r] = (hi[r] + lo[r]) / 2.0;
      map.populated_rows.insert(r);
    }
  }
  if (map.populated_rows.empty()) {
    throw PriorUnavailableError("no annotations for view " + std::to_string(view) + ", category " +
                                std::to_string(category));
  }
  const int first = *map.populated_rows.begin();
  const int last = *map.populated_rows.rbegin();
  for (int r = 0; r < first; ++r) map.rows[r] = map.rows[first];
  for (int r = last + 1; r < height; ++r) map.rows[r] = map.rows[last];
  int prev = first;
  for (int r : map.populated_rows) {
    for (int k = prev + 1; k < r; ++k) {
      const double t = static_cast<double>(k - prev) / static_cast<double>(r - prev);
      map.rows[k] = map.rows[prev] + t * (map.rows[r] - map.rows[prev]);
    }
    prev = r;
  }
  return map;
}

inline PseudoDepthMap uniform_depth_map(int view, int category, int height, int width, double value = 1.0) {
  return {view, category, height, width, std::vector<double>(height, value), {}};
}

/// Resamples a map to a new working resolution. Row values are interpolated
/// linearly (half-pixel centers) and scaled by new_height / height, since they
/// are pixel heights.
inline PseudoDepthMap rescale_depth_map(const PseudoDepthMap& map, int new_height, int new_width) {
  if (new_height < 1 || new_width < 1) throw ContractError("rescale_depth_map: extents must be positive");
  const double s = static_cast<double>(new_height) / map.height;
  PseudoDepthMap out{map.view, map.category, new_height, new_width, std::vector<double>(new_height), {}};
  for (int r = 0; r < new_height; ++r) {
    double src = (r + 0.5) / s - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(map.height - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, map.height - 1);
    const double f = src - i0;
    out.rows[r] = s * ((1.0 - f) * map.rows[i0] + f * map.rows[i1]);
  }
  for (int r : map.populated_rows) out.populated_rows.insert(std::min(new_height - 1, static_cast<int>(std::floor(r * s))));
  return out;
}

/// Coordinate maps plus one pseudo depth map per category for one static view.
struct GeometryPrior {
  int view = 0;
  int height = 0;
  int width = 0;
  std::vector<PseudoDepthMap> depth_maps;  // indexed by category id

  int categories() const { return static_cast<int>(depth_maps.size()); }

  // concat(Gx, Gy, D_1/H, ..., D_N/H) as a [2+N, H, W] network input.
  template <typename Real>
  Tensor<Real> input_tensor() const {
    auto coords = make_coord_maps<Real>(height, width);
    std::vector<Tensor<Real>> parts{reshape(coords.gx, {1, height, width}), reshape(coords.gy, {1, height, width})};
    for (const auto& d : depth_maps) {
      if (d.height != height || d.width != width) {
        throw DimensionError("GeometryPrior: depth map for category " + std::to_string(d.category) + " is " +
                             std::to_string(d.height) + "x" + std::to_string(d.width) + ", prior is " +
                             std::to_string(height) + "x" + std::to_string(width));
      }
      parts.push_back(reshape(scale(d.values<Real>(), static_cast<Real>(1.0 / height)), {1, height, width}));
    }
    NoGradGuard no_grad;
    return concat(parts, 0);
  }
};

/// Builds the prior of one view from training annotations. Categories without
/// any box fall back to a uniform map of value 1 with a warning; a view with no
/// boxes at all is an error.
inline GeometryPrior build_geometry_prior(std::span<const Annotation> annotations, int view, int categories, int height,
                                          int width) {
  bool any = false;
  for (const auto& a : annotations) any = any || a.view == view;
  if (!any) throw PriorUnavailableError("view " + std::to_string(view) + " has no training annotations");
  GeometryPrior prior{view, height, width, {}};
  for (int c = 0; c < categories; ++c) {
    try {
      prior.depth_maps.push_back(estimate_pseudo_depth(annotations, view, c, height, width));
    } catch (const PriorUnavailableError& e) {
      warn(std::string(e.what()) + "; using a uniform pseudo depth map");
      prior.depth_maps.push_back(uniform_depth_map(view, c, height, width));
    }
  }
  return prior;
}

inline nlohmann::json prior_to_json(const GeometryPrior& prior) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& d : prior.depth_maps) {
    cats.push_back({{"id", d.category},
                    {"rows", d.rows},
                    {"populated_rows", std::vector<int>(d.populated_rows.begin(), d.populated_rows.end())}});
  }
  return {{"view", prior.view}, {"width", prior.width}, {"height", prior.height}, {"categories", cats}};
}

inline GeometryPrior prior_from_json(const nlohmann::json& j) {
  try {
    GeometryPrior prior;
    prior.view = j.at("view").get<int>();
    prior.width = j.at("width").get<int>();
    prior.height = j.at("height").get<int>();
    for (const auto& c : j.at("categories")) {
      PseudoDepthMap d;
      d.view = prior.view;
      d.category = c.at("id").get<int>();
      d.height = prior.height;
      d.width = prior.width;
      d.rows = c.at("rows").get<std::vector<double>>();
      if (static_cast<int>(d.rows.size()) != prior.height) {
        throw DataError("prior for view " + std::to_string(prior.view) + " category " + std::to_string(d.category) +
                        " has " + std::to_string(d.rows.size()) + " rows, expected " + std::to_string(prior.height));
      }
      if (c.contains("populated_rows")) {
        for (int r : c.at("populated_rows").get<std::vector<int>>()) d.populated_rows.insert(r);
      }
      prior.depth_maps.push_back(std::move(d));
    }
    std::sort(prior.depth_maps.begin(), prior.depth_maps.end(),
              [](const auto& a, const auto& b) { return a.category < b.category; });
    return prior;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prior document: ") + e.what());
  }
}

/// Geometry branch: two 3x3 Conv-BN-ReLU blocks producing the encoded geometry,
/// a 1x1 attention conv over scales, and a 1x1 projection for the prediction heads.
template <typename Real>
struct GeometryEncoder {
  static constexpr int kChannels = 16;

  int in_channels = 0;
  int scales = 0;
  Conv2d<Real> conv1, conv2, attn_conv, pred_proj;
  BatchNorm<Real> bn1, bn2;

  static GeometryEncoder create(ParameterStore<Real>& store, const std::string& name, int categories, int scales,
                                int pred_channels, std::mt19937_64& rng) {
    GeometryEncoder e;
    e.in_channels = 2 + categories;
    e.scales = scales;
    e.conv1 = Conv2d<Real>::create(store, name + ".block1.conv", e.in_channels, kChannels, 3, rng);
    e.bn1 = BatchNorm<Real>::create(store, name + ".block1.bn", kChannels);
    e.conv2 = Conv2d<Real>::create(store, name + ".block2.conv", kChannels, kChannels, 3, rng);
    e.bn2 = BatchNorm<Real>::create(store, name + ".block2.bn", kChannels);
    e.attn_conv = Conv2d<Real>::create(store, name + ".attention", kChannels, scales, 1, rng);
    e.pred_proj = Conv2d<Real>::create(store, name + ".pred_proj", kChannels, pred_channels, 1, rng);
    return e;
  }
};

// Encoded geometry [16, H', W'] from a [2+N, H', W'] prior input.
template <typename Real>
Tensor<Real> encode_geometry(const Tensor<Real>& prior_input, GeometryEncoder<Real>& enc, bool training) {
  if (prior_input.rank() != 3 || prior_input.dim(0) != enc.in_channels) {
    throw ContractError("encode_geometry: expected " + std::to_string(enc.in_channels) +
                        " input channels (2 coordinate + N depth), got shape " + shape_str(prior_input.shape()));
  }
  auto x = relu(enc.bn1(enc.conv1(prior_input), training));
  return relu(enc.bn2(enc.conv2(x), training));
}

// Per-pixel softmax over S scale logits; channels sum to one at every pixel.
template <typename Real>
Tensor<Real> attention_maps(const Tensor<Real>& t_g, const GeometryEncoder<Real>& enc, int scales) {
  if (scales < 2) throw ContractError("attention_maps: need at least 2 scales");
  if (scales != enc.scales) {
    throw ContractError("attention_maps: encoder was built for " + std::to_string(enc.scales) + " scales, asked for " +
                        std::to_string(scales));
  }
  return softmax(enc.attn_conv(t_g), 0);
}

}  // namespace gastkit
