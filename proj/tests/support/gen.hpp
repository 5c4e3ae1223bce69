#pragma once

// Random instance generators for property and oracle tests.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "panconf/loss.hpp"
#include "panconf/mean_teacher.hpp"
#include "panconf/panoptic.hpp"
#include "panconf/rng.hpp"
#include "panconf/tensor.hpp"

namespace gen {

using namespace panconf;

inline std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

inline Plane random_plane(Rng& rng, std::size_t h, std::size_t w, double scale = 3.0) {
  Plane out(h, w);
  for (auto& v : out.values) v = scale * rng.normal();
  return out;
}

struct PredictionShape {
  std::size_t max_masks = 8;
  std::size_t max_classes = 4;
  std::size_t min_side = 4;
  std::size_t max_side = 32;
};

/// Mask logits are noisy rectangles; class rows are confident, flat or
/// no-object dominated, so every fusion branch gets exercised. Some queries
/// duplicate an earlier one to force exact rho ties.
inline MaskPrediction random_prediction(Rng& rng, const PredictionShape& shape = {}) {
  MaskPrediction pred;
  const std::size_t n = between(rng, 1, shape.max_masks);
  const std::size_t h = between(rng, shape.min_side, shape.max_side);
  const std::size_t w = between(rng, shape.min_side, shape.max_side);
  pred.num_classes = between(rng, 1, shape.max_classes);
  const std::size_t cols = pred.num_classes + 1;
  pred.class_logits.assign(n * cols, 0.0);
  pred.mask_logits = PlaneStack(n, h, w);

  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && rng.uniform() < 0.15) {
      const std::size_t src = rng.index(i);
      std::copy_n(pred.class_logits.begin() + static_cast<std::ptrdiff_t>(src * cols), cols,
                  pred.class_logits.begin() + static_cast<std::ptrdiff_t>(i * cols));
      const auto from = pred.mask_logits.slice(src);
      std::copy(from.begin(), from.end(), pred.mask_logits.slice(i).begin());
      continue;
    }
    auto row = pred.class_row(i);
    for (auto& z : row) z = rng.normal();
    const double kind = rng.uniform();
    if (kind < 0.7) {
      row[rng.index(pred.num_classes)] += rng.uniform(2.5, 8.0);
    } else if (kind < 0.85) {
      row[pred.num_classes] += rng.uniform(2.5, 8.0);
    }

    const std::size_t r0 = rng.index(h), c0 = rng.index(w);
    const std::size_t r1 = r0 + between(rng, 1, h - r0), c1 = c0 + between(rng, 1, w - c0);
    const double inside = rng.uniform(0.5, 4.0), outside = -rng.uniform(0.5, 4.0);
    const double noise = rng.uniform(0.2, 2.0);
    auto plane = pred.mask_logits.slice(i);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const bool in = r >= r0 && r < r1 && c >= c0 && c < c1;
        plane[r * w + c] = (in ? inside : outside) + noise * rng.normal();
      }
    }
  }
  return pred;
}

/// Random panoptic map: rectangles painted over a canvas that is either void
/// or a stuff segment, optionally with random void pixels punched in.
inline PanopticSegmentation random_panoptic(Rng& rng, std::size_t h, std::size_t w, std::size_t num_classes,
                                            std::size_t max_segments, double void_rate = 0.0) {
  std::vector<std::uint32_t> ids(h * w, rng.uniform() < 0.5 ? 1u : 0u);
  const std::size_t segments = between(rng, 0, max_segments);
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t r0 = rng.index(h), c0 = rng.index(w);
    const std::size_t r1 = r0 + between(rng, 1, h - r0), c1 = c0 + between(rng, 1, w - c0);
    const auto id = static_cast<std::uint32_t>(2 + s);
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) ids[r * w + c] = id;
    }
  }
  for (auto& id : ids) {
    if (void_rate > 0.0 && rng.uniform() < void_rate) id = 0;
  }
  // Sparse, shuffled ids so nothing relies on them being 1..K.
  std::vector<std::uint32_t> rename(segments + 2, 0);
  for (std::size_t k = 1; k < rename.size(); ++k) rename[k] = static_cast<std::uint32_t>(7 * k + rng.index(5));
  PanopticSegmentation pan;
  pan.height = h;
  pan.width = w;
  pan.id_map.resize(ids.size());
  for (std::size_t p = 0; p < ids.size(); ++p) pan.id_map[p] = rename[ids[p]];
  for (std::size_t k = 1; k < rename.size(); ++k) {
    const auto area = static_cast<std::uint64_t>(std::count(pan.id_map.begin(), pan.id_map.end(), rename[k]));
    if (area == 0) continue;
    const auto cls = static_cast<std::uint32_t>(1 + rng.index(num_classes));
    pan.table.push_back({rename[k], cls, static_cast<std::uint32_t>(k - 1), area});
  }
  return pan;
}

/// Random pseudo-labels: disjoint rectangles, possibly empty list.
inline PseudoLabel random_labels(Rng& rng, std::size_t h, std::size_t w, std::size_t num_classes,
                                 std::size_t count) {
  auto pan = random_panoptic(rng, h, w, num_classes, count + 2);
  if (pan.table.size() > count) pan.table.resize(count);
  for (auto& id : pan.id_map) {
    if (pan.find(id) == pan.table.size()) id = 0;
  }
  return to_pseudolabel(pan);
}

inline ToyModel random_toy(Rng& rng, std::size_t queries, std::size_t dim, std::size_t classes, double scale) {
  auto model = ToyModel::random(queries, dim, classes, scale, rng);
  for (auto& z : model.class_params) z = rng.normal();
  return model;
}

inline PlaneStack random_features(Rng& rng, std::size_t dim, std::size_t h, std::size_t w) {
  PlaneStack f(dim, h, w);
  for (auto& v : f.values) v = rng.normal();
  return f;
}

/// Teacher confidence with rectangular low-confidence blocks (< 0.8) over a
/// confident field.
inline Plane blocky_confidence(Rng& rng, std::size_t h, std::size_t w, std::size_t blocks) {
  Plane conf(h, w);
  for (auto& v : conf.values) v = rng.uniform(0.8, 1.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t r0 = rng.index(h), c0 = rng.index(w);
    const std::size_t r1 = r0 + between(rng, 1, std::max<std::size_t>(h / 3, 1)), c1 = c0 + between(rng, 1, std::max<std::size_t>(w / 3, 1));
    for (std::size_t r = r0; r < std::min(r1, h); ++r) {
      for (std::size_t c = c0; c < std::min(c1, w); ++c) conf.at(r, c) = rng.uniform(0.0, 0.79);
    }
  }
  return conf;
}

}  // namespace gen
