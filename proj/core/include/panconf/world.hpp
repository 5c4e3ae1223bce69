#pragma once

#include <cstddef>

#include "panconf/panoptic.hpp"
#include "panconf/rng.hpp"
#include "panconf/tensor.hpp"

namespace panconf {

/// Synthetic two-domain scene used by the self-training simulator.
///
/// Both domains share one layout: a stuff background (class 1) with
/// axis-aligned thing rectangles of classes 2..C painted over it. Pixel
/// features are random Fourier features of position plus a per-segment
/// appearance code. The target domain rotates feature channel pairs and adds
/// a constant bias, both proportional to `domain_shift`. It also carries
/// clutter: background patches that take on part of a thing segment's
/// appearance, again scaled by `domain_shift`. Every rendered sample adds
/// fresh, approximately Gaussian pixel noise.
struct WorldConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 3;
  std::size_t num_segments = 5;  ///< thing rectangles
  std::size_t embed_dim = 32;
  double domain_shift = 1.0;
  double noise = 0.35;
  double appearance = 2.0;     ///< norm of the per-segment appearance code
  double frequency = 3.0;      ///< bandwidth of the positional features
  double position = 0.3;       ///< rms amplitude of each positional channel
  double rotation = 0.6;       ///< channel rotation angle per unit of shift (radians)
  double bias = 0.6;           ///< norm of the feature bias per unit of shift
  double contrast = 0.0;       ///< target appearance codes shrink by this fraction per unit of shift
  std::size_t clutter = 0;     ///< target-only look-alike patches on the background
  double clutter_strength = 0.5;  ///< fraction of the thing code a patch borrows, per unit of shift
  std::size_t min_segment_area = 24;

  void validate() const;
};

enum class Domain { source, target };

struct World {
  WorldConfig config;
  PanopticSegmentation layout;
  PlaneStack clean_source;
  PlaneStack clean_target;
};

World make_world(const WorldConfig& cfg, Rng& rng);

/// Clean features of `domain` plus zero-mean noise of std `noise` per channel and pixel.
PlaneStack render(const World& world, Domain domain, Rng& rng);

}  // namespace panconf
