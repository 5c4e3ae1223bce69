#pragma once

#include <cstddef>
#include <vector>

#include "panconf/panoptic.hpp"
#include "panconf/rng.hpp"
#include "panconf/tensor.hpp"

namespace panconf {

/// Image (channels x H x W) with its panoptic labels.
struct LabeledImage {
  PlaneStack image;
  PanopticSegmentation panoptic;

  void validate() const;
};

struct SegmentOrigin {
  bool from_source = false;
  std::size_t table_index = 0;  ///< entry in the originating table
};

struct SegMixResult {
  LabeledImage mixed;
  std::vector<SegmentOrigin> origins;  ///< aligned with mixed.panoptic.table
  std::vector<std::size_t> pasted;     ///< source table indices that were pasted, ascending
};

/// Pastes ceil(K/2) of the source's K segments, chosen uniformly without
/// replacement, atop the target. Pasted pixels take the source image values
/// and labels; target segments keep their ids and shrink, and disappear once
/// fully covered. Pasted segments get fresh ids above the target's largest id.
SegMixResult segmix(const LabeledImage& source, const LabeledImage& target, Rng& rng);

}  // namespace panconf
