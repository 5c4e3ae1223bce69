#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "panconf/tensor.hpp"

namespace panconf {

/// Raw mask-transformer output for one image.
///
/// `class_logits` is N x (C+1) row-major; column C is the no-object class.
/// `mask_logits` holds the pre-sigmoid assignment scores, one plane per query.
struct MaskPrediction {
  std::size_t num_classes = 0;
  std::vector<double> class_logits;
  PlaneStack mask_logits;

  std::size_t num_masks() const noexcept { return mask_logits.count; }
  std::size_t height() const noexcept { return mask_logits.height; }
  std::size_t width() const noexcept { return mask_logits.width; }
  std::size_t no_object() const noexcept { return num_classes; }

  std::span<const double> class_row(std::size_t i) const {
    return {class_logits.data() + i * (num_classes + 1), num_classes + 1};
  }
  std::span<double> class_row(std::size_t i) {
    return {class_logits.data() + i * (num_classes + 1), num_classes + 1};
  }

  /// Throws std::invalid_argument on empty dimensions, size mismatch or non-finite logits.
  void validate() const;
};

MaskPrediction prediction_from_tensors(const Tensor& mask_logits, const Tensor& class_logits);

struct SegmentEntry {
  std::uint32_t segment_id = 0;  ///< >= 1; 0 is void
  std::uint32_t class_id = 0;    ///< in [1, C]
  std::uint32_t mask_index = 0;  ///< query that produced the segment
  std::uint64_t area = 0;

  bool operator==(const SegmentEntry&) const = default;
};

using SegmentTable = std::vector<SegmentEntry>;

struct PanopticSegmentation {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> id_map;  ///< H x W, 0 = void
  SegmentTable table;

  /// Checks that ids are unique and >= 1, and that the table agrees with the map in both directions.
  void validate() const;

  /// Position of `segment_id` in the table, or table.size() when absent.
  std::size_t find(std::uint32_t segment_id) const noexcept;

  bool operator==(const PanopticSegmentation&) const = default;
};

/// Recounts areas from the id map and drops entries whose area became zero.
void refresh_areas(PanopticSegmentation& pan);

Tensor id_map_tensor(const PanopticSegmentation& pan);

struct BinaryMask {
  std::uint32_t class_id = 0;
  std::vector<std::uint8_t> pixels;  ///< H x W, 0 or 1
};

/// Hard teacher labels: one binary map per segment, in segment-table order.
struct PseudoLabel {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<BinaryMask> masks;

  Plane mask_plane(std::size_t j) const;
};

struct FusionConfig {
  double class_threshold = 0.8;
  double overlap_threshold = 0.8;
  std::uint64_t min_area = 0;

  void validate() const;
};

double sigmoid(double x) noexcept;

/// Softmax of one logit row, max-subtracted.
std::vector<double> softmax(std::span<const double> logits);

/// max over real classes of softmax(class_logits_i), and the 1-based argmax class.
struct ClassScore {
  double probability = 0.0;
  std::uint32_t class_id = 0;
  bool no_object_wins = false;
};
ClassScore best_real_class(std::span<const double> logits);

/// rho[i, r, c] = max_{y != no-object} P_i(y) * sigmoid(s[i, r, c]).
PlaneStack pixel_confidence(const MaskPrediction& pred);

/// Default mask-transformer panoptic inference.
///
/// Queries whose argmax is no-object or whose best real-class probability is
/// below `class_threshold` are dropped. Every pixel goes to the surviving query
/// with the largest rho (lowest index on ties). A query then keeps its segment
/// only if it claimed at least `overlap_threshold` of its own sigmoid > 0.5
/// pixels and at least `min_area` pixels; otherwise those pixels become void.
/// Segment ids are assigned 1, 2, ... in query order.
PanopticSegmentation fuse_panoptic(const MaskPrediction& pred, const FusionConfig& cfg);

PseudoLabel to_pseudolabel(const PanopticSegmentation& pan);

}  // namespace panconf
