#pragma once

#include <cstdint>
#include <map>
#include <span>

#include "panconf/panoptic.hpp"

namespace panconf {

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double iou_sum = 0.0;

  ClassCounts& operator+=(const ClassCounts& other);
  bool operator==(const ClassCounts&) const = default;
};

/// Per-class panoptic quality counts. Merging is commutative and associative.
struct PqStats {
  std::map<std::uint32_t, ClassCounts> per_class;

  PqStats& operator+=(const PqStats& other);
  bool operator==(const PqStats&) const = default;
};

/// Counts for one image. Same-class segments match iff IoU > 0.5; gt-void
/// pixels are left out of the union, and an unmatched prediction lying more
/// than half on gt void is not a false positive.
PqStats pq_image_stats(const PanopticSegmentation& pred, const PanopticSegmentation& gt);

void pq_accumulate(const PanopticSegmentation& pred, const PanopticSegmentation& gt, PqStats& stats);

struct Quality {
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
};

Quality quality_of(const ClassCounts& counts);

struct PqSummary {
  std::map<std::uint32_t, Quality> per_class;  ///< classes of the subset that occur
  Quality mean;
  std::size_t counted_classes = 0;
};

/// Per-class and mean PQ/SQ/RQ over `class_subset`; classes that never occur
/// (tp + fp + fn == 0) are excluded from the mean.
PqSummary pq_finalize(const PqStats& stats, std::span<const std::uint32_t> class_subset);

}  // namespace panconf
