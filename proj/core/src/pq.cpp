#include "panconf/pq.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>
#include <unordered_map>
#include <unordered_set>

namespace panconf {
namespace {

std::uint64_t pair_key(std::uint32_t pred_id, std::uint32_t gt_id) {
  return (static_cast<std::uint64_t>(pred_id) << 32) | gt_id;
}

}  // namespace

ClassCounts& ClassCounts::operator+=(const ClassCounts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  iou_sum += other.iou_sum;
  return *this;
}

PqStats& PqStats::operator+=(const PqStats& other) {
  for (const auto& [cls, counts] : other.per_class) per_class[cls] += counts;
  return *this;
}

PqStats pq_image_stats(const PanopticSegmentation& pred, const PanopticSegmentation& gt) {
  if (pred.height != gt.height || pred.width != gt.width) throw std::invalid_argument("pq: size mismatch");
  pred.validate();
  gt.validate();

  std::unordered_map<std::uint64_t, std::uint64_t> intersection;
  for (std::size_t p = 0; p < pred.id_map.size(); ++p) {
    if (pred.id_map[p] != 0) ++intersection[pair_key(pred.id_map[p], gt.id_map[p])];
  }

  PqStats stats;
  std::map<std::uint32_t, std::vector<double>> matched_iou;
  std::unordered_set<std::uint32_t> matched_pred;
  std::unordered_set<std::uint32_t> matched_gt;
  for (const auto& [key, inter] : intersection) {
    const auto pred_id = static_cast<std::uint32_t>(key >> 32);
    const auto gt_id = static_cast<std::uint32_t>(key & 0xffffffffu);
    if (gt_id == 0) continue;
    const auto& pe = pred.table[pred.find(pred_id)];
    const auto& ge = gt.table[gt.find(gt_id)];
    if (pe.class_id != ge.class_id) continue;
    auto void_it = intersection.find(pair_key(pred_id, 0));
    const std::uint64_t pred_on_void = void_it == intersection.end() ? 0 : void_it->second;
    const auto uni = static_cast<double>(pe.area + ge.area - inter - pred_on_void);
    const double iou = static_cast<double>(inter) / uni;
    if (iou > 0.5) {
      ++stats.per_class[ge.class_id].tp;
      matched_iou[ge.class_id].push_back(iou);
      matched_pred.insert(pred_id);
      matched_gt.insert(gt_id);
    }
  }

  // Summing sorted values keeps iou_sum independent of id assignment.
  for (auto& [cls, ious] : matched_iou) {
    std::sort(ious.begin(), ious.end());
    for (double v : ious) stats.per_class[cls].iou_sum += v;
  }
  for (const auto& ge : gt.table) {
    auto& c = stats.per_class[ge.class_id];
    if (!matched_gt.contains(ge.segment_id)) ++c.fn;
  }
  for (const auto& pe : pred.table) {
    auto& c = stats.per_class[pe.class_id];
    if (matched_pred.contains(pe.segment_id)) continue;
    auto void_it = intersection.find(pair_key(pe.segment_id, 0));
    const std::uint64_t on_void = void_it == intersection.end() ? 0 : void_it->second;
    if (2 * on_void > pe.area) continue;
    ++c.fp;
  }
  return stats;
}

void pq_accumulate(const PanopticSegmentation& pred, const PanopticSegmentation& gt, PqStats& stats) {
  stats += pq_image_stats(pred, gt);
}

Quality quality_of(const ClassCounts& c) {
  Quality q;
  const double denom = static_cast<double>(c.tp) + 0.5 * static_cast<double>(c.fp) + 0.5 * static_cast<double>(c.fn);
  if (denom > 0.0) {
    q.pq = c.iou_sum / denom;
    q.rq = static_cast<double>(c.tp) / denom;
  }
  if (c.tp > 0) q.sq = c.iou_sum / static_cast<double>(c.tp);
  return q;
}

PqSummary pq_finalize(const PqStats& stats, std::span<const std::uint32_t> class_subset) {
  if (class_subset.empty()) throw std::invalid_argument("pq_finalize: empty class subset");
  PqSummary out;
  for (auto cls : class_subset) {
    auto it = stats.per_class.find(cls);
    if (it == stats.per_class.end()) continue;
    const auto& c = it->second;
    if (c.tp + c.fp + c.fn == 0) continue;
    const auto q = quality_of(c);
    out.per_class[cls] = q;
    out.mean.pq += q.pq;
    out.mean.sq += q.sq;
    out.mean.rq += q.rq;
    ++out.counted_classes;
  }
  if (out.counted_classes > 0) {
    const double n = static_cast<double>(out.counted_classes);
    out.mean.pq /= n;
    out.mean.sq /= n;
    out.mean.rq /= n;
  }
  return out;
}

}  // namespace panconf
