#include "panconf/panoptic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace panconf {

void MaskPrediction::validate() const {
  if (num_masks() == 0) throw std::invalid_argument("prediction has no masks");
  if (num_classes == 0) throw std::invalid_argument("prediction has no real classes");
  if (height() == 0 || width() == 0) throw std::invalid_argument("prediction has an empty spatial extent");
  if (class_logits.size() != num_masks() * (num_classes + 1)) {
    throw std::invalid_argument("class logits must be N x (C+1)");
  }
  if (mask_logits.values.size() != num_masks() * height() * width()) {
    throw std::invalid_argument("mask logits must be N x H x W");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(class_logits.begin(), class_logits.end(), finite)) {
    throw std::invalid_argument("non-finite class logit");
  }
  if (!std::all_of(mask_logits.values.begin(), mask_logits.values.end(), finite)) {
    throw std::invalid_argument("non-finite mask logit");
  }
}

MaskPrediction prediction_from_tensors(const Tensor& mask_logits, const Tensor& class_logits) {
  if (class_logits.dtype() != DType::f32 || class_logits.rank() != 2) {
    throw std::invalid_argument("class logits must be a rank-2 f32 tensor");
  }
  MaskPrediction pred;
  pred.mask_logits = stack_from_tensor(mask_logits);
  if (class_logits.shape()[0] != pred.num_masks() || class_logits.shape()[1] < 2) {
    throw std::invalid_argument("class logits must be N x (C+1) with N matching the mask logits");
  }
  pred.num_classes = class_logits.shape()[1] - 1;
  pred.class_logits.assign(class_logits.f32().begin(), class_logits.f32().end());
  pred.validate();
  return pred;
}

void PanopticSegmentation::validate() const {
  if (id_map.size() != height * width) throw std::invalid_argument("id map size does not match H x W");
  std::unordered_map<std::uint32_t, std::uint64_t> counts;
  for (auto id : id_map) {
    if (id != 0) ++counts[id];
  }
  std::unordered_map<std::uint32_t, std::size_t> seen;
  for (const auto& e : table) {
    if (e.segment_id == 0) throw std::invalid_argument("segment id 0 is reserved for void");
    if (!seen.emplace(e.segment_id, 0).second) {
      throw std::invalid_argument("duplicate segment id " + std::to_string(e.segment_id));
    }
    if (e.class_id == 0) throw std::invalid_argument("class ids are 1-based");
    auto it = counts.find(e.segment_id);
    const std::uint64_t actual = it == counts.end() ? 0 : it->second;
    if (e.area == 0 || e.area != actual) {
      throw std::invalid_argument("segment " + std::to_string(e.segment_id) + " area " + std::to_string(e.area) +
                                  " does not match its " + std::to_string(actual) + " pixels");
    }
  }
  for (const auto& [id, n] : counts) {
    if (!seen.contains(id)) throw std::invalid_argument("id " + std::to_string(id) + " missing from table");
  }
}

std::size_t PanopticSegmentation::find(std::uint32_t segment_id) const noexcept {
  for (std::size_t k = 0; k < table.size(); ++k) {
    if (table[k].segment_id == segment_id) return k;
  }
  return table.size();
}

void refresh_areas(PanopticSegmentation& pan) {
  std::unordered_map<std::uint32_t, std::uint64_t> counts;
  for (auto id : pan.id_map) {
    if (id != 0) ++counts[id];
  }
  SegmentTable kept;
  for (auto e : pan.table) {
    auto it = counts.find(e.segment_id);
    if (it == counts.end()) continue;
    e.area = it->second;
    kept.push_back(e);
  }
  pan.table = std::move(kept);
}

Tensor id_map_tensor(const PanopticSegmentation& pan) {
  return Tensor({pan.height, pan.width}, pan.id_map);
}

Plane PseudoLabel::mask_plane(std::size_t j) const {
  Plane out(height, width);
  const auto& px = masks.at(j).pixels;
  for (std::size_t k = 0; k < px.size(); ++k) out.values[k] = px[k] ? 1.0 : 0.0;
  return out;
}

void FusionConfig::validate() const {
  if (!(class_threshold >= 0.0 && class_threshold <= 1.0)) {
    throw std::invalid_argument("class_threshold must lie in [0, 1]");
  }
  if (!(overlap_threshold >= 0.0 && overlap_threshold <= 1.0)) {
    throw std::invalid_argument("overlap_threshold must lie in [0, 1]");
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - top);
    total += out[k];
  }
  for (auto& v : out) v /= total;
  return out;
}

ClassScore best_real_class(std::span<const double> logits) {
  const auto probs = softmax(logits);
  const std::size_t real = probs.size() - 1;
  ClassScore score;
  std::size_t best = 0;
  for (std::size_t y = 1; y < real; ++y) {
    if (probs[y] > probs[best]) best = y;
  }
  score.probability = probs[best];
  score.class_id = static_cast<std::uint32_t>(best + 1);
  score.no_object_wins = probs[real] > probs[best];
  return score;
}

PlaneStack pixel_confidence(const MaskPrediction& pred) {
  pred.validate();
  PlaneStack rho(pred.num_masks(), pred.height(), pred.width());
  for (std::size_t i = 0; i < pred.num_masks(); ++i) {
    const double class_prob = best_real_class(pred.class_row(i)).probability;
    auto src = pred.mask_logits.slice(i);
    auto dst = rho.slice(i);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = class_prob * sigmoid(src[k]);
  }
  return rho;
}

PanopticSegmentation fuse_panoptic(const MaskPrediction& pred, const FusionConfig& cfg) {
  cfg.validate();
  pred.validate();
  const std::size_t n = pred.num_masks();
  const std::size_t pixels = pred.height() * pred.width();

  std::vector<ClassScore> scores(n);
  std::vector<bool> kept(n);
  // rho is only needed for kept queries.
  std::vector<double> rho(n * pixels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = best_real_class(pred.class_row(i));
    kept[i] = !scores[i].no_object_wins && !(scores[i].probability < cfg.class_threshold);
    if (!kept[i]) continue;
    auto src = pred.mask_logits.slice(i);
    for (std::size_t k = 0; k < pixels; ++k) rho[i * pixels + k] = scores[i].probability * sigmoid(src[k]);
  }

  std::vector<std::ptrdiff_t> owner(pixels, -1);
  std::vector<std::uint64_t> claimed(n, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    std::ptrdiff_t best = -1;
    double best_rho = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!kept[i]) continue;
      const double v = rho[i * pixels + p];
      if (best < 0 || v > best_rho) {
        best = static_cast<std::ptrdiff_t>(i);
        best_rho = v;
      }
    }
    owner[p] = best;
    if (best >= 0) ++claimed[static_cast<std::size_t>(best)];
  }

  PanopticSegmentation pan;
  pan.height = pred.height();
  pan.width = pred.width();
  pan.id_map.assign(pixels, 0);

  std::vector<std::uint32_t> ids(n, 0);
  std::uint32_t next_id = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!kept[i] || claimed[i] == 0) continue;
    auto logits = pred.mask_logits.slice(i);
    std::uint64_t foreground = 0;
    for (double s : logits) foreground += sigmoid(s) > 0.5 ? 1 : 0;
    if (static_cast<double>(claimed[i]) < cfg.overlap_threshold * static_cast<double>(foreground)) continue;
    if (claimed[i] < cfg.min_area) continue;
    ids[i] = next_id++;
    pan.table.push_back({ids[i], scores[i].class_id, static_cast<std::uint32_t>(i), claimed[i]});
  }
  for (std::size_t p = 0; p < pixels; ++p) {
    if (owner[p] >= 0) pan.id_map[p] = ids[static_cast<std::size_t>(owner[p])];
  }
  return pan;
}

PseudoLabel to_pseudolabel(const PanopticSegmentation& pan) {
  PseudoLabel out;
  out.height = pan.height;
  out.width = pan.width;
  std::unordered_map<std::uint32_t, std::size_t> slot;
  for (std::size_t k = 0; k < pan.table.size(); ++k) {
    slot.emplace(pan.table[k].segment_id, k);
    out.masks.push_back({pan.table[k].class_id, std::vector<std::uint8_t>(pan.id_map.size(), 0)});
  }
  for (std::size_t p = 0; p < pan.id_map.size(); ++p) {
    if (pan.id_map[p] == 0) continue;
    auto it = slot.find(pan.id_map[p]);
    if (it != slot.end()) out.masks[it->second].pixels[p] = 1;
  }
  return out;
}

}  // namespace panconf
