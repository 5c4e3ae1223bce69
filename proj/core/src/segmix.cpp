#include "panconf/segmix.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace panconf {

void LabeledImage::validate() const {
  if (image.height != panoptic.height || image.width != panoptic.width) {
    throw std::invalid_argument("image and panoptic labels differ in size");
  }
  if (image.values.size() != image.count * image.height * image.width) {
    throw std::invalid_argument("image buffer does not match its shape");
  }
  panoptic.validate();
}

SegMixResult segmix(const LabeledImage& source, const LabeledImage& target, Rng& rng) {
  source.validate();
  target.validate();
  if (source.image.height != target.image.height || source.image.width != target.image.width ||
      source.image.count != target.image.count) {
    throw std::invalid_argument("segmix: source and target sizes differ");
  }

  SegMixResult result;
  result.mixed = target;
  const std::size_t k = source.panoptic.table.size();
  const std::size_t take = (k + 1) / 2;

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t a = 0; a < take; ++a) {
    std::swap(order[a], order[a + rng.index(k - a)]);
  }
  result.pasted.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(result.pasted.begin(), result.pasted.end());

  for (std::size_t t = 0; t < target.panoptic.table.size(); ++t) result.origins.push_back({false, t});
  if (take == 0) return result;

  std::uint32_t next_id = 1;
  for (const auto& e : target.panoptic.table) next_id = std::max(next_id, e.segment_id + 1);

  std::unordered_map<std::uint32_t, std::uint32_t> new_id;
  std::vector<SegmentEntry> pasted_entries;
  for (auto idx : result.pasted) {
    const auto& e = source.panoptic.table[idx];
    new_id.emplace(e.segment_id, next_id);
    pasted_entries.push_back({next_id, e.class_id, e.mask_index, e.area});
    ++next_id;
  }

  auto& pan = result.mixed.panoptic;
  auto& image = result.mixed.image;
  const std::size_t pixels = pan.height * pan.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    auto it = new_id.find(source.panoptic.id_map[p]);
    if (it == new_id.end()) continue;
    pan.id_map[p] = it->second;
    for (std::size_t ch = 0; ch < image.count; ++ch) {
      image.values[ch * pixels + p] = source.image.values[ch * pixels + p];
    }
  }

  // Shrink target segments, dropping the ones fully covered.
  std::unordered_map<std::uint32_t, std::uint64_t> area;
  for (auto id : pan.id_map) {
    if (id != 0) ++area[id];
  }
  SegmentTable table;
  std::vector<SegmentOrigin> origins;
  for (std::size_t t = 0; t < target.panoptic.table.size(); ++t) {
    auto e = target.panoptic.table[t];
    auto it = area.find(e.segment_id);
    if (it == area.end()) continue;
    e.area = it->second;
    table.push_back(e);
    origins.push_back({false, t});
  }
  for (std::size_t q = 0; q < pasted_entries.size(); ++q) {
    table.push_back(pasted_entries[q]);
    origins.push_back({true, result.pasted[q]});
  }
  pan.table = std::move(table);
  result.origins = std::move(origins);
  return result;
}

}  // namespace panconf
