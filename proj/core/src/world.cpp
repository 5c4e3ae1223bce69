#include "panconf/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace panconf {
namespace {

std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

PanopticSegmentation paint_layout(const WorldConfig& cfg, Rng& rng) {
  const std::size_t h = cfg.height, w = cfg.width;
  // Paint thing rectangles over background id 1, later rectangles on top.
  std::vector<std::uint32_t> ids(h * w, 1);
  std::vector<std::uint32_t> classes{1};
  const std::size_t lo_h = std::max<std::size_t>(h / 6, 2), hi_h = std::max<std::size_t>(h * 3 / 8, lo_h + 1);
  const std::size_t lo_w = std::max<std::size_t>(w / 6, 2), hi_w = std::max<std::size_t>(w * 3 / 8, lo_w + 1);
  for (std::size_t s = 0; s < cfg.num_segments; ++s) {
    const std::size_t rh = lo_h + rng.index(hi_h - lo_h);
    const std::size_t rw = lo_w + rng.index(hi_w - lo_w);
    const std::size_t r0 = rng.index(h - rh + 1);
    const std::size_t c0 = rng.index(w - rw + 1);
    const auto cls = static_cast<std::uint32_t>(cfg.num_classes == 1 ? 1 : 2 + rng.index(cfg.num_classes - 1));
    const auto id = static_cast<std::uint32_t>(classes.size() + 1);
    classes.push_back(cls);
    for (std::size_t r = r0; r < r0 + rh; ++r) {
      for (std::size_t c = c0; c < c0 + rw; ++c) ids[r * w + c] = id;
    }
  }

  std::vector<std::uint64_t> area(classes.size() + 1, 0);
  for (auto id : ids) ++area[id];
  // Occluded leftovers below the minimum area fall back to background.
  for (auto& id : ids) {
    if (id != 1 && area[id] < cfg.min_segment_area) id = 1;
  }
  std::fill(area.begin(), area.end(), 0);
  for (auto id : ids) ++area[id];

  // Renumber to consecutive ids in painting order.
  std::vector<std::uint32_t> remap(classes.size() + 1, 0);
  PanopticSegmentation pan;
  pan.height = h;
  pan.width = w;
  std::uint32_t next = 1;
  for (std::size_t id = 1; id <= classes.size(); ++id) {
    if (area[id] == 0) continue;
    remap[id] = next;
    pan.table.push_back({next, classes[id - 1], static_cast<std::uint32_t>(next - 1), area[id]});
    ++next;
  }
  pan.id_map.resize(ids.size());
  for (std::size_t p = 0; p < ids.size(); ++p) pan.id_map[p] = remap[ids[p]];
  return pan;
}

}  // namespace

void WorldConfig::validate() const {
  if (height < 8 || width < 8) throw std::invalid_argument("world must be at least 8 x 8");
  if (num_classes == 0) throw std::invalid_argument("world needs at least one class");
  if (embed_dim < 2) throw std::invalid_argument("embed_dim must be at least 2");
  if (!(domain_shift >= 0.0) || !(noise >= 0.0) || !(position >= 0.0) || !(clutter_strength >= 0.0) ||
      !(contrast >= 0.0 && contrast <= 1.0)) {
    throw std::invalid_argument("shift, noise, position and clutter_strength must be >= 0, contrast in [0, 1]");
  }
}

World make_world(const WorldConfig& cfg, Rng& rng) {
  cfg.validate();
  World world;
  world.config = cfg;
  auto layout_rng = rng.split(0);
  world.layout = paint_layout(cfg, layout_rng);

  const std::size_t d = cfg.embed_dim, h = cfg.height, w = cfg.width;
  auto feat_rng = rng.split(1);
  std::vector<double> freq_r(d), freq_c(d), phase(d);
  for (std::size_t k = 0; k < d; ++k) {
    freq_r[k] = 2.0 * std::numbers::pi * cfg.frequency * feat_rng.normal();
    freq_c[k] = 2.0 * std::numbers::pi * cfg.frequency * feat_rng.normal();
    phase[k] = 2.0 * std::numbers::pi * feat_rng.uniform();
  }
  std::vector<std::vector<double>> codes;
  for (std::size_t s = 0; s < world.layout.table.size(); ++s) codes.push_back(random_unit(d, feat_rng));

  const double pos_scale = std::sqrt(2.0) * cfg.position;
  world.clean_source = PlaneStack(d, h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t p = r * w + c;
      const auto seg = world.layout.id_map[p] - 1;
      const double y = static_cast<double>(r) / static_cast<double>(h);
      const double x = static_cast<double>(c) / static_cast<double>(w);
      for (std::size_t k = 0; k < d; ++k) {
        world.clean_source.values[k * h * w + p] =
            pos_scale * std::cos(freq_r[k] * y + freq_c[k] * x + phase[k]) + cfg.appearance * codes[seg][k];
      }
    }
  }

  // Target: rotate a random pairing of channels, then add a constant bias.
  auto shift_rng = rng.split(2);
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t k = d - 1; k > 0; --k) std::swap(perm[k], perm[shift_rng.index(k + 1)]);
  const auto bias_dir = random_unit(d, shift_rng);
  const double angle = cfg.rotation * cfg.domain_shift;
  const double cs = std::cos(angle), sn = std::sin(angle);

  // Faded appearance: the target carries a shrunken copy of each segment code.
  world.clean_target = world.clean_source;
  const double fade = std::clamp(cfg.contrast * cfg.domain_shift, 0.0, 1.0);
  if (fade > 0.0) {
    for (std::size_t p = 0; p < h * w; ++p) {
      const auto seg = world.layout.id_map[p] - 1;
      for (std::size_t k = 0; k < d; ++k) world.clean_target.values[k * h * w + p] -= fade * cfg.appearance * codes[seg][k];
    }
  }
  const std::size_t plane = h * w;
  for (std::size_t k = 0; k + 1 < d; k += 2) {
    const std::vector<double> a(world.clean_target.slice(perm[k]).begin(), world.clean_target.slice(perm[k]).end());
    const std::vector<double> b(world.clean_target.slice(perm[k + 1]).begin(), world.clean_target.slice(perm[k + 1]).end());
    auto ta = world.clean_target.slice(perm[k]);
    auto tb = world.clean_target.slice(perm[k + 1]);
    for (std::size_t p = 0; p < plane; ++p) {
      ta[p] = cs * a[p] - sn * b[p];
      tb[p] = sn * a[p] + cs * b[p];
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    const double offset = cfg.bias * cfg.domain_shift * bias_dir[k];
    for (auto& v : world.clean_target.slice(k)) v += offset;
  }

  // Clutter: each patch copies part of one thing's code onto background pixels.
  const std::size_t things = world.layout.table.size() - 1;
  if (cfg.clutter > 0 && things > 0) {
    auto clutter_rng = rng.split(3);
    const std::size_t lo_h = std::max<std::size_t>(h / 8, 2), lo_w = std::max<std::size_t>(w / 8, 2);
    for (std::size_t n = 0; n < cfg.clutter; ++n) {
      const std::size_t ph = lo_h + clutter_rng.index(lo_h + 1);
      const std::size_t pw = lo_w + clutter_rng.index(lo_w + 1);
      const std::size_t r0 = clutter_rng.index(h - ph + 1);
      const std::size_t c0 = clutter_rng.index(w - pw + 1);
      const auto& code = codes[1 + clutter_rng.index(things)];
      const double amount = cfg.clutter_strength * cfg.domain_shift * cfg.appearance;
      for (std::size_t r = r0; r < r0 + ph; ++r) {
        for (std::size_t c = c0; c < c0 + pw; ++c) {
          const std::size_t p = r * w + c;
          if (world.layout.id_map[p] != 1) continue;
          for (std::size_t k = 0; k < d; ++k) world.clean_target.values[k * plane + p] += amount * code[k];
        }
      }
    }
  }
  return world;
}

namespace {

// Counter-based noise: value k hashes (key + k). Each 16-bit lane of the hash
// is (j + 0.5) / 65536, and four lanes sum to mean 2, variance 1/3. Integer
// hashing plus one mul/sub per value, so every clone gives identical bits.
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
__attribute__((target_clones("avx2", "default")))
#endif
void add_noise(double* values, std::size_t count, std::uint64_t key, double noise) {
  const double scale = noise * std::numbers::sqrt3 / 65536.0;
  const double offset = 2.0 * 65536.0 - 2.0;
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t bits = mix64(key + k);
    const auto lanes = static_cast<std::int64_t>((bits & 0xffff) + ((bits >> 16) & 0xffff) + ((bits >> 32) & 0xffff) +
                                                 (bits >> 48));
    values[k] += scale * (static_cast<double>(lanes) - offset);
  }
}

}  // namespace

PlaneStack render(const World& world, Domain domain, Rng& rng) {
  PlaneStack out = domain == Domain::source ? world.clean_source : world.clean_target;
  if (world.config.noise > 0.0) add_noise(out.values.data(), out.values.size(), rng.next_u64(), world.config.noise);
  return out;
}

}  // namespace panconf
