#include "panconf/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace panconf {
namespace {

void check_probability(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
}

void check_alignment(const PlaneStack& rho, const PanopticSegmentation& pan) {
  if (rho.count == 0) throw std::invalid_argument("rho has no masks");
  if (rho.height != pan.height || rho.width != pan.width) {
    throw std::invalid_argument("rho and panoptic map differ in size");
  }
  for (const auto& e : pan.table) {
    if (e.mask_index >= rho.count) throw std::invalid_argument("segment refers to a mask index outside rho");
  }
}

}  // namespace

double Thresholds::tau1_for(std::uint32_t class_id) const {
  auto it = tau1_per_class.find(class_id);
  return it == tau1_per_class.end() ? tau1 : it->second;
}

void Thresholds::validate() const {
  check_probability(tau1, "tau1");
  check_probability(tau2, "tau2");
  check_probability(tau_ils, "tau_ils");
  for (const auto& [cls, v] : tau1_per_class) check_probability(v, "per-class tau1");
}

Plane teacher_phi(const PlaneStack& rho) {
  if (rho.count == 0) throw std::invalid_argument("teacher_phi: rho has no masks");
  Plane phi(rho.height, rho.width);
  auto first = rho.slice(0);
  std::copy(first.begin(), first.end(), phi.values.begin());
  for (std::size_t i = 1; i < rho.count; ++i) {
    auto plane = rho.slice(i);
    for (std::size_t k = 0; k < plane.size(); ++k) phi.values[k] = std::max(phi.values[k], plane[k]);
  }
  return phi;
}

std::vector<ConfidentCount> mask_confident_counts(const PlaneStack& rho, const PanopticSegmentation& pan,
                                                  const Thresholds& thresholds) {
  check_alignment(rho, pan);
  std::unordered_map<std::uint32_t, std::size_t> slot;
  for (std::size_t k = 0; k < pan.table.size(); ++k) slot.emplace(pan.table[k].segment_id, k);

  std::vector<double> tau(pan.table.size());
  for (std::size_t k = 0; k < pan.table.size(); ++k) tau[k] = thresholds.tau1_for(pan.table[k].class_id);

  std::vector<ConfidentCount> counts(pan.table.size());
  const std::size_t pixels = rho.plane_size();
  for (std::size_t p = 0; p < pixels; ++p) {
    const auto id = pan.id_map[p];
    if (id == 0) continue;
    auto it = slot.find(id);
    if (it == slot.end()) throw std::invalid_argument("id map holds an id missing from the table");
    const auto k = it->second;
    ++counts[k].foreground;
    if (rho.values[pan.table[k].mask_index * pixels + p] > tau[k]) ++counts[k].confident;
  }
  return counts;
}

std::vector<double> mask_lambda(const PlaneStack& rho, const PanopticSegmentation& pan,
                                const Thresholds& thresholds) {
  const auto counts = mask_confident_counts(rho, pan, thresholds);
  std::vector<double> lambda(counts.size(), 0.0);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k].foreground == 0) throw std::invalid_argument("segment with zero area");
    lambda[k] = static_cast<double>(counts[k].confident) / static_cast<double>(counts[k].foreground);
  }
  return lambda;
}

std::vector<double> mask_lambda(const PlaneStack& rho, const PanopticSegmentation& pan, double tau1) {
  Thresholds t;
  t.tau1 = tau1;
  return mask_lambda(rho, pan, t);
}

std::vector<double> mask_lambda_onehot(const PlaneStack& rho, const PanopticSegmentation& pan,
                                       const Thresholds& thresholds) {
  check_alignment(rho, pan);
  const std::size_t n = rho.count;
  const std::size_t pixels = rho.plane_size();

  // Per-pixel query index of the fused map (-1 on void).
  std::unordered_map<std::uint32_t, std::uint32_t> query_of;
  std::vector<double> tau(n, thresholds.tau1);
  for (const auto& e : pan.table) {
    query_of.emplace(e.segment_id, e.mask_index);
    tau[e.mask_index] = thresholds.tau1_for(e.class_id);
  }
  std::vector<std::int64_t> index_map(pixels, -1);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (pan.id_map[p] != 0) index_map[p] = query_of.at(pan.id_map[p]);
  }

  std::vector<std::uint8_t> onehot(n * pixels, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (index_map[p] >= 0) onehot[static_cast<std::size_t>(index_map[p]) * pixels + p] = 1;
  }

  std::vector<double> per_query(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t hits = 0;
    std::uint64_t area = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const auto on = onehot[i * pixels + p];
      area += on;
      hits += on & static_cast<std::uint8_t>(rho.values[i * pixels + p] > tau[i]);
    }
    per_query[i] = area == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(area);
  }

  std::vector<double> lambda;
  lambda.reserve(pan.table.size());
  for (const auto& e : pan.table) lambda.push_back(per_query[e.mask_index]);
  return lambda;
}

double image_lambda(const Plane& phi, double tau_ils) {
  if (phi.size() == 0) return 0.0;
  std::uint64_t hits = 0;
  for (double v : phi.values) hits += v > tau_ils ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(phi.size());
}

Plane per_mask_confidence(const Plane& teacher_logits) {
  Plane out(teacher_logits.height, teacher_logits.width);
  for (std::size_t k = 0; k < out.size(); ++k) out.values[k] = sigmoid(std::abs(teacher_logits.values[k]));
  return out;
}

Plane sampling_affinity(const Plane& student_logits, const Plane& teacher_conf, double tau2) {
  if (student_logits.height != teacher_conf.height || student_logits.width != teacher_conf.width) {
    throw std::invalid_argument("sampling_affinity: shape mismatch");
  }
  Plane out(student_logits.height, student_logits.width);
  constexpr double kForbidden = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double s = student_logits.values[k];
    if (!std::isfinite(s)) throw std::invalid_argument("sampling_affinity: non-finite student logit");
    out.values[k] = teacher_conf.values[k] < tau2 ? kForbidden : -std::abs(s);
  }
  return out;
}

Plane uncertainty_affinity(const Plane& student_logits) {
  Plane out(student_logits.height, student_logits.width);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double s = student_logits.values[k];
    if (!std::isfinite(s)) throw std::invalid_argument("uncertainty_affinity: non-finite student logit");
    out.values[k] = -std::abs(s);
  }
  return out;
}

double uncertain_fraction(const Plane& phi, double tau2) {
  if (phi.size() == 0) return 0.0;
  std::uint64_t low = 0;
  for (double v : phi.values) low += v < tau2 ? 1 : 0;
  return static_cast<double>(low) / static_cast<double>(phi.size());
}

}  // namespace panconf
