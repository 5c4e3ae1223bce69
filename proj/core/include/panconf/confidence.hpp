#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "panconf/panoptic.hpp"
#include "panconf/tensor.hpp"

namespace panconf {

struct Thresholds {
  double tau1 = 0.99;      ///< pixel confidence needed to count towards a mask's lambda
  double tau2 = 0.8;       ///< teacher confidence below which points are never sampled
  double tau_ils = 0.968;  ///< image-wide variant
  /// Optional per-class tau1 (e.g. a looser value for stuff classes).
  std::map<std::uint32_t, double> tau1_per_class;

  double tau1_for(std::uint32_t class_id) const;
  void validate() const;
};

/// Which teacher confidence gates the sampling affinity.
enum class FilterMode {
  all_masks,  ///< Phi = max_i rho_i, shared by every student mask
  per_mask,   ///< sigmoid(|s_teacher|) of the teacher mask matched to the student mask
};

/// Phi[r, c] = max_i rho[i, r, c].
Plane teacher_phi(const PlaneStack& rho);

struct ConfidentCount {
  std::uint64_t confident = 0;   ///< foreground pixels with rho > tau1
  std::uint64_t foreground = 0;  ///< pixels carrying the segment id
};

/// Per-segment counts in table order, using the segment's own query plane of rho.
std::vector<ConfidentCount> mask_confident_counts(const PlaneStack& rho, const PanopticSegmentation& pan,
                                                  const Thresholds& thresholds);

/// lambda_k = confident_k / foreground_k for every segment k, in table order.
std::vector<double> mask_lambda(const PlaneStack& rho, const PanopticSegmentation& pan,
                                const Thresholds& thresholds);
std::vector<double> mask_lambda(const PlaneStack& rho, const PanopticSegmentation& pan, double tau1);

/// Same quantity computed the way the teacher graph does it: argmax over masks
/// of the fused map, one-hot encode per query, threshold rho, count.
std::vector<double> mask_lambda_onehot(const PlaneStack& rho, const PanopticSegmentation& pan,
                                       const Thresholds& thresholds);

/// Fraction of pixels with Phi > tau_ils; every mask gets this same weight.
double image_lambda(const Plane& phi, double tau_ils);

/// sigmoid(|s|), the per-mask teacher confidence; values in [0.5, 1).
Plane per_mask_confidence(const Plane& teacher_logits);

/// A(r, c) = -inf where teacher_conf < tau2, else -|s_student(r, c)|.
Plane sampling_affinity(const Plane& student_logits, const Plane& teacher_conf, double tau2);

/// Unfiltered affinity -|s|; the plain uncertainty-driven sampling.
Plane uncertainty_affinity(const Plane& student_logits);

/// Fraction of pixels where Phi < tau2.
double uncertain_fraction(const Plane& phi, double tau2);

}  // namespace panconf
