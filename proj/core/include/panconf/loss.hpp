#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "panconf/assignment.hpp"
#include "panconf/panoptic.hpp"
#include "panconf/rng.hpp"
#include "panconf/tensor.hpp"

namespace panconf {

/// Continuous location in [0, H) x [0, W); integer coordinates hit grid nodes.
struct Point {
  double row = 0.0;
  double col = 0.0;

  bool operator==(const Point&) const = default;
};

using PointSet = std::vector<Point>;

struct LossWeights {
  double cls = 2.0;
  double bce = 5.0;
  double dice = 5.0;
  double no_object = 0.1;

  void validate() const;
};

struct SamplingConfig {
  std::size_t num_points = 112 * 112;
  double beta = 0.75;  ///< share of points taken by largest affinity

  void validate() const;
};

/// Corner weights of one bilinear lookup with clamped borders.
struct BilinearTap {
  std::size_t index[4];
  double weight[4];
};
BilinearTap bilinear_tap(std::size_t height, std::size_t width, Point p);

/// Bilinear interpolation with clamped borders. Corners with zero weight are
/// skipped, so a -inf node only propagates into points it actually touches.
double bilinear_at(const Plane& map, Point p);
std::vector<double> bilinear_sample(const Plane& map, std::span<const Point> points);

/// `n` uniform points over the map extent.
PointSet uniform_points(std::size_t height, std::size_t width, std::size_t n, Rng& rng);

/// Draws 3n uniform candidates, keeps floor(beta*n) finite candidates of
/// largest affinity (earlier draws win ties), then ceil((1-beta)*n) more drawn
/// without replacement from the remaining finite candidates. When fewer finite
/// candidates exist, all of them are returned; filtered points are never used
/// to fill the deficit.
PointSet sample_points(const Plane& affinity, std::size_t n, double beta, Rng& rng);

struct MaskLoss {
  double bce = 0.0;
  double dice = 0.0;
  std::size_t n_points = 0;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// BCE (mean over points) and dice (smoothing 1) between sigmoid(student) and
/// the hard label at the sampled points. Labels are bilinear-sampled and
/// thresholded at 0.5.
MaskLoss mask_loss_at_points(const Plane& student_logits, const Plane& label_mask,
                             std::span<const Point> points);

/// Hard target per point: bilinear(label) >= 0.5.
std::vector<double> label_targets(const Plane& label_mask, std::span<const Point> points);

/// Weighted cross-entropy; `target_class` in [1, C+1], C+1 = no-object.
double class_loss(std::span<const double> class_logits, std::uint32_t target_class, const LossWeights& weights);

struct MatchResult {
  std::vector<std::ptrdiff_t> assignment;  ///< per prediction: label index or kUnassigned
  double cost = 0.0;
};

/// Matching cost between every prediction and every label, evaluated on `points`.
CostMatrix matching_cost(const MaskPrediction& pred, const PseudoLabel& labels, const LossWeights& weights,
                         std::span<const Point> points);

/// Hungarian matching on min(n_points, H*W) shared uniform points.
MatchResult match_masks(const MaskPrediction& pred, const PseudoLabel& labels, const LossWeights& weights,
                        std::size_t n_points, Rng& rng);

struct TargetLossConfig {
  LossWeights weights;
  SamplingConfig sampling;
  std::size_t match_points = 112 * 112;
};

struct MaskTerm {
  std::ptrdiff_t label = kUnassigned;
  double lambda = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  std::size_t n_points = 0;
  PointSet points;
};

struct LossReport {
  double total = 0.0;
  double cls_term = 0.0;
  double loc_term = 0.0;
  std::vector<std::ptrdiff_t> assignment;
  std::vector<MaskTerm> per_mask;  ///< one per prediction
};

/// Random streams used by target_loss, split from the caller's generator.
inline constexpr std::uint64_t kMatchStream = 0;
inline std::uint64_t sampling_stream(std::size_t mask) { return 1 + static_cast<std::uint64_t>(mask); }

/// Student loss against (pseudo-)labels: classification over all predictions,
/// localization over predictions matched to a real label, each scaled by its
/// label's lambda and evaluated at points drawn from that prediction's affinity.
/// `affinities` has one plane per prediction.
LossReport target_loss(const MaskPrediction& student, const PseudoLabel& labels, std::span<const double> lambdas,
                       std::span<const Plane> affinities, const TargetLossConfig& cfg, Rng& rng);

}  // namespace panconf
