#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "panconf/loss.hpp"
#include "panconf/panoptic.hpp"
#include "panconf/rng.hpp"
#include "panconf/tensor.hpp"

namespace panconf {

using ParamVector = std::vector<double>;

/// alpha * teacher + (1 - alpha) * student, elementwise.
ParamVector ema_update(std::span<const double> teacher, std::span<const double> student, double alpha);

/// Linear mask head over fixed pixel features: s[i, r, c] = <E[i], phi[:, r, c]>.
/// Class logits are free per-query parameters.
struct ToyModel {
  std::size_t num_queries = 0;
  std::size_t embed_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> mask_embeddings;  ///< N x d
  std::vector<double> class_params;     ///< N x (C+1)

  static ToyModel zeros(std::size_t queries, std::size_t dim, std::size_t classes);
  /// Embeddings ~ N(0, scale^2), class logits zero.
  static ToyModel random(std::size_t queries, std::size_t dim, std::size_t classes, double scale, Rng& rng);

  std::size_t param_count() const noexcept { return mask_embeddings.size() + class_params.size(); }
  ParamVector params() const;
  void set_params(std::span<const double> values);
  void validate() const;
};

/// Features are a d x H x W stack.
MaskPrediction toy_forward(const ToyModel& model, const PlaneStack& features);

/// Everything the loss fixed for one image: matching, per-label weights and
/// the sampled points of every matched query.
struct ImageLossTargets {
  const PlaneStack* features = nullptr;
  const PseudoLabel* labels = nullptr;
  std::vector<double> lambdas;             ///< per label
  std::vector<std::ptrdiff_t> assignment;  ///< per query
  std::vector<PointSet> points;            ///< per query
};

ImageLossTargets loss_targets(const LossReport& report, const PlaneStack& features, const PseudoLabel& labels,
                              std::span<const double> lambdas);

struct ToyGradient {
  std::vector<double> mask_embeddings;
  std::vector<double> class_params;
};

/// Analytic gradient of sum over images of
///   sum_i class_loss(i) + sum_{matched i} lambda * (w_bce * bce_i + w_dice * dice_i)
/// with the points and matching held fixed.
ToyGradient toy_gradient(const ToyModel& model, std::span<const ImageLossTargets> targets,
                         const LossWeights& weights);

/// One plain gradient-descent step. Throws std::domain_error on a non-finite gradient.
ToyModel toy_grad_step(const ToyModel& model, std::span<const ImageLossTargets> targets,
                       const LossWeights& weights, double lr);

}  // namespace panconf
