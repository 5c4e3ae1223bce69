#include "panconf/mean_teacher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace panconf {

ParamVector ema_update(std::span<const double> teacher, std::span<const double> student, double alpha) {
  if (teacher.size() != student.size()) {
    throw std::invalid_argument("ema_update: teacher has " + std::to_string(teacher.size()) +
                                " parameters, student " + std::to_string(student.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha must lie in [0, 1]");
  ParamVector out(teacher.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = alpha * teacher[k] + (1.0 - alpha) * student[k];
  return out;
}

ToyModel ToyModel::zeros(std::size_t queries, std::size_t dim, std::size_t classes) {
  ToyModel m;
  m.num_queries = queries;
  m.embed_dim = dim;
  m.num_classes = classes;
  m.mask_embeddings.assign(queries * dim, 0.0);
  m.class_params.assign(queries * (classes + 1), 0.0);
  return m;
}

ToyModel ToyModel::random(std::size_t queries, std::size_t dim, std::size_t classes, double scale, Rng& rng) {
  auto m = zeros(queries, dim, classes);
  for (auto& v : m.mask_embeddings) v = scale * rng.normal();
  return m;
}

ParamVector ToyModel::params() const {
  ParamVector out(mask_embeddings);
  out.insert(out.end(), class_params.begin(), class_params.end());
  return out;
}

void ToyModel::set_params(std::span<const double> values) {
  if (values.size() != param_count()) throw std::invalid_argument("set_params: wrong parameter count");
  std::copy_n(values.begin(), mask_embeddings.size(), mask_embeddings.begin());
  std::copy(values.begin() + static_cast<std::ptrdiff_t>(mask_embeddings.size()), values.end(),
            class_params.begin());
}

void ToyModel::validate() const {
  if (num_queries == 0 || embed_dim == 0 || num_classes == 0) throw std::invalid_argument("empty toy model");
  if (mask_embeddings.size() != num_queries * embed_dim ||
      class_params.size() != num_queries * (num_classes + 1)) {
    throw std::invalid_argument("toy model parameter sizes are inconsistent");
  }
}

namespace {

// Plain mul/add only, so every clone rounds identically. Up to four queries
// share one pass over a pixel block; each output keeps the same k order.
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
__attribute__((target_clones("avx2", "default")))
#endif
void accumulate_logits(const double* embeddings, std::size_t queries, std::size_t dim, const PlaneStack& features,
                       double* const* out) {
  constexpr std::size_t kBlock = 256;
  double acc[4][kBlock];
  const std::size_t pixels = features.plane_size();
  for (std::size_t begin = 0; begin < pixels; begin += kBlock) {
    const std::size_t len = std::min(pixels - begin, kBlock);
    for (std::size_t q = 0; q < queries; ++q) std::fill_n(acc[q], len, 0.0);
    for (std::size_t k = 0; k < dim; ++k) {
      const double* f = features.slice(k).data() + begin;
      if (queries == 4) {
        const double e0 = embeddings[k], e1 = embeddings[dim + k], e2 = embeddings[2 * dim + k],
                     e3 = embeddings[3 * dim + k];
        for (std::size_t p = 0; p < len; ++p) {
          acc[0][p] += e0 * f[p];
          acc[1][p] += e1 * f[p];
          acc[2][p] += e2 * f[p];
          acc[3][p] += e3 * f[p];
        }
      } else {
        for (std::size_t q = 0; q < queries; ++q) {
          const double e = embeddings[q * dim + k];
          for (std::size_t p = 0; p < len; ++p) acc[q][p] += e * f[p];
        }
      }
    }
    for (std::size_t q = 0; q < queries; ++q) std::copy_n(acc[q], len, out[q] + begin);
  }
}

}  // namespace

MaskPrediction toy_forward(const ToyModel& model, const PlaneStack& features) {
  model.validate();
  if (features.count != model.embed_dim) throw std::invalid_argument("feature depth differs from embed_dim");
  MaskPrediction pred;
  pred.num_classes = model.num_classes;
  pred.class_logits = model.class_params;
  pred.mask_logits = PlaneStack(model.num_queries, features.height, features.width);
  for (std::size_t i = 0; i < model.num_queries; i += 4) {
    const std::size_t group = std::min<std::size_t>(4, model.num_queries - i);
    double* out[4] = {};
    for (std::size_t q = 0; q < group; ++q) out[q] = pred.mask_logits.slice(i + q).data();
    accumulate_logits(model.mask_embeddings.data() + i * model.embed_dim, group, model.embed_dim, features, out);
  }
  return pred;
}

ImageLossTargets loss_targets(const LossReport& report, const PlaneStack& features, const PseudoLabel& labels,
                              std::span<const double> lambdas) {
  ImageLossTargets t;
  t.features = &features;
  t.labels = &labels;
  t.lambdas.assign(lambdas.begin(), lambdas.end());
  t.assignment = report.assignment;
  t.points.reserve(report.per_mask.size());
  for (const auto& term : report.per_mask) t.points.push_back(term.points);
  return t;
}

ToyGradient toy_gradient(const ToyModel& model, std::span<const ImageLossTargets> targets,
                         const LossWeights& weights) {
  model.validate();
  const std::size_t n = model.num_queries;
  const std::size_t d = model.embed_dim;
  const std::size_t classes = model.num_classes + 1;
  ToyGradient grad{std::vector<double>(model.mask_embeddings.size(), 0.0),
                   std::vector<double>(model.class_params.size(), 0.0)};

  std::vector<double> feat;
  for (const auto& image : targets) {
    if (image.features == nullptr || image.labels == nullptr) throw std::invalid_argument("incomplete loss targets");
    if (image.assignment.size() != n || image.points.size() != n) {
      throw std::invalid_argument("loss targets must cover every query");
    }
    const auto& features = *image.features;

    for (std::size_t i = 0; i < n; ++i) {
      const auto label = image.assignment[i];
      const std::size_t target =
          label == kUnassigned ? classes - 1 : image.labels->masks[static_cast<std::size_t>(label)].class_id - 1;
      const double w = target == classes - 1 ? weights.no_object : weights.cls;
      const auto probs = softmax(std::span<const double>(model.class_params.data() + i * classes, classes));
      for (std::size_t y = 0; y < classes; ++y) {
        grad.class_params[i * classes + y] += w * (probs[y] - (y == target ? 1.0 : 0.0));
      }

      if (label == kUnassigned) continue;
      const double lambda = image.lambdas.at(static_cast<std::size_t>(label));
      const auto& points = image.points[i];
      if (lambda == 0.0 || points.empty()) continue;

      const auto targets_t = label_targets(image.labels->mask_plane(static_cast<std::size_t>(label)), points);
      const std::size_t m = points.size();
      feat.assign(m * d, 0.0);
      std::vector<double> prob(m);
      double sum_p = 0.0, sum_t = 0.0, inter = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const auto tap = bilinear_tap(features.height, features.width, points[k]);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          auto plane = features.slice(c);
          double v = 0.0;
          for (int q = 0; q < 4; ++q) {
            if (tap.weight[q] != 0.0) v += tap.weight[q] * plane[tap.index[q]];
          }
          feat[k * d + c] = v;
          s += model.mask_embeddings[i * d + c] * v;
        }
        prob[k] = sigmoid(s);
        sum_p += prob[k];
        sum_t += targets_t[k];
        inter += prob[k] * targets_t[k];
      }

      const double denom = sum_p + sum_t + 1.0;
      const double numer = 2.0 * inter + 1.0;
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t k = 0; k < m; ++k) {
        const double p = prob[k];
        const double t = targets_t[k];
        const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
        const double d_bce = clamped ? 0.0 : (p - t) * inv_m;
        const double d_dice = -(2.0 * t * denom - numer) / (denom * denom) * p * (1.0 - p);
        const double g = lambda * (weights.bce * d_bce + weights.dice * d_dice);
        for (std::size_t c = 0; c < d; ++c) grad.mask_embeddings[i * d + c] += g * feat[k * d + c];
      }
    }
  }
  return grad;
}

ToyModel toy_grad_step(const ToyModel& model, std::span<const ImageLossTargets> targets,
                       const LossWeights& weights, double lr) {
  const auto grad = toy_gradient(model, targets, weights);
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(grad.mask_embeddings.begin(), grad.mask_embeddings.end(), finite) ||
      !std::all_of(grad.class_params.begin(), grad.class_params.end(), finite)) {
    throw std::domain_error("toy_grad_step: non-finite gradient");
  }
  ToyModel next = model;
  for (std::size_t k = 0; k < next.mask_embeddings.size(); ++k) next.mask_embeddings[k] -= lr * grad.mask_embeddings[k];
  for (std::size_t k = 0; k < next.class_params.size(); ++k) next.class_params[k] -= lr * grad.class_params[k];
  return next;
}

}  // namespace panconf
