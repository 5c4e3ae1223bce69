#include "panconf/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace panconf {
namespace {

void check_point(std::size_t height, std::size_t width, Point p) {
  if (!(p.row >= 0.0 && p.row < static_cast<double>(height) && p.col >= 0.0 &&
        p.col < static_cast<double>(width))) {
    throw std::invalid_argument("point (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                                ") lies outside the map");
  }
}

struct DiceSums {
  double intersection = 0.0;
  double prob = 0.0;
  double target = 0.0;
};

double dice_from(const DiceSums& s) { return 1.0 - (2.0 * s.intersection + 1.0) / (s.prob + s.target + 1.0); }

double bce_term(double p, double t) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
}

}  // namespace

void LossWeights::validate() const {
  if (!(cls > 0.0 && bce > 0.0 && dice > 0.0 && no_object > 0.0)) {
    throw std::invalid_argument("loss weights must be positive");
  }
}

void SamplingConfig::validate() const {
  if (num_points == 0) throw std::invalid_argument("number of points must be at least 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
}

BilinearTap bilinear_tap(std::size_t height, std::size_t width, Point p) {
  check_point(height, width, p);
  const auto r0 = static_cast<std::size_t>(std::floor(p.row));
  const auto c0 = static_cast<std::size_t>(std::floor(p.col));
  const auto r1 = std::min(r0 + 1, height - 1);
  const auto c1 = std::min(c0 + 1, width - 1);
  const double fr = p.row - static_cast<double>(r0);
  const double fc = p.col - static_cast<double>(c0);
  return BilinearTap{{r0 * width + c0, r0 * width + c1, r1 * width + c0, r1 * width + c1},
                     {(1.0 - fr) * (1.0 - fc), (1.0 - fr) * fc, fr * (1.0 - fc), fr * fc}};
}

namespace {

double bilinear_raw(const double* values, std::size_t height, std::size_t width, Point p) {
  const auto tap = bilinear_tap(height, width, p);
  double value = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (tap.weight[k] != 0.0) value += tap.weight[k] * values[tap.index[k]];
  }
  return value;
}

}  // namespace

double bilinear_at(const Plane& map, Point p) { return bilinear_raw(map.values.data(), map.height, map.width, p); }

std::vector<double> bilinear_sample(const Plane& map, std::span<const Point> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(bilinear_at(map, p));
  return out;
}

PointSet uniform_points(std::size_t height, std::size_t width, std::size_t n, Rng& rng) {
  PointSet points;
  points.reserve(n);
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  for (std::size_t k = 0; k < n; ++k) {
    // uniform() < 1 keeps both coordinates strictly inside the extent.
    const double r = rng.uniform() * h;
    const double c = rng.uniform() * w;
    points.push_back({std::min(r, std::nextafter(h, 0.0)), std::min(c, std::nextafter(w, 0.0))});
  }
  return points;
}

PointSet sample_points(const Plane& affinity, std::size_t n, double beta, Rng& rng) {
  SamplingConfig{n, beta}.validate();
  const auto candidates = uniform_points(affinity.height, affinity.width, 3 * n, rng);
  const auto scores = bilinear_sample(affinity, candidates);

  std::vector<std::size_t> finite;
  finite.reserve(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (std::isfinite(scores[k])) finite.push_back(k);
  }

  const auto n_top = static_cast<std::size_t>(std::floor(beta * static_cast<double>(n)));
  const std::size_t n_random = n - n_top;

  // Highest affinity first; ties keep draw order.
  std::vector<std::size_t> ranked = finite;
  const std::size_t take_top = std::min(n_top, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take_top), ranked.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });

  PointSet out;
  out.reserve(std::min(n, finite.size()));
  for (std::size_t k = 0; k < take_top; ++k) out.push_back(candidates[ranked[k]]);

  // Remaining pool in draw order, then a partial Fisher-Yates shuffle.
  std::vector<std::size_t> pool(ranked.begin() + static_cast<std::ptrdiff_t>(take_top), ranked.end());
  std::sort(pool.begin(), pool.end());
  const std::size_t take_random = std::min(n_random, pool.size());
  for (std::size_t k = 0; k < take_random; ++k) {
    const std::size_t pick = k + rng.index(pool.size() - k);
    std::swap(pool[k], pool[pick]);
    out.push_back(candidates[pool[k]]);
  }
  return out;
}

std::vector<double> label_targets(const Plane& label_mask, std::span<const Point> points) {
  std::vector<double> t;
  t.reserve(points.size());
  for (const auto& p : points) t.push_back(bilinear_at(label_mask, p) >= 0.5 ? 1.0 : 0.0);
  return t;
}

MaskLoss mask_loss_at_points(const Plane& student_logits, const Plane& label_mask,
                             std::span<const Point> points) {
  if (student_logits.height != label_mask.height || student_logits.width != label_mask.width) {
    throw std::invalid_argument("mask_loss_at_points: shape mismatch");
  }
  MaskLoss out;
  if (points.empty()) return out;
  const auto targets = label_targets(label_mask, points);
  DiceSums sums;
  double bce = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double p = sigmoid(bilinear_at(student_logits, points[k]));
    const double t = targets[k];
    bce += bce_term(p, t);
    sums.intersection += p * t;
    sums.prob += p;
    sums.target += t;
  }
  out.bce = bce / static_cast<double>(points.size());
  out.dice = dice_from(sums);
  out.n_points = points.size();
  return out;
}

double class_loss(std::span<const double> class_logits, std::uint32_t target_class, const LossWeights& weights) {
  if (target_class < 1 || target_class > class_logits.size()) {
    throw std::invalid_argument("target class " + std::to_string(target_class) + " outside [1, C+1]");
  }
  const double top = *std::max_element(class_logits.begin(), class_logits.end());
  double total = 0.0;
  for (double z : class_logits) total += std::exp(z - top);
  const double log_prob = class_logits[target_class - 1] - top - std::log(total);
  const bool no_object = target_class == class_logits.size();
  return -(no_object ? weights.no_object : weights.cls) * log_prob;
}

CostMatrix matching_cost(const MaskPrediction& pred, const PseudoLabel& labels, const LossWeights& weights,
                         std::span<const Point> points) {
  const std::size_t n = pred.num_masks();
  const std::size_t m = labels.masks.size();
  CostMatrix cost(n, m);
  if (m == 0) return cost;

  std::vector<std::vector<double>> targets(m);
  std::vector<double> target_sum(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    targets[j] = label_targets(labels.mask_plane(j), points);
    target_sum[j] = std::accumulate(targets[j].begin(), targets[j].end(), 0.0);
  }

  const double inv_n = points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size());
  // Targets are 0/1, so each point's BCE is one of two terms fixed per query.
  std::vector<double> prob(points.size()), bce_pos(points.size()), bce_neg(points.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* logits = pred.mask_logits.slice(i).data();
    double prob_sum = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      prob[k] = sigmoid(bilinear_raw(logits, pred.height(), pred.width(), points[k]));
      prob_sum += prob[k];
      bce_pos[k] = bce_term(prob[k], 1.0);
      bce_neg[k] = bce_term(prob[k], 0.0);
    }
    for (std::size_t j = 0; j < m; ++j) {
      double c = class_loss(pred.class_row(i), labels.masks[j].class_id, weights);
      if (!points.empty()) {
        double bce = 0.0;
        DiceSums sums{0.0, prob_sum, target_sum[j]};
        for (std::size_t k = 0; k < points.size(); ++k) {
          bce += targets[j][k] != 0.0 ? bce_pos[k] : bce_neg[k];
          sums.intersection += prob[k] * targets[j][k];
        }
        c += weights.bce * bce * inv_n + weights.dice * dice_from(sums);
      }
      cost.at(i, j) = c;
    }
  }
  return cost;
}

MatchResult match_masks(const MaskPrediction& pred, const PseudoLabel& labels, const LossWeights& weights,
                        std::size_t n_points, Rng& rng) {
  pred.validate();
  if (labels.masks.size() > pred.num_masks()) {
    throw std::invalid_argument("more labels (" + std::to_string(labels.masks.size()) + ") than predictions (" +
                                std::to_string(pred.num_masks()) + ")");
  }
  MatchResult result;
  if (labels.masks.empty()) {
    result.assignment.assign(pred.num_masks(), kUnassigned);
    return result;
  }
  if (labels.height != pred.height() || labels.width != pred.width()) {
    throw std::invalid_argument("labels and prediction differ in size");
  }
  const std::size_t count = std::min(n_points, pred.height() * pred.width());
  const auto points = uniform_points(pred.height(), pred.width(), count, rng);
  const auto cost = matching_cost(pred, labels, weights, points);
  result.assignment = solve_assignment(cost);
  result.cost = assignment_cost(cost, result.assignment);
  return result;
}

LossReport target_loss(const MaskPrediction& student, const PseudoLabel& labels, std::span<const double> lambdas,
                       std::span<const Plane> affinities, const TargetLossConfig& cfg, Rng& rng) {
  cfg.weights.validate();
  cfg.sampling.validate();
  if (lambdas.size() != labels.masks.size()) throw std::invalid_argument("one lambda per label is required");
  if (affinities.size() != student.num_masks()) throw std::invalid_argument("one affinity per prediction is required");
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  }

  auto match_rng = rng.split(kMatchStream);
  const auto match = match_masks(student, labels, cfg.weights, cfg.match_points, match_rng);

  LossReport report;
  report.assignment = match.assignment;
  report.per_mask.resize(student.num_masks());
  const auto no_object = static_cast<std::uint32_t>(student.num_classes + 1);

  for (std::size_t i = 0; i < student.num_masks(); ++i) {
    auto& term = report.per_mask[i];
    term.label = match.assignment[i];
    const auto target = term.label == kUnassigned ? no_object : labels.masks[static_cast<std::size_t>(term.label)].class_id;
    report.cls_term += class_loss(student.class_row(i), target, cfg.weights);
    if (term.label == kUnassigned) continue;

    const auto j = static_cast<std::size_t>(term.label);
    term.lambda = lambdas[j];
    auto point_rng = rng.split(sampling_stream(i));
    term.points = sample_points(affinities[i], cfg.sampling.num_points, cfg.sampling.beta, point_rng);
    const auto loss = mask_loss_at_points(student.mask_logits.plane(i), labels.mask_plane(j), term.points);
    term.bce = loss.bce;
    term.dice = loss.dice;
    term.n_points = loss.n_points;
    report.loc_term += term.lambda * (cfg.weights.bce * loss.bce + cfg.weights.dice * loss.dice);
  }
  report.total = report.cls_term + report.loc_term;
  return report;
}

}  // namespace panconf
