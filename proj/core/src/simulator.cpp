#include "panconf/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "panconf/pq.hpp"
#include "panconf/segmix.hpp"

namespace panconf {
namespace {

// Random stream layout under the master seed.
enum : std::uint64_t { kWorldStream = 1, kInitStream = 2, kEvalStream = 3, kPretrainStream = 4, kAdaptStream = 5 };
// Per-step sub-streams.
enum : std::uint64_t { kSourceRender = 0, kTargetRender = 1, kMix = 2, kSourceLoss = 3, kTargetLoss = 4 };

std::vector<std::uint32_t> all_classes(std::size_t num_classes) {
  std::vector<std::uint32_t> out(num_classes);
  std::iota(out.begin(), out.end(), 1u);
  return out;
}

std::vector<Plane> uncertainty_affinities(const MaskPrediction& pred) {
  std::vector<Plane> out;
  out.reserve(pred.num_masks());
  for (std::size_t i = 0; i < pred.num_masks(); ++i) out.push_back(uncertainty_affinity(pred.mask_logits.plane(i)));
  return out;
}

struct EvalSet {
  std::vector<PlaneStack> target;
  std::vector<PlaneStack> source;
};

double mean_pq(const ToyModel& model, const std::vector<PlaneStack>& images, const PanopticSegmentation& gt,
               const FusionConfig& fusion, std::size_t num_classes, Quality* quality = nullptr) {
  PqStats stats;
  for (const auto& img : images) pq_accumulate(fuse_panoptic(toy_forward(model, img), fusion), gt, stats);
  const auto classes = all_classes(num_classes);
  const auto summary = pq_finalize(stats, classes);
  if (quality != nullptr) *quality = summary.mean;
  return summary.mean.pq;
}

struct WindowStats {
  double lambda_sum = 0.0;
  std::size_t lambda_count = 0;
  double uncertain_sum = 0.0;
  double segments_sum = 0.0;
  std::size_t steps = 0;

  void reset() { *this = WindowStats{}; }
};

}  // namespace

void SimConfig::validate() const {
  if (freeze_iters > iterations) throw std::invalid_argument("freeze_iters must not exceed iterations");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (num_queries == 0) throw std::invalid_argument("num_queries must be positive");
  if (enable_mls && enable_ils) throw std::invalid_argument("MLS and ILS are mutually exclusive");
  if (eval_images == 0) throw std::invalid_argument("eval_images must be positive");
  if (checkpoint_every == 0) throw std::invalid_argument("checkpoint_every must be positive");
  thresholds.validate();
  weights.validate();
  fusion.validate();
  sampling.validate();
  world.validate();
}

std::uint64_t hash_segmentation(const PanopticSegmentation& pan) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  feed(pan.height);
  feed(pan.width);
  for (auto id : pan.id_map) feed(id);
  for (const auto& e : pan.table) {
    feed(e.segment_id);
    feed(e.class_id);
    feed(e.mask_index);
    feed(e.area);
  }
  return h;
}

double evaluate_model(const ToyModel& model, const World& world, Domain domain, std::size_t images,
                      const FusionConfig& fusion, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PlaneStack> samples;
  for (std::size_t k = 0; k < images; ++k) {
    auto r = rng.split(k);
    samples.push_back(render(world, domain, r));
  }
  return mean_pq(model, samples, world.layout, fusion, world.config.num_classes);
}

SimReport simulate(const SimConfig& cfg) {
  cfg.validate();
  SimReport report;
  report.config = cfg;

  const Rng master(cfg.seed);
  auto world_rng = master.split(kWorldStream);
  const World world = make_world(cfg.world, world_rng);
  const std::size_t classes = cfg.world.num_classes;
  if (world.layout.table.size() > cfg.num_queries) throw std::invalid_argument("more segments than queries");

  auto init_rng = master.split(kInitStream);
  ToyModel student = ToyModel::random(cfg.num_queries, cfg.world.embed_dim, classes, cfg.init_scale, init_rng);

  EvalSet eval;
  {
    const auto eval_rng = master.split(kEvalStream);
    for (std::size_t k = 0; k < cfg.eval_images; ++k) {
      auto tr = eval_rng.split(2 * k);
      auto sr = eval_rng.split(2 * k + 1);
      eval.target.push_back(render(world, Domain::target, tr));
      eval.source.push_back(render(world, Domain::source, sr));
    }
  }

  const PseudoLabel source_labels = to_pseudolabel(world.layout);
  const std::vector<double> source_lambdas(source_labels.masks.size(), 1.0);
  TargetLossConfig loss_cfg;
  loss_cfg.weights = cfg.weights;
  loss_cfg.sampling = cfg.sampling;
  loss_cfg.match_points = cfg.sampling.num_points;

  // Supervised source pretraining.
  const auto pretrain_rng = master.split(kPretrainStream);
  for (std::size_t t = 0; t < cfg.pretrain_iters; ++t) {
    const auto step_rng = pretrain_rng.split(t);
    auto render_rng = step_rng.split(kSourceRender);
    const auto features = render(world, Domain::source, render_rng);
    const auto pred = toy_forward(student, features);
    const auto affinities = uncertainty_affinities(pred);
    auto loss_rng = step_rng.split(kSourceLoss);
    const auto loss = target_loss(pred, source_labels, source_lambdas, affinities, loss_cfg, loss_rng);
    const ImageLossTargets targets[] = {loss_targets(loss, features, source_labels, source_lambdas)};
    student = toy_grad_step(student, targets, cfg.weights, cfg.learning_rate);
  }

  report.pretrained_params = student.params();
  report.source_only_pq = mean_pq(student, eval.target, world.layout, cfg.fusion, classes);
  report.source_pq = mean_pq(student, eval.source, world.layout, cfg.fusion, classes);
  ToyModel teacher = student;

  WindowStats window;
  auto checkpoint = [&](std::size_t iteration) {
    SimCheckpoint cp;
    cp.iteration = iteration;
    Quality q;
    cp.student_pq = mean_pq(student, eval.target, world.layout, cfg.fusion, classes, &q);
    cp.student_sq = q.sq;
    cp.student_rq = q.rq;
    cp.teacher_pq = mean_pq(teacher, eval.target, world.layout, cfg.fusion, classes);
    if (window.lambda_count > 0) cp.mean_lambda = window.lambda_sum / static_cast<double>(window.lambda_count);
    if (window.steps > 0) {
      cp.uncertain_fraction = window.uncertain_sum / static_cast<double>(window.steps);
      cp.pseudo_segments = window.segments_sum / static_cast<double>(window.steps);
    }
    cp.teacher_probe_hash = hash_segmentation(fuse_panoptic(toy_forward(teacher, eval.target.front()), cfg.fusion));
    report.checkpoints.push_back(cp);
    window.reset();
  };
  checkpoint(0);

  const auto adapt_rng = master.split(kAdaptStream);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto step_rng = adapt_rng.split(t);
    auto src_render = step_rng.split(kSourceRender);
    auto tgt_render = step_rng.split(kTargetRender);
    const auto source_features = render(world, Domain::source, src_render);
    auto target_features = render(world, Domain::target, tgt_render);

    // Teacher pseudo-labels and confidences on the target sample.
    const auto teacher_pred = toy_forward(teacher, target_features);
    const auto pseudo = fuse_panoptic(teacher_pred, cfg.fusion);
    const auto rho = pixel_confidence(teacher_pred);
    const auto phi = teacher_phi(rho);
    std::vector<double> target_lambdas(pseudo.table.size(), 1.0);
    if (cfg.enable_mls) {
      target_lambdas = mask_lambda(rho, pseudo, cfg.thresholds);
    } else if (cfg.enable_ils) {
      std::fill(target_lambdas.begin(), target_lambdas.end(), image_lambda(phi, cfg.thresholds.tau_ils));
    }
    if (cfg.enable_mls) {
      for (double l : target_lambdas) window.lambda_sum += l;
      window.lambda_count += target_lambdas.size();
    } else {
      const auto lam = mask_lambda(rho, pseudo, cfg.thresholds);
      for (double l : lam) window.lambda_sum += l;
      window.lambda_count += lam.size();
    }
    window.uncertain_sum += uncertain_fraction(phi, cfg.thresholds.tau2);
    window.segments_sum += static_cast<double>(pseudo.table.size());
    ++window.steps;

    // Student input: source segments pasted atop the target sample.
    LabeledImage mixed{std::move(target_features), pseudo};
    std::vector<SegmentOrigin> origins;
    for (std::size_t k = 0; k < pseudo.table.size(); ++k) origins.push_back({false, k});
    std::vector<std::uint8_t> pasted(pseudo.id_map.size(), 0);
    if (cfg.segmix) {
      auto mix_rng = step_rng.split(kMix);
      auto mix = segmix(LabeledImage{source_features, world.layout}, mixed, mix_rng);
      std::vector<std::uint32_t> pasted_ids;
      for (std::size_t k = 0; k < mix.origins.size(); ++k) {
        if (mix.origins[k].from_source) pasted_ids.push_back(mix.mixed.panoptic.table[k].segment_id);
      }
      for (std::size_t p = 0; p < pasted.size(); ++p) {
        const auto id = mix.mixed.panoptic.id_map[p];
        pasted[p] = std::find(pasted_ids.begin(), pasted_ids.end(), id) != pasted_ids.end() ? 1 : 0;
      }
      mixed = std::move(mix.mixed);
      origins = std::move(mix.origins);
    }
    const PseudoLabel mixed_labels = to_pseudolabel(mixed.panoptic);
    std::vector<double> mixed_lambdas;
    for (const auto& o : origins) mixed_lambdas.push_back(o.from_source ? 1.0 : target_lambdas[o.table_index]);

    const auto student_mixed = toy_forward(student, mixed.image);
    auto target_rng = step_rng.split(kTargetLoss);

    std::vector<Plane> affinities;
    if (!cfg.enable_cbpf) {
      affinities = uncertainty_affinities(student_mixed);
    } else if (cfg.cbpf_mode == FilterMode::all_masks) {
      Plane conf = phi;
      for (std::size_t p = 0; p < pasted.size(); ++p) {
        if (pasted[p]) conf.values[p] = 1.0;
      }
      for (std::size_t i = 0; i < student_mixed.num_masks(); ++i) {
        affinities.push_back(sampling_affinity(student_mixed.mask_logits.plane(i), conf, cfg.thresholds.tau2));
      }
    } else {
      // The matching target_loss will compute, reproduced to find each query's teacher mask.
      auto match_rng = target_rng.split(kMatchStream);
      const auto match = match_masks(student_mixed, mixed_labels, cfg.weights, loss_cfg.match_points, match_rng);
      for (std::size_t i = 0; i < student_mixed.num_masks(); ++i) {
        const auto student_logits = student_mixed.mask_logits.plane(i);
        const auto label = match.assignment[i];
        if (label == kUnassigned) {
          affinities.push_back(uncertainty_affinity(student_logits));
          continue;
        }
        const auto& origin = origins[static_cast<std::size_t>(label)];
        Plane conf(student_logits.height, student_logits.width, 1.0);
        if (!origin.from_source) {
          const auto query = pseudo.table[origin.table_index].mask_index;
          conf = per_mask_confidence(teacher_pred.mask_logits.plane(query));
          for (std::size_t p = 0; p < pasted.size(); ++p) {
            if (pasted[p]) conf.values[p] = 1.0;
          }
        }
        affinities.push_back(sampling_affinity(student_logits, conf, cfg.thresholds.tau2));
      }
    }
    const auto target_loss_report =
        target_loss(student_mixed, mixed_labels, mixed_lambdas, affinities, loss_cfg, target_rng);

    const auto student_source = toy_forward(student, source_features);
    const auto source_affinities = uncertainty_affinities(student_source);
    auto source_rng = step_rng.split(kSourceLoss);
    const auto source_loss_report =
        target_loss(student_source, source_labels, source_lambdas, source_affinities, loss_cfg, source_rng);

    const ImageLossTargets targets[] = {
        loss_targets(source_loss_report, source_features, source_labels, source_lambdas),
        loss_targets(target_loss_report, mixed.image, mixed_labels, mixed_lambdas)};
    student = toy_grad_step(student, targets, cfg.weights, cfg.learning_rate);

    if (t >= cfg.freeze_iters) {
      const auto params = ema_update(teacher.params(), student.params(), cfg.alpha);
      teacher.set_params(params);
    }
    if ((t + 1) % cfg.checkpoint_every == 0 || t + 1 == cfg.iterations) checkpoint(t + 1);
  }

  report.final_pq = mean_pq(student, eval.target, world.layout, cfg.fusion, classes);
  report.final_teacher_pq = mean_pq(teacher, eval.target, world.layout, cfg.fusion, classes);
  report.teacher_params = teacher.params();
  report.student_params = student.params();
  return report;
}

std::vector<SimReport> simulate_many(const std::vector<SimConfig>& configs, std::size_t workers) {
  std::vector<SimReport> reports(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      try {
        reports[k] = simulate(configs[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(configs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

}  // namespace panconf
