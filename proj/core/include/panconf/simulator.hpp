#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "panconf/confidence.hpp"
#include "panconf/loss.hpp"
#include "panconf/mean_teacher.hpp"
#include "panconf/panoptic.hpp"
#include "panconf/world.hpp"

namespace panconf {

struct SimConfig {
  std::string name = "full";
  std::size_t pretrain_iters = 400;  ///< supervised source-only steps before adaptation
  std::size_t iterations = 2000;     ///< adaptation steps
  std::size_t freeze_iters = 400;    ///< adaptation steps before the teacher starts tracking the student
  double alpha = 0.999;
  double learning_rate = 0.2;
  double init_scale = 0.05;
  std::size_t num_queries = 16;
  Thresholds thresholds;
  LossWeights weights;
  FusionConfig fusion;
  SamplingConfig sampling{128, 0.75};
  bool enable_mls = true;
  bool enable_ils = false;  ///< image-wide weight instead of per-mask; exclusive with MLS
  bool enable_cbpf = true;
  FilterMode cbpf_mode = FilterMode::all_masks;
  bool segmix = true;
  WorldConfig world;
  std::size_t eval_images = 4;
  std::size_t checkpoint_every = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimCheckpoint {
  std::size_t iteration = 0;  ///< adaptation steps completed
  double student_pq = 0.0;
  double student_sq = 0.0;
  double student_rq = 0.0;
  double teacher_pq = 0.0;
  double mean_lambda = 0.0;         ///< over pseudo-label segments since the previous checkpoint
  double uncertain_fraction = 0.0;  ///< share of target pixels with Phi < tau2, same window
  double pseudo_segments = 0.0;     ///< mean pseudo-label segment count, same window
  std::uint64_t teacher_probe_hash = 0;
};

struct SimReport {
  SimConfig config;
  double source_only_pq = 0.0;  ///< pretrained model on held-out target images
  double source_pq = 0.0;       ///< pretrained model on held-out source images
  double final_pq = 0.0;        ///< student after the last step, held-out target
  double final_teacher_pq = 0.0;
  std::vector<SimCheckpoint> checkpoints;
  ParamVector pretrained_params;
  ParamVector teacher_params;
  ParamVector student_params;
};

/// Mean-teacher self-training on a synthetic world: source pretraining, then
/// for each step the teacher pseudo-labels a target sample, SegMix pastes
/// source segments onto it, and the student descends L_src + L_tgt.
SimReport simulate(const SimConfig& cfg);

/// Mean panoptic quality of `model` on held-out samples of `domain`.
double evaluate_model(const ToyModel& model, const World& world, Domain domain, std::size_t images,
                      const FusionConfig& fusion, std::uint64_t seed);

/// FNV-1a over a fused segmentation (map and table).
std::uint64_t hash_segmentation(const PanopticSegmentation& pan);

/// Runs the configurations on `workers` threads; results in input order.
std::vector<SimReport> simulate_many(const std::vector<SimConfig>& configs, std::size_t workers);

}  // namespace panconf
