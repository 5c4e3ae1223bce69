#include <doctest.h>

#include "panconf/simulator.hpp"

using namespace panconf;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.world.height = c.world.width = 24;
  c.world.embed_dim = 12;
  c.world.num_segments = 3;
  c.world.min_segment_area = 8;
  c.num_queries = 6;
  c.pretrain_iters = 30;
  c.iterations = 40;
  c.freeze_iters = 20;
  c.checkpoint_every = 10;
  c.sampling = {64, 0.75};
  c.eval_images = 2;
  c.seed = 77;
  return c;
}

}  // namespace

TEST_CASE("world construction") {
  WorldConfig cfg;
  Rng rng(1);
  const auto world = make_world(cfg, rng);
  world.layout.validate();
  CHECK(world.layout.table.front().class_id == 1);
  for (std::size_t k = 1; k < world.layout.table.size(); ++k) {
    CHECK(world.layout.table[k].class_id >= 2);
    CHECK(world.layout.table[k].area >= cfg.min_segment_area);
  }
  CHECK(world.clean_source.count == cfg.embed_dim);

  auto a = Rng(5), b = Rng(5);
  CHECK(render(world, Domain::target, a).values == render(world, Domain::target, b).values);

  // Noise has the configured spread.
  auto r = Rng(6);
  const auto noisy = render(world, Domain::source, r);
  double sum = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < noisy.values.size(); ++k) {
    const double e = noisy.values[k] - world.clean_source.values[k];
    sum += e;
    sq += e * e;
  }
  const double n = static_cast<double>(noisy.values.size());
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::sqrt(sq / n) == doctest::Approx(cfg.noise).epsilon(0.02));

  cfg.domain_shift = 0.0;
  auto z = Rng(1);
  const auto same = make_world(cfg, z);
  CHECK(same.clean_source.values == same.clean_target.values);
  cfg.noise = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("contrast fades the target appearance codes") {
  // Appearance 0 leaves the positional part alone; codes are drawn either way.
  WorldConfig cfg;
  cfg.rotation = 0.0;
  cfg.bias = 0.0;
  cfg.contrast = 0.25;
  cfg.domain_shift = 2.0;
  auto r1 = Rng(3), r2 = Rng(3);
  const auto world = make_world(cfg, r1);
  cfg.appearance = 0.0;
  const auto plain = make_world(cfg, r2);
  for (std::size_t k = 0; k < world.clean_source.values.size(); ++k) {
    const double code = world.clean_source.values[k] - plain.clean_source.values[k];
    REQUIRE(world.clean_target.values[k] - plain.clean_source.values[k] == doctest::Approx(0.5 * code).epsilon(1e-12));
  }
  cfg.contrast = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("simulation is deterministic") {
  const auto cfg = small_config();
  const auto a = simulate(cfg);
  const auto b = simulate(cfg);
  CHECK(a.student_params == b.student_params);
  CHECK(a.teacher_params == b.teacher_params);
  CHECK(a.final_pq == b.final_pq);
  REQUIRE(a.checkpoints.size() == b.checkpoints.size());
  for (std::size_t k = 0; k < a.checkpoints.size(); ++k) {
    CHECK(a.checkpoints[k].student_pq == b.checkpoints[k].student_pq);
    CHECK(a.checkpoints[k].teacher_probe_hash == b.checkpoints[k].teacher_probe_hash);
    CHECK(a.checkpoints[k].mean_lambda == b.checkpoints[k].mean_lambda);
  }

  // Threads do not change the outcome.
  const auto many = simulate_many({cfg, cfg}, 2);
  CHECK(many[0].student_params == a.student_params);
  CHECK(many[1].student_params == a.student_params);
}

TEST_CASE("teacher stays pretrained while frozen") {
  auto cfg = small_config();
  const auto report = simulate(cfg);
  REQUIRE(report.checkpoints.size() == 5);
  CHECK(report.checkpoints.front().iteration == 0);
  CHECK(report.checkpoints.back().iteration == 40);
  for (const auto& cp : report.checkpoints) {
    if (cp.iteration <= cfg.freeze_iters) CHECK(cp.teacher_probe_hash == report.checkpoints.front().teacher_probe_hash);
  }
  CHECK(report.teacher_params != report.pretrained_params);

  cfg.freeze_iters = cfg.iterations;
  const auto frozen = simulate(cfg);
  CHECK(frozen.teacher_params == frozen.pretrained_params);
  CHECK(frozen.student_params != frozen.pretrained_params);
}

TEST_CASE("every arm runs") {
  auto cfg = small_config();
  cfg.iterations = 10;
  cfg.freeze_iters = 5;
  for (int arm = 0; arm < 4; ++arm) {
    cfg.enable_mls = arm == 1 || arm == 2;
    cfg.enable_cbpf = arm >= 2;
    cfg.enable_ils = arm == 0;
    cfg.cbpf_mode = arm == 3 ? FilterMode::per_mask : FilterMode::all_masks;
    const auto r = simulate(cfg);
    CHECK(r.final_pq >= 0.0);
    CHECK(r.final_pq <= 1.0);
  }
  cfg.segmix = false;
  CHECK_NOTHROW(simulate(cfg));
}

TEST_CASE("simulator config validation") {
  auto cfg = small_config();
  cfg.freeze_iters = cfg.iterations + 1;
  CHECK_THROWS_AS(simulate(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.enable_ils = true;
  CHECK_THROWS_AS(simulate(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.alpha = 1.0;
  CHECK_THROWS_AS(simulate(cfg), std::invalid_argument);
}
