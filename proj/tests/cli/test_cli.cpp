#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include "cli_fixture.hpp"
#include "panconf/confidence.hpp"
#include "panconf/loss.hpp"

using namespace panconf;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kBinary = PANCONF_CLI_PATH;

Json load(const fs::path& p) { return Json::parse(clifix::slurp(p)); }

}  // namespace

TEST_CASE("evaluate on identical maps gives PQ 1") {
  const auto f = clifix::make_files("cli_eval");
  const auto r = clifix::run(kBinary,
                             "evaluate --pred-dir " + f.pred_dir.string() + " --gt-dir " + f.gt_dir.string() +
                                 " --classes " + f.taxonomy.string() + " --out " + (f.dir / "pq.json").string() + " --jobs 2",
                             f.dir);
  REQUIRE(r.code == 0);
  const auto pq = load(f.dir / "pq.json");
  CHECK(pq["mean"]["pq"].get<double>() == 1.0);
  CHECK(pq["images"].get<int>() == 3);
}

TEST_CASE("pseudolabel, confidence and loss chain like the in-process pipeline") {
  const auto f = clifix::make_files("cli_chain");
  const auto map = f.dir / "pl.mct", phi_path = f.dir / "phi.mct", lambda_path = f.dir / "lambda.json",
             report_path = f.dir / "loss.json";
  REQUIRE(clifix::run(kBinary, "pseudolabel --pred " + f.teacher_masks.string() + " --classes " + f.teacher_classes.string() +
                                   " --out " + map.string(), f.dir).code == 0);
  REQUIRE(clifix::run(kBinary, "confidence --pred " + f.teacher_masks.string() + " --classes " + f.teacher_classes.string() +
                                   " --panoptic " + map.string() + " --out-phi " + phi_path.string() + " --out-lambda " +
                                   lambda_path.string() + " --tau1 0.95", f.dir).code == 0);
  REQUIRE(clifix::run(kBinary, "loss --student " + f.student_masks.string() + " --student-classes " +
                                   f.student_classes.string() + " --teacher-labels " + map.string() + " --lambda " +
                                   lambda_path.string() + " --phi " + phi_path.string() +
                                   " --np 200 --beta 0.75 --seed 17 --json-report " + report_path.string(), f.dir).code == 0);

  // Same computation in one process; phi goes through f32 like the file does.
  const auto pan = fuse_panoptic(f.teacher, {});
  CHECK(read_panoptic(map, segments_path_for(map)) == pan);
  const auto rho = pixel_confidence(f.teacher);
  const auto phi = plane_from_tensor(to_tensor(teacher_phi(rho)));
  const auto lambdas = mask_lambda(rho, pan, 0.95);
  CHECK(load(lambda_path)["lambda"].get<std::vector<double>>() == lambdas);
  std::vector<Plane> aff;
  for (std::size_t i = 0; i < f.student.num_masks(); ++i) {
    aff.push_back(sampling_affinity(f.student.mask_logits.plane(i), phi, 0.8));
  }
  TargetLossConfig cfg;
  cfg.sampling = {200, 0.75};
  cfg.match_points = 200;
  auto rng = Rng(17).split(2);
  const auto expected = target_loss(f.student, to_pseudolabel(pan), lambdas, aff, cfg, rng);
  const auto report = load(report_path);
  CHECK(report["total"].get<double>() == expected.total);
  CHECK(report["cls_term"].get<double>() == expected.cls_term);
  CHECK(report["assignment"].get<std::vector<std::ptrdiff_t>>() == expected.assignment);
  CHECK(expected.loc_term > 0.0);
}

TEST_CASE("segmix and sample-points") {
  const auto f = clifix::make_files("cli_mix");
  const auto out_map = f.dir / "mixed.mct";
  const auto r = clifix::run(kBinary, "segmix --source-image " + f.source_image.string() + " --source-map " +
                                          f.source_map.string() + " --target-image " + f.target_image.string() +
                                          " --target-map " + f.target_map.string() + " --seed 3 --out-image " +
                                          (f.dir / "mixed_image.mct").string() + " --out-map " + out_map.string() +
                                          " --report " + (f.dir / "mix.json").string(),
                             f.dir);
  REQUIRE(r.code == 0);
  const auto mixed = read_panoptic(out_map, segments_path_for(out_map));
  const auto source = read_panoptic(f.source_map, segments_path_for(f.source_map));
  CHECK(load(f.dir / "mix.json")["pasted"].size() == (source.table.size() + 1) / 2);
  CHECK(mixed.table.size() == load(f.dir / "mix.json")["origins"].size());

  const auto pts = f.dir / "pts.json";
  REQUIRE(clifix::run(kBinary, "sample-points --student " + (f.dir / "s0.mct").string() + " --seed 1 --out " + pts.string(),
                      f.dir).code == 2);
  write_tensor(f.dir / "s0.mct", to_tensor(f.student.mask_logits.plane(0)));
  REQUIRE(clifix::run(kBinary, "sample-points --student " + (f.dir / "s0.mct").string() + " --np 64 --seed 1 --out " + pts.string(),
                      f.dir).code == 0);
  CHECK(load(pts)["count"].get<int>() == 64);
}

TEST_CASE("simulate runs every arm and seed") {
  const auto f = clifix::make_files("cli_sim");
  const auto out = f.dir / "sim.json";
  const auto r = clifix::run(kBinary, "simulate --config " + f.sim_config.string() + " --seed 5 --out " + out.string() +
                                          " --csv " + (f.dir / "curves.csv").string(), f.dir);
  REQUIRE(r.code == 0);
  const auto report = load(out);
  REQUIRE(report["arms"].size() == 2);
  CHECK(report["arms"][0]["name"] == "baseline");
  CHECK(report["arms"][1]["runs"].size() == 2);
  CHECK(report["arms"][1]["runs"][1]["config"]["seed"] == 6);
  CHECK(report["arms"][0]["runs"][0]["checkpoints"].size() == 4);
}

TEST_CASE("usage and io errors") {
  const auto f = clifix::make_files("cli_err");
  auto r = clifix::run(kBinary, "simulate --out " + (f.dir / "x.json").string(), f.dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("--seed") != std::string::npos);

  r = clifix::run(kBinary, "pseudolabel --bogus 1", f.dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);

  CHECK(clifix::run(kBinary, "frobnicate", f.dir).code == 1);
  CHECK(clifix::run(kBinary, "", f.dir).code == 1);

  r = clifix::run(kBinary, "pseudolabel --pred " + (f.dir / "nope.mct").string() + " --classes " +
                               f.teacher_classes.string() + " --out " + (f.dir / "o.mct").string(), f.dir);
  CHECK(r.code == 2);

  // Shapes that disagree are a validation error, not an io error.
  r = clifix::run(kBinary, "pseudolabel --pred " + f.teacher_masks.string() + " --classes " + f.student_masks.string() +
                               " --out " + (f.dir / "o.mct").string(), f.dir);
  CHECK(r.code == 1);

  r = clifix::run(kBinary, "pseudolabel --pred " + f.teacher_masks.string() + " --classes " + f.teacher_classes.string() +
                               " --out " + (f.dir / "o.mct").string() + " --class-thresh 2", f.dir);
  CHECK(r.code == 1);

  std::ofstream(f.dir / "bad.json") << R"({"iterations": 5, "no_such_key": 1})";
  r = clifix::run(kBinary, "simulate --config " + (f.dir / "bad.json").string() + " --seed 1 --out " +
                               (f.dir / "x.json").string(), f.dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("no_such_key") != std::string::npos);

  std::ofstream(f.dir / "broken.json") << "{";
  CHECK(clifix::run(kBinary, "simulate --config " + (f.dir / "broken.json").string() + " --seed 1 --out " +
                                 (f.dir / "x.json").string(), f.dir).code == 2);

  CHECK(clifix::run(kBinary, "--version", f.dir).code == 0);
}
