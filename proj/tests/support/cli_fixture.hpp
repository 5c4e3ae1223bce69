#pragma once

// Fixture files for driving the panconf binary, plus a tiny process runner.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "gen.hpp"
#include "panconf/segments_io.hpp"
#include "panconf/tensor.hpp"

namespace clifix {

namespace fs = std::filesystem;
using namespace panconf;

struct Result {
  int code = -1;
  std::string err;
};

/// Runs `binary args`, stdout discarded, stderr captured.
inline Result run(const fs::path& binary, const std::string& args, const fs::path& dir) {
  const auto err_path = dir / "stderr.txt";
  const std::string cmd = binary.string() + " " + args + " > /dev/null 2> " + err_path.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err_path);
  r.err.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / (name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Writes mask and class logits as f32 tensors and returns the prediction
/// exactly as a reader of those files sees it.
inline MaskPrediction write_prediction(const MaskPrediction& pred, const fs::path& masks, const fs::path& classes) {
  std::vector<float> cls(pred.class_logits.begin(), pred.class_logits.end());
  write_tensor(masks, to_tensor(pred.mask_logits));
  write_tensor(classes, Tensor({pred.num_masks(), pred.num_classes + 1}, cls));
  return prediction_from_tensors(read_tensor(masks), read_tensor(classes));
}

struct Files {
  fs::path dir;
  fs::path teacher_masks, teacher_classes, student_masks, student_classes;
  fs::path source_image, source_map, target_image, target_map;
  fs::path pred_dir, gt_dir, taxonomy, sim_config;
  MaskPrediction teacher, student;
};

/// A consistent set of inputs for every subcommand.
inline Files make_files(const std::string& name, std::uint64_t seed = 2024) {
  Files f;
  f.dir = fresh_dir(name);
  Rng rng(seed);
  const std::size_t n = 6, h = 20, w = 24, c = 3;

  MaskPrediction teacher;
  teacher.num_classes = c;
  teacher.class_logits.assign(n * (c + 1), 0.0);
  teacher.mask_logits = PlaneStack(n, h, w);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = teacher.class_row(i);
    for (auto& z : row) z = rng.normal();
    row[i % (c + 1)] += 7.0;
    const std::size_t r0 = rng.index(h / 2), c0 = rng.index(w / 2);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        const bool in = r >= r0 && r < r0 + h / 2 && col >= c0 && col < c0 + w / 2;
        teacher.mask_logits.at(i, r, col) = (in ? 4.0 : -4.0) + 1.5 * rng.normal();
      }
    }
  }
  f.teacher_masks = f.dir / "teacher_masks.mct";
  f.teacher_classes = f.dir / "teacher_classes.mct";
  f.teacher = write_prediction(teacher, f.teacher_masks, f.teacher_classes);

  auto student = teacher;
  for (auto& s : student.mask_logits.values) s = 0.5 * s + rng.normal();
  for (auto& z : student.class_logits) z = rng.normal();
  f.student_masks = f.dir / "student_masks.mct";
  f.student_classes = f.dir / "student_classes.mct";
  f.student = write_prediction(student, f.student_masks, f.student_classes);

  const auto write_scene = [&](const std::string& stem, fs::path& image, fs::path& map) {
    image = f.dir / (stem + "_image.mct");
    map = f.dir / (stem + "_map.mct");
    write_tensor(image, to_tensor(gen::random_features(rng, 2, h, w)));
    write_panoptic(map, segments_path_for(map), gen::random_panoptic(rng, h, w, c, 5));
  };
  write_scene("source", f.source_image, f.source_map);
  write_scene("target", f.target_image, f.target_map);

  f.pred_dir = f.dir / "pred";
  f.gt_dir = f.dir / "gt";
  fs::create_directories(f.pred_dir);
  fs::create_directories(f.gt_dir);
  for (int k = 0; k < 3; ++k) {
    const auto gt = gen::random_panoptic(rng, h, w, c, 5, 0.05);
    const auto file = "img" + std::to_string(k) + ".mct";
    write_panoptic(f.gt_dir / file, segments_path_for(f.gt_dir / file), gt);
    write_panoptic(f.pred_dir / file, segments_path_for(f.pred_dir / file), gt);
  }
  f.taxonomy = f.dir / "taxonomy.json";
  std::ofstream(f.taxonomy) << R"({"classes": [{"id": 1, "name": "stuff"}, {"id": 2, "name": "a"}, {"id": 3, "name": "b"}]})";

  f.sim_config = f.dir / "sim.json";
  std::ofstream(f.sim_config) << R"({
  "pretrain_iters": 10, "iterations": 12, "freeze_iters": 6, "checkpoint_every": 4, "eval_images": 1,
  "num_queries": 6, "sampling": {"num_points": 32, "beta": 0.75},
  "world": {"height": 16, "width": 16, "embed_dim": 8, "num_segments": 2, "min_segment_area": 6},
  "seeds": 2,
  "arms": [{"name": "baseline", "enable_mls": false, "enable_cbpf": false}, {"name": "full"}]
})";
  return f;
}

}  // namespace clifix
