#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "panconf/confidence.hpp"
#include "panconf/errors.hpp"
#include "panconf/loss.hpp"
#include "panconf/panoptic.hpp"
#include "panconf/pq.hpp"
#include "panconf/segments_io.hpp"
#include "panconf/segmix.hpp"
#include "panconf/simulator.hpp"
#include "panconf/tensor.hpp"
#include "sim_json.hpp"

namespace fs = std::filesystem;
using namespace panconf;
using cli::Json;

namespace {

// Random stream of each seeded stage under the master seed.
enum : std::uint64_t { kSampleStage = 1, kLossStage = 2, kSegmixStage = 3 };

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

fs::path segments_or_default(const std::string& given, const fs::path& map) {
  return given.empty() ? segments_path_for(map) : fs::path(given);
}

MaskPrediction read_prediction(const fs::path& masks, const fs::path& classes) {
  return prediction_from_tensors(read_tensor(masks), read_tensor(classes));
}

Json segments_json(const SegmentTable& table) {
  Json out = Json::array();
  for (const auto& e : table) {
    out.push_back({{"segment_id", e.segment_id}, {"class_id", e.class_id}, {"mask_index", e.mask_index}, {"area", e.area}});
  }
  return out;
}

Json quality_json(const Quality& q) { return Json{{"pq", q.pq}, {"sq", q.sq}, {"rq", q.rq}}; }

// ---------------------------------------------------------------- pseudolabel

struct PseudolabelArgs {
  std::string pred, classes, out, segments;
  FusionConfig fusion;
};

void add_pseudolabel(CLI::App& app, PseudolabelArgs& a) {
  auto* cmd = app.add_subcommand("pseudolabel", "Fuse raw mask predictions into a panoptic pseudo-label");
  cmd->add_option("--pred", a.pred, "N x H x W f32 mask logits (.mct)")->required();
  cmd->add_option("--classes", a.classes, "N x (C+1) f32 class logits (.mct)")->required();
  cmd->add_option("--out", a.out, "u32 H x W segment id map (.mct)")->required();
  cmd->add_option("--segments", a.segments, "segment table (.segments.jsonl); defaults next to --out");
  cmd->add_option("--class-thresh", a.fusion.class_threshold, "minimum class probability")->capture_default_str();
  cmd->add_option("--overlap-thresh", a.fusion.overlap_threshold, "minimum kept share of a mask")->capture_default_str();
  cmd->add_option("--min-area", a.fusion.min_area, "minimum segment area in pixels")->capture_default_str();
}

void run_pseudolabel(const PseudolabelArgs& a) {
  a.fusion.validate();
  const auto pred = read_prediction(a.pred, a.classes);
  const auto pan = fuse_panoptic(pred, a.fusion);
  write_panoptic(a.out, segments_or_default(a.segments, a.out), pan);
}

// ----------------------------------------------------------------- confidence

struct ConfidenceArgs {
  std::string pred, classes, panoptic, segments, out_phi, out_lambda;
  Thresholds thresholds;
  std::vector<std::string> tau1_class;
};

void add_confidence(CLI::App& app, ConfidenceArgs& a) {
  auto* cmd = app.add_subcommand("confidence", "Teacher confidence map and per-segment weights");
  cmd->add_option("--pred", a.pred, "N x H x W f32 mask logits")->required();
  cmd->add_option("--classes", a.classes, "N x (C+1) f32 class logits")->required();
  cmd->add_option("--panoptic", a.panoptic, "fused id map from `pseudolabel`")->required();
  cmd->add_option("--segments", a.segments, "segment table; defaults next to --panoptic");
  cmd->add_option("--out-phi", a.out_phi, "H x W f32 confidence map (.mct)")->required();
  cmd->add_option("--out-lambda", a.out_lambda, "per-segment weights (.json)")->required();
  cmd->add_option("--tau1", a.thresholds.tau1)->capture_default_str();
  cmd->add_option("--tau2", a.thresholds.tau2)->capture_default_str();
  cmd->add_option("--tau-ils", a.thresholds.tau_ils)->capture_default_str();
  cmd->add_option("--tau1-class", a.tau1_class, "per-class tau1 override, CLASS=VALUE (repeatable)");
}

void run_confidence(ConfidenceArgs a) {
  for (const auto& spec : a.tau1_class) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--tau1-class expects CLASS=VALUE, got " + spec);
    try {
      a.thresholds.tau1_per_class[static_cast<std::uint32_t>(std::stoul(spec.substr(0, eq)))] = std::stod(spec.substr(eq + 1));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("--tau1-class expects CLASS=VALUE, got " + spec);
    }
  }
  a.thresholds.validate();
  const auto pred = read_prediction(a.pred, a.classes);
  const auto pan = read_panoptic(a.panoptic, segments_or_default(a.segments, a.panoptic));
  const auto rho = pixel_confidence(pred);
  const auto phi = teacher_phi(rho);
  const auto counts = mask_confident_counts(rho, pan, a.thresholds);
  const auto lambda = mask_lambda(rho, pan, a.thresholds);

  Json segments = Json::array();
  for (std::size_t k = 0; k < pan.table.size(); ++k) {
    const auto& e = pan.table[k];
    segments.push_back({{"segment_id", e.segment_id},
                        {"class_id", e.class_id},
                        {"mask_index", e.mask_index},
                        {"confident", counts[k].confident},
                        {"foreground", counts[k].foreground},
                        {"lambda", lambda[k]}});
  }
  write_tensor(a.out_phi, to_tensor(phi));
  write_json(a.out_lambda, {{"tau1", a.thresholds.tau1},
                            {"tau2", a.thresholds.tau2},
                            {"tau_ils", a.thresholds.tau_ils},
                            {"lambda", lambda},
                            {"segments", segments},
                            {"image_lambda", image_lambda(phi, a.thresholds.tau_ils)},
                            {"uncertain_fraction", uncertain_fraction(phi, a.thresholds.tau2)}});
}

// -------------------------------------------------------------- sample-points

struct SampleArgs {
  std::string affinity, student, conf, out;
  double tau2 = 0.8;
  SamplingConfig sampling;
  std::optional<std::uint64_t> seed;
};

void add_sample(CLI::App& app, SampleArgs& a) {
  auto* cmd = app.add_subcommand("sample-points", "Confidence-filtered point sampling on one mask");
  auto* aff = cmd->add_option("--affinity", a.affinity, "H x W f32 affinity map");
  auto* stu = cmd->add_option("--student", a.student, "H x W f32 student mask logits");
  cmd->add_option("--conf", a.conf, "H x W f32 teacher confidence (e.g. phi from `confidence`)")->needs(stu);
  stu->excludes(aff);
  cmd->add_option("--tau2", a.tau2)->capture_default_str();
  cmd->add_option("--np", a.sampling.num_points, "number of points")->capture_default_str();
  cmd->add_option("--beta", a.sampling.beta, "share of top-affinity points")->capture_default_str();
  cmd->add_option("--seed", a.seed, "master seed")->required();
  cmd->add_option("--out", a.out, "points (.json)")->required();
}

void run_sample(const SampleArgs& a) {
  a.sampling.validate();
  Plane affinity;
  if (!a.affinity.empty()) {
    affinity = plane_from_tensor(read_tensor(a.affinity));
  } else if (!a.student.empty()) {
    const auto student = plane_from_tensor(read_tensor(a.student));
    affinity = a.conf.empty() ? uncertainty_affinity(student)
                              : sampling_affinity(student, plane_from_tensor(read_tensor(a.conf)), a.tau2);
  } else {
    throw std::invalid_argument("sample-points needs --affinity or --student");
  }
  auto rng = Rng(*a.seed).split(kSampleStage);
  const auto points = sample_points(affinity, a.sampling.num_points, a.sampling.beta, rng);
  Json pts = Json::array();
  for (const auto& p : points) pts.push_back({p.row, p.col});
  write_json(a.out, {{"count", points.size()}, {"points", pts}});
}

// ----------------------------------------------------------------------- loss

struct LossArgs {
  std::string student, student_classes, labels, segments, lambda, phi, report;
  double tau2 = 0.8;
  SamplingConfig sampling;
  std::optional<std::size_t> match_points;
  std::optional<std::uint64_t> seed;
};

void add_loss(CLI::App& app, LossArgs& a) {
  auto* cmd = app.add_subcommand("loss", "Student loss against teacher pseudo-labels");
  cmd->add_option("--student", a.student, "N x H x W f32 student mask logits")->required();
  cmd->add_option("--student-classes", a.student_classes, "N x (C+1) f32 student class logits")->required();
  cmd->add_option("--teacher-labels", a.labels, "teacher id map from `pseudolabel`")->required();
  cmd->add_option("--segments", a.segments, "segment table; defaults next to --teacher-labels");
  cmd->add_option("--lambda", a.lambda, "weights from `confidence`; all 1 when omitted");
  cmd->add_option("--phi", a.phi, "teacher confidence; filters sampling when given");
  cmd->add_option("--tau2", a.tau2)->capture_default_str();
  cmd->add_option("--np", a.sampling.num_points, "points per mask")->capture_default_str();
  cmd->add_option("--beta", a.sampling.beta, "share of top-affinity points")->capture_default_str();
  cmd->add_option("--match-points", a.match_points, "points for matching; defaults to --np");
  cmd->add_option("--seed", a.seed, "master seed")->required();
  cmd->add_option("--json-report", a.report, "loss report (.json)")->required();
}

void run_loss(const LossArgs& a) {
  const auto student = read_prediction(a.student, a.student_classes);
  const auto pan = read_panoptic(a.labels, segments_or_default(a.segments, a.labels));
  const auto labels = to_pseudolabel(pan);

  std::vector<double> lambdas(labels.masks.size(), 1.0);
  if (!a.lambda.empty()) {
    const auto j = read_json(a.lambda);
    try {
      lambdas = j.at("lambda").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(a.lambda + ": " + e.what());
    }
    if (lambdas.size() != labels.masks.size()) {
      throw std::invalid_argument("--lambda holds " + std::to_string(lambdas.size()) + " weights for " +
                                  std::to_string(labels.masks.size()) + " segments");
    }
  }

  std::vector<Plane> affinities;
  std::optional<Plane> phi;
  if (!a.phi.empty()) phi = plane_from_tensor(read_tensor(a.phi));
  for (std::size_t i = 0; i < student.num_masks(); ++i) {
    const auto logits = student.mask_logits.plane(i);
    affinities.push_back(phi ? sampling_affinity(logits, *phi, a.tau2) : uncertainty_affinity(logits));
  }

  TargetLossConfig cfg;
  cfg.sampling = a.sampling;
  cfg.match_points = a.match_points.value_or(a.sampling.num_points);
  auto rng = Rng(*a.seed).split(kLossStage);
  const auto report = target_loss(student, labels, lambdas, affinities, cfg, rng);

  Json per_mask = Json::array();
  for (const auto& t : report.per_mask) {
    per_mask.push_back({{"label", t.label}, {"lambda", t.lambda}, {"bce", t.bce}, {"dice", t.dice}, {"n_points", t.n_points}});
  }
  write_json(a.report, {{"total", report.total},
                        {"cls_term", report.cls_term},
                        {"loc_term", report.loc_term},
                        {"assignment", report.assignment},
                        {"per_mask", per_mask}});
}

// --------------------------------------------------------------------- segmix

struct SegmixArgs {
  std::string source_image, source_map, target_image, target_map, out_image, out_map, report;
  std::optional<std::uint64_t> seed;
};

void add_segmix(CLI::App& app, SegmixArgs& a) {
  auto* cmd = app.add_subcommand("segmix", "Paste half of the source segments onto the target");
  cmd->add_option("--source-image", a.source_image, "C x H x W f32 source image")->required();
  cmd->add_option("--source-map", a.source_map, "source id map (segments next to it)")->required();
  cmd->add_option("--target-image", a.target_image, "C x H x W f32 target image")->required();
  cmd->add_option("--target-map", a.target_map, "target id map (segments next to it)")->required();
  cmd->add_option("--seed", a.seed, "master seed")->required();
  cmd->add_option("--out-image", a.out_image, "mixed image")->required();
  cmd->add_option("--out-map", a.out_map, "mixed id map; segments written next to it")->required();
  cmd->add_option("--report", a.report, "pasted segments and origins (.json)");
}

void run_segmix(const SegmixArgs& a) {
  const LabeledImage source{stack_from_tensor(read_tensor(a.source_image)),
                            read_panoptic(a.source_map, segments_path_for(a.source_map))};
  const LabeledImage target{stack_from_tensor(read_tensor(a.target_image)),
                            read_panoptic(a.target_map, segments_path_for(a.target_map))};
  auto rng = Rng(*a.seed).split(kSegmixStage);
  const auto mix = segmix(source, target, rng);
  write_tensor(a.out_image, to_tensor(mix.mixed.image));
  write_panoptic(a.out_map, segments_path_for(a.out_map), mix.mixed.panoptic);
  if (!a.report.empty()) {
    Json origins = Json::array();
    for (const auto& o : mix.origins) origins.push_back({{"from_source", o.from_source}, {"table_index", o.table_index}});
    write_json(a.report, {{"pasted", mix.pasted}, {"segments", segments_json(mix.mixed.panoptic.table)}, {"origins", origins}});
  }
}

// ------------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string pred_dir, gt_dir, classes, out;
  std::size_t jobs = 1;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Panoptic quality of predicted maps against ground truth");
  cmd->add_option("--pred-dir", a.pred_dir, "predicted <name>.mct + <name>.segments.jsonl")->required();
  cmd->add_option("--gt-dir", a.gt_dir, "ground truth with the same file names")->required();
  cmd->add_option("--classes", a.classes, "taxonomy (.json): {\"classes\": [{\"id\", \"name\"}], \"subset\": [...]}")->required();
  cmd->add_option("--out", a.out, "PQ report (.json)")->required();
  cmd->add_option("--jobs", a.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

void run_evaluate(const EvaluateArgs& a) {
  const auto taxonomy = read_json(a.classes);
  std::map<std::uint32_t, std::string> names;
  std::vector<std::uint32_t> subset;
  try {
    for (const auto& c : taxonomy.at("classes")) {
      names[c.at("id").get<std::uint32_t>()] = c.value("name", std::string{});
    }
    if (taxonomy.contains("subset")) {
      subset = taxonomy.at("subset").get<std::vector<std::uint32_t>>();
    } else {
      for (const auto& [id, name] : names) subset.push_back(id);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(a.classes + ": " + e.what());
  }
  if (subset.empty()) throw std::invalid_argument("taxonomy has no classes to evaluate");

  if (!fs::is_directory(a.gt_dir)) throw IoError(a.gt_dir + " is not a directory");
  if (!fs::is_directory(a.pred_dir)) throw IoError(a.pred_dir + " is not a directory");
  std::vector<std::string> images;
  for (const auto& entry : fs::directory_iterator(a.gt_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mct") images.push_back(entry.path().filename().string());
  }
  std::sort(images.begin(), images.end());
  if (images.empty()) throw IoError(a.gt_dir + " holds no .mct maps");

  std::vector<PqStats> per_image(images.size());
  std::vector<std::exception_ptr> errors(images.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < images.size(); k = next++) {
      try {
        const auto gt_map = fs::path(a.gt_dir) / images[k];
        const auto pred_map = fs::path(a.pred_dir) / images[k];
        if (!fs::exists(pred_map)) throw IoError("missing prediction " + pred_map.string());
        per_image[k] = pq_image_stats(read_panoptic(pred_map, segments_path_for(pred_map)),
                                      read_panoptic(gt_map, segments_path_for(gt_map)));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(a.jobs, images.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PqStats total;
  for (const auto& s : per_image) total += s;
  const auto summary = pq_finalize(total, subset);
  Json per_class = Json::array();
  for (const auto& [cls, q] : summary.per_class) {
    const auto& c = total.per_class.at(cls);
    auto row = quality_json(q);
    row["id"] = cls;
    row["name"] = names.count(cls) ? names.at(cls) : std::string{};
    row["tp"] = c.tp;
    row["fp"] = c.fp;
    row["fn"] = c.fn;
    per_class.push_back(row);
  }
  write_json(a.out, {{"images", images.size()},
                     {"mean", quality_json(summary.mean)},
                     {"counted_classes", summary.counted_classes},
                     {"per_class", per_class}});
}

// ------------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config, out, csv;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  auto* cmd = app.add_subcommand("simulate", "Mean-teacher self-training on a synthetic two-domain world");
  cmd->add_option("--config", a.config, "simulation config (.json); \"arms\" and \"seeds\" keys optional");
  cmd->add_option("--seed", a.seed, "master seed; seed k of each arm runs with seed + k")->required();
  cmd->add_option("--out", a.out, "report (.json)")->required();
  cmd->add_option("--csv", a.csv, "checkpoint curves (.csv)");
  cmd->add_option("--jobs", a.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

void run_simulate(const SimulateArgs& a) {
  Json cfg_json = a.config.empty() ? Json::object() : read_json(a.config);
  if (!cfg_json.is_object()) throw std::invalid_argument("simulation config must be a JSON object");
  Json arms = Json::array({Json::object()});
  std::size_t seeds = 1;
  if (cfg_json.contains("arms")) {
    arms = cfg_json["arms"];
    cfg_json.erase("arms");
    if (!arms.is_array() || arms.empty()) throw std::invalid_argument("\"arms\" must be a non-empty array");
  }
  if (cfg_json.contains("seeds")) {
    if (!cfg_json["seeds"].is_number_unsigned() || cfg_json["seeds"].get<std::size_t>() == 0) {
      throw std::invalid_argument("\"seeds\" must be a positive integer");
    }
    seeds = cfg_json["seeds"].get<std::size_t>();
    cfg_json.erase("seeds");
  }

  SimConfig base;
  cli::apply_sim_json(cfg_json, base);
  std::vector<SimConfig> runs;
  for (const auto& arm : arms) {
    SimConfig c = base;
    cli::apply_sim_json(arm, c);
    for (std::size_t k = 0; k < seeds; ++k) {
      c.seed = *a.seed + k;
      c.validate();
      runs.push_back(c);
    }
  }
  const auto reports = simulate_many(runs, a.jobs);

  Json out_arms = Json::array();
  std::ofstream csv;
  if (!a.csv.empty()) {
    csv.open(a.csv, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + a.csv + " for writing");
    csv << "arm,seed,iteration,student_pq,teacher_pq,mean_lambda,uncertain_fraction,pseudo_segments\n";
  }
  for (std::size_t arm = 0; arm < arms.size(); ++arm) {
    Json arm_runs = Json::array();
    double final_pq = 0.0, teacher_pq = 0.0, source_only = 0.0;
    for (std::size_t k = 0; k < seeds; ++k) {
      const auto& r = reports[arm * seeds + k];
      arm_runs.push_back(cli::sim_report_json(r));
      final_pq += r.final_pq;
      teacher_pq += r.final_teacher_pq;
      source_only += r.source_only_pq;
      if (csv.is_open()) {
        for (const auto& cp : r.checkpoints) {
          csv << r.config.name << ',' << r.config.seed << ',' << cp.iteration << ',' << Json(cp.student_pq).dump() << ','
              << Json(cp.teacher_pq).dump() << ',' << Json(cp.mean_lambda).dump() << ','
              << Json(cp.uncertain_fraction).dump() << ',' << Json(cp.pseudo_segments).dump() << '\n';
        }
      }
    }
    const double n = static_cast<double>(seeds);
    out_arms.push_back({{"name", reports[arm * seeds].config.name},
                        {"mean_final_pq", final_pq / n},
                        {"mean_final_teacher_pq", teacher_pq / n},
                        {"mean_source_only_pq", source_only / n},
                        {"runs", arm_runs}});
  }
  if (csv.is_open() && !csv) throw IoError("failed writing " + a.csv);
  write_json(a.out, {{"seed", *a.seed}, {"seeds", seeds}, {"arms", out_arms}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panconf: confidence-aware pseudo-labelling for panoptic self-training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("panconf ") + PANCONF_VERSION + " (" + PANCONF_BUILD_INFO + ")");

  PseudolabelArgs pseudolabel;
  ConfidenceArgs confidence;
  SampleArgs sample;
  LossArgs loss;
  SegmixArgs mix;
  EvaluateArgs evaluate;
  SimulateArgs simulate_args;
  add_pseudolabel(app, pseudolabel);
  add_confidence(app, confidence);
  add_sample(app, sample);
  add_loss(app, loss);
  add_segmix(app, mix);
  add_evaluate(app, evaluate);
  add_simulate(app, simulate_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 1;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "pseudolabel") run_pseudolabel(pseudolabel);
    else if (name == "confidence") run_confidence(confidence);
    else if (name == "sample-points") run_sample(sample);
    else if (name == "loss") run_loss(loss);
    else if (name == "segmix") run_segmix(mix);
    else if (name == "evaluate") run_evaluate(evaluate);
    else if (name == "simulate") run_simulate(simulate_args);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
