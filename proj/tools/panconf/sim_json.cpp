#include "sim_json.hpp"

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace panconf::cli {
namespace {

template <typename T>
void read(const Json& j, T& out, const std::string& key) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!j.is_number_unsigned()) throw std::invalid_argument("config key '" + key + "' must be a non-negative integer");
  }
  try {
    out = j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("config key '" + key + "' has the wrong type");
  }
}

using Setter = std::function<void(const Json&, const std::string&)>;

void apply_table(const Json& j, const std::map<std::string, Setter>& table, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown config key '" + where + key + "'");
    it->second(value, where + key);
  }
}

#define FIELD(obj, name) {#name, [&](const Json& v, const std::string& k) { read(v, obj.name, k); }}

void apply_world(const Json& j, WorldConfig& w) {
  apply_table(j,
              {FIELD(w, height), FIELD(w, width), FIELD(w, num_classes), FIELD(w, num_segments), FIELD(w, embed_dim),
               FIELD(w, domain_shift), FIELD(w, noise), FIELD(w, appearance), FIELD(w, frequency), FIELD(w, position),
               FIELD(w, rotation), FIELD(w, bias), FIELD(w, contrast), FIELD(w, clutter), FIELD(w, clutter_strength),
               FIELD(w, min_segment_area)},
              "world.");
}

void apply_thresholds(const Json& j, Thresholds& t) {
  apply_table(j,
              {FIELD(t, tau1), FIELD(t, tau2), FIELD(t, tau_ils),
               {"tau1_per_class",
                [&](const Json& v, const std::string& k) {
                  if (!v.is_object()) throw std::invalid_argument(k + " must map class ids to thresholds");
                  t.tau1_per_class.clear();
                  for (const auto& [cls, tau] : v.items()) {
                    double value = 0.0;
                    read(tau, value, k);
                    t.tau1_per_class[static_cast<std::uint32_t>(std::stoul(cls))] = value;
                  }
                }}},
              "thresholds.");
}

FilterMode parse_mode(const Json& v, const std::string& k) {
  std::string s;
  read(v, s, k);
  if (s == "all_masks") return FilterMode::all_masks;
  if (s == "per_mask") return FilterMode::per_mask;
  throw std::invalid_argument(k + " must be \"all_masks\" or \"per_mask\"");
}

}  // namespace

void apply_sim_json(const Json& j, SimConfig& c) {
  apply_table(
      j,
      {FIELD(c, name), FIELD(c, pretrain_iters), FIELD(c, iterations), FIELD(c, freeze_iters), FIELD(c, alpha),
       FIELD(c, learning_rate), FIELD(c, init_scale), FIELD(c, num_queries), FIELD(c, enable_mls),
       FIELD(c, enable_ils), FIELD(c, enable_cbpf), FIELD(c, segmix), FIELD(c, eval_images),
       FIELD(c, checkpoint_every), FIELD(c, seed),
       {"cbpf_mode", [&](const Json& v, const std::string& k) { c.cbpf_mode = parse_mode(v, k); }},
       {"thresholds", [&](const Json& v, const std::string&) { apply_thresholds(v, c.thresholds); }},
       {"weights",
        [&](const Json& v, const std::string&) {
          auto& w = c.weights;
          apply_table(v, {FIELD(w, cls), FIELD(w, bce), FIELD(w, dice), FIELD(w, no_object)}, "weights.");
        }},
       {"fusion",
        [&](const Json& v, const std::string&) {
          auto& f = c.fusion;
          apply_table(v, {FIELD(f, class_threshold), FIELD(f, overlap_threshold), FIELD(f, min_area)}, "fusion.");
        }},
       {"sampling",
        [&](const Json& v, const std::string&) {
          auto& s = c.sampling;
          apply_table(v, {FIELD(s, num_points), FIELD(s, beta)}, "sampling.");
        }},
       {"world", [&](const Json& v, const std::string&) { apply_world(v, c.world); }}},
      "");
}

#undef FIELD

Json sim_config_json(const SimConfig& c) {
  Json per_class = Json::object();
  for (const auto& [cls, tau] : c.thresholds.tau1_per_class) per_class[std::to_string(cls)] = tau;
  const auto& w = c.world;
  return Json{
      {"name", c.name},
      {"pretrain_iters", c.pretrain_iters},
      {"iterations", c.iterations},
      {"freeze_iters", c.freeze_iters},
      {"alpha", c.alpha},
      {"learning_rate", c.learning_rate},
      {"init_scale", c.init_scale},
      {"num_queries", c.num_queries},
      {"thresholds",
       {{"tau1", c.thresholds.tau1}, {"tau2", c.thresholds.tau2}, {"tau_ils", c.thresholds.tau_ils},
        {"tau1_per_class", per_class}}},
      {"weights",
       {{"cls", c.weights.cls}, {"bce", c.weights.bce}, {"dice", c.weights.dice}, {"no_object", c.weights.no_object}}},
      {"fusion",
       {{"class_threshold", c.fusion.class_threshold},
        {"overlap_threshold", c.fusion.overlap_threshold},
        {"min_area", c.fusion.min_area}}},
      {"sampling", {{"num_points", c.sampling.num_points}, {"beta", c.sampling.beta}}},
      {"enable_mls", c.enable_mls},
      {"enable_ils", c.enable_ils},
      {"enable_cbpf", c.enable_cbpf},
      {"cbpf_mode", c.cbpf_mode == FilterMode::all_masks ? "all_masks" : "per_mask"},
      {"segmix", c.segmix},
      {"world",
       {{"height", w.height}, {"width", w.width}, {"num_classes", w.num_classes}, {"num_segments", w.num_segments},
        {"embed_dim", w.embed_dim}, {"domain_shift", w.domain_shift}, {"noise", w.noise},
        {"appearance", w.appearance}, {"frequency", w.frequency}, {"position", w.position},
        {"rotation", w.rotation}, {"bias", w.bias}, {"contrast", w.contrast}, {"clutter", w.clutter},
        {"clutter_strength", w.clutter_strength}, {"min_segment_area", w.min_segment_area}}},
      {"eval_images", c.eval_images},
      {"checkpoint_every", c.checkpoint_every},
      {"seed", c.seed},
  };
}

Json sim_report_json(const SimReport& r) {
  Json checkpoints = Json::array();
  for (const auto& cp : r.checkpoints) {
    checkpoints.push_back({{"iteration", cp.iteration},
                           {"student_pq", cp.student_pq},
                           {"student_sq", cp.student_sq},
                           {"student_rq", cp.student_rq},
                           {"teacher_pq", cp.teacher_pq},
                           {"mean_lambda", cp.mean_lambda},
                           {"uncertain_fraction", cp.uncertain_fraction},
                           {"pseudo_segments", cp.pseudo_segments},
                           {"teacher_probe_hash", cp.teacher_probe_hash}});
  }
  return Json{{"config", sim_config_json(r.config)},
              {"source_pq", r.source_pq},
              {"source_only_pq", r.source_only_pq},
              {"final_pq", r.final_pq},
              {"final_teacher_pq", r.final_teacher_pq},
              {"checkpoints", checkpoints}};
}

}  // namespace panconf::cli
