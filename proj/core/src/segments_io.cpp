#include "panconf/segments_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>

#include "panconf/errors.hpp"

namespace panconf {

void write_segments(std::ostream& out, const SegmentTable& table) {
  for (const auto& e : table) {
    nlohmann::ordered_json j;
    j["segment_id"] = e.segment_id;
    j["class_id"] = e.class_id;
    j["mask_index"] = e.mask_index;
    j["area"] = e.area;
    out << j.dump() << '\n';
  }
}

SegmentTable read_segments(std::istream& in) {
  SegmentTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SegmentEntry e;
      e.segment_id = j.at("segment_id").get<std::uint32_t>();
      e.class_id = j.at("class_id").get<std::uint32_t>();
      e.mask_index = j.at("mask_index").get<std::uint32_t>();
      e.area = j.at("area").get<std::uint64_t>();
      table.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("segments line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return table;
}

void write_segments(const std::filesystem::path& path, const SegmentTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_segments(out, table);
  if (!out) throw IoError("failed writing " + path.string());
}

SegmentTable read_segments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_segments(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

PanopticSegmentation read_panoptic(const std::filesystem::path& map_path,
                                   const std::filesystem::path& segments_path) {
  const auto ids = read_tensor(map_path);
  if (ids.dtype() != DType::u32 || ids.rank() != 2) {
    throw FormatError(map_path.string() + ": panoptic map must be a rank-2 u32 tensor");
  }
  PanopticSegmentation pan;
  pan.height = ids.shape()[0];
  pan.width = ids.shape()[1];
  pan.id_map.assign(ids.u32().begin(), ids.u32().end());
  pan.table = read_segments(segments_path);
  try {
    pan.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(map_path.string() + ": " + e.what());
  }
  return pan;
}

void write_panoptic(const std::filesystem::path& map_path, const std::filesystem::path& segments_path,
                    const PanopticSegmentation& pan) {
  write_tensor(map_path, id_map_tensor(pan));
  write_segments(segments_path, pan.table);
}

std::filesystem::path segments_path_for(const std::filesystem::path& map_path) {
  auto out = map_path;
  out.replace_extension(".segments.jsonl");
  return out;
}

}  // namespace panconf
