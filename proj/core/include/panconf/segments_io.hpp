#pragma once

#include <filesystem>
#include <iosfwd>

#include "panconf/panoptic.hpp"

namespace panconf {

// `.segments.jsonl`: one {"segment_id","class_id","mask_index","area"} object per line.
void write_segments(const std::filesystem::path& path, const SegmentTable& table);
SegmentTable read_segments(const std::filesystem::path& path);

void write_segments(std::ostream& out, const SegmentTable& table);
SegmentTable read_segments(std::istream& in);

/// Reads `<stem>.mct` (u32 H x W) together with `<stem>.segments.jsonl` and validates the pair.
PanopticSegmentation read_panoptic(const std::filesystem::path& map_path,
                                   const std::filesystem::path& segments_path);
void write_panoptic(const std::filesystem::path& map_path, const std::filesystem::path& segments_path,
                    const PanopticSegmentation& pan);

/// `foo.mct` -> `foo.segments.jsonl`
std::filesystem::path segments_path_for(const std::filesystem::path& map_path);

}  // namespace panconf
