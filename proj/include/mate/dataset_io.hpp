#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mate/geometry.hpp"

namespace mate::data {

// One dataset sample on disk. `path` is relative to the manifest's
// directory; `corruption` is empty for clean data, a kind name (or
// "a+b" for compositions) otherwise.
struct ManifestEntry {
  std::string path;
  int label = 0;
  std::string split;
  std::string corruption;
};

// Cloud file format "PCB1": magic bytes, u32 little-endian point count,
// then N x 3 float32 little-endian coordinates.
void write_pcb(const std::string& path, const geom::PointCloud& cloud);
geom::PointCloud read_pcb(const std::string& path);

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

struct LoadedDataset {
  std::vector<geom::PointCloud> clouds;
  std::vector<int> labels;
  std::vector<std::string> corruptions;
  int num_classes = 0;
};

// Loads every entry of the manifest belonging to `split` (all splits when
// empty), resolving paths relative to the manifest location.
LoadedDataset load_split(const std::string& manifest_path, const std::string& split);

std::uint64_t file_hash(const std::string& path);

}  // namespace mate::data
