#include "mate/dataset_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mate/error.hpp"
#include "mate/rng.hpp"

namespace mate::data {

namespace fs = std::filesystem;

void write_pcb(const std::string& path, const geom::PointCloud& cloud) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open for write: " + path);
  f.write("PCB1", 4);
  const std::uint32_t n = static_cast<std::uint32_t>(cloud.points.size());
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const auto& p : cloud.points) {
    const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    f.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  if (!f) throw Error(ErrorCode::IOFailure, "write failed: " + path);
}

geom::PointCloud read_pcb(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "PCB1", 4) != 0) {
    throw Error(ErrorCode::IOFailure, "not a PCB1 file: " + path);
  }
  std::uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  geom::PointCloud cloud;
  cloud.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    float xyz[3];
    f.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    if (!f) throw Error(ErrorCode::IOFailure, "truncated PCB1 file: " + path);
    cloud.points.push_back(geom::Vec3(xyz[0], xyz[1], xyz[2]));
  }
  return cloud;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item = {{"path", e.path}, {"label", e.label}, {"split", e.split}};
    if (!e.corruption.empty()) item["corruption"] = e.corruption;
    j.push_back(std::move(item));
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot open for write: " + tmp);
    f << j.dump(1) << "\n";
    if (!f) throw Error(ErrorCode::IOFailure, "write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IOFailure, "rename failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IOFailure, "manifest is not valid JSON: " + path);
  }
  std::vector<ManifestEntry> out;
  for (const auto& item : j) {
    ManifestEntry e;
    e.path = item.at("path").get<std::string>();
    e.label = item.at("label").get<int>();
    e.split = item.at("split").get<std::string>();
    if (item.contains("corruption")) e.corruption = item["corruption"].get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

LoadedDataset load_split(const std::string& manifest_path, const std::string& split) {
  const auto entries = read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  LoadedDataset d;
  int max_label = -1;
  for (const auto& e : entries) {
    if (!split.empty() && e.split != split) continue;
    d.clouds.push_back(read_pcb((base / e.path).string()));
    d.labels.push_back(e.label);
    d.corruptions.push_back(e.corruption);
    max_label = std::max(max_label, e.label);
  }
  d.num_classes = max_label + 1;
  return d;
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open: " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace mate::data
