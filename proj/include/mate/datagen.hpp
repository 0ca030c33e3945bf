#pragma once

#include <cstdint>
#include <string>

#include "mate/dataset_io.hpp"
#include "mate/geometry.hpp"

namespace mate::data {

// Synthetic surface-sampled shape classes, the desk-scale stand-in for a
// real scan corpus. Every sampler returns a normalized cloud.
enum class ShapeClass { Sphere, Cube, Cylinder, Cone, Torus, Plane, Pyramid, Helix };
inline constexpr int kShapeClassCount = 8;

const char* shape_class_name(ShapeClass c);

geom::PointCloud generate_shape(ShapeClass cls, int n_points, std::uint64_t seed);

struct DatasetSpec {
  int per_class_train = 100;
  int per_class_val = 25;
  int per_class_test = 25;
  int points_per_cloud = 256;
  std::uint64_t seed = 0;
};

// Writes one PCB1 file per sample plus manifest.json (written last, via a
// temp file + rename). Returns the manifest path.
std::string build_dataset(const std::string& out_dir, const DatasetSpec& spec);

}  // namespace mate::data
