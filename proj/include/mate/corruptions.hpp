#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mate/geometry.hpp"

namespace mate::corrupt {

// The 15 distribution shifts, applied to normalized clouds. Each kind is a
// pure function of (cloud, seed).
enum class CorruptionKind {
  Uniform,
  Gaussian,
  Background,
  Impulse,
  Upsampling,
  Rbf,
  RbfInv,
  DensityDec,
  DensityInc,
  Shear,
  Rotation,
  Cutout,
  DistortionFfd,
  Occlusion,
  Lidar,
};

inline constexpr int kCorruptionKindCount = 15;

std::array<CorruptionKind, kCorruptionKindCount> all_corruption_kinds();
const char* corruption_kind_name(CorruptionKind kind);
CorruptionKind parse_corruption_kind(const std::string& name);

// Cluster-based kinds (density_dec, density_inc, cutout) select five
// 100-point neighborhoods and need at least this many points.
inline constexpr int kClusterKindMinPoints = 600;

geom::PointCloud corrupt(const geom::PointCloud& cloud, CorruptionKind kind,
                         std::uint64_t seed);

// Applies first then second, with sub-seeds mix_seed(seed, 1) and
// mix_seed(seed, 2).
geom::PointCloud corrupt_compose(const geom::PointCloud& cloud,
                                 std::pair<CorruptionKind, CorruptionKind> kinds,
                                 std::uint64_t seed);

// JSON table of every kind's fixed parameters (for `mate corrupt --describe`).
std::string describe_corruptions_json();

}  // namespace mate::corrupt
