#include "mate/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

namespace mate::corrupt {

using geom::PointCloud;
using geom::Vec3;

std::array<CorruptionKind, kCorruptionKindCount> all_corruption_kinds() {
  return {CorruptionKind::Uniform,    CorruptionKind::Gaussian,
          CorruptionKind::Background, CorruptionKind::Impulse,
          CorruptionKind::Upsampling, CorruptionKind::Rbf,
          CorruptionKind::RbfInv,     CorruptionKind::DensityDec,
          CorruptionKind::DensityInc, CorruptionKind::Shear,
          CorruptionKind::Rotation,   CorruptionKind::Cutout,
          CorruptionKind::DistortionFfd, CorruptionKind::Occlusion,
          CorruptionKind::Lidar};
}

const char* corruption_kind_name(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::Uniform: return "uniform";
    case CorruptionKind::Gaussian: return "gaussian";
    case CorruptionKind::Background: return "background";
    case CorruptionKind::Impulse: return "impulse";
    case CorruptionKind::Upsampling: return "upsampling";
    case CorruptionKind::Rbf: return "rbf";
    case CorruptionKind::RbfInv: return "rbf_inv";
    case CorruptionKind::DensityDec: return "density_dec";
    case CorruptionKind::DensityInc: return "density_inc";
    case CorruptionKind::Shear: return "shear";
    case CorruptionKind::Rotation: return "rotation";
    case CorruptionKind::Cutout: return "cutout";
    case CorruptionKind::DistortionFfd: return "distortion_ffd";
    case CorruptionKind::Occlusion: return "occlusion";
    case CorruptionKind::Lidar: return "lidar";
  }
  return "unknown";
}

CorruptionKind parse_corruption_kind(const std::string& name) {
  for (const auto kind : all_corruption_kinds()) {
    if (name == corruption_kind_name(kind)) return kind;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown corruption kind: " + name);
}

namespace {

constexpr double kUniformRange = 0.05;
constexpr double kGaussianSigma = 0.01;
constexpr double kGaussianClip = 0.03;
constexpr double kImpulseMagnitude = 0.1;
constexpr double kUpsampleJitter = 0.05;
constexpr int kRbfControlPoints = 16;
constexpr double kRbfAmplitude = 0.1;
constexpr double kRbfKernelWidth = 0.7;
constexpr int kClusterCount = 5;
constexpr int kClusterSize = 100;
constexpr double kShearRange = 0.25;
constexpr double kRotationMaxRadians = 15.0 * M_PI / 180.0;
constexpr int kFfdSide = 5;  // 5x5x5 = 125 control points, Bernstein degree 4
constexpr double kFfdControlRange = 0.5;
constexpr double kFfdScale = 0.1;
constexpr double kCameraRadius = 2.0;
constexpr int kOcclusionBins = 32;
constexpr double kOcclusionHalfAngle = 0.6;  // radians, covers a unit shape at r=2
constexpr double kOcclusionShell = 0.1;
constexpr int kLidarBins = 24;
constexpr double kLidarRangeSigma = 0.01;

void require_cluster_size(const PointCloud& cloud) {
  if (cloud.size() < kClusterKindMinPoints) {
    throw Error(ErrorCode::CloudTooSmall,
                "cluster corruption needs at least 600 points, got " +
                    std::to_string(cloud.size()));
  }
}

PointCloud apply_uniform(const PointCloud& in, Rng& rng) {
  PointCloud out = in;
  for (auto& p : out.points) {
    for (int d = 0; d < 3; ++d) p[d] += rng.uniform(-kUniformRange, kUniformRange);
  }
  return out;
}

PointCloud apply_gaussian(const PointCloud& in, Rng& rng) {
  PointCloud out = in;
  for (auto& p : out.points) {
    for (int d = 0; d < 3; ++d) {
      const double z = std::clamp(rng.normal(0.0, kGaussianSigma), -kGaussianClip,
                                  kGaussianClip);
      p[d] += z;
    }
  }
  return out;
}

PointCloud apply_background(const PointCloud& in, Rng& rng) {
  PointCloud out = in;
  const int extra = in.size() / 20;
  for (int i = 0; i < extra; ++i) {
    out.points.push_back(
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
  }
  return out;
}

PointCloud apply_impulse(const PointCloud& in, Rng& rng) {
  PointCloud out = in;
  const int hits = in.size() / 20;
  const auto chosen = rng.sample_without_replacement(in.points.size(), hits);
  for (const auto i : chosen) {
    for (int d = 0; d < 3; ++d) {
      const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      out.points[i][d] += sign * kImpulseMagnitude;
    }
  }
  return out;
}

PointCloud apply_upsampling(const PointCloud& in, Rng& rng) {
  PointCloud out = in;
  const int extra = in.size() / 5;
  for (int i = 0; i < extra; ++i) {
    Vec3 p = in.points[rng.index(in.points.size())];
    for (int d = 0; d < 3; ++d) p[d] += rng.uniform(-kUpsampleJitter, kUpsampleJitter);
    out.points.push_back(p);
  }
  return out;
}

// Smooth displacement field from Gaussian-kernel RBFs. The amplitude is
// normalized against the field's maximum over a fixed probe grid, so the
// field depends on the seed only; rbf and rbf_inv with the same seed are
// then exact negations of each other.
struct RbfField {
  std::vector<Vec3> centers;
  std::vector<Vec3> weights;
  double scale = 0.0;

  static RbfField from_rng(Rng& rng) {
    RbfField f;
    for (int j = 0; j < kRbfControlPoints; ++j) {
      f.centers.push_back(
          Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
    }
    for (int j = 0; j < kRbfControlPoints; ++j) {
      f.weights.push_back(
          Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
    }
    double max_norm = 0.0;
    for (int ix = 0; ix < 7; ++ix) {
      for (int iy = 0; iy < 7; ++iy) {
        for (int iz = 0; iz < 7; ++iz) {
          const Vec3 probe(-1.1 + ix * 2.2 / 6, -1.1 + iy * 2.2 / 6,
                           -1.1 + iz * 2.2 / 6);
          max_norm = std::max(max_norm, f.raw(probe).norm());
        }
      }
    }
    f.scale = max_norm > 0 ? kRbfAmplitude / max_norm : 0.0;
    return f;
  }

  Vec3 raw(const Vec3& x) const {
    Vec3 d = Vec3::Zero();
    const double inv2w2 = 1.0 / (2.0 * kRbfKernelWidth * kRbfKernelWidth);
    for (int j = 0; j < kRbfControlPoints; ++j) {
      d += weights[j] * std::exp(-(x - centers[j]).squaredNorm() * inv2w2);
    }
    return d;
  }

  Vec3 displacement(const Vec3& x) const { return scale * raw(x); }
};

PointCloud apply_rbf(const PointCloud& in, Rng& rng, bool inverted) {
  const auto field = RbfField::from_rng(rng);
  PointCloud out = in;
  const double sign = inverted ? -1.0 : 1.0;
  for (auto& p : out.points) p += sign * field.displacement(p);
  return out;
}

// Indices of the `size` nearest points to cloud[center], ties by lowest index.
std::vector<int> cluster_indices(const PointCloud& cloud, int center, int size) {
  std::vector<int> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  const Vec3 c = cloud.points[center];
  std::partial_sort(order.begin(), order.begin() + size, order.end(),
                    [&](int a, int b) {
                      const double da = (cloud.points[a] - c).squaredNorm();
                      const double db = (cloud.points[b] - c).squaredNorm();
                      if (da != db) return da < db;
                      return a < b;
                    });
  order.resize(size);
  return order;
}

std::vector<std::vector<int>> pick_clusters(const PointCloud& cloud, Rng& rng) {
  const auto centers = rng.sample_without_replacement(cloud.points.size(), kClusterCount);
  std::vector<std::vector<int>> clusters;
  for (const auto c : centers) {
    clusters.push_back(cluster_indices(cloud, static_cast<int>(c), kClusterSize));
  }
  return clusters;
}

PointCloud apply_density_dec(const PointCloud& in, Rng& rng) {
  require_cluster_size(in);
  const auto clusters = pick_clusters(in, rng);
  std::set<int> deleted;
  for (const auto& cluster : clusters) {
    // delete 3/4 of each cluster; overlapping deletions union
    const int removals = kClusterSize * 3 / 4;
    for (const auto j : rng.sample_without_replacement(cluster.size(), removals)) {
      deleted.insert(cluster[j]);
    }
  }
  PointCloud out;
  for (int i = 0; i < in.size(); ++i) {
    if (!deleted.count(i)) out.points.push_back(in.points[i]);
  }
  return out;
}

PointCloud apply_density_inc(const PointCloud& in, Rng& rng) {
  require_cluster_size(in);
  const auto clusters = pick_clusters(in, rng);
  std::set<int> kept;
  for (const auto& cluster : clusters) kept.insert(cluster.begin(), cluster.end());

  PointCloud out;
  for (const int i : kept) out.points.push_back(in.points[i]);
  // Refill to the original count by resampling the whole cloud; cluster
  // regions keep full density plus resampled hits, roughly doubling their
  // density relative to everywhere else.
  const int refill = in.size() - static_cast<int>(kept.size());
  for (int i = 0; i < refill; ++i) {
    out.points.push_back(in.points[rng.index(in.points.size())]);
  }
  return out;
}

PointCloud apply_shear(const PointCloud& in, Rng& rng) {
  const double sx = 1.0 + rng.uniform(-kShearRange, kShearRange);
  const double sy = 1.0 + rng.uniform(-kShearRange, kShearRange);
  const double cxy = rng.uniform(-kShearRange, kShearRange);
  const double cyx = rng.uniform(-kShearRange, kShearRange);
  PointCloud out = in;
  for (auto& p : out.points) {
    const double x = p.x(), y = p.y();
    p.x() = sx * x + cxy * y;
    p.y() = cyx * x + sy * y;
  }
  return out;
}

PointCloud apply_rotation(const PointCloud& in, Rng& rng) {
  const double ax = rng.uniform(-kRotationMaxRadians, kRotationMaxRadians);
  const double ay = rng.uniform(-kRotationMaxRadians, kRotationMaxRadians);
  const double az = rng.uniform(-kRotationMaxRadians, kRotationMaxRadians);
  const Eigen::Matrix3d rot = (Eigen::AngleAxisd(az, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(ay, Vec3::UnitY()) *
                               Eigen::AngleAxisd(ax, Vec3::UnitX()))
                                  .toRotationMatrix();
  PointCloud out = in;
  for (auto& p : out.points) p = rot * p;
  return out;
}

PointCloud apply_cutout(const PointCloud& in, Rng& rng) {
  require_cluster_size(in);
  const auto clusters = pick_clusters(in, rng);
  std::set<int> deleted;
  for (const auto& cluster : clusters) deleted.insert(cluster.begin(), cluster.end());
  PointCloud out;
  for (int i = 0; i < in.size(); ++i) {
    if (!deleted.count(i)) out.points.push_back(in.points[i]);
  }
  return out;
}

double bernstein4(int i, double t) {
  static const double binom[5] = {1, 4, 6, 4, 1};
  return binom[i] * std::pow(t, i) * std::pow(1.0 - t, 4 - i);
}

PointCloud apply_ffd(const PointCloud& in, Rng& rng) {
  // Control displacements drawn in lexicographic (i, j, k) order, axes x,y,z.
  std::vector<Vec3> delta(kFfdSide * kFfdSide * kFfdSide);
  for (auto& d : delta) {
    d = kFfdScale * Vec3(rng.uniform(-kFfdControlRange, kFfdControlRange),
                         rng.uniform(-kFfdControlRange, kFfdControlRange),
                         rng.uniform(-kFfdControlRange, kFfdControlRange));
  }

  Vec3 lo = in.points[0], hi = in.points[0];
  for (const auto& p : in.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 extent = hi - lo;
  for (int d = 0; d < 3; ++d) extent[d] = std::max(extent[d], 1e-9);

  PointCloud out = in;
  double bu[kFfdSide], bv[kFfdSide], bw[kFfdSide];
  for (auto& p : out.points) {
    const Vec3 t = (p - lo).cwiseQuotient(extent);
    for (int i = 0; i < kFfdSide; ++i) {
      bu[i] = bernstein4(i, t.x());
      bv[i] = bernstein4(i, t.y());
      bw[i] = bernstein4(i, t.z());
    }
    Vec3 disp = Vec3::Zero();
    for (int i = 0; i < kFfdSide; ++i) {
      for (int j = 0; j < kFfdSide; ++j) {
        const double bij = bu[i] * bv[j];
        for (int k = 0; k < kFfdSide; ++k) {
          disp += bij * bw[k] * delta[(i * kFfdSide + j) * kFfdSide + k];
        }
      }
    }
    p += disp;
  }
  return out;
}

// Angular-bin depth buffer around a random camera: hidden-point removal
// stand-in. Points more than `shell` behind the nearest point in their
// angular bin are dropped.
std::vector<int> visible_indices_from(const PointCloud& in, const Vec3& camera,
                                      int bins, double shell) {
  const Vec3 forward = (-camera).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-6) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 up = right.cross(forward);

  const int n = in.size();
  std::vector<int> bin_of(n);
  std::vector<double> depth(n);
  std::vector<double> bin_min(bins * bins, std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i) {
    const Vec3 v = in.points[i] - camera;
    depth[i] = v.norm();
    const Vec3 d = v / depth[i];
    const double a = std::atan2(d.dot(right), d.dot(forward));
    const double b = std::atan2(d.dot(up), d.dot(forward));
    const int ia = std::clamp(
        static_cast<int>((a + kOcclusionHalfAngle) / (2 * kOcclusionHalfAngle) * bins), 0,
        bins - 1);
    const int ib = std::clamp(
        static_cast<int>((b + kOcclusionHalfAngle) / (2 * kOcclusionHalfAngle) * bins), 0,
        bins - 1);
    bin_of[i] = ia * bins + ib;
    bin_min[bin_of[i]] = std::min(bin_min[bin_of[i]], depth[i]);
  }
  std::vector<int> visible;
  for (int i = 0; i < n; ++i) {
    if (depth[i] <= bin_min[bin_of[i]] + shell) visible.push_back(i);
  }
  return visible;
}

Vec3 random_unit(Rng& rng) {
  while (true) {
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

PointCloud apply_occlusion(const PointCloud& in, Rng& rng) {
  const Vec3 camera = kCameraRadius * random_unit(rng);
  PointCloud out;
  for (const int i : visible_indices_from(in, camera, kOcclusionBins, kOcclusionShell)) {
    out.points.push_back(in.points[i]);
  }
  return out;
}

PointCloud apply_lidar(const PointCloud& in, Rng& rng) {
  const Vec3 camera = kCameraRadius * random_unit(rng);
  const auto visible = visible_indices_from(in, camera, kOcclusionBins, kOcclusionShell);

  // coarse scan grid: one return per angular cell, nearest wins
  PointCloud occluded;
  for (const int i : visible) occluded.points.push_back(in.points[i]);
  const auto returns = visible_indices_from(occluded, camera, kLidarBins, 1e-12);

  PointCloud out;
  for (const int i : returns) {
    Vec3 p = occluded.points[i];
    const Vec3 ray = (p - camera).normalized();
    p += ray * rng.normal(0.0, kLidarRangeSigma);  // range noise along the beam
    out.points.push_back(p);
  }
  return out;
}

}  // namespace

PointCloud corrupt(const PointCloud& cloud, CorruptionKind kind, std::uint64_t seed) {
  if (cloud.points.empty()) {
    throw Error(ErrorCode::EmptySet, "corrupt: empty cloud");
  }
  // rbf_inv shares rbf's salt: same seed must yield the same field, negated
  const CorruptionKind salt_kind =
      kind == CorruptionKind::RbfInv ? CorruptionKind::Rbf : kind;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(salt_kind)));
  switch (kind) {
    case CorruptionKind::Uniform: return apply_uniform(cloud, rng);
    case CorruptionKind::Gaussian: return apply_gaussian(cloud, rng);
    case CorruptionKind::Background: return apply_background(cloud, rng);
    case CorruptionKind::Impulse: return apply_impulse(cloud, rng);
    case CorruptionKind::Upsampling: return apply_upsampling(cloud, rng);
    case CorruptionKind::Rbf: return apply_rbf(cloud, rng, false);
    case CorruptionKind::RbfInv: return apply_rbf(cloud, rng, true);
    case CorruptionKind::DensityDec: return apply_density_dec(cloud, rng);
    case CorruptionKind::DensityInc: return apply_density_inc(cloud, rng);
    case CorruptionKind::Shear: return apply_shear(cloud, rng);
    case CorruptionKind::Rotation: return apply_rotation(cloud, rng);
    case CorruptionKind::Cutout: return apply_cutout(cloud, rng);
    case CorruptionKind::DistortionFfd: return apply_ffd(cloud, rng);
    case CorruptionKind::Occlusion: return apply_occlusion(cloud, rng);
    case CorruptionKind::Lidar: return apply_lidar(cloud, rng);
  }
  throw Error(ErrorCode::InvalidConfig, "corrupt: unknown kind");
}

PointCloud corrupt_compose(const PointCloud& cloud,
                           std::pair<CorruptionKind, CorruptionKind> kinds,
                           std::uint64_t seed) {
  const auto first = corrupt(cloud, kinds.first, mix_seed(seed, 1));
  return corrupt(first, kinds.second, mix_seed(seed, 2));
}

std::string describe_corruptions_json() {
  nlohmann::json j = nlohmann::json::array();
  auto add = [&](CorruptionKind kind, nlohmann::json params) {
    j.push_back({{"kind", corruption_kind_name(kind)}, {"params", std::move(params)}});
  };
  add(CorruptionKind::Uniform, {{"range", kUniformRange}});
  add(CorruptionKind::Gaussian, {{"sigma", kGaussianSigma}, {"clip", kGaussianClip}});
  add(CorruptionKind::Background, {{"added_fraction", "N/20"}, {"range", 1.0}});
  add(CorruptionKind::Impulse,
      {{"subset_fraction", "N/20"}, {"magnitude", kImpulseMagnitude}});
  add(CorruptionKind::Upsampling,
      {{"added_fraction", "N/5"}, {"jitter", kUpsampleJitter}});
  add(CorruptionKind::Rbf, {{"control_points", kRbfControlPoints},
                            {"amplitude", kRbfAmplitude},
                            {"kernel_width", kRbfKernelWidth}});
  add(CorruptionKind::RbfInv, {{"control_points", kRbfControlPoints},
                               {"amplitude", kRbfAmplitude},
                               {"kernel_width", kRbfKernelWidth},
                               {"inverted", true}});
  add(CorruptionKind::DensityDec, {{"clusters", kClusterCount},
                                   {"cluster_size", kClusterSize},
                                   {"deleted_fraction", 0.75}});
  add(CorruptionKind::DensityInc,
      {{"clusters", kClusterCount}, {"cluster_size", kClusterSize}});
  add(CorruptionKind::Shear, {{"range", kShearRange}});
  add(CorruptionKind::Rotation, {{"max_degrees", 15.0}});
  add(CorruptionKind::Cutout,
      {{"clusters", kClusterCount}, {"cluster_size", kClusterSize}});
  add(CorruptionKind::DistortionFfd, {{"lattice", "5x5x5"},
                                      {"control_range", kFfdControlRange},
                                      {"scale", kFfdScale}});
  add(CorruptionKind::Occlusion, {{"camera_radius", kCameraRadius},
                                  {"bins", kOcclusionBins},
                                  {"shell", kOcclusionShell}});
  add(CorruptionKind::Lidar, {{"camera_radius", kCameraRadius},
                              {"scan_bins", kLidarBins},
                              {"range_sigma", kLidarRangeSigma}});
  return j.dump(2);
}

}  // namespace mate::corrupt
