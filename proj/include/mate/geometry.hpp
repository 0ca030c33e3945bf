#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mate/error.hpp"
#include "mate/rng.hpp"

namespace mate::geom {

using Vec3 = Eigen::Vector3d;

// An ordered sequence of 3D points. Order is significant: sampling and
// grouping break ties by lowest index.
struct PointCloud {
  std::vector<Vec3> points;

  int size() const { return static_cast<int>(points.size()); }
  bool all_finite() const;
};

// A point cloud split into G local patches. Patches store coordinates
// relative to their center; patch_indices keeps the identity of each
// neighbor in the source cloud. mask[g] == true means token g is hidden
// from the encoder and must be reconstructed.
struct TokenizedCloud {
  std::vector<Vec3> centers;                    // G
  std::vector<std::vector<Vec3>> patches;       // G x k, local coordinates
  std::vector<std::vector<int>> patch_indices;  // G x k, into source cloud
  std::vector<bool> mask;                       // G
  double mask_ratio = 0.0;

  int group_count() const { return static_cast<int>(centers.size()); }
  int group_size() const { return centers.empty() ? 0 : static_cast<int>(patches[0].size()); }
  int masked_count() const;
  std::vector<int> visible_token_indices() const;
  std::vector<int> masked_token_indices() const;
};

// Shifts the centroid to the origin and scales so the farthest point has
// norm 1. Point order is preserved.
PointCloud normalize_cloud(const PointCloud& cloud);

// Greedy farthest-point sampling. The first index is start_index; each
// following pick maximizes the minimum distance to everything selected so
// far, ties broken by lowest index.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int group_count,
                                       int start_index);

// Groups the k nearest neighbors (ties by lowest index) of each center into
// a patch of local coordinates. The center point is its own neighbor at
// distance zero. The result has an all-false mask.
TokenizedCloud knn_group(const PointCloud& cloud, const std::vector<int>& center_indices,
                         int k);

// Bitmap with exactly ceil(m * G) true bits (clamped to G - 1 so at least
// one token stays visible), positions drawn without replacement.
std::vector<bool> random_token_mask(int group_count, double mask_ratio, Rng& rng);

// How many tokens random_token_mask will mask for given (G, m).
int masked_token_count(int group_count, double mask_ratio);

// Symmetric squared-L2 Chamfer distance:
//   mean_a min_b |a-b|^2  +  mean_b min_a |a-b|^2.
// Nearest-neighbor ties resolve to the lowest index, which also fixes the
// subgradient used by chamfer_l2_grad.
double chamfer_l2(std::span<const Vec3> a, std::span<const Vec3> b);

// Same value as chamfer_l2; additionally accumulates d(loss)/d(a) and
// d(loss)/d(b) into the provided buffers (sized like the inputs) when
// non-null.
double chamfer_l2_grad(std::span<const Vec3> a, std::span<const Vec3> b,
                       std::vector<Vec3>* grad_a, std::vector<Vec3>* grad_b);

// normalize -> farthest_point_sample -> knn_group convenience; the caller
// is expected to pass an already-normalized cloud.
TokenizedCloud tokenize(const PointCloud& cloud, int group_count, int group_size,
                        int start_index);

}  // namespace mate::geom
