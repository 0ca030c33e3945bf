#include "mate/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mate::geom {

bool PointCloud::all_finite() const {
  for (const auto& p : points) {
    if (!p.allFinite()) return false;
  }
  return true;
}

int TokenizedCloud::masked_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), true));
}

std::vector<int> TokenizedCloud::visible_token_indices() const {
  std::vector<int> out;
  for (int g = 0; g < group_count(); ++g) {
    if (!mask[g]) out.push_back(g);
  }
  return out;
}

std::vector<int> TokenizedCloud::masked_token_indices() const {
  std::vector<int> out;
  for (int g = 0; g < group_count(); ++g) {
    if (mask[g]) out.push_back(g);
  }
  return out;
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.points.empty()) {
    throw Error(ErrorCode::EmptySet, "normalize_cloud: empty cloud");
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());

  double max_norm = 0.0;
  for (const auto& p : cloud.points) {
    max_norm = std::max(max_norm, (p - centroid).norm());
  }
  if (max_norm <= 0.0) {
    throw Error(ErrorCode::AllPointsIdentical,
                "normalize_cloud: all points identical, cannot scale");
  }

  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    out.points.push_back((p - centroid) / max_norm);
  }
  return out;
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int group_count,
                                       int start_index) {
  const int n = cloud.size();
  if (group_count > n) {
    throw Error(ErrorCode::GTooLarge, "farthest_point_sample: G exceeds point count");
  }
  if (group_count < 1 || start_index < 0 || start_index >= n) {
    throw Error(ErrorCode::InvalidConfig, "farthest_point_sample: bad G or start index");
  }

  std::vector<int> selected;
  selected.reserve(group_count);
  std::vector<double> min_dist2(n, std::numeric_limits<double>::infinity());

  int current = start_index;
  selected.push_back(current);
  for (int round = 1; round < group_count; ++round) {
    const Vec3& last = cloud.points[current];
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d = (cloud.points[i] - last).squaredNorm();
      if (d < min_dist2[i]) min_dist2[i] = d;
      if (min_dist2[i] > best_dist) {  // strict: ties keep the lowest index
        best_dist = min_dist2[i];
        best = i;
      }
    }
    current = best;
    selected.push_back(current);
  }
  return selected;
}

TokenizedCloud knn_group(const PointCloud& cloud, const std::vector<int>& center_indices,
                         int k) {
  const int n = cloud.size();
  if (k > n) {
    throw Error(ErrorCode::KTooLarge, "knn_group: k exceeds point count");
  }
  if (k < 1) {
    throw Error(ErrorCode::InvalidConfig, "knn_group: k must be positive");
  }

  TokenizedCloud tok;
  tok.centers.reserve(center_indices.size());
  tok.patches.reserve(center_indices.size());
  tok.patch_indices.reserve(center_indices.size());

  std::vector<int> order(n);
  std::vector<double> dist2(n);
  for (const int ci : center_indices) {
    if (ci < 0 || ci >= n) {
      throw Error(ErrorCode::InvalidConfig, "knn_group: center index out of range");
    }
    const Vec3& c = cloud.points[ci];
    for (int i = 0; i < n; ++i) dist2[i] = (cloud.points[i] - c).squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    // ties by lowest index: the index itself is the secondary key
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        if (dist2[a] != dist2[b]) return dist2[a] < dist2[b];
                        return a < b;
                      });

    std::vector<Vec3> patch(k);
    std::vector<int> idx(k);
    for (int j = 0; j < k; ++j) {
      idx[j] = order[j];
      patch[j] = cloud.points[order[j]] - c;
    }
    tok.centers.push_back(c);
    tok.patches.push_back(std::move(patch));
    tok.patch_indices.push_back(std::move(idx));
  }
  tok.mask.assign(center_indices.size(), false);
  tok.mask_ratio = 0.0;
  return tok;
}

int masked_token_count(int group_count, double mask_ratio) {
  if (mask_ratio < 0.0 || mask_ratio >= 1.0) {
    throw Error(ErrorCode::MaskRatioOutOfRange, "mask ratio must lie in [0, 1)");
  }
  // The epsilon keeps decimal ratios like 0.8 * 10 from ceiling to 9 when
  // the product lands one ulp above an integer.
  int m = static_cast<int>(std::ceil(mask_ratio * group_count - 1e-9));
  m = std::max(m, 0);
  m = std::min(m, group_count - 1);  // at least one token stays visible
  return m;
}

std::vector<bool> random_token_mask(int group_count, double mask_ratio, Rng& rng) {
  if (group_count < 1) {
    throw Error(ErrorCode::InvalidConfig, "random_token_mask: G must be positive");
  }
  const int m = masked_token_count(group_count, mask_ratio);
  std::vector<bool> mask(group_count, false);
  for (const std::size_t i :
       rng.sample_without_replacement(static_cast<std::size_t>(group_count),
                                      static_cast<std::size_t>(m))) {
    mask[i] = true;
  }
  return mask;
}

namespace {

// One direction of the Chamfer sum: mean over `from` of the squared
// distance to its nearest neighbor in `to`. When gradients are requested,
// each term d = |f - t*|^2 contributes 2(f - t*)/|from| to grad_from[f]
// and the negative to grad_to[t*].
double directed_mean_min_sq(std::span<const Vec3> from, std::span<const Vec3> to,
                            std::vector<Vec3>* grad_from, std::vector<Vec3>* grad_to) {
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d = (from[i] - to[j]).squaredNorm();
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    total += best;
    if (grad_from || grad_to) {
      const Vec3 g = 2.0 * inv * (from[i] - to[best_j]);
      if (grad_from) (*grad_from)[i] += g;
      if (grad_to) (*grad_to)[best_j] -= g;
    }
  }
  return total * inv;
}

}  // namespace

double chamfer_l2_grad(std::span<const Vec3> a, std::span<const Vec3> b,
                       std::vector<Vec3>* grad_a, std::vector<Vec3>* grad_b) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::EmptySet, "chamfer_l2: empty point set");
  }
  if (grad_a) grad_a->assign(a.size(), Vec3::Zero());
  if (grad_b) grad_b->assign(b.size(), Vec3::Zero());
  const double ab = directed_mean_min_sq(a, b, grad_a, grad_b);
  const double ba = directed_mean_min_sq(b, a, grad_b, grad_a);
  return ab + ba;
}

double chamfer_l2(std::span<const Vec3> a, std::span<const Vec3> b) {
  return chamfer_l2_grad(a, b, nullptr, nullptr);
}

TokenizedCloud tokenize(const PointCloud& cloud, int group_count, int group_size,
                        int start_index) {
  const auto centers = farthest_point_sample(cloud, group_count, start_index);
  return knn_group(cloud, centers, group_size);
}

}  // namespace mate::geom
