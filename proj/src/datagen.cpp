#include "mate/datagen.hpp"

#include <cmath>
#include <filesystem>

#include "mate/error.hpp"
#include "mate/rng.hpp"

namespace mate::data {

namespace fs = std::filesystem;
using geom::PointCloud;
using geom::Vec3;

const char* shape_class_name(ShapeClass c) {
  switch (c) {
    case ShapeClass::Sphere: return "sphere";
    case ShapeClass::Cube: return "cube";
    case ShapeClass::Cylinder: return "cylinder";
    case ShapeClass::Cone: return "cone";
    case ShapeClass::Torus: return "torus";
    case ShapeClass::Plane: return "plane";
    case ShapeClass::Pyramid: return "pyramid";
    case ShapeClass::Helix: return "helix";
  }
  return "unknown";
}

namespace {

Vec3 random_unit(Rng& rng) {
  while (true) {
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

// Antipodal pairs give an exactly zero centroid, so normalization leaves
// every point on the unit sphere.
PointCloud sample_sphere(int n, Rng& rng) {
  PointCloud c;
  c.points.reserve(n);
  while (static_cast<int>(c.points.size()) + 1 < n) {
    const Vec3 u = random_unit(rng);
    c.points.push_back(u);
    c.points.push_back(-u);
  }
  if (static_cast<int>(c.points.size()) < n) c.points.push_back(random_unit(rng));
  return c;
}

PointCloud sample_box(int n, Rng& rng) {
  const Vec3 half(1.0, rng.uniform(0.5, 1.0), rng.uniform(0.4, 1.0));
  const double area_x = half.y() * half.z();
  const double area_y = half.x() * half.z();
  const double area_z = half.x() * half.y();
  const double total = area_x + area_y + area_z;

  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform(0, total);
    const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    Vec3 p(rng.uniform(-half.x(), half.x()), rng.uniform(-half.y(), half.y()),
           rng.uniform(-half.z(), half.z()));
    if (pick < area_x) {
      p.x() = sign * half.x();
    } else if (pick < area_x + area_y) {
      p.y() = sign * half.y();
    } else {
      p.z() = sign * half.z();
    }
    c.points.push_back(p);
  }
  return c;
}

PointCloud sample_cylinder(int n, Rng& rng) {
  const double r = rng.uniform(0.3, 0.6);
  const double h = rng.uniform(0.5, 1.1);  // half height
  const double side = 2 * M_PI * r * 2 * h;
  const double cap = M_PI * r * r;

  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform(0, side + 2 * cap);
    const double a = rng.uniform(0, 2 * M_PI);
    if (pick < side) {
      c.points.push_back(Vec3(r * std::cos(a), r * std::sin(a), rng.uniform(-h, h)));
    } else {
      const double rr = r * std::sqrt(rng.uniform01());
      const double z = pick < side + cap ? h : -h;
      c.points.push_back(Vec3(rr * std::cos(a), rr * std::sin(a), z));
    }
  }
  return c;
}

PointCloud sample_cone(int n, Rng& rng) {
  const double r = rng.uniform(0.55, 0.9);
  const double height = rng.uniform(1.0, 1.7);
  const double slant = std::sqrt(height * height + r * r);
  const double lateral = M_PI * r * slant;
  const double base = M_PI * r * r;

  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const double a = rng.uniform(0, 2 * M_PI);
    if (rng.uniform(0, lateral + base) < lateral) {
      // area density along the axis is linear in the local radius
      const double t = 1.0 - std::sqrt(rng.uniform01());  // 0 at base, 1 at apex
      const double rr = r * (1.0 - t);
      c.points.push_back(Vec3(rr * std::cos(a), rr * std::sin(a), t * height));
    } else {
      const double rr = r * std::sqrt(rng.uniform01());
      c.points.push_back(Vec3(rr * std::cos(a), rr * std::sin(a), 0.0));
    }
  }
  return c;
}

PointCloud sample_torus(int n, Rng& rng) {
  const double big = 1.0;
  const double small = rng.uniform(0.25, 0.45);
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0, 2 * M_PI);
    double v;
    while (true) {  // rejection keeps the surface density uniform
      v = rng.uniform(0, 2 * M_PI);
      if (rng.uniform01() <= (big + small * std::cos(v)) / (big + small)) break;
    }
    const double ring = big + small * std::cos(v);
    c.points.push_back(Vec3(ring * std::cos(u), ring * std::sin(u), small * std::sin(v)));
  }
  return c;
}

PointCloud sample_plane(int n, Rng& rng) {
  const double b = rng.uniform(0.4, 1.0);
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    c.points.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(-b, b), 0.0));
  }
  return c;
}

Vec3 sample_triangle(const Vec3& a, const Vec3& b, const Vec3& c, Rng& rng) {
  const double su = std::sqrt(rng.uniform01());
  const double v = rng.uniform01();
  return (1 - su) * a + su * (1 - v) * b + su * v * c;
}

PointCloud sample_pyramid(int n, Rng& rng) {
  // aspect range deliberately shadows the cone's: the square-vs-round base
  // is the separating feature
  const double a = rng.uniform(0.55, 0.9);
  const double h = rng.uniform(1.0, 1.7);
  const Vec3 apex(0, 0, h);
  const Vec3 corners[4] = {Vec3(-a, -a, 0), Vec3(a, -a, 0), Vec3(a, a, 0),
                           Vec3(-a, a, 0)};
  const double base_area = 4 * a * a;
  const double face_area = a * std::sqrt(h * h + a * a);  // per triangular side

  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform(0, base_area + 4 * face_area);
    if (pick < base_area) {
      c.points.push_back(Vec3(rng.uniform(-a, a), rng.uniform(-a, a), 0.0));
    } else {
      const int face = std::min<int>(3, static_cast<int>((pick - base_area) / face_area));
      c.points.push_back(
          sample_triangle(corners[face], corners[(face + 1) % 4], apex, rng));
    }
  }
  return c;
}

PointCloud sample_helix(int n, Rng& rng) {
  const double turns = rng.uniform(1.8, 3.0);
  const double height = 1.6;
  const double radius = 1.0;
  const double tube = 0.06;
  const double t_max = 2 * M_PI * turns;

  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const double t = rng.uniform(0, t_max);
    const Vec3 center(radius * std::cos(t), radius * std::sin(t),
                      height * (t / t_max - 0.5));
    Vec3 tangent(-radius * std::sin(t), radius * std::cos(t), height / t_max);
    tangent.normalize();
    Vec3 u = tangent.cross(Vec3::UnitZ()).normalized();
    const Vec3 w = tangent.cross(u);
    const double phi = rng.uniform(0, 2 * M_PI);
    c.points.push_back(center + tube * (std::cos(phi) * u + std::sin(phi) * w));
  }
  return c;
}

// ModelNet-style orientation: free azimuth, near-upright pose. The tilt
// stays well inside the rotation corruption's range so tilting is a real
// distribution shift, not a memorized augmentation.
PointCloud orient(PointCloud cloud, Rng& rng) {
  const double yaw = rng.uniform(0, 2 * M_PI);
  const double tx = rng.uniform(-0.05, 0.05);
  const double ty = rng.uniform(-0.05, 0.05);
  const Eigen::Matrix3d rot = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(ty, Vec3::UnitY()) *
                               Eigen::AngleAxisd(tx, Vec3::UnitX()))
                                  .toRotationMatrix();
  for (auto& p : cloud.points) p = rot * p;
  return cloud;
}

}  // namespace

PointCloud generate_shape(ShapeClass cls, int n_points, std::uint64_t seed) {
  if (n_points < 64) {
    throw Error(ErrorCode::InvalidConfig, "generate_shape: need at least 64 points");
  }
  Rng rng(mix_seed(seed, 0x73686170 + static_cast<std::uint64_t>(cls)));
  PointCloud raw;
  switch (cls) {
    case ShapeClass::Sphere: return geom::normalize_cloud(sample_sphere(n_points, rng));
    case ShapeClass::Cube: raw = sample_box(n_points, rng); break;
    case ShapeClass::Cylinder: raw = sample_cylinder(n_points, rng); break;
    case ShapeClass::Cone: raw = sample_cone(n_points, rng); break;
    case ShapeClass::Torus: raw = sample_torus(n_points, rng); break;
    case ShapeClass::Plane: raw = sample_plane(n_points, rng); break;
    case ShapeClass::Pyramid: raw = sample_pyramid(n_points, rng); break;
    case ShapeClass::Helix: raw = sample_helix(n_points, rng); break;
  }
  return geom::normalize_cloud(orient(std::move(raw), rng));
}

std::string build_dataset(const std::string& out_dir, const DatasetSpec& spec) {
  if (spec.per_class_train < 1 || spec.per_class_val < 1 || spec.per_class_test < 1) {
    throw Error(ErrorCode::InvalidConfig, "build_dataset: counts must be positive");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  struct Split {
    const char* name;
    int count;
    std::uint64_t tag;
  };
  const Split splits[3] = {{"train", spec.per_class_train, 1},
                           {"val", spec.per_class_val, 2},
                           {"test", spec.per_class_test, 3}};

  std::vector<ManifestEntry> entries;
  for (const auto& split : splits) {
    fs::create_directories(fs::path(out_dir) / split.name, ec);
    if (ec) throw Error(ErrorCode::IOFailure, "cannot create split directory");
    for (int cls = 0; cls < kShapeClassCount; ++cls) {
      for (int i = 0; i < split.count; ++i) {
        // split/class/index-derived seed keeps the splits disjoint
        const std::uint64_t sample_seed =
            mix_seed(mix_seed(mix_seed(spec.seed, split.tag), cls), i);
        const auto cloud = generate_shape(static_cast<ShapeClass>(cls),
                                          spec.points_per_cloud, sample_seed);
        char name[64];
        std::snprintf(name, sizeof(name), "%s/%s_%04d.pcb", split.name,
                      shape_class_name(static_cast<ShapeClass>(cls)), i);
        write_pcb((fs::path(out_dir) / name).string(), cloud);
        entries.push_back({name, cls, split.name, ""});
      }
    }
  }
  const std::string manifest = (fs::path(out_dir) / "manifest.json").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace mate::data
